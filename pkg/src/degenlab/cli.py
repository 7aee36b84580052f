"""Command line entry: ``degenlab <command> --config run.yaml --out results/``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
numerical failures.  Failed hypotheses and conditions are reported as data
and do not change the exit status.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, ExperimentConfig, config_hash, dump_config, parse_config
from .corpus import smooth_corpus
from .diagonal import PRESETS as DIAG_PRESETS
from .diagonal import SingularTransformError, bmat_condition, moser_experiment
from .fieldio import read_snapshot, write_csv, write_snapshot
from .gnbmo import IntegralError, _safe_ratio, verify_strong_gnbmo, verify_weak_gnbmo
from .grid import Field, Grid, GridError
from .harmonic import a_gamma_constant, bmo_norm_local, bmo_seminorm, maximal
from .models import (
    constant_matrix,
    ellipticity_probe,
    heat,
    porous_media,
    shigesada_kawasaki_teramoto,
    spectral_gap_check,
)
from .regularity import (
    bmo_smallness_check,
    growth_condition_check,
    holder_estimate,
    kpower_condition_check,
    lp_gradient_norm,
    thin_domain_check,
)
from .solver import BlowUpError, SolverConfig, SolverError, Trajectory, simulate
from .uniqueness import NONLINEARITIES, two_solution_experiment

if TYPE_CHECKING:
    from .config import DomainConfig, InitialConfig, ModelConfig
    from .models import DiffusionModel

log = logging.getLogger("degenlab")


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- builders


def build_grid(domain: DomainConfig) -> Grid:
    return Grid(tuple(domain.extents), tuple(domain.cells), domain.boundary)


def build_model(cfg: ModelConfig) -> DiffusionModel:
    if cfg.preset == "porous_media":
        model = porous_media(cfg.k, cfg.m)
    elif cfg.preset == "heat":
        model = heat(cfg.m, cfg.diffusivity)
    elif cfg.preset == "constant":
        if cfg.matrix is None:
            raise ConfigError("model.matrix: required for the constant preset")
        model = constant_matrix(cfg.matrix)
    else:
        model = shigesada_kawasaki_teramoto(tuple(cfg.d), tuple(cfg.self_diffusion), tuple(cfg.cross_diffusion))
    if cfg.reaction is not None:
        r = cfg.reaction.rate
        F = {
            "linear": lambda W: r * W,
            "logistic": lambda W: r * W * (1 - W),
            "cubic": lambda W: r * W * (1 - (W**2).sum(axis=0)),
        }[cfg.reaction.kind]
        model = replace(model, F=F)
    return model


def build_initial(grid: Grid, init: InitialConfig, m: int, rng: np.random.Generator) -> Field:
    x = grid.coords()
    center = init.center or [e / 2 for e in grid.extents]
    if len(center) != grid.dim:
        raise ConfigError("initial.center: needs one coordinate per axis")
    comps = []
    for c in range(m):
        if init.kind == "gaussian":
            r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, center))
            v = init.floor + init.amplitude * np.exp(-r2 / (2 * init.width**2))
        elif init.kind == "cosine":
            v = init.floor + init.amplitude * np.prod(
                [np.cos(init.mode * np.pi * xi / e) for xi, e in zip(x, grid.extents)], axis=0
            )
        elif init.kind == "constant":
            vals = init.value
            v = np.full(grid.cells, vals[c] if len(vals) > c else vals[-1])
        else:
            v = np.zeros(grid.cells)
            for _ in range(4):
                modes = rng.integers(0, 4, size=grid.dim)
                v += rng.normal() * np.prod(
                    [np.cos(k * np.pi * xi / e) for k, xi, e in zip(modes, x, grid.extents)], axis=0
                )
            v = init.floor + init.amplitude * v / max(float(np.abs(v).max()), 1e-300)
        comps.append(v)
    return Field(grid, np.stack(comps))


def solver_config(cfg: ExperimentConfig, gradient_p=()) -> SolverConfig:
    t = cfg.time
    boundary = cfg.domain.boundary if cfg.domain is not None else "neumann"
    return SolverConfig(
        dt=t.dt, T=t.T, epsilon=t.epsilon, scheme=t.scheme, boundary=boundary,
        tol=t.tol, stride=t.stride, gradient_p=tuple(gradient_p),
    )


# ---------------------------------------------------------------- output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


class Output:
    """Owns the output directory; stamps every file with the config hash."""

    def __init__(self, root: Path, cfg: ExperimentConfig):
        self.root = root
        self.hash = config_hash(cfg)
        root.mkdir(parents=True, exist_ok=True)
        (root / "config.yaml").write_text(f"# config_hash={self.hash}\n" + dump_config(cfg))

    def json(self, name: str, payload: dict) -> None:
        body = {"config_hash": self.hash, **_clean(payload)}
        (self.root / name).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, rows: list[dict]) -> None:
        with open(self.root / name, "w", newline="") as fh:
            fh.write(f"# config_hash={self.hash}\n")
            if not rows:
                return
            keys = list(rows[0])
            for r in rows[1:]:
                keys += [k for k in r if k not in keys]
            writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: _fmt(r.get(k, "")) for k in keys})

    def snapshot(self, name: str, f: Field, **meta) -> None:
        (self.root / "snapshots").mkdir(exist_ok=True)
        write_snapshot(self.root / "snapshots" / name, f, config_hash=self.hash, **meta)

    def field_csv(self, name: str, f: Field) -> None:
        write_csv(self.root / name, f, header_comment=f"config_hash={self.hash}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_trajectory(out: Output, cfg: ExperimentConfig, traj: Trajectory) -> None:
    if cfg.outputs.csv:
        out.csv("trajectory.csv", traj.diagnostics)
    if cfg.outputs.snapshots:
        for i, t in enumerate(traj.times):
            out.snapshot(f"state_{i:05d}.txt", traj.field(i), time=repr(t))


# ---------------------------------------------------------------- commands


def _run_simulation(cfg: ExperimentConfig, out: Output, gradient_p=()) -> tuple[Trajectory | None, dict]:
    grid = build_grid(cfg.domain)
    model = build_model(cfg.model)
    rng = np.random.default_rng(cfg.seed)
    W0 = build_initial(grid, cfg.initial, model.m, rng)
    sc = solver_config(cfg, gradient_p)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            traj = simulate(model, sc, W0)
    except BlowUpError as exc:
        traj = exc.trajectory
        if traj is not None:
            _write_trajectory(out, cfg, traj)
        out.json("report.json", {
            "status": "blowup", "blowup_time": exc.time,
            "recorded_states": 0 if traj is None else len(traj),
            "flags": [] if traj is None else traj.flags,
        })
        raise NumericalFailure(str(exc)) from None
    _write_trajectory(out, cfg, traj)
    return traj, {"status": "ok", "flags": traj.flags, "recorded_states": len(traj), "final": traj.diagnostics[-1]}


def cmd_simulate(cfg: ExperimentConfig, out: Output) -> None:
    _, report = _run_simulation(cfg, out, cfg.analysis.gradient_p)
    out.json("report.json", report)


def _c_star(model: DiffusionModel, W: np.ndarray) -> float:
    """``max Gamma / lam`` with ``Gamma = |a_W|^2 / lam``; ``inf`` without ``a_W``."""
    if model.a_W is None:
        return math.inf
    lam = model.lam(W)
    aw = (model.a_W(W) ** 2).reshape(-1, *W.shape[1:]).sum(axis=0)
    return _safe_ratio(aw, lam**2)


def cmd_diagnose(cfg: ExperimentConfig, out: Output) -> None:
    traj, report = _run_simulation(cfg, out, cfg.analysis.gradient_p)
    a = cfg.analysis
    grid = traj.grid
    model = build_model(cfg.model)
    center = a.center or [e / 2 for e in grid.extents]
    rows = []
    for i, t in enumerate(traj.times):
        W = traj.field(i)
        row = {"time": t}
        for q in a.gradient_p:
            row[f"grad_L{2 * q:g}"] = lp_gradient_norm(W, 2 * q)
        cs = _c_star(model, W.values)
        sm = bmo_smallness_check(W, a.c_n, cs, center, a.R)
        row.update(c_star=cs, bmo_norm=sm.bmo_norm, smallness_product=sm.product, smallness_pass=sm.passed)
        if model.k > 0:
            kp = kpower_condition_check(W, model.k, cfg.time.epsilon, a.c_k, center, a.R)
            row.update(kpower_best_c=kp.best_c, kpower_pass=kp.passed)
        if a.thin_domain_eps is not None and a.thin_domain_radii and grid.dim >= 2:
            th = thin_domain_check(W, a.thin_domain_eps, a.thin_domain_radii)
            row.update(thin_domain_worst=th.worst, thin_domain_pass=th.passed)
        rows.append(row)
    out.csv("diagnostics.csv", rows)
    final = traj.final
    samples = final.values.reshape(final.m, -1).T
    ell = ellipticity_probe(model, samples)
    gap = spectral_gap_check(ell.nu, grid.dim)
    growth = growth_condition_check(model)
    report.update(
        ellipticity={"nu_inf": ell.nu_inf, "nu_sup": ell.nu_sup, "skipped": ell.skipped},
        spectral_gap={"nu": gap.nu, "pass": gap.dimension_pass, "margin": gap.dimension_margin},
        growth={"best_c": growth.best_c, "unbounded": growth.unbounded},
    )
    if a.holder:
        fit = holder_estimate(final)
        report["holder"] = {"alpha": fit.alpha, "raw_slope": fit.raw_slope, "residual": fit.residual,
                            "constant_field": fit.constant_field}
    out.json("report.json", report)


def cmd_bmo(cfg: ExperimentConfig, out: Output) -> None:
    src = cfg.field
    if src.snapshot is not None:
        try:
            f, _ = read_snapshot(src.snapshot)
        except OSError as exc:
            raise ConfigError(f"field.snapshot: {exc}") from None
    else:
        if cfg.domain is None:
            raise ConfigError("domain: required when the field comes from field.initial")
        grid = build_grid(cfg.domain)
        f = build_initial(grid, src.initial, src.initial.components, np.random.default_rng(cfg.seed))
    res = bmo_seminorm(f)
    report = {"bmo": res.as_dict()}
    a = cfg.analysis
    if a.center is not None:
        report["bmo_norm_local"] = {"center": a.center, "R": a.R, "value": bmo_norm_local(f, a.center, a.R)}
    if a.weight_gamma is not None:
        w = Field(f.grid, f.norm())
        wc = a_gamma_constant(w, a.weight_gamma)
        report["weight"] = {"gamma": wc.gamma, "constant": wc.constant, "argmax_cube": wc.argmax_cube.as_dict()}
    if a.maximal:
        mf = maximal(Field(f.grid, f.norm()))
        out.field_csv("maximal.csv", mf)
        report["maximal_max"] = float(mf.values.max())
    out.json("report.json", report)


def cmd_verify_gnbmo(cfg: ExperimentConfig, out: Output) -> None:
    c = cfg.corpus
    grid = Grid.uniform(c.cells, c.dim)
    rows = []
    for case in smooth_corpus(c.size, c.seed, c.dim):
        inp = case.inputs(grid)
        reps = []
        if c.form in ("strong", "both"):
            reps.append(verify_strong_gnbmo(inp))
        if c.form in ("weak", "both"):
            reps.append(verify_weak_gnbmo(inp))
        for r in reps:
            rows.append({
                "case": case.name, "k": case.k, "p": case.p, "kind": r.kind,
                "I1": r.I1, "I2": r.I2, "Ibreve": r.Ibreve, "omega_tilde": r.omega_tilde,
                "c_star": r.c_star, "ratio": r.ratio,
                "flags": ";".join(r.hypothesis_flags),
            })
    out.csv("gnbmo.csv", rows)
    summary = {}
    for kind in ("strong", "weak"):
        ratios = [r["ratio"] for r in rows if r["kind"] == kind]
        if ratios:
            summary[kind] = {"max_ratio": max(ratios), "cases": len(ratios)}
    out.json("report.json", {"summary": summary, "grid_cells": c.cells, "dim": c.dim})


def _potential(pc, grid: Grid):
    if pc.kind == "zero":
        return None
    if pc.kind == "constant":
        return lambda t: np.full(grid.cells, pc.gamma)
    x = grid.coords()
    shape = np.cos(np.pi * x[0] / grid.extents[0])
    return lambda t: pc.gamma * shape * np.cos(2 * np.pi * pc.frequency * t)


def cmd_uniqueness(cfg: ExperimentConfig, out: Output) -> None:
    u = cfg.uniqueness
    phi_cfg = u.phi
    phi = NONLINEARITIES[phi_cfg.preset](k=phi_cfg.k, m=phi_cfg.m)
    grid = build_grid(cfg.domain)
    rng = np.random.default_rng(cfg.seed)
    u0 = build_initial(grid, cfg.initial, phi.m, rng)
    pert = u.perturbation
    center = pert.center or [e / 2 for e in grid.extents]
    r2 = sum((xi - ci) ** 2 for xi, ci in zip(grid.coords(), center))
    v0 = Field(grid, u0.values + pert.amplitude * np.exp(-r2 / (2 * pert.width**2)))
    try:
        rep = two_solution_experiment(phi, u0, v0, solver_config(cfg), _potential(u.g, grid), u.tolerance)
    except BlowUpError as exc:
        out.json("report.json", {"status": "blowup", "blowup_time": exc.time})
        raise NumericalFailure(str(exc)) from None
    out.csv("deviation.csv", rep.rows())
    out.json("report.json", {
        "status": "ok", "monotone": rep.monotone, "max_violation": rep.max_violation,
        "tolerance": rep.tolerance, "flagged": rep.flagged, "notes": rep.notes,
        "final_deviation_sq": rep.deviation_sq[-1], "final_envelope": rep.envelope[-1],
    })


def _diag_model(dc):
    if dc.preset == "constant":
        return DIAG_PRESETS["constant"](dc.B, dc.lams)
    if dc.preset == "power":
        return DIAG_PRESETS["power"](dc.l, dc.B, dc.lams)
    return DIAG_PRESETS["scalar-power"](dc.l, dc.lams[0])


def cmd_diagonalize(cfg: ExperimentConfig, out: Output) -> None:
    dc = cfg.diagonal
    try:
        model = _diag_model(dc)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigError(f"diagonal: {exc}") from None
    rng = np.random.default_rng(cfg.seed)
    mags = np.geomspace(dc.probe_low, dc.probe_high, dc.probe_count)
    dirs = rng.normal(size=(dc.probe_count, model.m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    probes = mags[:, None] * dirs
    bm = bmat_condition(model, probes, dc.norm)
    rows = [
        {**{f"w{i}": float(v) for i, v in enumerate(w)}, "c": c1, "c_variant": c2}
        for w, c1, c2 in zip(probes, bm.per_probe, bm.per_probe_variant)
    ]
    out.csv("probes.csv", rows)
    grid = build_grid(cfg.domain)
    W0 = build_initial(grid, cfg.initial, model.m, rng)
    sc = solver_config(cfg)
    try:
        mr = moser_experiment(model, W0, sc, dc.p, dc.T, c=bm.c)
    except BlowUpError as exc:
        out.json("report.json", {"status": "blowup", "blowup_time": exc.time, "bmat": bm.as_dict()})
        raise NumericalFailure(str(exc)) from None
    out.json("moser.json", mr.as_dict())
    out.json("report.json", {"status": "ok", "bmat": bm.as_dict(), "moser": mr.as_dict()})


COMMAND_FUNCS = {
    "simulate": cmd_simulate,
    "diagnose": cmd_diagnose,
    "bmo": cmd_bmo,
    "verify-gnbmo": cmd_verify_gnbmo,
    "uniqueness": cmd_uniqueness,
    "diagonalize": cmd_diagonalize,
}


# ---------------------------------------------------------------- entry


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="degenlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"degenlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML experiment config")
        s.add_argument("--seed", type=_seed, default=None, help="override the config seed")
        s.add_argument("--out", required=True, help="output directory (created if missing)")
        s.add_argument("--threads", type=int, default=1,
                       help="worker threads; results do not depend on this value")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("degenlab: error: --threads must be at least 1", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(args.config, args.command)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        out = Output(Path(args.out), cfg)
        COMMAND_FUNCS[args.command](cfg, out)
    except (NumericalFailure, SolverError, IntegralError, SingularTransformError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"degenlab: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, GridError, ValueError, OSError) as exc:
        print(f"degenlab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
