import json
import subprocess
import sys
from pathlib import Path

import pytest

from degenlab.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _hash(out):
    return (out / "config.yaml").read_text().splitlines()[0].split("=")[1]


def _all_files_stamped(out):
    h = _hash(out)
    files = [p for p in out.rglob("*") if p.is_file()]
    assert files
    for p in files:
        text = p.read_text()
        if p.suffix == ".json":
            assert json.loads(text)["config_hash"] == h, p
        else:
            assert f"config_hash={h}" in text.splitlines()[0] or f"config_hash={h}" in text[:400], p


@pytest.mark.parametrize("name,command", [
    ("simulate_pme", "simulate"),
    ("diagnose_pme", "diagnose"),
    ("bmo", "bmo"),
    ("uniqueness", "uniqueness"),
    ("diagonalize", "diagonalize"),
])
def test_commands_run_and_stamp(tmp_path, name, command):
    out = tmp_path / "nested" / "out"
    assert main([command, "--config", str(CONFIGS / f"{name}.yaml"), "--out", str(out)]) == 0
    assert (out / "report.json").exists() or (out / "trajectory.csv").exists()
    _all_files_stamped(out)


def test_verify_gnbmo_runs(tmp_path):
    cfg = tmp_path / "g.yaml"
    cfg.write_text("corpus: {size: 2, seed: 3, dim: 1, cells: 32, form: both}\n")
    assert main(["verify-gnbmo", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    _all_files_stamped(tmp_path / "o")


def test_deterministic(tmp_path):
    cfg = str(CONFIGS / "simulate_pme.yaml")
    for tag in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--seed", "5", "--out", str(tmp_path / tag)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_seed_changes_hash(tmp_path):
    cfg = str(CONFIGS / "bmo.yaml")
    main(["bmo", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a")])
    main(["bmo", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b")])
    assert _hash(tmp_path / "a") != _hash(tmp_path / "b")


def test_blowup_exit_two_keeps_partial(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(CONFIGS / "blowup.yaml"), "--out", str(out)]) == 2
    assert "numerical failure" in capsys.readouterr().err
    assert len(list((out / "snapshots").iterdir())) > 1
    _all_files_stamped(out)


def test_bad_config_exit_one(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("domain: {cells: [8]}\nmodel: {preset: nope}\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "model.preset" in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--out", str(tmp_path)])
    assert exc.value.code == 1
    assert main(["simulate", "--config", str(CONFIGS / "simulate_pme.yaml"),
                 "--out", str(tmp_path), "--threads", "0"]) == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "degenlab", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "degenlab" in r.stdout
