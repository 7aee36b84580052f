"""Experiment configuration: YAML in, validated pydantic models out.

Unknown keys, duplicate keys and type mismatches are rejected with the
location of the offending entry.  ``dump_config`` writes the resolved config
(defaults filled) so that ``parse -> dump -> parse`` is the identity.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

VERSION = "1"

COMMANDS = ("simulate", "verify-gnbmo", "bmo", "diagnose", "uniqueness", "diagonalize")


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Strict):
    cells: list[int]
    extents: Optional[list[float]] = None
    boundary: Literal["neumann", "dirichlet"] = "neumann"

    @field_validator("cells")
    @classmethod
    def _cells(cls, v):
        if not 1 <= len(v) <= 3 or any(c < 1 for c in v):
            raise ValueError("cells needs 1 to 3 positive counts")
        return v

    @model_validator(mode="after")
    def _extents(self):
        if self.extents is None:
            self.extents = [1.0] * len(self.cells)
        if len(self.extents) != len(self.cells) or any(e <= 0 for e in self.extents):
            raise ValueError("extents must be positive, one per axis")
        return self


class ReactionConfig(_Strict):
    kind: Literal["linear", "logistic", "cubic"]
    rate: float = 1.0


class ModelConfig(_Strict):
    preset: Literal["porous_media", "heat", "constant", "skt"]
    m: int = 1
    k: float = 0.0
    diffusivity: float = 1.0
    matrix: Optional[list[list[float]]] = None
    d: list[float] = [1.0, 1.0]
    self_diffusion: list[float] = [0.0, 0.0]
    cross_diffusion: list[float] = [0.5, 0.5]
    reaction: Optional[ReactionConfig] = None


class TimeConfig(_Strict):
    dt: float = Field(gt=0)
    T: float = Field(ge=0)
    epsilon: float = Field(0.0, ge=0)
    scheme: Literal["semi-implicit", "explicit"] = "semi-implicit"
    stride: int = Field(1, ge=1)
    tol: float = Field(1e-10, gt=0)


class InitialConfig(_Strict):
    kind: Literal["gaussian", "cosine", "constant", "random"] = "gaussian"
    floor: float = 1.0
    amplitude: float = 0.5
    width: float = 0.15
    center: Optional[list[float]] = None
    mode: int = 1
    value: list[float] = [1.0]
    components: int = 1


class PerturbationConfig(_Strict):
    amplitude: float = 0.1
    width: float = 0.1
    center: Optional[list[float]] = None


class AnalysisConfig(_Strict):
    gradient_p: list[float] = [2.0]
    center: Optional[list[float]] = None
    R: float = 0.1
    c_n: float = 1.0
    c_k: float = 1.0
    holder: bool = True
    thin_domain_eps: Optional[float] = None
    thin_domain_radii: list[float] = []
    weight_gamma: Optional[float] = None
    maximal: bool = False


class FieldSource(_Strict):
    snapshot: Optional[str] = None
    initial: Optional[InitialConfig] = None

    @model_validator(mode="after")
    def _one(self):
        if (self.snapshot is None) == (self.initial is None):
            raise ValueError("give exactly one of snapshot or initial")
        return self


class CorpusConfig(_Strict):
    size: int = Field(20, ge=1)
    seed: int = 7
    dim: int = Field(2, ge=1, le=3)
    cells: int = Field(64, ge=8)
    form: Literal["strong", "weak", "both"] = "both"


class PhiConfig(_Strict):
    preset: Literal["power", "square", "identity"] = "power"
    k: float = 1.0
    m: int = 1


class PotentialConfig(_Strict):
    kind: Literal["zero", "constant", "oscillating"] = "zero"
    gamma: float = 0.0
    frequency: float = 1.0


class UniquenessConfig(_Strict):
    phi: PhiConfig = PhiConfig()
    g: PotentialConfig = PotentialConfig()
    perturbation: PerturbationConfig = PerturbationConfig()
    tolerance: Optional[float] = None


class DiagonalConfig(_Strict):
    preset: Literal["constant", "power", "scalar-power"] = "constant"
    l: float = 1.0
    B: list[list[float]] = [[2.0, 1.0], [0.5, 1.5]]
    lams: list[float] = [1.0, 2.0]
    norm: Literal["2", "fro"] = "2"
    probe_low: float = 0.1
    probe_high: float = 10.0
    probe_count: int = Field(64, ge=1)
    p: float = 2.0
    T: float = Field(0.5, ge=0)


class OutputConfig(_Strict):
    snapshots: bool = True
    csv: bool = True


class ExperimentConfig(_Strict):
    version: str = VERSION
    command: Optional[Literal[COMMANDS]] = None  # type: ignore[valid-type]
    seed: int = Field(0, ge=0, lt=2**64)
    domain: Optional[DomainConfig] = None
    model: Optional[ModelConfig] = None
    time: Optional[TimeConfig] = None
    initial: Optional[InitialConfig] = None
    field: Optional[FieldSource] = None
    analysis: AnalysisConfig = AnalysisConfig()
    corpus: Optional[CorpusConfig] = None
    uniqueness: Optional[UniquenessConfig] = None
    diagonal: Optional[DiagonalConfig] = None
    outputs: OutputConfig = OutputConfig()


REQUIRED: dict[str, tuple[str, ...]] = {
    "simulate": ("domain", "model", "time", "initial"),
    "diagnose": ("domain", "model", "time", "initial"),
    "verify-gnbmo": ("corpus",),
    "bmo": ("field",),
    "uniqueness": ("domain", "time", "initial", "uniqueness"),
    "diagonalize": ("domain", "time", "initial", "diagonal"),
}


class _UniqueKeyLoader(yaml.SafeLoader):
    pass


def _mapping(loader: _UniqueKeyLoader, node: yaml.MappingNode, deep: bool = False):
    seen = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            mark = key_node.start_mark
            raise ConfigError(f"duplicate key {key!r} at line {mark.line + 1}, column {mark.column + 1}")
        seen[key] = key_node
    return loader.construct_mapping(node, deep=deep)


_UniqueKeyLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _mapping)


def _format_errors(exc: ValidationError, source: str) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{source}: {loc}: {err['msg']}")
    return "\n".join(lines)


def load_config(data: dict, command: str | None = None, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, source)) from None
    if cfg.version != VERSION:
        raise ConfigError(f"{source}: version: unsupported config version {cfg.version!r}")
    if command is not None:
        if cfg.command is not None and cfg.command != command:
            raise ConfigError(f"{source}: command: config is for {cfg.command!r}, not {command!r}")
        cfg = cfg.model_copy(update={"command": command})
    if cfg.command is not None:
        missing = [s for s in REQUIRED[cfg.command] if getattr(cfg, s) is None]
        if missing:
            raise ConfigError(f"{source}: missing required section(s) for {cfg.command}: {', '.join(missing)}")
    return cfg


def parse_config(path: str | Path, command: str | None = None) -> ExperimentConfig:
    """Read and validate a YAML config; ``command`` selects the required sections."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = yaml.load(text, Loader=_UniqueKeyLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    return load_config(data, command, str(path))


def config_dict(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json")


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_dict(cfg), sort_keys=True, default_flow_style=None)


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(config_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]

