"""Experiment configuration: strict YAML schema over nested dataclasses.

Defaults reproduce the full-scale CGLE protocol (m=128, sigma=10, 8x40 tanh
MLP, Adam 1e-3 -> 1e-4 at the halfway epoch, 20000/1000/1000 LHS points,
w_res=1, w_icbc=100).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .pde import KINDS, PdeSpec, make_pde
from .reference import SolverConfig


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path, self.line = path, line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{path}{where}: {message}")


@dataclass
class PdeConfig:
    kind: str = "CGLE"
    b: float = 0.5
    c: float = -1.3
    D: float = 0.001
    eps: float = 0.01
    nu: float = 0.01 / math.pi
    x_domain: list[float] | None = None
    t_domain: list[float] | None = None
    bc: str | None = None  # None: the kind's default

    def validate(self, p="pde"):
        if self.kind not in KINDS:
            raise ConfigError(f"{p}.kind", f"must be one of {KINDS}")
        if self.bc is not None and self.bc not in ("dirichlet", "periodic"):
            raise ConfigError(f"{p}.bc", "must be dirichlet or periodic")
        for name in ("x_domain", "t_domain"):
            d = getattr(self, name)
            if d is not None and (len(d) != 2 or not d[0] < d[1]):
                raise ConfigError(f"{p}.{name}", "must be [lo, hi] with lo < hi")

    def build(self) -> PdeSpec:
        kw: dict[str, Any] = {}
        if self.kind == "CGLE":
            kw.update(b=self.b, c=self.c)
        elif self.kind == "AllenCahn":
            kw.update(D=self.D, eps=self.eps)
        elif self.kind == "Burgers":
            kw.update(nu=self.nu)
        if self.x_domain is not None:
            kw["x_domain"] = tuple(self.x_domain)
        if self.t_domain is not None:
            kw["t_domain"] = tuple(self.t_domain)
        if self.bc is not None:
            kw["bc"] = self.bc
        return make_pde(self.kind, **kw)


@dataclass
class ModelConfig:
    mode: str = "aspen"
    m: int = 128
    sigma: float = 10.0
    layers: int = 8
    width: int = 40

    def validate(self, p="model"):
        if self.mode not in ("aspen", "fixed_fourier", "baseline"):
            raise ConfigError(f"{p}.mode", "must be aspen, fixed_fourier or baseline")
        for name in ("m", "layers", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{p}.{name}", "must be >= 1")
        if self.sigma < 0:
            raise ConfigError(f"{p}.sigma", "must be >= 0")


@dataclass
class TrainingConfig:
    epochs: int = 100000
    lr: float = 1e-3
    lr_final: float = 1e-4
    lr_decay_epoch: int | None = None  # None: halfway
    w_res: float = 1.0
    w_icbc: float = 100.0
    n_res: int = 20000
    n_ic: int = 1000
    n_bc: int = 1000
    resample_every: int = 1000
    rar: bool = True
    rar_every: int = 2000
    rar_pool: int = 100000
    rar_add: int = 1000
    rar_max: int = 5000
    curriculum: bool = True
    curriculum_start: float = 0.25
    curriculum_frac: float = 0.4
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    shard_size: int = 0
    eval_nx: int = 1024
    eval_nt: int = 200

    def validate(self, p="training"):
        for name in ("epochs", "n_res", "n_ic", "n_bc", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{p}.{name}", "must be >= 1")
        for name in ("resample_every", "rar_every", "rar_pool", "rar_add", "rar_max",
                     "checkpoint_every", "shard_size"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{p}.{name}", "must be >= 0")
        for name in ("lr", "lr_final"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{p}.{name}", "must be > 0")
        for name in ("w_res", "w_icbc"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{p}.{name}", "must be >= 0")
        if not 0 < self.curriculum_start <= 1:
            raise ConfigError(f"{p}.curriculum_start", "must be in (0, 1]")
        if not 0 <= self.curriculum_frac <= 2 / 3:
            raise ConfigError(f"{p}.curriculum_frac", "must be in [0, 2/3]")

    @property
    def decay_epoch(self) -> int:
        return self.epochs // 2 if self.lr_decay_epoch is None else self.lr_decay_epoch


@dataclass
class InverseConfig:
    n_obs: int = 200
    noise: float = 0.05
    b0: float = 0.1
    c0: float = -0.5
    w_data: float = 1.0

    def validate(self, p="inverse"):
        if self.n_obs < 1:
            raise ConfigError(f"{p}.n_obs", "must be >= 1")
        if self.noise < 0:
            raise ConfigError(f"{p}.noise", "must be >= 0")
        if self.w_data < 0:
            raise ConfigError(f"{p}.w_data", "must be >= 0")


@dataclass
class ReferenceConfig:
    Nx: int = 1024
    dt: float = 1e-4
    scheme: str = "CrankNicolsonFD"
    n_snapshots: int = 200

    def validate(self, p="reference"):
        if not self.dt > 0:
            raise ConfigError(f"{p}.dt", "must be > 0")
        try:
            self.solver().validate()
        except ValueError as exc:
            field_name = str(exc).split()[0]
            raise ConfigError(f"{p}.{field_name}", str(exc)) from None

    def solver(self) -> SolverConfig:
        return SolverConfig(Nx=self.Nx, dt=self.dt, scheme=self.scheme,
                            n_snapshots=self.n_snapshots)


@dataclass
class ExperimentConfig:
    pde: PdeConfig = field(default_factory=PdeConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    inverse: InverseConfig | None = None
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    output_dir: str = "runs/default"

    def validate(self) -> "ExperimentConfig":
        self.pde.validate()
        self.model.validate()
        self.training.validate()
        self.reference.validate()
        if self.inverse is not None:
            self.inverse.validate()
            if self.pde.kind != "CGLE":
                raise ConfigError("inverse", "inverse mode is defined for the CGLE only")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of everything except the output location."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **sections) -> "ExperimentConfig":
        return dataclasses.replace(self, **sections)


_SECTIONS = {
    "pde": PdeConfig, "model": ModelConfig, "training": TrainingConfig,
    "inverse": InverseConfig, "reference": ReferenceConfig,
}


def _key_lines(text: str) -> dict[str, int]:
    """Map dotted key paths to 1-based line numbers."""
    lines: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    walk(root, "")
    return lines


def _coerce(path: str, value, ftype, lines):
    line = lines.get(path)
    t = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    t = t.replace(" ", "")
    optional = t.endswith("|None")
    base = t[:-5] if optional else t
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "must not be null", line)
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigError(path, "must be a boolean", line)
        return value
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "must be an integer", line)
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "must be a number", line)
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(path, "must be a string", line)
        return value
    if base == "list[float]":
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(path, "must be a list of numbers", line)
        return [float(v) for v in value]
    raise ConfigError(path, f"unsupported field type {t}", line)


def _build(cls, data, prefix, lines):
    if not isinstance(data, dict):
        raise ConfigError(prefix, "must be a mapping", lines.get(prefix))
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            path = f"{prefix}.{key}" if prefix else str(key)
            raise ConfigError(path, "unknown key", lines.get(path))
    kw = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        f = names[key]
        if key in _SECTIONS and cls is ExperimentConfig:
            kw[key] = None if value is None and key == "inverse" else _build(
                _SECTIONS[key], value, path, lines)
        else:
            kw[key] = _coerce(path, value, f.type, lines)
    return cls(**kw)


def parse_config(text: str) -> ExperimentConfig:
    """Parse YAML text into a validated config; unknown keys are errors."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<file>", f"YAML syntax error: {exc}",
                          mark.line + 1 if mark else None) from None
    if data is None:
        data = {}
    lines = _key_lines(text)
    cfg = _build(ExperimentConfig, data, "", lines)
    try:
        return cfg.validate()
    except ConfigError as exc:
        if exc.line is None and exc.path in lines:
            raise ConfigError(exc.path, str(exc).split(": ", 1)[1], lines[exc.path]) from None
        raise


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(serialize_config(cfg))


# --------------------------------------------------------------------------
# random streams

_STREAMS = {"init": 0, "lhs": 1, "rar": 2, "noise": 3, "obs": 4, "eval": 5}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose derived from one seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAMS[name],)))
