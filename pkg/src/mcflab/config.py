"""Experiment configuration: TOML file, command-line overrides, validation."""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .flow import SCHEMES, BDF2
from .space_forms import Kind

OUTPUT_ROOT_ENV = "MCFLAB_OUTPUT_ROOT"
GENERATORS = ("icosphere", "geodesic_sphere", "dumbbell")
CRITERIA = ("sup_A", "cooper", "lpq", "critical_alpha", "subcritical", "lower_bound")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    name: str = "run"
    # ambient
    ambient: str = "euclidean"
    curvature: float | None = None
    n: int = 2
    # initial surface: a generator or a mesh file
    generator: str = "icosphere"
    mesh: str | None = None
    level: int = 4
    radius: float = 1.0  # Euclidean radius, or geodesic radius in curved ambients
    # integrator
    scheme: str = BDF2
    cfl: float = 1.0
    smoothing: float = 0.3
    fixed_dt: float | None = None
    A2_ceiling: float = 1e6
    t_max: float | None = None
    max_steps: int = 200_000
    snapshot_every: int = 100
    write_snapshots: bool = False
    # diagnostics
    ceilings: list = field(default_factory=lambda: [1e2, 1e3, 1e4])
    criteria: list = field(default_factory=lambda: list(CRITERIA))
    alphas: list | None = None
    log_weights: list = field(default_factory=lambda: [[1.0, 1.0]])
    p: int = 2
    q: float | None = None
    # functional lab
    corpus: str | None = None
    corpus_size: int = 30
    Q: float | None = None
    seed: int = 0
    # output
    output: str | None = None

    def validate(self) -> "ExperimentConfig":
        try:
            Kind(self.ambient)
        except ValueError:
            raise ConfigError(f"ambient must be one of {[k.value for k in Kind]}, got {self.ambient!r}") from None
        if self.curvature is not None:
            if self.ambient == "sphere" and not self.curvature > 0:
                raise ConfigError("sphere ambient needs curvature > 0")
            if self.ambient == "hyperbolic" and not self.curvature < 0:
                raise ConfigError("hyperbolic ambient needs curvature < 0")
        if self.n != 2:
            raise ConfigError("only surfaces (n = 2) are supported by the mesh engine")
        if self.mesh is not None:
            if not Path(self.mesh).is_file():
                raise ConfigError(f"mesh file not found: {self.mesh}")
        elif self.generator not in GENERATORS:
            raise ConfigError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        if self.generator == "dumbbell" and self.ambient != "euclidean" and self.mesh is None:
            raise ConfigError("the dumbbell generator is Euclidean only")
        if not 0 <= self.level <= 7:
            raise ConfigError("level must lie in [0, 7]")
        if not self.radius > 0:
            raise ConfigError("radius must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if not 0 < self.cfl <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if not 0 <= self.smoothing <= 1:
            raise ConfigError("smoothing must lie in [0, 1]")
        if self.fixed_dt is not None and not self.fixed_dt > 0:
            raise ConfigError("fixed_dt must be positive")
        if not self.A2_ceiling > 0:
            raise ConfigError("A2_ceiling must be positive")
        if self.t_max is not None and not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be at least 1")
        if not self.ceilings or any(not (c > 0 and math.isfinite(c)) for c in self.ceilings):
            raise ConfigError("ceilings must be positive finite numbers")
        unknown = set(self.criteria) - set(CRITERIA)
        if unknown:
            raise ConfigError(f"unknown criteria {sorted(unknown)}")
        for pair in self.log_weights:
            if len(pair) != 2 or pair[0] < 1 or pair[1] < 1:
                raise ConfigError("log_weights entries are [a, b] with a >= 1 and b >= 1")
        if self.p < 1:
            raise ConfigError("p must be at least 1")
        if self.q is not None and not self.q > (self.n + 2) / 2:
            raise ConfigError("q must exceed (n + 2) / 2")
        if self.corpus is not None and not Path(self.corpus).is_file():
            raise ConfigError(f"corpus file not found: {self.corpus}")
        if self.corpus_size < 0:
            raise ConfigError("corpus_size must be >= 0")
        return self

    def output_dir(self) -> Path:
        if self.output:
            return Path(self.output)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / self.name

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return ExperimentConfig(**data)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a TOML file (optional), apply non-None overrides, validate."""
    data = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        # relative paths in the file are relative to the file
        for key in ("mesh", "corpus", "output"):
            if isinstance(data.get(key), str) and not Path(data[key]).is_absolute():
                data[key] = str(path.parent / data[key])
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()
