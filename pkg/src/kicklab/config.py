"""Run configuration: a flat YAML mapping of simulation and command options."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import yaml

from .core import SimParams


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


# annotation string -> expected scalar kind (annotations are strings here)
_FIELD_KINDS = {"int": "int", "float": "float", "bool": "bool", "str": "str",
                "float | None": "float", "int | None": "int"}


# fields that steer execution but cannot change any result
EXECUTION_FIELDS = ("workers", "chunk_size", "out")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass
class RunConfig:
    # physics and numerics (see SimParams)
    kappa: float = 10.0
    kbar: float = 3.0
    d_env: float = 0.1
    n_grid: int = 4096
    q_extent: int = 32
    n_sub: int = 100
    n_kicks: int = 50
    fit_window: list[float] = field(default_factory=lambda: [30.0, 50.0])
    q0: float = 0.0
    p0: float = 0.0
    sigma_q: float | None = None
    edge_tol: float = 1e-8
    dt_guard_tol: float = 0.3
    recenter: bool = True
    # ensemble control
    n_traj: int = 1000
    seed: int = 0
    workers: int = 1
    chunk_size: int = 32
    out: str = "results"
    # classical
    n_particles: int = 10000
    partitions: int = 1
    # sweeps
    values: list[float] | None = None
    # analytic table
    kbar_min: float = 0.1
    kbar_max: float = 8.0
    n_points: int = 80
    shep_sign: int = -1
    # classicality check
    s: float | None = None
    force_grad: float | None = None  # defaults to kappa
    force_curvature: float = 1.0
    mass: float = 1.0
    eta: float = 1.0
    margin: float = 10.0

    @classmethod
    def from_mapping(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field '{unknown[0]}'")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping of field: value")
        return cls.from_mapping(data)

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)

    def provenance(self) -> dict:
        """Mapping of every field that can influence results."""
        return {k: v for k, v in self.to_mapping().items() if k not in EXECUTION_FIELDS}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_mapping(), sort_keys=True)

    def update(self, **changes) -> "RunConfig":
        cfg = dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})
        cfg.validate()
        return cfg

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"missing required field '{name}'")

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            kind = _FIELD_KINDS.get(f.type)
            if v is None and "None" in f.type:
                continue
            if kind == "int" and not (isinstance(v, int) and not isinstance(v, bool)):
                raise ConfigError(f"field '{f.name}' must be an integer, got {v!r}")
            if kind == "float" and not _is_number(v):
                raise ConfigError(f"field '{f.name}' must be a number, got {v!r}")
            if kind == "bool" and not isinstance(v, bool):
                raise ConfigError(f"field '{f.name}' must be true or false, got {v!r}")
            if kind == "str" and not isinstance(v, str):
                raise ConfigError(f"field '{f.name}' must be a string, got {v!r}")
        if self.n_traj < 1:
            raise ConfigError("field 'n_traj' must be >= 1")
        if self.workers < 1:
            raise ConfigError("field 'workers' must be >= 1")
        if not (isinstance(self.fit_window, (list, tuple)) and len(self.fit_window) == 2):
            raise ConfigError("field 'fit_window' must be a pair [t_lo, t_hi]")
        if self.values is not None and not isinstance(self.values, (list, tuple)):
            raise ConfigError("field 'values' must be a list")
        for name in ("fit_window", "values"):
            if not all(_is_number(x) for x in getattr(self, name) or []):
                raise ConfigError(f"field '{name}' must hold numbers")
        try:
            self.sim_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def sim_params(self) -> SimParams:
        names = {f.name for f in fields(SimParams)}
        kwargs = {k: v for k, v in self.to_mapping().items() if k in names}
        kwargs["fit_window"] = tuple(kwargs["fit_window"])
        return SimParams(**kwargs)
