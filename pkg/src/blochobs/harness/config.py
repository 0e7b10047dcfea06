"""Experiment configuration: a flat dataclass loadable from TOML."""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int | None = None
    N: int | None = None
    K: list | None = None
    thetas: list | None = None  # explicit Bloch parameters
    theta_grid: int | None = None  # n per axis, theta_i = i / n
    potentials: list | None = None  # tags, see potentials.from_tag
    weights: list | None = None
    T: list | None = None
    hs: list | None = None
    rhos: list | None = None
    kappas: list | None = None
    samples: int | None = None
    seed: int = 0
    out: str = "results"
    params: dict = field(default_factory=dict)  # experiment-specific extras

    def with_defaults(self, defaults: dict) -> "ExperimentConfig":
        upd = {k: v for k, v in defaults.items() if k != "params" and getattr(self, k) is None}
        params = {**defaults.get("params", {}), **self.params}
        return replace(self, **upd, params=params)

    def validate(self) -> "ExperimentConfig":
        for name in ("K", "thetas", "potentials", "weights", "T", "hs", "rhos", "kappas"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ValueError(f"grid {name!r} is empty")
        if self.d is not None and self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if self.N is not None and self.N < 1:
            raise ValueError("N must be positive")
        if self.theta_grid is not None and self.theta_grid < 1:
            raise ValueError("theta_grid must be positive")
        for t in self.T or ():
            if not (t > 0 and math.isfinite(t)):
                raise ValueError("T values must be positive")
        for h in self.hs or ():
            if not 0 < h <= 1:
                raise ValueError("h values must lie in (0, 1]")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must fit in u64")
        return self

    def theta_list(self) -> list[tuple]:
        if self.thetas is not None:
            return [tuple(float(v) for v in t) for t in self.thetas]
        n = self.theta_grid or 1
        d = self.d or 1
        if d == 1:
            return [(i / n,) for i in range(n)]
        return [(i / n, j / n) for i in range(n) for j in range(n)]

    def canonical(self) -> str:
        obj = asdict(self)
        obj.pop("out")
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


KNOWN = {f.name for f in fields(ExperimentConfig)}


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    return config_from_dict(raw, **overrides)


def config_from_dict(raw: dict, **overrides) -> ExperimentConfig:
    raw = dict(raw)
    extra = {k: raw.pop(k) for k in list(raw) if k not in KNOWN}
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if "experiment" not in raw:
        raise ValueError("config needs an 'experiment' key")
    return ExperimentConfig(**raw)
