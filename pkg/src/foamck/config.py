"""Run configuration shared by the constructor, the checkers and the command line."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import PreconditionError


@dataclass(frozen=True)
class RunConfig:
    order: int = 12             # truncation order N
    tile_t: float = 0.5         # longest marching step
    tile_y: float = 0.5         # column width along each y axis
    sigma: float = 0.8          # safety factor on radius estimates
    h: float = 0.01             # resolution
    epsilon: float = 0.05       # measure budget for the singular set
    max_order: int = 2          # derivative cap P for ideal checks
    tail_budget: int = 16
    samples: int = 100
    levels: int = 6             # number of compacts / cutoff levels
    grid: int = 50              # verification grid points per axis
    tol: float = 1e-6
    verify_margin: float = 0.0  # verification region keeps this distance from the singular set
    restart_attempts: int = 8
    max_steps: int = 400        # per column and direction
    workers: int = 1
    seed: int = 0

    def validate(self, domain=None):
        positive = ("order", "tile_t", "tile_y", "sigma", "h", "tail_budget", "samples",
                    "levels", "grid", "tol", "restart_attempts", "max_steps", "workers")
        for name in positive:
            if not getattr(self, name) > 0:
                raise PreconditionError(f"config {name} must be positive")
        if self.epsilon < 0 or self.max_order < 0 or self.verify_margin < 0:
            raise PreconditionError("epsilon, max_order and verify_margin must be nonnegative")
        if not self.sigma < 1:
            raise PreconditionError("safety factor must be below 1")
        if self.order < 2:
            raise PreconditionError("truncation order must be at least 2")
        if domain is not None and not self.h < min(domain.lengths):
            raise PreconditionError("resolution must be below every domain axis length")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def updated(self, mapping):
        """Copy with string or typed values from ``mapping`` coerced to field types."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        changes = {}
        for key, value in mapping.items():
            key = key.replace("-", "_")
            if key not in fields:
                raise PreconditionError(f"unknown config key {key!r}")
            kind = type(getattr(self, key))
            try:
                changes[key] = kind(float(value)) if kind is int else kind(value)
            except (TypeError, ValueError) as exc:
                raise PreconditionError(f"bad value for {key}: {value!r}") from exc
            if kind is int and float(value) != int(float(value)):
                raise PreconditionError(f"{key} must be an integer")
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)


def load_config(path, base=None):
    """Read a JSON, YAML or ``key value`` file into a config."""
    base = base or RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        mapping = json.loads(text)
    elif suffix in (".yaml", ".yml"):
        import yaml
        mapping = yaml.safe_load(text) or {}
    else:
        mapping = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition(" ")
                mapping[key.strip()] = value.strip()
    return base.updated(mapping)
