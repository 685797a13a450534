"""Run configuration shared by every pipeline stage."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TARGETS = ("cases", "deaths", "ili")
DEFAULT_LAMBDA_GRID = tuple(float(x) for x in np.geomspace(1e-3, 1.0, 10))


@dataclass(frozen=True)
class RunConfig:
    """Pipeline knobs.

    ``lambda_grid`` holds penalties as fractions of each training set's
    ``lambda_max`` (the smallest penalty that zeroes every coefficient), so a
    single grid serves targets on very different scales.
    """

    horizons: tuple[int, ...] = (1, 2, 3, 4)
    targets: tuple[str, ...] = TARGETS
    imputation_draws: int = 100
    national_train_days: int = 56
    state_train_weeks: int = 30
    raw_train_weeks: int = 30
    ili_train_weeks: int = 52
    ensemble_window_weeks: int = 15
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    cv_folds: int = 3
    seed: int = 0
    lag_table: dict = field(default_factory=dict)
    lag_candidates: tuple[int, int] = (1, 35)
    lag_selection_weeks: int = 13
    donor_inclusive: bool = True
    ar_lags_daily: int = 6
    ar_lags_weekly: int = 3
    ili_ar_lags: int = 3
    share_weeks: int = 4
    threads: int = 1

    def __post_init__(self):
        hz = tuple(sorted(int(h) for h in self.horizons))
        if not hz or len(set(hz)) != len(hz) or not set(hz) <= {1, 2, 3, 4}:
            raise ValueError(f"horizons must be a non-empty subset of 1..4, got {self.horizons}")
        object.__setattr__(self, "horizons", hz)
        targets = tuple(str(t) for t in self.targets)
        if not targets or len(set(targets)) != len(targets) or not set(targets) <= set(TARGETS):
            raise ValueError(f"targets must be a non-empty subset of {TARGETS}, got {self.targets}")
        object.__setattr__(self, "targets", tuple(t for t in TARGETS if t in targets))
        grid = tuple(float(x) for x in self.lambda_grid)
        if not grid or any(x <= 0 for x in grid) or list(grid) != sorted(grid):
            raise ValueError("lambda_grid must be non-empty, positive and ascending")
        object.__setattr__(self, "lambda_grid", grid)
        if self.imputation_draws < 1:
            raise ValueError("imputation_draws must be >= 1")
        if self.national_train_days < 28:
            raise ValueError("national_train_days must be >= 28")
        for name in ("state_train_weeks", "raw_train_weeks", "ili_train_weeks",
                     "ensemble_window_weeks", "share_weeks", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in uint64")
        lo, hi = self.lag_candidates
        if not 1 <= lo <= hi:
            raise ValueError("lag_candidates must satisfy 1 <= lo <= hi")
        table = {str(k): (int(v[0]), int(v[1])) for k, v in dict(self.lag_table).items()}
        if any(min(v) < 1 for v in table.values()):
            raise ValueError("optimal lags must be >= 1")
        object.__setattr__(self, "lag_table", table)
        object.__setattr__(self, "lag_candidates", (int(lo), int(hi)))

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["horizons"] = list(self.horizons)
        d["lambda_grid"] = list(self.lambda_grid)
        d["lag_candidates"] = list(self.lag_candidates)
        d["lag_table"] = {k: list(v) for k, v in sorted(self.lag_table.items())}
        return d

    def digest(self) -> str:
        """Hash of every field except the thread count (which never changes outputs)."""
        d = self.to_dict()
        d.pop("threads")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def cache_key(self) -> str:
        """Hash of the fields that shape individual model fits (not which targets a run covers)."""
        key = self.__dict__.get("_cache_key")
        if key is None:
            d = self.to_dict()
            for k in ("threads", "targets", "horizons"):
                d.pop(k)
            key = hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
            object.__setattr__(self, "_cache_key", key)  # frozen: fields never change
        return key

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        for key in ("horizons", "lambda_grid", "lag_candidates"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))
