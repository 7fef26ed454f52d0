"""Run configuration: TOML schema, validation, and search-space parsing."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .problems import make_problem

OPTIMIZERS = ("engd_w", "spring", "sgd", "adam")
RAND_VARIANTS = ("gpu_efficient", "stable_oracle")


@dataclass
class RunConfig:
    """Everything one training run needs; see configs/ for TOML examples."""

    problem: str
    arch: list[int]
    n_interior: int
    n_boundary: int
    optimizer: str
    weight_interior: float = 1.0  # domain-measure multiplier on the interior term
    weight_boundary: float = 1.0
    damping: float = 1e-8
    momentum: float = 0.0
    lr: Optional[float] = None
    line_search: bool = False
    norm_constraint: float = 1e-3
    rand_enabled: bool = False
    rand_sketch_frac: float = 0.10
    rand_variant: str = "gpu_efficient"
    max_steps: Optional[int] = None
    max_seconds: Optional[float] = None
    seed_params: int = 0
    seed_batches: int = 0
    seed_sketch: int = 0
    eval_points: int = 4096
    metric_every: int = 0  # 0 = auto cadence: every step up to 1000, then every 10th
    deff_every: int = 0  # 0 = effective-dimension diagnostic off

    def validate(self) -> "RunConfig":
        problem = make_problem(self.problem)  # raises on unknown name
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}")
        if len(self.arch) < 2 or self.arch[0] != problem.input_dim or self.arch[-1] != 1:
            raise ValueError(
                f"arch {self.arch} incompatible with problem input dim {problem.input_dim}"
            )
        if self.n_interior < 1 or self.n_boundary < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.weight_interior <= 0 or self.weight_boundary <= 0:
            raise ValueError("measure weights must be > 0")
        if self.max_steps is None and self.max_seconds is None:
            raise ValueError("at least one of max_steps / max_seconds is required")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.max_seconds is not None and self.max_seconds <= 0:
            raise ValueError("max_seconds must be > 0")
        if self.line_search == (self.lr is not None):
            raise ValueError("select exactly one of a fixed lr or the line search")
        if self.optimizer in ("sgd", "adam") and self.line_search:
            raise ValueError(f"{self.optimizer} does not support the line search")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.damping <= 0 and self.optimizer in ("engd_w", "spring"):
            raise ValueError("damping must be > 0")
        if self.norm_constraint <= 0:
            raise ValueError("norm constraint must be > 0")
        if self.rand_variant not in RAND_VARIANTS:
            raise ValueError(f"rand variant must be one of {RAND_VARIANTS}")
        if not 0.0 < self.rand_sketch_frac <= 1.0:
            raise ValueError("sketch fraction must be in (0, 1]")
        if self.eval_points < 1 or self.metric_every < 0 or self.deff_every < 0:
            raise ValueError("eval_points must be >= 1; cadences must be >= 0")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


_SECTION_FIELDS = {
    "run": (
        "problem", "arch", "n_interior", "n_boundary", "max_steps", "max_seconds",
        "seed_params", "seed_batches", "seed_sketch", "eval_points", "metric_every",
        "weight_interior", "weight_boundary",
    ),
    "optimizer": (
        "name", "damping", "momentum", "lr", "line_search", "norm_constraint",
    ),
    "rand": ("enabled", "sketch_frac", "variant"),
    "diag": ("deff_every",),
}


def run_config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from the sectioned mapping of a TOML config file."""
    kwargs = {}
    for section, keys in _SECTION_FIELDS.items():
        body = raw.get(section, {})
        unknown = set(body) - set(keys)
        if unknown:
            raise ValueError(f"unknown keys {sorted(unknown)} in [{section}]")
        for key, value in body.items():
            if section == "optimizer" and key == "name":
                kwargs["optimizer"] = value
            elif section == "rand":
                kwargs[f"rand_{key}"] = value
            else:
                kwargs[key] = value
    missing = {"problem", "arch", "n_interior", "n_boundary", "optimizer"} - set(kwargs)
    if missing:
        raise ValueError(f"missing required config keys: {sorted(missing)}")
    return RunConfig(**kwargs).validate()


def load_run_config(path: str | Path) -> RunConfig:
    with open(path, "rb") as fh:
        return run_config_from_dict(tomllib.load(fh))


@dataclass
class ParamSpec:
    """One searchable hyperparameter: log-uniform or uniform range, or a finite set."""

    kind: str  # "log_uniform" | "uniform" | "choice"
    lo: float = 0.0
    hi: float = 0.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind in ("log_uniform", "uniform"):
            if not self.lo < self.hi:
                raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
            if self.kind == "log_uniform" and self.lo <= 0:
                raise ValueError("log-uniform bounds must be positive")
        elif self.kind == "choice":
            if not self.values:
                raise ValueError("choice set must be non-empty")
        else:
            raise ValueError(f"unknown distribution {self.kind!r}")

    def sample(self, rng) -> float:
        if self.kind == "log_uniform":
            return float(10.0 ** rng.uniform(math.log10(self.lo), math.log10(self.hi)))
        if self.kind == "uniform":
            return float(rng.uniform(self.lo, self.hi))
        return self.values[rng.integers(0, len(self.values))]

    def narrowed(self, best: float) -> "ParamSpec":
        """Stage-2 range: +-1 decade (log) or +-10% of the width (uniform), clipped."""
        if self.kind == "log_uniform":
            return ParamSpec("log_uniform", max(self.lo, best / 10.0), min(self.hi, best * 10.0))
        if self.kind == "uniform":
            pad = 0.1 * (self.hi - self.lo)
            lo, hi = max(self.lo, best - pad), min(self.hi, best + pad)
            return ParamSpec("uniform", lo, hi)
        return self


@dataclass
class SearchSpace:
    params: dict[str, ParamSpec]
    trials_per_stage: int = 50

    def __post_init__(self):
        if self.trials_per_stage < 1:
            raise ValueError("trials_per_stage must be >= 1")

    def sample(self, rng) -> dict:
        return {name: spec.sample(rng) for name, spec in self.params.items()}

    def narrowed(self, best: dict) -> "SearchSpace":
        return SearchSpace(
            params={n: s.narrowed(best[n]) for n, s in self.params.items()},
            trials_per_stage=self.trials_per_stage,
        )


def search_space_from_dict(raw: dict) -> SearchSpace:
    params = {}
    for name, body in raw.get("params", {}).items():
        kinds = [k for k in ("log_uniform", "uniform", "choice") if k in body]
        if len(kinds) != 1:
            raise ValueError(f"param {name!r} needs exactly one distribution, got {kinds}")
        kind = kinds[0]
        if kind == "choice":
            params[name] = ParamSpec("choice", values=tuple(body[kind]))
        else:
            lo, hi = body[kind]
            params[name] = ParamSpec(kind, lo=float(lo), hi=float(hi))
    if not params:
        raise ValueError("search space defines no parameters")
    return SearchSpace(params=params, trials_per_stage=int(raw.get("trials_per_stage", 50)))


def load_search_space(path: str | Path) -> SearchSpace:
    with open(path, "rb") as fh:
        return search_space_from_dict(tomllib.load(fh))
