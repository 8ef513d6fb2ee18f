"""Univariate detection with a modified ECOD score.

Each variable gets an empirical CDF from its historical samples.  The tail
that is scored is the long tail of the sample distribution: a positively
skewed variable (``Skew.Right``) is scored on its upper tail, a negatively
skewed one on its lower tail.  Values beyond the historical support on the
scored side have no finite ECOD score; they are reported as ``AA`` findings
scored by their scaled distance to the nearest historical sample.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateSamples, EmptySamples, IneligibleVariable
from .plan_store import HistoryMatrix, PlanCase, VariableKey


class Skew(str, enum.Enum):
    Right = "Right"
    Left = "Left"


class Kind(str, enum.Enum):
    AA = "AA"
    A = "A"


@dataclass(frozen=True)
class EcodConfig:
    c: float = 10.0
    k: int = 5
    p: float = 0.05
    top_n: int = 5000

    def __post_init__(self):
        if not (self.c > 0 and self.k > 0 and self.p > 0 and self.top_n > 0):
            raise ValueError("EcodConfig fields must be strictly positive")


class EmpiricalCdf:
    def __init__(self, samples: Iterable[float]):
        arr = np.sort(np.asarray(list(samples), dtype=float))
        if arr.size == 0:
            raise EmptySamples("cannot fit an empirical CDF to zero samples")
        arr.setflags(write=False)
        self.sorted = arr
        self.n = int(arr.size)

    def __call__(self, x: float) -> float:
        return self.count_le(x) / self.n

    def count_le(self, x: float) -> int:
        return int(np.searchsorted(self.sorted, x, side="right"))

    def count_ge(self, x: float) -> int:
        return self.n - int(np.searchsorted(self.sorted, x, side="left"))

    @property
    def min(self) -> float:
        return float(self.sorted[0])

    @property
    def max(self) -> float:
        return float(self.sorted[-1])


def fit_ecdf(samples: Sequence[float]) -> EmpiricalCdf:
    return EmpiricalCdf(samples)


def sample_skewness(samples: Sequence[float]) -> float:
    """Adjusted Fisher-Pearson skewness (plain moment ratio when n = 2)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2 or np.all(x == x[0]):
        raise DegenerateSamples("skewness needs at least two distinct samples")
    return float(stats.skew(x, bias=x.size < 3))


# symmetric samples give skewness of order 1e-16 with either sign
SKEW_TIE_TOL = 1e-9


def skew_direction(samples: Sequence[float]) -> Skew:
    """``Right`` for skewness >= 0 (ties included), else ``Left``."""
    return Skew.Right if sample_skewness(samples) >= -SKEW_TIE_TOL else Skew.Left


@dataclass(frozen=True)
class EcodVariableModel:
    cdf: EmpiricalCdf
    skew: Skew
    eligible: bool
    train_std: float
    reason: str = ""

    @property
    def min_sample(self) -> float:
        return self.cdf.min

    @property
    def max_sample(self) -> float:
        return self.cdf.max

    @property
    def n_train(self) -> int:
        return self.cdf.n

    def tail_count(self, x: float) -> int:
        """Historical samples at least as extreme as ``x`` on the scored side."""
        if self.skew is Skew.Right:
            return self.cdf.count_ge(x)
        return self.cdf.count_le(x)


def fit_variable(samples: Sequence[float], n_plans: int, cfg: EcodConfig) -> EcodVariableModel:
    cdf = fit_ecdf(samples)
    std = float(np.std(cdf.sorted, ddof=1)) if cdf.n > 1 else 0.0
    if cdf.min == cdf.max:
        return EcodVariableModel(cdf, Skew.Right, False, std, "constant")
    if cdf.n < cfg.k:
        return EcodVariableModel(cdf, skew_direction(cdf.sorted), False, std, "too few samples")
    if cdf.n / n_plans < cfg.p:
        return EcodVariableModel(cdf, skew_direction(cdf.sorted), False, std, "low presence ratio")
    return EcodVariableModel(cdf, skew_direction(cdf.sorted), True, std)


def ecod_score(model: EcodVariableModel, x: float) -> float | None:
    """``-log2`` of the scored-tail probability, or ``None`` when it is zero."""
    if not model.eligible:
        raise IneligibleVariable(model.reason)
    count = model.tail_count(x)
    if count == 0:
        return None
    return -math.log2(count / model.cdf.n)


def ecod_prime_score(model: EcodVariableModel, x: float, cfg: EcodConfig) -> tuple[float, Kind]:
    base = ecod_score(model, x)
    if base is not None:
        return base, Kind.A
    nearest = float(np.min(np.abs(model.cdf.sorted - x)))
    return cfg.c * nearest / model.train_std, Kind.AA


@dataclass(frozen=True)
class UnivariateFinding:
    variable: VariableKey
    observed: float
    score: float
    kind: Kind
    n_train: int
    historical_min: float
    historical_max: float


class EcodModel:
    """Per-variable models fitted on a history; immutable once built."""

    def __init__(self, models: dict[VariableKey, EcodVariableModel], n_plans: int, cfg: EcodConfig):
        self.models = dict(sorted(models.items(), key=lambda kv: str(kv[0])))
        self.n_plans = n_plans
        self.cfg = cfg

    @classmethod
    def fit(cls, history: HistoryMatrix, cfg: EcodConfig = EcodConfig()) -> "EcodModel":
        models = {}
        for v in history.variables:
            vals, mask = history.row(v)
            if mask.any():
                models[v] = fit_variable(vals[mask], history.n_cases, cfg)
        return cls(models, history.n_cases, cfg)

    @property
    def eligible(self) -> list[VariableKey]:
        return [v for v, m in self.models.items() if m.eligible]

    def detect(self, case: PlanCase, top_n: int | None = None) -> list[UnivariateFinding]:
        top_n = self.cfg.top_n if top_n is None else top_n
        aa, a = [], []
        for v, x in case.observations.items():
            m = self.models.get(v)
            if m is None or not m.eligible:
                continue
            score, kind = ecod_prime_score(m, x, self.cfg)
            f = UnivariateFinding(v, x, score, kind, m.n_train, m.min_sample, m.max_sample)
            (aa if kind is Kind.AA else a).append(f)
        order = lambda f: (-f.score, str(f.variable))  # noqa: E731
        aa.sort(key=order)
        a.sort(key=order)
        return aa + a[:top_n]


def detect_univariate(history: HistoryMatrix, case: PlanCase, cfg: EcodConfig = EcodConfig()) -> list[UnivariateFinding]:
    """Fit on ``history`` and score ``case``: all AA findings, then the top A findings."""
    return EcodModel.fit(history, cfg).detect(case)
