"""Bivariate scoring: regression-residual detector, Gaussian-density detector,
and the four-region classification of their flags.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegeneratePair, SingularCovariance
from .pair_select import PairModel, pair_seed
from .plan_store import PlanCase, VariableKey

REG_EPS = 1e-12
REG_LAMBDA = 1e-9


class RegionLabel(str, enum.Enum):
    NonAnomalous = "NonAnomalous"
    Significant = "Significant"
    Disproportionate = "Disproportionate"
    SuezType = "SuezType"


@dataclass(frozen=True)
class MvsConfig:
    n_samples: int = 1500
    levels: tuple[float, ...] = (0.01, 0.05)
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 100:
            raise ValueError("n_samples must be at least 100")
        if not all(0.0 < lv < 1.0 for lv in self.levels):
            raise ValueError("cutoff levels must lie in (0, 1)")


def residual(model: PairModel, x: float, y: float) -> float:
    """Centered residual ``y - (a x + b) - e_bar``."""
    return y - (model.a * x + model.b) - model.e_bar


def linreg_score(model: PairModel, x: float, y: float) -> float:
    """Gaussian density of the centered residual; lower means more anomalous."""
    if model.degenerate or model.s_e2 <= 0.0:
        raise DegeneratePair(model.key)
    r = residual(model, x, y)
    return math.exp(-r * r / (2.0 * model.s_e2)) / math.sqrt(2.0 * math.pi * model.s_e2)


def _degenerate_tol(model: PairModel, x: float) -> float:
    return 1e-9 * (1.0 + abs(model.a * x) + abs(model.b))


def linreg_flag(model: PairModel, x: float, y: float) -> bool:
    r = abs(residual(model, x, y))
    if model.degenerate:
        return r > max(model.linreg_band, _degenerate_tol(model, x))
    return r > model.linreg_band


def regularized_covariance(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    tr = float(np.trace(V))
    if not np.all(np.isfinite(V)) or tr <= 0.0:
        raise SingularCovariance("covariance has no positive variance")
    if np.linalg.det(V) < REG_EPS * tr * tr:
        V = V + REG_LAMBDA * tr * np.eye(2)
        if np.linalg.det(V) < REG_EPS * (REG_LAMBDA * tr) ** 2:
            raise SingularCovariance("covariance singular after regularization")
    return V


@dataclass
class _Gauss:
    mu: np.ndarray
    V: np.ndarray
    prec: np.ndarray
    norm: float

    @classmethod
    def of(cls, model: PairModel) -> "_Gauss":
        V = regularized_covariance(model.V)
        return cls(np.asarray(model.mu, float), V, np.linalg.inv(V), 1.0 / (2.0 * math.pi * math.sqrt(np.linalg.det(V))))

    def mahalanobis2(self, pts: np.ndarray) -> np.ndarray:
        d = np.atleast_2d(pts) - self.mu
        return np.einsum("ni,ij,nj->n", d, self.prec, d)

    def density(self, pts: np.ndarray) -> np.ndarray:
        return self.norm * np.exp(-0.5 * self.mahalanobis2(pts))


def mvs_score(model: PairModel, x: float, y: float) -> float:
    """Bivariate normal density N(mu, V) at (x, y)."""
    return float(_Gauss.of(model).density(np.array([[x, y]]))[0])


def mvs_cutoff_density(model: PairModel, cfg: MvsConfig, rng: np.random.Generator | None = None) -> dict[float, float]:
    """Density thresholds from Monte-Carlo draws of the fitted Gaussian.

    ``threshold[level]`` is the empirical ``level``-quantile of the sampled
    densities, so that fraction of draws scores below it.
    """
    g = _Gauss.of(model)
    if rng is None:
        rng = np.random.default_rng(pair_seed(cfg.seed, model.x_var, model.y_var))
    L = np.linalg.cholesky(g.V)
    pts = g.mu + rng.standard_normal((cfg.n_samples, 2)) @ L.T
    dens = g.density(pts)
    return {float(lv): float(np.quantile(dens, lv)) for lv in cfg.levels}


def attach_cutoffs(model: PairModel, cfg: MvsConfig) -> PairModel:
    try:
        model.mvs_density_cutoffs = mvs_cutoff_density(model, cfg)
        model.degenerate_mvs = False
    except SingularCovariance:
        model.mvs_density_cutoffs = {}
        model.degenerate_mvs = True
    return model


def mvs_flag(model: PairModel, x: float, y: float, level: float = 0.01) -> bool:
    if model.degenerate_mvs:
        return False
    try:
        threshold = model.mvs_density_cutoffs[level]
    except KeyError:
        raise KeyError(f"no density cutoff at level {level} for {model.key}") from None
    return mvs_score(model, x, y) < threshold


_TRUTH_TABLE = {
    (True, True): RegionLabel.Significant,
    (True, False): RegionLabel.Disproportionate,
    (False, True): RegionLabel.SuezType,
    (False, False): RegionLabel.NonAnomalous,
}


def classify(linreg_flagged: bool, mvs_flagged: bool) -> RegionLabel:
    return _TRUTH_TABLE[(bool(linreg_flagged), bool(mvs_flagged))]


@dataclass(frozen=True)
class BivariateFinding:
    x_var: VariableKey
    y_var: VariableKey
    x_value: float
    y_value: float
    linreg_score: float
    mvs_score: float
    linreg_flag: bool
    mvs_flag: bool
    label: RegionLabel = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "label", classify(self.linreg_flag, self.mvs_flag))

    @property
    def pair(self) -> tuple[VariableKey, VariableKey]:
        return (self.x_var, self.y_var)


def score_pair(model: PairModel, x: float, y: float, level: float = 0.01) -> BivariateFinding:
    """Both scores and flags for one observation, whatever its label."""
    lflag = linreg_flag(model, x, y)
    if model.degenerate:
        # exact historical relation: any visible departure is maximal
        lscore = 0.0 if lflag else math.inf
    else:
        lscore = linreg_score(model, x, y)
    if model.degenerate_mvs:
        mscore, mflag = math.nan, False
    else:
        mscore = mvs_score(model, x, y)
        mflag = mvs_flag(model, x, y, level)
    return BivariateFinding(model.x_var, model.y_var, x, y, lscore, mscore, lflag, mflag)


def detect_bivariate(models: Sequence[PairModel], case: PlanCase, level: float = 0.01) -> list[BivariateFinding]:
    """Anomalous pair findings for ``case``, worst (lowest density) first.

    Pairs with a member missing from the case are skipped.
    """
    out = []
    for m in models:
        x = case.observations.get(m.x_var)
        y = case.observations.get(m.y_var)
        if x is None or y is None:
            continue
        f = score_pair(m, x, y, level)
        if f.label is not RegionLabel.NonAnomalous:
            out.append(f)

    def order(f):
        ms = math.inf if math.isnan(f.mvs_score) else f.mvs_score
        return (ms, f.linreg_score, str(f.x_var), str(f.y_var))

    out.sort(key=order)
    return out
