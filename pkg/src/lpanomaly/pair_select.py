"""Pair selection: group pre-filter, penalized Kendall matrix, spanning tree,
correlation threshold, and per-pair parameter fitting.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import (
    InsufficientJointSamples,
    LengthMismatch,
    SingularFit,
    UnknownGroup,
)
from .plan_store import HistoryMatrix, VariableKey

KEY_FIELDS = ("category", "site", "material", "attribute")


# -- step 1: expert groups ----------------------------------------------------


@dataclass(frozen=True)
class GroupPattern:
    """Glob patterns on key components; an omitted component matches anything."""

    category: str = "*"
    site: str = "*"
    material: str = "*"
    attribute: str = "*"

    def matches(self, v: VariableKey) -> bool:
        return (
            fnmatch.fnmatchcase(v.category.value, self.category)
            and fnmatch.fnmatchcase(v.site, self.site)
            and fnmatch.fnmatchcase(v.material, self.material)
            and fnmatch.fnmatchcase(v.attribute, self.attribute)
        )


@dataclass
class PairGroupConfig:
    groups: dict[str, list[GroupPattern]] = field(default_factory=dict)
    allowed: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        for g, h in self.allowed:
            for name in (g, h):
                if name not in self.groups:
                    raise UnknownGroup(name)

    def members(self, name: str, variables: Iterable[VariableKey]) -> list[VariableKey]:
        pats = self.groups[name]
        return [v for v in variables if any(p.matches(v) for p in pats)]

    @classmethod
    def from_dict(cls, d: Mapping) -> "PairGroupConfig":
        groups = {}
        for name, pats in d.get("groups", {}).items():
            if isinstance(pats, Mapping):
                pats = [pats]
            groups[name] = [GroupPattern(**{k: str(p[k]) for k in KEY_FIELDS if k in p}) for p in pats]
        allowed = [tuple(pair) for pair in d.get("allowed", [])]
        for pair in allowed:
            if len(pair) != 2:
                raise UnknownGroup(f"allowed product must name two groups: {pair!r}")
        return cls(groups, allowed)

    def to_dict(self) -> dict:
        return {
            "groups": {
                name: [{k: getattr(p, k) for k in KEY_FIELDS} for p in pats]
                for name, pats in sorted(self.groups.items())
            },
            "allowed": [list(p) for p in self.allowed],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def ordered(u: VariableKey, v: VariableKey) -> tuple[VariableKey, VariableKey]:
    return (u, v) if str(u) < str(v) else (v, u)


def candidate_pairs_from_groups(variables: Sequence[VariableKey], cfg: PairGroupConfig) -> list[tuple[VariableKey, VariableKey]]:
    """Unordered pairs drawn from the allowed group products, canonical order."""
    out = set()
    for g, h in cfg.allowed:
        if g not in cfg.groups or h not in cfg.groups:
            raise UnknownGroup(g if g not in cfg.groups else h)
        gm = cfg.members(g, variables)
        hm = gm if g == h else cfg.members(h, variables)
        for u in gm:
            for v in hm:
                if u != v:
                    out.add(ordered(u, v))
    return sorted(out, key=lambda p: (str(p[0]), str(p[1])))


# -- step 2: Kendall matrix, spanning tree, threshold ---------------------------


def kendall_tau_flagged(x: Sequence[float], y: Sequence[float]) -> tuple[float, bool]:
    """Kendall tau-b and an all-tied flag (tau is 0 when either side is constant)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"lengths {x.shape} and {y.shape} differ")
    if x.size < 2:
        raise LengthMismatch("kendall tau needs at least two observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return 0.0, True
    tau = stats.kendalltau(x, y, variant="b").statistic
    return float(tau), False


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    return kendall_tau_flagged(x, y)[0]


@dataclass
class PenalizedKendallMatrix:
    variables: list[VariableKey]
    raw: np.ndarray  # tau-b on mean-imputed columns
    tau: np.ndarray  # raw scaled by penalties(i) * penalties(j)
    penalties: np.ndarray
    computed: np.ndarray  # mask of entries actually evaluated

    def entry(self, u: VariableKey, v: VariableKey) -> float:
        i, j = self.variables.index(u), self.variables.index(v)
        return float(self.tau[i, j])


def imputed_column(h: HistoryMatrix, v: VariableKey) -> tuple[np.ndarray, int]:
    """Column with missing cells set to the present-value mean; returns (column, missing count)."""
    vals, mask = h.row(v)
    col = np.array(vals, dtype=float)
    s = int((~mask).sum())
    col[~mask] = float(vals[mask].mean()) if mask.any() else 0.0
    return col, s


def penalized_matrix(h: HistoryMatrix, pairs: Sequence[tuple[VariableKey, VariableKey]]) -> PenalizedKendallMatrix:
    variables = sorted({v for p in pairs for v in p}, key=str)
    idx = {v: i for i, v in enumerate(variables)}
    n = h.n_cases
    cols, pen = {}, np.zeros(len(variables))
    for v in variables:
        cols[v], s = imputed_column(h, v)
        pen[idx[v]] = np.sqrt((n - s) / n)
    k = len(variables)
    raw = np.zeros((k, k))
    computed = np.zeros((k, k), dtype=bool)
    np.fill_diagonal(raw, 1.0)
    for u, v in pairs:
        i, j = idx[u], idx[v]
        t = kendall_tau(cols[u], cols[v])
        raw[i, j] = raw[j, i] = t
        computed[i, j] = computed[j, i] = True
    tau = raw * np.outer(pen, pen)
    return PenalizedKendallMatrix(variables, raw, tau, pen, computed)


@dataclass(frozen=True)
class CandidatePair:
    x_var: VariableKey
    y_var: VariableKey
    weight: float  # |penalized tau|
    tau: float = 0.0  # signed penalized tau

    def __post_init__(self):
        if not str(self.x_var) < str(self.y_var):
            raise ValueError("candidate pair must be in canonical order")


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def max_weight_spanning_tree(
    variables: Sequence[VariableKey],
    weights: np.ndarray,
    edges: Iterable[tuple[VariableKey, VariableKey]] | None = None,
) -> list[CandidatePair]:
    """Kruskal on |weights| over ``edges`` (complete graph when omitted).

    Returns a maximum-weight spanning forest, one tree per connected
    component.  Equal weights are broken by the smaller canonical pair.
    """
    variables = list(variables)
    idx = {v: i for i, v in enumerate(variables)}
    if edges is None:
        edges = combinations(variables, 2)
    cand = []
    for u, v in edges:
        u, v = ordered(u, v)
        w = float(weights[idx[u], idx[v]])
        cand.append((-abs(w), str(u), str(v), u, v, w))
    cand.sort(key=lambda e: e[:3])
    ds = _DisjointSet(len(variables))
    tree = []
    for negw, _, _, u, v, w in cand:
        if ds.union(idx[u], idx[v]):
            tree.append(CandidatePair(u, v, -negw, w))
            if len(tree) == len(variables) - 1:
                break
    return tree


def threshold_filter(pairs: Iterable[CandidatePair], K: float) -> list[CandidatePair]:
    if not 0.0 <= K <= 1.0:
        raise ValueError("K must lie in [0, 1]")
    return [p for p in pairs if p.weight >= K]


# -- step 3: per-pair parameters ----------------------------------------------------


@dataclass
class PairModel:
    x_var: VariableKey
    y_var: VariableKey
    a: float
    b: float
    e_bar: float
    s_e2: float
    r2: float
    mu: np.ndarray
    V: np.ndarray
    n_joint: int
    linreg_band: float
    mvs_density_cutoffs: dict[float, float] = field(default_factory=dict)
    degenerate: bool = False  # zero residual variance
    degenerate_mvs: bool = False  # covariance singular even after regularization
    tau: float = 0.0

    @property
    def key(self) -> str:
        return f"{self.x_var}~{self.y_var}"


def joint_samples(h: HistoryMatrix, u: VariableKey, v: VariableKey) -> tuple[np.ndarray, np.ndarray]:
    xu, mu = h.row(u)
    xv, mv = h.row(v)
    both = mu & mv
    return np.array(xu[both]), np.array(xv[both])


def pair_seed(seed: int, x_var: VariableKey, y_var: VariableKey) -> np.random.SeedSequence:
    """Seed stream for one pair, independent of training order."""
    digest = hashlib.sha256(f"{x_var}~{y_var}".encode()).digest()
    return np.random.SeedSequence([int(seed), int.from_bytes(digest[:8], "little")])


def fit_pair_model(
    x: np.ndarray,
    y: np.ndarray,
    x_var: VariableKey,
    y_var: VariableKey,
    *,
    min_joint: int = 5,
    band_quantile: float = 0.99,
) -> PairModel:
    """Regression and Gaussian parameters from joint-present samples.

    Cutoff densities are left empty; see :func:`fit_pair_models`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < max(min_joint, 2):
        raise InsufficientJointSamples(f"{x_var}~{y_var}: {n} joint samples < {min_joint}")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx, syy, sxy = float(dx @ dx), float(dy @ dy), float(dx @ dy)
    if sxx == 0.0:
        raise SingularFit(f"{x_var}~{y_var}: all x values are equal")
    a = sxy / sxx
    b = float(ym - a * xm)
    resid = y - (a * x + b)
    e_bar = float(resid.mean())
    s_e2 = float(((resid - e_bar) ** 2).sum() / (n - 1))
    # residuals at rounding level count as an exact fit
    degenerate = s_e2 <= 1e-24 * max(syy / (n - 1), np.finfo(float).tiny)
    if degenerate:
        s_e2 = 0.0
    r2 = 1.0 if syy == 0.0 else min(1.0, sxy * sxy / (sxx * syy))
    band = float(np.quantile(np.abs(resid - e_bar), band_quantile))
    mu = np.array([xm, ym])
    V = np.cov(np.vstack([x, y]), ddof=1)
    V = (V + V.T) / 2
    return PairModel(x_var, y_var, a, b, e_bar, s_e2, float(r2), mu, V, n, band, degenerate=degenerate)


def fit_pair_models(
    h: HistoryMatrix,
    pairs: Sequence[CandidatePair],
    mvs_cfg=None,
    *,
    min_joint: int = 5,
    band_quantile: float = 0.99,
    skip_invalid: bool = False,
    skipped: list | None = None,
) -> list[PairModel]:
    """Fit every pair; cutoff densities are computed when ``mvs_cfg`` is given.

    With ``skip_invalid`` pairs lacking joint samples or with constant x are
    dropped (and appended to ``skipped`` as ``(pair, error)``) instead of
    raising.
    """
    from .bivariate import attach_cutoffs

    models = []
    for p in pairs:
        x, y = joint_samples(h, p.x_var, p.y_var)
        try:
            m = fit_pair_model(x, y, p.x_var, p.y_var, min_joint=min_joint, band_quantile=band_quantile)
        except (InsufficientJointSamples, SingularFit) as err:
            if not skip_invalid:
                raise
            if skipped is not None:
                skipped.append((p, err))
            continue
        m.tau = p.tau
        if mvs_cfg is not None:
            attach_cutoffs(m, mvs_cfg)
        models.append(m)
    return models


@dataclass
class SelectionReport:
    pre_filter: int
    post_tree: int
    post_threshold: int
    fitted: int
    skipped: int


def select_and_fit(
    h: HistoryMatrix,
    groups: PairGroupConfig,
    K: float = 0.4,
    mvs_cfg=None,
    *,
    variables: Sequence[VariableKey] | None = None,
    min_joint: int = 5,
    band_quantile: float = 0.99,
) -> tuple[list[PairModel], SelectionReport]:
    """Run the full selection pipeline on ``h``."""
    variables = list(h.variables if variables is None else variables)
    cands = candidate_pairs_from_groups(variables, groups)
    if not cands:
        return [], SelectionReport(0, 0, 0, 0, 0)
    pkm = penalized_matrix(h, cands)
    tree = max_weight_spanning_tree(pkm.variables, pkm.tau, cands)
    kept = threshold_filter(tree, K)
    skipped: list = []
    models = fit_pair_models(
        h, kept, mvs_cfg, min_joint=min_joint, band_quantile=band_quantile,
        skip_invalid=True, skipped=skipped,
    )
    return models, SelectionReport(len(cands), len(tree), len(kept), len(models), len(skipped))
