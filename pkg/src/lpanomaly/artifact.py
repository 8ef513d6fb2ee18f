"""Training pipeline and the persisted model artifact.

The artifact is one JSON document holding everything detection needs:
per-variable ECOD samples and flags, the selected pairs with their fitted
parameters and density cutoffs, and snapshots of every config used.  Floats
are written with ``repr`` so save/load/save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .bivariate import BivariateFinding, MvsConfig, detect_bivariate
from .ecod import EcodConfig, EcodModel, EcodVariableModel, EmpiricalCdf, Skew, UnivariateFinding
from .errors import ArtifactVersionError, ConfigError, LpAnomalyError
from .pair_select import CandidatePair, PairGroupConfig, PairModel, select_and_fit
from .plan_store import HistoryMatrix, PlanCase, VariableKey

FORMAT_TAG = "lpanomaly-artifact/1"


@dataclass
class TrainConfig:
    ecod: EcodConfig = field(default_factory=EcodConfig)
    mvs: MvsConfig = field(default_factory=MvsConfig)
    K: float = 0.4
    min_joint: int = 5
    band_quantile: float = 0.99
    groups: PairGroupConfig = field(default_factory=PairGroupConfig)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        try:
            mvs = dict(d.get("mvs", {}))
            if "levels" in mvs:
                mvs["levels"] = tuple(float(x) for x in mvs["levels"])
            return cls(
                ecod=EcodConfig(**d.get("ecod", {})),
                mvs=MvsConfig(**mvs),
                K=float(d.get("K", 0.4)),
                min_joint=int(d.get("min_joint", 5)),
                band_quantile=float(d.get("band_quantile", 0.99)),
                groups=PairGroupConfig.from_dict(d),
            )
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad training config: {err}") from None

    def to_dict(self) -> dict:
        return {
            "ecod": asdict(self.ecod),
            "mvs": {"n_samples": self.mvs.n_samples, "levels": list(self.mvs.levels), "seed": self.mvs.seed},
            "K": self.K,
            "min_joint": self.min_joint,
            "band_quantile": self.band_quantile,
            **self.groups.to_dict(),
            "groups_digest": self.groups.digest(),
        }


def load_train_config(path: str | Path | None = None) -> TrainConfig:
    """Read a JSON training config; ``None`` gives the packaged default."""
    try:
        if path is None:
            text = resources.files("lpanomaly").joinpath("data/default_train_config.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return TrainConfig.from_dict(json.loads(text))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read training config {path}: {err}") from None


@dataclass
class ModelArtifact:
    config: TrainConfig
    ecod: EcodModel
    candidates: list[CandidatePair]
    pairs: list[PairModel]
    cases: list[str]
    periods: list[str]
    summary: dict[str, int]
    trained_at: str = ""
    parent_id: str | None = None

    # -- training ------------------------------------------------------------

    @classmethod
    def train(cls, history: HistoryMatrix, config: TrainConfig, *, trained_at: str | None = None, parent_id: str | None = None) -> "ModelArtifact":
        if history.n_cases < 2:
            raise LpAnomalyError(f"training needs at least 2 cases, got {history.n_cases}")
        ecod = EcodModel.fit(history, config.ecod)
        usable = []
        for v in history.variables:
            vals, mask = history.row(v)
            present = vals[mask]
            if present.size >= config.min_joint and np.ptp(present) > 0:
                usable.append(v)
        models, rep = select_and_fit(
            history, config.groups, config.K, config.mvs,
            variables=usable, min_joint=config.min_joint, band_quantile=config.band_quantile,
        )
        candidates = [CandidatePair(m.x_var, m.y_var, abs(m.tau), m.tau) for m in models]
        summary = {
            "variables": len(history.variables),
            "variables_eligible": len(ecod.eligible),
            "pairs_pre_filter": rep.pre_filter,
            "pairs_post_tree": rep.post_tree,
            "pairs_post_threshold": rep.post_threshold,
            "pairs_fitted": rep.fitted,
            "pairs_skipped": rep.skipped,
        }
        periods = [p for p in history.periods if p]
        as_of = max(periods) if periods else ""
        return cls(
            config, ecod, candidates, models, list(history.cases), list(history.periods), summary,
            trained_at=as_of if trained_at is None else trained_at, parent_id=parent_id,
        )

    # -- detection -------------------------------------------------------------

    def detect(self, case: PlanCase, level: float = 0.01) -> tuple[list[UnivariateFinding], list[BivariateFinding]]:
        if level not in self.config.mvs.levels:
            raise LpAnomalyError(f"no precomputed density cutoff at level {level}; have {list(self.config.mvs.levels)}")
        return self.ecod.detect(case), detect_bivariate(self.pairs, case, level)

    def pair(self, x_var: VariableKey, y_var: VariableKey) -> PairModel:
        for m in self.pairs:
            if m.x_var == x_var and m.y_var == y_var:
                return m
        raise KeyError(f"{x_var}~{y_var}")

    # -- persistence -------------------------------------------------------------

    def _content(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "training_window": {
                "cases": list(self.cases),
                "periods": list(self.periods),
            },
            "summary": dict(self.summary),
            "ecod": {
                "n_plans": self.ecod.n_plans,
                "variables": {str(v): _ecod_to_dict(m) for v, m in self.ecod.models.items()},
            },
            "pairs": [_pair_to_dict(m) for m in self.pairs],
        }

    @property
    def artifact_id(self) -> str:
        return hashlib.sha256(_dumps(self._content()).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "artifact_id": self.artifact_id,
            "parent_id": self.parent_id,
            "trained_at": self.trained_at,
            **self._content(),
        }

    def dumps(self) -> str:
        return _dumps(self.to_dict(), indent=1) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "ModelArtifact":
        d = json.loads(text)
        if d.get("format") != FORMAT_TAG:
            raise ArtifactVersionError(f"artifact format {d.get('format')!r}, expected {FORMAT_TAG!r}")
        config = TrainConfig.from_dict(d["config"])
        ecod_models = {VariableKey.parse(k): _ecod_from_dict(v) for k, v in d["ecod"]["variables"].items()}
        ecod = EcodModel(ecod_models, int(d["ecod"]["n_plans"]), config.ecod)
        pairs = [_pair_from_dict(p) for p in d["pairs"]]
        candidates = [CandidatePair(m.x_var, m.y_var, abs(m.tau), m.tau) for m in pairs]
        art = cls(
            config, ecod, candidates, pairs,
            list(d["training_window"]["cases"]), list(d["training_window"]["periods"]),
            dict(d["summary"]), d.get("trained_at", ""), d.get("parent_id"),
        )
        if d.get("artifact_id") != art.artifact_id:
            raise ArtifactVersionError("artifact content does not match its recorded id")
        return art

    @classmethod
    def load(cls, path: str | Path) -> "ModelArtifact":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _dumps(obj: Any, indent: int | None = None) -> str:
    return json.dumps(obj, sort_keys=True, indent=indent, allow_nan=True)


def _ecod_to_dict(m: EcodVariableModel) -> dict:
    return {
        "samples": [float(x) for x in m.cdf.sorted],
        "skew": m.skew.value,
        "eligible": m.eligible,
        "train_std": m.train_std,
        "reason": m.reason,
    }


def _ecod_from_dict(d: Mapping) -> EcodVariableModel:
    return EcodVariableModel(EmpiricalCdf(d["samples"]), Skew(d["skew"]), bool(d["eligible"]), float(d["train_std"]), d.get("reason", ""))


def _pair_to_dict(m: PairModel) -> dict:
    return {
        "x_var": str(m.x_var),
        "y_var": str(m.y_var),
        "a": m.a,
        "b": m.b,
        "e_bar": m.e_bar,
        "s_e2": m.s_e2,
        "r2": m.r2,
        "mu": [float(v) for v in m.mu],
        "V": [[float(v) for v in row] for row in m.V],
        "n_joint": m.n_joint,
        "linreg_band": m.linreg_band,
        "mvs_density_cutoffs": {repr(float(k)): v for k, v in sorted(m.mvs_density_cutoffs.items())},
        "degenerate": m.degenerate,
        "degenerate_mvs": m.degenerate_mvs,
        "tau": m.tau,
    }


def _pair_from_dict(d: Mapping) -> PairModel:
    return PairModel(
        VariableKey.parse(d["x_var"]),
        VariableKey.parse(d["y_var"]),
        float(d["a"]),
        float(d["b"]),
        float(d["e_bar"]),
        float(d["s_e2"]),
        float(d["r2"]),
        np.array(d["mu"], dtype=float),
        np.array(d["V"], dtype=float),
        int(d["n_joint"]),
        float(d["linreg_band"]),
        {float(k): float(v) for k, v in d["mvs_density_cutoffs"].items()},
        degenerate=bool(d["degenerate"]),
        degenerate_mvs=bool(d["degenerate_mvs"]),
        tau=float(d["tau"]),
    )


# -- report writers -------------------------------------------------------------------

UNIVARIATE_COLUMNS = ("variable_key", "observed", "score", "kind", "n_train", "historical_min", "historical_max")
BIVARIATE_COLUMNS = ("x_var", "y_var", "x_value", "y_value", "linreg_score", "mvs_score", "linreg_flag", "mvs_flag", "label")


def _num(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def univariate_rows(findings: list[UnivariateFinding]) -> list[tuple[str, ...]]:
    return [
        (str(f.variable), _num(f.observed), _num(f.score), f.kind.value, str(f.n_train),
         _num(f.historical_min), _num(f.historical_max))
        for f in findings
    ]


def bivariate_rows(findings: list[BivariateFinding]) -> list[tuple[str, ...]]:
    return [
        (str(f.x_var), str(f.y_var), _num(f.x_value), _num(f.y_value), _num(f.linreg_score),
         _num(f.mvs_score), str(f.linreg_flag).lower(), str(f.mvs_flag).lower(), f.label.value)
        for f in findings
    ]
