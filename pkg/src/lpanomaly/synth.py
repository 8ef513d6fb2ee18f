"""Synthetic plan histories from a perturbed toy LP, plus labeled injections."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, InfeasibleScenario, UnknownTarget
from .lp_core import LpProblem, solve
from .plan_store import Category, HistoryMatrix, PlanCase, VariableKey

OBJECTIVE_KEY = VariableKey(Category.MaterialBalance, "ALL", "plan", "objective")


@dataclass(frozen=True)
class Perturbation:
    """Relative uniform noise in ``(-noise, noise)``, optionally on top of a link.

    A linked parameter starts from ``scale * value(link) + offset`` where the
    linked value is already perturbed, which produces exact pass-through
    relations when ``noise`` is zero.
    """

    noise: float = 0.0
    link: str | None = None
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not -1.0 < self.noise < 1.0:
            raise ConfigError(f"noise {self.noise} outside (-1, 1)")


@dataclass
class ScenarioConfig:
    problem: LpProblem
    col_keys: list[tuple[Category, str, str]]
    row_keys: list[tuple[Category, str, str]]
    perturb: dict[str, Perturbation] = field(default_factory=dict)
    n_cases: int = 100
    seed: int = 0
    start_period: str = "2016-01"
    max_retries: int = 50
    name: str = "scenario"

    def __post_init__(self):
        names = {f"c:{n}" for n in self.problem.col_names} | {f"b:{n}" for n in self.problem.row_names}
        for target, pert in self.perturb.items():
            if target not in names:
                raise ConfigError(f"perturbation target {target!r} is not a problem parameter")
            if pert.link is not None and pert.link not in names:
                raise ConfigError(f"link {pert.link!r} is not a problem parameter")
        self._order = _link_order(self.perturb)
        keys = [str(k) for k in self.recorded_keys()]
        if len(keys) != len(set(keys)):
            raise ConfigError("scenario maps two recorded quantities onto the same variable key")

    def recorded_keys(self) -> list[VariableKey]:
        p = self.problem
        keys = []
        for j, (cat, site, mat) in enumerate(self.col_keys):
            keys += [VariableKey(cat, site, mat, "activity"), VariableKey(cat, site, mat, "dj")]
            if p.c[j] != 0 or f"c:{p.col_names[j]}" in self.perturb:
                keys.append(VariableKey(cat, site, mat, "price"))
        for i, (cat, site, mat) in enumerate(self.row_keys):
            keys.append(VariableKey(cat, site, mat, "marginal_value"))
            if p.b[i] != 0 or f"b:{p.row_names[i]}" in self.perturb:
                keys.append(VariableKey(cat, site, mat, "limit"))
        keys.append(OBJECTIVE_KEY)
        return keys

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioConfig":
        try:
            cols = d["problem"]["columns"]
            rows = d["problem"]["rows"]
            col_names = [c["name"] for c in cols]
            ci = {n: j for j, n in enumerate(col_names)}
            A = np.zeros((len(rows), len(cols)))
            for i, r in enumerate(rows):
                for name, coef in r["coefs"].items():
                    A[i, ci[name]] = float(coef)
            problem = LpProblem(
                A, [float(r["b"]) for r in rows], [float(c["c"]) for c in cols],
                [r["name"] for r in rows], col_names,
            )

            def key(spec):
                return (Category(spec["category"]), str(spec["site"]), str(spec["material"]))

            perturb = {t: Perturbation(**p) for t, p in d.get("perturb", {}).items()}
            return cls(
                problem,
                [key(c["key"]) for c in cols],
                [key(r["key"]) for r in rows],
                perturb,
                n_cases=int(d.get("n_cases", 100)),
                seed=int(d.get("seed", 0)),
                start_period=str(d.get("start_period", "2016-01")),
                max_retries=int(d.get("max_retries", 50)),
                name=str(d.get("name", "scenario")),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"bad scenario config: {err!r}") from None


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read scenario {path}: {err}") from None
    return ScenarioConfig.from_dict(d)


def default_scenario(**overrides) -> ScenarioConfig:
    text = resources.files("lpanomaly").joinpath("data/default_scenario.json").read_text(encoding="utf-8")
    d = json.loads(text)
    d.update(overrides)
    return ScenarioConfig.from_dict(d)


def _link_order(perturb: Mapping[str, Perturbation]) -> list[str]:
    order, state = [], {}

    def visit(t):
        if state.get(t) == 1:
            raise ConfigError(f"cyclic perturbation link through {t!r}")
        if state.get(t) == 2:
            return
        state[t] = 1
        link = perturb[t].link if t in perturb else None
        if link is not None:
            visit(link)
        state[t] = 2
        if t in perturb:
            order.append(t)

    for t in sorted(perturb):
        visit(t)
    return order


def _period(start: str, offset: int) -> str:
    y, m = (int(t) for t in start.split("-"))
    k = y * 12 + (m - 1) + offset
    return f"{k // 12:04d}-{k % 12 + 1:02d}"


def perturbed_problem(cfg: ScenarioConfig, rng: np.random.Generator) -> LpProblem:
    p = cfg.problem
    b, c = p.b.copy(), p.c.copy()
    ri = {n: i for i, n in enumerate(p.row_names)}
    ci = {n: j for j, n in enumerate(p.col_names)}

    def get(t):
        kind, name = t.split(":", 1)
        return c[ci[name]] if kind == "c" else b[ri[name]]

    def put(t, v):
        kind, name = t.split(":", 1)
        if kind == "c":
            c[ci[name]] = v
        else:
            b[ri[name]] = v

    for t in cfg._order:
        pert = cfg.perturb[t]
        base = pert.scale * get(pert.link) + pert.offset if pert.link else get(t)
        u = rng.uniform(-pert.noise, pert.noise) if pert.noise else 0.0
        put(t, base * (1.0 + u))
    return LpProblem(p.A.copy(), b, c, list(p.row_names), list(p.col_names))


def solved_case(cfg: ScenarioConfig, problem: LpProblem, case_id: str, period: str) -> PlanCase | None:
    sol = solve(problem)
    if not sol.optimal:
        return None
    pc = PlanCase(case_id, period)
    for j, (cat, site, mat) in enumerate(cfg.col_keys):
        pc.add(VariableKey(cat, site, mat, "activity"), sol.x[j])
        pc.add(VariableKey(cat, site, mat, "dj"), sol.dj[j])
        if cfg.problem.c[j] != 0 or f"c:{problem.col_names[j]}" in cfg.perturb:
            pc.add(VariableKey(cat, site, mat, "price"), problem.c[j])
    for i, (cat, site, mat) in enumerate(cfg.row_keys):
        pc.add(VariableKey(cat, site, mat, "marginal_value"), sol.y[i])
        if cfg.problem.b[i] != 0 or f"b:{problem.row_names[i]}" in cfg.perturb:
            pc.add(VariableKey(cat, site, mat, "limit"), problem.b[i])
    pc.add(OBJECTIVE_KEY, sol.objective)
    return pc


def generate_cases(cfg: ScenarioConfig) -> list[PlanCase]:
    """One solved plan case per perturbation draw, each with its own seed stream."""
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_cases)
    cases = []
    for k, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        case_id = f"case{k + 1:04d}"
        for _ in range(cfg.max_retries):
            pc = solved_case(cfg, perturbed_problem(cfg, rng), case_id, _period(cfg.start_period, k))
            if pc is not None:
                cases.append(pc)
                break
        else:
            raise InfeasibleScenario(f"{case_id}: no solvable draw in {cfg.max_retries} tries")
    return cases


def generate_history(cfg: ScenarioConfig) -> HistoryMatrix:
    return HistoryMatrix.from_cases(generate_cases(cfg))


# -- injections -------------------------------------------------------------------


class InjectionKind(str, enum.Enum):
    ScaleValue = "ScaleValue"
    BreakLinearRelation = "BreakLinearRelation"
    ShiftPairJointly = "ShiftPairJointly"
    DropValue = "DropValue"


EXPECTED_LABEL = {
    InjectionKind.ScaleValue: "Univariate",
    InjectionKind.BreakLinearRelation: "Disproportionate",
    InjectionKind.ShiftPairJointly: "SuezType",
    InjectionKind.DropValue: "Absent",
}


@dataclass(frozen=True)
class InjectionSpec:
    kind: InjectionKind
    target: tuple[VariableKey, ...]
    magnitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", InjectionKind(self.kind))
        t = self.target if isinstance(self.target, tuple) else (self.target,)
        object.__setattr__(self, "target", t)
        pair_kinds = (InjectionKind.BreakLinearRelation, InjectionKind.ShiftPairJointly)
        if len(t) != (2 if self.kind in pair_kinds else 1):
            raise UnknownTarget(f"{self.kind.value} needs {'a pair' if self.kind in pair_kinds else 'one variable'}")
        if self.kind is not InjectionKind.DropValue and self.magnitude == 0:
            raise ValueError("magnitude must be nonzero")

    @classmethod
    def from_dict(cls, d: Mapping) -> "InjectionSpec":
        t = d["target"]
        t = (t,) if isinstance(t, str) else tuple(t)
        return cls(InjectionKind(d["kind"]), tuple(VariableKey.parse(s) for s in t), float(d.get("magnitude", 0.0)))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": [str(v) for v in self.target], "magnitude": self.magnitude}


@dataclass(frozen=True)
class GroundTruth:
    case_id: str
    spec: InjectionSpec
    expected: str
    original: tuple[float | None, ...]
    injected: tuple[float | None, ...]

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            **self.spec.to_dict(),
            "expected": self.expected,
            "original": list(self.original),
            "injected": list(self.injected),
        }


def _line(history: HistoryMatrix, u: VariableKey, v: VariableKey):
    xu, mu = history.row(u)
    xv, mv = history.row(v)
    both = mu & mv
    x, y = xu[both], xv[both]
    if x.size < 2 or np.ptp(x) == 0:
        raise UnknownTarget(f"no usable historical relation for {u}~{v}")
    a, b = np.polyfit(x, y, 1)
    e = float(np.mean(y - (a * x + b)))
    return float(a), float(b), e, x, y


def inject(case: PlanCase, spec: InjectionSpec, history: HistoryMatrix | None = None, case_id: str | None = None) -> tuple[PlanCase, GroundTruth]:
    """Apply ``spec`` to a copy of ``case``; every untouched cell is kept as is.

    ``ScaleValue`` multiplies the value.  ``BreakLinearRelation`` holds x and
    sets y ``magnitude`` historical standard deviations of y off the fitted
    line.  ``ShiftPairJointly`` puts x ``magnitude`` standard deviations of x
    away from its historical mean and y on the line.  ``DropValue`` removes the
    observation.  Pair kinds need the training ``history``.
    """
    for v in spec.target:
        if v not in case.observations:
            raise UnknownTarget(str(v))
    out = PlanCase(case_id or case.case_id, case.period, dict(case.observations))
    before = tuple(case.observations.get(v) for v in spec.target)
    if spec.kind is InjectionKind.ScaleValue:
        (v,) = spec.target
        out.observations[v] = case.observations[v] * spec.magnitude
    elif spec.kind is InjectionKind.DropValue:
        del out.observations[spec.target[0]]
    else:
        if history is None:
            raise UnknownTarget("pair injections need the historical data")
        u, v = spec.target
        a, b, e, x, y = _line(history, u, v)
        if spec.kind is InjectionKind.BreakLinearRelation:
            xv = case.observations[u]
            yv = a * xv + b + e + spec.magnitude * float(np.std(y, ddof=1))
        else:
            xv = float(np.mean(x)) + spec.magnitude * float(np.std(x, ddof=1))
            yv = a * xv + b + e
        out.observations[u] = float(xv)
        out.observations[v] = float(yv)
    after = tuple(out.observations.get(v) for v in spec.target)
    return out, GroundTruth(out.case_id, spec, EXPECTED_LABEL[spec.kind], before, after)


def load_injections(path: str | Path) -> list[tuple[InjectionSpec, int]]:
    """Injection file: JSON list of ``{kind, target, magnitude, base_case}``."""
    try:
        items = json.loads(Path(path).read_text(encoding="utf-8"))
        return [(InjectionSpec.from_dict(d), int(d.get("base_case", 0))) for d in items]
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as err:
        raise ConfigError(f"bad injection file {path}: {err}") from None
