import json

import numpy as np
import pytest
from scipy.stats import kendalltau

from lpanomaly.errors import ConfigError, InfeasibleScenario, UnknownTarget
from lpanomaly.plan_store import Category, HistoryMatrix, VariableKey
from lpanomaly.synth import (
    OBJECTIVE_KEY,
    InjectionKind,
    InjectionSpec,
    Perturbation,
    ScenarioConfig,
    default_scenario,
    generate_cases,
    inject,
    load_injections,
)

CRUDE_PRICE = VariableKey(Category.Purchase, "S1", "crude", "price")
GAS_PRICE = VariableKey(Category.Sales, "S1", "gasoline", "price")
CDU_LIMIT = VariableKey(Category.Capacity, "S1", "cdu", "limit")


def tiny_scenario(perturb=None, n=10, seed=1):
    d = {
        "problem": {
            "columns": [
                {"name": "make", "c": 3.0, "key": {"category": "Proclim", "site": "S1", "material": "unit"}},
                {"name": "buy", "c": -1.0, "key": {"category": "Purchase", "site": "S1", "material": "feed"}},
            ],
            "rows": [
                {"name": "bal", "b": 0.0, "coefs": {"make": 1.0, "buy": -1.0},
                 "key": {"category": "MaterialBalance", "site": "S1", "material": "feed"}},
                {"name": "cap", "b": 10.0, "coefs": {"make": 1.0},
                 "key": {"category": "Capacity", "site": "S1", "material": "unit"}},
                {"name": "loose", "b": 100.0, "coefs": {"buy": 1.0},
                 "key": {"category": "Bounds", "site": "S1", "material": "feed"}},
            ],
        },
        "perturb": perturb or {},
        "n_cases": n,
        "seed": seed,
    }
    return ScenarioConfig.from_dict(d)


def test_zero_noise_cases_identical():
    cases = generate_cases(tiny_scenario({"b:cap": {"noise": 0.0}}))
    first = cases[0].observations
    assert all(c.observations == first for c in cases)
    assert first[OBJECTIVE_KEY] == 20.0


def test_slack_rows_have_zero_marginal():
    for pc in generate_cases(default_scenario(n_cases=30)):
        assert pc.observations[VariableKey(Category.Bounds, "S1", "crude", "marginal_value")] >= 0
    cases = generate_cases(tiny_scenario({"b:cap": {"noise": 0.2}}))
    for pc in cases:
        assert pc.observations[VariableKey(Category.Bounds, "S1", "feed", "marginal_value")] == 0.0


def test_pass_through_link_is_perfectly_concordant():
    cfg = default_scenario(n_cases=40, perturb={
        "c:buy_crude_S1": {"noise": 0.1},
        "c:sell_gas_S1": {"link": "c:buy_crude_S1", "scale": -1.2, "offset": 5.0},
    })
    h = HistoryMatrix.from_cases(generate_cases(cfg))
    x, y = h.row(CRUDE_PRICE)[0], h.row(GAS_PRICE)[0]
    assert abs(kendalltau(x, y).statistic) == pytest.approx(1.0)
    np.testing.assert_allclose(y, -1.2 * x + 5.0, rtol=1e-12)


def test_recorded_keys_present_every_case():
    cfg = default_scenario(n_cases=10)
    keys = set(cfg.recorded_keys())
    for pc in generate_cases(cfg):
        assert set(pc.observations) == keys


def test_seed_determinism_and_sensitivity():
    a = generate_cases(default_scenario(n_cases=15))
    b = generate_cases(default_scenario(n_cases=15))
    c = generate_cases(default_scenario(n_cases=15, seed=7))
    assert [x.observations for x in a] == [x.observations for x in b]
    assert [x.observations for x in a] != [x.observations for x in c]
    assert [x.period for x in a[:3]] == ["2016-01", "2016-02", "2016-03"]


def test_prefix_stable_when_n_grows():
    short = generate_cases(default_scenario(n_cases=5))
    long = generate_cases(default_scenario(n_cases=12))
    assert [x.observations for x in short] == [x.observations for x in long[:5]]


def test_infeasible_scenario_reports():
    cfg = tiny_scenario()
    cfg.problem.b[1] = -1.0  # make >= 1 impossible with make <= -1
    cfg.max_retries = 3
    with pytest.raises(InfeasibleScenario):
        generate_cases(cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_scenario({"c:nope": {"noise": 0.1}})
    with pytest.raises(ConfigError):
        tiny_scenario({"b:cap": {"link": "b:loose"}, "b:loose": {"link": "b:cap"}})
    with pytest.raises(ConfigError):
        Perturbation(noise=1.5)


@pytest.fixture(scope="module")
def train():
    cases = generate_cases(default_scenario(n_cases=60))
    return cases, HistoryMatrix.from_cases(cases)


def test_scale_value_touches_only_target(train):
    cases, h = train
    new, truth = inject(cases[3], InjectionSpec(InjectionKind.ScaleValue, (CRUDE_PRICE,), 10.0), h, "x")
    diff = {k for k in new.observations if new.observations[k] != cases[3].observations[k]}
    assert diff == {CRUDE_PRICE}
    assert new.observations[CRUDE_PRICE] == 10.0 * cases[3].observations[CRUDE_PRICE]
    assert truth.expected == "Univariate" and truth.case_id == "x"


def test_drop_value(train):
    cases, h = train
    new, truth = inject(cases[0], InjectionSpec(InjectionKind.DropValue, (CDU_LIMIT,)))
    assert CDU_LIMIT not in new.observations and CDU_LIMIT in cases[0].observations
    assert truth.injected == (None,)


def test_break_linear_relation(train):
    cases, h = train
    spec = InjectionSpec(InjectionKind.BreakLinearRelation, (CRUDE_PRICE, GAS_PRICE), 6.0)
    new, truth = inject(cases[5], spec, h)
    x, y = h.row(CRUDE_PRICE)[0], h.row(GAS_PRICE)[0]
    a, b = np.polyfit(x, y, 1)
    assert new.observations[CRUDE_PRICE] == cases[5].observations[CRUDE_PRICE]
    off = new.observations[GAS_PRICE] - (a * new.observations[CRUDE_PRICE] + b)
    assert off == pytest.approx(6.0 * np.std(y, ddof=1), rel=1e-6)
    changed = {k for k in new.observations if new.observations[k] != cases[5].observations[k]}
    assert changed <= {CRUDE_PRICE, GAS_PRICE}
    assert truth.expected == "Disproportionate"


def test_shift_pair_jointly(train):
    cases, h = train
    spec = InjectionSpec(InjectionKind.ShiftPairJointly, (CRUDE_PRICE, GAS_PRICE), 8.0)
    new, truth = inject(cases[1], spec, h)
    x, y = h.row(CRUDE_PRICE)[0], h.row(GAS_PRICE)[0]
    a, b = np.polyfit(x, y, 1)
    xv = new.observations[CRUDE_PRICE]
    assert xv == pytest.approx(x.mean() + 8.0 * x.std(ddof=1))
    assert new.observations[GAS_PRICE] == pytest.approx(a * xv + b, rel=1e-9)
    assert truth.expected == "SuezType"


def test_injection_errors(train):
    cases, h = train
    with pytest.raises(UnknownTarget):
        inject(cases[0], InjectionSpec(InjectionKind.ScaleValue, (VariableKey(Category.Sales, "S9", "x", "price"),), 2.0))
    with pytest.raises(UnknownTarget):
        InjectionSpec(InjectionKind.ShiftPairJointly, (CRUDE_PRICE,), 2.0)
    with pytest.raises(UnknownTarget):
        inject(cases[0], InjectionSpec(InjectionKind.ShiftPairJointly, (CRUDE_PRICE, GAS_PRICE), 2.0))


def test_injection_file(tmp_path):
    items = [
        {"kind": "ScaleValue", "target": str(CRUDE_PRICE), "magnitude": 5, "base_case": 2},
        {"kind": "ShiftPairJointly", "target": [str(CRUDE_PRICE), str(GAS_PRICE)], "magnitude": 3},
    ]
    path = tmp_path / "inj.json"
    path.write_text(json.dumps(items))
    (s1, b1), (s2, b2) = load_injections(path)
    assert (b1, b2) == (2, 0)
    assert s1.target == (CRUDE_PRICE,) and s2.kind is InjectionKind.ShiftPairJointly
    assert InjectionSpec.from_dict(s2.to_dict()) == s2
