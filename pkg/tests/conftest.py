import numpy as np
import pytest

from lpanomaly.plan_store import Category, HistoryMatrix, PlanCase, VariableKey


def key(material, attribute="value", category=Category.Sales, site="S1"):
    return VariableKey(category, site, material, attribute)


def history_from_columns(columns, periods=None):
    """Build a history from {VariableKey: list of value-or-None}, one entry per case."""
    n = len(next(iter(columns.values())))
    cases = []
    for j in range(n):
        pc = PlanCase(f"c{j:04d}", periods[j] if periods else f"2020-{j % 12 + 1:02d}")
        for k, vals in columns.items():
            if vals[j] is not None:
                pc.add(k, vals[j])
        cases.append(pc)
    return HistoryMatrix.from_cases(cases, columns)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
