import numpy as np
import pytest
from scipy.optimize import linprog

from lpanomaly.lp_core import (
    Degenerate,
    LpFormatError,
    LpProblem,
    Status,
    break_even_value,
    format_problem,
    incremental_value,
    marginal_row_value,
    parse_problem,
    solve,
    verify_break_even,
)

from oracles import vertex_enumeration_max


def random_problem(rng, m, n):
    A = rng.uniform(0.1, 2.0, (m, n)) * (rng.random((m, n)) < 0.8)
    A[:, A.sum(axis=0) == 0] = 1.0
    return LpProblem(A, rng.uniform(1, 10, m), rng.uniform(-1, 5, n))


def test_box():
    sol = solve(LpProblem(np.eye(2), [3.0, 2.0], [1.0, 1.0]))
    assert sol.optimal and sol.objective == 5.0
    np.testing.assert_array_equal(sol.x, [3.0, 2.0])
    np.testing.assert_array_equal(sol.y, [1.0, 1.0])


def test_zero_rhs_nonpositive_costs():
    sol = solve(LpProblem(np.ones((2, 3)), np.zeros(2), [-1.0, -2.0, 0.0]))
    assert sol.optimal and sol.objective == 0.0
    assert np.all(sol.x == 0.0) and sol.primal_degenerate


def test_infeasible_and_unbounded():
    assert solve(LpProblem([[1.0], [-1.0]], [1.0, -2.0], [1.0])).status is Status.Infeasible
    assert solve(LpProblem([[-1.0, 1.0]], [1.0], [1.0, 0.0])).status is Status.Unbounded


def test_negative_rhs_phase_one():
    # x >= 2 written as -x <= -2, with x <= 5
    sol = solve(LpProblem([[-1.0], [1.0]], [-2.0, 5.0], [-1.0]))
    assert sol.optimal and sol.x[0] == pytest.approx(2.0)
    assert sol.y[0] == pytest.approx(1.0)


def test_vertex_enumeration_oracle(rng):
    for _ in range(20):
        p = random_problem(rng, 6, 8)
        sol = solve(p)
        assert sol.objective == pytest.approx(vertex_enumeration_max(p.A, p.b, p.c), rel=1e-9, abs=1e-9)


def test_matches_highs(rng):
    for _ in range(50):
        m, n = rng.integers(1, 10, 2)
        p = random_problem(rng, m, n)
        ref = linprog(-p.c, A_ub=p.A, b_ub=p.b, method="highs")
        sol = solve(p)
        assert sol.objective == pytest.approx(-ref.fun, rel=1e-9, abs=1e-9)


def test_duality_and_complementary_slackness(rng):
    for _ in range(50):
        p = random_problem(rng, 5, 7)
        s = solve(p)
        assert abs(p.c @ s.x - p.b @ s.y) < 1e-9
        assert np.all(s.y >= -1e-12) and np.all(s.dj <= 1e-12)
        assert np.all(np.abs(s.y * s.slack(p)) < 1e-9)
        assert np.all(np.abs(s.x * s.dj) < 1e-9)
        assert np.all(s.dj[list(s.basic_cols)] == 0.0)


def test_finite_difference_marginal(rng):
    checked = 0
    while checked < 10:
        p = random_problem(rng, 4, 6)
        s = solve(p)
        if s.degenerate:
            continue
        for i in range(4):
            assert marginal_row_value(p, i) == pytest.approx(s.y[i], abs=1e-6)
        checked += 1


def test_slack_row_has_zero_marginal():
    p = LpProblem([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [3.0, 2.0, 100.0], [1.0, 1.0])
    s = solve(p)
    assert s.y[2] == 0.0 and 2 in s.basic_rows
    assert marginal_row_value(p, 2) == 0.0


def test_incremental_value():
    assert incremental_value([50, 10, 2], 4) == 58


def test_break_even():
    # column 1 priced 10 has D = -3 at the optimum; break-even 13
    p = LpProblem([[1.0, 1.0]], [5.0], [13.0, 10.0])
    s = solve(p)
    assert s.dj[1] == -3.0
    assert break_even_value(p, 1, s) == 13.0


def test_break_even_resolve(rng):
    checked = 0
    while checked < 10:
        p = random_problem(rng, 4, 6)
        s = solve(p)
        nb = [j for j in range(6) if j not in s.basic_cols]
        if s.degenerate or not nb:
            continue
        assert verify_break_even(p, nb[0]) < 1e-9
        checked += 1


def test_verify_break_even_refuses_degenerate():
    p = LpProblem(np.ones((2, 2)), [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(Degenerate):
        verify_break_even(p, 0)


def test_row_scaling_invariance(rng):
    for _ in range(10):
        p = random_problem(rng, 4, 5)
        k = rng.uniform(0.5, 5.0, 4)
        q = LpProblem(p.A * k[:, None], p.b * k, p.c)
        s, t = solve(p), solve(q)
        assert t.objective == pytest.approx(s.objective, rel=1e-10)
        np.testing.assert_allclose(t.y * k, s.y, atol=1e-10)


def test_file_round_trip(rng):
    p = random_problem(rng, 3, 4)
    p.row_names = ["a", "b", "c"]
    q = parse_problem(format_problem(p))
    np.testing.assert_array_equal(q.A, p.A)
    np.testing.assert_array_equal(q.b, p.b)
    assert q.col_names == p.col_names and q.row_names == p.row_names
    assert format_problem(q) == format_problem(p)


def test_malformed_file():
    with pytest.raises(LpFormatError):
        parse_problem("2 2\n1 1\n1 0 3\n")
    with pytest.raises(LpFormatError):
        parse_problem("1 2\n1 x\n1 0 3\n")
