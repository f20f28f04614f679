import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_lp
from pedaccess.lp import LinearProgram, Status, certify, read_mps, solve_lp, write_mps

METHODS = ("simplex", "highs")


@pytest.mark.parametrize("method", METHODS)
def test_single_bound(method):
    lp = LinearProgram.build([1.0], [[1.0]], ">=", [3.0])
    sol = solve_lp(lp, method=method)
    assert sol.status is Status.OPTIMAL
    assert sol.primal[0] == pytest.approx(3.0)
    assert sol.objective_value == pytest.approx(3.0)


def _transportation():
    # x = (x11, x12, x21, x22); supplies 200, 100 must ship; sinks hold 300 each
    c = [2, 8, 12, 3]
    A = [[1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 1, 0], [0, 1, 0, 1]]
    return LinearProgram.build(c, A, ["==", "==", "<=", "<="], [200, 100, 300, 300])


@pytest.mark.parametrize("method", METHODS)
def test_transportation_cost(method):
    # 700 from exhaustive enumeration of basic solutions (brute_force_lp), frozen
    sol = solve_lp(_transportation(), method=method)
    assert sol.objective_value == pytest.approx(700.0, rel=1e-9)
    assert sol.certificate.ok(1e-9)


def test_transportation_oracle_value():
    lp = _transportation()
    best, _ = brute_force_lp(lp.c, lp.A.toarray(), ["==", "==", "<=", "<="], lp.b, lp.lb, lp.ub)
    assert best == pytest.approx(700.0)


@pytest.mark.parametrize("method", METHODS)
def test_contradictory_rows(method):
    lp = LinearProgram.build([1.0], [[1.0], [1.0]], ["<=", ">="], [1.0, 2.0])
    sol = solve_lp(lp, method=method)
    assert sol.status is Status.INFEASIBLE
    if method == "simplex":
        assert set(sol.infeasible_rows) == {0, 1}


def test_unbounded():
    lp = LinearProgram.build([-1.0, 0.0], [[1.0, -1.0]], "<=", [1.0])
    assert solve_lp(lp, method="simplex").status is Status.UNBOUNDED


def test_malformed_programs_rejected():
    with pytest.raises(ValueError):
        LinearProgram.build([1.0], [[1.0]], "<=", [1.0], lb=[2.0], ub=[1.0])
    with pytest.raises(ValueError):
        LinearProgram.build([np.nan], [[1.0]], "<=", [1.0])
    with pytest.raises(KeyError):
        LinearProgram.build([1.0], [[1.0]], "!=", [1.0])


def _random_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 7))
    A = np.round(rng.uniform(-5, 5, (m, n)), 2)
    x_feas = rng.uniform(0, 3, n)
    senses = list(rng.choice(["<=", ">=", "=="], size=m, p=[0.6, 0.3, 0.1]))
    slack = rng.uniform(0, 2, m)
    b = A @ x_feas + np.where(np.array(senses) == "<=", slack, np.where(np.array(senses) == ">=", -slack, 0.0))
    c = np.round(rng.uniform(-3, 3, n), 2)
    # finite box so every instance has an optimal vertex
    ub = np.full(n, 10.0)
    return c, A, senses, b, np.zeros(n), ub


def test_random_dense_programs_match_vertex_enumeration():
    for seed in range(200):
        c, A, senses, b, lb, ub = _random_lp(seed)
        best, _ = brute_force_lp(c, A, senses, b, lb, ub)
        lp = LinearProgram.build(c, A, senses, b, lb, ub)
        for method in METHODS:
            sol = solve_lp(lp, method=method)
            assert sol.status is Status.OPTIMAL, (seed, method)
            assert sol.objective_value == pytest.approx(best, rel=1e-6, abs=1e-6), (seed, method)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_complementary_slackness(seed):
    c, A, senses, b, lb, ub = _random_lp(seed)
    lp = LinearProgram.build(c, A, senses, b, lb, ub)
    sol = solve_lp(lp, method="simplex")
    cert = certify(lp, sol.primal, sol.dual)
    assert cert.ok(1e-8)
    # y' (Ax - b) vanishes row by row
    assert np.all(np.abs(sol.dual * (lp.A @ sol.primal - lp.b)) <= 1e-7 * (1 + np.abs(lp.b).max()))
    # reduced costs: positive only at the lower bound, negative only at the upper bound
    d = sol.reduced_costs
    at_lo = np.isclose(sol.primal, lb, atol=1e-7)
    at_hi = np.isclose(sol.primal, ub, atol=1e-7)
    assert np.all((d <= 1e-7) | at_lo)
    assert np.all((d >= -1e-7) | at_hi)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 1000.0))
def test_objective_scaling_keeps_support(seed, factor):
    c, A, senses, b, lb, ub = _random_lp(seed)
    base = solve_lp(LinearProgram.build(c, A, senses, b, lb, ub), method="simplex")
    scaled = solve_lp(LinearProgram.build(factor * c, A, senses, b, lb, ub), method="simplex")
    assert scaled.objective_value == pytest.approx(factor * base.objective_value, rel=1e-7, abs=1e-7)
    # nondegenerate optimum: unique, so the argmin itself is unchanged
    d = base.reduced_costs
    basic = ~(np.isclose(base.primal, lb, atol=1e-9) | np.isclose(base.primal, ub, atol=1e-9))
    if np.all(np.abs(d[~basic]) > 1e-6):
        assert np.allclose(base.primal, scaled.primal, atol=1e-7)


def test_mps_round_trip(tmp_path):
    lp = _transportation()
    path = tmp_path / "t.mps"
    write_mps(lp, path)
    back = read_mps(path)
    assert np.allclose(back.A.toarray(), lp.A.toarray())
    assert back.senses == lp.senses
    assert np.allclose(back.b, lp.b) and np.allclose(back.c, lp.c)
    assert solve_lp(back).objective_value == pytest.approx(700.0)
