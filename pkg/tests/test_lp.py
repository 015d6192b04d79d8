import numpy as np
import pytest
from scipy.optimize import linprog

from greencomp.errors import InfeasibleLp, UnboundedLp
from greencomp.lp import (
    BatteryLp,
    LpStatus,
    battery_bounds,
    battery_rows,
    battery_violation,
    dense_simplex,
    project_battery,
    solve_battery_lp,
    stored_energy,
)
from greencomp.model import BatteryParams

TABLE_ROW = BatteryParams(C0=5.0, Cmax=30.0, PbMin=-10.0, PbMax=10.0, varpi=0.95)


def test_trivial_lp():
    res = dense_simplex(np.array([1.0]), bounds=[(0.0, 1.0)])
    assert res.status is LpStatus.OPTIMAL
    assert res.objective == pytest.approx(0.0)


def test_matches_linprog_and_certifies_duality():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, m = 5, 4
        c = rng.standard_normal(n)
        A = rng.standard_normal((m, n))
        x0 = rng.uniform(0, 2, n)
        b = A @ x0 + rng.uniform(0, 1, m)
        A_eq = rng.standard_normal((1, n))
        b_eq = A_eq @ x0
        bounds = [(0.0, 3.0)] * n
        ours = dense_simplex(c, A, b, A_eq, b_eq, bounds)
        ref = linprog(c, A_ub=A, b_ub=b, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        assert ours.status is LpStatus.OPTIMAL
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7)
        assert np.all(A @ ours.x <= b + 1e-9)
        assert np.allclose(A_eq @ ours.x, b_eq, atol=1e-9)
        assert ours.dual_objective == pytest.approx(ours.objective, abs=1e-9)
        stacked = np.vstack([A_eq, A])
        assert np.allclose(c, stacked.T @ ours.duals + ours.reduced_costs, atol=1e-9)


def test_infeasible_and_unbounded_statuses():
    res = dense_simplex(np.array([1.0]), A_ub=np.array([[1.0]]), b_ub=np.array([-1.0]))
    assert res.status is LpStatus.INFEASIBLE
    with pytest.raises(InfeasibleLp):
        dense_simplex(np.array([1.0]), A_ub=np.array([[1.0]]), b_ub=np.array([-1.0]),
                      raise_on_failure=True)
    assert dense_simplex(np.array([-1.0])).status is LpStatus.UNBOUNDED
    with pytest.raises(UnboundedLp):
        dense_simplex(np.array([-1.0]), raise_on_failure=True)


def test_equal_costs_resolve_deterministically():
    c = np.ones(3)
    A_eq = np.ones((1, 3))
    first = dense_simplex(c, A_eq=A_eq, b_eq=np.array([1.0]), bounds=[(0.0, 1.0)] * 3)
    again = dense_simplex(c, A_eq=A_eq, b_eq=np.array([1.0]), bounds=[(0.0, 1.0)] * 3)
    assert np.array_equal(first.x, again.x)
    assert first.basis == again.basis


def test_battery_zero_prices_stay_idle():
    sol = solve_battery_lp(BatteryLp(np.zeros(4), TABLE_ROW))
    assert sol.objective == pytest.approx(0.0)
    assert np.allclose(sol.Pb, 0.0, atol=1e-12)


def test_battery_discharges_when_prices_positive():
    sol = solve_battery_lp(BatteryLp(np.ones(3), TABLE_ROW))
    assert np.allclose(sol.Pb, [-4.75, -0.2375, -0.011875], atol=1e-7)
    assert np.allclose(sol.C, stored_energy(TABLE_ROW, sol.Pb))


def test_battery_charges_to_the_limit():
    sol = solve_battery_lp(BatteryLp(np.array([-1.0]), TABLE_ROW))
    assert sol.Pb == pytest.approx([10.0])
    assert sol.C == pytest.approx([15.0])


def test_battery_lp_matches_linprog_and_stays_feasible():
    rng = np.random.default_rng(1)
    for _ in range(40):
        T = int(rng.integers(1, 9))
        lam = rng.uniform(-1, 1, T)
        sol = solve_battery_lp(BatteryLp(lam, TABLE_ROW))
        A, b = battery_rows(TABLE_ROW, T)
        ref = linprog(lam, A_ub=A, b_ub=b, bounds=battery_bounds(TABLE_ROW, T), method="highs")
        assert sol.objective == pytest.approx(ref.fun, abs=1e-7)
        assert battery_violation(TABLE_ROW, sol.Pb) <= 1e-9
        C = np.concatenate([[TABLE_ROW.C0], sol.C])
        assert np.allclose(np.diff(C), sol.Pb)
        assert np.all(-sol.Pb <= TABLE_ROW.varpi * C[:-1] + 1e-9)


def test_battery_lp_beats_grid_search():
    lam = np.array([0.5, -0.8])
    params = BatteryParams(C0=1.0, Cmax=3.0, PbMin=-1.0, PbMax=1.5, varpi=0.9)
    sol = solve_battery_lp(BatteryLp(lam, params))
    grid = np.linspace(params.PbMin, params.PbMax, 201)
    best = min(lam @ np.array([a, b]) for a in grid for b in grid
               if battery_violation(params, np.array([a, b])) <= 1e-12)
    assert sol.objective <= best + 1e-8
    assert sol.objective >= best - 2e-2


def test_project_battery():
    feasible = np.array([-1.0, 2.0, 0.5])
    assert np.array_equal(project_battery(TABLE_ROW, feasible), feasible)
    projected = project_battery(TABLE_ROW, np.array([-8.0, 12.0, 0.0]))
    assert battery_violation(TABLE_ROW, projected) <= 1e-7
