import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splinehyper.oracle import brute_qp_oracle
from splinehyper.qp import ClsProblem, kkt_check, solve_cls


def random_problem(rng, p=None, n_ineq=None, n_eq=None, bounds=False):
    p = int(rng.integers(1, 5)) if p is None else p
    m = int(rng.integers(1, 8))
    n_ineq = int(rng.integers(0, 7)) if n_ineq is None else n_ineq
    n_eq = int(rng.integers(0, min(p, 2) + 1)) if n_eq is None else n_eq
    A = rng.standard_normal((m, p))
    y = rng.standard_normal(m)
    x_feas = rng.standard_normal(p)
    G = rng.standard_normal((n_ineq, p))
    h = G @ x_feas + rng.uniform(0, 1, n_ineq)  # feasible by construction
    E = rng.standard_normal((n_eq, p))
    e = E @ x_feas
    lb = (x_feas - rng.uniform(0, 1, p)) if bounds else None
    return ClsProblem(A, y, G, h, E, e, lb)


def test_clipped_projection():
    prob = ClsProblem(np.eye(2), [1.0, -1.0], lower_bounds=[0.0, 0.0], ridge=0.0)
    sol = solve_cls(prob)
    assert np.allclose(sol.theta, [1.0, 0.0], atol=1e-12)
    assert sol.objective == pytest.approx(1.0, abs=1e-12)
    rep = kkt_check(prob, sol)
    assert rep.stationarity <= 1e-10 and rep.primal_violation <= 1e-10 and rep.min_multiplier >= -1e-10


def test_unconstrained_mean():
    sol = solve_cls(ClsProblem([[1.0], [1.0]], [1.0, 3.0], ridge=0.0))
    assert sol.theta[0] == pytest.approx(2.0, abs=1e-12)


def test_equality_split():
    sol = solve_cls(ClsProblem(np.eye(2), [1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], ridge=0.0))
    assert np.allclose(sol.theta, [0.5, 0.5], atol=1e-12)


def test_kkt_detects_perturbation():
    prob = ClsProblem(np.eye(2), [1.0, -1.0], lower_bounds=[0.0, 0.0], ridge=0.0)
    sol = solve_cls(prob)
    sol.theta = sol.theta + np.array([1e-2, 0.0])
    assert kkt_check(prob, sol).stationarity > 1e-3


def test_kkt_reports_equality_violation():
    prob = ClsProblem(np.eye(2), [1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], ridge=0.0)
    sol = solve_cls(prob)
    sol.theta = sol.theta + np.array([0.03, 0.0])
    assert kkt_check(prob, sol).primal_violation == pytest.approx(0.03, rel=1e-9)


def test_infeasible_equalities():
    prob = ClsProblem(np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[0.0, 1.0])
    assert solve_cls(prob).status == "infeasible"
    assert brute_qp_oracle(prob).status == "infeasible"


def test_brute_oracle_clipping():
    prob = ClsProblem(np.eye(2), [1.0, -1.0], lower_bounds=[0.0, 0.0], ridge=0.0)
    assert np.allclose(brute_qp_oracle(prob).theta, [1.0, 0.0], atol=1e-12)


def test_brute_oracle_size_limit():
    prob = ClsProblem(np.eye(7), np.zeros(7))
    with pytest.raises(ValueError):
        brute_qp_oracle(prob)


def test_matches_brute_force_on_50_problems():
    rng = np.random.Generator(np.random.PCG64(7))
    worst = 0.0
    for _ in range(50):
        prob = random_problem(rng)
        a, b = solve_cls(prob), brute_qp_oracle(prob)
        assert a.status == "converged" and b.status == "converged"
        gap = abs(a.objective - b.objective) / max(abs(b.objective), 1.0)
        assert np.isfinite(gap)
        worst = max(worst, gap)
    assert worst <= 1e-6


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_solution_invariants(seed, bounds):
    rng = np.random.Generator(np.random.PCG64(seed))
    prob = random_problem(rng, bounds=bounds)
    sol = solve_cls(prob)
    G, h = prob.inequalities()
    if prob.A_eq.shape[0]:
        assert np.max(np.abs(prob.A_eq @ sol.theta - prob.b_eq)) <= 1e-10 * max(1, np.max(np.abs(prob.b_eq)))
    if G.shape[0]:
        assert np.all(G @ sol.theta <= h + 1e-8 * np.maximum(1, np.abs(h)))
    assert sol.multipliers_ineq.size == 0 or np.min(sol.multipliers_ineq) >= -1e-8
    assert kkt_check(prob, sol).ok(1e-7)
    hist = np.asarray(sol.history)
    assert np.all(np.diff(hist) <= 1e-12 * np.maximum(1.0, np.abs(hist[:-1])))


def test_deterministic():
    rng = np.random.Generator(np.random.PCG64(11))
    prob = random_problem(rng, p=4, n_ineq=6)
    a, b = solve_cls(prob), solve_cls(prob)
    assert np.array_equal(a.theta, b.theta) and a.active_set == b.active_set


def test_rank_deficient_picks_min_norm():
    # two identical columns: the ridge splits the weight evenly
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    sol = solve_cls(ClsProblem(A, [1.0, 2.0]))
    assert sol.theta[0] == pytest.approx(sol.theta[1], rel=1e-9)
    assert sol.theta.sum() == pytest.approx(1.0, rel=1e-8)


def test_warm_start_from_infeasible_point():
    prob = ClsProblem(np.eye(3), [1.0, 2.0, 3.0], A_ineq=np.eye(3), b_ineq=np.zeros(3), ridge=0.0)
    sol = solve_cls(prob, x0=[5.0, 5.0, 5.0])
    assert np.allclose(sol.theta, 0.0, atol=1e-12)


def test_dimension_errors():
    with pytest.raises(ValueError):
        ClsProblem(np.eye(2), [1.0])
    with pytest.raises(ValueError):
        ClsProblem(np.eye(2), [1.0, 1.0], A_ineq=np.eye(3), b_ineq=np.zeros(3))
    with pytest.raises(ValueError):
        ClsProblem(np.eye(2), [1.0, 1.0], ridge=-1.0)
    with pytest.raises(ValueError):
        ClsProblem(np.zeros((0, 2)), [])


def test_iteration_cap_reports_max_iter():
    rng = np.random.Generator(np.random.PCG64(5))
    prob = random_problem(rng, p=4, n_ineq=6)
    full = solve_cls(prob)
    if full.iterations > 1:
        capped = solve_cls(prob, max_iter=1)
        assert capped.status == "max_iter"
        G, h = prob.inequalities()
        assert np.all(G @ capped.theta <= h + 1e-8 * np.maximum(1, np.abs(h)))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 9))
def test_nnls_optimality(seed, m, n):
    from splinehyper.qp import nnls

    rng = np.random.Generator(np.random.PCG64(seed))
    E = rng.standard_normal((m, n))
    f = rng.standard_normal(m)
    u, res = nnls(E, f)
    w = E.T @ (f - E @ u)
    assert np.all(u >= 0)
    assert np.all(w <= 1e-9 * max(1.0, np.abs(E).sum()))
    assert np.all(np.abs(w[u > 0]) <= 1e-9 * max(1.0, np.abs(E).sum()))
    assert res == pytest.approx(np.linalg.norm(E @ u - f))


def test_nnls_case_with_two_candidate_columns():
    # small least-distance dual on which a wrong active set is easy to pick
    from splinehyper.qp import nnls

    a = np.array([-0.45381542, -0.65553085, 0.95692488, 0.98230611, 0.71918272])
    s = np.array([0.46060983, 0.60405143, -0.55096334, -0.45902894, -0.43956322])
    E = np.vstack([-a, -s])
    f = np.array([0.0, 1.0])
    u, _ = nnls(E, f)
    assert np.all(E.T @ (f - E @ u) <= 1e-12)
    r = E @ u - f
    z = -r[0] / r[1]
    # the closest point of the interval {a_i z <= s_i} to zero is its upper end
    assert z == pytest.approx(np.min(s[a > 0] / a[a > 0]), rel=1e-10)
