"""Dense constrained linear least squares by a primal active-set method.

Solves::

    min ||A x - y||^2 + rho ||x||^2
    s.t. A_eq x = b_eq,  A_ineq x <= b_ineq,  x >= lower_bounds

with ``rho = ridge * trace(A^T A) / p``.  A feasible start comes from the
least-distance projection of the initial guess onto the constraint set
(Lawson-Hanson LDP, through NNLS on the dual); after that every iterate stays
feasible and the objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

TOL_PRIMAL = 1e-8
TOL_DUAL = 1e-12
TOL_STATIONARITY = 1e-8
DEFAULT_RIDGE = 1e-10


@dataclass(eq=False)
class ClsProblem:
    A: np.ndarray
    y: np.ndarray
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower_bounds: np.ndarray | None = None
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        m, p = self.A.shape
        if m < 1:
            raise ValueError("design matrix needs at least one row")
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.shape != (m,):
            raise ValueError(f"y must have length {m}")
        self.A_ineq, self.b_ineq = _system(self.A_ineq, self.b_ineq, p, "inequality")
        self.A_eq, self.b_eq = _system(self.A_eq, self.b_eq, p, "equality")
        if self.lower_bounds is not None:
            self.lower_bounds = np.asarray(self.lower_bounds, dtype=float).reshape(-1)
            if self.lower_bounds.shape != (p,):
                raise ValueError(f"lower_bounds must have length {p}")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def rho(self) -> float:
        """Absolute Tikhonov weight."""
        scale = np.sum(self.A**2) / self.n_vars
        return self.ridge * (scale if scale > 0 else 1.0)

    def inequalities(self):
        """All inequality rows ``G x <= h`` including the simple bounds."""
        G, h = self.A_ineq, self.b_ineq
        if self.lower_bounds is not None:
            G = np.vstack([G, -np.eye(self.n_vars)])
            h = np.concatenate([h, -self.lower_bounds])
        return G, h

    def objective(self, x) -> float:
        r = self.A @ x - self.y
        return float(r @ r)


def _system(M, b, p, what):
    if M is None:
        return np.zeros((0, p)), np.zeros(0)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, p)), np.zeros(0)
    if M.shape[1] != p:
        raise ValueError(f"{what} matrix has {M.shape[1]} columns, expected {p}")
    b = np.zeros(M.shape[0]) if b is None else np.asarray(b, dtype=float).reshape(-1)
    if b.shape != (M.shape[0],):
        raise ValueError(f"{what} right-hand side must have length {M.shape[0]}")
    return M, b


@dataclass(eq=False)
class ClsSolution:
    theta: np.ndarray
    objective: float
    active_set: tuple
    kkt_residual: float
    status: str
    iterations: int = 0
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal_violation: float
    min_multiplier: float

    def ok(self, tol: float = 1e-8) -> bool:
        return (self.stationarity <= tol and self.primal_violation <= tol
                and self.min_multiplier >= -tol)


def _row_scale(G):
    return np.maximum(np.linalg.norm(G, axis=1), 1e-300) if G.shape[0] else np.zeros(0)


def nnls(E, f, max_iter: int | None = None):
    """Lawson-Hanson non-negative least squares, ``min ||E u - f||, u >= 0``.

    Returns ``(u, ||E u - f||)``.  Kept local because some scipy releases
    return points that violate the optimality conditions on tiny problems.
    """
    E = np.asarray(E, dtype=float)
    f = np.asarray(f, dtype=float)
    n = E.shape[1]
    max_iter = 3 * n + 30 if max_iter is None else max_iter
    u = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    tol = 10 * np.finfo(float).eps * max(1.0, np.linalg.norm(E, 1)) * max(E.shape)
    w = E.T @ (f - E @ u)
    it = 0
    while np.any(~passive & (w > tol)) and it < max_iter:
        it += 1
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        while True:
            s = np.zeros(n)
            s[passive] = np.linalg.lstsq(E[:, passive], f, rcond=None)[0]
            if np.all(s[passive] > 0):
                u = s
                break
            # step back to the first coordinate that hits zero
            neg = passive & (s <= 0)
            ratio = u[neg] / (u[neg] - s[neg])
            alpha = float(np.min(ratio))
            u = u + alpha * (s - u)
            passive &= u > tol
            u[~passive] = 0.0
        w = E.T @ (f - E @ u)
    return u, float(np.linalg.norm(E @ u - f))


def project_feasible(A_eq, b_eq, G, h, x0):
    """Closest point to ``x0`` satisfying the equalities and inequalities.

    Returns ``None`` if the constraint set is empty.
    """
    x0 = np.asarray(x0, dtype=float)
    p = x0.size
    if A_eq.shape[0]:
        xp = x0 - np.linalg.lstsq(A_eq, A_eq @ x0 - b_eq, rcond=None)[0]
        scale = max(1.0, float(np.max(np.abs(b_eq))))
        if np.max(np.abs(A_eq @ xp - b_eq)) > 1e-9 * scale:
            return None
        Z = null_space(A_eq)
    else:
        xp, Z = x0.copy(), np.eye(p)
    if G.shape[0] == 0:
        return xp
    slack = h - G @ xp
    if np.all(slack >= 0):
        return xp
    if Z.shape[1] == 0:
        return xp if np.all(slack >= -TOL_PRIMAL * _row_scale(G)) else None
    # LDP: min ||z|| s.t. (G Z) z <= slack, written as -(G Z) z >= -slack.
    scale = _row_scale(G)
    Gl = -(G @ Z) / scale[:, None]
    hl = -slack / scale
    E = np.vstack([Gl.T, hl[None, :]])
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    u, _ = nnls(E, f)
    r = E @ u - f
    if abs(r[-1]) < 1e-12:
        return None
    z = -r[:-1] / r[-1]
    x = xp + Z @ z
    # Nudge rounding-level violations back inside, staying on the equalities.
    viol = G @ x - h
    if np.any(viol > 0):
        rows = viol > 0
        x = x - Z @ np.linalg.lstsq(G[rows] @ Z, viol[rows], rcond=None)[0]
    return x


def _working_step(A, y, rho, x, Cw):
    """Minimizing step from ``x`` within the null space of the working rows ``Cw``.

    The step is ``N s`` with ``N`` an orthonormal null-space basis, so it keeps
    every working row exactly satisfied even when the rows are degenerate,
    and ``s`` solves the ridged least-squares problem directly rather than
    through normal equations.
    """
    n = x.size
    if Cw.shape[0]:
        _, sv, Vt = np.linalg.svd(Cw)
        rank = int(np.sum(sv > 1e-12 * max(sv[0], 1e-300) * max(Cw.shape)))
        N = Vt[rank:].T
    else:
        N = np.eye(n)
    if N.shape[1] == 0:
        return np.zeros(n)
    root = np.sqrt(rho)
    M = np.vstack([A @ N, root * N])
    r = np.concatenate([y - A @ x, -root * x])
    s = np.linalg.lstsq(M, r, rcond=None)[0]
    return N @ s


def _multipliers(Cw, grad):
    """Least-squares multipliers with ``Cw^T lam = -grad``."""
    if Cw.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.lstsq(Cw.T, -grad, rcond=None)[0]


def _initial_working_set(E, G, h, x, tol: float = 1e-12) -> list[int]:
    """Constraints binding at ``x`` that are independent of ``E`` and each other.

    Rows are taken in index order, so the choice is deterministic.
    """
    if G.shape[0] == 0:
        return []
    binding = np.flatnonzero(np.abs(h - G @ x) <= tol * np.maximum(1.0, np.abs(h)))
    W: list[int] = []
    basis = E
    rank = np.linalg.matrix_rank(basis) if basis.shape[0] else 0
    for i in binding:
        trial = np.vstack([basis, G[i]])
        r = np.linalg.matrix_rank(trial)
        if r > rank:
            W.append(int(i))
            basis, rank = trial, r
        if rank == G.shape[1]:
            break
    return W


def solve_cls(problem: ClsProblem, x0=None, max_iter: int | None = None) -> ClsSolution:
    """Minimize the regularized least-squares objective under linear constraints.

    ``x0`` warm-starts the search (projected onto the feasible set first).
    The iteration cap defaults to ``100 * p``.
    """
    A, y = problem.A, problem.y
    p = problem.n_vars
    E, e = problem.A_eq, problem.b_eq
    G0, h0 = problem.inequalities()
    scale = _row_scale(G0)
    G, h = G0 / scale[:, None], h0 / scale
    if max_iter is None:
        max_iter = 100 * p
    rho = problem.rho
    H2 = 2.0 * (A.T @ A + rho * np.eye(p))
    c2 = -2.0 * (A.T @ y)
    obj_ref = max(float(y @ y), 1e-300)

    def full_objective(x):
        return problem.objective(x) + rho * float(x @ x)

    start = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    x = project_feasible(E, e, G, h, start)
    if x is None:
        return ClsSolution(theta=start, objective=problem.objective(start), active_set=(),
                           kkt_residual=np.inf, status="infeasible")

    n_eq = E.shape[0]
    W = _initial_working_set(E, G, h, x)
    history = [full_objective(x)]
    status = "max_iter"
    lam_eq = np.zeros(n_eq)
    mu = np.zeros(G.shape[0])
    it = 0
    settled = False
    while it < max_iter:
        it += 1
        Cw = np.vstack([E, G[W]]) if W else E
        step = _working_step(A, y, rho, x, Cw)
        decrease = 0.5 * float(step @ H2 @ step)
        # A small predicted decrease only ends the search once the full step on
        # this working set has been taken; along ridge-only directions the
        # decrease is tiny even when the step is not.
        tiny = np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(x))
        if tiny or (settled and decrease <= 1e-15 * obj_ref):
            lam = _multipliers(Cw, H2 @ (x + step) + c2)
            lam_eq = lam[:n_eq]
            mu_w = lam[n_eq:]
            grad_ref = max(float(np.max(np.abs(c2))), float(np.max(np.abs(H2 @ x))), 1e-300)
            if mu_w.size == 0 or np.min(mu_w) >= -TOL_DUAL * grad_ref:
                mu = np.zeros(G.shape[0])
                mu[W] = mu_w
                status = "converged"
                break
            # Drop the most negative multiplier; lowest index on ties.
            j = int(np.argmin(mu_w))
            W.pop(j)
            settled = False
            continue
        Gp = G @ step
        alpha, block = 1.0, None
        if G.shape[0]:
            # Rows are unit norm, so Gp / |step| is a direction cosine; rows
            # nearly parallel to the step's null space cannot block it.
            cand = Gp > 1e-10 * np.linalg.norm(step)
            if W:
                cand[W] = False
            if np.any(cand):
                idx = np.flatnonzero(cand)
                slack = np.maximum(h[idx] - G[idx] @ x, 0.0)
                ratios = slack / Gp[idx]
                k = int(np.argmin(ratios))
                if ratios[k] < 1.0:
                    alpha, block = float(ratios[k]), int(idx[k])
        x = x + alpha * step
        settled = block is None
        if block is not None:
            W.append(block)
            W.sort()
        history.append(full_objective(x))

    sol = ClsSolution(theta=x, objective=problem.objective(x),
                      active_set=tuple(W), kkt_residual=0.0, status=status,
                      iterations=it, multipliers_eq=lam_eq,
                      multipliers_ineq=mu / np.where(scale > 0, scale, 1.0),
                      history=history)
    sol.kkt_residual = kkt_check(problem, sol).stationarity
    return sol


def kkt_check(problem: ClsProblem, solution: ClsSolution, active_tol: float = 1e-8) -> KktReport:
    """Verify first-order optimality of ``solution.theta`` from scratch.

    Multipliers are re-fitted by least squares over the equalities and the
    inequalities whose row-scaled slack is within ``active_tol``, so the
    report does not rely on the solver's working set.  Stationarity is the
    residual of that fit relative to the gradient scale of the problem.
    """
    x = np.asarray(solution.theta, dtype=float)
    A, y = problem.A, problem.y
    p = problem.n_vars
    E, e = problem.A_eq, problem.b_eq
    G, h = problem.inequalities()
    rho = problem.rho
    grad = 2.0 * (A.T @ (A @ x - y)) + 2.0 * rho * x

    viol = 0.0
    if E.shape[0]:
        viol = max(viol, float(np.max(np.abs(E @ x - e))))
    if G.shape[0]:
        viol = max(viol, float(np.max(np.maximum(G @ x - h, 0.0))))

    scale = _row_scale(G)
    if G.shape[0]:
        active = np.flatnonzero(np.abs(G @ x - h) <= active_tol * scale)
    else:
        active = np.zeros(0, dtype=int)
    Gn = G[active] / scale[active, None]
    M = np.vstack([E, Gn]).T
    if M.shape[1]:
        coef = np.linalg.lstsq(M, -grad, rcond=None)[0]
        resid = grad + M @ coef
        mu = coef[E.shape[0]:]
    else:
        resid, mu = grad, np.zeros(0)
    ref = max(float(np.max(np.abs(2.0 * (A.T @ y)))),
              float(np.max(np.abs(2.0 * (A.T @ (A @ x)) + 2.0 * rho * x))), 1e-300)
    return KktReport(stationarity=float(np.max(np.abs(resid))) / ref,
                     primal_violation=viol,
                     min_multiplier=float(np.min(mu)) / ref if mu.size else 0.0)
