"""Independent reference routes: symbolic synthetic materials, finite
differences and an exhaustive small-QP solver.

Nothing here reuses the analytic stress assembly of the constitutive module.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
import sympy as sp

from .calibration import Curve, ExperimentDataset
from .constitutive import ARGUMENT, EnergyModel, energy, piola_stress
from .errors import DomainError
from .kinematics import REFERENCE, DeformationState, default_programs, state_from_F, uniaxial_F
from .qp import ClsProblem, ClsSolution

KINDS = ("separable", "coupled_I1J", "coupled_I2J")
MAIN_COMPONENT = {"UT": (0, 0), "UC": (0, 0), "SS": (0, 1)}


def _symbols():
    F = sp.Matrix(3, 3, lambda i, j: sp.Symbol(f"F{i + 1}{j + 1}", real=True))
    c1, kappa = sp.symbols("c1 kappa", real=True)
    return F, c1, kappa


def _base_energy(kind: str, F, c1, kappa, m=2):
    J = F.det()
    C = F.T * F
    I1 = C.trace()
    I2 = (I1**2 - (C * C).trace()) / 2
    I1bar = J ** sp.Rational(-2, 3) * I1
    I2bar = J ** sp.Rational(-4, 3) * I2
    vol = kappa / 2 * (J - 1) ** 2
    if kind == "separable":
        return c1 * (I1bar - 3) + vol
    if kind == "coupled_I1J":
        return c1 * (I1bar - 3) / J**m + vol
    if kind == "coupled_I2J":
        return c1 * (I2bar - 3) / J**m + vol
    raise ValueError(f"unknown oracle kind {kind!r}; expected one of {KINDS}")


@lru_cache(maxsize=None)
def _compiled(kind: str, traction_free: bool, m: int = 2):
    F, c1, kappa = _symbols()
    psi = _base_energy(kind, F, c1, kappa, sp.Integer(m))
    if traction_free:
        # Volumetric correction W(J) with W(1) = 0 and J W'(J) = -P22 along
        # F = diag(s, 1, 1), so the lateral stress of the uniaxial path vanishes.
        s, t = sp.symbols("s t", positive=True)
        diag = {F[i, j]: (s if (i, j) == (0, 0) else (1 if i == j else 0))
                for i in range(3) for j in range(3)}
        p22 = sp.diff(psi, F[1, 1]).subs(diag)
        w_prime = sp.expand(sp.powsimp(sp.simplify(-p22 / s), force=True))
        W = sp.integrate(w_prime.subs(s, t), (t, 1, s))
        psi = psi + W.subs(s, F.det())
    P = sp.Matrix(3, 3, lambda i, j: sp.diff(psi, F[i, j]))
    args = (list(F), c1, kappa)
    return sp.lambdify(args, psi, "numpy"), sp.lambdify(args, list(P), "numpy")


def _params(params: dict) -> tuple[float, float, int]:
    """``c1``, ``kappa`` and the coupling exponent ``m`` (coupled kinds, default 2)."""
    unknown = set(params) - {"c1", "kappa", "m"}
    if unknown:
        raise ValueError(f"unknown oracle parameters {sorted(unknown)}")
    m = float(params.get("m", 2))
    if m != int(m) or m < 1:
        raise ValueError(f"coupling exponent m must be a positive integer, got {m}")
    return float(params.get("c1", 0.0)), float(params.get("kappa", 0.0)), int(m)


class OracleMaterial:
    """Closed-form material whose stress is the symbolic derivative of its energy.

    With ``traction_free`` a volumetric correction is added so that the
    lateral Piola stress vanishes along ``F = diag(lambda, 1, 1)``.
    """

    def __init__(self, kind: str, params: dict, traction_free: bool = False):
        if kind not in KINDS:
            raise ValueError(f"unknown oracle kind {kind!r}; expected one of {KINDS}")
        self.kind = kind
        self.c1, self.kappa, self.m = _params(params)
        self.traction_free = bool(traction_free)
        self._psi, self._P = _compiled(kind, self.traction_free,
                                       2 if kind == "separable" else self.m)

    def _entries(self, F):
        F = np.asarray(F, dtype=float)
        if F.shape[-2:] != (3, 3):
            raise ValueError("F must have trailing shape (3, 3)")
        if np.any(np.linalg.det(F) <= 0):
            raise ValueError("deformation gradient must have det F > 0")
        return F, [F[..., i, j] for i in range(3) for j in range(3)]

    def energy(self, F) -> np.ndarray:
        F, entries = self._entries(F)
        return np.broadcast_to(self._psi(entries, self.c1, self.kappa), F.shape[:-2]).copy()

    def piola(self, F) -> np.ndarray:
        F, entries = self._entries(F)
        comps = self._P(entries, self.c1, self.kappa)
        comps = [np.broadcast_to(np.asarray(c, dtype=float), F.shape[:-2]) for c in comps]
        return np.stack(comps, axis=-1).reshape(F.shape[:-2] + (3, 3))


def synth_dataset(kind: str, params: dict, programs=None, noise_sd: float = 0.0,
                  seed: int = 0, traction_free: bool = False) -> ExperimentDataset:
    """Sample an oracle material along deformation programs.

    Each curve records the main Piola component of its mode (``P11`` for
    uniaxial, ``P12`` for shear) plus optional Gaussian noise of standard
    deviation ``noise_sd`` (seeded PCG64 stream).
    """
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    material = OracleMaterial(kind, params, traction_free)
    programs = default_programs() if programs is None else list(programs)
    rng = np.random.Generator(np.random.PCG64(seed))
    curves = []
    for prog in programs:
        P = material.piola(prog.deformation_gradients())
        i, j = MAIN_COMPONENT[prog.mode]
        values = P[..., i, j]
        if noise_sd > 0:
            values = values + noise_sd * rng.standard_normal(values.shape)
        curves.append(Curve(prog, values))
    return ExperimentDataset(tuple(curves))


def lateral_stress(kind: str, params: dict, stretches, traction_free: bool = False) -> np.ndarray:
    """Oracle ``P22`` along the zero-lateral-stretch uniaxial path."""
    return OracleMaterial(kind, params, traction_free).piola(uniaxial_F(stretches))[..., 1, 1]


# -- finite differences -----------------------------------------------------------


def fd_stress_check(model: EnergyModel, theta, states, step: float = 1e-6,
                    min_step: float = 1e-10) -> float:
    """Worst relative gap between analytic and central-difference stress.

    ``step`` is relative to ``max(1, max|F|)``.  It is halved while a perturbed
    state leaves the spline domain, down to ``min_step``.  Relative errors are
    taken per state against ``max|P|`` of that state, floored at 1e-3 of the
    largest stress seen, so near-reference states do not divide by zero.
    """
    if isinstance(states, DeformationState):
        F = states.F.reshape(-1, 3, 3)
    else:
        F = np.stack([np.asarray(s.F if isinstance(s, DeformationState) else s, dtype=float)
                      for s in states]).reshape(-1, 3, 3)
    P_an = piola_stress(model, theta, state_from_F(F))
    h0 = step * max(1.0, float(np.max(np.abs(F))))
    h = h0
    while True:
        try:
            P_fd = _central_difference(model, theta, F, h)
            break
        except DomainError:
            h *= 0.5
            if h < min_step:
                raise
    scale = np.max(np.abs(P_an.reshape(len(F), -1)), axis=1)
    floor = 1e-3 * max(float(scale.max()), 1e-300)
    err = np.max(np.abs(P_an - P_fd).reshape(len(F), -1), axis=1) / np.maximum(scale, floor)
    return float(err.max())


def _central_difference(model, theta, F, h):
    n = len(F)
    out = np.zeros((n, 3, 3))
    for i in range(3):
        for j in range(3):
            E = np.zeros((3, 3))
            E[i, j] = h
            plus = energy(model, theta, state_from_F(F + E))
            minus = energy(model, theta, state_from_F(F - E))
            out[:, i, j] = (plus - minus) / (2.0 * h)
    return out


# -- exhaustive QP --------------------------------------------------------------

BRUTE_MAX_VARS = 6
BRUTE_MAX_CONSTRAINTS = 12


def brute_qp_oracle(problem: ClsProblem, feas_tol: float = 1e-9) -> ClsSolution:
    """Solve a small constrained least-squares problem by trying every active set.

    For each subset of inequalities treated as equalities, the equality-
    constrained minimizer is found from the KKT system; the best feasible one
    wins.  Convexity makes that the global optimum.
    """
    p = problem.n_vars
    G, h = problem.inequalities()
    if p > BRUTE_MAX_VARS or G.shape[0] > BRUTE_MAX_CONSTRAINTS:
        raise ValueError("problem too large for exhaustive search")
    A, y = problem.A, problem.y
    E, e = problem.A_eq, problem.b_eq
    rho = problem.rho
    H = A.T @ A + rho * np.eye(p)
    g = A.T @ y

    def full(x):
        r = A @ x - y
        return float(r @ r + rho * x @ x)

    best, best_val, best_set = None, np.inf, ()
    rows = range(G.shape[0])
    for k in range(G.shape[0] + 1):
        for subset in itertools.combinations(rows, k):
            C = np.vstack([E, G[list(subset)]])
            d = np.concatenate([e, h[list(subset)]])
            m = C.shape[0]
            K = np.block([[H, C.T], [C, np.zeros((m, m))]])
            rhs = np.concatenate([g, d])
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            x = sol[:p]
            if m and np.max(np.abs(C @ x - d)) > feas_tol * max(1.0, np.max(np.abs(d))):
                continue
            if np.max(np.abs(K @ sol - rhs)) > 1e-7 * max(1.0, np.max(np.abs(rhs))):
                continue
            if G.shape[0] and np.any(G @ x - h > feas_tol * np.maximum(1.0, np.abs(h))):
                continue
            val = full(x)
            if best is None or val < best_val - 1e-14 * max(1.0, abs(best_val)):
                best, best_val, best_set = x, val, subset
    if best is None:
        return ClsSolution(theta=np.zeros(p), objective=np.inf, active_set=(),
                           kkt_residual=np.inf, status="infeasible")
    return ClsSolution(theta=best, objective=problem.objective(best),
                       active_set=tuple(best_set), kkt_residual=0.0, status="converged")


def random_feasible_theta(model: EnergyModel, rng: np.random.Generator,
                          scale: float = 0.1) -> np.ndarray:
    """Random parameters inside the admissible set with a non-trivial energy.

    Half comes from low-order polynomials that the splines reproduce exactly
    and that satisfy the shape rows by construction (non-negative
    coefficients), half from a random draw projected onto the constraint set.
    Projection alone tends to land near zero for monotone functions, which
    leaves nothing to check.
    """
    from .calibration import project_to_feasible

    poly = np.zeros(model.n_params)
    for fn, sl in model.layout.items():
        x = model.spaces[fn].sites
        d = x - REFERENCE[ARGUMENT[fn]]
        a, b, c = scale * rng.uniform(0.0, 1.0, 3)
        if fn in ("g", "i"):
            poly[sl] = 1.0 + b * d + a * d**2
        elif fn == "J":
            poly[sl] = a * d**2
        else:
            poly[sl] = a * d + b * d**2 + c * d**3
    noise = project_to_feasible(model, scale * rng.standard_normal(model.n_params))
    return 0.5 * (poly + noise)
