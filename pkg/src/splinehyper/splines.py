"""Cubic B-spline spaces parametrized by interpolation values.

A :class:`SplineSpace` interpolates values ``theta`` given at strictly
increasing sites.  The control points are ``c = collocation @ theta`` and the
cardinal ("parameter sensitivity") splines ``N_p`` satisfy ``N_p(x_q) =
delta_pq``.  Derivatives of a cubic spline are lower degree B-splines on the
trimmed knot vector, with control coefficients ``deriv_coeff_r @ c``; their
non-negativity is a sufficient condition for a non-negative derivative, which
is what :func:`constraint_rows` exposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

DEGREE = 3

# Collocation matrices with a larger condition number are treated as singular.
_MAX_COLLOCATION_COND = 1e12


def bspline_basis(knots: np.ndarray, degree: int, x: np.ndarray) -> np.ndarray:
    """Evaluate all B-spline basis functions at ``x`` (Cox-de Boor recursion).

    Returns an array of shape ``(len(x), len(knots) - degree - 1)``.  The
    right end of the knot vector belongs to the last non-degenerate span so
    that clamped splines are evaluable at their final site.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n_basis = len(knots) - degree - 1
    span = np.searchsorted(knots, x, side="right") - 1
    span = np.clip(span, degree, n_basis - 1)

    m = x.shape[0]
    N = np.zeros((m, degree + 1))
    N[:, 0] = 1.0
    left = np.zeros((m, degree + 1))
    right = np.zeros((m, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = x - knots[span + 1 - j]
        right[:, j] = knots[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    out = np.zeros((m, n_basis))
    rows = np.arange(m)[:, None]
    cols = span[:, None] - degree + np.arange(degree + 1)[None, :]
    out[rows, cols] = N
    return out


def derivative_matrix(knots: np.ndarray, degree: int) -> np.ndarray:
    """Map control points of a degree-``k`` spline to those of its derivative.

    The derivative lives on ``knots[1:-1]`` with degree ``k - 1``.
    """
    n = len(knots) - degree - 1
    D = np.zeros((n - 1, n))
    for i in range(n - 1):
        w = degree / (knots[i + degree + 1] - knots[i + 1])
        D[i, i] = -w
        D[i, i + 1] = w
    return D


def averaged_knots(sites: np.ndarray, degree: int = DEGREE) -> np.ndarray:
    """Clamped knot vector with interior knots at running site averages."""
    n = len(sites)
    interior = [np.mean(sites[j:j + degree]) for j in range(1, n - degree)]
    return np.concatenate([
        np.full(degree + 1, sites[0]),
        np.asarray(interior, dtype=float),
        np.full(degree + 1, sites[-1]),
    ])


@dataclass(frozen=True, eq=False)
class SplineSpace:
    """Cubic interpolation space over fixed ``sites``.

    Build with :func:`build_spline_space`; fields are read-only arrays.
    """

    sites: np.ndarray
    knots: np.ndarray
    collocation: np.ndarray
    deriv_coeff_1: np.ndarray
    deriv_coeff_2: np.ndarray
    degree: int = DEGREE
    _sens: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.sites[0]), float(self.sites[-1])

    def check_domain(self, x: np.ndarray) -> None:
        lo, hi = self.domain
        x = np.asarray(x)
        if x.size and (np.min(x) < lo or np.max(x) > hi):
            bad = x[(x < lo) | (x > hi)].ravel()[0]
            raise DomainError(
                f"abscissa {bad!r} outside spline domain [{lo!r}, {hi!r}]"
            )

    def basis(self, x, order: int = 0) -> np.ndarray:
        """B-spline basis derivatives ``phi_i^(order)(x)``, shape ``(m, n)``."""
        _check_order(order)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self.check_domain(x)
        if order == 0:
            return bspline_basis(self.knots, self.degree, x)
        D = self.deriv_coeff_1 if order == 1 else self.deriv_coeff_2
        trimmed = self.knots[order:len(self.knots) - order]
        return bspline_basis(trimmed, self.degree - order, x) @ D

    def sensitivity(self, x, order: int = 0) -> np.ndarray:
        """Cardinal spline values ``N_p^(order)(x)``, shape ``(m, n)``.

        ``x`` may have any shape; the result has shape ``x.shape + (n,)``.
        """
        _check_order(order)
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        self.check_domain(flat)
        if order == 0:
            B = bspline_basis(self.knots, self.degree, flat)
        else:
            trimmed = self.knots[order:len(self.knots) - order]
            B = bspline_basis(trimmed, self.degree - order, flat)
        return (B @ self._sens[order]).reshape(x.shape + (self.n,))


def _check_order(order: int) -> None:
    if order not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {order!r}")


def build_spline_space(sites) -> SplineSpace:
    """Construct the cubic interpolation space for strictly increasing sites."""
    sites = np.array(sites, dtype=float)
    if sites.ndim != 1 or len(sites) < DEGREE + 1:
        raise ValueError(f"need at least {DEGREE + 1} sites, got {sites.size}")
    if not np.all(np.isfinite(sites)):
        raise ValueError("sites must be finite")
    if np.any(np.diff(sites) <= 0):
        raise ValueError("sites must be strictly increasing without duplicates")

    knots = averaged_knots(sites)
    B = bspline_basis(knots, DEGREE, sites)
    cond = np.linalg.cond(B)
    if not np.isfinite(cond) or cond > _MAX_COLLOCATION_COND:
        raise ValueError(f"collocation matrix numerically singular (cond={cond:.3g})")
    collocation = np.linalg.solve(B, np.eye(len(sites)))

    D1 = derivative_matrix(knots, DEGREE)
    D2 = derivative_matrix(knots[1:-1], DEGREE - 1) @ D1
    sens = (collocation, D1 @ collocation, D2 @ collocation)
    for arr in (sites, knots, collocation, D1, D2, *sens):
        arr.setflags(write=False)
    return SplineSpace(sites, knots, collocation, D1, D2, DEGREE, sens)


def eval_sensitivity(space: SplineSpace, p: int, x: float, order: int = 0) -> float:
    """Value of ``N_p`` (or its first/second derivative) at scalar ``x``."""
    if not 0 <= p < space.n:
        raise IndexError(f"site index {p} out of range for {space.n} sites")
    return float(space.sensitivity(np.asarray([x], dtype=float), order)[0, p])


def interp_to_control(space: SplineSpace, values) -> np.ndarray:
    """Control points of the spline interpolating ``values`` at the sites."""
    values = np.asarray(values, dtype=float)
    if values.shape != (space.n,):
        raise ValueError(f"expected {space.n} interpolation values, got shape {values.shape}")
    return space.collocation @ values


def constraint_rows(space: SplineSpace, order: int) -> np.ndarray:
    """Rows ``C`` whose ``C @ theta >= 0`` forces a non-negative derivative.

    The rows are the control coefficients of the ``order``-th derivative
    spline expressed in interpolation values; callers negate them to obtain
    ``A_ineq @ theta <= 0``.
    """
    if order not in (1, 2):
        raise ValueError(f"constraint order must be 1 or 2, got {order!r}")
    return np.array(space._sens[order])


@dataclass(frozen=True, eq=False)
class SplineFunction:
    """A spline given by its values at the sites of ``space``."""

    space: SplineSpace
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.space.n,):
            raise ValueError(
                f"expected {self.space.n} values, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    def __call__(self, x, order: int = 0):
        out = self.space.sensitivity(x, order) @ self.values
        return float(out) if np.ndim(x) == 0 else out

    @property
    def control_points(self) -> np.ndarray:
        return interp_to_control(self.space, self.values)
