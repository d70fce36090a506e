"""Deformation states, homogeneous test programs and invariant ranges.

All state quantities broadcast over leading dimensions: a
:class:`DeformationState` built from ``F`` of shape ``(..., 3, 3)`` carries
invariants of shape ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Reference values of (I1bar, I2bar, J) at F = I.
REFERENCE = {"I1": 3.0, "I2": 3.0, "J": 1.0}

MODES = ("UT", "UC", "SS")
_MODE_ALIASES = {
    "UT": "UT", "uniaxial_tension": "UT",
    "UC": "UC", "uniaxial_compression": "UC",
    "SS": "SS", "simple_shear": "SS",
}

MIN_RANGE_WIDTH = 1e-3


@dataclass(frozen=True, eq=False)
class DeformationState:
    F: np.ndarray
    J: np.ndarray
    I1bar: np.ndarray
    I2bar: np.ndarray
    C: np.ndarray
    C_inv: np.ndarray
    dI1bar_dF: np.ndarray
    dI2bar_dF: np.ndarray
    dJ_dF: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.J.shape

    def invariant(self, name: str) -> np.ndarray:
        return {"I1": self.I1bar, "I2": self.I2bar, "J": self.J}[name]

    def __getitem__(self, idx) -> "DeformationState":
        return state_from_F(self.F[idx])


def _T(A):
    return np.swapaxes(A, -1, -2)


def state_from_F(F) -> DeformationState:
    """Invariants and their derivatives for a deformation gradient."""
    F = np.asarray(F, dtype=float)
    if F.shape[-2:] != (3, 3):
        raise ValueError(f"F must have trailing shape (3, 3), got {F.shape}")
    J = np.linalg.det(F)
    if np.any(J <= 0):
        raise ValueError("deformation gradient must have det F > 0")
    C = _T(F) @ F
    C_inv = np.linalg.inv(C)
    F_invT = _T(np.linalg.inv(F))
    I1 = np.trace(C, axis1=-2, axis2=-1)
    I2 = 0.5 * (I1**2 - np.trace(C @ C, axis1=-2, axis2=-1))
    Jm23 = J ** (-2.0 / 3.0)
    Jm43 = J ** (-4.0 / 3.0)
    e = lambda a: a[..., None, None]  # noqa: E731

    dJ = e(J) * F_invT
    dI1bar = e(Jm23) * (2.0 * F - (2.0 / 3.0) * e(I1) * F_invT)
    dI2 = 2.0 * (e(I1) * F - F @ C)
    dI2bar = e(Jm43) * (dI2 - (4.0 / 3.0) * e(I2) * F_invT)
    return DeformationState(
        F=F, J=J, I1bar=Jm23 * I1, I2bar=Jm43 * I2, C=C, C_inv=C_inv,
        dI1bar_dF=dI1bar, dI2bar_dF=dI2bar, dJ_dF=dJ,
    )


def uniaxial_F(lambda1) -> np.ndarray:
    lam = np.asarray(lambda1, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("uniaxial stretch must be positive")
    F = np.zeros(lam.shape + (3, 3))
    F[..., 0, 0] = lam
    F[..., 1, 1] = 1.0
    F[..., 2, 2] = 1.0
    return F


def shear_F(gamma12, lambda_pre: float = 0.8) -> np.ndarray:
    if not lambda_pre > 0:
        raise ValueError("lambda_pre must be positive")
    g = np.asarray(gamma12, dtype=float)
    F = np.zeros(g.shape + (3, 3))
    F[..., 0, 0] = lambda_pre
    F[..., 0, 1] = g
    F[..., 1, 1] = 1.0
    F[..., 2, 2] = 1.0
    return F


def uniaxial_state(lambda1) -> DeformationState:
    """Zero lateral stretch uniaxial state, ``F = diag(lambda1, 1, 1)``."""
    return state_from_F(uniaxial_F(lambda1))


def shear_state(gamma12, lambda_pre: float = 0.8) -> DeformationState:
    """Simple shear ``F_12 = gamma12`` superposed on a fixed axial stretch."""
    return state_from_F(shear_F(gamma12, lambda_pre))


def uniaxial_invariants(lambda1):
    """Closed-form ``(I1bar, I2bar, J)`` along the uniaxial program."""
    lam = np.asarray(lambda1, dtype=float)
    return (lam ** (-2 / 3) * (lam**2 + 2), lam ** (-4 / 3) * (2 * lam**2 + 1), lam)


def shear_invariants(gamma12, lambda_pre: float = 0.8):
    """Closed-form ``(I1bar, I2bar, J)`` along the shear program."""
    g = np.asarray(gamma12, dtype=float)
    lam = lambda_pre
    return (
        lam ** (-2 / 3) * (lam**2 + g**2 + 2),
        lam ** (-4 / 3) * (2 * lam**2 + g**2 + 1),
        np.full_like(g, lam),
    )


def canonical_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise ValueError(f"unknown deformation mode {mode!r}") from None


@dataclass(frozen=True, eq=False)
class DeformationProgram:
    """A homogeneous loading path: uniaxial stretches or shear amounts."""

    mode: str
    controls: np.ndarray
    lambda_pre: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "mode", canonical_mode(self.mode))
        controls = np.array(self.controls, dtype=float).reshape(-1)
        if controls.size == 0:
            raise ValueError("program needs at least one control value")
        if self.is_uniaxial and np.any(controls <= 0):
            raise ValueError("uniaxial controls must be positive stretches")
        if self.mode == "SS" and np.any(controls < 0):
            raise ValueError("shear controls must be non-negative")
        if not self.lambda_pre > 0:
            raise ValueError("lambda_pre must be positive")
        controls.setflags(write=False)
        object.__setattr__(self, "controls", controls)

    @property
    def is_uniaxial(self) -> bool:
        return self.mode in ("UT", "UC")

    def deformation_gradients(self) -> np.ndarray:
        if self.is_uniaxial:
            return uniaxial_F(self.controls)
        return shear_F(self.controls, self.lambda_pre)

    def states(self) -> DeformationState:
        return state_from_F(self.deformation_gradients())


def default_programs(n_tension: int = 16, n_compression: int = 31, n_shear: int = 16,
                     lambda_pre: float = 0.8) -> list[DeformationProgram]:
    """Tension to 1.3, compression to 0.4 and shear to 0.15 at ``lambda_pre``."""
    return [
        DeformationProgram("UT", np.linspace(1.0, 1.3, n_tension)),
        DeformationProgram("UC", np.linspace(1.0, 0.4, n_compression)),
        DeformationProgram("SS", np.linspace(0.0, 0.15, n_shear), lambda_pre),
    ]


def invariant_ranges(programs) -> dict[str, tuple[float, float]]:
    """Closed intervals of ``I1bar``, ``I2bar`` and ``J`` visited by programs.

    Each interval contains its reference value; intervals narrower than
    ``MIN_RANGE_WIDTH`` are widened symmetrically to that width.
    """
    programs = list(programs)
    if not programs:
        raise ValueError("need at least one deformation program")
    values = {"I1": [], "I2": [], "J": []}
    for prog in programs:
        st = prog.states()
        for name in values:
            values[name].append(st.invariant(name).ravel())
    ranges = {}
    for name, chunks in values.items():
        v = np.concatenate(chunks)
        ref = REFERENCE[name]
        lo = min(float(v.min()), ref)
        hi = max(float(v.max()), ref)
        if hi - lo < MIN_RANGE_WIDTH:
            mid = 0.5 * (lo + hi)
            lo, hi = mid - 0.5 * MIN_RANGE_WIDTH, mid + 0.5 * MIN_RANGE_WIDTH
        ranges[name] = (lo, hi)
    return ranges


def site_grid(lo: float, hi: float, n: int, ref: float) -> np.ndarray:
    """``n`` increasing sites on ``[lo, hi]`` containing ``ref`` exactly.

    Uniform when ``ref`` is an endpoint; otherwise the two sub-intervals on
    either side of ``ref`` are uniform with interval counts proportional to
    their lengths.
    """
    if not lo <= ref <= hi:
        raise ValueError(f"range [{lo}, {hi}] does not contain reference value {ref}")
    if n < 4:
        raise ValueError("need at least 4 sites")
    if ref == lo or ref == hi:
        sites = np.linspace(lo, hi, n)
        sites[0], sites[-1] = lo, hi
        return sites
    n_int = n - 1
    k = int(round((ref - lo) / (hi - lo) * n_int))
    k = min(max(k, 1), n_int - 1)
    left = np.linspace(lo, ref, k + 1)
    right = np.linspace(ref, hi, n_int - k + 1)
    return np.concatenate([left[:-1], [ref], right[1:]])
