"""Spline-based strain-energy ansatz in (I1bar, I2bar, J).

The energy is a sum of univariate splines and products of univariate splines::

    Psi = Psi_I1(I1bar) + Psi_I2(I2bar) + Psi_J(J)
          + h(I1bar) g(J) + j(I2bar) i(J) + k(I1bar) l(I2bar)

Every spline is parametrized by its interpolation values.  The global
parameter vector concatenates the active functions in the order of
``FUNCTIONS``.  Stress is linear in the additive parameters and bilinear in
each coupling pair, so with one factor of every pair frozen it is linear in
the rest: block 1 holds the additive functions plus ``h, j, k`` and block 2 the
additive functions plus ``g, i, l``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import REFERENCE, DeformationState, site_grid
from .splines import SplineSpace, build_spline_space, constraint_rows

FUNCTIONS = ("I1", "I2", "J", "h", "g", "j", "i", "k", "l")
ARGUMENT = {"I1": "I1", "I2": "I2", "J": "J", "h": "I1", "g": "J",
            "j": "I2", "i": "J", "k": "I1", "l": "I2"}
TERMS = {"u1": ("I1",), "u2": ("I2",), "uJ": ("J",),
         "c1J": ("h", "g"), "c2J": ("j", "i"), "c12": ("k", "l")}
TERM_ORDER = ("u1", "u2", "uJ", "c1J", "c2J", "c12")
ADDITIVE = ("I1", "I2", "J")
COUPLINGS = (("h", "g"), ("j", "i"), ("k", "l"))
BLOCK_FUNCTIONS = {1: ADDITIVE + ("h", "j", "k"), 2: ADDITIVE + ("g", "i", "l")}

MONOTONE_CONVEX = frozenset({"I1", "I2", "h", "j", "k", "l"})
CONVEX_ONLY = frozenset({"J", "g", "i"})
# Value fixed at the reference abscissa of each function.
PINNED_VALUE = {"I1": 0.0, "I2": 0.0, "J": 0.0, "h": 0.0, "j": 0.0,
                "k": 0.0, "l": 0.0, "g": 1.0, "i": 1.0}

DEFAULT_SITES = 8


@dataclass(frozen=True)
class AnsatzSpec:
    """Which energy terms are active and how many sites each function gets."""

    u1: bool = True
    u2: bool = True
    uJ: bool = True
    c1J: bool = False
    c2J: bool = False
    c12: bool = False
    sites: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if not any(getattr(self, t) for t in TERM_ORDER):
            raise ValueError("ansatz needs at least one active term")
        sites = dict(self.sites)
        for fn, n in sites.items():
            if fn not in FUNCTIONS:
                raise ValueError(f"unknown spline function {fn!r}")
            if int(n) != n or n < 4:
                raise ValueError(f"site count for {fn!r} must be an integer >= 4")
        object.__setattr__(self, "sites", {fn: int(sites.get(fn, DEFAULT_SITES))
                                           for fn in self.functions})

    @classmethod
    def from_terms(cls, terms, sites=DEFAULT_SITES) -> "AnsatzSpec":
        terms = list(terms)
        unknown = [t for t in terms if t not in TERMS]
        if unknown:
            raise ValueError(f"unknown ansatz terms {unknown}")
        flags = {t: (t in terms) for t in TERM_ORDER}
        if isinstance(sites, int):
            sites = {fn: sites for fn in FUNCTIONS}
        return cls(**flags, sites=dict(sites))

    @property
    def terms(self) -> tuple[str, ...]:
        return tuple(t for t in TERM_ORDER if getattr(self, t))

    @property
    def functions(self) -> tuple[str, ...]:
        active = {fn for t in self.terms for fn in TERMS[t]}
        return tuple(fn for fn in FUNCTIONS if fn in active)

    @property
    def is_coupled(self) -> bool:
        return self.c1J or self.c2J or self.c12


@dataclass(frozen=True, eq=False)
class EnergyModel:
    ansatz: AnsatzSpec
    spaces: dict
    layout: dict
    n_params: int
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    lower_bounds: np.ndarray | None
    eq_owner: tuple
    ineq_owner: tuple

    @property
    def functions(self) -> tuple[str, ...]:
        return self.ansatz.functions

    def block_functions(self, block: int) -> tuple[str, ...]:
        if block not in BLOCK_FUNCTIONS:
            raise ValueError(f"block must be 1 or 2, got {block!r}")
        return tuple(fn for fn in self.functions if fn in BLOCK_FUNCTIONS[block])

    def block_indices(self, block: int) -> np.ndarray:
        fns = self.block_functions(block)
        return np.concatenate([np.arange(self.n_params)[self.layout[fn]] for fn in fns])

    def domain(self, fn: str) -> tuple[float, float]:
        return self.spaces[fn].domain

    def split(self, theta) -> dict:
        theta = self.check_theta(theta)
        return {fn: theta[sl] for fn, sl in self.layout.items()}

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta must have shape ({self.n_params},), got {theta.shape}")
        return theta

    def constraint_system(self, block: int | None = None):
        """Equality/inequality rows, optionally restricted to one block's columns."""
        if block is None:
            return self.A_eq, self.b_eq, self.A_ineq, self.b_ineq, self.lower_bounds
        fns = set(self.block_functions(block))
        idx = self.block_indices(block)
        eq = [r for r, fn in enumerate(self.eq_owner) if fn in fns]
        ineq = [r for r, fn in enumerate(self.ineq_owner) if fn in fns]
        lb = None if self.lower_bounds is None else self.lower_bounds[idx]
        return (self.A_eq[np.ix_(eq, idx)], self.b_eq[eq],
                self.A_ineq[np.ix_(ineq, idx)], self.b_ineq[ineq], lb)


def model_from_sites(ansatz: AnsatzSpec, sites: dict, positive_bounds: bool = False) -> EnergyModel:
    """Assemble the parameter layout and constraint rows for explicit site grids."""
    spaces, layout = {}, {}
    offset = 0
    for fn in ansatz.functions:
        space = sites[fn] if isinstance(sites[fn], SplineSpace) else build_spline_space(sites[fn])
        spaces[fn] = space
        layout[fn] = slice(offset, offset + space.n)
        offset += space.n
    n_params = offset

    eq_rows, eq_rhs, eq_owner = [], [], []
    ineq_rows, ineq_owner = [], []
    for fn in ansatz.functions:
        space = spaces[fn]
        sl = layout[fn]
        ref = REFERENCE[ARGUMENT[fn]]
        hits = np.flatnonzero(space.sites == ref)
        if hits.size != 1:
            raise ValueError(f"sites of {fn!r} must contain the reference value {ref}")
        q = int(hits[0])
        row = np.zeros(n_params)
        row[sl.start + q] = 1.0
        eq_rows.append(row)
        eq_rhs.append(PINNED_VALUE[fn])
        eq_owner.append(fn)
        if fn == "J":
            row = np.zeros(n_params)
            row[sl] = space.sensitivity(np.asarray([ref]), 1)[0]
            eq_rows.append(row)
            eq_rhs.append(0.0)
            eq_owner.append(fn)

        orders = (1, 2) if fn in MONOTONE_CONVEX else (2,)
        for order in orders:
            C = constraint_rows(space, order)
            block = np.zeros((C.shape[0], n_params))
            block[:, sl] = -C
            ineq_rows.append(block)
            ineq_owner.extend([fn] * C.shape[0])

    A_ineq = np.vstack(ineq_rows) if ineq_rows else np.zeros((0, n_params))
    return EnergyModel(
        ansatz=ansatz,
        spaces=spaces,
        layout=layout,
        n_params=n_params,
        A_eq=np.vstack(eq_rows),
        b_eq=np.asarray(eq_rhs, dtype=float),
        A_ineq=A_ineq,
        b_ineq=np.zeros(A_ineq.shape[0]),
        lower_bounds=np.zeros(n_params) if positive_bounds else None,
        eq_owner=tuple(eq_owner),
        ineq_owner=tuple(ineq_owner),
    )


def assemble_model(ansatz: AnsatzSpec, ranges: dict, positive_bounds: bool = False) -> EnergyModel:
    """Build the model with site grids spanning ``ranges`` (keys I1, I2, J)."""
    sites = {}
    for fn in ansatz.functions:
        arg = ARGUMENT[fn]
        lo, hi = ranges[arg]
        sites[fn] = site_grid(lo, hi, ansatz.sites[fn], REFERENCE[arg])
    return model_from_sites(ansatz, sites, positive_bounds)


# -- evaluation ---------------------------------------------------------------


def coefficient_tensors(state: DeformationState):
    """Piola-level tensors multiplying dPsi/dI1bar, dPsi/dI2bar and dPsi/dJ.

    Built from the isochoric projection of the fictitious stress and pushed
    forward with ``P = F S``.
    """
    F, C, C_inv, J = state.F, state.C, state.C_inv, state.J
    e = lambda a: a[..., None, None]  # noqa: E731
    eye = np.broadcast_to(np.eye(3), C.shape)
    Jm23 = e(J ** (-2.0 / 3.0))
    C_bar = Jm23 * C

    def iso(S_bar):
        CS = np.einsum("...ij,...ij->...", C, S_bar)
        return Jm23 * (S_bar - e(CS) / 3.0 * C_inv)

    S_alpha = iso(2.0 * eye)
    S_beta = iso(2.0 * (e(state.I1bar) * eye - C_bar))
    S_gamma = e(J) * C_inv
    return F @ S_alpha, F @ S_beta, F @ S_gamma


class _Tables:
    """Cardinal spline values and slopes of every active function at a state."""

    def __init__(self, model: EnergyModel, state: DeformationState):
        self.model = model
        self.state = state
        self.V, self.D = {}, {}
        for fn in model.functions:
            x = state.invariant(ARGUMENT[fn])
            space = model.spaces[fn]
            self.V[fn] = space.sensitivity(x, 0)
            self.D[fn] = space.sensitivity(x, 1)
        self.alpha, self.beta, self.gamma = coefficient_tensors(state)

    def values(self, theta):
        parts = self.model.split(theta)
        val = {fn: self.V[fn] @ parts[fn] for fn in self.model.functions}
        der = {fn: self.D[fn] @ parts[fn] for fn in self.model.functions}
        return val, der

    def partials(self, theta):
        val, der = self.values(theta)
        shape = self.state.shape
        d1, d2, dJ = np.zeros(shape), np.zeros(shape), np.zeros(shape)
        if "I1" in val:
            d1 = d1 + der["I1"]
        if "I2" in val:
            d2 = d2 + der["I2"]
        if "J" in val:
            dJ = dJ + der["J"]
        if "h" in val:
            d1 = d1 + der["h"] * val["g"]
            dJ = dJ + val["h"] * der["g"]
        if "j" in val:
            d2 = d2 + der["j"] * val["i"]
            dJ = dJ + val["j"] * der["i"]
        if "k" in val:
            d1 = d1 + der["k"] * val["l"]
            d2 = d2 + val["k"] * der["l"]
        return d1, d2, dJ

    def stress(self, theta):
        d1, d2, dJ = self.partials(theta)
        e = lambda a: a[..., None, None]  # noqa: E731
        return e(d1) * self.alpha + e(d2) * self.beta + e(dJ) * self.gamma

    def term_energies(self, theta) -> dict:
        val, _ = self.values(theta)
        out = {}
        for term in self.model.ansatz.terms:
            fns = TERMS[term]
            out[term] = val[fns[0]] if len(fns) == 1 else val[fns[0]] * val[fns[1]]
        return out

    def jacobian(self, theta, components=None):
        """dP/dtheta; shape (..., 3, 3, n) or (..., len(components), n)."""
        model = self.model
        val, der = self.values(theta)
        if components is None:
            coef = {"a": self.alpha, "b": self.beta, "c": self.gamma}
            out_shape = self.state.shape + (3, 3, model.n_params)
        else:
            rows, cols = _component_index(components)
            coef = {"a": self.alpha[..., rows, cols], "b": self.beta[..., rows, cols],
                    "c": self.gamma[..., rows, cols]}
            out_shape = self.state.shape + (len(rows), model.n_params)
        out = np.zeros(out_shape)
        nd = len(out_shape) - len(self.state.shape) - 1

        def w(tensor, vec):
            # tensor (..., *comp), vec (..., n)  ->  (..., *comp, n)
            v = vec.reshape(vec.shape[:-1] + (1,) * nd + vec.shape[-1:])
            return tensor[..., None] * v

        def s(x):
            return x[..., None]

        a, b, c = coef["a"], coef["b"], coef["c"]
        for fn in model.functions:
            sl = model.layout[fn]
            V, D = self.V[fn], self.D[fn]
            if fn == "I1":
                blk = w(a, D)
            elif fn == "I2":
                blk = w(b, D)
            elif fn == "J":
                blk = w(c, D)
            elif fn == "h":
                blk = w(a, D * s(val["g"])) + w(c, V * s(der["g"]))
            elif fn == "g":
                blk = w(a, V * s(der["h"])) + w(c, D * s(val["h"]))
            elif fn == "j":
                blk = w(b, D * s(val["i"])) + w(c, V * s(der["i"]))
            elif fn == "i":
                blk = w(b, V * s(der["j"])) + w(c, D * s(val["j"]))
            elif fn == "k":
                blk = w(a, D * s(val["l"])) + w(b, V * s(der["l"]))
            else:  # "l"
                blk = w(a, V * s(der["k"])) + w(b, D * s(val["k"]))
            out[..., sl] = blk
        return out


def _component_index(components):
    comps = [tuple(c) for c in components]
    for c in comps:
        if len(c) != 2 or not all(isinstance(k, (int, np.integer)) and 0 <= k < 3 for k in c):
            raise ValueError(f"invalid stress component {c!r}")
    return [c[0] for c in comps], [c[1] for c in comps]


@dataclass(frozen=True)
class EnergyPartials:
    dPsi_dI1bar: np.ndarray
    dPsi_dI2bar: np.ndarray
    dPsi_dJ: np.ndarray


def energy(model: EnergyModel, theta, state: DeformationState):
    """Strain-energy density at ``state`` (broadcast over state dimensions)."""
    tables = _Tables(model, state)
    total = sum(tables.term_energies(theta).values())
    return total


def term_energies(model: EnergyModel, theta, state: DeformationState) -> dict:
    """Energy of each active term, keyed by term name."""
    return _Tables(model, state).term_energies(theta)


def energy_partials(model: EnergyModel, theta, state: DeformationState) -> EnergyPartials:
    return EnergyPartials(*_Tables(model, state).partials(theta))


def piola_stress(model: EnergyModel, theta, state: DeformationState) -> np.ndarray:
    """First Piola-Kirchhoff stress ``P = F S``, shape ``state.shape + (3, 3)``."""
    return _Tables(model, state).stress(theta)


def stress_jacobian(model: EnergyModel, theta, state: DeformationState, components=None):
    """Derivatives of Piola components with respect to the full parameter vector."""
    return _Tables(model, state).jacobian(theta, components)


def stress_sensitivities(model: EnergyModel, theta, state: DeformationState,
                         block: int, components) -> np.ndarray:
    """Rows of dP_ij/dtheta over one block's parameters (other block frozen).

    Stress restricted to a block is linear, so ``rows @ theta[block]`` equals
    the requested Piola components exactly.
    """
    idx = model.block_indices(block)
    return _Tables(model, state).jacobian(theta, components)[..., idx]


# -- serialization -------------------------------------------------------------


def model_to_dict(model: EnergyModel, theta) -> dict:
    parts = model.split(theta)
    return {
        "format": "splinehyper-model",
        "version": 1,
        "ansatz": {t: bool(getattr(model.ansatz, t)) for t in TERM_ORDER},
        "positive_bounds": model.lower_bounds is not None,
        "functions": {
            fn: {"sites": [float(x) for x in model.spaces[fn].sites],
                 "values": [float(v) for v in parts[fn]]}
            for fn in model.functions
        },
    }


def model_from_dict(data: dict):
    """Inverse of :func:`model_to_dict`; returns ``(model, theta)``."""
    if data.get("format") != "splinehyper-model":
        raise ValueError("not a fitted-model document")
    flags = data["ansatz"]
    funcs = data["functions"]
    sites = {fn: funcs[fn]["sites"] for fn in funcs}
    ansatz = AnsatzSpec(**{t: bool(flags.get(t, False)) for t in TERM_ORDER},
                        sites={fn: len(s) for fn, s in sites.items()})
    missing = set(ansatz.functions) - set(funcs)
    if missing:
        raise ValueError(f"model document lacks functions {sorted(missing)}")
    model = model_from_sites(ansatz, sites, bool(data.get("positive_bounds", False)))
    theta = np.concatenate([np.asarray(funcs[fn]["values"], dtype=float)
                            for fn in ansatz.functions])
    return model, model.check_theta(theta)
