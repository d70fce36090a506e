"""Fast built-in checks behind ``splinehyper check``.

Each check returns ``(name, passed, detail)``.  The set is a trimmed copy of
the test suite's invariants, sized to finish in a few seconds.
"""

from __future__ import annotations

import time

import numpy as np

from .calibration import (CalibrationOptions, LossSpec, alternate_optimize,
                          assemble_block_system, loss)
from .constitutive import AnsatzSpec, assemble_model, energy, piola_stress
from .kinematics import (default_programs, invariant_ranges, shear_state, state_from_F,
                         uniaxial_invariants, uniaxial_state)
from .oracle import brute_qp_oracle, fd_stress_check, random_feasible_theta, synth_dataset
from .qp import ClsProblem, solve_cls
from .splines import build_spline_space

FULL_TERMS = ("u1", "u2", "uJ", "c1J", "c2J", "c12")


def _spline_delta(rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(4, 14))
        sites = np.sort(rng.uniform(-2, 5, n))
        if np.min(np.diff(sites)) < 1e-2:
            continue
        space = build_spline_space(sites)
        worst = max(worst, float(np.max(np.abs(space.sensitivity(sites) - np.eye(n)))))
    return worst <= 1e-10, f"max |N_p(x_q) - delta_pq| = {worst:.2e}"


def _cubic_reproduction(rng):
    sites = np.linspace(0.0, 2.0, 9)
    space = build_spline_space(sites)
    c = rng.standard_normal(4)
    x = rng.uniform(0.0, 2.0, 100)
    exact = np.polyval(c, x)
    approx = space.sensitivity(x) @ np.polyval(c, sites)
    err = float(np.max(np.abs(approx - exact)) / np.max(np.abs(exact)))
    return err <= 1e-9, f"relative error {err:.2e}"


def _invariants(rng):
    got = uniaxial_invariants(0.4)
    want = (3.978754, 4.478789, 0.4)
    err = max(abs(a - b) for a, b in zip(got, want))
    return err < 1e-6, f"lambda=0.4 -> ({got[0]:.6f}, {got[1]:.6f}, {got[2]:.1f})"


def _model(terms=FULL_TERMS, sites=8):
    return assemble_model(AnsatzSpec.from_terms(terms, sites), invariant_ranges(default_programs()))


def _mixed_states(rng, n):
    lam = rng.uniform(0.45, 1.28, n // 2)
    gam = rng.uniform(0.0, 0.14, n - n // 2)
    F = np.concatenate([uniaxial_state(lam).F, shear_state(gam).F])
    return state_from_F(F)


def _stress_fd(rng):
    model = _model()
    states = _mixed_states(rng, 10)
    worst = max(fd_stress_check(model, random_feasible_theta(model, rng), states)
                for _ in range(5))
    return worst <= 1e-6, f"worst relative gap {worst:.2e}"


def _reference(rng):
    model = _model()
    eye = state_from_F(np.eye(3))
    worst_psi, worst_p = 0.0, 0.0
    for _ in range(5):
        theta = random_feasible_theta(model, rng)
        worst_psi = max(worst_psi, abs(float(energy(model, theta, eye))))
        worst_p = max(worst_p, float(np.max(np.abs(piola_stress(model, theta, eye)))))
    ok = worst_psi <= 1e-12 and worst_p <= 1e-10
    return ok, f"|Psi(I)| <= {worst_psi:.1e}, |P(I)| <= {worst_p:.1e}"


def _qp_brute(rng):
    worst = 0.0
    for _ in range(20):
        p = int(rng.integers(2, 5))
        A = rng.standard_normal((p + 3, p))
        y = rng.standard_normal(p + 3)
        G = rng.standard_normal((3, p))
        h = rng.uniform(0.0, 1.0, 3)
        prob = ClsProblem(A, y, G, h)
        a, b = solve_cls(prob), brute_qp_oracle(prob)
        if a.status != "converged" or b.status != "converged":
            return False, f"statuses {a.status}/{b.status}"
        gap = abs(a.objective - b.objective) / max(1.0, abs(b.objective))
        worst = gap if not gap <= worst else worst  # NaN propagates as a failure
    return worst <= 1e-6, f"worst relative objective gap {worst:.2e}"


def _loss_consistency(rng):
    model = _model(("u1", "u2", "uJ", "c1J"))
    data = synth_dataset("separable", {"c1": 0.1, "kappa": 1.0})
    spec = LossSpec()
    worst = 0.0
    for _ in range(5):
        theta = random_feasible_theta(model, rng)
        L = loss(model, theta, data, spec)
        A, y = assemble_block_system(model, theta, data, 1, spec)
        r = A @ theta[model.block_indices(1)] - y
        worst = max(worst, abs(float(r @ r) - L) / L)
    return worst <= 1e-12, f"worst relative gap {worst:.2e}"


def _recovery(rng):
    data = synth_dataset("separable", {"c1": 0.1, "kappa": 1.0}, traction_free=True)
    model = assemble_model(AnsatzSpec.from_terms(("u1", "u2", "uJ")),
                           invariant_ranges(data.programs))
    res = alternate_optimize(model, data, LossSpec(), CalibrationOptions())
    r2 = min(res.r2_per_mode.values())
    hist = np.asarray(res.loss_history)[res.feasible_from:]
    rise = float(np.max(np.diff(hist) / np.maximum(hist[:-1], 1e-300), initial=0.0))
    ok = r2 >= 0.999 and res.sqrt_loss < 0.03 and rise <= 1e-9
    return ok, f"sqrt(L)={res.sqrt_loss:.2e}, min R2={r2:.6f}, max rise={rise:.1e}"


CHECKS = (
    ("spline delta property", _spline_delta),
    ("cubic reproduction", _cubic_reproduction),
    ("uniaxial invariants", _invariants),
    ("stress vs finite differences", _stress_fd),
    ("stress-free reference", _reference),
    ("QP vs exhaustive KKT", _qp_brute),
    ("loss vs block system", _loss_consistency),
    ("separable recovery", _recovery),
)


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            passed, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check, not a crashed command
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(passed), f"{detail} ({time.perf_counter() - t0:.2f} s)"))
    return out
