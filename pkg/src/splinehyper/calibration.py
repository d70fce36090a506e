"""Loss, block systems and the alternating constrained least-squares fit."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .constitutive import PINNED_VALUE, EnergyModel, _Tables
from .errors import NumericalError
from .kinematics import MODES, DeformationProgram, state_from_F
from .qp import DEFAULT_RIDGE, ClsProblem, kkt_check, project_feasible, solve_cls

MAIN_COMPONENT = {"UT": (0, 0), "UC": (0, 0), "SS": (0, 1)}
LATERAL_COMPONENT = (1, 1)
DEFAULT_SHEAR_WEIGHT = 100.0**2
SUCCESS_THRESHOLD = 0.03
_FEAS_TOL = 1e-8
_KKT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Curve:
    """One loading curve: controls and the measured main Piola component."""

    program: DeformationProgram
    measured: np.ndarray

    def __post_init__(self):
        measured = np.array(self.measured, dtype=float).reshape(-1)
        if measured.shape != self.program.controls.shape:
            raise ValueError("measured stresses must match the number of controls")
        if not np.all(np.isfinite(measured)):
            raise ValueError("measured stresses must be finite")
        d = np.diff(self.program.controls)
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError(f"{self.mode} controls must be strictly monotone")
        measured.setflags(write=False)
        object.__setattr__(self, "measured", measured)

    @property
    def mode(self) -> str:
        return self.program.mode

    @property
    def controls(self) -> np.ndarray:
        return self.program.controls


@dataclass(frozen=True, eq=False)
class ExperimentDataset:
    """At most one curve per mode (UT, UC, SS), kept in that order."""

    curves: tuple

    def __post_init__(self):
        curves = tuple(self.curves)
        modes = [c.mode for c in curves]
        if not curves:
            raise ValueError("dataset has no curves")
        if len(set(modes)) != len(modes):
            raise ValueError("at most one curve per mode")
        curves = tuple(sorted(curves, key=lambda c: MODES.index(c.mode)))
        for c in curves:
            if not np.max(np.abs(c.measured)) > 0:
                raise ValueError(f"{c.mode} curve has zero maximum stress")
        object.__setattr__(self, "curves", curves)

    @classmethod
    def from_arrays(cls, data: dict, lambda_pre: float = 0.8) -> "ExperimentDataset":
        """``data`` maps a mode to ``(controls, measured)``."""
        return cls(tuple(
            Curve(DeformationProgram(mode, ctrl, lambda_pre), meas)
            for mode, (ctrl, meas) in data.items()
        ))

    @property
    def modes(self) -> tuple[str, ...]:
        return tuple(c.mode for c in self.curves)

    @property
    def programs(self) -> list[DeformationProgram]:
        return [c.program for c in self.curves]

    def curve(self, mode: str) -> Curve:
        for c in self.curves:
            if c.mode == mode:
                return c
        raise KeyError(mode)

    @property
    def counts(self) -> dict:
        return {c.mode: c.controls.size for c in self.curves}

    @property
    def maxima(self) -> dict:
        return {c.mode: float(np.max(np.abs(c.measured))) for c in self.curves}


@dataclass(frozen=True)
class LossSpec:
    shear_weight: float = DEFAULT_SHEAR_WEIGHT
    lateral_penalty: bool = True

    def __post_init__(self):
        if self.shear_weight < 0:
            raise ValueError("shear_weight must be non-negative")

    def mode_weights(self, dataset: ExperimentDataset) -> dict:
        """Per-mode factor multiplying that mode's sum of squared residuals."""
        out = {}
        for c in dataset.curves:
            w = 1.0 / (c.controls.size * dataset.maxima[c.mode])
            out[c.mode] = w * self.shear_weight if c.mode == "SS" else w
        return out


@dataclass(frozen=True)
class CalibrationOptions:
    epsilon: float = 1e-8
    n_max: int = 200
    rng_seed: int = 0
    init_scale: float = 1.0
    ridge: float = DEFAULT_RIDGE
    success_threshold: float = SUCCESS_THRESHOLD

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError("n_max must be an integer >= 1")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


class _Design:
    """Dataset states with cached spline tables for repeated evaluations."""

    def __init__(self, model: EnergyModel, dataset: ExperimentDataset, spec: LossSpec):
        self.model = model
        self.dataset = dataset
        self.spec = spec
        F = np.concatenate([c.program.deformation_gradients() for c in dataset.curves])
        self.tables = _Tables(model, state_from_F(F))
        self.mode_of = np.concatenate([[c.mode] * c.controls.size for c in dataset.curves])
        self.measured = np.concatenate([c.measured for c in dataset.curves])
        self.uniaxial = np.isin(self.mode_of, ("UT", "UC"))
        self.main = np.array([0 if m != "SS" else 1 for m in self.mode_of])
        weights = spec.mode_weights(dataset)
        self.weight = np.array([weights[m] for m in self.mode_of])

    def stress(self, theta) -> np.ndarray:
        return self.tables.stress(theta)

    def loss(self, theta) -> float:
        P = self.stress(theta)
        total = 0.0
        at = 0
        for c in self.dataset.curves:
            sl = slice(at, at + c.controls.size)
            at = sl.stop
            i, j = MAIN_COMPONENT[c.mode]
            res = P[sl, i, j] - c.measured
            s = np.sum(res**2)
            if c.program.is_uniaxial and self.spec.lateral_penalty:
                s += np.sum(P[sl, 1, 1] ** 2)
            total += s / (c.controls.size * self.dataset.maxima[c.mode]) * (
                self.spec.shear_weight if c.mode == "SS" else 1.0)
        return float(total)

    def system(self, theta, block: int | None):
        """Weighted rows (main rows, then lateral rows) over a block's columns."""
        jac = self.tables.jacobian(theta, components=[(0, 0), (0, 1), (1, 1)])
        m = jac.shape[0]
        sw = np.sqrt(self.weight)
        main = jac[np.arange(m), self.main, :] * sw[:, None]
        rows = [main]
        rhs = [self.measured * sw]
        if self.spec.lateral_penalty:
            lat = jac[self.uniaxial, 2, :] * sw[self.uniaxial, None]
            rows.append(lat)
            rhs.append(np.zeros(lat.shape[0]))
        A = np.vstack(rows)
        y = np.concatenate(rhs)
        if block is not None:
            A = A[:, self.model.block_indices(block)]
        return A, y


def loss(model: EnergyModel, theta, dataset: ExperimentDataset, spec: LossSpec = LossSpec()) -> float:
    """Mode-normalized squared stress misfit plus lateral-stress penalty."""
    return _Design(model, dataset, spec).loss(theta)


def assemble_block_system(model: EnergyModel, theta, dataset: ExperimentDataset,
                          block: int, spec: LossSpec = LossSpec()):
    """``(A, y)`` with ``||A theta[block] - y||^2 == loss`` (other block frozen)."""
    if block not in (1, 2):
        raise ValueError(f"block must be 1 or 2, got {block!r}")
    return _Design(model, dataset, spec).system(theta, block)


def r_squared(predicted, measured) -> float:
    predicted = np.asarray(predicted, dtype=float)
    measured = np.asarray(measured, dtype=float)
    if measured.size < 2 or predicted.shape != measured.shape:
        raise ValueError("need at least two paired samples")
    ss_tot = np.sum((measured - measured.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("measured values have zero variance")
    return float(1.0 - np.sum((predicted - measured) ** 2) / ss_tot)


@dataclass(eq=False)
class CalibrationResult:
    theta_star: np.ndarray
    loss_history: list
    sqrt_loss: float
    r2_per_mode: dict
    max_lateral_ratio: float
    predicted_curves: dict
    status: str
    n_iterations: int
    n_block_solves: int
    active_counts: dict
    max_rejected_increase: float
    term_contributions: dict
    seed: int
    feasible_from: int
    model: EnergyModel = field(repr=False)

    def success(self, threshold: float = SUCCESS_THRESHOLD) -> bool:
        return bool(self.sqrt_loss < threshold)

    def metrics(self) -> dict:
        return {
            "status": self.status,
            "seed": self.seed,
            "sqrt_loss": self.sqrt_loss,
            "loss": self.loss_history[-1],
            "loss_history": list(self.loss_history),
            "n_iterations": self.n_iterations,
            "n_block_solves": self.n_block_solves,
            "r2_per_mode": dict(self.r2_per_mode),
            "max_lateral_ratio": self.max_lateral_ratio,
            "active_constraints": dict(self.active_counts),
            "max_rejected_increase": self.max_rejected_increase,
            "feasible_from": self.feasible_from,
            "term_contributions": self.term_contributions,
        }


def initial_guess(model: EnergyModel, seed: int, scale: float = 1.0) -> np.ndarray:
    """Standard-normal draw (PCG64 stream of ``seed``) moved onto the equality set.

    The correction is the minimum-norm one; inequalities are left to the
    first sweep, which makes every block feasible.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    theta0 = scale * rng.standard_normal(model.n_params)
    return project_to_equalities(model, theta0)


def project_to_equalities(model: EnergyModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta - np.linalg.lstsq(model.A_eq, model.A_eq @ theta - model.b_eq, rcond=None)[0]


def project_to_feasible(model: EnergyModel, theta) -> np.ndarray:
    """Least-distance projection onto the model's equality and inequality set."""
    A_eq, b_eq, G, h, lb = model.constraint_system()
    if lb is not None:
        G = np.vstack([G, -np.eye(model.n_params)])
        h = np.concatenate([h, -lb])
    x = project_feasible(A_eq, b_eq, G, h, np.asarray(theta, dtype=float))
    if x is None:
        raise NumericalError("model constraints are infeasible")
    return x


def _summarize(design: _Design, theta) -> tuple:
    P = design.stress(theta)
    r2, predicted = {}, {}
    at = 0
    lat_max, p11_max = 0.0, 0.0
    for c in design.dataset.curves:
        sl = slice(at, at + c.controls.size)
        at = sl.stop
        i, j = MAIN_COMPONENT[c.mode]
        predicted[c.mode] = {
            "control": np.array(c.controls),
            "P11": P[sl, 0, 0], "P22": P[sl, 1, 1], "P12": P[sl, 0, 1],
        }
        r2[c.mode] = r_squared(P[sl, i, j], c.measured) if c.controls.size >= 2 else float("nan")
        if c.program.is_uniaxial:
            lat_max = max(lat_max, float(np.max(np.abs(P[sl, 1, 1]))))
            p11_max = max(p11_max, float(np.max(np.abs(c.measured))))
    ratio = lat_max / p11_max if p11_max > 0 else float("nan")

    contributions = {}
    terms = design.tables.term_energies(theta)
    for term, vals in terms.items():
        at = 0
        per_mode = {}
        for c in design.dataset.curves:
            sl = slice(at, at + c.controls.size)
            at = sl.stop
            per_mode[c.mode] = float(np.max(np.abs(vals[sl])))
        contributions[term] = per_mode
    return r2, predicted, ratio, contributions


def ridge_center(model: EnergyModel) -> np.ndarray:
    """Neutral parameters: every function at its pinned reference value.

    That is zero everywhere except the volumetric coupling factors, which sit
    at one, so the ridge pulls towards the uncoupled energy rather than
    towards switching couplings off.
    """
    center = np.zeros(model.n_params)
    for fn, sl in model.layout.items():
        center[sl] = PINNED_VALUE[fn]
    return center


def _centered_solve(problem: ClsProblem, center: np.ndarray, x0):
    """Solve with the ridge term ``rho ||x - center||^2`` instead of ``rho ||x||^2``."""
    A = problem.A
    lb = None if problem.lower_bounds is None else problem.lower_bounds - center
    shifted = ClsProblem(A, problem.y - A @ center,
                         problem.A_ineq, problem.b_ineq - problem.A_ineq @ center,
                         problem.A_eq, problem.b_eq - problem.A_eq @ center,
                         lb, problem.ridge)
    sol = solve_cls(shifted, x0=np.asarray(x0, dtype=float) - center)
    if sol.status == "converged":
        # Re-fitted multipliers are not unique on degenerate shape rows, so
        # only admissibility and stationarity are asserted.
        report = kkt_check(shifted, sol)
        if report.primal_violation > _FEAS_TOL or report.stationarity > _KKT_TOL:
            raise NumericalError(f"block solve failed its KKT check: {report}")
    sol.theta = sol.theta + center
    sol.objective = problem.objective(sol.theta)
    return sol


def alternate_optimize(model: EnergyModel, dataset: ExperimentDataset,
                       spec: LossSpec = LossSpec(),
                       options: CalibrationOptions = CalibrationOptions(),
                       theta0=None) -> CalibrationResult:
    """Alternating constrained least squares over the two parameter blocks.

    Each sweep solves block 1 with block 2 frozen, then block 2 with block 1
    frozen; it stops once the relative loss change of a sweep drops below
    ``epsilon`` (relative to ``max(1, loss)``) or after ``n_max`` sweeps.

    Each block problem carries the ridge ``rho ||x - c||^2``.  While the
    incumbent still breaks a shape row (only the random start can), ``c`` is
    the neutral :func:`ridge_center` and the solve is accepted whatever its
    loss.  Afterwards ``c`` is the incumbent block itself, a proximal step:
    the block minimizer stays unique on rank-deficient blocks, the incumbent
    bounds the new objective, and the ridge bias fades over the sweeps.
    Candidates that still come out worse (rounding) are discarded and the
    largest such increase is reported.

    ``theta0`` only satisfies the equalities, so the first solve of a block
    whose incumbent breaks a shape row is taken whatever its loss.
    ``feasible_from`` is the first history index with a fully admissible
    iterate; from there on the history cannot increase.
    """
    design = _Design(model, dataset, spec)
    theta = (initial_guess(model, options.rng_seed, options.init_scale)
             if theta0 is None else project_to_equalities(model, theta0))
    L = design.loss(theta)
    history = [L]
    status = "max_iter"
    n_solves = 0
    rejected = 0.0
    feasible_from = 0
    active_counts = {}
    systems = {b: model.constraint_system(b) for b in (1, 2)}
    center = ridge_center(model)
    n_iter = 0
    for n_iter in range(1, options.n_max + 1):
        L_prev = L
        for block in (1, 2):
            idx = model.block_indices(block)
            A, y = design.system(theta, block)
            A_eq, b_eq, G, h, lb = systems[block]
            x_inc = theta[idx]
            problem = ClsProblem(A, y, G, h, A_eq, b_eq, lb, options.ridge)
            feasible_start = (G.shape[0] == 0 or np.all(G @ x_inc <= h + _FEAS_TOL)) and (
                lb is None or np.all(x_inc >= lb - _FEAS_TOL))
            # Only the random start can violate the inequalities.  Its block is
            # solved with the ridge at the neutral centre and taken whatever the
            # loss; every later solve is centred on the admissible incumbent,
            # whose own objective then bounds the new one.
            sol = _centered_solve(problem, x_inc if feasible_start else center[idx], x_inc)
            n_solves += 1
            if sol.status == "infeasible":
                raise NumericalError(f"block {block} subproblem infeasible")
            candidate = theta.copy()
            candidate[idx] = sol.theta
            L_new = design.loss(candidate)
            if not np.isfinite(L_new):
                raise NumericalError("loss became non-finite")
            if not feasible_start:
                theta, L = candidate, L_new
                active_counts[f"block{block}"] = len(sol.active_set)
                feasible_from = len(history)
            elif L_new <= L:
                theta, L = candidate, L_new
                active_counts[f"block{block}"] = len(sol.active_set)
            else:
                rejected = max(rejected, (L_new - L) / max(L, 1e-300))
            history.append(L)
        if abs(L - L_prev) / max(1.0, L_prev) < options.epsilon:
            status = "converged"
            break

    r2, predicted, ratio, contributions = _summarize(design, theta)
    return CalibrationResult(
        theta_star=theta, loss_history=history, sqrt_loss=float(np.sqrt(L)),
        r2_per_mode=r2, max_lateral_ratio=ratio, predicted_curves=predicted,
        status=status, n_iterations=n_iter, n_block_solves=n_solves,
        active_counts=active_counts, max_rejected_increase=rejected,
        term_contributions=contributions, seed=options.rng_seed,
        feasible_from=feasible_from, model=model,
    )


def normalized_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / denom) if denom > 0 else 0.0


@dataclass(eq=False)
class EnsembleReport:
    seeds: list
    results: list
    sqrt_losses: list
    successes: list
    distances: np.ndarray
    contributions: list

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances)) if self.distances.size else 0.0

    @property
    def all_success(self) -> bool:
        return all(self.successes)

    def to_dict(self) -> dict:
        return {
            "seeds": list(self.seeds),
            "sqrt_loss": list(self.sqrt_losses),
            "success": list(self.successes),
            "pairwise_distance": self.distances.tolist(),
            "max_pairwise_distance": self.max_distance,
            "term_contributions": list(self.contributions),
            "r2_per_mode": [r.r2_per_mode for r in self.results],
        }


def seed_ensemble(model: EnergyModel, dataset: ExperimentDataset,
                  spec: LossSpec = LossSpec(),
                  options: CalibrationOptions = CalibrationOptions(),
                  n_seeds: int = 8, map_fn=map) -> EnsembleReport:
    """Independent calibrations for seeds ``rng_seed .. rng_seed + n_seeds - 1``.

    ``map_fn`` may be a parallel map; results are ordered by seed regardless.
    """
    if n_seeds < 2:
        raise ValueError("an ensemble needs at least two seeds")
    seeds = [options.rng_seed + k for k in range(n_seeds)]

    def run(seed):
        opts = CalibrationOptions(options.epsilon, options.n_max, seed, options.init_scale,
                                  options.ridge, options.success_threshold)
        return alternate_optimize(model, dataset, spec, opts)

    results = list(map_fn(run, seeds))
    D = np.zeros((n_seeds, n_seeds))
    for a, b in itertools.combinations(range(n_seeds), 2):
        D[a, b] = D[b, a] = normalized_distance(results[a].theta_star, results[b].theta_star)
    return EnsembleReport(
        seeds=seeds, results=results,
        sqrt_losses=[r.sqrt_loss for r in results],
        successes=[r.success(options.success_threshold) for r in results],
        distances=D,
        contributions=[r.term_contributions for r in results],
    )
