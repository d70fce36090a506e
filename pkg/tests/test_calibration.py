import numpy as np
import pytest

from splinehyper.calibration import (CalibrationOptions, Curve, ExperimentDataset, LossSpec,
                                     alternate_optimize, assemble_block_system, initial_guess,
                                     loss, normalized_distance, project_to_equalities,
                                     r_squared, ridge_center, seed_ensemble)
from splinehyper.constitutive import AnsatzSpec, assemble_model, piola_stress
from splinehyper.kinematics import DeformationProgram, invariant_ranges, state_from_F
from splinehyper.oracle import random_feasible_theta, synth_dataset

PARAMS = {"c1": 0.1, "kappa": 1.0}
UNCOUPLED = ("u1", "u2", "uJ")


@pytest.fixture(scope="module")
def separable_tf():
    return synth_dataset("separable", PARAMS, traction_free=True)


def model_for(data, terms, sites=8):
    return assemble_model(AnsatzSpec.from_terms(terms, sites), invariant_ranges(data.programs))


def feasible_trace(model, data, spec, opts, n):
    """theta after each of the first n sweeps (each run is deterministic)."""
    out = []
    for k in range(1, n + 1):
        o = CalibrationOptions(opts.epsilon, k, opts.rng_seed, opts.init_scale, opts.ridge)
        out.append(alternate_optimize(model, data, spec, o))
    return out


# -- r_squared -----------------------------------------------------------------


def test_r_squared_examples():
    m = np.array([1.0, 2.0, 3.0])
    assert r_squared(m, m) == 1.0
    assert r_squared(np.full(3, 2.0), m) == 0.0
    assert r_squared(np.array([3.0, 2.0, 1.0]), m) == pytest.approx(-3.0)
    with pytest.raises(ValueError):
        r_squared(np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        r_squared([1.0], [1.0])


# -- datasets ------------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError):
        Curve(DeformationProgram("UT", [1.0, 1.2, 1.1]), [0.0, 0.1, 0.2])
    with pytest.raises(ValueError):
        Curve(DeformationProgram("UT", [1.0, 1.2]), [0.0])
    with pytest.raises(ValueError):
        ExperimentDataset.from_arrays({"UT": ([1.0, 1.2], [0.0, 0.0])})
    d = ExperimentDataset.from_arrays({"SS": ([0, 0.1], [0, 0.2]), "UT": ([1.0, 1.3], [0.0, 0.5])})
    assert d.modes == ("UT", "SS")
    assert d.counts == {"UT": 2, "SS": 2}
    assert d.maxima["UT"] == 0.5


# -- loss and block systems ----------------------------------------------------


def test_loss_zero_for_reproducing_theta():
    # inside the ansatz and with the lateral rows off, the fit is exact
    data = synth_dataset("separable", PARAMS)
    m = model_for(data, ["u1", "uJ"])
    theta = np.zeros(m.n_params)
    theta[m.layout["I1"]] = 0.1 * (m.spaces["I1"].sites - 3)
    theta[m.layout["J"]] = 0.5 * (m.spaces["J"].sites - 1) ** 2
    assert loss(m, theta, data, LossSpec(lateral_penalty=False)) <= 1e-24


def test_single_point_loss():
    data = ExperimentDataset.from_arrays({"UT": ([1.2], [0.5])})
    m = assemble_model(AnsatzSpec.from_terms(UNCOUPLED), invariant_ranges(data.programs))
    r = -0.5  # the zero parameter vector predicts no stress at all
    assert loss(m, np.zeros(m.n_params), data) == pytest.approx(r**2 / (1 * 0.5), rel=1e-14)


def test_pure_volumetric_loss():
    programs = [DeformationProgram("UT", np.linspace(1, 1.3, 7)),
                DeformationProgram("UC", np.linspace(1, 0.4, 7))]
    data = synth_dataset("separable", {"c1": 0.0, "kappa": 1.0}, programs)
    m = model_for(data, ["uJ"])
    theta = np.zeros(m.n_params)
    theta[m.layout["J"]] = 0.5 * (m.spaces["J"].sites - 1) ** 2
    assert loss(m, theta, data, LossSpec(lateral_penalty=False)) <= 1e-12
    # with lateral rows the loss is exactly the P22 penalty of this energy
    lateral = 0.0
    for c in data.curves:
        P = piola_stress(m, theta, c.program.states())
        lateral += np.sum(P[:, 1, 1] ** 2) / (c.controls.size * data.maxima[c.mode])
    assert loss(m, theta, data) == pytest.approx(lateral, rel=1e-12)


def test_block_system_row_count():
    data = ExperimentDataset.from_arrays({"UT": ([1.0, 1.1, 1.2], [0.0, 0.1, 0.2]),
                                          "SS": ([0.0, 0.1], [0.0, 0.05])})
    m = model_for(data, UNCOUPLED)
    A, y = assemble_block_system(m, np.zeros(m.n_params), data, 1)
    assert A.shape == (8, m.block_indices(1).size) and y.shape == (8,)
    assert np.all(y[5:] == 0)  # main rows first, then the zero-target lateral rows


def test_volumetric_columns():
    data = ExperimentDataset.from_arrays({"UT": ([1.05, 1.2], [0.05, 0.2])})
    m = model_for(data, ["uJ"])
    A, _ = assemble_block_system(m, np.zeros(m.n_params), data, 1, LossSpec(lateral_penalty=False))
    s = data.curves[0].program.states()
    w = np.sqrt(1.0 / (2 * 0.2))
    gamma11 = s.J * (s.F @ s.C_inv)[:, 0, 0]
    assert np.allclose(A, w * gamma11[:, None] * m.spaces["J"].sensitivity(s.J, 1), atol=1e-14)


@pytest.mark.parametrize("terms", [UNCOUPLED, UNCOUPLED + ("c1J",), UNCOUPLED + ("c1J", "c2J", "c12")])
@pytest.mark.parametrize("block", [1, 2])
def test_system_reproduces_loss(terms, block, separable_tf, rng):
    m = model_for(separable_tf, terms)
    spec = LossSpec()
    for _ in range(5):
        theta = random_feasible_theta(m, rng)
        A, y = assemble_block_system(m, theta, separable_tf, block, spec)
        r = A @ theta[m.block_indices(block)] - y
        L = loss(m, theta, separable_tf, spec)
        assert abs(r @ r - L) <= 1e-12 * L


def test_invalid_block(separable_tf):
    m = model_for(separable_tf, UNCOUPLED)
    with pytest.raises(ValueError):
        assemble_block_system(m, np.zeros(m.n_params), separable_tf, 0)


def test_options_validation():
    for bad in ({"epsilon": 0}, {"n_max": 0}, {"ridge": -1}, {"init_scale": -1}):
        with pytest.raises(ValueError):
            CalibrationOptions(**bad)
    with pytest.raises(ValueError):
        LossSpec(shear_weight=-1)


# -- initial guess -------------------------------------------------------------


def test_initial_guess_on_equalities(separable_tf):
    m = model_for(separable_tf, UNCOUPLED + ("c1J", "c2J"))
    theta0 = initial_guess(m, 3)
    assert np.max(np.abs(m.A_eq @ theta0 - m.b_eq)) <= 1e-12
    assert np.array_equal(theta0, initial_guess(m, 3))
    rng = np.random.Generator(np.random.PCG64(3))
    raw = rng.standard_normal(m.n_params)
    assert np.allclose(theta0, project_to_equalities(m, raw))
    c = ridge_center(m)
    assert np.all(c[m.layout["g"]] == 1) and np.all(c[m.layout["h"]] == 0)


# -- alternation ---------------------------------------------------------------


def test_recovers_model_inside_ansatz():
    data = synth_dataset("separable", PARAMS)
    m = model_for(data, UNCOUPLED)
    res = alternate_optimize(m, data, LossSpec(lateral_penalty=False))
    scale = max(data.maxima.values())
    assert res.sqrt_loss < 1e-4 * scale
    assert min(res.r2_per_mode.values()) >= 0.999


def test_two_seeds_agree_uncoupled(separable_tf):
    m = model_for(separable_tf, UNCOUPLED)
    a = alternate_optimize(m, separable_tf, options=CalibrationOptions(rng_seed=0))
    b = alternate_optimize(m, separable_tf, options=CalibrationOptions(rng_seed=1))
    assert normalized_distance(a.theta_star, b.theta_star) < 1e-6


def test_single_sweep_contract(separable_tf):
    m = model_for(separable_tf, UNCOUPLED + ("c1J",))
    res = alternate_optimize(m, separable_tf, options=CalibrationOptions(n_max=1))
    assert res.status == "max_iter"
    assert res.n_iterations == 1
    assert res.n_block_solves == 2
    assert len(res.loss_history) == 3  # theta0, then one entry per block solve


@pytest.mark.parametrize("terms", [UNCOUPLED, UNCOUPLED + ("c1J",), ("u1", "u2", "c1J", "c2J", "c12")])
def test_monotone_and_feasible_iterates(terms, separable_tf):
    m = model_for(separable_tf, terms)
    spec, opts = LossSpec(), CalibrationOptions(rng_seed=2)
    full = alternate_optimize(m, separable_tf, spec, opts)
    hist = np.asarray(full.loss_history)[full.feasible_from:]
    assert full.feasible_from <= 3
    assert np.all(np.diff(hist) <= 1e-9 * hist[:-1])
    for res in feasible_trace(m, separable_tf, spec, opts, 4) + [full]:
        t = res.theta_star
        assert np.max(np.abs(m.A_eq @ t - m.b_eq)) <= 1e-10
        assert np.all(m.A_ineq @ t <= m.b_ineq + 1e-8)
        # a prefix of sweeps reproduces the prefix of the full history
        n = len(res.loss_history)
        assert res.loss_history == full.loss_history[:n]


def test_positive_bounds_respected(separable_tf):
    m = assemble_model(AnsatzSpec.from_terms(UNCOUPLED + ("c1J",)),
                       invariant_ranges(separable_tf.programs), positive_bounds=True)
    res = alternate_optimize(m, separable_tf)
    assert np.all(res.theta_star >= -1e-8)


def test_deterministic_result(separable_tf):
    m = model_for(separable_tf, UNCOUPLED + ("c1J",))
    a = alternate_optimize(m, separable_tf, options=CalibrationOptions(rng_seed=4))
    b = alternate_optimize(m, separable_tf, options=CalibrationOptions(rng_seed=4))
    assert np.array_equal(a.theta_star, b.theta_star)
    assert a.loss_history == b.loss_history
    assert a.metrics() == b.metrics()


def test_result_summary(separable_tf):
    m = model_for(separable_tf, UNCOUPLED)
    res = alternate_optimize(m, separable_tf)
    assert set(res.r2_per_mode) == {"UT", "UC", "SS"}
    assert res.sqrt_loss == pytest.approx(np.sqrt(loss(m, res.theta_star, separable_tf)))
    pred = res.predicted_curves["UT"]
    P = piola_stress(m, res.theta_star, state_from_F(separable_tf.curve("UT").program.deformation_gradients()))
    assert np.array_equal(pred["P11"], P[:, 0, 0])
    assert set(res.term_contributions) == set(UNCOUPLED)
    assert res.success() and res.status == "converged"


# -- ensembles -----------------------------------------------------------------


def test_ensemble_needs_two_seeds(separable_tf):
    m = model_for(separable_tf, UNCOUPLED)
    with pytest.raises(ValueError):
        seed_ensemble(m, separable_tf, n_seeds=1)


def test_ensemble_order_independent_of_map(separable_tf):
    from concurrent.futures import ThreadPoolExecutor

    m = model_for(separable_tf, UNCOUPLED)
    serial = seed_ensemble(m, separable_tf, n_seeds=3)
    with ThreadPoolExecutor(3) as pool:
        par = seed_ensemble(m, separable_tf, n_seeds=3, map_fn=pool.map)
    assert serial.seeds == par.seeds == [0, 1, 2]
    for a, b in zip(serial.results, par.results):
        assert np.array_equal(a.theta_star, b.theta_star)
    assert np.array_equal(serial.distances, par.distances)
    d = serial.to_dict()
    assert len(d["pairwise_distance"]) == 3 and all(d["success"])
