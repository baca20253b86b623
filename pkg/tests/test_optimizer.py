import json
import warnings

import numpy as np
import pytest

from robustgate.optimizer import (SCATTER_EPSILON, Objective, OptimizationConfig,
                                  OptimizationOutcome, Scheme, evaluate_pulse,
                                  multistart_scatter, optimize, random_guess, stage_a,
                                  stage_a_value, time_sweep)
from robustgate.transmon import TransmonModel

from conftest import optimized


def naive_gradient(obj, x, terms, h):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (obj.value(x + e, terms) - obj.value(x - e, terms)) / (2 * h)
    return g


@pytest.mark.parametrize("terms", [("j_u",), ("j_r",), ("j_l",), ("j_u", "j_r")])
def test_structured_gradient_matches_naive(terms, model6):
    cfg = OptimizationConfig(substeps=4)
    obj = Objective(model6, 1.1, cfg)
    x = random_guess(15, 3)
    _, grads = obj.evaluate(x, terms)
    g = sum(grads[k] for k in terms)
    ref = naive_gradient(obj, x, terms, cfg.gradient_step)
    assert np.max(np.abs(g - ref)) <= 1e-7 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("terms", [("j_u",), ("j_r",), ("j_l",)])
def test_gradient_stable_under_step_doubling(terms, model6):
    x = random_guess(15, 4)
    g1 = Objective(model6, 1.3, OptimizationConfig()).evaluate(x, terms)[1][terms[0]]
    g2 = Objective(model6, 1.3, OptimizationConfig(gradient_step=2e-6)).evaluate(x, terms)[1][
        terms[0]]
    assert np.max(np.abs(g1 - g2)) <= 1e-5


def test_objective_values_match_cost_report(model6):
    cfg = OptimizationConfig(perturbation="q")
    x = random_guess(15, 9)
    vals, _ = Objective(model6, 1.3, cfg).evaluate(x, ("j_u", "j_r", "j_l"))
    from robustgate.transmon import ControlPulse
    c = evaluate_pulse(model6, ControlPulse.from_params(x, 1.3), cfg)
    assert vals["j_u"] == pytest.approx(c.j_u, abs=1e-12)
    assert vals["j_r"] == pytest.approx(c.j_r, rel=1e-10)
    assert vals["j_l"] == pytest.approx(c.j_l, abs=1e-12)


def test_stage_a_history_monotone(model6):
    r = stage_a(model6, OptimizationConfig(), random_guess(15, 1), 0.8)
    h = np.array(r.history)
    assert np.all(np.diff(h) <= 1e-12 * np.maximum(1.0, h[:-1]))
    assert r.value <= h[0]


def test_short_gate_reaches_target_for_most_seeds(model6):
    good = [optimized("T", 0.6, seed=s).cost.j_u < 1e-4 for s in range(4)]
    assert sum(good) >= 3


def test_too_short_gate_stays_bounded_away(model6):
    o = optimized("T", 0.3)
    assert o.cost.j_u > 1e-2


def test_optimal_start_terminates_quickly(model6):
    best = optimized("T", 1.0)
    again = optimize(model6, OptimizationConfig(), 1.0, initial_guess=best.pulse.params)
    assert again.stage_a_iters <= 2
    assert again.cost.j_u <= best.cost.j_u + 1e-12


def test_degenerate_epsilon_one(model6):
    # any pulse satisfies J_U <= 1, so stage B just minimizes J_R
    cfg = OptimizationConfig(scheme="TR", epsilon_a=1.0, max_iters_per_stage=50)
    o = optimize(model6, cfg, 1.0)
    assert o.feasible and o.cost.j_u <= 1.0
    assert o.cost.j_r < evaluate_pulse(model6, o.pulse.__class__.from_params(
        random_guess(15, 0), 1.0), cfg).j_r


def test_determinism(model6):
    cfg = OptimizationConfig(scheme="TR", seed=5, max_iters_per_stage=60, stage_b_iters=30)
    a, b = optimize(model6, cfg, 1.2), optimize(model6, cfg, 1.2)
    assert np.array_equal(a.pulse.params, b.pulse.params)
    assert a.cost.j_r == b.cost.j_r


@pytest.mark.parametrize("scheme", ["TR", "TL", "TRL"])
def test_two_stage_outcome_feasible(scheme, model6):
    eps = SCATTER_EPSILON[scheme]
    o = optimized(scheme, 1.3, epsilon_a=eps)
    assert o.feasible
    assert stage_a_value(o) <= eps * (1 + 1e-6)
    assert np.all(np.abs(o.pulse.params) <= 1.0)


def test_robust_pulse_has_smaller_curvature(model6):
    assert optimized("TR", 1.3).cost.j_r < 0.1 * optimized("T", 1.3).cost.j_r


@pytest.mark.parametrize("scheme", ["TR", "TL", "TRL"])
def test_feasibility_certificate_at_verification_size(scheme, model11):
    # the N = 6 optimum must remain feasible when re-evaluated at N = 11
    eps = SCATTER_EPSILON[scheme]
    o = optimized(scheme, 1.3, epsilon_a=eps)
    cfg = OptimizationConfig(scheme=scheme, epsilon_a=eps)
    big = evaluate_pulse(model11, o.pulse, cfg)
    ja = big.j_u + big.j_r if scheme == "TRL" else big.j_u
    assert ja <= eps * (1 + 1e-6)


def test_time_sweep_descending_and_warm_started(model6):
    cfg = OptimizationConfig(max_iters_per_stage=300)
    out = time_sweep(model6, cfg, [1.0, 0.8])
    assert [o.pulse.total_time for o in out] == [1.0, 0.8]
    assert all(o.cost.j_u < 1e-4 for o in out)
    with pytest.raises(ValueError):
        time_sweep(model6, cfg, [0.8, 1.0])


def test_scatter_single_start(model6):
    cfg = OptimizationConfig(max_iters_per_stage=40, stage_b_iters=20)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = multistart_scatter(model6, ["T", "TR"], 1, 1.3, config=cfg, seed0=2)
    assert [(r.scheme, r.seed) for r in rows] == [("T", 2), ("TR", 2)]
    with pytest.raises(ValueError):
        multistart_scatter(model6, ["T"], 0, 1.3)


def test_outcome_roundtrip():
    o = optimized("T", 0.6)
    back = OptimizationOutcome.from_dict(json.loads(o.to_json()))
    assert np.array_equal(back.pulse.params, o.pulse.params)
    assert back.scheme is Scheme.T and back.cost.j_u == o.cost.j_u
    assert OptimizationConfig.from_dict(o.metadata["config"]) == OptimizationConfig(
        **{**o.metadata["config"]})


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizationConfig(epsilon_a=0)
    with pytest.raises(ValueError):
        OptimizationConfig(substeps=3)
    with pytest.raises(ValueError):
        OptimizationConfig(scheme="XY")
    assert OptimizationConfig(perturbation="n2").perturbation.value == "n2"
    assert TransmonModel().n_levels == 6
