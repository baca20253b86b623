import numpy as np
import pytest

from robustgate.costfn import perturbed_fidelity
from robustgate.propagate import (QuadratureError, evolve_stack, final_unitaries, propagate,
                                  propagate_perturbed, propagate_sampled, simpson_weights)
from robustgate.transmon import ControlPulse, internal_time, projector

from conftest import optimized

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def test_drift_only_is_diagonal_phases(model6):
    t = 0.83
    rec = propagate(model6, ControlPulse.zeros(15, t))
    eps = np.diag(model6.drift()).real
    assert np.allclose(rec.final, np.diag(np.exp(-1j * eps * internal_time(t))), atol=1e-12)


def test_two_level_pi_pulse():
    # T = T_Omega / 2 is pi in internal time
    snaps, _ = evolve_stack(np.array([0.5 * SX] * 4), np.pi / 4, substeps=2)
    assert np.allclose(snaps[-1], -1j * SX, atol=1e-12)


def test_record_layout(model6, rng):
    p = ControlPulse.random(15, 1.1, rng)
    rec = propagate(model6, p, 8)
    assert rec.times[0] == 0 and rec.times[-1] == pytest.approx(1.1)
    assert np.all(np.diff(rec.times) > 0)
    assert len(rec.times) == 15 * 8 + 1
    assert np.allclose(rec.unitaries[0], np.eye(6))
    assert rec.boundaries().shape == (16, 6, 6)
    rec.check(1e-10)
    with pytest.raises(ValueError):
        rec.unitaries[0, 0, 0] = 2.0


def test_composition_over_halves(model6, rng):
    p = ControlPulse.random(16, 1.4, rng)
    full = propagate(model6, p, 2).final
    first = ControlPulse(0.7, p.d_r[:8], p.d_i[:8])
    second = ControlPulse(0.7, p.d_r[8:], p.d_i[8:])
    u = propagate(model6, second, 2).final @ propagate(model6, first, 2).final
    assert np.max(np.abs(u - full)) <= 1e-10


def test_composition_and_determinant_random_trials(model6):
    rng = np.random.default_rng(99)
    worst_det = 0.0
    for _ in range(200):
        p = ControlPulse.random(15, rng.uniform(0.2, 2.0), rng)
        rec = propagate(model6, p, 2)
        rec.check(1e-10)
        worst_det = max(worst_det, np.max(np.abs(np.abs(np.linalg.det(rec.unitaries)) - 1)))
    assert worst_det <= 1e-9


def test_final_unitaries_matches_records(model6, rng):
    p = ControlPulse.random(15, 0.9, rng)
    from robustgate.transmon import segment_hamiltonians
    u = final_unitaries(segment_hamiltonians(model6, p.d_r, p.d_i), p.segment_duration)
    assert np.allclose(u, propagate(model6, p).final, atol=1e-12)


def test_perturbed_at_zero_equals_unperturbed(model6, rng):
    p = ControlPulse.random(15, 1.2, rng)
    a, b = propagate(model6, p), propagate_perturbed(model6, p, "q", 0.0)
    assert np.max(np.abs(a.unitaries - b.unitaries)) <= 1e-12


def test_number_perturbation_closed_form(model6):
    t, lam = 1.1, 0.03
    p = ControlPulse.zeros(15, t)
    u0 = propagate(model6, p).final
    ul = propagate_perturbed(model6, p, "n", lam).final
    assert np.allclose(ul, np.diag(np.diag(ul)))
    tt = internal_time(t)
    expected = (2 + abs(1 + np.exp(-1j * lam * tt)) ** 2) / 6
    assert perturbed_fidelity(ul, u0, projector(model6), 2) == pytest.approx(expected, abs=1e-13)


def test_perturbed_unitarity_large_lambda(model11, rng):
    p = ControlPulse.random(15, 1.3, rng)
    for kind in ("n", "q", "n2"):
        propagate_perturbed(model11, p, kind, 0.5).check(1e-10)
    with pytest.raises(ValueError):
        propagate_perturbed(model11, p, "n", np.inf)


def test_sampled_constant_controls_match_piecewise(model6, rng):
    p = ControlPulse.random(15, 1.3, rng)
    seg = lambda arr: (lambda t: arr[np.minimum((np.asarray(t) / 1.3 * 15).astype(int), 14)])  # noqa: E731
    rec = propagate_sampled(model6, seg(p.d_r), seg(p.d_i), None, 1.3, n_steps=15)
    assert np.max(np.abs(rec.final - propagate(model6, p).final)) <= 1e-12
    const = propagate_sampled(model6, lambda t: 0.3, lambda t: -0.2, None, 0.7, n_steps=4)
    ref = propagate(model6, ControlPulse(0.7, [0.3] * 4, [-0.2] * 4)).final
    assert np.max(np.abs(const.final - ref)) <= 1e-12


def test_simpson_weights():
    w = simpson_weights(8)
    assert w.sum() == pytest.approx(1.0)
    x = np.linspace(0, 1, 9)
    assert w @ x ** 3 == pytest.approx(0.25, abs=1e-15)
    with pytest.raises(QuadratureError):
        simpson_weights(7)


def test_odd_substeps_rejected_for_quadrature(model6):
    rec = propagate(model6, ControlPulse.zeros(3, 1.0), 3)
    with pytest.raises(QuadratureError):
        rec.simpson_weights()


@pytest.mark.parametrize("scheme", ["T", "TR", "TL"])
def test_truncation_convergence_for_optimized_pulses(scheme, model6, model11):
    pulse = optimized(scheme).pulse
    u6 = propagate(model6, pulse, 2).final[:2, :2]
    u11 = propagate(model11, pulse, 2).final[:2, :2]
    assert np.max(np.abs(u6 - u11)) <= 1e-6
