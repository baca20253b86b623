import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustgate.costfn import (AveragedPerturbation, CostReport, LeakyReferenceWarning,
                               averaged_perturbation, batch_leakage, batch_leakage_cost,
                               batch_robustness_cost, batch_target_cost, cost_report,
                               dynamical_traces, error_fidelity, leakage, leakage_cost,
                               leakage_trace, perturbed_fidelity, robustness_cost,
                               subspace_fidelity, susceptibility, target_cost)
from robustgate.oracles import mc_state_average
from robustgate.propagate import propagate, propagate_perturbed
from robustgate.transmon import (ControlPulse, TransmonModel, embed, internal_time,
                                 perturbation_matrix, projector, x_gate)

from conftest import optimized, random_unitary

P6 = projector(TransmonModel())


def block_diag_unitary(rng, n=6):
    u = np.zeros((n, n), dtype=complex)
    u[:2, :2] = random_unitary(2, rng)
    u[2:, 2:] = random_unitary(n - 2, rng)
    return u


def random_record(model, seed, t=1.0, k=8):
    return propagate(model, ControlPulse.random(15, t, np.random.default_rng(seed)), k)


# --- subspace fidelity and target cost ----------------------------------------

def test_self_fidelity_is_one(rng):
    u = block_diag_unitary(rng)
    assert subspace_fidelity(u, u, P6, 2) == pytest.approx(1.0, abs=1e-14)


def test_orthogonal_qubit_unitaries():
    assert subspace_fidelity(np.eye(6), embed(x_gate(), 6), P6, 2) == pytest.approx(1 / 3)


def test_fidelity_matches_state_average(rng):
    u, v = random_unitary(6, rng), random_unitary(6, rng)
    fid, _, se, _ = mc_state_average(v, u, P6, 100_000, seed=3)
    assert abs(subspace_fidelity(u, v, P6, 2) - fid) <= 3 * se


def test_target_cost_zero_for_target_with_any_complement(model6, rng):
    u = embed(x_gate(), 6)
    u[2:, 2:] = random_unitary(4, rng)
    assert 1 - subspace_fidelity(embed(x_gate(), 6), u, P6, 2) == pytest.approx(0, abs=1e-14)
    for phi in (0.3, 2.0, -1.1):
        g = subspace_fidelity(embed(x_gate(), 6), np.exp(1j * phi) * u, P6, 2)
        assert 1 - g == pytest.approx(0, abs=1e-14)


def test_drift_only_target_cost_is_two_thirds(model6):
    rec = propagate(model6, ControlPulse.zeros(15, 0.77))
    assert target_cost(rec, x_gate(), P6, 2) == pytest.approx(2 / 3, abs=1e-13)


def test_frozen_costs_for_seeded_pulse(model6):
    rec = propagate(model6, ControlPulse.random(15, 1.0, np.random.default_rng(2024)))
    expected = {"n": 0.5134452264056235, "q": 0.1152176568351906, "n2": 3.1250337015156164}
    for kind, j_r in expected.items():
        c = cost_report(rec, x_gate(), P6, 2, perturbation_matrix(model6, kind))
        assert c.j_u == pytest.approx(0.7793617504867824, rel=1e-9)
        assert c.j_l == pytest.approx(0.30514736212740784, rel=1e-9)
        assert c.max_leakage == pytest.approx(0.4879660145730531, rel=1e-9)
        assert c.j_r == pytest.approx(j_r, rel=1e-9)


# --- perturbed fidelity -----------------------------------------------------------

def test_perturbed_fidelity_reference_values(model6, rng):
    u0 = block_diag_unitary(rng)
    assert perturbed_fidelity(u0, u0, P6, 2) == pytest.approx(1.0, abs=1e-14)
    assert perturbed_fidelity(np.exp(0.4j) * u0, u0, P6, 2) == pytest.approx(1.0, abs=1e-14)


def test_perturbed_fidelity_warns_for_leaky_reference(rng):
    u0 = random_unitary(6, rng)
    with pytest.warns(LeakyReferenceWarning):
        perturbed_fidelity(u0, u0, P6, 2)


def test_error_fidelity_equals_perturbed_for_block_diagonal(rng):
    u0 = block_diag_unitary(rng)
    ul = random_unitary(6, rng)
    assert error_fidelity(ul, u0, P6, 2) == pytest.approx(perturbed_fidelity(ul, u0, P6, 2),
                                                         abs=1e-14)


def _slope(f, lams):
    a = np.column_stack([lams, lams ** 2])
    return np.linalg.lstsq(a, f, rcond=None)[0]


@pytest.mark.parametrize("kind", ["n", "q", "n2"])
def test_first_derivative_vanishes_for_non_leaky_reference(kind, model6):
    pulse = optimized("T").pulse
    u0 = propagate(model6, pulse, 1).final
    lams = np.array([1e-3, 5e-4, 2.5e-4])
    f0 = perturbed_fidelity(u0, u0, P6, 2)
    d = [perturbed_fidelity(propagate_perturbed(model6, pulse, kind, lam, 1).final, u0, P6, 2)
         - f0 for lam in lams]
    slope, curv = _slope(np.array(d), lams)
    assert abs(slope) < 1e-6 * abs(curv)


@pytest.mark.parametrize("kind", ["n", "q", "n2"])
def test_first_derivative_vanishes_in_interaction_frame(kind, model6):
    pulse = ControlPulse.random(15, 1.4, np.random.default_rng(5))
    u0 = propagate(model6, pulse, 1).final
    lams = np.array([1e-3, 5e-4, 2.5e-4])
    d = [error_fidelity(propagate_perturbed(model6, pulse, kind, lam, 1).final, u0, P6, 2) - 1
         for lam in lams]
    slope, curv = _slope(np.array(d), lams)
    assert abs(slope) < 1e-6 * abs(curv)


# --- averaged perturbation and susceptibility -------------------------------------

def test_vbar_of_identity_is_identity(model6):
    rec = random_record(model6, 1)
    vbar = averaged_perturbation(rec, np.eye(6)).matrix
    assert np.allclose(vbar, np.eye(6), atol=1e-13)


def test_vbar_commuting_case(model6):
    rec = propagate(model6, ControlPulse.zeros(15, 1.2))
    n = perturbation_matrix(model6, "n")
    assert np.allclose(averaged_perturbation(rec, n).matrix, n, atol=1e-13)


def test_vbar_is_hermitian(model6):
    vbar = averaged_perturbation(random_record(model6, 2), perturbation_matrix(model6, "q"))
    assert np.max(np.abs(vbar.matrix - vbar.matrix.conj().T)) <= 1e-10
    with pytest.raises(ValueError):
        AveragedPerturbation(np.array([[0, 1], [0, 0]], dtype=complex))


def test_vbar_matches_dense_trapezoid(model6):
    # reference: composite trapezoid on 64 sub-nodes per segment
    pulse = ControlPulse.random(15, 1.3, np.random.default_rng(11))
    v = perturbation_matrix(model6, "q")
    vbar = averaged_perturbation(propagate(model6, pulse), v).matrix
    u = propagate(model6, pulse, 64).unitaries
    w = np.ones(len(u))
    w[[0, -1]] = 0.5
    ref = np.einsum("k,kji,jl,klm->im", w / w.sum(), u.conj(), v, u)
    assert np.max(np.abs(vbar - ref)) <= 1e-8


def test_vbar_simpson_refinement(model6):
    pulse = ControlPulse.random(15, 1.3, np.random.default_rng(11))
    v = perturbation_matrix(model6, "q")
    a = averaged_perturbation(propagate(model6, pulse, 8), v).matrix
    b = averaged_perturbation(propagate(model6, pulse, 128), v).matrix
    assert np.max(np.abs(a - b)) <= 1e-4


def test_susceptibility_zero_for_identity():
    t = float(internal_time(1.3))
    assert abs(susceptibility(AveragedPerturbation(np.eye(6, dtype=complex)), P6, 2, t)) <= 1e-10
    assert abs(susceptibility(3.2 * np.eye(6), P6, 2, t)) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), c=st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3))
def test_susceptibility_quadratic_in_v(seed, c):
    model = TransmonModel()
    rec = random_record(model, seed, 1.0, 2)
    v = perturbation_matrix(model, "q")
    t = float(internal_time(1.0))
    s1 = susceptibility(averaged_perturbation(rec, v), P6, 2, t)
    s2 = susceptibility(averaged_perturbation(rec, c * v), P6, 2, t)
    assert s2 == pytest.approx(c * c * s1, rel=1e-10, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), t=st.floats(0.2, 2.5), kind=st.sampled_from(["n", "q", "n2"]))
def test_robustness_cost_non_negative(seed, t, kind):
    model = TransmonModel()
    rec = random_record(model, seed, t, 2)
    c = cost_report(rec, x_gate(), P6, 2, perturbation_matrix(model, kind))
    assert c.j_r >= -1e-10
    assert 0 <= c.j_u <= 1 and 0 <= c.j_l <= 1
    assert np.all((c.l0_trace[:, 1] >= -1e-12) & (c.l0_trace[:, 1] <= 1 + 1e-12))
    assert np.all((c.f0_trace[:, 1] >= -1e-12) & (c.f0_trace[:, 1] <= 1 + 1e-12))
    assert c.l0_trace[:, 1].min() - 1e-12 <= c.j_l <= c.l0_trace[:, 1].max() + 1e-12


def test_robustness_cost_scaling():
    assert robustness_cost(0.0, 1.0, 3.0) == 0.0
    assert robustness_cost(-2.0, 1.0, 4.0) == pytest.approx(robustness_cost(-2.0, 1.0, 2.0) / 4)
    with pytest.raises(ValueError):
        robustness_cost(-1.0, 1.0, 0.0)


def test_closed_form_is_interaction_frame_curvature(model6):
    # the closed form is the curvature of G[1, U0^+ U_lambda] even for leaky references
    pulse = ControlPulse.random(15, 1.0, np.random.default_rng(8))
    rec = propagate(model6, pulse)
    t = float(internal_time(1.0))
    chi = susceptibility(averaged_perturbation(rec, perturbation_matrix(model6, "n")), P6, 2, t)
    u0 = propagate(model6, pulse, 1).final
    h = 1e-3
    g = [error_fidelity(propagate_perturbed(model6, pulse, "n", s * h, 1).final, u0, P6, 2)
         for s in (-1, 0, 1)]
    assert (g[0] - 2 * g[1] + g[2]) / h ** 2 == pytest.approx(chi, rel=1e-3)


# --- leakage ----------------------------------------------------------------------

def test_leakage_examples(rng):
    assert leakage(block_diag_unitary(rng), P6, 2) == pytest.approx(0, abs=1e-14)
    swap = np.eye(6, dtype=complex)[[0, 2, 1, 3, 4, 5]]
    assert leakage(swap, P6, 2) == pytest.approx(0.5)


def test_leakage_matches_state_sampling(rng):
    u = random_unitary(6, rng)
    _, leak, _, _ = mc_state_average(u, u, P6, 100_000, seed=4)
    assert abs(leakage(u, P6, 2) - leak) <= 1e-3


def test_leakage_zero_iff_blocks_vanish(rng):
    u = block_diag_unitary(rng)
    assert leakage(u, P6, 2) <= 1e-14
    assert np.max(np.abs(u[2:, :2])) <= 1e-8 and np.max(np.abs(u[:2, 2:])) <= 1e-8
    g = np.eye(6, dtype=complex)
    c, s = np.cos(1e-3), np.sin(1e-3)
    g[[1, 1, 2, 2], [1, 2, 1, 2]] = [c, -s, s, c]
    leaky = g @ u
    assert leakage(leaky, P6, 2) > 1e-8
    assert np.max(np.abs(leaky[2:, :2])) > 1e-8


def test_traces_endpoints(model6, rng):
    rec = propagate(model6, ControlPulse.random(15, 1.1, rng))
    f0, l0 = dynamical_traces(rec, x_gate(), P6, 2)
    assert f0[0, 1] == pytest.approx(1 / 3) and l0[0, 1] == pytest.approx(0, abs=1e-15)
    assert 1 - f0[-1, 1] == pytest.approx(target_cost(rec, x_gate(), P6, 2), abs=1e-10)
    assert np.allclose(leakage_trace(rec, P6, 2), l0[:, 1])


def test_drift_only_never_leaks(model6):
    rec = propagate(model6, ControlPulse.zeros(15, 2.0))
    assert np.max(np.abs(leakage_trace(rec, P6, 2))) <= 1e-14
    assert leakage_cost(rec, P6, 2) <= 1e-14


@pytest.mark.parametrize("t", [0.5, 1.3, 2.0])
def test_leakage_cost_k_doubling(t, model6):
    pulse = ControlPulse.random(15, t, np.random.default_rng(21))
    a = leakage_cost(propagate(model6, pulse, 8), P6, 2)
    b = leakage_cost(propagate(model6, pulse, 16), P6, 2)
    assert abs(a - b) <= 1e-6


# --- invariance and batching -------------------------------------------------------

def test_global_phase_invariance(model6, rng):
    pulse = ControlPulse.random(15, 1.2, rng)
    rec = propagate(model6, pulse)
    v = perturbation_matrix(model6, "q")
    base = cost_report(rec, x_gate(), P6, 2, v)
    ph = np.exp(0.73j)
    from dataclasses import replace
    rec2 = replace(rec, unitaries=ph * rec.unitaries)
    other = cost_report(rec2, x_gate(), P6, 2, v)
    assert abs(base.j_u - other.j_u) <= 1e-12
    assert abs(base.j_r - other.j_r) <= 1e-12
    assert abs(base.j_l - other.j_l) <= 1e-12
    u0 = block_diag_unitary(rng)
    ul = random_unitary(6, rng)
    assert abs(perturbed_fidelity(ul, u0, P6, 2)
               - perturbed_fidelity(ph * ul, ph * u0, P6, 2)) <= 1e-12
    assert abs(leakage(ul, P6, 2) - leakage(ph * ul, P6, 2)) <= 1e-12


def test_batch_kernels_match_scalar(model6):
    recs = [random_record(model6, s, 1.0, 4) for s in range(3)]
    snaps = np.stack([r.unitaries for r in recs])
    w = recs[0].simpson_weights()
    v = perturbation_matrix(model6, "n")
    for i, r in enumerate(recs):
        c = cost_report(r, x_gate(), P6, 2, v)
        assert batch_target_cost(snaps[i, -1], x_gate()) == pytest.approx(c.j_u, abs=1e-13)
        assert batch_robustness_cost(snaps, w, v)[i] == pytest.approx(c.j_r, rel=1e-11)
        assert batch_leakage_cost(snaps, w)[i] == pytest.approx(c.j_l, abs=1e-13)
        assert batch_leakage(r.final) == pytest.approx(leakage(r.final, P6, 2), abs=1e-14)


def test_cost_report_roundtrip(model6):
    c = cost_report(random_record(model6, 0), x_gate(), P6, 2, perturbation_matrix(model6, "n"))
    d = CostReport.from_dict(__import__("json").loads(c.to_json()))
    assert d.j_u == c.j_u and np.allclose(d.l0_trace, c.l0_trace)
    assert "omega_convention" in c.metadata


def test_eq4_differs_from_interaction_frame_for_leaky_reference(model6):
    pulse = ControlPulse.random(15, 1.0, np.random.default_rng(8))
    u0 = propagate(model6, pulse, 1).final
    ul = propagate_perturbed(model6, pulse, "n", 0.01, 1).final
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LeakyReferenceWarning)
        f = perturbed_fidelity(ul, u0, P6, 2)
    assert abs(f - error_fidelity(ul, u0, P6, 2)) > 1e-3
