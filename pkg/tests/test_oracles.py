import ast
import inspect
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustgate import oracles
from robustgate.oracles import (DEFAULT_FD_STEPS, NoisyEstimateWarning, OracleReport,
                                fd_susceptibility, haar_subspace_states, mc_state_average,
                                second_difference, three_level_pi_pulse)
from robustgate.transmon import ControlPulse, TransmonModel, projector

THREE_LEVEL = {
    -2.0: (0.8796191501363457, 0.9389785688277068, 0.9375),
    -5.0: (0.9691639512555762, 0.9900382403357729, 0.99),
    -10.0: (0.9926666453172274, 0.9975023935185526, 0.9975),
    -50.0: (0.999700272095697, 0.9999000038314224, 0.9999),
    -1000.0: (0.9999992500016618, 0.9999997500000238, 0.99999975),
}


@settings(max_examples=40, deadline=None)
@given(c=st.floats(-3, 3), b=st.floats(-3, 3))
def test_stencil_exact_for_quadratics(c, b):
    est, ok = second_difference(lambda x: 1.0 + b * x - c * x ** 2)
    assert abs(est + 2 * c) <= 1e-10
    if abs(c) > 1e-3:
        assert ok


def test_stencil_removes_quartic_leading_error():
    est, _ = second_difference(np.cos)
    assert est == pytest.approx(-1.0, abs=1e-8)


def test_stencil_needs_two_steps():
    with pytest.raises(ValueError):
        second_difference(np.cos, steps=(1e-2,))


def test_identity_perturbation_has_zero_susceptibility(model6):
    pulse = ControlPulse.random(15, 1.0, np.random.default_rng(2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoisyEstimateWarning)
        est = fd_susceptibility(model6, pulse, "n", steps=DEFAULT_FD_STEPS,
                                v_override=np.eye(6))
    assert abs(est) <= 1e-8


@pytest.mark.parametrize("alpha", sorted(THREE_LEVEL))
def test_three_level_frozen(alpha):
    assert three_level_pi_pulse(alpha) == pytest.approx(THREE_LEVEL[alpha], abs=1e-12)


def test_three_level_asymptote_at_minus_ten():
    assert three_level_pi_pulse(-10.0)[2] == pytest.approx(0.9975, abs=1e-12)


def test_three_level_gap_decays():
    gap = {a: abs(three_level_pi_pulse(a)[0] - three_level_pi_pulse(a)[2])
           for a in (-5.0, -20.0)}
    assert gap[-5.0] / gap[-20.0] >= 10
    with pytest.raises(ValueError):
        three_level_pi_pulse(0.0)


def test_haar_states_normalized_and_confined():
    psi = haar_subspace_states(500, 2, 6, 0)
    assert np.allclose(np.linalg.norm(psi, axis=1), 1)
    assert np.all(psi[:, 2:] == 0)
    # second moment of a Haar qubit state: E|psi_0|^2 = 1/2
    big = haar_subspace_states(100_000, 2, 6, 1)
    assert np.mean(np.abs(big[:, 0]) ** 2) == pytest.approx(0.5, abs=5e-3)


def test_monte_carlo_examples():
    p = projector(TransmonModel())
    fid, leak, _, _ = mc_state_average(np.eye(6), np.eye(6), p, 20_000, 0)
    assert fid == pytest.approx(1.0) and leak == pytest.approx(0.0, abs=1e-14)
    swap = np.eye(6)[[0, 2, 1, 3, 4, 5]]
    _, leak, se, _ = mc_state_average(swap, swap, p, 100_000, 1)
    assert abs(leak - 0.5) <= 3 * max(se, 1e-3)
    with pytest.raises(ValueError):
        mc_state_average(np.eye(6), np.eye(6), np.diag([0, 1, 1, 0, 0, 0]), 10)


def test_report_lines():
    good = OracleReport.compare("x", 1.0, 1.0 + 1e-12, 1e-10)
    bad = OracleReport.compare("y", 1.0, 2.0, 1e-10, 1e-3)
    assert good.passed and not bad.passed
    assert good.line().startswith("[PASS]") and bad.line().startswith("[FAIL]")
    assert '"name": "y"' in bad.to_json()


def test_oracles_do_not_use_closed_forms():
    tree = ast.parse(inspect.getsource(oracles))
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
            imported.update(a.name for a in node.names)
        elif isinstance(node, ast.Import):
            imported.update(a.name for a in node.names)
    assert not any("costfn" in m for m in imported)
    for name in ("susceptibility", "averaged_perturbation", "subspace_fidelity", "leakage"):
        assert name not in imported
