"""Independent numerical checks for the closed-form quantities.

Nothing here calls :func:`robustgate.costfn.susceptibility`,
:func:`~robustgate.costfn.averaged_perturbation`,
:func:`~robustgate.costfn.subspace_fidelity` or
:func:`~robustgate.costfn.leakage`; the checks would be circular otherwise.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import expm

from .linops import dagger
from .propagate import final_unitaries, propagate_perturbed
from .transmon import ControlPulse, TransmonModel, segment_hamiltonians

DEFAULT_FD_STEPS = (1e-2, 5e-3)
# Propagated fidelities need smaller steps: the h^4 remainder left after
# Richardson scales with (lambda ||V|| T)^4 and is too large for n^2 at
# T ~ 2 T_Omega with the generic stencil above.
FD_SUSCEPTIBILITY_STEPS = (1e-3, 5e-4)


@dataclass
class OracleReport:
    name: str
    primary_value: float
    oracle_value: float
    abs_err: float
    rel_err: float
    passed: bool
    tolerance: float
    tol_rel: float | None = None
    note: str = ""

    @classmethod
    def compare(cls, name, primary, oracle, tol_abs, tol_rel=None, note=""):
        primary, oracle = float(primary), float(oracle)
        abs_err = abs(primary - oracle)
        rel_err = abs_err / abs(oracle) if oracle != 0 else (0.0 if abs_err == 0 else np.inf)
        passed = abs_err <= tol_abs or (tol_rel is not None and rel_err <= tol_rel)
        return cls(name, primary, oracle, abs_err, rel_err, bool(passed), tol_abs, tol_rel, note)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (f"[{mark}] {self.name}: primary={self.primary_value:.10g} "
                f"oracle={self.oracle_value:.10g} abs={self.abs_err:.2e} rel={self.rel_err:.2e}")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                           for k, v in d.items()})


class NoisyEstimateWarning(UserWarning):
    """Second differences did not converge monotonically with the step."""


def second_difference(f, steps=DEFAULT_FD_STEPS) -> tuple[float, bool]:
    """Richardson-extrapolated ``f''(0)`` from central differences.

    Uses the two smallest of ``steps``: ``(4 D(h/2) - D(h)) / 3`` for the
    pair ``(h, h/2)``; for a general pair ``(h1 > h2)`` the weights follow
    from cancelling the ``h^2`` term. Returns the estimate and a flag that
    is ``False`` when successive differences fail to settle.
    """
    steps = sorted((float(s) for s in steps), reverse=True)
    if len(steps) < 2 or steps[-1] <= 0:
        raise ValueError("need at least two positive steps")
    f0 = f(0.0)
    d = [(f(h) - 2 * f0 + f(-h)) / h ** 2 for h in steps]
    h1, h2 = steps[-2], steps[-1]
    r = (h1 / h2) ** 2
    est = (r * d[-1] - d[-2]) / (r - 1)
    diffs = np.abs(np.diff(d))
    ok = bool(np.all(diffs[1:] <= diffs[:-1] * 1.01 + 1e-9)) if len(d) > 2 else True
    scale = max(abs(est), 1e-12)
    if abs(d[-1] - d[-2]) > 0.5 * scale:
        ok = False
    return float(est), ok


def _error_fidelity(u_lambda, u0, d_p):
    """G[1, U0^+ U_lambda] written out on the first ``d_p`` levels."""
    w = dagger(u0) @ u_lambda
    blk = w[:d_p, :d_p]
    a = np.sum(np.abs(blk) ** 2)
    b = abs(np.trace(blk)) ** 2
    return float((a + b) / (d_p * (d_p + 1)))


def fd_susceptibility(model: TransmonModel, pulse: ControlPulse, kind,
                      steps=FD_SUSCEPTIBILITY_STEPS,
                      v_override: np.ndarray | None = None) -> float:
    """Finite-difference second derivative of the perturbed fidelity at lambda = 0.

    The fidelity is taken between ``U0(T)`` and ``U_lambda(T)`` in the
    interaction frame, ``G[1, U0^+ U_lambda]``, which equals the lab-frame
    perturbed fidelity whenever the reference does not leak. Exact
    piecewise-constant propagation is used at every lambda.
    ``v_override`` replaces the perturbation operator (for synthetic checks).
    """
    if v_override is None:
        u0 = propagate_perturbed(model, pulse, kind, 0.0, 1).final

        def f(lam):
            return _error_fidelity(propagate_perturbed(model, pulse, kind, lam, 1).final, u0, 2)
    else:
        hams = segment_hamiltonians(model, pulse.d_r, pulse.d_i)
        dt = pulse.segment_duration
        u0 = final_unitaries(hams, dt)

        def f(lam):
            return _error_fidelity(final_unitaries(hams + lam * v_override, dt), u0, 2)

    est, ok = second_difference(f, steps)
    if not ok:
        warnings.warn("finite-difference susceptibility looks noise dominated",
                      NoisyEstimateWarning, stacklevel=2)
    return est


def three_level_pi_pulse(alpha_over_omega: float, total_time: float = 1.0):
    """Constant resonant pi pulse on a three-level ladder.

    The drive is fixed by ``Omega = pi / T``; ``alpha = alpha_over_omega *
    Omega``. Returns ``(P1_full, P1_effective, P1_asymptotic)``: exact
    three-level propagation, the adiabatically eliminated two-level result
    and its large-anharmonicity limit ``1 - pi^2 / (4 alpha^2 T^2)``.
    """
    if alpha_over_omega == 0:
        raise ValueError("anharmonicity must be nonzero")
    t = float(total_time)
    om = np.pi / t
    a = alpha_over_omega * om
    h = 0.5 * np.array([[0, om, 0],
                        [om, 0, om * np.sqrt(2)],
                        [0, om * np.sqrt(2), 2 * a]], dtype=complex)
    u = expm(-1j * h * t)
    p_full = abs(u[1, 0]) ** 2
    root = np.sqrt(4 * a ** 2 + om ** 2)
    p_eff = 4 * a ** 2 * np.sin(t * om * root / (4 * a)) ** 2 / (4 * a ** 2 + om ** 2)
    p_asym = 1 - np.pi ** 2 / (4 * a ** 2 * t ** 2)
    return float(p_full), float(p_eff), float(p_asym)


def haar_subspace_states(n_samples: int, d_p: int, n_levels: int, rng) -> np.ndarray:
    """Haar-random pure states on the first ``d_p`` levels, shape (n, N)."""
    rng = np.random.default_rng(rng)
    z = rng.normal(size=(n_samples, d_p)) + 1j * rng.normal(size=(n_samples, d_p))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    psi = np.zeros((n_samples, n_levels), dtype=complex)
    psi[:, :d_p] = z
    return psi


def mc_state_average(u: np.ndarray, u_ref: np.ndarray, p: np.ndarray, n_samples: int = 100_000,
                     seed=0):
    """Monte-Carlo state averages over the subspace of ``p``.

    For each sampled ``|psi>`` the fidelity sample is ``|<psi| U_ref^+ P U |psi>|^2``
    (projected overlap with the reference output) and the leakage sample is
    ``1 - ||P U |psi>||^2``. Returns ``(fidelity, leakage, fidelity_se, leakage_se)``.
    """
    u = np.asarray(u)
    p = np.asarray(p)
    n = u.shape[0]
    d_p = int(round(np.trace(p).real))
    if not np.allclose(p, np.diag(np.r_[np.ones(d_p), np.zeros(n - d_p)])):
        raise ValueError("Monte-Carlo sampler expects P onto the first d_p levels")
    psi = haar_subspace_states(n_samples, d_p, n, seed)
    out = psi @ u.T                      # rows U|psi>
    ref = psi @ np.asarray(u_ref).T      # rows U_ref|psi>
    proj_out = out @ p.T
    fid = np.abs(np.sum(ref.conj() * proj_out, axis=1)) ** 2
    leak = 1.0 - np.sum(np.abs(proj_out) ** 2, axis=1)
    se = lambda s: float(np.std(s, ddof=1) / np.sqrt(len(s)))  # noqa: E731
    return float(fid.mean()), float(leak.mean()), se(fid), se(leak)
