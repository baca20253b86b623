"""First-order DRAG baseline pulses.

The in-phase field is a Gaussian shifted so it vanishes at both ends and
rescaled to a prescribed area ``A``. The quadrature field is proportional to
its time derivative and the detuning follows the second-order AC Stark
correction::

    d_I(t)   = +d_R'(t) / (sqrt(2) alpha)
    delta(t) = Omega^2 d_R(t)^2 (1 - sqrt(2)) / (2 alpha)

The quadrature sign matches the ``-d_I p`` coupling used by
:func:`robustgate.transmon.hamiltonian_at`; with the opposite sign the
correction adds leakage instead of cancelling it.

Times and widths are given in units of T_Omega; the area is measured in
internal time (1/Omega), so ``A = pi`` is a pi rotation on the qubit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import erf

from .costfn import cost_report
from .propagate import DEFAULT_DRAG_STEPS, propagate_sampled
from .transmon import TWO_PI, TransmonModel, perturbation_matrix, projector, x_gate

SQRT2 = np.sqrt(2.0)


class SamplingConvergenceError(RuntimeError):
    def __init__(self, n_steps: int, change: float):
        super().__init__(f"step halving changed U(T) by {change:.2e} at n_steps={n_steps}; "
                         f"try n_steps={4 * n_steps}")
        self.suggested_n_steps = 4 * n_steps


@dataclass(frozen=True)
class DragParams:
    total_time: float = 1.3
    sigma: float = 0.369
    area: float = np.pi
    alpha_over_omega: float = -2.0

    def __post_init__(self):
        if not (self.total_time > 0 and self.sigma > 0):
            raise ValueError("total_time and sigma must be positive")
        if self.alpha_over_omega == 0:
            raise ValueError("DRAG needs a nonzero anharmonicity")

    def to_dict(self) -> dict:
        return {"total_time": self.total_time, "sigma": self.sigma, "area": self.area,
                "alpha_over_omega": self.alpha_over_omega}


class DragFields:
    """Callable DRAG fields; every method takes time in units of T_Omega."""

    def __init__(self, params: DragParams):
        self.params = params
        t = TWO_PI * params.total_time
        s = TWO_PI * params.sigma
        self._t, self._s = t, s
        self._offset = np.exp(-t ** 2 / (8 * s ** 2))
        norm = np.sqrt(2 * np.pi * s ** 2) * erf(t / np.sqrt(8 * s ** 2)) - t * self._offset
        if not norm > 1e-300:
            raise ValueError(f"sigma={params.sigma} too small: normalization underflows")
        self._scale = params.area / norm

    def _gauss(self, tau):
        return np.exp(-(tau - self._t / 2) ** 2 / (2 * self._s ** 2))

    def d_r(self, t):
        tau = TWO_PI * np.asarray(t, dtype=float)
        return self._scale * (self._gauss(tau) - self._offset)

    def d_r_dot(self, t):
        """Analytic derivative with respect to internal time."""
        tau = TWO_PI * np.asarray(t, dtype=float)
        return -self._scale * (tau - self._t / 2) / self._s ** 2 * self._gauss(tau)

    def d_i(self, t):
        return self.d_r_dot(t) / (SQRT2 * self.params.alpha_over_omega)

    def delta(self, t):
        a = self.params.alpha_over_omega
        return self.d_r(t) ** 2 * (1 - SQRT2) / (2 * a)

    def area(self) -> float:
        """Numerical integral of d_R over internal time."""
        val, _ = quad(lambda tau: self.d_r(tau / TWO_PI), 0.0, self._t,
                      epsabs=1e-13, epsrel=1e-13, limit=200)
        return float(val)

    def table(self, n: int = 501) -> np.ndarray:
        t = np.linspace(0.0, self.params.total_time, n)
        return np.column_stack([t, self.d_r(t), self.d_i(t), self.delta(t)])

    def write_csv(self, path, n: int = 501) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "d_r", "d_i", "delta"])
            w.writerows(self.table(n).tolist())


def drag_fields(params: DragParams):
    """Return ``(d_r, d_i, delta)`` callables of time in units of T_Omega."""
    f = DragFields(params)
    return f.d_r, f.d_i, f.delta


def drag_model(params: DragParams, n_levels: int = 11, delta_over_omega: float = -0.5):
    """Transmon model matching ``params`` (N = 11 by default for verification)."""
    return TransmonModel(n_levels, delta_over_omega, params.alpha_over_omega)


def propagate_drag(model: TransmonModel, params: DragParams, n_steps: int = DEFAULT_DRAG_STEPS,
                   perturbation=None, lam: float = 0.0):
    d_r, d_i, delta = drag_fields(params)
    return propagate_sampled(model, d_r, d_i, delta, params.total_time, n_steps,
                             perturbation=perturbation, lam=lam)


def step_halving_change(model: TransmonModel, params: DragParams, n_steps: int) -> float:
    """Max elementwise change of U(T) when doubling the number of steps."""
    u1 = propagate_drag(model, params, n_steps).final
    u2 = propagate_drag(model, params, 2 * n_steps).final
    return float(np.max(np.abs(u2 - u1)))


def simulate_drag(model: TransmonModel, params: DragParams, n_steps: int = DEFAULT_DRAG_STEPS,
                  perturbation="n", check_tol: float | None = 1e-8):
    """Simulate a DRAG pulse; returns ``(record, CostReport)``.

    The model's anharmonicity must match ``params``; the model detuning is
    replaced by the DRAG schedule. With ``check_tol`` set, the step-halving
    criterion is enforced.
    """
    if not np.isclose(model.alpha_over_omega, params.alpha_over_omega):
        raise ValueError("model and DRAG parameters disagree on the anharmonicity")
    if check_tol is not None:
        change = step_halving_change(model, params, n_steps)
        if change > check_tol:
            raise SamplingConvergenceError(n_steps, change)
    rec = propagate_drag(model, params, n_steps)
    report = cost_report(rec, x_gate(), projector(model), model.d_p,
                         perturbation_matrix(model, perturbation))
    report.metadata.update({"n_levels": model.n_levels, "n_steps": n_steps,
                            "drag": params.to_dict()})
    return rec, report


def sigma_scan(model: TransmonModel, total_time: float, sigmas, n_steps: int = 1000):
    """Coarse scan of the Gaussian width; returns rows ``(sigma, J_U, max l0)``."""
    rows = []
    for s in sigmas:
        p = DragParams(total_time, float(s), np.pi, model.alpha_over_omega)
        _, rep = simulate_drag(model, p, n_steps, check_tol=None)
        rows.append((float(s), rep.j_u, rep.max_leakage))
    return rows
