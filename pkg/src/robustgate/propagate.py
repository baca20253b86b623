"""Unitary propagation under piecewise-constant and sampled controls."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import UNITARY_TOL, eigh, expm_from_eig, unitarity_error
from .transmon import (ControlPulse, PerturbationKind, TransmonModel, internal_time,
                       perturbation_matrix, segment_hamiltonians)

DEFAULT_SUBSTEPS = 8
DEFAULT_DRAG_STEPS = 16000


class QuadratureError(ValueError):
    """Snapshot grid cannot support composite Simpson quadrature."""


@dataclass(frozen=True)
class PropagationRecord:
    """Snapshots ``U0(t_k)`` of an evolution starting from the identity.

    ``times`` are in units of T_Omega. ``steps[k]`` maps ``unitaries[k]`` to
    ``unitaries[k + 1]``. Piecewise-constant records have
    ``substeps_per_segment`` snapshots per segment; sampled records treat
    every step as its own segment and set ``smooth=True``.
    """

    times: np.ndarray
    unitaries: np.ndarray
    steps: np.ndarray
    substeps_per_segment: int
    smooth: bool = False

    @property
    def total_time(self) -> float:
        return float(self.times[-1])

    @property
    def internal_times(self) -> np.ndarray:
        return internal_time(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.unitaries[-1]

    @property
    def n_levels(self) -> int:
        return self.unitaries.shape[-1]

    def boundaries(self) -> np.ndarray:
        """Snapshots at the segment boundaries only."""
        return self.unitaries[::self.substeps_per_segment]

    def simpson_weights(self) -> np.ndarray:
        """Composite Simpson weights (summing to 1) for a time average over the grid."""
        n_int = len(self.times) - 1
        if self.smooth:
            ok = n_int % 2 == 0
        else:
            ok = self.substeps_per_segment % 2 == 0
        if not ok or n_int < 2:
            raise QuadratureError(
                "Simpson quadrature needs an even number of sub-intervals per "
                f"constant segment (got K={self.substeps_per_segment}, {n_int} intervals)")
        return simpson_weights(n_int)

    def check(self, tol: float = UNITARY_TOL) -> None:
        """Verify unitarity and composition consistency; raise on violation."""
        if unitarity_error(self.unitaries) > tol:
            raise ValueError("record contains a non-unitary snapshot")
        composed = self.steps @ self.unitaries[:-1]
        if np.max(np.abs(composed - self.unitaries[1:])) > tol:
            raise ValueError("record violates composition consistency")


def simpson_weights(n_intervals: int) -> np.ndarray:
    """Normalized composite Simpson weights on ``n_intervals + 1`` uniform nodes."""
    if n_intervals % 2:
        raise QuadratureError("composite Simpson needs an even number of intervals")
    w = np.ones(n_intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * n_intervals)


def evolve_stack(hams: np.ndarray, dt, substeps: int = 1, initial=None):
    """Propagate stacked piecewise-constant Hamiltonians.

    Parameters
    ----------
    hams : ndarray, shape (..., M, N, N)
        Segment Hamiltonians; leading axes are independent batches.
    dt : float or ndarray broadcastable to (..., M)
        Segment durations in internal units.
    substeps : int
        Snapshots recorded per segment.

    Returns
    -------
    snaps : ndarray, shape (..., M*substeps + 1, N, N)
    steps : ndarray, shape (..., M*substeps, N, N)
    """
    evals, evecs = eigh(hams)
    sub = expm_from_eig(evals, evecs, np.asarray(dt) / substeps)
    batch = hams.shape[:-3]
    m, n = hams.shape[-3], hams.shape[-1]
    steps = np.repeat(sub, substeps, axis=-3)
    snaps = np.empty(batch + (m * substeps + 1, n, n), dtype=complex)
    snaps[..., 0, :, :] = np.eye(n) if initial is None else initial
    u = snaps[..., 0, :, :]
    for k in range(m * substeps):
        u = steps[..., k, :, :] @ u
        snaps[..., k + 1, :, :] = u
    return snaps, steps


def final_unitaries(hams: np.ndarray, dt) -> np.ndarray:
    """Only ``U(T)`` for stacked segment Hamiltonians of shape (..., M, N, N)."""
    evals, evecs = eigh(hams)
    seg = expm_from_eig(evals, evecs, dt)
    u = seg[..., 0, :, :]
    for k in range(1, hams.shape[-3]):
        u = seg[..., k, :, :] @ u
    return u


def _record(hams, total_time, substeps, smooth=False) -> PropagationRecord:
    m = hams.shape[0]
    dt = float(internal_time(total_time)) / m
    snaps, steps = evolve_stack(hams, dt, substeps)
    times = np.linspace(0.0, total_time, m * substeps + 1)
    for arr in (times, snaps, steps):
        arr.setflags(write=False)
    return PropagationRecord(times, snaps, steps, substeps, smooth)


def propagate(model: TransmonModel, pulse: ControlPulse,
              substeps_per_segment: int = DEFAULT_SUBSTEPS) -> PropagationRecord:
    """Exact piecewise-constant evolution with uniform sub-node snapshots."""
    if substeps_per_segment < 1:
        raise ValueError("substeps_per_segment must be >= 1")
    hams = segment_hamiltonians(model, pulse.d_r, pulse.d_i)
    return _record(hams, pulse.total_time, substeps_per_segment)


def propagate_perturbed(model: TransmonModel, pulse: ControlPulse, kind, lam: float,
                        substeps: int = DEFAULT_SUBSTEPS) -> PropagationRecord:
    """As :func:`propagate` with ``H0 + lam * V`` in every segment."""
    if not np.isfinite(lam):
        raise ValueError("lambda must be finite")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    v = perturbation_matrix(model, PerturbationKind.parse(kind))
    hams = segment_hamiltonians(model, pulse.d_r, pulse.d_i) + lam * v
    return _record(hams, pulse.total_time, substeps)


def propagate_sampled(model: TransmonModel, d_r_fn, d_i_fn, delta_fn, total_time: float,
                      n_steps: int = DEFAULT_DRAG_STEPS, perturbation=None,
                      lam: float = 0.0) -> PropagationRecord:
    """Midpoint-sampled evolution under continuous controls.

    The control functions take time in units of T_Omega. ``delta_fn=None``
    keeps the model detuning; otherwise it replaces it. An optional static
    perturbation ``lam * V`` can be added.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    mid = (np.arange(n_steps) + 0.5) * (total_time / n_steps)
    d_r = np.broadcast_to(np.asarray(d_r_fn(mid), dtype=float), mid.shape)
    d_i = np.broadcast_to(np.asarray(d_i_fn(mid), dtype=float), mid.shape)
    delta = None if delta_fn is None else np.broadcast_to(
        np.asarray(delta_fn(mid), dtype=float), mid.shape)
    hams = segment_hamiltonians(model, d_r, d_i, delta)
    if perturbation is not None and lam != 0.0:
        hams = hams + lam * perturbation_matrix(model, perturbation)
    return _record(hams, total_time, 1, smooth=True)
