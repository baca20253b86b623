"""Gate fidelity, robustness and leakage functionals.

The public functions take a general projector ``P`` of rank ``d_p``. The
``batch_*`` helpers assume the computational subspace is spanned by the
first ``d_p`` basis states (true for the transmon model) and work on
stacked unitaries; the optimizer uses those.

Conventions
-----------
G[X, Y]   = (Tr[X P X^+ P Y P Y^+ P] + |Tr[P X P Y^+]|^2) / (d_p (d_p + 1))
J_U       = 1 - G[U_tar (+) 1, U0(T)]
F_lambda  = (Tr[P U_l P U_l^+] + |Tr[P U_l P U0^+]|^2) / (d_p (d_p + 1))
Vbar      = (1/T) int_0^T U0(t)^+ V U0(t) dt
chi       = -(2 T^2 / d_p) {Tr_P[Vbar^2] - (Tr_P[Vbar]^2 + Tr_P[Vbar P Vbar]) / (d_p + 1)}
J_R       = -chi / (2 Omega^2 T^2)
L[U]      = 1 - Tr(P U P U^+) / d_p
J_L       = (1/T) int_0^T L[U0(t)] dt

The normalization 1/(d_p (d_p + 1)) multiplies the whole bracket of
F_lambda so that F_0 = 1 for a leakage-free reference.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linops import dagger, is_hermitian, trace_product
from .propagate import PropagationRecord
from .transmon import embed

IMAG_TOL = 1e-10
LEAKY_REFERENCE_TOL = 1e-4


class LeakyReferenceWarning(UserWarning):
    """The unperturbed reference unitary leaks out of the subspace."""


def _check_projector(p: np.ndarray, d_p: int) -> None:
    p = np.asarray(p)
    if np.max(np.abs(p @ p - p)) > 1e-10 or not is_hermitian(p, 1e-10):
        raise ValueError("P is not an orthogonal projector")
    if abs(np.trace(p).real - d_p) > 1e-10:
        raise ValueError(f"projector rank {np.trace(p).real:.0f} != d_p = {d_p}")


def _real(z: complex, what: str) -> float:
    if abs(z.imag) > IMAG_TOL * max(1.0, abs(z.real)):
        raise ArithmeticError(f"{what} has imaginary residue {z.imag:.3e}")
    return float(z.real)


def subspace_fidelity(x: np.ndarray, y: np.ndarray, p: np.ndarray, d_p: int) -> float:
    """State-averaged fidelity G[X, Y] of two unitaries on the subspace of ``p``."""
    _check_projector(p, d_p)
    t1 = _real(trace_product(x, p, dagger(x), p, y, p, dagger(y), p), "Tr[XPX+PYPY+P]")
    t2 = abs(trace_product(p, x, p, dagger(y))) ** 2
    return (t1 + t2) / (d_p * (d_p + 1))


def target_cost(record: PropagationRecord, u_tar: np.ndarray, p: np.ndarray, d_p: int) -> float:
    """J_U = 1 - G[U_tar (+) 1, U0(T)]."""
    x = embed(u_tar, record.n_levels)
    return 1.0 - subspace_fidelity(x, record.final, p, d_p)


def leakage(u: np.ndarray, p: np.ndarray, d_p: int) -> float:
    """Average population leaving the subspace of ``p`` under ``u``."""
    _check_projector(p, d_p)
    return 1.0 - _real(trace_product(p, u, p, dagger(u)), "Tr(PUPU+)") / d_p


def perturbed_fidelity(u_lambda: np.ndarray, u0_final: np.ndarray, p: np.ndarray,
                       d_p: int) -> float:
    """F_lambda between the perturbed and ideal final unitaries.

    Accepts either unitaries or :class:`PropagationRecord` objects (the final
    snapshot is used). Warns with :class:`LeakyReferenceWarning` when the
    reference leaks more than ``LEAKY_REFERENCE_TOL``; the formula is still
    evaluated as written.
    """
    if isinstance(u_lambda, PropagationRecord):
        u_lambda = u_lambda.final
    if isinstance(u0_final, PropagationRecord):
        u0_final = u0_final.final
    leak = leakage(u0_final, p, d_p)
    if leak > LEAKY_REFERENCE_TOL:
        warnings.warn(f"reference unitary leaks (L = {leak:.2e}); F_lambda assumes a "
                      "leakage-free reference", LeakyReferenceWarning, stacklevel=2)
    a = _real(trace_product(p, u_lambda, p, dagger(u_lambda)), "Tr[PU_lPU_l+]")
    b = abs(trace_product(p, u_lambda, p, dagger(u0_final))) ** 2
    return (a + b) / (d_p * (d_p + 1))


def error_fidelity(u_lambda: np.ndarray, u0_final: np.ndarray, p: np.ndarray, d_p: int) -> float:
    """Subspace fidelity of the error unitary ``W = U0^+ U_lambda`` with the identity.

    Equal to :func:`perturbed_fidelity` whenever ``U0`` is block diagonal with
    respect to ``p``; unlike it, its second derivative in lambda is given
    exactly by :func:`susceptibility` for any reference.
    """
    if isinstance(u_lambda, PropagationRecord):
        u_lambda = u_lambda.final
    if isinstance(u0_final, PropagationRecord):
        u0_final = u0_final.final
    w = dagger(u0_final) @ u_lambda
    a = _real(trace_product(p, w, p, dagger(w)), "Tr[PWPW+]")
    b = abs(trace_product(p, w)) ** 2
    return (a + b) / (d_p * (d_p + 1))


@dataclass(frozen=True)
class AveragedPerturbation:
    """Time-averaged interaction-picture perturbation."""

    matrix: np.ndarray

    def __post_init__(self):
        if not is_hermitian(self.matrix, 1e-10):
            raise ValueError("averaged perturbation is not Hermitian")


def averaged_perturbation(record: PropagationRecord, v: np.ndarray) -> AveragedPerturbation:
    """(1/T) int U0^+ V U0 dt by composite Simpson over the record's snapshots."""
    w = record.simpson_weights()
    u = record.unitaries
    vbar = np.einsum("k,kji,jl,klm->im", w, u.conj(), v, u)
    vbar = 0.5 * (vbar + dagger(vbar))
    return AveragedPerturbation(vbar)


def susceptibility(vbar, p: np.ndarray, d_p: int, total_time: float) -> float:
    """Second derivative of F_lambda at lambda = 0 (non-positive).

    ``total_time`` must be in the same units as 1/lambda (internal units).
    """
    m = vbar.matrix if isinstance(vbar, AveragedPerturbation) else np.asarray(vbar)
    tr_v2 = _real(trace_product(p, m, m), "Tr_P[V^2]")
    tr_v = _real(trace_product(p, m), "Tr_P[V]")
    tr_vpv = _real(trace_product(p, m, p, m), "Tr_P[VPV]")
    return -(2.0 * total_time ** 2 / d_p) * (tr_v2 - (tr_v ** 2 + tr_vpv) / (d_p + 1))


def robustness_cost(susc: float, omega: float, total_time: float) -> float:
    """J_R = -susc / (2 Omega^2 T^2)."""
    if not (total_time > 0 and omega > 0):
        raise ValueError("omega and total_time must be positive")
    return -susc / (2.0 * omega ** 2 * total_time ** 2)


def leakage_trace(record: PropagationRecord, p: np.ndarray, d_p: int) -> np.ndarray:
    _check_projector(p, d_p)
    u = record.unitaries
    pup = p @ u @ p
    return 1.0 - np.real(np.einsum("kij,kij->k", pup, pup.conj())) / d_p


def leakage_cost(record: PropagationRecord, p: np.ndarray, d_p: int) -> float:
    """Time-averaged leakage J_L (Simpson over all snapshots)."""
    return float(record.simpson_weights() @ leakage_trace(record, p, d_p))


def dynamical_traces(record: PropagationRecord, u_tar: np.ndarray, p: np.ndarray, d_p: int):
    """Time-resolved target fidelity f0(t) and leakage l0(t).

    Returns two ``(n_nodes, 2)`` arrays of ``[t / T_Omega, value]`` rows.
    """
    _check_projector(p, d_p)
    x = embed(u_tar, record.n_levels)
    u = record.unitaries
    pup = p @ u @ p
    a = np.real(np.einsum("kij,kij->k", pup, pup.conj()))
    b = np.abs(np.einsum("ij,kji->k", p @ x @ p, dagger(u))) ** 2
    f0 = (a + b) / (d_p * (d_p + 1))
    l0 = 1.0 - a / d_p
    t = record.times
    return np.column_stack([t, f0]), np.column_stack([t, l0])


@dataclass
class CostReport:
    """J_U, J_R, J_L for one pulse plus time-resolved traces."""

    j_u: float
    j_r: float
    j_l: float
    f0_trace: np.ndarray = field(repr=False)
    l0_trace: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    @property
    def max_leakage(self) -> float:
        return float(np.max(self.l0_trace[:, 1]))

    def to_dict(self) -> dict:
        return {"j_u": self.j_u, "j_r": self.j_r, "j_l": self.j_l,
                "f0_trace": np.asarray(self.f0_trace).tolist(),
                "l0_trace": np.asarray(self.l0_trace).tolist(),
                "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CostReport":
        return cls(d["j_u"], d["j_r"], d["j_l"], np.asarray(d["f0_trace"]),
                   np.asarray(d["l0_trace"]), d.get("metadata", {}))


def cost_report(record: PropagationRecord, u_tar: np.ndarray, p: np.ndarray, d_p: int,
                v: np.ndarray, omega: float = 1.0) -> CostReport:
    """All three costs and both traces from one propagation record."""
    f0, l0 = dynamical_traces(record, u_tar, p, d_p)
    t_int = float(record.internal_times[-1])
    susc = susceptibility(averaged_perturbation(record, v), p, d_p, t_int)
    return CostReport(
        j_u=float(1.0 - f0[-1, 1]),
        j_r=robustness_cost(susc, omega, t_int),
        j_l=float(record.simpson_weights() @ l0[:, 1]),
        f0_trace=f0, l0_trace=l0,
        metadata={"omega_convention": "drive strength Omega = 1 (internal units)"})


# --- batched kernels (subspace = first d_p levels) ---------------------------

def batch_target_cost(u: np.ndarray, u_tar: np.ndarray) -> np.ndarray:
    """J_U for stacked final unitaries ``(..., N, N)``."""
    d = u_tar.shape[0]
    blk = u[..., :d, :d]
    a = np.sum(np.abs(blk) ** 2, axis=(-2, -1))
    b = np.abs(np.einsum("ij,...ij->...", u_tar.conj(), blk)) ** 2
    return 1.0 - (a + b) / (d * (d + 1))


def batch_leakage(u: np.ndarray, d_p: int = 2) -> np.ndarray:
    return 1.0 - np.sum(np.abs(u[..., :d_p, :d_p]) ** 2, axis=(-2, -1)) / d_p


def batch_robustness_cost(snaps: np.ndarray, weights: np.ndarray, v: np.ndarray,
                          d_p: int = 2) -> np.ndarray:
    """J_R from stacked snapshots ``(..., K, N, N)`` and Simpson weights ``(K,)``.

    Only the first ``d_p`` columns of Vbar enter the susceptibility.
    """
    cols = np.einsum("k,...kji,jl,...klm->...im", weights, snaps.conj(), v,
                     snaps[..., :d_p], optimize=True)
    blk = cols[..., :d_p, :]
    tr_v2 = np.sum(np.abs(cols) ** 2, axis=(-2, -1))
    tr_v = np.real(np.trace(blk, axis1=-2, axis2=-1))
    tr_vpv = np.sum(np.abs(blk) ** 2, axis=(-2, -1))
    # J_R = (1/d_p) {Tr_P[V^2] - (Tr_P[V]^2 + Tr_P[VPV]) / (d_p + 1)} with Omega = 1
    return (tr_v2 - (tr_v ** 2 + tr_vpv) / (d_p + 1)) / d_p


def batch_leakage_cost(snaps: np.ndarray, weights: np.ndarray, d_p: int = 2) -> np.ndarray:
    return batch_leakage(snaps, d_p) @ weights
