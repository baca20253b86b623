"""Dense complex linear algebra used throughout the package.

Everything here works on small (N <= 11) dense matrices stored as complex128
numpy arrays. Matrix exponentials of Hermitian generators go through
``numpy.linalg.eigh`` so they are unitary to machine precision.

Most functions accept stacked inputs of shape ``(..., N, N)``.
"""
from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10


class LinAlgFailure(RuntimeError):
    """Raised when an eigendecomposition does not converge."""

    def __init__(self, message: str, norm: float):
        super().__init__(f"{message} (matrix norm {norm:.6g})")
        self.norm = norm


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol)


def unitarity_error(u: np.ndarray) -> float:
    """Largest elementwise deviation of ``U^dagger U`` from the identity."""
    u = np.asarray(u)
    eye = np.eye(u.shape[-1])
    return float(np.max(np.abs(dagger(u) @ u - eye), initial=0.0))


def check_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[-1] < 2:
        raise ValueError(f"{name} must have dimension >= 2")
    return a


def as_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> np.ndarray:
    """Validate and return ``u`` as a complex array; raise if not unitary."""
    u = check_square(u, "unitary")
    err = unitarity_error(u)
    if err > tol:
        raise ValueError(f"matrix is not unitary: max|U^dag U - I| = {err:.3e}")
    return u


def eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition with a diagnostic on failure."""
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"eigendecomposition failed: {exc}",
                            float(np.max(np.linalg.norm(h, axis=(-2, -1))))) from exc


def expm_from_eig(evals: np.ndarray, evecs: np.ndarray, dt) -> np.ndarray:
    """``Q diag(exp(-i E dt)) Q^dagger`` for (stacked) eigenpairs."""
    phases = np.exp(-1j * evals * np.asarray(dt)[..., None])
    return (evecs * phases[..., None, :]) @ dagger(evecs)


def expm_hermitian(h: np.ndarray, dt: float) -> np.ndarray:
    """Return ``exp(-i H dt)`` for Hermitian ``H`` (stacks allowed).

    Parameters
    ----------
    h : ndarray, shape (..., N, N)
        Hermitian generator(s).
    dt : float
        Evolution time.

    Raises
    ------
    ValueError
        If ``h`` is not Hermitian or ``dt`` is not finite.
    LinAlgFailure
        If the eigensolver does not converge.
    """
    h = check_square(h, "generator")
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    if not is_hermitian(h):
        raise ValueError("generator is not Hermitian")
    evals, evecs = eigh(h)
    return expm_from_eig(evals, evecs, dt)


def trace_product(*mats: np.ndarray) -> complex:
    """``Tr[A B ...]`` of conformable square matrices.

    The last product is never formed: ``Tr[X B] = sum(X * B.T)``.
    """
    if not mats:
        raise ValueError("need at least one matrix")
    mats = [np.asarray(m) for m in mats]
    n = mats[0].shape[-1]
    for m in mats:
        if m.ndim != 2 or m.shape != (n, n):
            raise ValueError(f"dimension mismatch: {[m.shape for m in mats]}")
    if len(mats) == 1:
        return complex(np.trace(mats[0]))
    left = mats[0]
    for m in mats[1:-1]:
        left = left @ m
    return complex(np.einsum("ij,ji->", left, mats[-1]))
