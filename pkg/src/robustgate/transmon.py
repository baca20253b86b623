"""Driven transmon (truncated anharmonic oscillator) in the rotating frame.

Internal units set the drive strength to one, so energies are in units of
Omega and internal times in units of 1/Omega. Pulse durations are quoted
in units of T_Omega = 2 pi / Omega; :func:`internal_time` converts.

    H0 = (delta - alpha/2) n + (alpha/2) n^2 + (1/sqrt 2) [d_R q - d_I p]
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


def internal_time(t_over_tomega):
    """Convert a time in units of T_Omega to internal units (1/Omega)."""
    return TWO_PI * np.asarray(t_over_tomega, dtype=float)


def annihilation(n_levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_levels)), k=1).astype(complex)


class PerturbationKind(str, enum.Enum):
    """Static error operator V in H0 + lambda V."""

    NUMBER = "n"            # detuning error
    QUADRATURE = "q"        # amplitude error
    NUMBER_SQUARED = "n2"   # anharmonicity error

    @classmethod
    def parse(cls, value) -> "PerturbationKind":
        if isinstance(value, cls):
            return value
        aliases = {"n": cls.NUMBER, "number": cls.NUMBER,
                   "q": cls.QUADRATURE, "quadrature": cls.QUADRATURE,
                   "n2": cls.NUMBER_SQUARED, "n^2": cls.NUMBER_SQUARED,
                   "number_squared": cls.NUMBER_SQUARED}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown perturbation kind {value!r}") from None


@dataclass(frozen=True)
class TransmonModel:
    """Truncated anharmonic oscillator with a two-level computational subspace.

    ``delta_over_omega`` and ``alpha_over_omega`` are the detuning and the
    anharmonicity in units of the drive strength ``omega``.
    """

    n_levels: int = 6
    delta_over_omega: float = -0.5
    alpha_over_omega: float = -2.0
    omega: float = 1.0
    _ops: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if int(self.n_levels) != self.n_levels or self.n_levels < 3:
            raise ValueError("n_levels must be an integer >= 3")
        if not (np.isfinite(self.delta_over_omega) and np.isfinite(self.alpha_over_omega)):
            raise ValueError("detuning and anharmonicity must be finite")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        n = self.n_levels
        a = annihilation(n)
        ad = a.conj().T
        num = ad @ a
        ops = {
            "a": a,
            "n": num,
            "n2": num @ num,
            "q": (a + ad) / np.sqrt(2),
            "p": 1j * (ad - a) / np.sqrt(2),
            "P": np.diag([1.0, 1.0] + [0.0] * (n - 2)).astype(complex),
        }
        for arr in ops.values():
            arr.setflags(write=False)
        object.__setattr__(self, "_ops", ops)

    def op(self, name: str) -> np.ndarray:
        return self._ops[name]

    @property
    def d_p(self) -> int:
        return 2

    def with_levels(self, n_levels: int) -> "TransmonModel":
        return TransmonModel(n_levels, self.delta_over_omega, self.alpha_over_omega, self.omega)

    def drift(self, delta: float | None = None) -> np.ndarray:
        delta = self.delta_over_omega if delta is None else delta
        alpha = self.alpha_over_omega
        return (delta - alpha / 2) * self._ops["n"] + (alpha / 2) * self._ops["n2"]

    def drive_ops(self) -> tuple[np.ndarray, np.ndarray]:
        """Operators multiplying d_R and d_I in the Hamiltonian."""
        return self._ops["q"] / np.sqrt(2), -self._ops["p"] / np.sqrt(2)

    def to_dict(self) -> dict:
        return {"n_levels": self.n_levels, "delta_over_omega": self.delta_over_omega,
                "alpha_over_omega": self.alpha_over_omega, "omega": self.omega}

    @classmethod
    def from_dict(cls, d: dict) -> "TransmonModel":
        return cls(**{k: d[k] for k in ("n_levels", "delta_over_omega",
                                         "alpha_over_omega", "omega") if k in d})


@dataclass(frozen=True)
class ControlPulse:
    """Piecewise-constant two-quadrature drive.

    ``total_time`` is in units of T_Omega; segment ``j`` holds the constant
    amplitudes ``(d_r[j], d_i[j])``.
    """

    total_time: float
    d_r: np.ndarray
    d_i: np.ndarray
    bound: float = 1.0

    def __post_init__(self):
        d_r = np.array(self.d_r, dtype=float).ravel()
        d_i = np.array(self.d_i, dtype=float).ravel()
        if d_r.shape != d_i.shape or d_r.size == 0:
            raise ValueError("d_r and d_i must be non-empty and of equal length")
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")
        if not (np.all(np.isfinite(d_r)) and np.all(np.isfinite(d_i))):
            raise ValueError("amplitudes must be finite")
        tol = 1e-12
        if np.max(np.abs(d_r)) > self.bound + tol or np.max(np.abs(d_i)) > self.bound + tol:
            raise ValueError(f"amplitudes exceed bound {self.bound}")
        d_r.setflags(write=False)
        d_i.setflags(write=False)
        object.__setattr__(self, "d_r", d_r)
        object.__setattr__(self, "d_i", d_i)

    @property
    def n_segments(self) -> int:
        return self.d_r.size

    @property
    def segment_duration(self) -> float:
        """Segment length in internal time units."""
        return float(internal_time(self.total_time)) / self.n_segments

    @property
    def params(self) -> np.ndarray:
        """Flat parameter vector ``[d_r..., d_i...]`` of length 2M."""
        return np.concatenate([self.d_r, self.d_i])

    @classmethod
    def from_params(cls, x, total_time: float, bound: float = 1.0, clip: bool = False):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2:
            raise ValueError("parameter vector must have even length 2M")
        if clip:
            x = np.clip(x, -bound, bound)
        m = x.size // 2
        return cls(total_time, x[:m], x[m:], bound)

    @classmethod
    def zeros(cls, n_segments: int, total_time: float, bound: float = 1.0):
        return cls(total_time, np.zeros(n_segments), np.zeros(n_segments), bound)

    @classmethod
    def random(cls, n_segments: int, total_time: float, rng, bound: float = 1.0):
        rng = np.random.default_rng(rng)
        x = rng.uniform(-bound, bound, size=2 * n_segments)
        return cls.from_params(x, total_time, bound)

    def to_dict(self) -> dict:
        return {"total_time": self.total_time, "d_r": self.d_r.tolist(),
                "d_i": self.d_i.tolist(), "bound": self.bound}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlPulse":
        return cls(d["total_time"], d["d_r"], d["d_i"], d.get("bound", 1.0))


def hamiltonian_at(model: TransmonModel, d_r: float, d_i: float,
                   delta_override: float | None = None) -> np.ndarray:
    """Drift plus drive Hamiltonian for constant amplitudes (units of Omega).

    ``delta_override`` replaces the model detuning (used for time-dependent
    detuning schedules).
    """
    if not (np.isfinite(d_r) and np.isfinite(d_i)):
        raise ValueError("amplitudes must be finite")
    xr, xi = model.drive_ops()
    return model.drift(delta_override) + d_r * xr + d_i * xi


def segment_hamiltonians(model: TransmonModel, d_r, d_i, delta=None) -> np.ndarray:
    """Stack of Hamiltonians, one per amplitude pair. Broadcasts over leading axes."""
    d_r = np.asarray(d_r, dtype=float)
    d_i = np.asarray(d_i, dtype=float)
    xr, xi = model.drive_ops()
    h = d_r[..., None, None] * xr + d_i[..., None, None] * xi
    if delta is None:
        return h + model.drift()
    delta = np.asarray(delta, dtype=float)
    return (h + (model.op("n2") - model.op("n")) * (model.alpha_over_omega / 2)
            + delta[..., None, None] * model.op("n"))


def projector(model: TransmonModel) -> np.ndarray:
    """Projector onto span{|0>, |1>}."""
    return model.op("P").copy()


def perturbation_matrix(model: TransmonModel, kind) -> np.ndarray:
    kind = PerturbationKind.parse(kind)
    return model.op(kind.value).copy()


def rescale_factor(model: TransmonModel, kind) -> float:
    """Tr_P(V^2): 1 for n and n^2, 2 for q."""
    v = perturbation_matrix(model, kind)
    return float(np.real(np.trace(model.op("P") @ v @ v)))


def x_gate() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def embed(u_sub: np.ndarray, n_levels: int) -> np.ndarray:
    """``U_sub (+) 1`` on an N-level space."""
    u_sub = np.asarray(u_sub, dtype=complex)
    k = u_sub.shape[0]
    out = np.eye(n_levels, dtype=complex)
    out[:k, :k] = u_sub
    return out


def commutator_defect(model: TransmonModel) -> float:
    """Max deviation of [q, p] from i*1 on levels 0..N-2."""
    q, p = model.op("q"), model.op("p")
    c = q @ p - p @ q
    k = model.n_levels - 1
    return float(np.max(np.abs(c[:k, :k] - 1j * np.eye(k))))

