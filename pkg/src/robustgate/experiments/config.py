"""Experiment specifications and their JSON schema.

A config file has four optional blocks plus a few top-level keys::

    {
      "name": "time_sweep",
      "model":     {"n_levels": 6, "alpha_over_omega": -2.0, "delta_over_omega": -0.5},
      "pulse":     {"n_segments": 15, "bound": 1.0},
      "optimizer": {"schemes": ["T", "TR"], "perturbations": ["n"], "epsilon_a": 1e-4,
                    "n_seeds": 1, "max_iters_per_stage": 2000},
      "grids":     {"times": [2.0, 1.5, 1.0], "alphas": [-2.0],
                    "lambdas": {"min": -0.15, "max": 0.15, "n": 41}},
      "seed": 0,
      "output_dir": "out",
      "verification_n_levels": 11
    }

Missing keys fall back to the defaults of :class:`ExperimentSpec`.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..drag import DragParams
from ..optimizer import OptimizationConfig, Scheme
from ..transmon import PerturbationKind, TransmonModel


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


DEFAULT_LAMBDAS = {"min": -0.15, "max": 0.15, "n": 41}
DEFAULT_PROTOCOLS = ({"name": "T", "time": 0.6}, {"name": "TR", "time": 1.3},
                     {"name": "DRAG", "time": 1.3})

# optimizer keys forwarded verbatim to OptimizationConfig
_OPT_KEYS = ("epsilon_a", "max_iters_per_stage", "gradient_step", "tolerance",
             "gradient_tolerance", "substeps", "stage_b_iters")


SWEEP_TIMES = [2.0, 1.8, 1.6, 1.4, 1.3, 1.2, 1.0, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3]

# defaults per CLI command when no config file is given
COMMAND_DEFAULTS = {
    "optimize": {},
    "sweep-time": {"schemes": ["T", "TR"], "perturbations": ["n", "q"], "times": SWEEP_TIMES},
    "sweep-alpha": {"schemes": ["T", "TR"], "perturbations": ["n"], "times": SWEEP_TIMES,
                    "alphas": [-1.0, -2.0, -5.0]},
    "scan-perturbation": {"perturbations": ["n", "q", "n2"]},
    "traces": {"times": [1.3]},
    "tradeoff": {"schemes": ["T", "TR", "TL", "TRL"], "times": [1.3, 2.0],
                 "alphas": [-2.0, -5.0]},
    "drag": {"times": [1.3]},
    "validate": {"seed": 123},
}


def _scheme(value) -> Scheme:
    return value if isinstance(value, Scheme) else Scheme(str(value).upper())


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    schemes: list = field(default_factory=lambda: ["T", "TR"])
    perturbations: list = field(default_factory=lambda: ["n"])
    n_levels: int = 6
    alpha_over_omega: float = -2.0
    delta_over_omega: float = -0.5
    n_segments: int = 15
    bound: float = 1.0
    optimizer: dict = field(default_factory=dict)
    epsilons: dict = field(default_factory=dict)
    times: list = field(default_factory=lambda: [1.3])
    alphas: list = field(default_factory=list)
    lambdas: dict = field(default_factory=lambda: dict(DEFAULT_LAMBDAS))
    protocols: list = field(default_factory=lambda: [dict(p) for p in DEFAULT_PROTOCOLS])
    seed: int = 0
    n_seeds: int = 1
    n_starts: int = 50
    pulses: dict | str = "inline"
    drag: dict = field(default_factory=dict)
    output_dir: str = "out"
    verification_n_levels: int = 11
    workers: int = 1
    charts: bool = True

    def __post_init__(self):
        self.validate()

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        flat = {}
        model = d.pop("model", {}) or {}
        pulse = d.pop("pulse", {}) or {}
        opt = dict(d.pop("optimizer", {}) or {})
        grids = d.pop("grids", {}) or {}
        for key in ("n_levels", "alpha_over_omega", "delta_over_omega"):
            if key in model:
                flat[key] = model[key]
        for key in ("n_segments", "bound"):
            if key in pulse:
                flat[key] = pulse[key]
        for key in ("schemes", "perturbations", "epsilons", "n_seeds", "n_starts"):
            if key in opt:
                flat[key] = opt.pop(key)
        for key in ("times", "alphas", "lambdas", "protocols"):
            if key in grids:
                flat[key] = grids[key]
        unknown = set(opt) - set(_OPT_KEYS)
        if unknown:
            raise ConfigError(f"unknown optimizer keys: {sorted(unknown)}")
        flat["optimizer"] = opt
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        flat.update(d)
        try:
            return cls(**flat)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def for_command(cls, command: str) -> "ExperimentSpec":
        """Default spec for a CLI command (see :data:`COMMAND_DEFAULTS`)."""
        d = COMMAND_DEFAULTS.get(command, {})
        return cls(name=command, **{k: (list(v) if isinstance(v, list) else v)
                                    for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": {"n_levels": self.n_levels, "alpha_over_omega": self.alpha_over_omega,
                      "delta_over_omega": self.delta_over_omega},
            "pulse": {"n_segments": self.n_segments, "bound": self.bound},
            "optimizer": {**self.optimizer, "schemes": list(self.schemes),
                          "perturbations": list(self.perturbations),
                          "epsilons": dict(self.epsilons), "n_seeds": self.n_seeds,
                          "n_starts": self.n_starts},
            "grids": {"times": list(self.times), "alphas": list(self.alphas),
                      "lambdas": dict(self.lambdas), "protocols": list(self.protocols)},
            "seed": self.seed, "pulses": self.pulses, "drag": dict(self.drag),
            "output_dir": self.output_dir,
            "verification_n_levels": self.verification_n_levels,
            "workers": self.workers, "charts": self.charts,
        }

    def with_overrides(self, **kw) -> "ExperimentSpec":
        """Copy with the non-``None`` keyword values replaced."""
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    # -- checks -------------------------------------------------------------
    def validate(self) -> None:
        try:
            self.schemes = [_scheme(s).value for s in self.schemes]
            self.perturbations = [PerturbationKind.parse(v).value for v in self.perturbations]
            self.epsilons = {_scheme(k).value: float(v)
                             for k, v in self.epsilons.items()}
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        if not self.perturbations:
            raise ConfigError("at least one perturbation operator is required")
        if not self.times:
            raise ConfigError("grids.times must not be empty")
        if any(not float(t) > 0 for t in self.times):
            raise ConfigError("gate times must be positive")
        if any(float(a) == 0 for a in self.alphas):
            raise ConfigError("anharmonicities must be nonzero")
        lam = self.lambdas
        if not isinstance(lam, dict) or int(lam.get("n", 0)) < 1:
            raise ConfigError("grids.lambdas needs a positive point count 'n'")
        if int(lam["n"]) > 1 and not float(lam["max"]) > float(lam["min"]):
            raise ConfigError("grids.lambdas needs max > min")
        for p in self.protocols:
            if str(p.get("name", "")).upper() not in {"T", "TR", "TL", "TRL", "DRAG"}:
                raise ConfigError(f"unknown protocol {p!r}")
            if not float(p.get("time", 0)) > 0:
                raise ConfigError(f"protocol {p!r} needs a positive time")
        if self.n_seeds < 1 or self.n_starts < 1:
            raise ConfigError("n_seeds and n_starts must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.verification_n_levels < 3 or self.n_levels < 3:
            raise ConfigError("models need at least three levels")
        if not (isinstance(self.pulses, dict) or self.pulses == "inline"):
            raise ConfigError("pulses must be 'inline' or a mapping to outcome files")
        try:
            self.model()
            self.drag_params(1.3)
            self.optimization_config(self.schemes[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def check_output_dir(self) -> Path:
        path = Path(self.output_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output_dir {path}: {exc}") from None
        if not os.access(path, os.W_OK):
            raise ConfigError(f"output_dir {path} is not writable")
        return path

    # -- derived objects ----------------------------------------------------
    def model(self, alpha_over_omega: float | None = None,
              n_levels: int | None = None) -> TransmonModel:
        alpha = self.alpha_over_omega if alpha_over_omega is None else alpha_over_omega
        return TransmonModel(int(n_levels or self.n_levels), float(self.delta_over_omega),
                             float(alpha))

    def optimization_config(self, scheme, perturbation=None, seed: int | None = None,
                            ) -> OptimizationConfig:
        scheme = _scheme(scheme)
        opt = dict(self.optimizer)
        if scheme.value in self.epsilons:
            opt["epsilon_a"] = self.epsilons[scheme.value]
        return OptimizationConfig(
            scheme=scheme, seed=self.seed if seed is None else int(seed),
            perturbation=perturbation or self.perturbations[0],
            n_segments=int(self.n_segments), bound=float(self.bound), **opt)

    def drag_params(self, total_time: float, alpha_over_omega: float | None = None) -> DragParams:
        d = {k: v for k, v in self.drag.items() if k in ("sigma", "area")}
        alpha = self.alpha_over_omega if alpha_over_omega is None else alpha_over_omega
        return DragParams(total_time=float(total_time), alpha_over_omega=float(alpha), **d)

    @property
    def drag_steps(self) -> int | None:
        n = self.drag.get("n_steps")
        return None if n is None else int(n)

    def lambda_grid(self) -> np.ndarray:
        lam = self.lambdas
        return np.linspace(float(lam["min"]), float(lam["max"]), int(lam["n"]))

    def seeds(self) -> list[int]:
        return list(range(self.seed, self.seed + self.n_seeds))
