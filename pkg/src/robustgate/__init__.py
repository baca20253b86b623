"""Robust and leakage-aware single-qubit gates on a driven transmon."""
from .costfn import (CostReport, cost_report, leakage, leakage_cost, perturbed_fidelity,
                     robustness_cost, subspace_fidelity, susceptibility, target_cost)
from .drag import DragParams, simulate_drag
from .optimizer import OptimizationConfig, OptimizationOutcome, Scheme, optimize
from .propagate import PropagationRecord, propagate, propagate_perturbed
from .transmon import ControlPulse, PerturbationKind, TransmonModel

__version__ = "0.1.0"

__all__ = ["ControlPulse", "CostReport", "DragParams", "OptimizationConfig",
           "OptimizationOutcome", "PerturbationKind", "PropagationRecord", "Scheme",
           "TransmonModel", "cost_report", "leakage", "leakage_cost", "optimize",
           "perturbed_fidelity", "propagate", "propagate_perturbed", "robustness_cost",
           "simulate_drag", "subspace_fidelity", "susceptibility",
           "target_cost"]
