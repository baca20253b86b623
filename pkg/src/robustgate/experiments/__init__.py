"""Figure-level experiment drivers, run bundles and charts."""
from .config import ConfigError, ExperimentSpec
from .runners import (RUNNERS, PulseArtifactError, RunResult, infidelity_curve,
                      run_alpha_sweep, run_drag, run_dynamics_traces, run_optimize,
                      run_perturbation_scan, run_time_sweep, run_tradeoff_scatter,
                      run_validation)

__all__ = ["ConfigError", "ExperimentSpec", "PulseArtifactError", "RUNNERS", "RunResult",
           "infidelity_curve", "run_alpha_sweep", "run_drag", "run_dynamics_traces",
           "run_optimize", "run_perturbation_scan", "run_time_sweep", "run_tradeoff_scatter",
           "run_validation"]
