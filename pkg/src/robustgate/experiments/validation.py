"""Registered oracle checks batched by ``robustgate validate``."""
from __future__ import annotations

import warnings

import numpy as np

from .. import costfn
from ..drag import DragFields, DragParams
from ..oracles import (DEFAULT_FD_STEPS, OracleReport, fd_susceptibility, mc_state_average,
                       second_difference, three_level_pi_pulse)
from ..propagate import propagate
from ..transmon import (ControlPulse, PerturbationKind, TransmonModel, internal_time,
                        perturbation_matrix, projector)

FD_TOL_REL = 1e-4
FD_TOL_ABS = 1e-8


def closed_form_susceptibility(model, pulse, kind, susceptibility=None) -> float:
    susceptibility = susceptibility or costfn.susceptibility
    rec = propagate(model, pulse)
    vbar = costfn.averaged_perturbation(rec, perturbation_matrix(model, kind))
    return susceptibility(vbar, projector(model), model.d_p,
                          float(internal_time(pulse.total_time)))


def check_fd_susceptibility(n_pulses: int = 4, seed: int = 123, susceptibility=None):
    model = TransmonModel()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_pulses):
        t = rng.uniform(0.5, 2.0)
        pulse = ControlPulse.random(15, t, rng)
        for kind in PerturbationKind:
            primary = closed_form_susceptibility(model, pulse, kind, susceptibility)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                oracle = fd_susceptibility(model, pulse, kind)
            out.append(OracleReport.compare(f"fd_susceptibility[{kind.value},{i}]", primary,
                                            oracle, FD_TOL_ABS, FD_TOL_REL,
                                            note=f"T={t:.4f}"))
    return out


def check_zero_susceptibility(susceptibility=None):
    susceptibility = susceptibility or costfn.susceptibility
    model = TransmonModel()
    p = projector(model)
    vbar = costfn.AveragedPerturbation(0.7 * np.eye(model.n_levels, dtype=complex))
    closed = susceptibility(vbar, p, model.d_p, float(internal_time(1.0)))
    pulse = ControlPulse.zeros(15, 1.0)
    # no truncation error here, so the wider stencil keeps rounding noise low;
    # an exact zero always looks noise dominated, hence the filter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fd = fd_susceptibility(model, pulse, "n", steps=DEFAULT_FD_STEPS,
                               v_override=np.eye(model.n_levels))
    return [OracleReport.compare("zero_susceptibility[closed]", closed, 0.0, 1e-10),
            OracleReport.compare("zero_susceptibility[fd]", fd, 0.0, 1e-8)]


def check_quadratic_stencil(c: float = 0.37):
    est, _ = second_difference(lambda lam: 1.0 - c * lam ** 2)
    return [OracleReport.compare("second_difference[quadratic]", est, -2 * c, 1e-10)]


def check_three_level():
    full, _, asym = three_level_pi_pulse(-1000.0)
    out = [OracleReport.compare("three_level[alpha=-1000]", full, asym, 0.0, 1e-5)]
    gaps = []
    for a in (-5.0, -20.0):
        f, _, s = three_level_pi_pulse(a)
        gaps.append(abs(f - s))
    ratio = gaps[0] / gaps[1]
    out.append(OracleReport("three_level[gap decay -5 -> -20]", ratio, 10.0,
                            abs(ratio - 10.0), abs(ratio - 10.0) / 10.0, bool(ratio >= 10.0),
                            0.0, None, "passes when the gap shrinks at least 10x"))
    return out


def check_monte_carlo(n_samples: int = 100_000, seed: int = 7):
    model = TransmonModel()
    rng = np.random.default_rng(seed)
    u = propagate(model, ControlPulse.random(15, 1.0, rng), 2).final
    u_ref = propagate(model, ControlPulse.random(15, 1.0, rng), 2).final
    p = projector(model)
    fid, leak, fid_se, leak_se = mc_state_average(u, u_ref, p, n_samples, seed)
    g = costfn.subspace_fidelity(u_ref, u, p, model.d_p)
    lk = costfn.leakage(u, p, model.d_p)
    return [OracleReport.compare("monte_carlo[fidelity]", g, fid, 3 * fid_se,
                                 note=f"3 standard errors = {3 * fid_se:.2e}"),
            OracleReport.compare("monte_carlo[leakage]", lk, leak, 3 * leak_se,
                                 note=f"3 standard errors = {3 * leak_se:.2e}")]


def check_drag_area():
    f = DragFields(DragParams())
    return [OracleReport.compare("drag_area", f.area(), np.pi, 1e-6)]


CHECKS = {
    "fd_susceptibility": check_fd_susceptibility,
    "zero_susceptibility": check_zero_susceptibility,
    "quadratic_stencil": check_quadratic_stencil,
    "three_level": check_three_level,
    "monte_carlo": check_monte_carlo,
    "drag_area": check_drag_area,
}


def run_checks(seed: int = 123, susceptibility=None) -> list[OracleReport]:
    """Execute every registered check.

    ``susceptibility`` replaces the closed-form formula under test, which
    lets a deliberately broken formula be fed in as a mutation smoke test.
    """
    reports = []
    reports += check_fd_susceptibility(seed=seed, susceptibility=susceptibility)
    reports += check_zero_susceptibility(susceptibility)
    reports += check_quadratic_stencil()
    reports += check_three_level()
    reports += check_monte_carlo()
    reports += check_drag_area()
    return reports
