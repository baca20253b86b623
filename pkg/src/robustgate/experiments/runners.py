"""Experiment drivers behind the CLI subcommands.

Each ``run_*`` function takes an :class:`ExperimentSpec`, writes a run
bundle and returns a :class:`RunResult`. Independent optimizations and
lambda points are fanned out to a process pool when ``spec.workers > 1``;
rows are always sorted by their grid keys before being written.
"""
from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import costfn
from ..drag import DragFields, SamplingConvergenceError, propagate_drag, simulate_drag
from ..optimizer import (SCATTER_EPSILON, OptimizationOutcome, Scheme, evaluate_pulse,
                         multistart_scatter, optimize, time_sweep)
from ..propagate import DEFAULT_DRAG_STEPS, final_unitaries, propagate
from ..transmon import (PerturbationKind, perturbation_matrix, projector,
                        rescale_factor, segment_hamiltonians, x_gate)
from . import charts
from .config import ConfigError, ExperimentSpec
from .output import META_COLUMNS, RunBundle, meta_block

log = logging.getLogger(__name__)

TIME_SWEEP_HEADER = ("T_over_Tomega", "scheme", "V", "j_u", "j_r", "seed", "j_l", "converged",
                     "feasible") + META_COLUMNS[:-1]
SCAN_HEADER = ("lambda_tilde", "protocol", "V", "infidelity", "T_over_Tomega") + META_COLUMNS
TRACE_HEADER = ("t_over_Tomega", "protocol", "f0", "l0", "T_over_Tomega") + META_COLUMNS
SCATTER_HEADER = ("scheme", "seed", "j_u", "j_r", "j_l", "converged", "T_over_Tomega",
                  "epsilon_a") + META_COLUMNS[:-1]
SUMMARY_HEADER = ("T_over_Tomega", "alpha_over_omega", "scheme", "median_j_u", "median_j_r",
                  "median_j_l", "n_runs", "n_converged", "epsilon_a")
OPTIMIZE_HEADER = ("T_over_Tomega", "scheme", "V", "j_u", "j_r", "j_l", "max_l0", "converged",
                   "feasible", "pulse_file") + META_COLUMNS
TRACE_PROTOCOLS = ("T", "TR", "TL", "DRAG")
SCAN_EPSILON = 1e-5     # stage-A threshold for scan pulses unless the config sets one


class PulseArtifactError(ConfigError):
    """A protocol needs a pulse that was neither supplied nor allowed inline."""


@dataclass
class RunResult:
    path: Path
    rows: list
    status: str = "ok"          # "ok", "infeasible" or "validation_failed"
    extra: dict = field(default_factory=dict)


def _pool_map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _bundle(spec: ExperimentSpec, experiment: str) -> RunBundle:
    root = spec.check_output_dir()
    b = RunBundle(root, experiment)
    b.write_spec(spec.to_dict())
    return b


def _charts(spec, kind, csv_path, bundle, name=None):
    if not spec.charts:
        return []
    if name is None:
        return charts.render(kind, csv_path, bundle.charts_dir)
    return charts.perturbation_scan_chart(csv_path, bundle.charts_dir, name)


# --- pulses ----------------------------------------------------------------

def _needs_perturbation(scheme: str) -> bool:
    return Scheme(scheme) in (Scheme.TR, Scheme.TRL)


def pulse_key(scheme: str, total_time: float, kind=None) -> str:
    key = f"{scheme}@{float(total_time):g}"
    if kind is not None and _needs_perturbation(scheme):
        key += f":{PerturbationKind.parse(kind).value}"
    return key


def _best_of_seeds(model, cfg, total_time, seeds) -> OptimizationOutcome:
    runs = [optimize(model, replace(cfg, seed=s), total_time) for s in seeds]
    feasible = [r for r in runs if r.feasible]
    pool = feasible or runs
    if cfg.scheme is Scheme.T:
        return min(pool, key=lambda r: r.cost.j_u)
    return min(pool, key=lambda r: (r.stage_b_final, r.cost.j_u))


def _opt_job(args):
    model, cfg, t, seeds = args
    return _best_of_seeds(model, cfg, t, seeds)


def obtain_pulses(spec: ExperimentSpec, requests) -> dict:
    """Resolve ``(scheme, time, kind)`` requests to optimization outcomes.

    With ``spec.pulses == "inline"`` missing pulses are optimized on the
    spot (best of ``spec.n_seeds`` seeds); otherwise every request must be
    present in the mapping, keyed like ``"TR@1.3:n"`` or ``"T@0.6"``.
    """
    keys = {}
    for scheme, t, kind in requests:
        keys.setdefault(pulse_key(scheme, t, kind), (scheme, t, kind))
    found, todo = {}, []
    for key, (scheme, t, kind) in sorted(keys.items()):
        if isinstance(spec.pulses, dict):
            path = spec.pulses.get(key)
            if path is None:
                raise PulseArtifactError(
                    f"no pulse for {key}; run `robustgate optimize --schemes {scheme} "
                    f"--times {float(t):g} --perturbations {kind or 'n'} --seed <seed>` and "
                    f"add its pulse file under pulses[\"{key}\"], or set pulses to \"inline\"")
            try:
                with open(path, encoding="utf-8") as fh:
                    outcome = OptimizationOutcome.from_dict(json.load(fh))
            except FileNotFoundError:
                raise PulseArtifactError(f"pulse file for {key} not found: {path}") from None
            if not np.isclose(outcome.pulse.total_time, float(t)):
                raise PulseArtifactError(f"pulse file {path} has T = "
                                         f"{outcome.pulse.total_time}, expected {t}")
            found[key] = outcome
        else:
            cfg = spec.optimization_config(scheme, kind or spec.perturbations[0])
            todo.append((key, (spec.model(), cfg, float(t), spec.seeds())))
    results = _pool_map(_opt_job, [job for _, job in todo], spec.workers)
    found.update({key: r for (key, _), r in zip(todo, results)})
    return found


# --- perturbation response ----------------------------------------------------

def infidelity_curve(model, pulse, kind, lambda_tilde) -> np.ndarray:
    """``1 - F_lambda`` for a piecewise-constant pulse at ``lambda = lambda~ Tr_P(V^2)``."""
    lam = np.asarray(lambda_tilde, dtype=float) * rescale_factor(model, kind)
    v = perturbation_matrix(model, kind)
    hams = segment_hamiltonians(model, pulse.d_r, pulse.d_i)
    dt = pulse.segment_duration
    u0 = final_unitaries(hams, dt)
    u = final_unitaries(hams[None] + lam[:, None, None, None] * v, dt)
    p = projector(model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", costfn.LeakyReferenceWarning)
        return np.array([1.0 - costfn.perturbed_fidelity(ui, u0, p, model.d_p) for ui in u])


def drag_infidelity_curve(model, params, kind, lambda_tilde, n_steps=DEFAULT_DRAG_STEPS):
    lam = np.asarray(lambda_tilde, dtype=float) * rescale_factor(model, kind)
    u0 = propagate_drag(model, params, n_steps).final
    p = projector(model)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", costfn.LeakyReferenceWarning)
        for lv in lam:
            u = propagate_drag(model, params, n_steps, perturbation=kind, lam=lv).final
            out.append(1.0 - costfn.perturbed_fidelity(u, u0, p, model.d_p))
    return np.array(out)


def _scan_job(args):
    kind, proto, t, model, payload, grid, n_steps = args
    if proto == "DRAG":
        return drag_infidelity_curve(model, payload, kind, grid, n_steps)
    return infidelity_curve(model, payload, kind, grid)


def _scan_rows(spec, protocols, kinds, grid, pulses, model_v):
    """Rows ``lambda_tilde, protocol, V, infidelity`` for every protocol and V."""
    jobs, tags = [], []
    for kind in kinds:
        for proto in protocols:
            name, t = proto["name"].upper(), float(proto["time"])
            if name == "DRAG":
                payload = spec.drag_params(t, model_v.alpha_over_omega)
                seed, m = spec.seed, spec.drag_steps or DEFAULT_DRAG_STEPS
            else:
                outcome = pulses[pulse_key(name, t, kind)]
                payload, seed, m = outcome.pulse, outcome.seed, outcome.pulse.n_segments
            jobs.append((kind, name, t, model_v, payload, grid,
                         spec.drag_steps or DEFAULT_DRAG_STEPS))
            tags.append((kind, name, t, seed, m))
    curves = _pool_map(_scan_job, jobs, spec.workers)
    rows = []
    for (kind, name, t, seed, m), curve in zip(tags, curves):
        meta = meta_block(model_v, m, seed)
        for lt, inf in zip(grid, curve):
            rows.append({"lambda_tilde": float(lt), "protocol": name, "V": kind,
                         "infidelity": float(inf), "T_over_Tomega": t, **meta})
    order = {p["name"].upper(): i for i, p in enumerate(protocols)}
    rows.sort(key=lambda r: (kinds.index(r["V"]), order[r["protocol"]], r["lambda_tilde"]))
    return rows


# --- runners -----------------------------------------------------------------

def run_optimize(spec: ExperimentSpec) -> RunResult:
    """Best-of-seeds optimization for every (scheme, V, T); pulses saved as JSON."""
    bundle = _bundle(spec, "optimize")
    model = spec.model()
    requests = [(s, t, k) for s in spec.schemes for t in spec.times for k in spec.perturbations]
    outcomes = obtain_pulses(replace(spec, pulses="inline"), requests)
    rows, infeasible = [], False
    for key in sorted(outcomes):
        o = outcomes[key]
        fname = f"pulses/{key.replace('@', '_T').replace(':', '_')}.json"
        bundle.write_json(o.to_dict(), fname)
        kinds = spec.perturbations if not _needs_perturbation(o.scheme.value) else \
            [key.split(":")[1]]
        for k in kinds:
            cfg = spec.optimization_config(o.scheme, k)
            c = evaluate_pulse(model, o.pulse, cfg)
            ok = o.feasible and (o.scheme is not Scheme.T or c.j_u <= cfg.epsilon_a)
            infeasible |= not ok
            rows.append({"T_over_Tomega": o.pulse.total_time, "scheme": o.scheme.value,
                         "V": k, "j_u": c.j_u, "j_r": c.j_r, "j_l": c.j_l,
                         "max_l0": c.max_leakage, "converged": o.converged, "feasible": ok,
                         "pulse_file": fname, **meta_block(model, o.pulse.n_segments, o.seed)})
    rows.sort(key=lambda r: (spec.schemes.index(r["scheme"]), spec.perturbations.index(r["V"]),
                             r["T_over_Tomega"]))
    bundle.write_csv(rows, OPTIMIZE_HEADER)
    return RunResult(bundle.path, rows, "infeasible" if infeasible else "ok")


def _sweep_job(args):
    model, cfg, times, seeds = args
    return time_sweep(model, cfg, times, seeds=seeds)


def run_time_sweep(spec: ExperimentSpec, experiment: str = "sweep-time") -> RunResult:
    """J_U and J_R against gate time, one warm-started chain per (alpha, scheme, V)."""
    bad = [s for s in spec.schemes if s not in ("T", "TR")]
    if bad:
        raise ConfigError(f"time sweeps support schemes T and TR only, got {bad}")
    times = sorted((float(t) for t in spec.times), reverse=True)
    alphas = [float(a) for a in spec.alphas] or [spec.alpha_over_omega]
    jobs, tags = [], []
    for a in alphas:
        model = spec.model(a)
        for s in spec.schemes:
            # the target-only pulse does not depend on V: optimize once, evaluate per V
            kinds = spec.perturbations if s == "TR" else [None]
            for k in kinds:
                cfg = spec.optimization_config(s, k)
                jobs.append((model, cfg, times, spec.seeds()))
                tags.append((model, s, k))
    chains = _pool_map(_sweep_job, jobs, spec.workers)
    rows = []
    for (model, s, k), outcomes in zip(tags, chains):
        for o in outcomes:
            for kind in ([k] if k else spec.perturbations):
                c = evaluate_pulse(model, o.pulse, spec.optimization_config(s, kind))
                rows.append({"T_over_Tomega": o.pulse.total_time, "scheme": s, "V": kind,
                             "j_u": c.j_u, "j_r": c.j_r, "seed": o.seed, "j_l": c.j_l,
                             "converged": o.converged, "feasible": o.feasible,
                             **meta_block(model, o.pulse.n_segments, o.seed)})
    rows.sort(key=lambda r: (alphas.index(r["alpha_over_omega"]), spec.schemes.index(r["scheme"]),
                             spec.perturbations.index(r["V"]), r["T_over_Tomega"]))
    bundle = _bundle(spec, experiment)
    path = bundle.write_csv(rows, TIME_SWEEP_HEADER)
    _charts(spec, experiment, path, bundle)
    return RunResult(bundle.path, rows)


def run_alpha_sweep(spec: ExperimentSpec) -> RunResult:
    """Time sweeps repeated over the anharmonicity grid."""
    if not spec.alphas:
        spec = replace(spec, alphas=[-1.0, -2.0, -5.0])
    return run_time_sweep(spec, "sweep-alpha")


def run_perturbation_scan(spec: ExperimentSpec) -> RunResult:
    """Infidelity against rescaled static perturbation at the verification size."""
    if "epsilon_a" not in spec.optimizer:
        spec = replace(spec, optimizer={**spec.optimizer, "epsilon_a": SCAN_EPSILON})
    protocols = [dict(p, name=p["name"].upper()) for p in spec.protocols]
    requests = [(p["name"], p["time"], k) for p in protocols if p["name"] != "DRAG"
                for k in spec.perturbations]
    pulses = obtain_pulses(spec, requests)
    model_v = spec.model(n_levels=spec.verification_n_levels)
    rows = _scan_rows(spec, protocols, spec.perturbations, spec.lambda_grid(), pulses, model_v)
    bundle = _bundle(spec, "scan-perturbation")
    for key, o in sorted(pulses.items()):
        bundle.write_json(o.to_dict(), f"pulses/{key.replace('@', '_T').replace(':', '_')}.json")
    path = bundle.write_csv(rows, SCAN_HEADER)
    _charts(spec, "scan-perturbation", path, bundle)
    return RunResult(bundle.path, rows)


def run_dynamics_traces(spec: ExperimentSpec) -> RunResult:
    """f0(t) and l0(t) for T, TR, TL and DRAG at ``spec.times[0]``, plus a final-time scan."""
    t = float(spec.times[0])
    kind = spec.perturbations[0]
    protocols = [{"name": p, "time": t} for p in TRACE_PROTOCOLS]
    pulses = obtain_pulses(spec, [(p, t, kind) for p in TRACE_PROTOCOLS if p != "DRAG"])
    model_v = spec.model(n_levels=spec.verification_n_levels)
    p_v, u_tar = projector(model_v), x_gate()
    rows, summary = [], {}
    for proto in TRACE_PROTOCOLS:
        if proto == "DRAG":
            params = spec.drag_params(t, model_v.alpha_over_omega)
            n_steps = spec.drag_steps or DEFAULT_DRAG_STEPS
            rec = propagate_drag(model_v, params, n_steps)
            seed, m = spec.seed, n_steps
        else:
            o = pulses[pulse_key(proto, t, kind)]
            rec = propagate(model_v, o.pulse)
            seed, m = o.seed, o.pulse.n_segments
        f0, l0 = costfn.dynamical_traces(rec, u_tar, p_v, model_v.d_p)
        meta = meta_block(model_v, m, seed)
        for (tt, f), (_, lk) in zip(f0, l0):
            rows.append({"t_over_Tomega": float(tt), "protocol": proto, "f0": float(f),
                         "l0": float(lk), "T_over_Tomega": t, **meta})
        summary[proto] = {"f0_final": float(f0[-1, 1]), "max_l0": float(np.max(l0[:, 1]))}
    bundle = _bundle(spec, "traces")
    path = bundle.write_csv(rows, TRACE_HEADER)
    scan = _scan_rows(spec, protocols, [kind], spec.lambda_grid(), pulses, model_v)
    scan_path = bundle.write_csv(scan, SCAN_HEADER, "lambda_scan.csv")
    bundle.write_json(summary, "summary.json")
    _charts(spec, "traces", path, bundle)
    _charts(spec, "scan-perturbation", scan_path, bundle, name="lambda_scan.svg")
    return RunResult(bundle.path, rows, extra={"summary": summary, "lambda_scan": scan})


def run_tradeoff_scatter(spec: ExperimentSpec) -> RunResult:
    """Multistart J_R / J_L scatter for every (T, alpha) scenario."""
    alphas = [float(a) for a in spec.alphas] or [spec.alpha_over_omega]
    eps = {**SCATTER_EPSILON, **spec.epsilons}
    rows, summary = [], []
    for t in [float(x) for x in spec.times]:
        for a in alphas:
            model = spec.model(a)
            base = spec.optimization_config(spec.schemes[0])
            scatter = multistart_scatter(model, spec.schemes, spec.n_starts, t, config=base,
                                         seed0=spec.seed, workers=spec.workers, epsilons=eps)
            for r in scatter:
                rows.append({**dict(zip(r.HEADER, r.as_tuple())), "T_over_Tomega": t,
                             "epsilon_a": eps.get(r.scheme, base.epsilon_a),
                             **meta_block(model, spec.n_segments, r.seed)})
            for s in spec.schemes:
                sub = [r for r in scatter if r.scheme == s]
                med = {k: float(np.nanmedian([getattr(r, k) for r in sub]))
                       for k in ("j_u", "j_r", "j_l")}
                summary.append({"T_over_Tomega": t, "alpha_over_omega": a, "scheme": s,
                                "median_j_u": med["j_u"], "median_j_r": med["j_r"],
                                "median_j_l": med["j_l"], "n_runs": len(sub),
                                "n_converged": sum(r.converged for r in sub),
                                "epsilon_a": eps.get(s, base.epsilon_a)})
    bundle = _bundle(spec, "tradeoff")
    path = bundle.write_csv(rows, SCATTER_HEADER)
    bundle.write_csv(summary, SUMMARY_HEADER, "summary.csv")
    _charts(spec, "tradeoff", path, bundle)
    return RunResult(bundle.path, rows, extra={"summary": summary})


def run_drag(spec: ExperimentSpec) -> RunResult:
    """DRAG fields and their costs at ``spec.times[0]`` on the verification model."""
    t = float(spec.times[0])
    model_v = spec.model(n_levels=spec.verification_n_levels)
    params = spec.drag_params(t)
    n_steps = spec.drag_steps or DEFAULT_DRAG_STEPS
    fields = DragFields(params)
    table = fields.table(501)
    meta = meta_block(model_v, n_steps, spec.seed)
    rows = [{"t": float(r[0]), "d_r": float(r[1]), "d_i": float(r[2]), "delta": float(r[3]),
             **meta} for r in table]
    status = "ok"
    try:
        _, rep = simulate_drag(model_v, params, n_steps, spec.perturbations[0])
        summary = {"j_u": rep.j_u, "j_r": rep.j_r, "j_l": rep.j_l, "max_l0": rep.max_leakage}
    except SamplingConvergenceError as exc:
        summary = {"error": str(exc), "suggested_n_steps": exc.suggested_n_steps}
        status = "validation_failed"
    summary.update(area=fields.area(), params=params.to_dict(), n_steps=n_steps,
                   perturbation=spec.perturbations[0])
    bundle = _bundle(spec, "drag")
    path = bundle.write_csv(rows, ("t", "d_r", "d_i", "delta") + META_COLUMNS)
    bundle.write_json(summary, "summary.json")
    _charts(spec, "drag", path, bundle)
    return RunResult(bundle.path, rows, status, extra={"summary": summary})


def run_validation(spec: ExperimentSpec, susceptibility=None) -> RunResult:
    """Run every registered oracle check and log the reports as JSON lines."""
    from .validation import run_checks

    reports = run_checks(seed=spec.seed, susceptibility=susceptibility)
    bundle = _bundle(spec, "validate")
    bundle.append_validation(r.to_json() for r in reports)
    rows = [{"name": r.name, "passed": r.passed, "primary_value": r.primary_value,
             "oracle_value": r.oracle_value, "abs_err": r.abs_err, "rel_err": r.rel_err,
             "tolerance": r.tolerance} for r in reports]
    bundle.write_csv(rows, ("name", "passed", "primary_value", "oracle_value", "abs_err",
                            "rel_err", "tolerance"))
    failed = [r for r in reports if not r.passed]
    return RunResult(bundle.path, reports, "validation_failed" if failed else "ok",
                     extra={"failed": failed})


RUNNERS = {
    "optimize": run_optimize,
    "sweep-time": run_time_sweep,
    "sweep-alpha": run_alpha_sweep,
    "scan-perturbation": run_perturbation_scan,
    "traces": run_dynamics_traces,
    "tradeoff": run_tradeoff_scatter,
    "drag": run_drag,
    "validate": run_validation,
}
