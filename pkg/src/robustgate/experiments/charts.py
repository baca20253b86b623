"""Static SVG renderings of experiment CSVs.

Every chart is drawn from a CSV file alone, so it can be regenerated later
with ``render(kind, csv_path, out_dir)``.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .output import read_csv  # noqa: E402


def _floor(v, lo=1e-16):
    return max(float(v), lo)


def _groups(rows, *keys):
    out = defaultdict(list)
    for r in rows:
        out[tuple(r[k] for k in keys)].append(r)
    return out


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def time_sweep_chart(csv_path, out_dir) -> list[Path]:
    rows = read_csv(csv_path)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for (scheme, v, alpha), grp in sorted(_groups(rows, "scheme", "V", "alpha_over_omega").items()):
        grp = sorted(grp, key=lambda r: float(r["T_over_Tomega"]))
        t = [float(r["T_over_Tomega"]) for r in grp]
        label = f"{scheme} V={v} a={float(alpha):g}"
        axes[0].semilogy(t, [_floor(r["j_u"]) for r in grp], "o-", label=label)
        axes[1].semilogy(t, [_floor(r["j_r"]) for r in grp], "o-", label=label)
    for ax, name in zip(axes, ("J_U", "J_R")):
        ax.set_xlabel("T / T_Omega")
        ax.set_ylabel(name)
    axes[0].legend(fontsize=7)
    return [_save(fig, Path(out_dir) / "time_sweep.svg")]


def perturbation_scan_chart(csv_path, out_dir, name: str = "perturbation_scan.svg") -> list[Path]:
    rows = read_csv(csv_path)
    kinds = sorted({r["V"] for r in rows})
    fig, axes = plt.subplots(1, len(kinds), figsize=(3.4 * len(kinds), 3.4), squeeze=False)
    for ax, v in zip(axes[0], kinds):
        sub = [r for r in rows if r["V"] == v]
        for proto, grp in _groups(sub, "protocol").items():
            grp = sorted(grp, key=lambda r: float(r["lambda_tilde"]))
            ax.semilogy([float(r["lambda_tilde"]) for r in grp],
                        [_floor(r["infidelity"]) for r in grp],
                        "k:" if proto[0] == "DRAG" else "-", label=proto[0])
        ax.set_title(f"V = {v}")
        ax.set_xlabel("rescaled lambda")
    axes[0][0].set_ylabel("1 - F")
    axes[0][0].legend(fontsize=7)
    return [_save(fig, Path(out_dir) / name)]


def traces_chart(csv_path, out_dir) -> list[Path]:
    rows = read_csv(csv_path)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for (proto,), grp in _groups(rows, "protocol").items():
        t = [float(r["t_over_Tomega"]) for r in grp]
        axes[0].plot(t, [float(r["f0"]) for r in grp], label=proto)
        axes[1].plot(t, [float(r["l0"]) for r in grp], label=proto)
    axes[0].set_ylabel("f0(t)")
    axes[1].set_ylabel("l0(t)")
    for ax in axes:
        ax.set_xlabel("t / T_Omega")
    axes[0].legend(fontsize=7)
    return [_save(fig, Path(out_dir) / "traces.svg")]


def scatter_chart(csv_path, out_dir) -> list[Path]:
    rows = read_csv(csv_path)
    paths = []
    for (t, alpha), grp in sorted(_groups(rows, "T_over_Tomega", "alpha_over_omega").items()):
        fig, ax = plt.subplots(figsize=(4.5, 3.8))
        for (scheme,), sub in _groups(grp, "scheme").items():
            ax.loglog([_floor(r["j_r"]) for r in sub], [_floor(r["j_l"]) for r in sub],
                      "o", ms=3, label=scheme)
        ax.set_xlabel("J_R")
        ax.set_ylabel("J_L")
        ax.set_title(f"T={float(t):g} T_Omega, alpha/Omega={float(alpha):g}", fontsize=9)
        ax.legend(fontsize=7)
        paths.append(_save(fig, Path(out_dir) / f"scatter_T{float(t):g}_a{float(alpha):g}.svg"))
    return paths


def drag_chart(csv_path, out_dir) -> list[Path]:
    rows = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    t = [float(r["t"]) for r in rows]
    for col in ("d_r", "d_i", "delta"):
        ax.plot(t, [float(r[col]) for r in rows], label=col)
    ax.set_xlabel("t / T_Omega")
    ax.legend(fontsize=7)
    return [_save(fig, Path(out_dir) / "drag_fields.svg")]


RENDERERS = {
    "sweep-time": time_sweep_chart,
    "sweep-alpha": time_sweep_chart,
    "scan-perturbation": perturbation_scan_chart,
    "traces": traces_chart,
    "tradeoff": scatter_chart,
    "drag": drag_chart,
}


def render(kind: str, csv_path, out_dir) -> list[Path]:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    return RENDERERS[kind](csv_path, out_dir)
