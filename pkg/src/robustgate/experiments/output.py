"""Run bundles: ``<output_dir>/<experiment>/<timestamp>/`` with data, spec and charts."""
from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path

META_COLUMNS = ("n_levels", "alpha_over_omega", "delta_over_omega", "n_segments", "seed")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


class RunBundle:
    """Directory holding everything one experiment run produced.

    Files are only ever written from the calling process, so worker pools
    can compute rows in parallel without interleaving output.
    """

    def __init__(self, root, experiment: str, timestamp: str | None = None):
        stamp = timestamp or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        base = Path(root) / experiment
        path = base / stamp
        k = 1
        while path.exists():
            path = base / f"{stamp}-{k}"
            k += 1
        path.mkdir(parents=True)
        self.path = path
        self.experiment = experiment

    @property
    def charts_dir(self) -> Path:
        d = self.path / "charts"
        d.mkdir(exist_ok=True)
        return d

    def write_spec(self, spec_dict: dict) -> Path:
        p = self.path / "spec.json"
        p.write_text(json.dumps(spec_dict, indent=2, sort_keys=True), encoding="utf-8")
        return p

    def write_csv(self, rows, header, name: str = "data.csv") -> Path:
        """Write dict rows with ``header`` columns (UTF-8, ``.`` decimals)."""
        p = self.path / name
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(r[h]) for h in header])
        return p

    def write_json(self, obj, name: str) -> Path:
        p = self.path / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(obj, indent=2), encoding="utf-8")
        return p

    def append_validation(self, lines) -> Path:
        p = self.path / "validation.jsonl"
        with open(p, "a", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line.rstrip("\n") + "\n")
        return p


def meta_block(model, n_segments: int, seed) -> dict:
    return {"n_levels": model.n_levels, "alpha_over_omega": model.alpha_over_omega,
            "delta_over_omega": model.delta_over_omega, "n_segments": int(n_segments),
            "seed": seed}


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
