"""Parameter sweeps: run a grid of (value, seed) cells and aggregate per value.

Standard errors come from the spread across seeds, so every cell is an
independent run.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .config import ScenarioConfig
from .metrics import MetricsReport, compute_metrics
from .sim import run_scenario

PARAMS = {"alpha": "population.alpha", "sdk_p": "population.sdk_p", "geo_k": "geo.k"}
METRICS = [f.name for f in fields(MetricsReport)]


@dataclass
class SweepRow:
    param: str
    value: float
    seeds: int
    completed: int
    mean: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return self.completed < self.seeds


def cell_config(base: ScenarioConfig, param: str, value, seed: int) -> ScenarioConfig:
    if param not in PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {sorted(PARAMS)}")
    if param == "geo_k":
        value = None if value is None else int(value)
    return base.replace(**{PARAMS[param]: value, "seed": seed})


def run_cell(cfg: ScenarioConfig) -> MetricsReport:
    return compute_metrics(run_scenario(cfg))


def _safe_cell(cfg: ScenarioConfig):
    try:
        return run_cell(cfg), None
    except Exception as exc:  # a failed cell must not sink the whole sweep
        return None, f"seed {cfg.seed}: {type(exc).__name__}: {exc}"


def aggregate(reports: Sequence[MetricsReport]) -> tuple[dict, dict]:
    mean, stderr = {}, {}
    for name in METRICS:
        vals = np.array([getattr(r, name) for r in reports], dtype=float)
        mean[name] = float(vals.mean()) if len(vals) else math.nan
        stderr[name] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
    return mean, stderr


def sweep(base: ScenarioConfig, param: str, values: Sequence, seeds: int, workers: int = 1) -> list[SweepRow]:
    if not values:
        raise ValueError("values must be nonempty")
    if seeds < 1:
        raise ValueError("seeds must be at least 1")
    cells = [cell_config(base, param, v, base.seed + s) for v in values for s in range(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_safe_cell, cells))
    else:
        results = [_safe_cell(c) for c in cells]
    rows = []
    for k, value in enumerate(values):
        chunk = results[k * seeds:(k + 1) * seeds]
        ok = [rep for rep, err in chunk if rep is not None]
        mean, stderr = aggregate(ok)
        rows.append(SweepRow(param, value, seeds, len(ok), mean, stderr, [err for _, err in chunk if err]))
    return rows


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["param", "value", "seeds", "completed", "partial"]
               + [f"{m}_{s}" for m in METRICS for s in ("mean", "stderr")])
    for r in rows:
        w.writerow([r.param, r.value, r.seeds, r.completed, int(r.partial)]
                   + [repr(d[m]) for m in METRICS for d in (r.mean, r.stderr)])
    return buf.getvalue()


def parse_values(text: str, param: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if param == "geo_k":
            out.append(None if tok.lower() in ("none", "off") else int(tok))
        else:
            out.append(float(tok))
    return out


def row_dict(row: SweepRow) -> dict:
    d = asdict(row)
    d["partial"] = row.partial
    return d


def find_row(rows: Sequence[SweepRow], value) -> Optional[SweepRow]:
    return next((r for r in rows if r.value == value), None)
