"""CSV and SVG output for regret traces."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
from scipy import stats

from ..errors import GraphBOError
from ..plotting import plot_regret

TRACE_COLUMNS = ("iteration", "method", "seed", "node", "y", "best", "regret")
AGGREGATE_COLUMNS = ("iteration", "method", "runs", "mean_regret", "ci_low", "ci_high")
SUMMARY_COLUMNS = ("method", "seed", "final_regret", "queries", "edge_queries", "error")


def _fmt(x) -> str:
    return repr(float(x))


def mean_ci(values, level=0.95):
    """Mean and half-width of the two-sided t interval (0 for a single value)."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if v.size < 2:
        return mean, 0.0
    sem = float(v.std(ddof=1)) / np.sqrt(v.size)
    return mean, float(stats.t.ppf(0.5 + level / 2, v.size - 1) * sem)


def aggregate(traces):
    """``{method: (iterations, mean, low, high, runs)}`` over the seeds of each method.

    Truncated traces contribute only to the iterations they reached.
    """
    by_method = {}
    for tr in traces:
        by_method.setdefault(tr.method, []).append(tr)
    out = {}
    for method, group in sorted(by_method.items()):
        last = max(len(tr.records) for tr in group)
        it, mean, half, runs = [], [], [], []
        for t in range(last):
            vals = [tr.records[t].regret for tr in group if t < len(tr.records)]
            m, h = mean_ci(vals)
            it.append(group[0].records[t].t if t < len(group[0].records) else t)
            mean.append(m)
            half.append(h)
            runs.append(len(vals))
        it, mean, half = np.array(it), np.array(mean), np.array(half)
        out[method] = (it, mean, mean - half, mean + half, np.array(runs))
    return out


def _open(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise GraphBOError(f"cannot write {path}: {exc}") from exc


def write_trace_csv(trace, path):
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([r.t, trace.method, trace.seed, r.node, _fmt(r.y), _fmt(r.best),
                        _fmt(r.regret)])


def write_timings_csv(traces, path):
    """Wall-clock seconds per iteration; kept apart so the result CSVs stay reproducible."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "method", "seed", "wall_time"])
        for tr in traces:
            for r in tr.records:
                w.writerow([r.t, tr.method, tr.seed, f"{r.wall_time:.6f}"])


def aggregate_and_export(traces, out_dir, title=None, plot=True):
    """Write per-run, aggregate, summary and timing CSVs plus an SVG plot.

    Returns a dict of the paths written.
    """
    traces = list(traces)
    if not traces:
        raise GraphBOError("nothing to export: no traces")
    out = Path(out_dir)
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise GraphBOError(f"cannot create output directory {out}: {exc}") from exc
    paths = {"runs": []}
    for tr in traces:
        p = out / f"trace_{tr.method}_seed{tr.seed}.csv"
        write_trace_csv(tr, p)
        paths["runs"].append(p)

    agg = aggregate(traces)
    paths["aggregate"] = out / "aggregate.csv"
    with _open(paths["aggregate"]) as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for method, (it, mean, lo, hi, runs) in agg.items():
            for row in zip(it, mean, lo, hi, runs):
                w.writerow([int(row[0]), method, int(row[4]), *(_fmt(x) for x in row[1:4])])

    paths["summary"] = out / "summary.csv"
    with _open(paths["summary"]) as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for tr in traces:
            w.writerow([tr.method, tr.seed, _fmt(tr.final_regret), len(tr.queried),
                        tr.edge_queries, tr.error or ""])

    paths["timings"] = out / "timings.csv"
    write_timings_csv(traces, paths["timings"])
    if plot:
        paths["plot"] = out / "regret.svg"
        try:
            plot_regret({m: v[:4] for m, v in agg.items()}, paths["plot"], title=title)
        except OSError as exc:
            raise GraphBOError(f"cannot write {paths['plot']}: {exc}") from exc
    return paths
