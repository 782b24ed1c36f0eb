"""Turn a results table into per-method learning curves and an SVG figure.

Curves aggregate over trials at each iteration; the figure embeds its own
series data as a trailing XML comment so downstream checks can read back
exactly what was drawn without parsing SVG geometry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ConfigError
from .harness import ResultsTable

SERIES_MARKER = "<!-- series-data:"


@dataclass
class MethodCurve:
    """Mean metric value per iteration for one method, with standard errors."""

    method: str
    iterations: list[int]
    means: list[float]
    stderrs: list[float]


def summarize(table: ResultsTable, metric: str) -> list[MethodCurve]:
    """Learning curves for one metric, methods in first-appearance order.

    The standard error is over trials at each iteration (zero when only one
    trial reported there).
    """
    if not table.rows:
        raise ConfigError("results table is empty")
    if metric not in table.metrics():
        raise ConfigError(f"unknown metric {metric!r}; table has {table.metrics()}")
    by_method: dict[str, dict[int, list[float]]] = {}
    for method, _, iteration, name, value in table.rows:
        if name != metric:
            continue
        by_method.setdefault(method, {}).setdefault(iteration, []).append(value)
    curves = []
    for method, per_iter in by_method.items():
        iterations = sorted(per_iter)
        means, stderrs = [], []
        for t in iterations:
            vals = np.asarray(per_iter[t], dtype=float)
            means.append(float(vals.mean()))
            stderrs.append(float(vals.std(ddof=1) / np.sqrt(len(vals)))
                           if len(vals) > 1 else 0.0)
        curves.append(MethodCurve(method, iterations, means, stderrs))
    return curves


def emit_plot(table: ResultsTable, metric: str, out_file) -> Path:
    """Render the learning curves for ``metric`` to an SVG file.

    One mean line per method with a +/- 1 standard error band (omitted when
    no iteration has more than one trial). Returns the written path.
    """
    curves = summarize(table, metric)
    out = Path(out_file)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for curve in curves:
        (line,) = ax.plot(curve.iterations, curve.means, label=curve.method)
        if any(s > 0 for s in curve.stderrs):
            lo = np.asarray(curve.means) - np.asarray(curve.stderrs)
            hi = np.asarray(curve.means) + np.asarray(curve.stderrs)
            ax.fill_between(curve.iterations, lo, hi,
                            color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("iteration")
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    with plt.rc_context({"svg.fonttype": "none"}):
        fig.savefig(out, format="svg")
    plt.close(fig)
    payload = {
        "metric": metric,
        "series": {
            c.method: {"iterations": c.iterations, "means": c.means,
                       "stderrs": c.stderrs}
            for c in curves
        },
    }
    with open(out, "a") as fh:
        fh.write(f"\n{SERIES_MARKER} {json.dumps(payload)} -->\n")
    return out


def read_series_data(path) -> dict:
    """Parse the series payload appended by emit_plot."""
    text = Path(path).read_text()
    start = text.rindex(SERIES_MARKER) + len(SERIES_MARKER)
    end = text.index("-->", start)
    return json.loads(text[start:end])
