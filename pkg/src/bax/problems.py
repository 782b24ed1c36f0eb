"""Benchmark objectives, synthetic grid graphs, and cost transforms.

Benchmark functions take a 1-D numpy vector and return a float. The
registry maps config-friendly names to a Benchmark record carrying the
function, its box domain, the optimization sense, and the known optimum
where there is one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .algorithms import Edge, Graph


def rosenbrock_scaled(x, classical: bool = False) -> float:
    """Two-dimensional Rosenbrock variant scaled by 1e-2.

    The default couples the first term to x2, giving zeros at (+-1, 1);
    ``classical`` restores the usual (a - x1)^2 coupling with its single
    zero at (1, 1).
    """
    x = np.asarray(x, dtype=float)
    a, b = 1.0, 100.0
    first = (a - x[0]) ** 2 if classical else (a - x[1]) ** 2
    return 1e-2 * float(first + b * (x[1] - x[0] ** 2) ** 2)


def branin(x) -> float:
    x = np.asarray(x, dtype=float)
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return float(
        (x[1] - b * x[0] ** 2 + c * x[0] - 6) ** 2 + 10 * (1 - t) * math.cos(x[0]) + 10
    )


_HARTMANN6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN6_A = np.array(
    [
        [10, 3, 17, 3.5, 1.7, 8],
        [0.05, 10, 17, 0.1, 8, 14],
        [3, 3.5, 1.7, 10, 17, 8],
        [17, 8, 0.05, 10, 0.1, 14],
    ]
)
_HARTMANN6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


def hartmann6(x) -> float:
    x = np.asarray(x, dtype=float)
    inner = np.sum(_HARTMANN6_A * (x[None, :] - _HARTMANN6_P) ** 2, axis=1)
    return float(-np.sum(_HARTMANN6_ALPHA * np.exp(-inner)))


def ackley(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(
        -20 * math.exp(-0.2 * math.sqrt(float(np.mean(x**2))))
        - math.exp(float(np.mean(np.cos(2 * math.pi * x))))
        + 20
        + math.e
    )


def skewed_sin(x) -> float:
    """Sum of 2|t| sin t across coordinates; heavily multimodal."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(2 * np.abs(x) * np.sin(x)))


@dataclass(frozen=True)
class Benchmark:
    name: str
    fn: Callable[[np.ndarray], float]
    domain: np.ndarray
    minimize: bool = True
    optimum: float | None = None


def _box(*sides) -> np.ndarray:
    return np.array(sides, dtype=float)


BENCHMARKS: dict[str, Benchmark] = {
    bench.name: bench
    for bench in [
        Benchmark("rosenbrock_scaled", rosenbrock_scaled, _box((-2, 2), (-1, 4)), True, 0.0),
        Benchmark(
            "rosenbrock_classical",
            lambda x: rosenbrock_scaled(x, classical=True),
            _box((-2, 2), (-1, 4)),
            True,
            0.0,
        ),
        Benchmark("branin", branin, _box((-5, 10), (0, 15)), True, 0.39788735772973816),
        Benchmark("hartmann6", hartmann6, _box(*[(0, 1)] * 6), True, -3.32237),
        Benchmark("ackley10", ackley, _box(*[(-32.768, 32.768)] * 10), True, 0.0),
        Benchmark("skewed_sin", skewed_sin, _box((-10, 10), (-10, 10)), False, None),
    ]
}


def get_benchmark(name: str) -> Benchmark:
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}, expected one of {sorted(BENCHMARKS)}") from None


# Ordinal and cardinal neighbor offsets of a grid vertex, fixed order.
_GRID_DIRECTIONS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


def grid_edge_count(nx_pts: int, ny_pts: int) -> int:
    """Directed edge count of an 8-connected nx-by-ny grid."""
    return 2 * (
        nx_pts * (ny_pts - 1) + ny_pts * (nx_pts - 1) + 2 * (nx_pts - 1) * (ny_pts - 1)
    )


def make_grid_graph(nx_pts: int, ny_pts: int, domain) -> Graph:
    """8-connected grid of nx-by-ny vertices evenly spread over a 2-D box.

    Vertex ids are row-major from the lower-left corner, so 0 and
    nx*ny - 1 are opposite corners. Both directions of every connection are
    stored, sharing a single midpoint array.
    """
    if nx_pts < 2 or ny_pts < 2:
        raise ValueError("grid needs at least 2 points per side")
    domain = np.asarray(domain, dtype=float)
    xs = np.linspace(domain[0, 0], domain[0, 1], nx_pts)
    ys = np.linspace(domain[1, 0], domain[1, 1], ny_pts)
    vertices = [
        (j * nx_pts + i, np.array([xs[i], ys[j]])) for j in range(ny_pts) for i in range(nx_pts)
    ]
    positions = dict(vertices)
    midpoints: dict[tuple[int, int], np.ndarray] = {}
    edges = []
    for j in range(ny_pts):
        for i in range(nx_pts):
            u = j * nx_pts + i
            for di, dj in _GRID_DIRECTIONS:
                a, b = i + di, j + dj
                if not (0 <= a < nx_pts and 0 <= b < ny_pts):
                    continue
                v = b * nx_pts + a
                key = (min(u, v), max(u, v))
                if key not in midpoints:
                    midpoints[key] = 0.5 * (positions[u] + positions[v])
                edges.append(Edge(u, v, midpoints[key]))
    return Graph(vertices, edges)


def softplus(u) -> float | np.ndarray:
    """ln(1 + exp(u)), computed stably; maps the reals onto (0, inf)."""
    out = np.logaddexp(0.0, np.asarray(u, dtype=float))
    return float(out) if out.ndim == 0 else out


def inverse_softplus(c) -> float | np.ndarray:
    """Inverse of softplus; defined for strictly positive inputs."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0):
        raise ValueError("inverse_softplus requires strictly positive inputs")
    # expm1 keeps ln(exp(c) - 1) accurate for small c
    out = c + np.log(-np.expm1(-c))
    return float(out) if out.ndim == 0 else out


def normalize_costs(values, offset: float = 0.1) -> np.ndarray:
    """Scale costs by their maximum and add a positive offset."""
    values = np.asarray(values, dtype=float)
    top = float(np.max(values))
    if top <= 0:
        raise ValueError("cost normalization needs a positive maximum")
    return values / top + offset


_GRAPH_HEADER = "from_id,to_id,x_from,y_from,x_to,y_to"


def save_graph(graph: Graph, path) -> None:
    """Write a graph as a directed edge list, one line per edge."""
    lines = [_GRAPH_HEADER]
    for edge in graph.edges:
        pu, pv = graph.position(edge.u), graph.position(edge.v)
        coords = ",".join(repr(float(c)) for c in (*pu, *pv))
        lines.append(f"{edge.u},{edge.v},{coords}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> Graph:
    """Read a directed edge list written by ``save_graph``.

    Vertex positions are taken from the edge endpoints and must agree
    across lines; midpoints are shared between the two directions of a
    connection when both are present.
    """
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].strip() != _GRAPH_HEADER:
        raise ValueError(f"expected header {_GRAPH_HEADER!r}")
    positions: dict[int, np.ndarray] = {}
    rows: list[tuple[int, int]] = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            u, v = int(parts[0]), int(parts[1])
            pu = np.array([float(parts[2]), float(parts[3])])
            pv = np.array([float(parts[4]), float(parts[5])])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed number") from None
        for vid, p in ((u, pu), (v, pv)):
            if vid in positions:
                if not np.allclose(positions[vid], p, atol=1e-9):
                    raise ValueError(f"line {lineno}: vertex {vid} position conflicts")
            else:
                positions[vid] = p
        rows.append((u, v))
    midpoints: dict[tuple[int, int], np.ndarray] = {}
    edges = []
    for u, v in rows:
        key = (min(u, v), max(u, v))
        if key not in midpoints:
            midpoints[key] = 0.5 * (positions[u] + positions[v])
        edges.append(Edge(u, v, midpoints[key]))
    return Graph(sorted(positions.items()), edges)
