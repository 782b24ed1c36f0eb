"""The black-box algorithms whose outputs we want to estimate, instrumented
so every function query is recorded in order.

Each runner takes a queryable ``f`` (any callable; objects exposing
``query_many`` get batched calls where the query set is known up front) and
returns the execution path together with the algorithm's output. The
``*Algorithm`` adapters bundle a runner with its fixed arguments so a whole
run can be replayed against different functions, which is how posterior
samples are pushed through.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, NegativeEdgeCostError, NoPathError


@dataclass
class ExecutionPath:
    """Sequence of (query point, value) pairs in query order."""

    steps: list[tuple[np.ndarray, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def points(self) -> np.ndarray:
        return np.stack([p for p, _ in self.steps])

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.steps])


@dataclass
class TopKOutput:
    """The k best elements, sorted by queried value descending."""

    elements: list[np.ndarray]
    values: list[float]


@dataclass
class GraphPathOutput:
    """A walk through the graph: vertex ids, their positions, and the
    traversed edges' midpoints with the queried value at each."""

    vertices: list[int]
    vertex_points: list[np.ndarray]
    edge_points: list[np.ndarray]
    edge_costs: list[float]


@dataclass
class LocalOptOutput:
    x_star: np.ndarray
    f_star: float


AlgorithmOutput = TopKOutput | GraphPathOutput | LocalOptOutput


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    midpoint: np.ndarray


@dataclass
class Graph:
    """Directed graph with planar vertex positions.

    Both directions of a physical edge are stored as separate Edge entries
    sharing one midpoint array, so a cost defined on midpoints automatically
    agrees for the two directions.
    """

    vertices: list[tuple[int, np.ndarray]]
    edges: list[Edge]

    def __post_init__(self):
        ids = [vid for vid, _ in self.vertices]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate vertex ids")
        pos = {vid: np.asarray(p, dtype=float) for vid, p in self.vertices}
        for edge in self.edges:
            if edge.u not in pos or edge.v not in pos:
                raise ValueError(f"edge ({edge.u}, {edge.v}) references a missing vertex")
            expected = 0.5 * (pos[edge.u] + pos[edge.v])
            if not np.allclose(edge.midpoint, expected, atol=1e-9):
                raise ValueError(f"edge ({edge.u}, {edge.v}) midpoint is not the endpoint average")
        self._positions = pos

    def position(self, vertex_id: int) -> np.ndarray:
        return self._positions[vertex_id]

    @cached_property
    def adjacency(self) -> dict[int, list[Edge]]:
        adj: dict[int, list[Edge]] = {vid: [] for vid, _ in self.vertices}
        for edge in self.edges:
            adj[edge.u].append(edge)
        return adj

    def distinct_midpoints(self) -> np.ndarray:
        """Unique edge midpoints, first-seen order."""
        seen: dict[bytes, np.ndarray] = {}
        for edge in self.edges:
            seen.setdefault(edge.midpoint.tobytes(), edge.midpoint)
        return np.stack(list(seen.values()))


def _query_all(f, points: list[np.ndarray]) -> list[float]:
    if hasattr(f, "query_many"):
        return [float(v) for v in f.query_many(np.stack(points))]
    return [float(f(p)) for p in points]


def run_topk(elements, k: int, f) -> tuple[ExecutionPath, TopKOutput]:
    """Scan every element in list order and keep the k highest-valued.

    Ties go to the earlier index. The execution path is the full scan.
    """
    elements = [np.atleast_1d(np.asarray(e, dtype=float)) for e in elements]
    if not 1 <= k <= len(elements):
        raise ValueError(f"k={k} out of range for {len(elements)} elements")
    values = _query_all(f, elements)
    order = sorted(range(len(elements)), key=lambda i: (-values[i], i))[:k]
    path = ExecutionPath(list(zip(elements, values)))
    return path, TopKOutput([elements[i] for i in order], [values[i] for i in order])


def run_dijkstra(graph: Graph, source: int, dest: int, cost) -> tuple[ExecutionPath, GraphPathOutput]:
    """Shortest path by Dijkstra with memoized edge-cost queries.

    ``cost`` maps an edge midpoint to a nonnegative cost; it is queried at
    most once per distinct midpoint, in relaxation order, and the execution
    path records exactly those queries. Negative values raise
    NegativeEdgeCostError; an unreachable destination raises NoPathError.
    """
    if source not in graph.adjacency or dest not in graph.adjacency:
        raise ValueError("source or destination not in graph")
    memo: dict[bytes, float] = {}
    steps: list[tuple[np.ndarray, float]] = []

    def edge_cost(edge: Edge) -> float:
        key = edge.midpoint.tobytes()
        if key not in memo:
            value = float(cost(edge.midpoint))
            if value < 0:
                raise NegativeEdgeCostError(
                    f"edge ({edge.u}, {edge.v}) cost {value} violates nonnegativity"
                )
            memo[key] = value
            steps.append((edge.midpoint, value))
        return memo[key]

    dist = {source: 0.0}
    pred: dict[int, Edge] = {}
    settled: set[int] = set()
    counter = itertools.count()
    heap: list[tuple[float, int, int]] = [(0.0, next(counter), source)]
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u == dest:
            break
        for edge in graph.adjacency[u]:
            if edge.v in settled:
                continue
            candidate = d + edge_cost(edge)
            if candidate < dist.get(edge.v, math.inf):
                dist[edge.v] = candidate
                pred[edge.v] = edge
                heapq.heappush(heap, (candidate, next(counter), edge.v))
    if dest not in settled:
        raise NoPathError(f"vertex {dest} unreachable from {source}")

    vertices = [dest]
    edges_back: list[Edge] = []
    while vertices[-1] != source:
        edge = pred[vertices[-1]]
        edges_back.append(edge)
        vertices.append(edge.u)
    vertices.reverse()
    edges_back.reverse()
    output = GraphPathOutput(
        vertices,
        [graph.position(v) for v in vertices],
        [e.midpoint for e in edges_back],
        [memo[e.midpoint.tobytes()] for e in edges_back],
    )
    return ExecutionPath(steps), output


@dataclass
class ESConfig:
    """Evolution-strategy settings.

    The population starts as ``population`` copies of one uniform draw (or
    ``init``). Each generation mutates every survivor once with an
    isotropic normal step of scale ``proposal_std`` clipped to the domain,
    queries the mutants, and keeps the best ceil(elite_frac * population)
    of survivors and mutants pooled. With the defaults the total query
    count is 206, roughly the 208 used for the full-run baseline.
    """

    population: int = 15
    generations: int = 39
    proposal_std: float | None = None  # default: 5% of the shortest domain side
    elite_frac: float = 0.33
    minimize: bool = True
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.population < 1:
            raise ConfigError("population must be at least 1")
        if self.generations < 0:
            raise ConfigError("generations must be nonnegative")
        if not 0 < self.elite_frac <= 1:
            raise ConfigError("elite_frac must be in (0, 1]")
        if self.proposal_std is not None and not self.proposal_std > 0:
            raise ConfigError("proposal_std must be positive")


def run_evolution_strategy(f, domain, config: ESConfig,
                           seed=None) -> tuple[ExecutionPath, LocalOptOutput]:
    """Mutation-only evolution strategy over a box domain.

    Returns the best point among all queries (strictly better to replace,
    so the earliest query wins ties) and its value. The execution path is
    every query in order, the initial point included.
    """
    rng = np.random.default_rng(seed)
    domain = np.asarray(domain, dtype=float)
    lo, hi = domain[:, 0], domain[:, 1]
    if np.any(hi <= lo):
        raise ConfigError("domain sides must have positive length")
    sigma = config.proposal_std if config.proposal_std is not None else 0.05 * float(np.min(hi - lo))
    init = np.asarray(config.init, dtype=float) if config.init is not None else rng.uniform(lo, hi)
    steps: list[tuple[np.ndarray, float]] = []

    def record(points: list[np.ndarray]) -> list[float]:
        values = _query_all(f, points)
        steps.extend(zip(points, values))
        return values

    def better(a: float, b: float) -> bool:
        return a < b if config.minimize else a > b

    best_x, best_v = init, record([init])[0]
    population = [(init, best_v)] * config.population
    keep = math.ceil(config.elite_frac * config.population)
    sign = 1.0 if config.minimize else -1.0
    for _ in range(config.generations):
        mutants = [np.clip(x + rng.normal(0.0, sigma, size=len(lo)), lo, hi)
                   for x, _ in population]
        values = record(mutants)
        for x, v in zip(mutants, values):
            if better(v, best_v):
                best_x, best_v = x, v
        pool = population + list(zip(mutants, values))
        order = sorted(range(len(pool)), key=lambda i: (sign * pool[i][1], i))
        population = [pool[i] for i in order[:keep]]
    return ExecutionPath(steps), LocalOptOutput(best_x, best_v)


def extract_subsequence_values(output: AlgorithmOutput) -> list[tuple[np.ndarray, float]]:
    """The (point, value) pairs embedded in an algorithm output.

    These are the values the output itself pins down, used to condition the
    surrogate as if they had been observed noiselessly.
    """
    if isinstance(output, TopKOutput):
        return list(zip(output.elements, output.values))
    if isinstance(output, GraphPathOutput):
        return list(zip(output.edge_points, output.edge_costs))
    if isinstance(output, LocalOptOutput):
        return [(output.x_star, output.f_star)]
    raise TypeError(f"unsupported output type {type(output).__name__}")


class TopKAlgorithm:
    """Top-k scan over a fixed element list."""

    def __init__(self, elements, k: int):
        self.elements = [np.atleast_1d(np.asarray(e, dtype=float)) for e in elements]
        if not 1 <= k <= len(self.elements):
            raise ValueError(f"k={k} out of range for {len(self.elements)} elements")
        self.k = k

    @property
    def query_points(self) -> np.ndarray:
        return np.stack(self.elements)

    def run(self, f, seed=None) -> tuple[ExecutionPath, TopKOutput]:
        return run_topk(self.elements, self.k, f)


class ShortestPathAlgorithm:
    """Dijkstra between two vertices, with an optional cost transform.

    ``to_cost`` maps the queried function's value into the nonnegative cost
    Dijkstra consumes (identity when omitted). The recorded path and output
    keep the *untransformed* function values, since those are what the
    surrogate models.
    """

    def __init__(self, graph: Graph, source: int, dest: int, to_cost=None):
        self.graph = graph
        self.source = source
        self.dest = dest
        self.to_cost = to_cost

    @property
    def query_points(self) -> np.ndarray:
        return self.graph.distinct_midpoints()

    def run(self, f, seed=None) -> tuple[ExecutionPath, GraphPathOutput]:
        raw: dict[bytes, float] = {}

        def cost(z: np.ndarray) -> float:
            value = float(f(z))
            raw[z.tobytes()] = value
            return value if self.to_cost is None else self.to_cost(value)

        path, output = run_dijkstra(self.graph, self.source, self.dest, cost)
        steps = [(z, raw[z.tobytes()]) for z, _ in path.steps]
        edge_values = [raw[p.tobytes()] for p in output.edge_points]
        return ExecutionPath(steps), GraphPathOutput(
            output.vertices, output.vertex_points, output.edge_points, edge_values
        )


class LocalOptAlgorithm:
    """Evolution strategy over a box domain."""

    query_points = None  # queries are adaptive, no superset known a priori

    def __init__(self, domain, config: ESConfig):
        self.domain = np.asarray(domain, dtype=float)
        self.config = config

    def run(self, f, seed=None) -> tuple[ExecutionPath, LocalOptOutput]:
        return run_evolution_strategy(f, self.domain, self.config, seed=seed)
