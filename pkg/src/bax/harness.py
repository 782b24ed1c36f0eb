"""Experiment harness: config files in, per-iteration metric tables out.

A config describes one problem, a list of query methods, and trial/seed
settings. ``execute_experiment`` runs every (method, trial) pair, scores each
iteration's posterior output samples against the ground truth (the algorithm
run once on the noiseless true function), and collects everything into a flat
results table plus per-run records.

The config format is YAML with strict keys: unknown or mistyped entries fail
with the path to the offending key, and parsing returns the fully resolved
document so defaults are always explicit in what gets archived.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .acquisition import AbcPolicy, OutputDistance, distance_for_outputs
from .algorithms import (
    AlgorithmOutput,
    ESConfig,
    GraphPathOutput,
    LocalOptAlgorithm,
    LocalOptOutput,
    ShortestPathAlgorithm,
    TopKAlgorithm,
    TopKOutput,
)
from .errors import ConfigError, RunAborted
from .gp import Evidence, GPModel, KernelSpec
from .loop import (
    ACQUISITIONS,
    BaxConfig,
    FixedSet,
    Problem,
    RunRecord,
    UniformRandom,
    refine_local_optimum,
    run_infobax,
)
from .metrics import jaccard_distance, path_area_error, simple_regret
from .problems import (
    get_benchmark,
    inverse_softplus,
    load_graph,
    make_grid_graph,
    softplus,
)

METHODS = ACQUISITIONS + ("FullAlgorithm",)
PROBLEM_KINDS = ("topk", "shortest_path", "local_opt")

CSV_HEADER = "method,trial,iteration,metric,value"

# seed tags for harness-owned randomness, disjoint from the loop's 1-5
_TAG_FULL_NOISE, _TAG_FULL_ALGO, _TAG_REFINE = 71, 72, 73


@dataclass
class ExperimentConfig:
    """A fully resolved experiment description; every default made explicit."""

    problem: dict
    methods: list[str]
    trials: int
    base_seed: int
    budget: int
    num_posterior_samples: int
    n_candidates: int
    n_init: int
    model: dict
    abc: dict

    def to_dict(self) -> dict:
        return {
            "problem": dict(self.problem),
            "methods": list(self.methods),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "budget": self.budget,
            "num_posterior_samples": self.num_posterior_samples,
            "n_candidates": self.n_candidates,
            "n_init": self.n_init,
            "model": dict(self.model),
            "abc": dict(self.abc),
        }


def _check_keys(section: dict, allowed, path: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key}" if path else f"unknown key {key}")


def _expect_map(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
    return value


def _get(section: dict, key: str, path: str, default, kinds, kind_name: str):
    value = section.get(key, default)
    if value is None and default is None:
        return None
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ConfigError(f"{path}.{key}: expected {kind_name}, got {value!r}")
    return value


def _get_int(section, key, path, default=None, minimum=None):
    value = _get(section, key, path, default, int, "an integer")
    if value is not None and minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {value}")
    return value


def _get_float(section, key, path, default=None, positive=False):
    value = _get(section, key, path, default, (int, float), "a number")
    if value is None:
        return None
    value = float(value)
    if positive and value <= 0:
        raise ConfigError(f"{path}.{key}: must be positive, got {value}")
    return value


def _get_str(section, key, path, default=None, options=None):
    value = _get(section, key, path, default, str, "a string")
    if value is not None and options is not None and value not in options:
        raise ConfigError(f"{path}.{key}: {value!r} is not one of {sorted(options)}")
    return value


def _resolve_problem(raw: dict) -> tuple[dict, np.ndarray]:
    """Validate and fill the problem section; returns it with the benchmark
    domain (used to resolve model defaults)."""
    raw = _expect_map(raw, "problem")
    kind = _get_str(raw, "kind", "problem", None, PROBLEM_KINDS)
    if kind is None:
        raise ConfigError("problem.kind is required")
    benchmark = _get_str(raw, "benchmark", "problem", None)
    if benchmark is None:
        raise ConfigError("problem.benchmark is required")
    try:
        bench = get_benchmark(benchmark)
    except KeyError as exc:
        raise ConfigError(f"problem.benchmark: {exc}") from None
    resolved = {"kind": kind, "benchmark": benchmark}
    if kind == "topk":
        _check_keys(raw, {"kind", "benchmark", "num_elements", "k", "element_seed"}, "problem")
        resolved["num_elements"] = _get_int(raw, "num_elements", "problem", 150, minimum=1)
        resolved["k"] = _get_int(raw, "k", "problem", 10, minimum=1)
        resolved["element_seed"] = _get_int(raw, "element_seed", "problem", 0, minimum=0)
        if resolved["k"] > resolved["num_elements"]:
            raise ConfigError("problem.k: cannot exceed num_elements")
    elif kind == "shortest_path":
        _check_keys(raw, {"kind", "benchmark", "grid", "graph_file", "source", "dest"},
                    "problem")
        if bench.domain.shape[0] != 2:
            raise ConfigError("problem.benchmark: shortest_path needs a planar benchmark")
        graph_file = _get_str(raw, "graph_file", "problem", None)
        if graph_file is not None:
            resolved["graph_file"] = graph_file
            resolved["source"] = _get_int(raw, "source", "problem", 0, minimum=0)
            dest = _get_int(raw, "dest", "problem", None, minimum=0)
            if dest is None:
                raise ConfigError("problem.dest is required with graph_file")
            resolved["dest"] = dest
        else:
            grid = raw.get("grid", [10, 10])
            if (not isinstance(grid, list) or len(grid) != 2
                    or not all(isinstance(g, int) and g >= 2 for g in grid)):
                raise ConfigError("problem.grid: expected [nx, ny] with nx, ny >= 2")
            resolved["grid"] = list(grid)
            resolved["source"] = _get_int(raw, "source", "problem", 0, minimum=0)
            resolved["dest"] = _get_int(raw, "dest", "problem",
                                        grid[0] * grid[1] - 1, minimum=0)
    else:
        _check_keys(raw, {"kind", "benchmark", "es"}, "problem")
        if bench.optimum is None:
            raise ConfigError(
                "problem.benchmark: local_opt needs a benchmark with a known optimum"
            )
        es = _expect_map(raw.get("es"), "problem.es")
        _check_keys(es, {"population", "generations", "proposal_std", "elite_frac"},
                    "problem.es")
        sides = bench.domain[:, 1] - bench.domain[:, 0]
        resolved["es"] = {
            "population": _get_int(es, "population", "problem.es", 15, minimum=1),
            "generations": _get_int(es, "generations", "problem.es", 39, minimum=0),
            "proposal_std": _get_float(es, "proposal_std", "problem.es",
                                       0.05 * float(np.min(sides)), positive=True),
            "elite_frac": _get_float(es, "elite_frac", "problem.es", 0.33, positive=True),
        }
    return resolved, bench.domain


def _resolve_model(raw: dict, domain: np.ndarray) -> dict:
    raw = _expect_map(raw, "model")
    _check_keys(raw, {"kernel", "lengthscale", "signal_variance", "noise_variance",
                      "prior_mean"}, "model")
    kernel = _get_str(raw, "kernel", "model", "se", {"se", "matern52"})
    ls = raw.get("lengthscale")
    if ls is None:
        lengthscale = (0.1 * (domain[:, 1] - domain[:, 0])).tolist()
    elif isinstance(ls, (int, float)) and not isinstance(ls, bool):
        lengthscale = [float(ls)] * domain.shape[0]
    elif isinstance(ls, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in ls):
        if len(ls) != domain.shape[0]:
            raise ConfigError(
                f"model.lengthscale: expected {domain.shape[0]} entries, got {len(ls)}"
            )
        lengthscale = [float(v) for v in ls]
    else:
        raise ConfigError(f"model.lengthscale: expected a number or list, got {ls!r}")
    if any(v <= 0 for v in lengthscale):
        raise ConfigError("model.lengthscale: entries must be positive")
    return {
        "kernel": kernel,
        "lengthscale": lengthscale,
        "signal_variance": _get_float(raw, "signal_variance", "model", 1.0, positive=True),
        "noise_variance": _get_float(raw, "noise_variance", "model", 1e-2, positive=True),
        "prior_mean": _get_float(raw, "prior_mean", "model", 0.0),
    }


TOP_LEVEL_KEYS = {"problem", "methods", "trials", "base_seed", "budget",
                  "num_posterior_samples", "n_candidates", "n_init", "model", "abc"}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping and resolve every default to a concrete value."""
    raw = _expect_map(raw, "")
    _check_keys(raw, TOP_LEVEL_KEYS, "")
    problem, domain = _resolve_problem(raw.get("problem"))
    methods = raw.get("methods", ["EIGv", "Random"])
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods: expected a nonempty list")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"methods: {m!r} is not one of {sorted(METHODS)}")
    default_samples = 20 if problem["kind"] == "shortest_path" else 100
    abc = _expect_map(raw.get("abc"), "abc")
    _check_keys(abc, {"min_ball_size", "entropy_mc_draws"}, "abc")
    return ExperimentConfig(
        problem=problem,
        methods=list(methods),
        trials=_get_int(raw, "trials", "", 5, minimum=1),
        base_seed=_get_int(raw, "base_seed", "", 0, minimum=0),
        budget=_get_int(raw, "budget", "", 150, minimum=1),
        num_posterior_samples=_get_int(raw, "num_posterior_samples", "",
                                       default_samples, minimum=1),
        n_candidates=_get_int(raw, "n_candidates", "", 1000, minimum=1),
        n_init=_get_int(raw, "n_init", "", 0, minimum=0),
        model=_resolve_model(raw.get("model"), domain),
        abc={
            "min_ball_size": _get_int(abc, "min_ball_size", "abc", 30, minimum=1),
            "entropy_mc_draws": _get_int(abc, "entropy_mc_draws", "abc", 512, minimum=1),
        },
    )


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return config_from_dict(raw)


def serialize_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def model_from_config(config: ExperimentConfig) -> GPModel:
    m = config.model
    return GPModel(
        KernelSpec(m["kernel"], m["lengthscale"], m["signal_variance"]),
        m["noise_variance"],
        m["prior_mean"],
    )


@dataclass
class ExperimentSetup:
    """Concrete objects for one experiment: problem, algorithm, ground truth."""

    kind: str
    problem: Problem
    algorithm: object
    candidate_source: FixedSet | UniformRandom
    truth_output: AlgorithmOutput | None
    objective: object  # the benchmark's objective on its own scale
    minimize: bool
    optimum: float | None
    normalizer: float | None = None
    es: ESConfig | None = None
    domain: np.ndarray | None = None


def build_setup(config: ExperimentConfig) -> ExperimentSetup:
    spec = config.problem
    bench = get_benchmark(spec["benchmark"])
    kind = spec["kind"]
    if kind == "topk":
        rng = np.random.default_rng(spec["element_seed"])
        X = rng.uniform(bench.domain[:, 0], bench.domain[:, 1],
                        size=(spec["num_elements"], bench.domain.shape[0]))
        algorithm = TopKAlgorithm(X, spec["k"])
        problem = Problem(f"topk-{bench.name}", bench.fn, domain=bench.domain)
        _, truth = algorithm.run(bench.fn)
        return ExperimentSetup(
            kind, problem, algorithm,
            UniformRandom(bench.domain, config.n_candidates),
            truth, bench.fn, bench.minimize, bench.optimum, domain=bench.domain,
        )
    if kind == "shortest_path":
        if "graph_file" in spec:
            graph = load_graph(spec["graph_file"])
        else:
            graph = make_grid_graph(spec["grid"][0], spec["grid"][1], bench.domain)
        mids = graph.distinct_midpoints()
        raw = np.array([bench.fn(z) for z in mids])
        top = float(np.max(raw))
        if top <= 0:
            raise ConfigError("edge-cost normalization needs a positive maximum")

        def true_f(z, _top=top):
            return float(inverse_softplus(bench.fn(z) / _top + 0.1))

        algorithm = ShortestPathAlgorithm(graph, spec["source"], spec["dest"],
                                          to_cost=softplus)
        positions = np.stack([graph.position(v) for v, _ in graph.vertices])
        spans = positions.max(axis=0) - positions.min(axis=0)
        problem = Problem(f"shortest-path-{bench.name}", true_f, domain=None)
        _, truth = algorithm.run(true_f)
        return ExperimentSetup(
            kind, problem, algorithm, FixedSet(mids), truth, bench.fn,
            bench.minimize, bench.optimum,
            normalizer=float(spans[0] * spans[1]),
        )
    es = ESConfig(
        population=spec["es"]["population"],
        generations=spec["es"]["generations"],
        proposal_std=spec["es"]["proposal_std"],
        elite_frac=spec["es"]["elite_frac"],
        minimize=bench.minimize,
    )
    algorithm = LocalOptAlgorithm(bench.domain, es)
    problem = Problem(f"local-opt-{bench.name}", bench.fn, domain=bench.domain)
    return ExperimentSetup(
        kind, problem, algorithm,
        UniformRandom(bench.domain, config.n_candidates),
        None, bench.fn, bench.minimize, bench.optimum,
        es=es, domain=bench.domain,
    )


def _medoid(outputs: list[AlgorithmOutput], distance: OutputDistance) -> AlgorithmOutput:
    D = distance.pairwise(outputs)
    return outputs[int(np.argmin(D.sum(axis=1)))]


def _topk_set(output: TopKOutput) -> frozenset:
    return frozenset(tuple(map(float, el)) for el in output.elements)


def _metric_values(setup: ExperimentSetup, config: ExperimentConfig, model: GPModel,
                   outputs: list[AlgorithmOutput], data: Evidence,
                   seed: int, iteration: int) -> dict[str, float]:
    """Metric rows for one iteration: the medoid-estimate value and the mean
    over the sampled outputs (suffix _samples)."""
    distance = distance_for_outputs(outputs)
    if setup.kind == "topk":
        truth = _topk_set(setup.truth_output)
        per = [jaccard_distance(_topk_set(o), truth) for o in outputs]
        est = jaccard_distance(_topk_set(_medoid(outputs, distance)), truth)
        return {"jaccard": est, "jaccard_samples": float(np.mean(per))}
    if setup.kind == "shortest_path":
        per = [
            path_area_error(o, setup.truth_output, setup.normalizer) for o in outputs
        ]
        est = path_area_error(_medoid(outputs, distance), setup.truth_output,
                              setup.normalizer)
        return {"area": est, "area_samples": float(np.mean(per))}
    per = [
        simple_regret(setup.objective(o.x_star), setup.optimum, setup.minimize)
        for o in outputs
    ]
    refined = refine_local_optimum(
        model, data, setup.domain, setup.es,
        seed=np.random.SeedSequence([seed, _TAG_REFINE, iteration]),
    )
    est = simple_regret(setup.objective(refined.x_star), setup.optimum, setup.minimize)
    return {"regret": est, "regret_samples": float(np.mean(per))}


def _evidence_prefix(record: RunRecord, upto: int) -> Evidence:
    data = Evidence()
    for x, y in record.init_queries:
        data = data.with_noisy(x, y)
    for entry in record.entries[:upto]:
        data = data.with_noisy(entry.x, entry.y)
    return data


def _loop_method_rows(setup, config, model, method, trial) -> tuple[list, RunRecord]:
    seed = config.base_seed + trial
    bax = BaxConfig(
        budget=config.budget,
        candidate_source=setup.candidate_source,
        num_posterior_samples=config.num_posterior_samples,
        acquisition=method,
        abc=AbcPolicy(**config.abc),
        seed=seed,
        n_init=config.n_init,
    )
    rows = []
    try:
        record = run_infobax(bax, model, setup.problem, setup.algorithm)
    except RunAborted as exc:
        record = exc.record
        rows.append((method, trial, len(record.entries) + 1, "failed", 1.0))
        return rows, record
    # the bundle drawn at iteration t+1 reflects the first t observations,
    # so iteration t's metric row comes from the next entry's samples
    for t in range(1, config.budget + 1):
        if t < config.budget:
            outputs = record.entries[t].sampled_outputs
        else:
            outputs = record.final_outputs
        values = _metric_values(setup, config, model, outputs,
                                _evidence_prefix(record, t), seed, t)
        record.entries[t - 1].metrics = values
        rows.extend((method, trial, t, name, value) for name, value in values.items())
    return rows, record


def _full_algorithm_rows(setup, config, model, trial) -> tuple[list, RunRecord]:
    """Run the original algorithm through the noisy observation channel and
    report its error at its own query counts."""
    seed = config.base_seed + trial
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_FULL_NOISE]))
    sigma = float(np.sqrt(config.model["noise_variance"]))

    def noisy(z):
        return float(setup.problem.true_f(z)) + noise_rng.normal(0.0, sigma)

    method = "FullAlgorithm"
    rows = []
    path, output = setup.algorithm.run(
        noisy, seed=np.random.SeedSequence([seed, _TAG_FULL_ALGO])
    )
    if setup.kind == "topk":
        truth = _topk_set(setup.truth_output)
        k = setup.algorithm.k
        observed = list(path.steps)
        for t in range(k, len(observed) + 1):
            best = sorted(range(t), key=lambda i: (-observed[i][1], i))[:k]
            guess = frozenset(tuple(map(float, observed[i][0])) for i in best)
            rows.append((method, trial, t, "jaccard", jaccard_distance(guess, truth)))
    elif setup.kind == "shortest_path":
        err = path_area_error(output, setup.truth_output, setup.normalizer)
        rows.append((method, trial, len(path), "area", err))
    else:
        best = None
        for t, (x, v) in enumerate(path.steps, start=1):
            if best is None or (v < best[1] if setup.minimize else v > best[1]):
                best = (x, v)
            regret = simple_regret(setup.objective(best[0]), setup.optimum,
                                   setup.minimize)
            rows.append((method, trial, t, "regret", regret))
    record = RunRecord(
        config={"method": method, "trial": trial, "seed": seed,
                "problem": setup.problem.name},
        final_outputs=[output],
        final_estimate=output,
    )
    return rows, record


@dataclass
class ResultsTable:
    """Flat metric rows plus the per-run records they came from."""

    rows: list[tuple[str, int, int, str, float]] = field(default_factory=list)
    records: dict[tuple[str, int], RunRecord] = field(default_factory=dict)

    def metrics(self) -> list[str]:
        return sorted({name for _, _, _, name, _ in self.rows})


def execute_experiment(config: ExperimentConfig) -> ResultsTable:
    """Run every configured method for every trial; trial i runs with seed
    base_seed + i for all methods, so comparisons share their seeds."""
    setup = build_setup(config)
    model = model_from_config(config)
    table = ResultsTable()
    for method in config.methods:
        for trial in range(config.trials):
            if method == "FullAlgorithm":
                rows, record = _full_algorithm_rows(setup, config, model, trial)
            else:
                rows, record = _loop_method_rows(setup, config, model, method, trial)
            table.rows.extend(rows)
            table.records[(method, trial)] = record
    return table


def output_to_jsonable(output: AlgorithmOutput) -> dict:
    if isinstance(output, TopKOutput):
        return {"kind": "topk",
                "elements": [np.asarray(e).tolist() for e in output.elements],
                "values": [float(v) for v in output.values]}
    if isinstance(output, GraphPathOutput):
        return {"kind": "shortest_path",
                "vertices": [int(v) for v in output.vertices],
                "vertex_points": [np.asarray(p).tolist() for p in output.vertex_points],
                "edge_points": [np.asarray(p).tolist() for p in output.edge_points],
                "edge_costs": [float(c) for c in output.edge_costs]}
    if isinstance(output, LocalOptOutput):
        return {"kind": "local_opt",
                "x_star": np.asarray(output.x_star).tolist(),
                "f_star": float(output.f_star)}
    raise TypeError(f"unsupported output type {type(output).__name__}")


def record_to_jsonable(record: RunRecord) -> dict:
    return {
        "config": record.config,
        "init_queries": [
            {"x": np.asarray(x).tolist(), "y": float(y)}
            for x, y in record.init_queries
        ],
        "entries": [
            {
                "t": e.t,
                "x": np.asarray(e.x).tolist(),
                "y": float(e.y),
                "acquisition": e.acquisition_summary,
                "sampled_outputs": [output_to_jsonable(o) for o in e.sampled_outputs],
                "metrics": e.metrics,
            }
            for e in record.entries
        ],
        "final_outputs": [output_to_jsonable(o) for o in record.final_outputs],
        "final_estimate": (None if record.final_estimate is None
                           else output_to_jsonable(record.final_estimate)),
        "aborted": record.aborted,
        "failure": record.failure,
    }


def write_results(table: ResultsTable, out_dir) -> list[Path]:
    """Emit results.csv plus one JSON run record per (method, trial)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / "results.csv"
    with open(csv_path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for method, trial, iteration, metric, value in table.rows:
            fh.write(f"{method},{trial},{iteration},{metric},{value!r}\n")
    written.append(csv_path)
    runs = out / "runs"
    runs.mkdir(exist_ok=True)
    for (method, trial), record in sorted(table.records.items()):
        path = runs / f"{method}-trial{trial}.json"
        with open(path, "w") as fh:
            json.dump(record_to_jsonable(record), fh, indent=2)
        written.append(path)
    return written


def read_results(path) -> list[tuple[str, int, int, str, float]]:
    """Read back a results.csv written by write_results."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header {header!r}")
        rows = []
        for line in fh:
            method, trial, iteration, metric, value = line.rstrip("\n").split(",")
            rows.append((method, int(trial), int(iteration), metric, float(value)))
    return rows


def default_out_dir(explicit=None) -> Path:
    """Output directory precedence: explicit flag, BAX_OUT_DIR, ./bax-results."""
    if explicit:
        return Path(explicit)
    env = os.environ.get("BAX_OUT_DIR")
    return Path(env) if env else Path("bax-results")


def override(config: ExperimentConfig, seed=None, trials=None) -> ExperimentConfig:
    if seed is not None:
        config = replace(config, base_seed=seed)
    if trials is not None:
        config = replace(config, trials=trials)
    return config
