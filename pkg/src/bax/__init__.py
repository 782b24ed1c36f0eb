"""Bayesian algorithm execution: infer a black-box algorithm's output from
few, information-maximizing function evaluations."""

from .acquisition import (
    AbcPolicy,
    OutputDistance,
    SampleBundle,
    SampleDraw,
    baseline_eig_f,
    baseline_random,
    baseline_variance,
    distance_for_outputs,
    eig_execpath,
    eig_output,
    eig_subsequence,
    select_delta,
)
from .algorithms import (
    ESConfig,
    Edge,
    ExecutionPath,
    Graph,
    GraphPathOutput,
    LocalOptAlgorithm,
    LocalOptOutput,
    ShortestPathAlgorithm,
    TopKAlgorithm,
    TopKOutput,
    extract_subsequence_values,
    run_dijkstra,
    run_evolution_strategy,
    run_topk,
)
from .errors import (
    ConfigError,
    NegativeEdgeCostError,
    NoPathError,
    NumericalError,
    RunAborted,
)
from .gp import (
    Evidence,
    GPModel,
    KernelSpec,
    LazyFunctionSample,
    PosteriorFactor,
    gaussian_entropy,
    posterior_marginal,
    posterior_marginals,
    presampled_functions,
    sample_function,
)
from .harness import (
    ExperimentConfig,
    ResultsTable,
    build_setup,
    execute_experiment,
    parse_config,
    serialize_config,
    write_results,
)
from .loop import (
    BaxConfig,
    FixedSet,
    IterationEntry,
    Problem,
    RunRecord,
    UniformRandom,
    draw_bundle,
    estimate_output,
    refine_local_optimum,
    run_infobax,
)
from .metrics import jaccard_distance, path_area_error, simple_regret
from .problems import (
    BENCHMARKS,
    Benchmark,
    get_benchmark,
    grid_edge_count,
    inverse_softplus,
    load_graph,
    make_grid_graph,
    normalize_costs,
    save_graph,
    softplus,
)
from .report import emit_plot, summarize

__all__ = [
    "AbcPolicy",
    "BENCHMARKS",
    "BaxConfig",
    "Benchmark",
    "ConfigError",
    "ESConfig",
    "Edge",
    "Evidence",
    "ExecutionPath",
    "ExperimentConfig",
    "FixedSet",
    "GPModel",
    "Graph",
    "GraphPathOutput",
    "IterationEntry",
    "KernelSpec",
    "LazyFunctionSample",
    "LocalOptAlgorithm",
    "LocalOptOutput",
    "NegativeEdgeCostError",
    "NoPathError",
    "NumericalError",
    "OutputDistance",
    "PosteriorFactor",
    "Problem",
    "ResultsTable",
    "RunAborted",
    "RunRecord",
    "SampleBundle",
    "SampleDraw",
    "ShortestPathAlgorithm",
    "TopKAlgorithm",
    "TopKOutput",
    "UniformRandom",
    "baseline_eig_f",
    "baseline_random",
    "baseline_variance",
    "build_setup",
    "distance_for_outputs",
    "draw_bundle",
    "eig_execpath",
    "eig_output",
    "eig_subsequence",
    "emit_plot",
    "estimate_output",
    "execute_experiment",
    "extract_subsequence_values",
    "gaussian_entropy",
    "get_benchmark",
    "grid_edge_count",
    "inverse_softplus",
    "jaccard_distance",
    "load_graph",
    "make_grid_graph",
    "normalize_costs",
    "parse_config",
    "path_area_error",
    "posterior_marginal",
    "posterior_marginals",
    "presampled_functions",
    "refine_local_optimum",
    "run_dijkstra",
    "run_evolution_strategy",
    "run_infobax",
    "run_topk",
    "sample_function",
    "save_graph",
    "select_delta",
    "serialize_config",
    "simple_regret",
    "softplus",
    "summarize",
    "write_results",
]
