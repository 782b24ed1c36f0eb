"""The sequential querying loop.

Each iteration draws a bundle of posterior algorithm runs, scores every
candidate input with the configured acquisition, queries the true function at
the argmax, and folds the noisy observation back into the evidence. After the
budget is spent one last bundle is drawn so the final output distribution and
estimate reflect all observations.

Seeding is hierarchical: every random draw in a run derives from the run seed
and fixed integer tags, so identical configurations replay identically and no
consumer's draws shift another's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .acquisition import (
    AbcPolicy,
    OutputDistance,
    SampleBundle,
    SampleDraw,
    baseline_eig_f_scores,
    baseline_random,
    baseline_variance_scores,
    distance_for_outputs,
    eig_execpath_scores,
    eig_output_scores,
    eig_subsequence_scores,
)
from .algorithms import AlgorithmOutput, ESConfig, LocalOptOutput, run_evolution_strategy
from .errors import ConfigError, NumericalError, RunAborted
from .gp import Evidence, GPModel, PosteriorFactor, presampled_functions, sample_function

ACQUISITIONS = ("EIGe", "EIGout", "EIGv", "Variance", "EIGf", "Random")

# seed-derivation tags; distinct per consumer so streams never overlap
_TAG_BUNDLE, _TAG_ACQ, _TAG_NOISE, _TAG_CANDS, _TAG_INIT = 1, 2, 3, 4, 5


def _derive_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed), *tags]).generate_state(1)[0])


@dataclass(frozen=True)
class FixedSet:
    """A constant candidate set, e.g. a graph's distinct edge midpoints."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ConfigError("candidate set must not be empty")
        object.__setattr__(self, "points", pts)

    def candidates(self, seed: int, iteration: int) -> np.ndarray:
        return self.points


@dataclass(frozen=True)
class UniformRandom:
    """Fresh uniform candidates in a box, reseeded every iteration."""

    domain: np.ndarray
    count: int = 1000

    def __post_init__(self):
        dom = np.asarray(self.domain, dtype=float)
        if dom.ndim != 2 or dom.shape[1] != 2 or np.any(dom[:, 1] <= dom[:, 0]):
            raise ConfigError("domain must be rows of (lower, upper) with upper > lower")
        if self.count < 1:
            raise ConfigError("candidate count must be positive")
        object.__setattr__(self, "domain", dom)

    def candidates(self, seed: int, iteration: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([seed, iteration]))
        return rng.uniform(self.domain[:, 0], self.domain[:, 1],
                           size=(self.count, self.domain.shape[0]))


@dataclass
class BaxConfig:
    """Settings for one sequential run."""

    budget: int
    candidate_source: FixedSet | UniformRandom
    num_posterior_samples: int = 20
    acquisition: str = "EIGv"
    abc: AbcPolicy = field(default_factory=AbcPolicy)
    seed: int = 0
    n_init: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if self.num_posterior_samples < 1:
            raise ConfigError("num_posterior_samples must be at least 1")
        if self.acquisition not in ACQUISITIONS:
            raise ConfigError(
                f"unknown acquisition {self.acquisition!r}; options: {ACQUISITIONS}"
            )
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.n_init < 0:
            raise ConfigError("n_init must be nonnegative")


@dataclass
class Problem:
    """The true function under study, on the scale the surrogate models.

    ``true_f`` must be noiseless; the loop adds observation noise itself.
    ``domain`` is the box the queries must stay inside (None to skip the
    check, e.g. when candidates are a fixed finite set).
    """

    name: str
    true_f: Callable[[np.ndarray], float]
    domain: np.ndarray | None = None

    def __post_init__(self):
        if self.domain is not None:
            self.domain = np.asarray(self.domain, dtype=float)


@dataclass
class IterationEntry:
    """What iteration t contributed: the query, its observation, the bundle's
    outputs (drawn before the query), and metric values filled in later."""

    t: int
    x: np.ndarray
    y: float
    acquisition_summary: dict
    sampled_outputs: list[AlgorithmOutput]
    metrics: dict[str, float] = field(default_factory=dict)


@dataclass
class RunRecord:
    """Everything needed to interpret or replay one run."""

    config: dict
    init_queries: list[tuple[np.ndarray, float]] = field(default_factory=list)
    entries: list[IterationEntry] = field(default_factory=list)
    final_outputs: list[AlgorithmOutput] = field(default_factory=list)
    final_estimate: AlgorithmOutput | None = None
    aborted: bool = False
    failure: str | None = None


def draw_bundle(model: GPModel, data: Evidence, algorithm, n_samples: int,
                seed: int) -> SampleBundle:
    """Run the algorithm on n_samples independent posterior function draws.

    Algorithms that declare their query points up front get jointly
    pre-realized samples (one factorization shared across draws); adaptive
    algorithms fall back to lazily realized samples.
    """
    if n_samples < 1:
        raise ConfigError("need at least one posterior sample")
    fn_seeds = [np.random.SeedSequence([seed, 0, j]) for j in range(n_samples)]
    query_points = algorithm.query_points
    if query_points is not None:
        samples = presampled_functions(model, data, query_points, seeds=fn_seeds)
    else:
        samples = [sample_function(model, data, s) for s in fn_seeds]
    draws = []
    for j, sample in enumerate(samples):
        path, output = algorithm.run(sample, seed=np.random.SeedSequence([seed, 1, j]))
        draws.append(SampleDraw(j, path, output))
    return SampleBundle(draws)


def optimize_acquisition(values) -> int:
    """Index of the maximum acquisition value; ties go to the lowest index."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 1:
        raise ValueError("need at least one candidate value")
    if np.any(np.isnan(arr)):
        raise NumericalError("acquisition produced NaN", count=int(np.isnan(arr).sum()))
    return int(np.argmax(arr))


def estimate_output(bundle: SampleBundle, distance: OutputDistance) -> AlgorithmOutput:
    """Medoid of the bundle's outputs: minimum summed distance to the rest,
    earliest draw winning ties."""
    D = distance.pairwise(bundle.outputs)
    return bundle.outputs[int(np.argmin(D.sum(axis=1)))]


def refine_local_optimum(model: GPModel, data: Evidence, domain,
                         config: ESConfig, seed: int) -> LocalOptOutput:
    """Run the evolution strategy on the posterior mean instead of a sample.

    Gives a point estimate of the local optimum that pools all observations,
    typically steadier than any single draw's output.
    """
    factor = PosteriorFactor.from_evidence(model, data)

    class _PosteriorMean:
        def __call__(self, x):
            means, _ = factor.marginals(np.atleast_2d(x))
            return float(means[0])

        def query_many(self, X):
            means, _ = factor.marginals(np.atleast_2d(X))
            return means

    _, output = run_evolution_strategy(_PosteriorMean(), domain, config, seed=seed)
    return output


def _score_candidates(acquisition: str, model, data, bundle, candidates, abc, seed):
    if acquisition == "EIGe":
        return eig_execpath_scores(model, data, bundle, candidates)
    if acquisition == "EIGv":
        return eig_subsequence_scores(model, data, bundle, candidates)
    if acquisition == "EIGout":
        distance = distance_for_outputs(bundle.outputs)
        return eig_output_scores(model, data, bundle, distance, abc, candidates, seed)
    if acquisition == "Variance":
        return baseline_variance_scores(model, data, candidates)
    if acquisition == "EIGf":
        return baseline_eig_f_scores(model, data, candidates)
    raise ConfigError(f"unknown acquisition {acquisition!r}")


def _snapshot(config: BaxConfig, model: GPModel, problem: Problem) -> dict:
    source = config.candidate_source
    if isinstance(source, FixedSet):
        source_snap = {"kind": "fixed", "points": source.points.tolist()}
    else:
        source_snap = {"kind": "uniform", "domain": source.domain.tolist(),
                       "count": source.count}
    return {
        "problem": problem.name,
        "budget": config.budget,
        "num_posterior_samples": config.num_posterior_samples,
        "acquisition": config.acquisition,
        "seed": config.seed,
        "n_init": config.n_init,
        "abc": {"min_ball_size": config.abc.min_ball_size,
                "entropy_mc_draws": config.abc.entropy_mc_draws},
        "candidate_source": source_snap,
        "model": {
            "kernel": {"kind": model.kernel.kind,
                       "lengthscale": model.kernel.lengthscale.tolist(),
                       "signal_variance": model.kernel.signal_variance},
            "noise_variance": model.noise_variance,
            "prior_mean": model.prior_mean,
        },
    }


def _check_domain(x: np.ndarray, problem: Problem):
    if problem.domain is None:
        return
    lo, hi = problem.domain[:, 0], problem.domain[:, 1]
    if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
        raise ConfigError(f"candidate {x} outside the problem domain")


def run_infobax(config: BaxConfig, model: GPModel, problem: Problem,
                algorithm) -> RunRecord:
    """Run the full sequential loop and return its record.

    Exactly ``budget`` true-function queries are made (plus ``n_init`` seeded
    uniform ones up front); posterior samples never touch the true function.
    On any mid-run failure a ``RunAborted`` carrying the partial record is
    raised.
    """
    record = RunRecord(config=_snapshot(config, model, problem))
    data = Evidence()
    seed = config.seed
    try:
        for i in range(config.n_init):
            if problem.domain is None:
                raise ConfigError("n_init requires a problem domain to draw from")
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, _TAG_INIT, i])
            )
            x = rng.uniform(problem.domain[:, 0], problem.domain[:, 1])
            y = float(problem.true_f(x)) + rng.normal(0.0, np.sqrt(model.noise_variance))
            data = data.with_noisy(x, y)
            record.init_queries.append((x, y))
        for t in range(1, config.budget + 1):
            bundle = draw_bundle(model, data, algorithm,
                                 config.num_posterior_samples,
                                 _derive_seed(seed, _TAG_BUNDLE, t))
            candidates = config.candidate_source.candidates(
                _derive_seed(seed, _TAG_CANDS, t), t
            )
            if config.acquisition == "Random":
                index = baseline_random(candidates, _derive_seed(seed, _TAG_ACQ, t))
                summary = {"n_candidates": int(len(candidates)), "chosen_index": index}
            else:
                scores = _score_candidates(
                    config.acquisition, model, data, bundle, candidates,
                    config.abc, _derive_seed(seed, _TAG_ACQ, t),
                )
                index = optimize_acquisition(scores)
                summary = {
                    "n_candidates": int(len(candidates)),
                    "chosen_index": index,
                    "max_value": float(scores[index]),
                }
            x = np.array(candidates[index], dtype=float, copy=True)
            _check_domain(x, problem)
            noise_rng = np.random.default_rng(
                np.random.SeedSequence([seed, _TAG_NOISE, t])
            )
            y = float(problem.true_f(x)) + noise_rng.normal(
                0.0, np.sqrt(model.noise_variance)
            )
            data = data.with_noisy(x, y)
            record.entries.append(
                IterationEntry(t, x, y, summary, list(bundle.outputs))
            )
        final_bundle = draw_bundle(model, data, algorithm,
                                   config.num_posterior_samples,
                                   _derive_seed(seed, _TAG_BUNDLE, config.budget + 1))
        record.final_outputs = list(final_bundle.outputs)
        record.final_estimate = estimate_output(
            final_bundle, distance_for_outputs(final_bundle.outputs)
        )
    except Exception as exc:
        record.aborted = True
        record.failure = f"{type(exc).__name__}: {exc}"
        raise RunAborted(f"run failed at iteration {len(record.entries) + 1}: {exc}",
                         record=record) from exc
    return record
