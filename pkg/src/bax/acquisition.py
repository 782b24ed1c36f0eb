"""Information-gain acquisition functions over a shared bundle of posterior
algorithm runs, plus the non-informative query baselines.

All acquisitions score candidate inputs by how much observing y_x is expected
to tell us about the algorithm's output. The exact-conditioning pair
(``eig_execpath``, ``eig_subsequence``) reduces to differences of Gaussian
predictive entropies; ``eig_output`` marginalizes execution paths within
output-space balls and prices the resulting Gaussian mixtures by Monte Carlo.

Each acquisition comes in two forms: a ``*_scores`` evaluator vectorized over
a candidate array (what the query loop uses) and a scalar wrapper with the
same name minus the suffix. The two agree exactly; the Monte Carlo estimator
seeds itself per candidate from a content hash, so a candidate's score does
not depend on which batch it appears in.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .algorithms import (
    AlgorithmOutput,
    ExecutionPath,
    GraphPathOutput,
    LocalOptOutput,
    TopKOutput,
    extract_subsequence_values,
)
from .errors import ConfigError
from .gp import Evidence, GPModel, PosteriorFactor, gaussian_entropy

_LOG_2PI = math.log(2.0 * math.pi)

DISTANCE_KINDS = ("jaccard_sets", "jaccard_edge_sets", "euclidean_optimum")


@dataclass(frozen=True)
class SampleDraw:
    """One posterior function sample's algorithm run."""

    function_sample_id: int
    path: ExecutionPath
    output: AlgorithmOutput


class SampleBundle:
    """The per-iteration collection of posterior algorithm runs.

    One bundle is shared by every candidate scored in an iteration.
    """

    def __init__(self, draws: list[SampleDraw]):
        if not draws:
            raise ValueError("a sample bundle needs at least one draw")
        self.draws = list(draws)

    def __len__(self) -> int:
        return len(self.draws)

    @property
    def paths(self) -> list[ExecutionPath]:
        return [d.path for d in self.draws]

    @property
    def outputs(self) -> list[AlgorithmOutput]:
        return [d.output for d in self.draws]


@dataclass(frozen=True)
class OutputDistance:
    """Distance between two algorithm outputs of the same variant.

    kind selects the comparison: "jaccard_sets" on top-k element sets,
    "jaccard_edge_sets" on directed path edge sets, "euclidean_optimum" on
    the concatenated (x*, f*) vector divided coordinatewise by ``scales``.
    """

    kind: str
    scales: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise ConfigError(f"unknown distance kind {self.kind!r}; options: {DISTANCE_KINDS}")
        if self.scales is not None:
            scales = np.asarray(self.scales, dtype=float)
            if np.any(scales <= 0):
                raise ConfigError("distance scales must be positive")
            object.__setattr__(self, "scales", scales)

    def _features(self, output: AlgorithmOutput):
        if self.kind == "jaccard_sets":
            return frozenset(tuple(map(float, el)) for el in output.elements)
        if self.kind == "jaccard_edge_sets":
            return frozenset(zip(output.vertices, output.vertices[1:]))
        vec = np.concatenate([np.ravel(output.x_star), [output.f_star]])
        return vec if self.scales is None else vec / self.scales

    def __call__(self, a: AlgorithmOutput, b: AlgorithmOutput) -> float:
        fa, fb = self._features(a), self._features(b)
        if self.kind == "euclidean_optimum":
            return float(np.linalg.norm(fa - fb))
        if not fa and not fb:
            return 0.0
        return 1.0 - len(fa & fb) / len(fa | fb)

    def pairwise(self, outputs: list[AlgorithmOutput]) -> np.ndarray:
        """Symmetric matrix of distances, computing features once per output."""
        feats = [self._features(o) for o in outputs]
        n = len(feats)
        D = np.zeros((n, n))
        for j in range(n):
            for k in range(j + 1, n):
                if self.kind == "euclidean_optimum":
                    d = float(np.linalg.norm(feats[j] - feats[k]))
                elif not feats[j] and not feats[k]:
                    d = 0.0
                else:
                    d = 1.0 - len(feats[j] & feats[k]) / len(feats[j] | feats[k])
                D[j, k] = D[k, j] = d
        return D


def distance_for_outputs(outputs: list[AlgorithmOutput]) -> OutputDistance:
    """Pick the natural distance for a bundle's output variant.

    The local-optimum distance normalizes each coordinate of (x*, f*) by its
    standard deviation across the bundle so no coordinate dominates; constant
    coordinates fall back to unit scale.
    """
    first = outputs[0]
    if isinstance(first, TopKOutput):
        return OutputDistance("jaccard_sets")
    if isinstance(first, GraphPathOutput):
        return OutputDistance("jaccard_edge_sets")
    if isinstance(first, LocalOptOutput):
        vecs = np.stack([np.concatenate([np.ravel(o.x_star), [o.f_star]]) for o in outputs])
        scales = np.std(vecs, axis=0)
        scales[scales <= 0] = 1.0
        return OutputDistance("euclidean_optimum", scales=scales)
    raise TypeError(f"no output distance for {type(first).__name__}")


@dataclass(frozen=True)
class AbcPolicy:
    """Knobs for the output-ball acquisition: minimum ball occupancy for the
    radius search and the Monte Carlo budget for mixture entropies."""

    min_ball_size: int = 30
    entropy_mc_draws: int = 512

    def __post_init__(self):
        if self.min_ball_size < 1:
            raise ConfigError("min_ball_size must be a positive integer")
        if self.entropy_mc_draws < 1:
            raise ConfigError("entropy_mc_draws must be a positive integer")


def select_delta(outputs: list[AlgorithmOutput], distance: OutputDistance,
                 min_ball_size: int) -> float:
    """Smallest observed pairwise distance delta such that every output has at
    least min_ball_size others within delta (itself excluded)."""
    if min_ball_size < 1:
        raise ConfigError("min_ball_size must be a positive integer")
    n = len(outputs)
    if n - 1 < min_ball_size:
        raise ConfigError(
            f"min_ball_size {min_ball_size} infeasible with {n} outputs; "
            "every ball excludes its own center"
        )
    D = distance.pairwise(outputs)
    candidates = np.unique(D[~np.eye(n, dtype=bool)])

    def feasible(delta: float) -> bool:
        return bool(np.all(np.sum(D <= delta, axis=1) - 1 >= min_ball_size))

    # feasibility is monotone in delta, so bisect the sorted candidate radii
    lo, hi = 0, len(candidates) - 1
    if not feasible(candidates[hi]):
        raise ConfigError("no pairwise distance gives every output a full ball")
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def _unique_pairs(pts: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop repeated conditioning points, keeping the first value seen."""
    seen = set()
    keep = []
    for i, row in enumerate(pts):
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    if len(keep) == len(pts):
        return pts, vals
    return pts[keep], vals[keep]


def _path_pairs(path: ExecutionPath) -> tuple[np.ndarray, np.ndarray]:
    return _unique_pairs(path.points(), path.values())


def _output_pairs(output: AlgorithmOutput) -> tuple[np.ndarray, np.ndarray]:
    pairs = extract_subsequence_values(output)
    pts = np.atleast_2d(np.stack([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in pairs]))
    vals = np.array([v for _, v in pairs], dtype=float)
    return _unique_pairs(pts, vals)


def _conditioned_marginals(model: GPModel, data: Evidence, X: np.ndarray,
                           pairs_per_sample) -> tuple:
    """Observation-predictive marginals at X before and after conditioning on
    each sample's noiseless (point, value) pairs.

    Returns ((prior_mean, prior_var), [(mean_j, var_j), ...]). The prior
    factor's cross-solve rows are reused by every extension.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    factor = PosteriorFactor.from_evidence(model, data)
    base = factor.cross_solve(X)
    prior = factor.marginals(X, cross=base, predict_observation=True)
    conditioned = []
    for pts, vals in pairs_per_sample:
        if len(pts) == 0:
            conditioned.append(prior)
            continue
        ext = factor.extended(pts, vals)
        cross = ext.cross_solve(X, prefix=(len(factor), base))
        conditioned.append(ext.marginals(X, cross=cross, predict_observation=True))
    return prior, conditioned


def _entropy_reduction_scores(model, data, pairs_per_sample, X) -> np.ndarray:
    (_, var0), conditioned = _conditioned_marginals(model, data, X, pairs_per_sample)
    # additive 2*pi*e entropy constants cancel between the two terms
    avg = np.mean([0.5 * np.log(var) for _, var in conditioned], axis=0)
    return 0.5 * np.log(var0) - avg


def eig_execpath_scores(model: GPModel, data: Evidence, bundle: SampleBundle,
                        X: np.ndarray) -> np.ndarray:
    """Expected information gain about the full execution path, per candidate.

    H[y_x | D] minus the average predictive entropy after conditioning on each
    sampled path's (point, value) pairs as noiseless evidence.
    """
    pairs = [_path_pairs(p) for p in bundle.paths]
    return _entropy_reduction_scores(model, data, pairs, X)


def eig_subsequence_scores(model: GPModel, data: Evidence, bundle: SampleBundle,
                           X: np.ndarray) -> np.ndarray:
    """Like eig_execpath_scores but conditioning only on the function values
    carried by each sampled output."""
    pairs = [_output_pairs(o) for o in bundle.outputs]
    return _entropy_reduction_scores(model, data, pairs, X)


def eig_execpath(model: GPModel, data: Evidence, bundle: SampleBundle, x) -> float:
    return float(eig_execpath_scores(model, data, bundle, np.atleast_2d(x))[0])


def eig_subsequence(model: GPModel, data: Evidence, bundle: SampleBundle, x) -> float:
    return float(eig_subsequence_scores(model, data, bundle, np.atleast_2d(x))[0])


def _candidate_rng(seed: int, x: np.ndarray) -> np.random.Generator:
    """Generator seeded from (seed, candidate content), batch-order independent."""
    digest = hashlib.blake2b(np.ascontiguousarray(x, dtype=float).tobytes(),
                             digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), int.from_bytes(digest, "big")])
    )


def _stratified_members(members: list[int], draws: int) -> np.ndarray:
    """Component index per draw: draws split evenly, remainder round-robin."""
    m = len(members)
    base, rem = divmod(draws, m)
    counts = [base + 1 if i < rem else base for i in range(m)]
    return np.repeat(members, counts)


def eig_output_scores(model: GPModel, data: Evidence, bundle: SampleBundle,
                      distance: OutputDistance, policy: AbcPolicy,
                      X: np.ndarray, seed: int) -> np.ndarray:
    """Expected information gain about the algorithm output, per candidate.

    Each sampled output's delta-ball gathers the paths of nearby samples; the
    candidate's predictive density given that output becomes a uniform mixture
    of the per-path Gaussian conditionals, whose entropy is estimated with
    stratified Monte Carlo draws. Singleton balls use the closed form, so a
    one-draw bundle reproduces eig_execpath exactly.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n_samples = len(bundle)
    if n_samples == 1:
        balls = [[0]]
    else:
        if n_samples < policy.min_ball_size:
            raise ConfigError(
                f"bundle of {n_samples} draws cannot satisfy min_ball_size "
                f"{policy.min_ball_size}"
            )
        delta = select_delta(bundle.outputs, distance, policy.min_ball_size)
        D = distance.pairwise(bundle.outputs)
        balls = [sorted(np.flatnonzero(D[j] <= delta)) for j in range(n_samples)]
    largest = max(len(b) for b in balls)
    if policy.entropy_mc_draws < largest:
        raise ConfigError(
            f"entropy_mc_draws {policy.entropy_mc_draws} is below the largest "
            f"ball size {largest}; stratification would skip components"
        )

    pairs = [_path_pairs(p) for p in bundle.paths]
    (_, var0), conditioned = _conditioned_marginals(model, data, X, pairs)
    mu = np.stack([m for m, _ in conditioned])
    sd = np.sqrt(np.stack([v for _, v in conditioned]))
    prior_entropy = gaussian_entropy(var0)

    draws = policy.entropy_mc_draws
    n = X.shape[0]
    total = np.zeros(n)
    chunk = max(1, int(2**22 // max(1, largest * draws)))
    for start in range(0, n, chunk):
        cols = slice(start, min(start + chunk, n))
        width = cols.stop - cols.start
        Z = np.stack([
            _candidate_rng(seed, X[i]).standard_normal((n_samples, draws))
            for i in range(cols.start, cols.stop)
        ])
        mu_c, sd_c = mu[:, cols], sd[:, cols]
        acc = np.zeros(width)
        for j, members in enumerate(balls):
            if len(members) == 1:
                k = members[0]
                acc += gaussian_entropy(sd_c[k] ** 2)
                continue
            assign = _stratified_members(members, draws)
            y = mu_c[assign] + sd_c[assign] * Z[:, j, :].T
            t = (y[None, :, :] - mu_c[members][:, None, :]) / sd_c[members][:, None, :]
            logpdf = -0.5 * t * t - np.log(sd_c[members])[:, None, :] - 0.5 * _LOG_2PI
            mix = logsumexp(logpdf, axis=0) - math.log(len(members))
            acc += -np.mean(mix, axis=0)
        total[cols] = acc
    return prior_entropy - total / n_samples


def eig_output(model: GPModel, data: Evidence, bundle: SampleBundle,
               distance: OutputDistance, policy: AbcPolicy, x, seed: int) -> float:
    return float(
        eig_output_scores(model, data, bundle, distance, policy, np.atleast_2d(x), seed)[0]
    )


def baseline_variance_scores(model: GPModel, data: Evidence, X: np.ndarray) -> np.ndarray:
    """Predictive observation variance at each candidate."""
    factor = PosteriorFactor.from_evidence(model, data)
    _, var = factor.marginals(np.atleast_2d(X), predict_observation=True)
    return var


def baseline_variance(model: GPModel, data: Evidence, x) -> float:
    return float(baseline_variance_scores(model, data, np.atleast_2d(x))[0])


def baseline_eig_f_scores(model: GPModel, data: Evidence, X: np.ndarray) -> np.ndarray:
    """Information gained about f itself: 0.5 ln(1 + latent variance / noise)."""
    if model.noise_variance <= 0:
        raise ConfigError("eig_f is undefined without observation noise")
    factor = PosteriorFactor.from_evidence(model, data)
    _, latent = factor.marginals(np.atleast_2d(X))
    return 0.5 * np.log1p(latent / model.noise_variance)


def baseline_eig_f(model: GPModel, data: Evidence, x) -> float:
    return float(baseline_eig_f_scores(model, data, np.atleast_2d(x))[0])


def baseline_random(candidates, seed: int) -> int:
    """Seeded uniform choice of a candidate index."""
    n = len(candidates)
    if n < 1:
        raise ValueError("need at least one candidate")
    return int(np.random.default_rng(seed).integers(n))
