"""Gaussian-process surrogate: kernels, exact mixed-noise conditioning,
entropies, and lazily materialized posterior function samples.

Evidence may mix noisy observations with noiseless function values; the
noiseless ones enter the Gram diagonal with zero noise, which is what lets
hallucinated algorithm queries be conditioned on exactly. All conditioning
is Cholesky based, in float64, with an escalating jitter fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericalError

LOG_2PI_E = math.log(2.0 * math.pi * math.e)

# Jitter multipliers are relative to the kernel signal variance.
JITTER_BASE = 1e-8
JITTER_MAX = 1e-4

KERNEL_KINDS = ("se", "matern52")


@dataclass
class KernelSpec:
    """Stationary kernel description.

    ``lengthscale`` may be a scalar or one value per input dimension.
    """

    kind: str = "se"
    lengthscale: float | np.ndarray = 1.0
    signal_variance: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}, expected one of {KERNEL_KINDS}")
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if ls.ndim != 1 or not np.all(ls > 0):
            raise ValueError("lengthscale must be a positive scalar or 1-D array of positives")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        self.lengthscale = ls


@dataclass
class GPModel:
    """Prior over functions: constant mean, stationary kernel, observation noise."""

    kernel: KernelSpec = field(default_factory=KernelSpec)
    noise_variance: float = 1e-2
    prior_mean: float = 0.0

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")


@dataclass
class Evidence:
    """Conditioning data: noisy (x, y) observations and noiseless (z, f) values."""

    noisy: list[tuple[np.ndarray, float]] = field(default_factory=list)
    noiseless: list[tuple[np.ndarray, float]] = field(default_factory=list)

    def with_noisy(self, x: np.ndarray, y: float) -> "Evidence":
        return Evidence(self.noisy + [(np.asarray(x, dtype=float), float(y))], list(self.noiseless))

    def with_noiseless(self, z: np.ndarray, fz: float) -> "Evidence":
        return Evidence(list(self.noisy), self.noiseless + [(np.asarray(z, dtype=float), float(fz))])

    def __len__(self) -> int:
        return len(self.noisy) + len(self.noiseless)


@dataclass(frozen=True)
class GaussianMarginal:
    mean: float
    variance: float


def _scaled(kernel: KernelSpec, X: np.ndarray) -> np.ndarray:
    ls = kernel.lengthscale
    if ls.size not in (1, X.shape[1]):
        raise ValueError(
            f"lengthscale has {ls.size} entries but points have dimension {X.shape[1]}"
        )
    return X / ls


def kernel_matrix(kernel: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix of shape (len(A), len(B))."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    diff = _scaled(kernel, A)[:, None, :] - _scaled(kernel, B)[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    if kernel.kind == "se":
        return kernel.signal_variance * np.exp(-0.5 * sq)
    # matern52
    r = np.sqrt(np.maximum(sq, 0.0))
    s5r = math.sqrt(5.0) * r
    return kernel.signal_variance * (1.0 + s5r + (5.0 / 3.0) * sq) * np.exp(-s5r)


def kernel_diag(kernel: KernelSpec, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.full(X.shape[0], kernel.signal_variance)


def gaussian_entropy(variance: float | np.ndarray) -> float | np.ndarray:
    """Entropy of a univariate Gaussian in nats, 0.5 * ln(2*pi*e*variance)."""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise ValueError("entropy requires positive variance")
    out = 0.5 * (LOG_2PI_E + np.log(variance))
    return float(out) if out.ndim == 0 else out


def _jittered_cholesky(S: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of S + jitter*I, escalating jitter on failure."""
    scale = JITTER_BASE * signal_variance
    while True:
        try:
            return np.linalg.cholesky(S + scale * np.eye(S.shape[0])), scale
        except np.linalg.LinAlgError:
            if scale >= JITTER_MAX * signal_variance:
                raise NumericalError(
                    "Cholesky factorization failed at maximum jitter",
                    size=S.shape[0],
                    jitter=scale,
                    min_diagonal=float(np.min(np.diag(S))),
                )
            scale *= 10.0


def _stack_evidence(evidence: Evidence, noise_variance: float):
    """Noisy rows first, then noiseless rows; returns (points, values, noise diag)."""
    pairs = list(evidence.noisy) + list(evidence.noiseless)
    if not pairs:
        return None
    pts = np.stack([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in pairs])
    vals = np.array([v for _, v in pairs], dtype=float)
    noise = np.concatenate(
        [np.full(len(evidence.noisy), noise_variance), np.zeros(len(evidence.noiseless))]
    )
    return pts, vals, noise


class PosteriorFactor:
    """Cholesky state of a GP conditioned on mixed-noise evidence.

    ``extended`` appends rows without refactorizing the existing block, so
    many conditioning sets sharing a common prefix (the observed data, say)
    can reuse one factorization; ``cross_solve`` accepts the prefix's solve
    for the same reason.
    """

    def __init__(self, model: GPModel, pts, vals, noise_diag, L, w, jitter):
        self.model = model
        self.pts = pts
        self.vals = vals
        self.noise_diag = noise_diag
        self.L = L
        self.w = w
        self.jitter = jitter

    @classmethod
    def from_evidence(cls, model: GPModel, evidence: Evidence) -> "PosteriorFactor":
        kernel = model.kernel
        stacked = _stack_evidence(evidence, model.noise_variance)
        if stacked is None:
            empty = np.empty((0, 0))
            return cls(model, np.empty((0, 0)), np.empty(0), np.empty(0), empty,
                       np.empty(0), JITTER_BASE * kernel.signal_variance)
        pts, vals, noise = stacked
        S = kernel_matrix(kernel, pts, pts) + np.diag(noise)
        L, jitter = _jittered_cholesky(S, kernel.signal_variance)
        w = solve_triangular(L, vals - model.prior_mean, lower=True, check_finite=False)
        return cls(model, pts, vals, noise, L, w, jitter)

    def __len__(self) -> int:
        return self.pts.shape[0]

    def extended(self, pts_new, vals_new, noise_variance: float = 0.0) -> "PosteriorFactor":
        """New factor with extra rows appended (noiseless by default)."""
        kernel = self.model.kernel
        P = np.atleast_2d(np.asarray(pts_new, dtype=float))
        v = np.asarray(vals_new, dtype=float).ravel()
        b = P.shape[0]
        m = len(self)
        if m == 0:
            evid = Evidence(
                noisy=[(p, y) for p, y in zip(P, v)] if noise_variance > 0 else [],
                noiseless=[(p, y) for p, y in zip(P, v)] if noise_variance == 0 else [],
            )
            model = self.model
            if noise_variance > 0 and noise_variance != model.noise_variance:
                model = GPModel(kernel, noise_variance, self.model.prior_mean)
            return PosteriorFactor.from_evidence(model, evid)
        G = solve_triangular(self.L, kernel_matrix(kernel, self.pts, P), lower=True,
                             check_finite=False)
        S = kernel_matrix(kernel, P, P) + noise_variance * np.eye(b) - G.T @ G
        L_E, _ = _jittered_cholesky(S, kernel.signal_variance)
        mean = self.model.prior_mean + G.T @ self.w
        w_b = solve_triangular(L_E, v - mean, lower=True, check_finite=False)
        L_full = np.zeros((m + b, m + b))
        L_full[:m, :m] = self.L
        L_full[m:, :m] = G.T
        L_full[m:, m:] = L_E
        return PosteriorFactor(
            self.model,
            np.vstack([self.pts, P]),
            np.concatenate([self.vals, v]),
            np.concatenate([self.noise_diag, np.full(b, noise_variance)]),
            L_full,
            np.concatenate([self.w, w_b]),
            self.jitter,
        )

    def cross_solve(self, X: np.ndarray, prefix=None) -> np.ndarray:
        """G = L^{-1} k(pts, X); pass (m0, G0) to reuse a parent factor's rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self) == 0:
            return np.empty((0, X.shape[0]))
        Kx = kernel_matrix(self.model.kernel, self.pts, X)
        if prefix is None:
            return solve_triangular(self.L, Kx, lower=True, check_finite=False)
        m0, G0 = prefix
        Gb = solve_triangular(
            self.L[m0:, m0:], Kx[m0:] - self.L[m0:, :m0] @ G0, lower=True, check_finite=False
        )
        return np.vstack([G0, Gb])

    def marginals(self, X: np.ndarray, cross: np.ndarray | None = None,
                  predict_observation: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances at the rows of X.

        Latent variances are clamped below at the jitter floor; with
        ``predict_observation`` the model noise variance is added on top.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        G = self.cross_solve(X) if cross is None else cross
        if len(self) == 0:
            means = np.full(X.shape[0], self.model.prior_mean)
            latent = kernel_diag(self.model.kernel, X)
        else:
            means = self.model.prior_mean + G.T @ self.w
            latent = kernel_diag(self.model.kernel, X) - np.einsum("ij,ij->j", G, G)
            latent = np.maximum(latent, self.jitter)
        if predict_observation:
            return means, latent + self.model.noise_variance
        return means, latent

    def conditional_block(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Joint conditional over X: mean vector and lower Cholesky of the covariance."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        kernel = self.model.kernel
        K = kernel_matrix(kernel, X, X)
        if len(self) == 0:
            mean = np.full(X.shape[0], self.model.prior_mean)
            S = K
        else:
            G = self.cross_solve(X)
            mean = self.model.prior_mean + G.T @ self.w
            S = K - G.T @ G
        L, _ = _jittered_cholesky(S, kernel.signal_variance)
        return mean, L


def posterior_marginals(model: GPModel, evidence: Evidence, X: np.ndarray,
                        predict_observation: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior marginals at each row of X."""
    factor = PosteriorFactor.from_evidence(model, evidence)
    return factor.marginals(X, predict_observation=predict_observation)


def posterior_marginal(model: GPModel, evidence: Evidence, x: np.ndarray,
                       predict_observation: bool = False) -> GaussianMarginal:
    """Posterior marginal at a single point x."""
    means, variances = posterior_marginals(model, evidence, np.atleast_2d(x),
                                           predict_observation=predict_observation)
    return GaussianMarginal(float(means[0]), float(variances[0]))


class LazyFunctionSample:
    """One exact draw from the GP posterior, materialized point by point.

    Each query conditions on the evidence plus every previously realized
    point, draws the value, and stores it; re-querying a point returns the
    stored value without consuming randomness. ``query_many`` realizes a
    whole block jointly, which is the same sequential scheme applied to the
    block at once, so point and block queries may be freely interleaved.
    """

    def __init__(self, model: GPModel, evidence: Evidence, seed):
        self.model = model
        self.rng = np.random.default_rng(seed)
        self._m = 0
        self._dim = None
        self._pts = None
        self._L = None
        self._w = None
        self._lookup: dict[bytes, float] = {}
        stacked = _stack_evidence(evidence, model.noise_variance)
        if stacked is not None:
            pts, vals, noise = stacked
            self._append_block(pts, noise, values=vals)

    @property
    def num_realized(self) -> int:
        return len(self._lookup)

    def __call__(self, x) -> float:
        return self.query(x)

    def query(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        key = x.tobytes()
        if key in self._lookup:
            return self._lookup[key]
        values = self._append_block(x[None, :], np.zeros(1))
        return float(values[0])

    def query_many(self, X) -> np.ndarray:
        """Realize every row of X (skipping rows already realized) and return the values."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        keys = [row.tobytes() for row in X]
        fresh: list[int] = []
        seen: set[bytes] = set()
        for i, key in enumerate(keys):
            if key not in self._lookup and key not in seen:
                fresh.append(i)
                seen.add(key)
        if fresh:
            self._append_block(X[fresh], np.zeros(len(fresh)))
        return np.array([self._lookup[key] for key in keys])

    def _grow(self, extra: int):
        need = self._m + extra
        cap = 0 if self._pts is None else self._pts.shape[0]
        if need <= cap:
            return
        new_cap = max(16, cap)
        while new_cap < need:
            new_cap *= 2
        pts = np.zeros((new_cap, self._dim))
        L = np.zeros((new_cap, new_cap))
        w = np.zeros(new_cap)
        if self._m:
            pts[: self._m] = self._pts[: self._m]
            L[: self._m, : self._m] = self._L[: self._m, : self._m]
            w[: self._m] = self._w[: self._m]
        self._pts, self._L, self._w = pts, L, w

    def _append_block(self, P: np.ndarray, noise_diag: np.ndarray,
                      values: np.ndarray | None = None) -> np.ndarray:
        kernel = self.model.kernel
        if self._dim is None:
            self._dim = P.shape[1]
        elif P.shape[1] != self._dim:
            raise ValueError(f"query dimension {P.shape[1]} != evidence dimension {self._dim}")
        m, b = self._m, P.shape[0]
        self._grow(b)
        jitter = JITTER_BASE * kernel.signal_variance
        if m:
            Lm = self._L[:m, :m]
            G = solve_triangular(Lm, kernel_matrix(kernel, self._pts[:m], P), lower=True,
                                 check_finite=False)
            S = kernel_matrix(kernel, P, P) + np.diag(noise_diag) - G.T @ G
            mean = self.model.prior_mean + G.T @ self._w[:m]
        else:
            G = np.empty((0, b))
            S = kernel_matrix(kernel, P, P) + np.diag(noise_diag)
            mean = np.full(b, self.model.prior_mean)
        L_S, _ = _jittered_cholesky(S, kernel.signal_variance)
        if values is None:
            z = self.rng.standard_normal(b)
            values = mean + L_S @ z
            w_b = z
        else:
            values = np.asarray(values, dtype=float)
            w_b = solve_triangular(L_S, values - mean, lower=True, check_finite=False)
        self._pts[m : m + b] = P
        self._L[m : m + b, :m] = G.T
        self._L[m : m + b, m : m + b] = L_S
        self._w[m : m + b] = w_b
        self._m = m + b
        for row, value in zip(P, values):
            self._lookup[row.tobytes()] = float(value)
        return values


def sample_function(model: GPModel, evidence: Evidence, seed) -> LazyFunctionSample:
    """Draw one posterior function sample, realized lazily on demand."""
    return LazyFunctionSample(model, evidence, seed)


def presampled_functions(model: GPModel, evidence: Evidence, points: np.ndarray,
                         seeds) -> list[LazyFunctionSample]:
    """Draw several posterior samples jointly realized at ``points``.

    Equivalent to calling ``sample_function(...).query_many(points)`` per
    seed, but the conditional factor over ``points`` is computed once and
    shared, which is much cheaper when the samples all start from the same
    evidence. Later queries on each returned sample behave as usual.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    template = LazyFunctionSample(model, evidence, 0)
    kernel = model.kernel
    m, b = template._m, points.shape[0]
    if template._dim is None:
        template._dim = points.shape[1]
    template._grow(b)
    if m:
        Lm = template._L[:m, :m]
        G = solve_triangular(Lm, kernel_matrix(kernel, template._pts[:m], points), lower=True,
                             check_finite=False)
        S = kernel_matrix(kernel, points, points) - G.T @ G
        mean = model.prior_mean + G.T @ template._w[:m]
    else:
        G = np.empty((0, b))
        S = kernel_matrix(kernel, points, points)
        mean = np.full(b, model.prior_mean)
    L_S, _ = _jittered_cholesky(S, kernel.signal_variance)
    samples = []
    for seed in seeds:
        sample = LazyFunctionSample.__new__(LazyFunctionSample)
        sample.model = model
        sample.rng = np.random.default_rng(seed)
        sample._dim = template._dim
        sample._m = m + b
        sample._pts = template._pts.copy()
        sample._L = template._L.copy()
        sample._w = template._w.copy()
        sample._pts[m : m + b] = points
        sample._L[m : m + b, :m] = G.T
        sample._L[m : m + b, m : m + b] = L_S
        z = sample.rng.standard_normal(b)
        values = mean + L_S @ z
        sample._w[m : m + b] = z
        sample._lookup = dict(template._lookup)
        for row, value in zip(points, values):
            sample._lookup[row.tobytes()] = float(value)
        samples.append(sample)
    return samples
