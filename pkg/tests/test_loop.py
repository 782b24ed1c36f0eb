import numpy as np
import pytest

from bax.acquisition import distance_for_outputs
from bax.algorithms import (
    ESConfig,
    LocalOptAlgorithm,
    LocalOptOutput,
    TopKAlgorithm,
    TopKOutput,
)
from bax.errors import ConfigError, NumericalError, RunAborted
from bax.gp import Evidence, GPModel, KernelSpec
from bax.loop import (
    BaxConfig,
    FixedSet,
    Problem,
    UniformRandom,
    draw_bundle,
    estimate_output,
    optimize_acquisition,
    refine_local_optimum,
    run_infobax,
)

from oracles import medoid_index


def make_model(lengthscale=1.0, signal_variance=1.0, noise_variance=1e-2):
    return GPModel(KernelSpec("se", lengthscale, signal_variance), noise_variance)


def noisy_evidence(pairs):
    ev = Evidence()
    for x, y in pairs:
        ev = ev.with_noisy(np.atleast_1d(np.asarray(x, dtype=float)), y)
    return ev


class CountingFn:
    """Wraps a scalar function and counts true evaluations."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


X_SMALL = np.linspace(-2.0, 2.0, 8).reshape(-1, 1)


class TestDrawBundle:
    def test_single_sample(self):
        model = make_model()
        algo = TopKAlgorithm(X_SMALL, k=2)
        bundle = draw_bundle(model, Evidence(), algo, n_samples=1, seed=0)
        assert len(bundle) == 1
        assert isinstance(bundle.draws[0].output, TopKOutput)

    def test_topk_paths_scan_everything(self):
        model = make_model()
        algo = TopKAlgorithm(X_SMALL, k=3)
        bundle = draw_bundle(model, Evidence(), algo, n_samples=5, seed=1)
        for path in bundle.paths:
            assert len(path) == X_SMALL.shape[0]

    def test_pinned_posterior_recovers_truth(self):
        # near-zero noise and observations everywhere: every sampled run
        # must reproduce the true top-k set
        true = lambda x: float(np.sin(1.7 * x[0]))
        model = make_model(noise_variance=1e-10)
        data = noisy_evidence([(x[0], true(x)) for x in X_SMALL])
        algo = TopKAlgorithm(X_SMALL, k=2)
        _, want = algo.run(lambda x: true(np.atleast_1d(x)))
        want_set = {float(e[0]) for e in want.elements}
        bundle = draw_bundle(model, data, algo, n_samples=6, seed=2)
        for out in bundle.outputs:
            assert {float(e[0]) for e in out.elements} == want_set

    def test_deterministic_given_seed(self):
        model = make_model()
        algo = TopKAlgorithm(X_SMALL, k=2)
        a = draw_bundle(model, Evidence(), algo, n_samples=3, seed=9)
        b = draw_bundle(model, Evidence(), algo, n_samples=3, seed=9)
        for pa, pb in zip(a.paths, b.paths):
            assert np.allclose(pa.values(), pb.values())
        c = draw_bundle(model, Evidence(), algo, n_samples=3, seed=10)
        assert not np.allclose(a.paths[0].values(), c.paths[0].values())

    def test_adaptive_algorithm_uses_lazy_samples(self):
        model = make_model()
        domain = np.array([[-1.0, 1.0]])
        algo = LocalOptAlgorithm(domain, ESConfig(population=4, generations=3))
        bundle = draw_bundle(model, Evidence(), algo, n_samples=2, seed=5)
        assert all(isinstance(o, LocalOptOutput) for o in bundle.outputs)
        # 1 initial, 4 first-generation mutants, then ceil(0.33*4)=2 per generation
        assert all(len(p) == 1 + 4 + 2 + 2 for p in bundle.paths)

    def test_rejects_zero_samples(self):
        model = make_model()
        algo = TopKAlgorithm(X_SMALL, k=1)
        with pytest.raises(ConfigError, match="posterior sample"):
            draw_bundle(model, Evidence(), algo, n_samples=0, seed=0)


class TestOptimizeAcquisition:
    def test_single_candidate(self):
        assert optimize_acquisition([3.2]) == 0

    def test_all_equal_picks_first(self):
        assert optimize_acquisition([1.0, 1.0, 1.0]) == 0

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            vals = rng.normal(size=40)
            want = max(range(40), key=lambda i: (vals[i], -i))
            assert optimize_acquisition(vals) == want

    def test_nan_raises(self):
        with pytest.raises(NumericalError, match="NaN"):
            optimize_acquisition([0.1, float("nan"), 0.3])

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="at least one"):
            optimize_acquisition([])


def localopt_outputs(coords):
    return [LocalOptOutput(np.array([c], dtype=float), float(c)) for c in coords]


class TestEstimateOutput:
    def test_single_output(self):
        outs = localopt_outputs([0.4])
        bundle = _bundle_of(outs)
        got = estimate_output(bundle, distance_for_outputs(outs))
        assert got is outs[0]

    def test_duplicate_wins(self):
        outs = localopt_outputs([1.0, 1.0, 5.0])
        bundle = _bundle_of(outs)
        got = estimate_output(bundle, distance_for_outputs(outs))
        assert float(got.x_star[0]) == 1.0

    def test_matches_exhaustive_medoid(self):
        rng = np.random.default_rng(13)
        outs = localopt_outputs(rng.uniform(-3, 3, size=9))
        bundle = _bundle_of(outs)
        distance = distance_for_outputs(outs)
        D = distance.pairwise(outs)
        want = medoid_index(D.tolist())
        assert estimate_output(bundle, distance) is outs[want]


def _bundle_of(outputs):
    from bax.acquisition import SampleBundle, SampleDraw
    from bax.algorithms import ExecutionPath

    draws = [
        SampleDraw(i, ExecutionPath([(np.atleast_1d(o.x_star), o.f_star)]), o)
        for i, o in enumerate(outputs)
    ]
    return SampleBundle(draws)


class TestRefineLocalOptimum:
    def test_finds_posterior_mean_minimum(self):
        true = lambda x: (x - 0.3) ** 2
        xs = np.linspace(-1, 1, 25)
        data = noisy_evidence([(x, true(x)) for x in xs])
        model = make_model(lengthscale=0.5, noise_variance=1e-6)
        domain = np.array([[-1.0, 1.0]])
        out = refine_local_optimum(
            model, data, domain, ESConfig(population=8, generations=25), seed=3
        )
        assert abs(float(out.x_star[0]) - 0.3) < 0.1

    def test_deterministic(self):
        data = noisy_evidence([(0.0, 1.0), (0.5, -0.2)])
        model = make_model()
        domain = np.array([[-1.0, 1.0]])
        cfg = ESConfig(population=4, generations=5)
        a = refine_local_optimum(model, data, domain, cfg, seed=8)
        b = refine_local_optimum(model, data, domain, cfg, seed=8)
        assert np.array_equal(a.x_star, b.x_star) and a.f_star == b.f_star


def topk_problem(fn=None):
    fn = fn or (lambda x: float(np.sin(1.3 * x[0])))
    true_f = CountingFn(fn)
    problem = Problem("toy-topk", true_f, domain=np.array([[-2.0, 2.0]]))
    algorithm = TopKAlgorithm(X_SMALL, k=2)
    return problem, algorithm, true_f


class TestRunInfobax:
    def test_random_single_iteration(self):
        problem, algorithm, counter = topk_problem()
        config = BaxConfig(
            budget=1,
            candidate_source=UniformRandom(np.array([[-2.0, 2.0]]), count=10),
            num_posterior_samples=2,
            acquisition="Random",
            seed=4,
        )
        record = run_infobax(config, make_model(), problem, algorithm)
        assert len(record.entries) == 1
        assert counter.calls == 1
        assert not record.aborted
        assert -2.0 <= float(record.entries[0].x[0]) <= 2.0

    def test_budget_compliance_with_init(self):
        problem, algorithm, counter = topk_problem()
        config = BaxConfig(
            budget=4,
            candidate_source=FixedSet(X_SMALL),
            num_posterior_samples=3,
            acquisition="EIGv",
            seed=0,
            n_init=2,
        )
        record = run_infobax(config, make_model(), problem, algorithm)
        # posterior-sample queries must never touch the true function
        assert counter.calls == 4 + 2
        assert len(record.entries) == 4
        assert len(record.final_outputs) == 3
        assert isinstance(record.final_estimate, TopKOutput)

    def test_queries_stay_in_domain(self):
        problem, algorithm, _ = topk_problem()
        config = BaxConfig(
            budget=5,
            candidate_source=UniformRandom(np.array([[-2.0, 2.0]]), count=25),
            num_posterior_samples=2,
            acquisition="Variance",
            seed=11,
        )
        record = run_infobax(config, make_model(), problem, algorithm)
        for entry in record.entries:
            assert -2.0 <= float(entry.x[0]) <= 2.0

    def test_empty_data_variance_ties_break_low(self):
        problem, algorithm, _ = topk_problem()
        config = BaxConfig(
            budget=1,
            candidate_source=FixedSet(X_SMALL),
            num_posterior_samples=2,
            acquisition="Variance",
            seed=3,
        )
        record = run_infobax(config, make_model(), problem, algorithm)
        entry = record.entries[0]
        assert entry.acquisition_summary["chosen_index"] == 0
        assert np.array_equal(entry.x, X_SMALL[0])

    def test_identical_seeds_replay_identically(self):
        def run_once():
            problem, algorithm, _ = topk_problem()
            config = BaxConfig(
                budget=4,
                candidate_source=UniformRandom(np.array([[-2.0, 2.0]]), count=30),
                num_posterior_samples=3,
                acquisition="EIGv",
                seed=21,
            )
            return run_infobax(config, make_model(), problem, algorithm)

        a, b = run_once(), run_once()
        assert a.config == b.config
        for ea, eb in zip(a.entries, b.entries):
            assert np.array_equal(ea.x, eb.x)
            assert ea.y == eb.y
            assert ea.acquisition_summary == eb.acquisition_summary
        assert np.array_equal(
            np.stack(a.final_estimate.elements), np.stack(b.final_estimate.elements)
        )

    def test_snapshot_is_complete_enough_to_replay(self):
        problem, algorithm, _ = topk_problem()
        config = BaxConfig(
            budget=3,
            candidate_source=UniformRandom(np.array([[-2.0, 2.0]]), count=15),
            num_posterior_samples=2,
            acquisition="EIGe",
            seed=17,
        )
        model = make_model(lengthscale=0.9, signal_variance=1.3)
        first = run_infobax(config, model, problem, algorithm)

        snap = first.config
        rebuilt_model = GPModel(
            KernelSpec(
                snap["model"]["kernel"]["kind"],
                snap["model"]["kernel"]["lengthscale"],
                snap["model"]["kernel"]["signal_variance"],
            ),
            snap["model"]["noise_variance"],
            snap["model"]["prior_mean"],
        )
        rebuilt_config = BaxConfig(
            budget=snap["budget"],
            candidate_source=UniformRandom(
                np.array(snap["candidate_source"]["domain"]),
                snap["candidate_source"]["count"],
            ),
            num_posterior_samples=snap["num_posterior_samples"],
            acquisition=snap["acquisition"],
            seed=snap["seed"],
            n_init=snap["n_init"],
        )
        problem2, algorithm2, _ = topk_problem()
        second = run_infobax(rebuilt_config, rebuilt_model, problem2, algorithm2)
        for ea, eb in zip(first.entries, second.entries):
            assert np.array_equal(ea.x, eb.x)
            assert ea.y == eb.y

    def test_dataset_grows_one_per_iteration(self):
        problem, algorithm, counter = topk_problem()
        seen = []
        original = problem.true_f

        def spy(x):
            seen.append(np.array(x, copy=True))
            return original(x)

        problem.true_f = spy
        config = BaxConfig(
            budget=3,
            candidate_source=FixedSet(X_SMALL),
            num_posterior_samples=2,
            acquisition="EIGv",
            seed=6,
        )
        record = run_infobax(config, make_model(), problem, algorithm)
        assert len(seen) == 3
        for entry, x in zip(record.entries, seen):
            assert np.array_equal(entry.x, x)

    def test_failure_aborts_with_partial_record(self):
        calls = {"n": 0}

        def flaky(x):
            calls["n"] += 1
            if calls["n"] >= 3:
                raise RuntimeError("sensor offline")
            return float(x[0])

        problem = Problem("flaky", flaky, domain=np.array([[-2.0, 2.0]]))
        algorithm = TopKAlgorithm(X_SMALL, k=2)
        config = BaxConfig(
            budget=6,
            candidate_source=FixedSet(X_SMALL),
            num_posterior_samples=2,
            acquisition="Random",
            seed=1,
        )
        with pytest.raises(RunAborted) as info:
            run_infobax(config, make_model(), problem, algorithm)
        record = info.value.record
        assert record.aborted
        assert "sensor offline" in record.failure
        assert len(record.entries) == 2

    def test_es_problem_end_to_end(self):
        true_f = CountingFn(lambda x: float((x[0] - 0.2) ** 2))
        domain = np.array([[-1.0, 1.0]])
        problem = Problem("toy-es", true_f, domain=domain)
        algorithm = LocalOptAlgorithm(domain, ESConfig(population=3, generations=2))
        config = BaxConfig(
            budget=3,
            candidate_source=UniformRandom(domain, count=20),
            num_posterior_samples=2,
            acquisition="EIGv",
            seed=2,
        )
        record = run_infobax(config, make_model(), problem, algorithm)
        assert true_f.calls == 3
        assert isinstance(record.final_estimate, LocalOptOutput)
        assert len(record.entries[0].sampled_outputs) == 2


class TestConfigValidation:
    def test_bad_budget(self):
        with pytest.raises(ConfigError, match="budget"):
            BaxConfig(budget=0, candidate_source=FixedSet(X_SMALL))

    def test_bad_acquisition(self):
        with pytest.raises(ConfigError, match="acquisition"):
            BaxConfig(budget=1, candidate_source=FixedSet(X_SMALL), acquisition="EI")

    def test_bad_candidate_count(self):
        with pytest.raises(ConfigError, match="count"):
            UniformRandom(np.array([[0.0, 1.0]]), count=0)

    def test_bad_domain(self):
        with pytest.raises(ConfigError, match="upper > lower"):
            UniformRandom(np.array([[1.0, 0.0]]))

    def test_empty_fixed_set(self):
        with pytest.raises(ConfigError, match="empty"):
            FixedSet(np.empty((0, 2)))

    def test_negative_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            BaxConfig(budget=1, candidate_source=FixedSet(X_SMALL), seed=-1)
