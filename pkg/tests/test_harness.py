"""Tests for the trial runner, metrics, ECDF aggregation, and CSV output."""

import numpy as np
import pytest

from lracma.harness import (
    EcdfSpec,
    History,
    TERM_BUDGET,
    TERM_NUMERICAL,
    TERM_TARGET,
    TrialConfig,
    TrialResult,
    derive_trial_seed,
    ecdf,
    ecdf_from_results,
    run_suite,
    run_trial,
    sp1,
    success_rate,
    summarize,
    write_history_csv,
    write_results_csv,
    write_summary_csv,
)
from lracma.problems import make_problem


def synthetic_result(success, evals):
    return TrialResult(
        success=success,
        evals_to_target=evals if success else None,
        evals=evals,
        termination=TERM_TARGET if success else TERM_BUDGET,
        reason="",
        best_noiseless_fm=0.0,
        history=History(),
    )


class TestRunTrial:
    def test_initial_mean_already_below_target(self):
        cfg = TrialConfig(
            problem=make_problem("sphere", 10), target_f=1e6, max_evals=1000, seed=0
        )
        res = run_trial(cfg)
        assert res.success and res.evals_to_target == 0
        assert res.termination == TERM_TARGET
        assert len(res.history) == 1

    def test_single_generation_budget_exhausts(self):
        problem = make_problem("rastrigin", 10)
        cfg = TrialConfig(problem=problem, max_evals=10, target_f=1e-8, seed=0)
        res = run_trial(cfg)
        assert res.termination == TERM_BUDGET
        assert not res.success and res.evals_to_target is None
        assert res.evals == 10

    def test_lra_solves_sphere_within_budget(self):
        cfg = TrialConfig(
            problem=make_problem("sphere", 10),
            optimizer="lra",
            max_evals=10**6,
            target_f=1e-8,
            seed=1,
        )
        res = run_trial(cfg)
        assert res.success
        assert res.evals_to_target == res.evals
        assert res.evals_to_target % 10 == 0

    def test_fixed_default_eta_hits_numerical_stop_on_rastrigin(self):
        cfg = TrialConfig(
            problem=make_problem("rastrigin", 5),
            optimizer="fixed",
            eta_m=1.0,
            eta_sigma=1.0,
            max_evals=10**7,
            target_f=1e-8,
            seed=0,
        )
        res = run_trial(cfg)
        assert res.termination == TERM_NUMERICAL
        assert res.reason in ("sigma_collapse", "covariance_degenerate", "nonpositive_determinant")
        assert res.best_noiseless_fm > 1e-8

    def test_history_structure(self):
        cfg = TrialConfig(
            problem=make_problem("sphere", 5),
            max_evals=500,
            target_f=1e-12,
            seed=3,
        )
        res = run_trial(cfg)
        h = res.history
        lam = 8  # 4 + floor(3 ln 5)
        assert np.array_equal(h.column("evals"), lam * h.column("t"))
        evals, best = h.best_so_far()
        assert np.all(np.diff(best) <= 0)
        assert np.all(h.column("sigma") > 0)

    def test_history_thinning_keeps_first_and_last(self):
        cfg = TrialConfig(
            problem=make_problem("sphere", 5),
            max_evals=700,
            target_f=1e-12,
            seed=3,
            history_every=10,
        )
        res = run_trial(cfg)
        ts = res.history.column("t")
        assert ts[0] == 0
        assert len(ts) < 700 // 7
        full = run_trial(
            TrialConfig(
                problem=make_problem("sphere", 5),
                max_evals=700,
                target_f=1e-12,
                seed=3,
            )
        )
        assert res.termination == full.termination

    def test_determinism(self):
        cfg = TrialConfig(
            problem=make_problem("rastrigin", 5, noise_variance=1.0),
            max_evals=2000,
            target_f=1e-8,
            seed=123,
        )
        a, b = run_trial(cfg), run_trial(cfg)
        assert np.array_equal(a.history.data, b.history.data, equal_nan=True)
        assert a.best_noiseless_fm == b.best_noiseless_fm
        assert a.termination == b.termination

    def test_validation(self):
        problem = make_problem("sphere", 10)
        with pytest.raises(ValueError):
            TrialConfig(problem=problem, optimizer="nosuch")
        with pytest.raises(ValueError):
            TrialConfig(problem=problem, target_f=0.0)
        with pytest.raises(ValueError):
            run_trial(TrialConfig(problem=problem, max_evals=5))  # below lambda

    def test_overflowing_objective_is_a_numerical_stop(self):
        # an objective that overflows to inf ends the trial, not the suite
        import dataclasses

        problem = make_problem("sphere", 4)

        def overflowing(x):
            with np.errstate(over="ignore"):
                return np.exp(np.sum(x**2, axis=-1)) * 1e300

        blowup = dataclasses.replace(problem, fn=overflowing)
        cfg = TrialConfig(problem=blowup, max_evals=10_000, target_f=1e-8, seed=0)
        res = run_trial(cfg)
        assert res.termination == TERM_NUMERICAL
        assert res.reason in ("nonfinite_fitness", "nonfinite_state")


class TestMetrics:
    def test_success_rate_extremes(self):
        assert success_rate([synthetic_result(True, 10)] * 4) == 1.0
        assert success_rate([synthetic_result(False, 10)] * 4) == 0.0
        mixed = [synthetic_result(i < 15, 100) for i in range(30)]
        assert success_rate(mixed) == 0.5

    def test_success_rate_empty(self):
        with pytest.raises(ValueError):
            success_rate([])

    def test_sp1_full_success(self):
        results = [synthetic_result(True, 1000)] * 5
        assert sp1(results) == 1000

    def test_sp1_penalizes_failures(self):
        results = [synthetic_result(True, 1000)] * 5 + [synthetic_result(False, 9999)] * 5
        assert sp1(results) == 2000

    def test_sp1_no_successes_is_undefined(self):
        assert sp1([synthetic_result(False, 10)] * 3) is None

    def test_sp1_lower_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            results = [
                synthetic_result(bool(rng.integers(0, 2)), int(rng.integers(1, 10_000)))
                for _ in range(n)
            ]
            value = sp1(results)
            successes = [r.evals_to_target for r in results if r.success]
            if not successes:
                assert value is None
            else:
                mean_evals = np.mean(successes)
                assert value >= mean_evals - 1e-9
                if len(successes) == n:
                    assert value == pytest.approx(mean_evals)


class TestEcdf:
    def test_target_grid(self):
        spec = EcdfSpec()
        t = spec.targets
        assert len(t) == 30
        assert t[0] == 1e6
        assert t[-1] == pytest.approx(1e-3, rel=1e-12)
        assert np.all(np.diff(t) < 0)

    def test_no_target_reached(self):
        spec = EcdfSpec(n_targets=30, n_trials=1)
        curve = ecdf([(np.array([0.0, 10.0]), np.array([1e9, 2e6]))], spec)
        assert curve.evals.size == 0
        assert curve.value_at(1e12) == 0.0

    def test_all_targets_hit_from_the_start(self):
        spec = EcdfSpec(n_targets=30, n_trials=1)
        curve = ecdf([(np.array([0.0, 10.0]), np.array([1e-4, 1e-5]))], spec)
        assert curve.value_at(0) == 1.0

    def test_half_of_targets_hit(self):
        spec = EcdfSpec(n_targets=30, n_trials=1)
        final = spec.targets[14]  # reaches targets 1..15 exactly
        history = (np.array([0.0, 50.0]), np.array([1e9, final]))
        curve = ecdf([history], spec)
        assert curve.value_at(49) == 0.0
        assert curve.value_at(50) == 0.5
        assert curve.value_at(1e9) == 0.5

    def test_curve_is_nondecreasing_and_bounded(self):
        rng = np.random.default_rng(8)
        histories = []
        for _ in range(5):
            n = 40
            evals = np.arange(n) * 10.0
            best = np.minimum.accumulate(10.0 ** rng.uniform(-4, 7, n))
            histories.append((evals, best))
        curve = ecdf(histories, EcdfSpec(n_targets=30, n_trials=5))
        assert np.all(np.diff(curve.fraction) >= 0)
        assert np.all((curve.fraction >= 0) & (curve.fraction <= 1))

    def test_rejects_increasing_series(self):
        spec = EcdfSpec(n_targets=5, n_trials=1)
        with pytest.raises(ValueError):
            ecdf([(np.array([0.0, 1.0]), np.array([1.0, 2.0]))], spec)


class TestSuite:
    def small_grid(self, trials=3):
        problem = make_problem("sphere", 5)
        return [
            TrialConfig(
                problem=problem,
                optimizer="lra",
                max_evals=20_000,
                target_f=1e-6,
                seed=derive_trial_seed(1, "sphere", 5, 0.0, "lra", k),
            )
            for k in range(trials)
        ]

    def test_single_config(self):
        results = run_suite(self.small_grid(trials=1))
        assert len(results) == 1 and results[0].success

    def test_seed_derivation_is_stable(self):
        # frozen value: the documented scheme must never drift
        assert derive_trial_seed(1, "sphere", 10, 0.0, "lra", 0) == 2641197679543387175
        assert derive_trial_seed(1, "sphere", 10, 0.0, "lra", 1) != derive_trial_seed(
            1, "sphere", 10, 0.0, "lra", 0
        )

    def test_summarize_groups(self):
        configs = self.small_grid()
        results = run_suite(configs)
        rows = summarize(configs, results)
        assert len(rows) == 1
        row = rows[0]
        assert row["problem"] == "sphere" and row["n_trials"] == 3
        assert row["success_rate"] == 1.0
        assert row["sp1"] is not None

    def test_csv_outputs_are_deterministic(self, tmp_path):
        configs = self.small_grid()
        results = run_suite(configs)
        paths = []
        for tag in ("a", "b"):
            base = tmp_path / tag
            base.mkdir()
            write_results_csv(base / "results.csv", configs, results)
            write_summary_csv(base / "summary.csv", summarize(configs, results))
            write_history_csv(base / "history.csv", results[0].history)
            paths.append(base)
        for name in ("results.csv", "summary.csv", "history.csv"):
            assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()

    def test_rerun_produces_identical_results(self, tmp_path):
        configs = self.small_grid()
        first = run_suite(configs)
        second = run_suite(configs)
        for a, b in zip(first, second):
            assert np.array_equal(a.history.data, b.history.data, equal_nan=True)

    def test_worker_pool_matches_serial_execution(self):
        configs = self.small_grid()
        serial = run_suite(configs, jobs=1)
        parallel = run_suite(configs, jobs=2)
        for a, b in zip(serial, parallel):
            assert a.termination == b.termination
            assert np.array_equal(a.history.data, b.history.data, equal_nan=True)

    def test_results_csv_schema(self, tmp_path):
        configs = self.small_grid(trials=2)
        results = run_suite(configs)
        path = tmp_path / "results.csv"
        write_results_csv(path, configs, results)
        lines = path.read_text().splitlines()
        assert lines[0] == (
            "problem,d,optimizer,eta_m,eta_sigma,noise_variance,seed,success,evals,termination"
        )
        assert len(lines) == 3
        assert lines[1].startswith("sphere,5,lra,,,0.0,")

    def test_history_csv_schema(self, tmp_path):
        res = run_suite(self.small_grid(trials=1))[0]
        path = tmp_path / "history.csv"
        write_history_csv(path, res.history)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,evals,f_m,sigma,eta_m,eta_sigma,snr_m,snr_sigma,eig_min,eig_max"
        assert len(lines) == len(res.history) + 1

    def test_ecdf_from_results(self):
        results = run_suite(self.small_grid())
        spec = EcdfSpec(n_targets=10, n_trials=3)
        curve = ecdf_from_results(results, spec)
        assert curve.n_pairs == 30
        assert curve.value_at(20_000) > 0
