import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sstats

from namegame.analysis import (
    DecisionRecord,
    MODEL_ORDER,
    SessionData,
    empirical_cdf_value,
    fit_affine_bernoulli,
    format_p_value,
    group_by_participant,
    infer_decisions,
    mann_whitney_u,
    pairwise_model_tests,
    precision,
    randomization_test,
    records_from_trials,
    simulate_model_decisions,
    fit_report_rows,
    acceptance_rate_bins,
    _grad_hess_batch,
)
from namegame.engine import Binary, Constant, MH, TrialRecord
from namegame.model import default_hyperparams

from _oracles import fd_gradient, grid_fit_affine


def make_records(r, z, participant="p", dataset="d"):
    return [
        DecisionRecord(participant, i, float(ri), float(ri), 1.0, int(zi), dataset)
        for i, (ri, zi) in enumerate(zip(r, z))
    ]


class TestFitAffineBernoulli:
    def test_all_accept_boundary(self):
        rng = np.random.default_rng(0)
        r = rng.random(200)
        z = np.ones(200)
        fit = fit_affine_bernoulli(make_records(r, z))
        ga, gb, gll = grid_fit_affine(r, z)
        assert (ga, gb) == (0.0, 1.0)  # the oracle's stated optimum
        assert fit.log_likelihood >= gll - 1e-6
        assert fit.boundary

    def test_consistency_large_sample(self):
        rng = np.random.default_rng(1)
        r = rng.random(100_000)
        z = (rng.random(100_000) < r).astype(int)
        fit = fit_affine_bernoulli(make_records(r, z), restarts=5)
        assert abs(fit.a - 1.0) <= 0.03
        assert abs(fit.b - 0.0) <= 0.03

    def test_pooled_fixture_recovery(self):
        a_true, b_true = 0.5105, 0.4842
        rng = np.random.default_rng(2)
        r = np.concatenate([rng.random(600), np.zeros(600), np.ones(600)])
        z = (rng.random(1800) < a_true * r + b_true).astype(int)
        fit = fit_affine_bernoulli(make_records(r, z))
        assert abs(fit.a - a_true) <= 0.05
        assert abs(fit.b - b_true) <= 0.05

    def test_degenerate_data_flagged(self):
        records = make_records(np.full(50, 0.7), np.ones(50))
        fit = fit_affine_bernoulli(records)
        assert fit.degenerate
        assert fit.boundary

    def test_no_records_rejected(self):
        with pytest.raises(ValueError):
            fit_affine_bernoulli([])

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_constraints_always_satisfied(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 60))
        r = rng.random(n)
        z = rng.integers(0, 2, n)
        fit = fit_affine_bernoulli(make_records(r, z), restarts=4)
        assert fit.b >= -1e-9
        assert fit.a + fit.b <= 1 + 1e-9

    def test_interior_gradient_norm(self):
        rng = np.random.default_rng(3)
        for trial in range(5):
            r = rng.random(300)
            z = (rng.random(300) < 0.4 * r + 0.3).astype(int)
            fit = fit_affine_bernoulli(make_records(r, z))
            if fit.boundary:
                continue
            g_a, g_b, *_ = _grad_hess_batch(
                np.array([[fit.a, fit.b]]), r, z[None, :].astype(float)
            )
            assert np.hypot(g_a[0], g_b[0]) < 1e-6
            fd = fd_gradient(fit.a, fit.b, r, z)
            assert np.allclose([g_a[0], g_b[0]], fd, atol=1e-4)

    def test_boundary_projected_gradient(self):
        # all-accept puts the optimum on the a + b = 1 facet
        rng = np.random.default_rng(4)
        r = rng.random(200)
        z = np.ones(200)
        fit = fit_affine_bernoulli(make_records(r, z))
        g = fd_gradient(fit.a, fit.b, r, z, step=1e-6)
        # feasible directions keep b >= 0 and a + b <= 1
        directions = []
        if fit.a + fit.b >= 1 - 1e-9:
            directions += [(-1, 0), (0, -1), (-1, 1), (1, -1)]
        if fit.b <= 1e-9:
            directions += [(1, 0), (-1, 0), (0, 1)]
        for d in directions:
            d = np.array(d, dtype=float)
            d /= np.linalg.norm(d)
            if fit.b + 1e-6 * d[1] < -1e-12 or fit.a + fit.b + 1e-6 * d.sum() > 1 + 1e-12:
                continue
            assert g @ d <= 1e-3

    def test_grid_oracle_equivalence(self):
        rng = np.random.default_rng(5)
        for trial in range(5):
            r = rng.random(200)
            a_true = rng.uniform(-0.3, 0.85)
            b_true = rng.uniform(max(0.05, 0.05 - a_true), min(0.9, 0.95 - a_true))
            z = (rng.random(200) < np.clip(a_true * r + b_true, 0, 1)).astype(int)
            fit = fit_affine_bernoulli(make_records(r, z))
            ga, gb, gll = grid_fit_affine(r, z)
            assert fit.log_likelihood >= gll - 1e-6
            interior = fit.b > 1e-6 and fit.a + fit.b < 1 - 1e-6
            if interior and -0.99 < fit.a < 0.99:
                assert abs(fit.a - ga) <= 0.01
                assert abs(fit.b - gb) <= 0.01


class TestEmpiricalCdf:
    def test_fraction_at_or_above(self):
        assert empirical_cdf_value([1, 2, 3], 2) == pytest.approx(2 / 3)

    def test_below_min_is_one(self):
        assert empirical_cdf_value([1, 2, 3], 0.5) == 1.0

    def test_above_max_is_zero(self):
        assert empirical_cdf_value([1, 2, 3], 3.5) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_cdf_value([], 1.0)

    @given(
        st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=40),
        st.floats(min_value=-11, max_value=11),
        st.floats(min_value=0, max_value=2),
    )
    @settings(max_examples=50, deadline=None)
    def test_monotone_non_increasing(self, samples, x, delta):
        assert empirical_cdf_value(samples, x) >= empirical_cdf_value(samples, x + delta)


class TestFormatPValue:
    def test_zero_reported_as_bound(self):
        assert format_p_value(0.0, 1000) == "< 0.001"

    def test_nonzero_passthrough(self):
        assert format_p_value(0.042, 1000) == "0.042"


class TestRandomizationTest:
    def _records(self, seed=0, n=600, a=0.6, b=0.3):
        rng = np.random.default_rng(seed)
        r = np.concatenate([rng.random(n // 3), np.zeros(n // 3), np.ones(n // 3)])
        z = (rng.random(len(r)) < a * r + b).astype(int)
        return make_records(r, z)

    def test_pure_function_of_seed(self):
        records = self._records()
        r1 = randomization_test(records, replicates=120, seed=9)
        r2 = randomization_test(records, replicates=120, seed=9)
        assert r1.p_a == r2.p_a
        assert np.array_equal(r1.null_a_samples, r2.null_a_samples)

    def test_replicate_warning(self):
        with pytest.warns(UserWarning):
            randomization_test(self._records(), replicates=50, seed=0)

    def test_power_against_mh_behavior(self):
        rng = np.random.default_rng(11)
        r = np.concatenate([rng.random(600), np.zeros(600), np.ones(600)])
        z = (rng.random(1800) < r).astype(int)  # pure acceptance-probability behavior
        report = randomization_test(make_records(r, z), replicates=300, seed=0)
        assert report.reject_a
        assert report.p_a <= 0.001

    def test_null_sample_lengths(self):
        report = randomization_test(self._records(), replicates=150, seed=1)
        assert len(report.null_a_samples) == 150
        assert len(report.null_b_samples) == 150

    def test_zero_p_displayable(self):
        report = randomization_test(self._records(seed=3, n=1200), replicates=200, seed=2)
        if report.p_a == 0.0:
            assert format_p_value(report.p_a, report.replicates) == "< 0.005"

    def test_null_single_start_matches_multi(self):
        # the null refits are concave; one start suffices and must agree
        records = self._records(seed=5)
        r1 = randomization_test(records, replicates=100, seed=4, null_restarts=1)
        r3 = randomization_test(records, replicates=100, seed=4, null_restarts=3)
        assert np.allclose(r1.null_a_samples, r3.null_a_samples, atol=1e-6)


class TestSimulateModelDecisions:
    def test_mh_certain_acceptance(self):
        records = make_records(np.ones(30), np.ones(30))
        sims = simulate_model_decisions(records, MH(), replicates=20, seed=0)
        assert np.all(sims == 1)

    def test_binary_low_rate(self):
        records = make_records(np.full(100, 0.3), np.zeros(100))
        sims = simulate_model_decisions(records, Binary(), replicates=100, seed=1)
        assert abs(sims.mean() - 0.1) <= 0.02  # 10^4 draws

    def test_deterministic(self):
        records = make_records(np.linspace(0, 1, 50), np.zeros(50))
        a = simulate_model_decisions(records, MH(), replicates=10, seed=3)
        b = simulate_model_decisions(records, MH(), replicates=10, seed=3)
        assert np.array_equal(a, b)

    def test_constant_resolves_own_rate(self):
        rng = np.random.default_rng(0)
        z = rng.integers(0, 2, 400)
        records = make_records(rng.random(400), z)
        sims = simulate_model_decisions(records, Constant(None), replicates=200, seed=5)
        assert abs(sims.mean() - z.mean()) < 0.05


class TestPrecision:
    def test_two_thirds(self):
        assert precision([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)

    def test_identical(self):
        assert precision([1, 0, 0, 1], [1, 0, 0, 1]) == 1.0

    def test_complementary(self):
        assert precision([1, 0, 1], [0, 1, 0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            precision([1, 0], [1, 0, 1])

    @given(st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=50))
    @settings(max_examples=30, deadline=None)
    def test_symmetric(self, bits):
        other = [1 - b for b in bits]
        assert precision(bits, other) == precision(other, bits)


class TestMannWhitneyU:
    def test_identical_samples_near_half(self):
        rng = np.random.default_rng(0)
        x = rng.random(100)
        assert abs(mann_whitney_u(x, x, "greater") - 0.5) <= 0.02

    def test_complete_separation(self):
        assert mann_whitney_u(np.ones(100), np.zeros(100), "greater") < 1e-10

    def test_matches_scipy_reference(self):
        rng = np.random.default_rng(1)
        for trial in range(8):
            x = rng.normal(0.2 * trial, 1.0, 100)
            y = rng.normal(0.0, 1.0, 100)
            if trial % 2:  # inject ties
                x = np.round(x, 1)
                y = np.round(y, 1)
            mine = mann_whitney_u(x, y, "greater")
            ref = sstats.mannwhitneyu(x, y, alternative="greater", method="asymptotic").pvalue
            assert mine == pytest.approx(ref, abs=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mann_whitney_u([], [1.0])


class TestPairwiseModelTests:
    def _mh_records(self, seed, n=180):
        rng = np.random.default_rng(seed)
        out = {}
        for j in range(4):
            num = rng.random(n)
            den = np.clip(num + rng.uniform(-0.3, 0.3, n), 1e-3, 1)
            r = np.minimum(1.0, num / den)
            z = (rng.random(n) < r).astype(int)
            out[f"p{j}"] = [
                DecisionRecord(f"p{j}", i, float(r[i]), float(num[i]), float(den[i]), int(z[i]))
                for i in range(n)
            ]
        return out

    def test_shapes_and_diagonal(self):
        report = pairwise_model_tests(self._mh_records(0), seed=0, replicates=40)
        assert report.pooled_p.shape == (5, 5)
        assert np.all(np.isnan(np.diag(report.pooled_p)))
        assert set(report.precision_samples) == set(MODEL_ORDER)
        for m in MODEL_ORDER:
            for pid, samples in report.precision_samples[m].items():
                assert len(samples) == 40
                assert np.all((samples >= 0) & (samples <= 1))

    def test_one_sided_complementarity(self):
        report = pairwise_model_tests(self._mh_records(1), seed=1, replicates=60)
        p = report.pooled_p
        for i in range(5):
            for j in range(5):
                if i != j and p[i, j] < 0.001:
                    assert p[j, i] > 0.5

    def test_mh_wins_on_mh_behavior(self):
        report = pairwise_model_tests(self._mh_records(2), seed=2, replicates=100)
        mh = MODEL_ORDER.index("mh")
        for j in range(5):
            if j != mh:
                assert report.pooled_p[mh, j] < 0.01


class TestInferDecisions:
    def test_empty_session(self):
        session = SessionData(participants=(), data={}, trials=())
        result = infer_decisions(session, default_hyperparams())
        assert result.records == []
        assert result.skipped == 0

    def test_same_sign_gives_unit_ratio(self):
        hyper = default_hyperparams()
        n = 15
        rng = np.random.default_rng(0)
        snap = {
            "categories": rng.integers(0, 5, n),
            "signs": rng.integers(0, 5, n),
        }
        trial = TrialRecord(
            trial_index=0, round=1, dataset_id="d", stimulus_index=0,
            speaker_id="q", listener_id="p", speaker_sign=2, listener_sign=2,
            listener_category=1, r_mh=None, decision=1,
        )
        session = SessionData(("p", "q"), {}, (trial,), trial_states=({"categories": snap["categories"], "signs": snap["signs"]},))
        result = infer_decisions(session, hyper)
        assert result.records[0].r_mh == 1.0

    def test_missing_categorization_skipped_with_warning(self):
        hyper = default_hyperparams()
        trial = TrialRecord(
            trial_index=0, round=1, dataset_id="d", stimulus_index=0,
            speaker_id="q", listener_id="p", speaker_sign=2, listener_sign=1,
            listener_category=None, r_mh=None, decision=0,
        )
        session = SessionData(("p", "q"), {}, (trial,), trial_states=(None,))
        with pytest.warns(UserWarning):
            result = infer_decisions(session, hyper)
        assert result.skipped == 1
        assert result.records == []


class TestRecordPlumbing:
    def test_records_from_trials_requires_diagnostics(self):
        trial = TrialRecord(
            trial_index=0, round=1, dataset_id="d", stimulus_index=0,
            speaker_id="q", listener_id="p", speaker_sign=2, listener_sign=1,
            listener_category=0, r_mh=None, decision=0,
        )
        with pytest.raises(ValueError):
            records_from_trials([trial])

    def test_group_by_participant(self):
        records = make_records(np.linspace(0, 1, 4), [1, 0, 1, 0], participant="a")
        records += make_records(np.linspace(0, 1, 2), [1, 1], participant="b")
        grouped = group_by_participant(records)
        assert sorted(grouped) == ["a", "b"]
        assert len(grouped["a"]) == 4

    def test_fit_report_rows_include_pooled(self):
        rng = np.random.default_rng(0)
        records = []
        for pid in ("a", "b"):
            r = np.concatenate([np.zeros(40), np.ones(40)])
            z = (rng.random(80) < 0.5 * r + 0.4).astype(int)
            records += make_records(r, z, participant=pid)
        rows = fit_report_rows(records, replicates=100, seed=0)
        assert [row["participant"] for row in rows] == ["a", "b", "all"]
        assert all("p_a_display" in row for row in rows)

    def test_acceptance_rate_bins(self):
        records = make_records([0.05, 0.15, 0.95, 0.99], [0, 1, 1, 1])
        bins = acceptance_rate_bins(records, n_bins=10)
        assert len(bins) == 10
        assert sum(b["count"] for b in bins) == 4
        assert bins[-1]["accepted"] == 2

    def test_decision_record_validation(self):
        with pytest.raises(ValueError):
            DecisionRecord("p", 0, 1.5, 0.5, 0.5, 1)
        with pytest.raises(ValueError):
            DecisionRecord("p", 0, 0.5, 0.5, 0.5, 2)
