"""Spatial selection prior and truncated-distribution samplers."""

import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaincc, gammainccinv

import oracles
from cnvlink.model import RegressionHyper, ValidationError
from cnvlink.priors import (
    PersistenceWeights,
    column_site_probs,
    dirichlet_logpdf,
    gap_decay,
    log_assoc_prior,
    mixture_weights,
    persistence_weights,
    sample_truncated_gamma,
    sample_truncated_normal,
    site_inclusion_logprob,
    site_inclusion_prob,
    truncated_gamma_logpdf,
    truncated_normal_logpdf,
)


def make_hyper(**kw):
    base = dict(incl_a=0.001, incl_b=0.999, alpha=2.0)
    base.update(kw)
    return RegressionHyper(**base)


# ---------------- distance decay and adjacency scores ----------------


class TestGapDecay:
    def test_zero_gap_gives_exactly_one(self):
        # Exactly 1.0: anything above would be rejected downstream as an
        # adjacency score outside [0, 1].
        assert gap_decay(np.array([0.0]), 10.0)[0] == 1.0

    def test_zero_gap_full_persistence_feeds_mixture_weights(self):
        states = np.array([[2, 2], [3, 3]])
        s = persistence_weights(states, np.array([5.0, 5.0]), 10.0)
        w = mixture_weights(s, 1.0)
        assert np.all(w.fresh > 0)

    def test_full_fragment_gap_gives_zero(self):
        assert gap_decay(np.array([10.0]), 10.0)[0] == 0.0

    def test_strictly_decreasing_in_gap(self):
        gaps = np.linspace(0.0, 10.0, 25)
        vals = gap_decay(gaps, 10.0)
        assert np.all(np.diff(vals) < 0)
        assert np.all((vals >= 0) & (vals <= 1))

    def test_oversized_gap_rejected(self):
        with pytest.raises(ValidationError, match="gap 1 .* exceeds fragment_length"):
            gap_decay(np.array([1.0, 11.0]), 10.0)

    def test_negative_gap_rejected(self):
        with pytest.raises(ValidationError, match="gap 0 is negative"):
            gap_decay(np.array([-0.5]), 10.0)


class TestPersistenceWeights:
    def test_all_rows_persist_at_zero_gap(self):
        states = np.array([[2, 2, 2], [4, 4, 4], [1, 1, 1], [3, 3, 3]])
        s = persistence_weights(states, np.zeros(3), 10.0)
        assert np.allclose(s, 1.0, atol=1e-15)

    def test_half_the_rows_persist_at_zero_gap(self):
        states = np.array([[2, 2], [2, 2], [1, 3], [4, 2]])
        s = persistence_weights(states, np.zeros(2), 10.0)
        assert s[0] == pytest.approx(0.5, abs=1e-15)

    def test_persistence_times_decay(self):
        states = np.array([[2, 2], [1, 2], [3, 3], [4, 4]])
        pos = np.array([0.0, 5.0])
        s = persistence_weights(states, pos, 10.0)
        assert s[0] == pytest.approx(0.75 * gap_decay(np.array([5.0]), 10.0)[0], rel=1e-14)

    def test_matches_oracle(self):
        rng = np.random.default_rng(17)
        states = rng.integers(1, 5, size=(6, 8))
        pos = np.sort(rng.uniform(0, 40, size=8))
        got = persistence_weights(states, pos, 50.0)
        want = oracles.persistence_oracle(states, pos, 50.0)
        assert np.allclose(got, want, atol=1e-14)

    def test_position_shape_rejected(self):
        with pytest.raises(ValidationError, match=r"one coordinate per probe \(3\)"):
            persistence_weights(np.ones((2, 3), dtype=int), np.zeros(4), 10.0)


class TestMixtureWeights:
    def test_balanced_interior_column(self):
        w = mixture_weights(np.array([0.65, 0.65]), 1.3)
        assert w.fresh[1] == pytest.approx(0.5, rel=1e-14)
        assert w.copy_left[1] == pytest.approx(0.25, rel=1e-14)
        assert w.copy_right[1] == pytest.approx(0.25, rel=1e-14)

    def test_boundary_columns_draw_fresh(self):
        w = mixture_weights(np.array([0.9, 0.1]), 0.5)
        assert w.fresh[0] == 1.0 and w.copy_left[0] == 0.0 and w.copy_right[0] == 0.0
        assert w.fresh[2] == 1.0 and w.copy_left[2] == 0.0 and w.copy_right[2] == 0.0

    def test_infinite_coupling_scale_disables_copying(self):
        w = mixture_weights(np.array([0.9, 0.8, 0.7]), math.inf)
        assert np.all(w.fresh == 1.0)
        assert np.all(w.copy_left == 0.0)
        assert np.all(w.copy_right == 0.0)

    def test_two_probe_layout_has_no_interior(self):
        w = mixture_weights(np.array([0.9]), 0.01)
        assert np.all(w.fresh == 1.0)

    def test_weights_sum_to_one_per_column(self):
        rng = np.random.default_rng(3)
        s = rng.uniform(0, 1, size=9)
        w = mixture_weights(s, 0.7)
        assert np.allclose(w.fresh + w.copy_left + w.copy_right, 1.0, atol=1e-12)

    def test_fresh_weight_increases_with_alpha(self):
        s = np.array([0.6, 0.4, 0.8])
        lo = mixture_weights(s, 1.0)
        hi = mixture_weights(s, 3.0)
        assert np.all(hi.fresh[1:-1] > lo.fresh[1:-1])

    def test_matches_oracle(self):
        rng = np.random.default_rng(5)
        s = rng.uniform(0, 1, size=6)
        for alpha in (0.5, 2.0, math.inf):
            w = mixture_weights(s, alpha)
            fresh, copy_left, copy_right = oracles.site_weights_oracle(s, alpha, 7)
            assert np.allclose(w.fresh, fresh, atol=1e-14)
            assert np.allclose(w.copy_left, copy_left, atol=1e-14)
            assert np.allclose(w.copy_right, copy_right, atol=1e-14)

    def test_scores_outside_unit_interval_rejected(self):
        with pytest.raises(ValidationError, match=r"adjacency scores must lie in \[0, 1\]"):
            mixture_weights(np.array([0.5, 1.2]), 1.0)

    def test_matrix_scores_rejected(self):
        with pytest.raises(ValidationError, match="must be a vector"):
            mixture_weights(np.ones((2, 2)), 1.0)


class TestPersistenceWeightsContainer:
    def good_kwargs(self):
        return dict(
            adjacency=np.array([0.5, 0.5]),
            fresh=np.array([1.0, 0.5, 1.0]),
            copy_left=np.array([0.0, 0.25, 0.0]),
            copy_right=np.array([0.0, 0.25, 0.0]),
        )

    def test_wrong_adjacency_length_rejected(self):
        kw = self.good_kwargs()
        kw["adjacency"] = np.array([0.5, 0.5, 0.5])
        with pytest.raises(ValidationError, match=r"adjacency must have length 2, got \(3,\)"):
            PersistenceWeights(**kw)

    def test_column_sum_violation_rejected(self):
        kw = self.good_kwargs()
        kw["fresh"] = np.array([1.0, 0.6, 1.0])
        with pytest.raises(ValidationError, match="weights at column 1 sum to"):
            PersistenceWeights(**kw)

    def test_first_column_copy_left_rejected(self):
        kw = self.good_kwargs()
        kw["fresh"] = np.array([0.9, 0.5, 1.0])
        kw["copy_left"] = np.array([0.1, 0.25, 0.0])
        with pytest.raises(ValidationError, match="copy_left must vanish at the first column"):
            PersistenceWeights(**kw)

    def test_last_column_copy_right_rejected(self):
        kw = self.good_kwargs()
        kw["fresh"] = np.array([1.0, 0.5, 0.9])
        kw["copy_right"] = np.array([0.0, 0.25, 0.1])
        with pytest.raises(ValidationError, match="copy_right must vanish at the last column"):
            PersistenceWeights(**kw)

    def test_entries_outside_unit_interval_rejected(self):
        kw = self.good_kwargs()
        kw["adjacency"] = np.array([0.5, -0.1])
        with pytest.raises(ValidationError, match=r"adjacency entries must lie in \[0, 1\]"):
            PersistenceWeights(**kw)

    def test_arrays_frozen(self):
        w = PersistenceWeights(**self.good_kwargs())
        for arr in (w.adjacency, w.fresh, w.copy_left, w.copy_right):
            assert not arr.flags.writeable


# ---------------- one-site conditionals ----------------


class TestSiteInclusionProb:
    def test_fresh_only_inclusion(self):
        got = site_inclusion_logprob(1, None, None, 1.0, 0.0, 0.0, 0.001, 0.999)
        assert got == pytest.approx(math.log(0.001), rel=1e-12)

    def test_balanced_base_with_agreeing_neighbors(self):
        got = site_inclusion_logprob(1, 1, 1, 0.5, 0.25, 0.25, 1.0, 1.0)
        assert got == pytest.approx(math.log(0.75), rel=1e-14)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            raw = rng.uniform(0.05, 1.0, size=3)
            fresh, cl, cr = raw / raw.sum()
            left = int(rng.integers(0, 2))
            right = int(rng.integers(0, 2))
            a, b = rng.uniform(0.1, 5.0, size=2)
            total = site_inclusion_prob(0, left, right, fresh, cl, cr, a, b) + (
                site_inclusion_prob(1, left, right, fresh, cl, cr, a, b)
            )
            assert total == pytest.approx(1.0, rel=1e-12)

    def test_boundary_site_sums_to_one(self):
        total = site_inclusion_prob(0, None, 1, 0.6, 0.0, 0.4, 2.0, 3.0) + (
            site_inclusion_prob(1, None, 1, 0.6, 0.0, 0.4, 2.0, 3.0)
        )
        assert total == pytest.approx(1.0, rel=1e-14)

    def test_zero_probability_maps_to_minus_inf(self):
        got = site_inclusion_logprob(1, 0, 0, 0.0, 0.5, 0.5, 1.0, 1.0)
        assert got == float("-inf")

    def test_matches_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            raw = rng.uniform(0.05, 1.0, size=3)
            fresh, cl, cr = raw / raw.sum()
            r = int(rng.integers(0, 2))
            left = [None, 0, 1][rng.integers(0, 3)]
            right = [None, 0, 1][rng.integers(0, 3)]
            a, b = rng.uniform(0.1, 5.0, size=2)
            got = site_inclusion_prob(r, left, right, fresh, cl, cr, a, b)
            want = oracles.site_prob_oracle(r, left, right, fresh, cl, cr, a, b)
            assert got == pytest.approx(want, rel=1e-14)


class TestColumnSiteProbs:
    def test_matches_scalar_route_per_gene(self):
        rng = np.random.default_rng(14)
        assoc = rng.integers(0, 2, size=(5, 6))
        w = mixture_weights(rng.uniform(0, 1, size=5), 1.7)
        for m in range(6):
            got = column_site_probs(assoc, m, w, 0.3, 2.7)
            for g in range(5):
                left = int(assoc[g, m - 1]) if m > 0 else None
                right = int(assoc[g, m + 1]) if m < 5 else None
                want = site_inclusion_prob(
                    int(assoc[g, m]), left, right,
                    float(w.fresh[m]), float(w.copy_left[m]), float(w.copy_right[m]),
                    0.3, 2.7,
                )
                assert got[g] == pytest.approx(want, rel=1e-14)


class TestLogAssocPrior:
    def test_independent_prior_over_empty_matrix(self):
        hyper = make_hyper(alpha=math.inf)
        assoc = np.zeros((4, 6), dtype=np.int8)
        states = np.random.default_rng(0).integers(1, 5, size=(3, 6))
        pos = np.linspace(0, 20, 6)
        got = log_assoc_prior(assoc, states, pos, 30.0, hyper)
        assert got == pytest.approx(24 * math.log(0.999), rel=1e-12)

    def test_independent_prior_counts_ones(self):
        hyper = make_hyper(alpha=math.inf, incl_a=0.2, incl_b=0.8)
        assoc = np.zeros((2, 5), dtype=np.int8)
        assoc[0, 1] = assoc[1, 4] = 1
        states = np.ones((3, 5), dtype=np.int8)
        got = log_assoc_prior(assoc, states, np.arange(5.0), 10.0, hyper)
        assert got == pytest.approx(2 * math.log(0.2) + 8 * math.log(0.8), rel=1e-12)

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            n, g, m = 4, 3, 7
            assoc = rng.integers(0, 2, size=(g, m))
            states = rng.integers(1, 5, size=(n, m))
            pos = np.sort(rng.uniform(0, 25, size=m))
            hyper = make_hyper(alpha=float(rng.uniform(0.5, 4.0)))
            got = log_assoc_prior(assoc, states, pos, 40.0, hyper)
            want = oracles.assoc_logprior_oracle(
                assoc, states, pos, 40.0,
                incl_a=hyper.incl_a, incl_b=hyper.incl_b, alpha=hyper.alpha,
            )
            assert got == pytest.approx(want, rel=1e-12)

    def test_state_change_only_touches_adjacent_columns(self):
        rng = np.random.default_rng(16)
        n, g, m_total = 5, 4, 8
        assoc = rng.integers(0, 2, size=(g, m_total))
        states = rng.integers(1, 5, size=(n, m_total))
        pos = np.arange(m_total, dtype=float)
        changed = states.copy()
        changed[:, 4] = 1 + (states[:, 4] % 4)
        w_old = mixture_weights(persistence_weights(states, pos, 20.0), 1.5)
        w_new = mixture_weights(persistence_weights(changed, pos, 20.0), 1.5)
        for m in range(m_total):
            p_old = column_site_probs(assoc, m, w_old, 0.3, 1.7)
            p_new = column_site_probs(assoc, m, w_new, 0.3, 1.7)
            if m in (3, 4, 5):
                continue
            assert np.array_equal(p_old, p_new)

    def test_stronger_coupling_raises_prior_of_contiguous_runs(self):
        # A run of identical flags gains mass when neighbor copying gets
        # weight, relative to the same flags under the independent prior.
        assoc = np.zeros((1, 6), dtype=np.int8)
        assoc[0, 2:5] = 1
        states = np.tile(np.array([1, 1, 3, 3, 3, 2]), (4, 1))
        pos = np.arange(6.0)
        coupled = log_assoc_prior(assoc, states, pos, 20.0, make_hyper(alpha=0.5))
        independent = log_assoc_prior(assoc, states, pos, 20.0, make_hyper(alpha=math.inf))
        assert coupled > independent


# ---------------- truncated samplers ----------------


class TestTruncatedNormalSampler:
    def test_half_normal_mean(self):
        rng = np.random.default_rng(100)
        draws = np.array(
            [sample_truncated_normal(2.0, 1.5, 2.0, math.inf, rng) for _ in range(20_000)]
        )
        expected = 2.0 + 1.5 * math.sqrt(2.0 / math.pi)
        se = 1.5 * math.sqrt((1.0 - 2.0 / math.pi) / draws.size)
        assert abs(draws.mean() - expected) < 3 * se
        assert draws.min() > 2.0

    def test_tiny_interval_containment(self):
        rng = np.random.default_rng(101)
        lo, hi = 0.1, 0.100001
        draws = [sample_truncated_normal(0.0, 1.0, lo, hi, rng) for _ in range(500)]
        assert all(lo < d < hi for d in draws)

    def test_far_tail_moments(self):
        rng = np.random.default_rng(102)
        draws = np.array(
            [sample_truncated_normal(0.0, 1.0, 6.0, math.inf, rng) for _ in range(5_000)]
        )
        assert draws.min() > 6.0
        expected = stats.norm.pdf(6.0) / stats.norm.sf(6.0)
        var = 1.0 + 6.0 * expected - expected**2
        assert abs(draws.mean() - expected) < 3 * math.sqrt(var / draws.size)

    def test_distribution_matches_reference(self):
        rng = np.random.default_rng(103)
        mean, sd, lo, hi = 0.7, 1.3, -1.0, 2.0
        draws = np.array(
            [sample_truncated_normal(mean, sd, lo, hi, rng) for _ in range(4_000)]
        )
        a, b = (lo - mean) / sd, (hi - mean) / sd
        res = stats.kstest(draws, stats.truncnorm(a, b, loc=mean, scale=sd).cdf)
        assert res.pvalue > 1e-4

    def test_negative_interval_distribution(self):
        rng = np.random.default_rng(104)
        draws = np.array(
            [sample_truncated_normal(0.0, 1.0, -5.0, -0.5, rng) for _ in range(4_000)]
        )
        res = stats.kstest(draws, stats.truncnorm(-5.0, -0.5).cdf)
        assert res.pvalue > 1e-4

    def test_empty_interval_rejected(self):
        with pytest.raises(ValidationError, match="need low < high"):
            sample_truncated_normal(0.0, 1.0, 1.0, 1.0, np.random.default_rng(0))

    def test_massless_interval_rejected(self):
        with pytest.raises(ValidationError, match="degenerate truncation"):
            sample_truncated_normal(0.0, 1.0, 50.0, 51.0, np.random.default_rng(0))

    def test_bad_scale_rejected(self):
        with pytest.raises(ValidationError, match="sd must be positive"):
            sample_truncated_normal(0.0, 0.0, 0.0, 1.0, np.random.default_rng(0))

    def test_infinite_mean_rejected(self):
        with pytest.raises(ValidationError, match="mean must be finite"):
            sample_truncated_normal(math.inf, 1.0, 0.0, 1.0, np.random.default_rng(0))


class TestTruncatedGammaSampler:
    def test_zero_bound_is_plain_gamma(self):
        rng = np.random.default_rng(110)
        draws = np.array(
            [sample_truncated_gamma(3.0, 2.0, 0.0, rng) for _ in range(20_000)]
        )
        se = math.sqrt(3.0 / 4.0 / draws.size)
        assert abs(draws.mean() - 1.5) < 3 * se

    def test_unit_exponential_memorylessness(self):
        rng = np.random.default_rng(111)
        draws = np.array(
            [sample_truncated_gamma(1.0, 1.0, 6.0, rng) for _ in range(20_000)]
        )
        assert draws.min() > 6.0
        assert abs(draws.mean() - 7.0) < 3 * math.sqrt(1.0 / draws.size)

    def test_extreme_quantile_bound_respected(self):
        shape, rate = 2.5, 1.7
        bound = float(gammainccinv(shape, 1e-4)) / rate
        rng = np.random.default_rng(112)
        draws = np.array(
            [sample_truncated_gamma(shape, rate, bound, rng) for _ in range(2_000)]
        )
        assert draws.min() > bound

    def test_distribution_matches_conditional_cdf(self):
        shape, rate, bound = 4.0, 0.8, 3.0
        rng = np.random.default_rng(113)
        draws = np.array(
            [sample_truncated_gamma(shape, rate, bound, rng) for _ in range(4_000)]
        )
        tail = float(gammaincc(shape, rate * bound))

        def cdf(x):
            return 1.0 - gammaincc(shape, rate * np.asarray(x)) / tail

        res = stats.kstest(draws, cdf)
        assert res.pvalue > 1e-4

    def test_bad_shape_rejected(self):
        with pytest.raises(ValidationError, match="shape and rate must be positive"):
            sample_truncated_gamma(0.0, 1.0, 0.0, np.random.default_rng(0))

    def test_infinite_bound_rejected(self):
        with pytest.raises(ValidationError, match="lower_bound must be finite"):
            sample_truncated_gamma(1.0, 1.0, math.inf, np.random.default_rng(0))

    def test_massless_bound_rejected(self):
        with pytest.raises(ValidationError, match="degenerate truncation"):
            sample_truncated_gamma(2.0, 1.0, 800.0, np.random.default_rng(0))


class TestLogDensities:
    def test_truncated_normal_logpdf_matches_reference(self):
        mean, sd, lo, hi = 0.4, 0.8, -0.5, 1.5
        ref = stats.truncnorm((lo - mean) / sd, (hi - mean) / sd, loc=mean, scale=sd)
        for x in (-0.2, 0.4, 1.2):
            got = truncated_normal_logpdf(x, mean, sd, lo, hi)
            assert got == pytest.approx(ref.logpdf(x), rel=1e-10)

    def test_truncated_normal_logpdf_far_tail(self):
        got = truncated_normal_logpdf(40.5, 0.0, 1.0, 40.0, 41.0)
        ref = stats.truncnorm(40.0, 41.0).logpdf(40.5)
        assert got == pytest.approx(ref, rel=1e-9)

    def test_truncated_normal_logpdf_outside_support(self):
        assert truncated_normal_logpdf(2.0, 0.0, 1.0, -1.0, 1.0) == float("-inf")
        assert truncated_normal_logpdf(-1.0, 0.0, 1.0, -1.0, 1.0) == float("-inf")

    def test_truncated_gamma_logpdf_matches_reference(self):
        shape, rate, bound = 3.0, 2.0, 1.0
        tail = float(gammaincc(shape, rate * bound))
        for x in (1.2, 2.0, 4.5):
            got = truncated_gamma_logpdf(x, shape, rate, bound)
            want = stats.gamma(shape, scale=1.0 / rate).logpdf(x) - math.log(tail)
            assert got == pytest.approx(want, rel=1e-10)

    def test_truncated_gamma_logpdf_outside_support(self):
        assert truncated_gamma_logpdf(0.5, 3.0, 2.0, 1.0) == float("-inf")
        assert truncated_gamma_logpdf(-1.0, 3.0, 2.0, 0.0) == float("-inf")

    def test_dirichlet_logpdf_matches_reference(self):
        x = np.array([0.2, 0.3, 0.5])
        conc = np.array([2.0, 3.0, 4.0])
        got = dirichlet_logpdf(x, conc)
        assert got == pytest.approx(stats.dirichlet(conc).logpdf(x), rel=1e-12)

    def test_dirichlet_logpdf_zero_component(self):
        assert dirichlet_logpdf(np.array([0.0, 1.0]), np.ones(2)) == float("-inf")
