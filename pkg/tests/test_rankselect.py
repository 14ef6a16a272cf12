import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from padenoise.errors import ValidationError
from padenoise.rankselect import (
    RankEstimate,
    bandwidth99,
    bandwidth_curve,
    choose_rank,
    estimate_rank_spatial,
    estimate_rank_temporal,
    rank_from_bandwidth_curve,
    spatial_similarity_matrix,
    temporal_psd,
)

EULER_GAMMA = 0.5772156649015329


def interval_bins(n, count):
    """Bins of the symmetric-growth interval of a given size (test oracle)."""
    bins = [0]
    s = 1
    while len(bins) < count:
        if s <= n // 2:
            bins.append(s)
        if len(bins) < count and s <= (n - 1) // 2:
            bins.append(n - s)
        s += 1
    return bins[:count]


def brute_force_bw(row, energy=0.99):
    total = row.sum()
    for count in range(1, len(row) + 1):
        if row[interval_bins(len(row), count)].sum() >= energy * total:
            return count / len(row)
    return 1.0


class TestTemporalPsd:
    def test_constant_vector_is_all_dc(self):
        v = np.full((64, 1), 1.0 / 8.0)
        table = temporal_psd(v, 1)
        assert table.rows[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert table.rows[0, 1:].max() < 1e-24

    def test_single_tone_splits_between_mirror_bins(self):
        n = 64
        t = np.arange(n)
        v = np.cos(2 * np.pi * 3 * t / n)[:, None]
        v /= np.linalg.norm(v)
        row = temporal_psd(v, 1).rows[0]
        assert row[3] + row[n - 3] == pytest.approx(1.0, abs=1e-12)

    def test_rows_normalized_nonnegative(self, rng):
        v = rng.standard_normal((32, 5))
        rows = temporal_psd(v, 5).rows
        assert np.all(rows >= 0)
        assert np.allclose(rows.sum(axis=1), 1.0, atol=1e-12)

    def test_white_noise_entropy_is_nearly_flat(self):
        # mean spectral entropy of white noise sits (1 - gamma) nats below
        # log(n); Monte Carlo over 100 seeds pins it within +-0.05 nats
        n = 256
        entropies = []
        for seed in range(100):
            v = np.random.default_rng(seed).standard_normal((n, 1))
            row = temporal_psd(v, 1).rows[0]
            nz = row[row > 0]
            entropies.append(-(nz * np.log(nz)).sum())
        expected = np.log(n) - (1.0 - EULER_GAMMA)
        assert abs(np.mean(entropies) - expected) < 0.05
        assert abs(np.mean(entropies) - np.log(n)) < 0.10 * np.log(n)

    def test_too_few_frames(self, rng):
        with pytest.raises(ValidationError, match="at least 8"):
            temporal_psd(rng.standard_normal((7, 2)), 1)

    def test_freq_resolution(self, rng):
        table = temporal_psd(rng.standard_normal((50, 1)), 1, dt_s=0.01)
        assert table.freq_resolution_hz == pytest.approx(2.0)


class TestBandwidth99:
    def test_all_dc(self):
        row = np.zeros(100)
        row[0] = 1.0
        assert bandwidth99(row) == pytest.approx(1 / 100)

    def test_flat_row(self):
        n = 100
        bw = bandwidth99(np.full(n, 1.0 / n))
        assert 0.99 - 1e-12 <= bw <= 0.99 + 1.0 / n

    def test_mixed_row_matches_brute_force(self):
        # 95% at DC, the rest spread flat over the remaining bins
        n = 100
        row = np.full(n, 0.05 / (n - 1))
        row[0] = 0.95
        assert bandwidth99(row) == pytest.approx(brute_force_bw(row), abs=1e-15)
        assert bandwidth99(row) == pytest.approx(0.81)

    @given(seed=st.integers(0, 2**16), n=st.integers(8, 64))
    @settings(max_examples=60, deadline=None)
    def test_random_rows_match_brute_force(self, seed, n):
        row = np.random.default_rng(seed).exponential(size=n)
        row /= row.sum()
        assert bandwidth99(row) == pytest.approx(brute_force_bw(row), abs=1e-15)


class TestTemporalEstimator:
    def test_step_curve_example(self):
        est = rank_from_bandwidth_curve(np.array([0.02, 0.03, 0.02, 0.95, 0.97]))
        assert est.k_hat == 3 and not est.no_noise_floor

    def test_no_noise_floor_flag(self):
        est = rank_from_bandwidth_curve(np.array([0.02, 0.05, 0.1, 0.2, 0.3]))
        assert est.k_hat == 5 and est.no_noise_floor

    def test_first_vector_already_noise_clamps_to_one(self):
        est = rank_from_bandwidth_curve(np.array([0.95, 0.97, 0.99]))
        assert est.k_hat == 1

    def test_monte_carlo_three_sinusoids(self):
        # 3 slow sinusoids + 60 white-noise vectors: ground-truth rank 3
        n_t, n_noise = 256, 60
        hits = 0
        for seed in range(100):
            gen = np.random.default_rng(seed)
            t = np.arange(n_t)
            v = np.empty((n_t, 3 + n_noise))
            for j in range(3):
                v[:, j] = np.cos(2 * np.pi * (j + 1) * t / n_t + gen.uniform(0, 2 * np.pi))
            v[:, 3:] = gen.standard_normal((n_t, n_noise))
            v /= np.linalg.norm(v, axis=0, keepdims=True)
            if estimate_rank_temporal(v, n_eval=3 + n_noise).k_hat == 3:
                hits += 1
        assert hits >= 95

    def test_sign_flip_invariance(self, rng):
        v = rng.standard_normal((64, 10))
        flipped = v * np.where(rng.random(10) < 0.5, -1.0, 1.0)
        a = estimate_rank_temporal(v, 10)
        b = estimate_rank_temporal(flipped, 10)
        assert a.k_hat == b.k_hat


class TestSimilarityMatrix:
    def test_unit_diagonal(self, rng):
        sim = spatial_similarity_matrix(rng.standard_normal((200, 6)), 6)
        assert np.allclose(np.diag(sim.c), 1.0, atol=1e-12)

    def test_sign_invariance_pairs(self, rng):
        u1 = rng.standard_normal(300)
        u = np.column_stack([u1, -u1])
        sim = spatial_similarity_matrix(u, 2)
        assert sim.c[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_matches_two_pass_pearson_oracle(self, rng):
        u = rng.standard_normal((150, 10))
        sim = spatial_similarity_matrix(u, 10)
        mags = np.abs(u)
        for i in range(10):
            for j in range(10):
                a, b = mags[:, i], mags[:, j]
                am, bm = a.mean(), b.mean()
                num = ((a - am) * (b - bm)).sum()
                den = np.sqrt(((a - am) ** 2).sum() * ((b - bm) ** 2).sum())
                assert sim.c[i, j] == pytest.approx(num / den, abs=1e-12)

    def test_symmetry_and_range(self, rng):
        sim = spatial_similarity_matrix(rng.standard_normal((80, 12)), 12)
        assert np.abs(sim.c - sim.c.T).max() <= 1e-12
        assert sim.c.min() >= -1.0 and sim.c.max() <= 1.0

    def test_zero_variance_flagged(self, rng):
        u = rng.standard_normal((50, 3))
        u[:, 1] = 2.0  # constant magnitude image
        sim = spatial_similarity_matrix(u, 3)
        assert sim.zero_variance_orders == (2,)
        assert not sim.c[1, :].any() and not sim.c[:, 1].any()


class TestSpatialEstimator:
    def test_identity_matrix(self):
        est = estimate_rank_spatial(np.eye(8))
        assert est.k_hat == 1

    def test_leading_block(self):
        c = np.zeros((10, 10))
        c[:5, :5] = 0.9
        np.fill_diagonal(c, 1.0)
        assert estimate_rank_spatial(c, tau=0.3).k_hat == 5

    def test_monotone_in_tau(self, rng):
        sim = spatial_similarity_matrix(rng.standard_normal((120, 10)), 10)
        ks = [estimate_rank_spatial(sim, tau).k_hat for tau in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a >= b for a, b in zip(ks, ks[1:]))

    def test_bad_tau(self):
        with pytest.raises(ValidationError):
            estimate_rank_spatial(np.eye(4), tau=1.5)

    @given(seed=st.integers(0, 2**16), n=st.integers(2, 12))
    @settings(max_examples=30, deadline=None)
    def test_rank_always_in_range(self, seed, n):
        u = np.random.default_rng(seed).standard_normal((40, n))
        est = estimate_rank_spatial(spatial_similarity_matrix(u, n))
        assert 1 <= est.k_hat <= n


class TestOnFactorizedData:
    def test_estimators_on_moving_phantom(self):
        # four distinct vessel positions -> rank-4 signal subspace; the
        # overlapping shifted patterns give the correlated |u| block and
        # narrowband temporal vectors the estimators rely on
        from conftest import MOVING_SCHEDULE, phantom_stack

        _, noisy = phantom_stack(MOVING_SCHEDULE, snr_db=-10.0, seed=7)
        from padenoise.framestack import to_casorati
        from padenoise.svdcore import full_svd

        factors = full_svd(to_casorati(noisy))
        k_t = estimate_rank_temporal(factors.v, n_eval=40).k_hat
        k_s = estimate_rank_spatial(spatial_similarity_matrix(factors.u, 40)).k_hat
        assert k_t == 4
        assert k_s == 4

    def test_choose_rank_policies(self):
        a = RankEstimate(3, "temporal", np.zeros(1))
        b = RankEstimate(5, "spatial", np.zeros(1))
        assert choose_rank(a, b, "min") == 3
        assert choose_rank(a, b, "max") == 5
        assert choose_rank(a, b, "temporal") == 3
        assert choose_rank(a, b, "spatial") == 5
        with pytest.raises(ValidationError):
            choose_rank(a, b, "median")
