import dataclasses

import numpy as np
import pytest

from ra_orient.channel import channel_statistics, element_gain, peak_gain, sample_channel
from ra_orient.geometry import geometry_tables

from helpers import hermitian_error, random_scenario, stats_and_est
from ra_orient.optimizer import uniform_cap_orientation

EZ = np.array([0.0, 0.0, 1.0])


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class TestElementGain:
    def test_peak_at_alignment(self):
        f = unit([0.3, -0.2, 0.9])
        assert np.isclose(element_gain(f, f, 4.0), 18.0)
        assert peak_gain(4.0) == 18.0

    def test_back_half_space_is_zero(self):
        f = EZ
        for b in (0.5, 1.0, 4.0):
            assert element_gain(f, unit([0.1, 0.0, -1.0]), b) == 0.0
            assert element_gain(f, -f, b) == 0.0

    def test_direct_evaluation(self):
        # f's = 0.5, b = 1 -> 6 * 0.25
        f = EZ
        s = np.array([np.sin(np.pi / 3), 0.0, 0.5])
        assert np.isclose(element_gain(f, s, 1.0), 1.5)

    def test_non_unit_inputs_rejected(self):
        with pytest.raises(ValueError):
            element_gain([0, 0, 2.0], EZ, 1.0)
        with pytest.raises(ValueError):
            element_gain(EZ, [0, 0, 0.5], 1.0)

    def test_boundary_convention_for_isotropic_exponent(self):
        # b = 0: hemisphere gain 2 everywhere in the closed front half-space
        assert element_gain(EZ, np.array([1.0, 0.0, 0.0]), 0.0) == 2.0
        assert element_gain(EZ, np.array([0.0, 0.0, -1.0]), 0.0) == 0.0

    @pytest.mark.parametrize("b", [0.0, 0.5, 1.0, 2.0, 4.0, 8.0])
    def test_half_space_power_normalization(self, b):
        # (1/2pi) * integral of the gain over the front hemisphere equals 2
        nodes, weights = np.polynomial.legendre.leggauss(64)
        t = 0.5 * (nodes + 1.0)            # cos(angle) in [0, 1]
        integral = 2.0 * np.pi * 0.5 * np.sum(weights * peak_gain(b) * t ** (2 * b))
        assert abs(integral / (2.0 * np.pi) - 2.0) < 1e-3

    def test_monotone_in_alignment(self):
        dots = np.linspace(0.0, 1.0, 41)
        for b in (0.0, 1.0, 3.5):
            gains = [element_gain(EZ, np.array([np.sqrt(1 - d * d), 0.0, d]), b) for d in dots]
            assert np.all(np.diff(gains) >= -1e-12)


class TestChannelStatistics:
    def test_aligned_los_power(self):
        # boresight on the user, b = 4, aperture/(4 pi) = 1e-3, r = 100
        scen = random_scenario(0, n_users=1, n_clusters=0, n_row=1, n_col=1,
                               gain_exponent=4.0)
        scen = dataclasses.replace(scen, user_positions=np.array([[0.0, 0.0, 100.0]]))
        tables = geometry_tables(scen)
        stats = channel_statistics(scen, tables, EZ[None, :])
        assert np.isclose(np.abs(stats.mean[0, 0]) ** 2, 1.8e-6, rtol=1e-12)

    def test_clipped_clusters_zero_scatter_row(self):
        scen = random_scenario(1, n_users=2, n_clusters=2)
        tables = geometry_tables(scen)
        # everything sits above the array plane, so a straight-down boresight
        # has negative inner product with every incident direction
        F = np.tile(EZ, (scen.n_antennas, 1))
        F[0] = -EZ
        stats = channel_statistics(scen, tables, F)
        assert np.all(stats.scatter[:, 0, :] == 0.0)
        assert np.all(stats.mean[:, 0] == 0.0)
        assert np.all(stats.scatter[:, 1:, :] != 0.0)

    def test_single_cluster_rank_one(self):
        scen = random_scenario(2, n_users=2, n_clusters=1)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(0)
        F = uniform_cap_orientation(scen.n_antennas, scen.theta_max, rng)
        stats = channel_statistics(scen, tables, F)
        for k in range(scen.n_users):
            assert np.linalg.matrix_rank(stats.cov[k], tol=1e-20) <= 1
            assert np.isclose(np.trace(stats.cov[k]).real,
                              np.linalg.norm(stats.scatter[k]) ** 2)

    def test_covariance_consistency_and_hermitian(self):
        scen = random_scenario(3, n_users=3, n_clusters=3)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(1)
        F = uniform_cap_orientation(scen.n_antennas, scen.theta_max, rng)
        stats = channel_statistics(scen, tables, F)
        rebuilt = np.einsum("knq,kjq->knj", stats.scatter, stats.scatter.conj())
        assert np.max(np.abs(rebuilt - stats.cov)) < 1e-10 * max(np.abs(stats.cov).max(), 1e-30)
        assert hermitian_error(stats.cov) < 1e-18
        for k in range(scen.n_users):
            eig = np.linalg.eigvalsh(stats.cov[k])
            assert eig.min() >= -1e-10 * max(np.trace(stats.cov[k]).real, 1e-30)

    def test_rotation_sparsity(self):
        # rotating boresight n changes only entry n of the mean and row n of
        # the scatter matrix
        scen = random_scenario(4, n_users=3, n_clusters=2)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(2)
        F1 = uniform_cap_orientation(scen.n_antennas, scen.theta_max, rng)
        F2 = F1.copy()
        F2[2] = uniform_cap_orientation(1, scen.theta_max, rng)[0]
        s1 = channel_statistics(scen, tables, F1)
        s2 = channel_statistics(scen, tables, F2)
        keep = [n for n in range(scen.n_antennas) if n != 2]
        assert np.array_equal(s1.mean[:, keep], s2.mean[:, keep])
        assert np.array_equal(s1.scatter[:, keep, :], s2.scatter[:, keep, :])
        assert np.any(s1.mean[:, 2] != s2.mean[:, 2])


class TestSampleChannel:
    def test_los_only_is_deterministic(self):
        scen = random_scenario(5, n_users=2, n_clusters=0)
        tables = geometry_tables(scen)
        stats = channel_statistics(scen, tables, np.tile(EZ, (scen.n_antennas, 1)))
        h = sample_channel(stats, np.random.default_rng(0))
        assert np.array_equal(h, stats.mean.T)

    def test_monte_carlo_mean_and_covariance(self):
        scen = random_scenario(6, n_users=2, n_clusters=3)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(3)
        F = uniform_cap_orientation(scen.n_antennas, scen.theta_max, rng)
        stats = channel_statistics(scen, tables, F)
        draws = 100_000
        sampler = np.random.default_rng(4)
        h = np.stack([sample_channel(stats, sampler) for _ in range(draws)])  # (M, N, K)
        for k in range(scen.n_users):
            mean_err = np.linalg.norm(h[:, :, k].mean(axis=0) - stats.mean[k])
            assert mean_err / np.linalg.norm(stats.mean[k]) < 0.02
            centered = h[:, :, k] - stats.mean[k]
            cov = centered.T @ centered.conj() / draws
            assert np.linalg.norm(cov - stats.cov[k]) / np.linalg.norm(stats.cov[k]) < 0.05
