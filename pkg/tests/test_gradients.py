import dataclasses

import numpy as np
import pytest

from ra_orient.channel import channel_statistics
from ra_orient.estimation import estimation_statistics
from ra_orient.geometry import geometry_tables
from ra_orient.gradients import (finite_difference_gradient, gradient_check_error,
                                 mean_nmse_and_gradient, mrc_gradient, stat_derivatives,
                                 wzf_gradient)
from ra_orient.optimizer import tangent_project
from ra_orient.surrogates import mrc_surrogate, wzf_surrogate

from helpers import (hermitian_error, interior_orientation, los_scenario,
                     random_scenario, stats_and_est)

EZ = np.array([0.0, 0.0, 1.0])


def reference_mrc_gradient(scen, tables, F):
    """Literal per-coordinate chain rule through the statistic derivatives."""
    stats, est = stats_and_est(scen, tables, F)
    t = mrc_surrogate(stats, est, scen)
    p = scen.data_powers
    grad = np.zeros((scen.n_antennas, 3))
    for n in range(scen.n_antennas):
        for m in range(3):
            d = stat_derivatives(stats, est, scen, tables, F, n, m)
            d_alpha = (2 * np.real(stats.mean[:, n].conj() * d.d_mean[:, n])
                       + np.einsum("kii->k", d.d_est_cov).real)
            d_phi = np.empty(scen.n_users)
            for k in range(scen.n_users):
                mu = stats.mean[k]
                d_phi[k] = (
                    2 * np.einsum("ab,ba->", est.est_cov[k], d.d_est_cov[k]).real
                    + 2 * (mu.conj() @ d.d_est_cov[k] @ mu).real
                    + 4 * np.real(d.d_mean[k, n].conj() * (est.est_cov[k] @ mu)[n])
                    + np.einsum("ab,ba->", d.d_err_cov[k], est.est_second_moment[k]).real
                    + np.einsum("ab,ba->", est.err_cov[k], d.d_est_second_moment[k]).real)
            d_theta = np.einsum("iab,kba->ik", d.d_second_moment, est.est_second_moment).real
            d_theta += np.einsum("iab,kba->ik", est.second_moment, d.d_est_second_moment).real
            np.fill_diagonal(d_theta, 0.0)
            d_denom = p * d_phi + d_theta.T @ p + scen.noise_power * d_alpha
            d_sinr = p * (2 * t.signal_gain * t.interference_plus_noise * d_alpha
                          - t.signal_gain ** 2 * d_denom) / t.interference_plus_noise ** 2
            grad[n, m] = scen.prelog / np.log(2) * np.sum(d_sinr / (1 + t.sinr))
    return grad


def reference_wzf_gradient(scen, tables, F):
    """Literal per-coordinate chain rule for the weighted-ZF surrogate."""
    stats, est = stats_and_est(scen, tables, F)
    t = wzf_surrogate(stats, est, scen)
    z_inv = np.linalg.inv(t.effective_noise_cov)
    s_inv = np.linalg.inv(t.mean_gram)
    m_mat = stats.mean.T
    p = scen.data_powers
    grad = np.zeros((scen.n_antennas, 3))
    for n in range(scen.n_antennas):
        for ax in range(3):
            d = stat_derivatives(stats, est, scen, tables, F, n, ax)
            d_z = np.einsum("k,kab->ab", p, d.d_err_cov)
            d_zinv = -z_inv @ d_z @ z_inv
            d_m = np.zeros_like(m_mat)
            d_m[n, :] = d.d_mean[:, n]
            chi = np.array([np.einsum("ab,ba->", d_zinv, est.est_cov[k])
                            + np.einsum("ab,ba->", z_inv, d.d_est_cov[k])
                            for k in range(scen.n_users)]).real
            d_gram = (np.diag(chi)
                      + d_m.conj().T @ z_inv @ m_mat
                      + m_mat.conj().T @ z_inv @ d_m
                      + m_mat.conj().T @ d_zinv @ m_mat)
            inner = s_inv @ d_gram @ s_inv
            d_sinr = p / t.gram_inv_diag ** 2 * np.diag(inner).real
            grad[n, ax] = scen.prelog / np.log(2) * np.sum(d_sinr / (1 + t.sinr))
    return grad


def surrogate_fun(scen, tables, kind):
    def fun(F):
        stats, est = stats_and_est(scen, tables, F)
        if kind == "mrc":
            return mrc_surrogate(stats, est, scen).sum_rate
        return wzf_surrogate(stats, est, scen).sum_rate
    return fun


class TestStatDerivatives:
    def test_fully_clipped_antenna_is_zero(self):
        scen = random_scenario(0, n_users=2, n_clusters=2)
        tables = geometry_tables(scen)
        F = np.tile(EZ, (scen.n_antennas, 1))
        F[1] = -EZ  # everything above the array plane is invisible from here
        stats, est = stats_and_est(scen, tables, F)
        for m in range(3):
            d = stat_derivatives(stats, est, scen, tables, F, 1, m)
            for field in (d.d_mean, d.d_scatter_row, d.d_cov, d.d_est_cov,
                          d.d_err_cov, d.d_second_moment, d.d_est_second_moment):
                assert np.all(field == 0.0)

    def test_isotropic_exponent_has_no_gain_gradient(self):
        scen = random_scenario(1, n_users=2, n_clusters=2, gain_exponent=0.0)
        tables = geometry_tables(scen)
        F = np.tile(EZ, (scen.n_antennas, 1))
        stats, est = stats_and_est(scen, tables, F)
        d = stat_derivatives(stats, est, scen, tables, F, 0, 0)
        assert np.all(d.d_mean == 0.0) and np.all(d.d_scatter_row == 0.0)
        assert np.all(d.d_cov == 0.0)

    def test_matches_finite_differences(self):
        scen = random_scenario(2, n_users=2, n_clusters=3)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(0)
        F = interior_orientation(scen, tables, rng)
        stats, est = stats_and_est(scen, tables, F)
        step = 1e-6
        for n, m in [(0, 0), (1, 2), (3, 1)]:
            d = stat_derivatives(stats, est, scen, tables, F, n, m)
            fp, fm = F.copy(), F.copy()
            fp[n, m] += step
            fm[n, m] -= step
            sp, ep = stats_and_est(scen, tables, fp)
            sm, em = stats_and_est(scen, tables, fm)
            pairs = [
                (d.d_mean, (sp.mean - sm.mean) / (2 * step)),
                (d.d_cov, (sp.cov - sm.cov) / (2 * step)),
                (d.d_est_cov, (ep.est_cov - em.est_cov) / (2 * step)),
                (d.d_err_cov, (ep.err_cov - em.err_cov) / (2 * step)),
                (d.d_second_moment, (ep.second_moment - em.second_moment) / (2 * step)),
                (d.d_est_second_moment,
                 (ep.est_second_moment - em.est_second_moment) / (2 * step)),
            ]
            for analytic, numeric in pairs:
                scale = max(np.linalg.norm(numeric.ravel()), 1e-30)
                assert np.linalg.norm((analytic - numeric).ravel()) / scale < 1e-5

    def test_sparsity_hermitian_and_consistency(self):
        scen = random_scenario(3, n_users=3, n_clusters=2)
        tables = geometry_tables(scen)
        F = interior_orientation(scen, tables, np.random.default_rng(1))
        stats, est = stats_and_est(scen, tables, F)
        n = 2
        d = stat_derivatives(stats, est, scen, tables, F, n, 1)
        other = [j for j in range(scen.n_antennas) if j != n]
        assert np.all(d.d_mean[:, other] == 0.0)
        mask = np.ones(scen.n_antennas, dtype=bool)
        mask[n] = False
        assert np.all(d.d_cov[:, mask][:, :, mask] == 0.0)
        for field in (d.d_cov, d.d_est_cov, d.d_err_cov, d.d_second_moment,
                      d.d_est_second_moment):
            assert hermitian_error(field) < 1e-12
        assert np.max(np.abs(d.d_cov - (d.d_est_cov + d.d_err_cov))) < 1e-9 * max(
            1e-30, np.abs(d.d_cov).max())


class TestRateGradients:
    def test_mrc_matches_finite_differences(self):
        scen = random_scenario(4, n_users=3, n_clusters=3)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(2)
        for _ in range(3):
            F = interior_orientation(scen, tables, rng)
            err = gradient_check_error(surrogate_fun(scen, tables, "mrc"),
                                       mrc_gradient(scen, tables, F), F)
            assert err < 1e-5

    def test_wzf_matches_finite_differences(self):
        scen = random_scenario(5, n_users=3, n_clusters=3)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(3)
        for _ in range(3):
            F = interior_orientation(scen, tables, rng)
            err = gradient_check_error(surrogate_fun(scen, tables, "wzf"),
                                       wzf_gradient(scen, tables, F), F)
            assert err < 1e-5

    def test_matches_literal_chain_rule(self):
        scen = random_scenario(6, n_users=3, n_clusters=2)
        tables = geometry_tables(scen)
        F = interior_orientation(scen, tables, np.random.default_rng(4))
        assert np.allclose(mrc_gradient(scen, tables, F),
                           reference_mrc_gradient(scen, tables, F), rtol=1e-9, atol=1e-12)
        assert np.allclose(wzf_gradient(scen, tables, F),
                           reference_wzf_gradient(scen, tables, F), rtol=1e-9, atol=1e-12)

    def test_aligned_single_user_is_tangentially_stationary(self):
        scen = los_scenario(3)
        tables = geometry_tables(scen)
        # feasible only if the user direction is inside every cap
        tilts = np.arccos(tables.s_users[0, :, 2])
        if np.any(tilts > scen.theta_max):
            scen = dataclasses.replace(scen, user_positions=np.array([[20.0, 10.0, 150.0]]))
            tables = geometry_tables(scen)
        F = np.array(tables.s_users[0])
        grad = mrc_gradient(scen, tables, F)
        for n in range(scen.n_antennas):
            tangential = tangent_project(F[n], grad[n])
            assert np.linalg.norm(tangential) < 1e-9 * max(np.linalg.norm(grad[n]), 1e-30)

    def test_duplicate_users_double_single_contribution(self):
        base = random_scenario(7, n_users=2, n_clusters=2)
        scen = dataclasses.replace(base, user_positions=np.vstack([base.user_positions[0]] * 2))
        tables = geometry_tables(scen)
        F = interior_orientation(scen, tables, np.random.default_rng(5))
        total = mrc_gradient(scen, tables, F)

        def user0_rate(Fx):
            stats, est = stats_and_est(scen, tables, Fx)
            return mrc_surrogate(stats, est, scen).rate[0]

        fd_single = finite_difference_gradient(user0_rate, F, 1e-6)
        assert np.allclose(total, 2 * fd_single, rtol=1e-4, atol=1e-9)

    def test_wzf_frozen_estimation_ablation(self):
        scen = random_scenario(8, n_users=3, n_clusters=3)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(6)
        F = interior_orientation(scen, tables, rng)
        _, frozen = stats_and_est(scen, tables, F)

        def frozen_fun(Fx):
            stats = channel_statistics(scen, tables, Fx)
            return wzf_surrogate(stats, frozen, scen).sum_rate

        grad = wzf_gradient(scen, tables, F, frozen_estimation=frozen)
        assert gradient_check_error(frozen_fun, grad, F) < 1e-5

    def test_wzf_single_user_reduction(self):
        scen = random_scenario(9, n_users=1, n_clusters=3)
        tables = geometry_tables(scen)
        F = interior_orientation(scen, tables, np.random.default_rng(7))
        stats, est = stats_and_est(scen, tables, F)
        p = scen.data_powers[0]
        z = scen.noise_power * np.eye(scen.n_antennas) + p * est.err_cov[0]
        z_inv = np.linalg.inv(z)
        mu = stats.mean[0]
        sinr = p * ((mu.conj() @ z_inv @ mu).real
                    + np.trace(z_inv @ est.est_cov[0]).real)
        direct = np.zeros((scen.n_antennas, 3))
        for n in range(scen.n_antennas):
            for ax in range(3):
                d = stat_derivatives(stats, est, scen, tables, F, n, ax)
                d_zinv = -z_inv @ (p * d.d_err_cov[0]) @ z_inv
                d_mu = d.d_mean[0]
                d_sinr = p * (2 * np.real(d_mu.conj() @ z_inv @ mu)
                              + (mu.conj() @ d_zinv @ mu).real
                              + np.trace(d_zinv @ est.est_cov[0]).real
                              + np.trace(z_inv @ d.d_est_cov[0]).real)
                direct[n, ax] = scen.prelog / np.log(2) * d_sinr / (1 + sinr)
        assert np.allclose(wzf_gradient(scen, tables, F), direct, rtol=1e-9, atol=1e-12)

    def test_clipped_antenna_gradient_rows_vanish(self):
        scen = random_scenario(10, n_users=2, n_clusters=2)
        tables = geometry_tables(scen)
        F = np.tile(EZ, (scen.n_antennas, 1))
        F[0] = -EZ
        assert np.all(mrc_gradient(scen, tables, F)[0] == 0.0)
        assert np.all(wzf_gradient(scen, tables, F)[0] == 0.0)


class TestNmseGradient:
    def test_zero_covariance_objective(self):
        scen = random_scenario(11, n_users=2, n_clusters=0)
        tables = geometry_tables(scen)
        F = np.tile(EZ, (scen.n_antennas, 1))
        value, grad = mean_nmse_and_gradient(scen, tables, F)
        assert value == 0.0
        assert np.all(grad == 0.0)

    def test_matches_finite_differences(self):
        scen = random_scenario(12, n_users=2, n_clusters=3)
        tables = geometry_tables(scen)
        rng = np.random.default_rng(8)
        F = interior_orientation(scen, tables, rng)

        def fun(Fx):
            return mean_nmse_and_gradient(scen, tables, Fx)[0]

        _, grad = mean_nmse_and_gradient(scen, tables, F)
        assert gradient_check_error(fun, grad, F, steps=(1e-5, 1e-6)) < 1e-4
