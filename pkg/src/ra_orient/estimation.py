"""LMMSE channel estimation: pilot observations, estimates, and error statistics.

Pilots are orthogonal across users, so per user k the sufficient statistic is
the N-dimensional observation ``y_k = sqrt(a_k) h_k + noise`` with effective
pilot energy ``a_k = pilot_length * pilot_power_k``. All covariances below are
computed through the eigendecomposition of the channel covariance, which keeps
them exactly Hermitian and handles the rank-deficient (pure line-of-sight)
case without special-casing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# eigenvalues below RANK_RTOL * max eigenvalue count as zero
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class EstimationStatistics:
    """Per-user LMMSE second-order statistics for fixed channel statistics.

    ``err_cov + est_cov = cov`` holds by construction. ``cov_eigvals`` and
    ``cov_eigvecs`` cache the eigendecomposition of the channel covariance,
    reused by the NMSE report and the derivative computations.
    """

    err_cov: np.ndarray            # (K, N, N) estimation error covariance
    est_cov: np.ndarray            # (K, N, N) estimate covariance
    second_moment: np.ndarray      # (K, N, N) E[h h^H]
    est_second_moment: np.ndarray  # (K, N, N) E[hhat hhat^H]
    pilot_energy: np.ndarray       # (K,) a_k
    cov_eigvals: np.ndarray        # (K, N) ascending, clipped at 0
    cov_eigvecs: np.ndarray        # (K, N, N)


def estimation_statistics(stats, scenario):
    """LMMSE error/estimate covariances and second moments for every user.

    With channel covariance R (eigenvalues lam), pilot energy a, and noise
    sigma^2, the estimate covariance has eigenvalues a*lam^2 / (a*lam + sigma^2)
    and the error covariance lam * sigma^2 / (a*lam + sigma^2).
    """
    n_users, n_ant = stats.mean.shape
    noise = scenario.noise_power
    energy = scenario.pilot_energies
    err_cov = np.empty((n_users, n_ant, n_ant), dtype=complex)
    est_cov = np.empty_like(err_cov)
    eigvals = np.empty((n_users, n_ant))
    eigvecs = np.empty_like(err_cov)
    for k in range(n_users):
        lam, u = np.linalg.eigh(stats.cov[k])
        lam = np.clip(lam, 0.0, None)
        denom = energy[k] * lam + noise
        safe = denom > 0
        e_hat = np.zeros(n_ant)
        e_err = np.zeros(n_ant)
        e_hat[safe] = energy[k] * lam[safe] ** 2 / denom[safe]
        e_err[safe] = noise * lam[safe] / denom[safe]
        est_cov[k] = (u * e_hat) @ u.conj().T
        err_cov[k] = (u * e_err) @ u.conj().T
        eigvals[k] = lam
        eigvecs[k] = u
    mean_outer = stats.mean[:, :, None] * stats.mean[:, None, :].conj()
    return EstimationStatistics(
        err_cov=err_cov,
        est_cov=est_cov,
        second_moment=stats.cov + mean_outer,
        est_second_moment=est_cov + mean_outer,
        pilot_energy=np.array(energy, dtype=float),
        cov_eigvals=eigvals,
        cov_eigvecs=eigvecs,
    )


def pilot_observation(h_k, k, scenario, rng):
    """Noisy pilot observation sqrt(a_k) h_k + CN(0, sigma^2 I) for user k."""
    n = h_k.shape[0]
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(scenario.noise_power / 2.0)
    return np.sqrt(scenario.pilot_energies[k]) * h_k + noise


def lmmse_estimate(stats, est, y_k, k, scenario):
    """LMMSE (= MMSE under Gaussianity) channel estimate of user k.

    hhat = mean + sqrt(a) R (a R + sigma^2 I)^{-1} (y - sqrt(a) mean).
    """
    a = est.pilot_energy[k]
    mean = stats.mean[k]
    gram = a * stats.cov[k] + scenario.noise_power * np.eye(stats.n_antennas)
    innovation = y_k - np.sqrt(a) * mean
    return mean + np.sqrt(a) * stats.cov[k] @ np.linalg.solve(gram, innovation)


@dataclass(frozen=True)
class NmseReport:
    """Active-subspace normalized estimation error per user.

    ``nmse[k]`` is the mean of 1 / (1 + a_k * lam_i / sigma^2) over the
    strictly positive eigenvalues lam_i of the channel covariance; 0 when the
    covariance vanishes. ``active_eigvals[k]`` holds those eigenvalues.
    """

    nmse: np.ndarray           # (K,) in [0, 1]
    ranks: np.ndarray          # (K,) int
    active_eigvals: list       # K arrays of positive eigenvalues


def covariance_ranks(est):
    """Numerical rank of each user's channel covariance (RANK_RTOL cut)."""
    lam = est.cov_eigvals
    cut = RANK_RTOL * lam.max(axis=1, keepdims=True)
    return np.sum(lam > np.maximum(cut, 0.0), axis=1)


def nmse(stats, est, scenario):
    """Normalized error over the active subspace of each user's covariance."""
    noise = scenario.noise_power
    n_users = stats.n_users
    values = np.zeros(n_users)
    ranks = covariance_ranks(est)
    active = []
    for k in range(n_users):
        lam = est.cov_eigvals[k]
        lam = lam[lam > RANK_RTOL * lam.max()] if lam.max() > 0 else lam[:0]
        active.append(np.sort(lam)[::-1])
        if lam.size:
            values[k] = np.mean(1.0 / (1.0 + est.pilot_energy[k] * lam / noise))
    return NmseReport(nmse=values, ranks=np.asarray(ranks, dtype=int), active_eigvals=active)
