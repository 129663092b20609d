"""Closed-form large-timescale rate surrogates for MRC and weighted ZF.

Both surrogates depend on the orientation matrix only through the Rician
statistics and the induced LMMSE covariances, so they can be evaluated and
optimized without sampling fading realizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import channel_statistics
from .errors import RankDeficiencyError

# condition-number gate for the mean Gram surrogate matrix
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class MrcTerms:
    """MRC use-and-then-forget SINR surrogate with its audit terms.

    Per user k: ``signal_gain`` is tr(est_cov) + |mean|^2 (the mean effective
    gain of the matched filter), ``self_interference`` the estimation-induced
    signal variance, ``cross_interference[i, k]`` the average interference
    power user i injects into user k's combiner, and
    ``interference_plus_noise`` the full surrogate SINR denominator.
    """

    signal_gain: np.ndarray             # (K,)
    self_interference: np.ndarray       # (K,)
    cross_interference: np.ndarray      # (K, K), zero diagonal
    interference_plus_noise: np.ndarray  # (K,)
    sinr: np.ndarray                    # (K,)
    rate: np.ndarray                    # (K,) bits/s/Hz, pre-log applied
    sum_rate: float


def mrc_surrogate(stats, est, scenario):
    """Closed-form MRC SINR/rate surrogate from channel and estimation statistics."""
    p = scenario.data_powers
    mean = stats.mean
    signal_gain = (np.einsum("kii->k", est.est_cov).real
                   + np.einsum("kn,kn->k", mean, mean.conj()).real)
    # cross[i, k] = tr(second_moment_i @ est_second_moment_k)
    cross = np.einsum("iab,kba->ik", est.second_moment, est.est_second_moment).real
    np.fill_diagonal(cross, 0.0)
    est_cov_sq = np.einsum("kab,kba->k", est.est_cov, est.est_cov).real
    mean_quad = np.einsum("ka,kab,kb->k", mean.conj(), est.est_cov, mean).real
    err_cross = np.einsum("kab,kba->k", est.err_cov, est.est_second_moment).real
    self_interference = est_cov_sq + 2.0 * mean_quad + err_cross
    denom = (p * self_interference + cross.T @ p
             + scenario.noise_power * signal_gain)
    sinr = p * signal_gain ** 2 / denom
    rate = scenario.prelog * np.log2(1.0 + sinr)
    return MrcTerms(
        signal_gain=signal_gain,
        self_interference=self_interference,
        cross_interference=cross,
        interference_plus_noise=denom,
        sinr=sinr,
        rate=rate,
        sum_rate=float(rate.sum()),
    )


@dataclass(frozen=True)
class WzfTerms:
    """Weighted-ZF statistical SINR surrogate with its audit terms.

    ``effective_noise_cov`` is sigma^2 I + sum_i p_i err_cov_i, ``mean_gram``
    the expected whitened Gram matrix of the channel estimates, and
    ``gram_inv_diag[k]`` its inverse diagonal, so sinr_k = p_k / gram_inv_diag_k.
    ``schur_sinr`` recomputes the SINR through the Schur-complement route and
    is asserted to agree with ``sinr``.
    """

    effective_noise_cov: np.ndarray  # (N, N) Hermitian PD
    mean_gram: np.ndarray            # (K, K) Hermitian PD
    gram_inv_diag: np.ndarray        # (K,)
    sinr: np.ndarray                 # (K,)
    schur_sinr: np.ndarray           # (K,)
    rate: np.ndarray                 # (K,)
    sum_rate: float


def effective_noise_covariance(est, scenario):
    """Colored effective noise sigma^2 I + sum_k p_k err_cov_k."""
    n = est.err_cov.shape[1]
    return (scenario.noise_power * np.eye(n)
            + np.einsum("k,kab->ab", scenario.data_powers, est.err_cov))


def _offending_users(gram):
    """Users carrying the near-null direction of a badly conditioned Gram matrix."""
    _, vecs = np.linalg.eigh(gram)
    null_dir = np.abs(vecs[:, 0])
    return np.flatnonzero(null_dir > 1e-3 * null_dir.max())


def wzf_surrogate(stats, est, scenario):
    """Closed-form weighted-ZF SINR/rate surrogate.

    Requires K <= N. Raises RankDeficiencyError (naming the implicated
    users) when the mean Gram matrix is numerically singular; no silent
    regularization is applied.
    """
    n_users, n_ant = stats.mean.shape
    if n_users > n_ant:
        raise ValueError(f"weighted ZF needs K <= N, got K={n_users}, N={n_ant}")
    p = scenario.data_powers
    noise_cov = effective_noise_covariance(est, scenario)
    means = stats.mean.T  # (N, K)
    white_means = np.linalg.solve(noise_cov, means)
    noise_inv = np.linalg.inv(noise_cov)
    diag_terms = np.einsum("ab,kba->k", noise_inv, est.est_cov).real
    gram = means.conj().T @ white_means + np.diag(diag_terms)
    gram = 0.5 * (gram + gram.conj().T)

    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise RankDeficiencyError(
            f"mean Gram matrix is numerically singular (cond={cond:.3e}); "
            f"implicated users: {list(_offending_users(gram))}",
            user_indices=_offending_users(gram))

    gram_inv = np.linalg.inv(gram)
    inv_diag = np.diag(gram_inv).real
    sinr = p / inv_diag

    # independent Schur-complement route for the same SINR
    schur_sinr = np.empty(n_users)
    for k in range(n_users):
        others = [i for i in range(n_users) if i != k]
        s_kk = gram[k, k].real
        if others:
            s_cross = gram[others, k]
            reduced = gram[np.ix_(others, others)]
            s_kk -= (s_cross.conj() @ np.linalg.solve(reduced, s_cross)).real
        schur_sinr[k] = p[k] * s_kk

    tol = max(1e-8, 100.0 * cond * np.finfo(float).eps)
    gap = np.max(np.abs(sinr - schur_sinr) / np.abs(schur_sinr))
    if gap > tol:
        raise RuntimeError(
            f"Schur-complement SINR disagrees with inverse-diagonal SINR "
            f"(relative gap {gap:.3e}, cond {cond:.3e})")

    rate = scenario.prelog * np.log2(1.0 + sinr)
    return WzfTerms(
        effective_noise_cov=noise_cov,
        mean_gram=gram,
        gram_inv_diag=inv_diag,
        sinr=sinr,
        schur_sinr=schur_sinr,
        rate=rate,
        sum_rate=float(rate.sum()),
    )


def single_user_orientation(scenario, tables):
    """Closed-form optimal boresights for one user with a deterministic channel.

    Each boresight is the spherical-cap projection of the direction toward
    the user; valid only when the scattered component vanishes for every
    feasible orientation (no clusters, or all clusters behind the reachable
    half-spaces).
    """
    from .optimizer import project_to_cap

    if scenario.n_users != 1:
        raise ValueError(f"closed form requires a single user, got K={scenario.n_users}")
    if scenario.n_clusters:
        # a cluster is invisible to every feasible boresight iff its direction
        # from each antenna lies beyond 90 deg + theta_max from the array normal
        visible = tables.s_clusters[:, :, 2] > -np.sin(scenario.theta_max) - 1e-12
        if np.any(visible):
            raise ValueError(
                "closed form requires a vanishing scattered component; "
                "some clusters are visible from the feasible orientation set")
    return np.array([project_to_cap(s, scenario.theta_max) for s in tables.s_users[0]])
