"""Analytic orientation derivatives of channel statistics and rate surrogates.

Rotating boresight n changes only entry n of each user's mean and row n of
each user's scatter matrix, so every covariance derivative is a rank-2
Hermitian update ``e_n w^T + conj(w) e_n^T``. ``stat_derivatives`` exposes
the per-coordinate derivatives of all statistics; the sum-rate gradient
functions exploit the rank-2 structure to evaluate the full (N, 3) gradient
with a handful of matrix products per user. A central finite-difference
verifier is included; analytic and numeric routes are kept independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import channel_statistics
from .estimation import RANK_RTOL, estimation_statistics
from .surrogates import mrc_surrogate, wzf_surrogate

_LN2 = np.log(2.0)


def _axis_index(m):
    if isinstance(m, str):
        try:
            return "xyz".index(m)
        except ValueError:
            raise ValueError(f"axis must be one of x, y, z, got {m!r}") from None
    if m not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1, or 2, got {m!r}")
    return int(m)


@dataclass(frozen=True)
class _OrientationKernels:
    """Per-coordinate derivative seeds shared by all gradient computations.

    ``d_mean[k, n, m]`` is the derivative of mean entry (k, n) with respect
    to coordinate m of boresight n. ``w[k, n, m]`` parameterizes the rank-2
    covariance derivative: d cov_k = e_n w^T + conj(w) e_n^T.
    """

    d_mean: np.ndarray   # (K, N, 3) complex
    w: np.ndarray        # (K, N, 3, N) complex


def _orientation_kernels(stats, scenario, tables, orientations):
    F = np.asarray(orientations, dtype=float)
    b = scenario.gain_exponent
    dots_u = np.einsum("nm,knm->kn", F, tables.s_users)
    ratio_u = np.where(dots_u > 0, b / np.where(dots_u > 0, dots_u, 1.0), 0.0)
    d_mean = ratio_u[:, :, None] * stats.mean[:, :, None] * tables.s_users
    n_users, n_ant, n_clusters = stats.scatter.shape
    if n_clusters:
        dots_c = np.einsum("nm,qnm->qn", F, tables.s_clusters)
        ratio_c = np.where(dots_c > 0, b / np.where(dots_c > 0, dots_c, 1.0), 0.0)
        d_scatter = np.einsum("qn,knq,qnm->knmq", ratio_c, stats.scatter, tables.s_clusters)
        w = np.einsum("kjq,knmq->knmj", stats.scatter.conj(), d_scatter)
    else:
        w = np.zeros((n_users, n_ant, 3, n_ant), dtype=complex)
    return _OrientationKernels(d_mean=d_mean.astype(complex), w=w)


def _shrink_factors(est, scenario):
    """Per-user error shrinkage E_k = sigma^2 (a_k cov_k + sigma^2 I)^{-1}."""
    if not scenario.noise_power > 0:
        raise ValueError("statistic derivatives require positive noise power")
    n_users, n_ant = est.cov_eigvals.shape
    out = np.empty((n_users, n_ant, n_ant), dtype=complex)
    for k in range(n_users):
        d = scenario.noise_power / (est.pilot_energy[k] * est.cov_eigvals[k] + scenario.noise_power)
        out[k] = (est.cov_eigvecs[k] * d) @ est.cov_eigvecs[k].conj().T
    return out


def _assemble_gradient(kernels, y_mats, z_vecs):
    """Gradient of sum_k [tr(dcov_k Y_k) + 2 Re(dmean_k . conj(z_k))] over (n, m).

    ``y_mats[k]`` must be Hermitian; ``tr(dcov_k Y_k)`` then reduces to
    ``2 Re sum_j w[k, n, m, j] Y_k[j, n]``.
    """
    grad = 2.0 * np.real(np.einsum("knmj,kjn->nm", kernels.w, y_mats))
    grad += 2.0 * np.real(np.einsum("knm,kn->nm", kernels.d_mean, np.conj(z_vecs)))
    return grad


@dataclass(frozen=True)
class StatDerivatives:
    """Derivatives of all per-user statistics w.r.t. one boresight coordinate.

    For coordinate ``axis`` of boresight ``antenna``: ``d_mean[k]`` has a
    single nonzero entry (at ``antenna``), ``d_scatter_row[k]`` is the
    derivative of that row of the scatter matrix, and the matrix fields are
    Hermitian with nonzeros confined to row/column ``antenna`` (covariance)
    or the full matrix (estimation covariances).
    """

    antenna: int
    axis: int
    d_mean: np.ndarray               # (K, N) complex
    d_scatter_row: np.ndarray        # (K, Q) complex
    d_cov: np.ndarray                # (K, N, N)
    d_est_cov: np.ndarray            # (K, N, N)
    d_err_cov: np.ndarray            # (K, N, N)
    d_second_moment: np.ndarray      # (K, N, N)
    d_est_second_moment: np.ndarray  # (K, N, N)


def stat_derivatives(stats, est, scenario, tables, orientations, antenna, axis):
    """All statistic derivatives w.r.t. coordinate ``axis`` of boresight ``antenna``.

    Directions with a non-positive boresight/direction inner product
    contribute zero (the clipped gain uses the zero subgradient at the
    boundary).
    """
    m = _axis_index(axis)
    n = int(antenna)
    F = np.asarray(orientations, dtype=float)
    b = scenario.gain_exponent
    n_users, n_ant, n_clusters = stats.scatter.shape
    f_n = F[n]

    d_mean = np.zeros((n_users, n_ant), dtype=complex)
    dots_u = tables.s_users[:, n, :] @ f_n
    ratio_u = np.where(dots_u > 0, b / np.where(dots_u > 0, dots_u, 1.0), 0.0)
    d_mean[:, n] = ratio_u * stats.mean[:, n] * tables.s_users[:, n, m]

    if n_clusters:
        dots_c = tables.s_clusters[:, n, :] @ f_n
        ratio_c = np.where(dots_c > 0, b / np.where(dots_c > 0, dots_c, 1.0), 0.0)
        d_scatter_row = stats.scatter[:, n, :] * (ratio_c * tables.s_clusters[:, n, m])[None, :]
    else:
        d_scatter_row = np.zeros((n_users, 0), dtype=complex)

    # rank-2 covariance derivative: row/column n carry B conj(d_row)
    w = np.einsum("kjq,kq->kj", stats.scatter.conj(), d_scatter_row)
    d_cov = np.zeros((n_users, n_ant, n_ant), dtype=complex)
    d_cov[:, n, :] += w
    d_cov[:, :, n] += w.conj()

    shrink = _shrink_factors(est, scenario)
    d_est_cov = np.empty_like(d_cov)
    for k in range(n_users):
        e = shrink[k]
        d_est_cov[k] = d_cov[k] - e @ d_cov[k] @ e
    d_err_cov = d_cov - d_est_cov

    # derivative of the mean outer product, shared by both second moments
    d_outer = np.zeros_like(d_cov)
    d_outer[:, n, :] += d_mean[:, n, None] * stats.mean.conj()
    d_outer[:, :, n] += stats.mean * d_mean[:, n, None].conj()
    return StatDerivatives(
        antenna=n,
        axis=m,
        d_mean=d_mean,
        d_scatter_row=d_scatter_row,
        d_cov=d_cov,
        d_est_cov=d_est_cov,
        d_err_cov=d_err_cov,
        d_second_moment=d_cov + d_outer,
        d_est_second_moment=d_est_cov + d_outer,
    )


def _prepare(scenario, tables, orientations, stats, est):
    if stats is None:
        stats = channel_statistics(scenario, tables, orientations)
    if est is None:
        est = estimation_statistics(stats, scenario)
    return stats, est


def mrc_gradient(scenario, tables, orientations, stats=None, est=None, terms=None):
    """Gradient (N, 3) of the MRC sum-rate surrogate w.r.t. all boresights."""
    stats, est = _prepare(scenario, tables, orientations, stats, est)
    if terms is None:
        terms = mrc_surrogate(stats, est, scenario)
    kernels = _orientation_kernels(stats, scenario, tables, orientations)
    shrink = _shrink_factors(est, scenario)

    p = scenario.data_powers
    sigma2 = scenario.noise_power
    n_users, n_ant = stats.mean.shape
    eye = np.eye(n_ant)
    alpha = terms.signal_gain
    denom = terms.interference_plus_noise
    kappa = scenario.prelog / _LN2 / (1.0 + terms.sinr)
    du_dalpha = 2.0 * p * alpha / denom            # d sinr / d alpha at fixed denom
    dv_ddenom = p * alpha ** 2 / denom ** 2        # -d sinr / d denom

    # cross-user sums reused below: sum_i p_i * second_moment_i and
    # sum_k coef_k * est_second_moment_k with coef_k = -kappa_k dv_k
    coef = -kappa * dv_ddenom
    p_sig = np.einsum("i,iab->ab", p, est.second_moment)
    c_est = np.einsum("k,kab->ab", coef, est.est_second_moment)

    y_mats = np.zeros((n_users, n_ant, n_ant), dtype=complex)
    z_vecs = np.zeros((n_users, n_ant), dtype=complex)
    for k in range(n_users):
        e = shrink[k]
        mu = stats.mean[k]
        c_hat = est.est_cov[k]
        c_err = est.err_cov[k]
        w_alpha = kappa[k] * (du_dalpha[k] - dv_ddenom[k] * sigma2)
        y_mats[k] += w_alpha * (eye - e @ e)
        z_vecs[k] += w_alpha * mu

        w_phi = coef[k] * p[k]
        e_mu = e @ mu
        mu_outer = np.outer(mu, mu.conj())
        y_mats[k] += w_phi * (
            2.0 * (c_hat - e @ c_hat @ e)
            + 2.0 * (mu_outer - np.outer(e_mu, e_mu.conj()))
            + e @ est.est_second_moment[k] @ e
            + (c_err - e @ c_err @ e)
        )
        z_vecs[k] += w_phi * (2.0 * c_hat @ mu + c_err @ mu)

        # interference of the other users into combiner k (affects user k's
        # own statistics) and of user k into the other combiners
        x = coef[k] * (p_sig - p[k] * est.second_moment[k])
        y_mats[k] += x - e @ x @ e
        z_vecs[k] += x @ mu
        t = p[k] * (c_est - coef[k] * est.est_second_moment[k])
        y_mats[k] += t
        z_vecs[k] += t @ mu
    return _assemble_gradient(kernels, y_mats, z_vecs)


def wzf_gradient(scenario, tables, orientations, stats=None, est=None, terms=None,
                 frozen_estimation=None):
    """Gradient (N, 3) of the weighted-ZF sum-rate surrogate.

    With ``frozen_estimation`` set, the estimation statistics are treated as
    constants (their derivative terms drop) and only the mean matrix varies;
    this matches finite differences of the surrogate with the same frozen
    statistics.
    """
    stats, est = _prepare(scenario, tables, orientations, stats, est)
    frozen = frozen_estimation is not None
    est_eff = frozen_estimation if frozen else est
    if terms is None:
        terms = wzf_surrogate(stats, est_eff, scenario)
    kernels = _orientation_kernels(stats, scenario, tables, orientations)

    p = scenario.data_powers
    n_users, n_ant = stats.mean.shape
    noise_inv = np.linalg.inv(terms.effective_noise_cov)
    gram_inv = np.linalg.inv(terms.mean_gram)
    kappa = scenario.prelog / _LN2 / (1.0 + terms.sinr)
    coef = kappa * p / terms.gram_inv_diag ** 2
    # quadratic-form weights: d sum_rate = tr(d gram . q_weight)
    q_weight = (gram_inv * coef) @ gram_inv.conj().T
    q_weight = 0.5 * (q_weight + q_weight.conj().T)

    white_means = noise_inv @ stats.mean.T            # (N, K)
    z_vecs = (white_means @ q_weight).T               # (K, N)

    if frozen:
        y_mats = np.zeros((n_users, n_ant, n_ant), dtype=complex)
    else:
        shrink = _shrink_factors(est, scenario)
        wmq = white_means @ q_weight
        core = wmq @ white_means.conj().T             # Z^-1 M Q M^H Z^-1
        core += noise_inv @ np.einsum("k,kab->ab", np.diag(q_weight).real, est.est_cov) @ noise_inv
        core = 0.5 * (core + core.conj().T)
        y_mats = np.empty((n_users, n_ant, n_ant), dtype=complex)
        for k in range(n_users):
            e = shrink[k]
            y_mats[k] = (np.diag(q_weight)[k].real * (noise_inv - e @ noise_inv @ e)
                         - p[k] * (e @ core @ e))
    return _assemble_gradient(kernels, y_mats, z_vecs)


def mean_nmse_and_gradient(scenario, tables, orientations, stats=None, est=None):
    """Mean active-subspace NMSE over users and its orientation gradient.

    The gradient holds the active-subspace projector (numerical rank) fixed,
    which matches the eigenvalue chain rule whenever the rank is stable.
    """
    stats, est = _prepare(scenario, tables, orientations, stats, est)
    kernels = _orientation_kernels(stats, scenario, tables, orientations)
    sigma2 = scenario.noise_power
    n_users, n_ant = stats.mean.shape
    y_mats = np.zeros((n_users, n_ant, n_ant), dtype=complex)
    total = 0.0
    for k in range(n_users):
        lam = est.cov_eigvals[k]
        active = lam > RANK_RTOL * lam.max() if lam.max() > 0 else np.zeros_like(lam, bool)
        rank = int(active.sum())
        if rank == 0:
            continue
        a = est.pilot_energy[k]
        shrink_eig = 1.0 / (1.0 + a * lam / sigma2)
        total += shrink_eig[active].sum() / rank
        # d nmse_k = -(a / (sigma^2 rank)) tr(dcov . P E^2), eigenvalues of
        # P E^2 are the squared shrinkages on the active subspace
        d = np.where(active, shrink_eig ** 2, 0.0)
        u = est.cov_eigvecs[k]
        y_mats[k] = -(a / (sigma2 * rank * n_users)) * ((u * d) @ u.conj().T)
    grad = _assemble_gradient(kernels, y_mats, np.zeros((n_users, n_ant), dtype=complex))
    return total / n_users, grad


def finite_difference_gradient(fun, orientations, step=1e-6):
    """Central finite differences of a scalar function of the (N, 3) orientations."""
    F = np.asarray(orientations, dtype=float)
    grad = np.zeros(F.shape)
    for idx in np.ndindex(*F.shape):
        fp = F.copy()
        fp[idx] += step
        fm = F.copy()
        fm[idx] -= step
        grad[idx] = (fun(fp) - fun(fm)) / (2.0 * step)
    return grad


def gradient_check_error(fun, analytic, orientations, steps=(1e-5, 1e-6, 1e-7), floor=1e-12):
    """Worst-component relative error of ``analytic`` vs central differences.

    For each component the error is minimized over the step sizes; components
    where both routes are below ``floor`` in magnitude are skipped.
    """
    analytic = np.asarray(analytic, dtype=float)
    errs = []
    for h in steps:
        fd = finite_difference_gradient(fun, orientations, h)
        mag = np.maximum(np.abs(analytic), np.abs(fd))
        err = np.abs(analytic - fd) / np.maximum(mag, floor)
        err[mag < floor] = 0.0
        errs.append(err)
    return float(np.min(errs, axis=0).max())
