"""Orientation-dependent element gain and per-user Rician channel statistics.

Each array element is directional: its power gain toward a unit direction s
is ``2*(2b+1) * max(f's, 0)^(2b)`` for boresight f, so rotating f reshapes
both the deterministic line-of-sight component and the scattering covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def peak_gain(gain_exponent):
    """Maximum element gain 2*(2b+1), attained at perfect boresight alignment."""
    return 2.0 * (2.0 * gain_exponent + 1.0)


def _clipped_cos_power(dot, exponent):
    """max(dot, 0)**exponent with the front-boundary convention for exponent 0.

    For exponent == 0 the value at dot == 0 is 1 (right-continuous from the
    front half-space); for exponent > 0 it is 0 there.
    """
    dot = np.asarray(dot, dtype=float)
    out = np.zeros_like(dot)
    pos = dot > 0
    out[pos] = dot[pos] ** exponent
    if exponent == 0:
        out[dot == 0.0] = 1.0
    return out


def element_gain(boresight, direction, gain_exponent):
    """Directional power gain of one element toward a unit direction.

    Both vectors must be unit norm. The gain is zero over the back
    half-space and peaks at ``peak_gain(gain_exponent)`` when the incident
    direction coincides with the boresight.
    """
    f = np.asarray(boresight, dtype=float)
    s = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(f) - 1.0) > 1e-8 or abs(np.linalg.norm(s) - 1.0) > 1e-8:
        raise ValueError("boresight and direction must be unit vectors")
    if gain_exponent < 0:
        raise ValueError("gain_exponent must be >= 0")
    return float(peak_gain(gain_exponent) * _clipped_cos_power(f @ s, 2.0 * gain_exponent))


@dataclass(frozen=True)
class ChannelStatistics:
    """Per-user Rician statistics for a fixed orientation matrix.

    ``mean[k]`` is the deterministic line-of-sight channel of user k,
    ``scatter[k]`` the per-cluster amplitude matrix whose columns drive the
    i.i.d. cluster fading, and ``cov[k] = scatter[k] @ scatter[k]^H``.
    """

    mean: np.ndarray      # (K, N) complex
    scatter: np.ndarray   # (K, N, Q) complex
    cov: np.ndarray       # (K, N, N) complex Hermitian PSD

    @property
    def n_users(self):
        return self.mean.shape[0]

    @property
    def n_antennas(self):
        return self.mean.shape[1]


def channel_statistics(scenario, tables, orientations):
    """Rician mean/scatter/covariance of every user for boresights ``orientations``.

    ``orientations`` is an (N, 3) array of boresight vectors. Rows are not
    re-normalized here, so callers may probe slightly off-sphere points
    (finite differences); feasibility is enforced by the optimizer.
    """
    F = np.asarray(orientations, dtype=float)
    b = scenario.gain_exponent
    wave_number = 2.0 * np.pi / scenario.wavelength
    # sqrt of aperture * peak gain / (4 pi); the remaining gain factor is
    # the clipped cosine to the b-th power
    amp0 = np.sqrt(scenario.aperture * peak_gain(b) / (4.0 * np.pi))

    dots_users = np.einsum("nm,knm->kn", F, tables.s_users)
    mean = (amp0 * _clipped_cos_power(dots_users, b) / tables.r_users
            * np.exp(-1j * wave_number * tables.r_users))

    n_users, n_ant = mean.shape
    n_clusters = scenario.n_clusters
    if n_clusters:
        dots_clusters = np.einsum("nm,qnm->qn", F, tables.s_clusters)
        # antenna-side factor, shared by every user: per (q, n)
        ant_part = (amp0 * np.sqrt(scenario.cluster_rcs)[:, None]
                    * _clipped_cos_power(dots_clusters, b) / tables.r_clusters
                    * np.exp(-1j * wave_number * tables.r_clusters))
        # user-side factor: per (q, k)
        user_part = np.exp(-1j * wave_number * tables.d_cluster_user) / tables.d_cluster_user
        scatter = np.einsum("qn,qk->knq", ant_part, user_part)
        cov = np.einsum("knq,kjq->knj", scatter, scatter.conj())
    else:
        scatter = np.zeros((n_users, n_ant, 0), dtype=complex)
        cov = np.zeros((n_users, n_ant, n_ant), dtype=complex)
    return ChannelStatistics(mean=mean, scatter=scatter, cov=cov)


def sample_channel(stats, rng):
    """One channel realization H (N, K) with columns CN(mean_k, cov_k).

    The cluster fading coefficients are i.i.d. standard circular complex
    Gaussians, independent across users. ``rng`` is a numpy Generator;
    callers running blocks in parallel must pass independent streams.
    """
    k, _, q = stats.scatter.shape
    fading = (rng.standard_normal((k, q)) + 1j * rng.standard_normal((k, q))) / np.sqrt(2.0)
    return stats.mean.T + np.einsum("knq,kq->nk", stats.scatter, fading)
