"""Block-level Monte Carlo simulation of the two-timescale uplink.

Per coherence block: sample fading, observe pilots, form LMMSE estimates,
build the combiner from the estimates, and score the instantaneous SINR
against the true channels. Rates come directly from log2(1 + SINR); data
symbols are never sampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import channel_statistics, sample_channel
from .errors import RankDeficiencyError
from .estimation import estimation_statistics, lmmse_estimate, pilot_observation
from .geometry import geometry_tables
from .surrogates import effective_noise_covariance

# estimate matrices whose smallest singular value falls below this fraction
# of the largest are treated as rank deficient
_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Combiner:
    """Receive combining matrix for one block.

    ``conditional_sinr`` is only set for the weighted-ZF combiner: it is the
    per-user SINR conditioned on the estimates, p_k / [(Hhat^H Z^-1 Hhat)^-1]_kk.
    """

    V: np.ndarray                    # (N, K) complex
    kind: str                        # "mrc" or "wzf"
    conditional_sinr: np.ndarray | None = None


def build_combiner(kind, h_hat, est, scenario):
    """MRC or weighted-ZF combiner from the estimated channel matrix (N, K)."""
    if kind == "mrc":
        return Combiner(V=np.array(h_hat), kind="mrc")
    if kind != "wzf":
        raise ValueError(f"unknown combiner kind {kind!r}")
    n_ant, n_users = h_hat.shape
    if n_users > n_ant:
        raise ValueError(f"weighted ZF needs K <= N, got K={n_users}, N={n_ant}")
    _, sv, vh = np.linalg.svd(h_hat, full_matrices=False)
    if sv[-1] < _RANK_RTOL * sv[0]:
        null_dir = np.abs(vh[-1])
        cols = np.flatnonzero(null_dir > 1e-3 * null_dir.max())
        raise RankDeficiencyError(
            f"estimated channel matrix is rank deficient; collinear columns: {list(cols)}",
            user_indices=cols)
    noise_cov = effective_noise_covariance(est, scenario)
    whitened = np.linalg.solve(noise_cov, h_hat)
    gram = h_hat.conj().T @ whitened
    gram_inv = np.linalg.inv(0.5 * (gram + gram.conj().T))
    v = whitened @ gram_inv
    cond_sinr = scenario.data_powers / np.diag(gram_inv).real
    return Combiner(V=v, kind="wzf", conditional_sinr=cond_sinr)


def instantaneous_sinr(combiner_matrix, h_true, scenario):
    """Per-user SINR of linear combining against the true channels.

    sinr_k = p_k |v_k^H h_k|^2 / (sum_{i != k} p_i |v_k^H h_i|^2 + sigma^2 |v_k|^2).
    """
    v = combiner_matrix.V if isinstance(combiner_matrix, Combiner) else combiner_matrix
    norms = np.einsum("nk,nk->k", v.conj(), v).real
    if np.any(norms == 0.0):
        raise ValueError(f"zero combiner column(s): {list(np.flatnonzero(norms == 0.0))}")
    p = scenario.data_powers
    coupling = np.abs(v.conj().T @ h_true) ** 2  # [k, i] = |v_k^H h_i|^2
    desired = p * np.diag(coupling)
    interference = coupling @ p - p * np.diag(coupling)
    return desired / (interference + scenario.noise_power * norms)


@dataclass(frozen=True)
class ErgodicReport:
    """Block-averaged ergodic rates with Monte Carlo standard errors."""

    rate_mean: np.ndarray     # (K,) bits/s/Hz
    rate_stderr: np.ndarray   # (K,)
    sum_rate: float
    sum_rate_stderr: float
    n_blocks: int             # blocks requested
    n_used: int               # blocks contributing (rank-deficient ones skipped)
    n_skipped: int
    seed: int


def ergodic_rate(scenario, orientations, kind, n_blocks, seed, stats=None, est=None):
    """Monte Carlo ergodic rate of MRC or weighted ZF at fixed orientations.

    Each block draws fading and pilot noise from an independent stream
    spawned deterministically from ``seed``, so reports are bit-identical
    across runs and independent of any parallel execution order.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if stats is None:
        stats = channel_statistics(scenario, geometry_tables(scenario), orientations)
    if est is None:
        est = estimation_statistics(stats, scenario)
    n_users = scenario.n_users
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    rates = np.zeros((n_blocks, n_users))
    used = np.zeros(n_blocks, dtype=bool)
    prelog = scenario.prelog
    for i, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        h = sample_channel(stats, rng)
        h_hat = np.empty_like(h)
        for k in range(n_users):
            y_k = pilot_observation(h[:, k], k, scenario, rng)
            h_hat[:, k] = lmmse_estimate(stats, est, y_k, k, scenario)
        try:
            combiner = build_combiner(kind, h_hat, est, scenario)
        except RankDeficiencyError:
            continue
        sinr = instantaneous_sinr(combiner, h, scenario)
        rates[i] = prelog * np.log2(1.0 + sinr)
        used[i] = True

    kept = rates[used]
    n_used = int(used.sum())
    if n_used == 0:
        raise RankDeficiencyError("all blocks were rank deficient")
    rate_mean = kept.mean(axis=0)
    if n_used > 1:
        rate_stderr = kept.std(axis=0, ddof=1) / np.sqrt(n_used)
        sum_stderr = kept.sum(axis=1).std(ddof=1) / np.sqrt(n_used)
    else:
        rate_stderr = np.zeros(n_users)
        sum_stderr = 0.0
    return ErgodicReport(
        rate_mean=rate_mean,
        rate_stderr=rate_stderr,
        sum_rate=float(rate_mean.sum()),
        sum_rate_stderr=float(sum_stderr),
        n_blocks=n_blocks,
        n_used=n_used,
        n_skipped=n_blocks - n_used,
        seed=int(seed),
    )
