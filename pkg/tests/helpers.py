"""Shared scenario builders and numeric utilities for the test suite."""

import numpy as np

from ra_orient.channel import channel_statistics
from ra_orient.estimation import estimation_statistics
from ra_orient.experiments import dbm_to_watt, default_config, derive_seed, generate_geometry
from ra_orient.geometry import Scenario, build_upa, geometry_tables
from ra_orient.optimizer import uniform_cap_orientation


def los_scenario(seed, theta_max_deg=60.0, n_row=2, n_col=4):
    """Single user, no clusters: the closed-form alignment regime."""
    rng = np.random.default_rng(seed)
    radius = 300.0 * np.sqrt(rng.random())
    azimuth = rng.random() * 2.0 * np.pi
    height = 100.0 + 100.0 * rng.random()
    wavelength = 0.05
    return Scenario(
        antenna_positions=build_upa(n_row, n_col, wavelength),
        user_positions=np.array([[radius * np.cos(azimuth), radius * np.sin(azimuth), height]]),
        cluster_positions=np.zeros((0, 3)),
        cluster_rcs=np.zeros(0),
        wavelength=wavelength,
        aperture=4.0 * np.pi * 1e-3,
        gain_exponent=4.0,
        theta_max=np.deg2rad(theta_max_deg),
        noise_power=dbm_to_watt(-80.0),
        data_powers=np.array([0.1]),
        pilot_powers=np.array([0.1]),
        pilot_length=1,
        coherence_length=200,
    )


def random_scenario(seed, n_users=3, n_clusters=2, n_row=2, n_col=2,
                    pilot_snr_scale=1.0, gain_exponent=2.0, theta_max_deg=60.0):
    """Small synthetic scenario with users and clusters in general position.

    ``pilot_snr_scale`` shrinks the pilot power so estimation error stays
    comparable to the estimate covariance (useful for Monte Carlo checks).
    """
    rng = np.random.default_rng(seed)
    wavelength = 0.05

    def sample(count, r_hi, z_lo, z_hi):
        r = r_hi * np.sqrt(rng.random(count))
        az = rng.random(count) * 2.0 * np.pi
        z = z_lo + rng.random(count) * (z_hi - z_lo)
        return np.column_stack([r * np.cos(az), r * np.sin(az), z])

    return Scenario(
        antenna_positions=build_upa(n_row, n_col, wavelength),
        user_positions=sample(n_users, 250.0, 80.0, 200.0),
        cluster_positions=sample(n_clusters, 300.0, 50.0, 250.0),
        cluster_rcs=100.0 / 3.0 * (0.5 + rng.random(n_clusters)),
        wavelength=wavelength,
        aperture=4.0 * np.pi * 1e-3,
        gain_exponent=gain_exponent,
        theta_max=np.deg2rad(theta_max_deg),
        noise_power=dbm_to_watt(-80.0),
        data_powers=np.full(n_users, 0.1),
        pilot_powers=np.full(n_users, 0.1 * pilot_snr_scale),
        pilot_length=max(n_users, 4),
        coherence_length=200,
    )


def default_scenario(geometry_index, seed=12345, config=None):
    """One geometry draw of the baseline configuration."""
    cfg = config or default_config()
    return generate_geometry(cfg, derive_seed(seed, 0, geometry_index))


def stats_and_est(scenario, tables, orientations):
    stats = channel_statistics(scenario, tables, orientations)
    return stats, estimation_statistics(stats, scenario)


def interior_orientation(scenario, tables, rng, margin=1e-3, max_tries=500):
    """Feasible orientation with every boresight/direction product away from
    the clipping boundary (|f's| > margin), where the surrogates are smooth."""
    dirs = [tables.s_users]
    if scenario.n_clusters:
        dirs.append(tables.s_clusters)
    for _ in range(max_tries):
        F = uniform_cap_orientation(scenario.n_antennas, scenario.theta_max, rng)
        ok = all(np.min(np.abs(np.einsum("nm,pnm->pn", F, d))) > margin for d in dirs)
        if ok:
            return F
    raise RuntimeError("could not sample an interior orientation")


def hermitian_error(a):
    return np.max(np.abs(a - np.swapaxes(a, -1, -2).conj()))


def rel_err(value, reference):
    reference = np.asarray(reference)
    scale = np.linalg.norm(reference.ravel())
    return np.linalg.norm((np.asarray(value) - reference).ravel()) / max(scale, 1e-300)
