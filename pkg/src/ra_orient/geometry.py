"""Static geometry: UPA layout, scenario container, and distance/direction tables.

All positions are 3D Cartesian coordinates in meters. The antenna array lies
in the x-y plane with its centroid at the origin; its normal is +z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError


def build_upa(n_row, n_col, wavelength):
    """Positions of a uniform planar array with half-wavelength spacing.

    Elements are indexed row-major and centered so the array centroid is
    exactly the origin. Returns an (n_row*n_col, 3) array with z = 0.
    """
    if int(n_row) != n_row or int(n_col) != n_col or n_row < 1 or n_col < 1:
        raise ValueError(f"array dimensions must be positive integers, got {n_row}x{n_col}")
    if not wavelength > 0:
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    n_row, n_col = int(n_row), int(n_col)
    spacing = wavelength / 2.0
    xs = (np.arange(n_col) - (n_col - 1) / 2.0) * spacing
    ys = (np.arange(n_row) - (n_row - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(n_row * n_col)])


@dataclass(frozen=True)
class Scenario:
    """Static geometry and physical constants of one uplink snapshot.

    Powers are in watts, distances in meters, angles in radians. The
    scattering cross sections ``cluster_rcs`` are in m^2 and the element
    aperture ``aperture`` is the physical element size in m^2.
    """

    antenna_positions: np.ndarray   # (N, 3), z = 0
    user_positions: np.ndarray      # (K, 3)
    cluster_positions: np.ndarray   # (Q, 3); Q = 0 means pure line of sight
    cluster_rcs: np.ndarray         # (Q,)
    wavelength: float
    aperture: float
    gain_exponent: float            # beamwidth exponent b >= 0
    theta_max: float                # maximum boresight tilt, (0, pi/2]
    noise_power: float              # receiver noise variance sigma^2 (W)
    data_powers: np.ndarray         # (K,) transmit powers (W)
    pilot_powers: np.ndarray        # (K,) pilot powers (W)
    pilot_length: int               # pilot symbols per block, >= K
    coherence_length: int           # symbols per coherence block, > pilot_length

    def __post_init__(self):
        conv = {
            "antenna_positions": np.atleast_2d(np.asarray(self.antenna_positions, dtype=float)),
            "user_positions": np.atleast_2d(np.asarray(self.user_positions, dtype=float)),
            "cluster_positions": np.asarray(self.cluster_positions, dtype=float).reshape(-1, 3),
            "cluster_rcs": np.asarray(self.cluster_rcs, dtype=float).reshape(-1),
            "data_powers": np.asarray(self.data_powers, dtype=float).reshape(-1),
            "pilot_powers": np.asarray(self.pilot_powers, dtype=float).reshape(-1),
        }
        for name, value in conv.items():
            object.__setattr__(self, name, value)
        n, k, q = self.n_antennas, self.n_users, self.n_clusters
        if n < 1 or k < 1:
            raise ValueError("need at least one antenna and one user")
        if self.antenna_positions.shape != (n, 3) or self.user_positions.shape != (k, 3):
            raise ValueError("positions must be (count, 3) arrays")
        if np.any(self.antenna_positions[:, 2] != 0.0):
            raise ValueError("antenna positions must lie in the z = 0 plane")
        if self.cluster_rcs.shape != (q,) or np.any(self.cluster_rcs <= 0):
            raise ValueError("cluster_rcs must hold one positive value per cluster")
        if self.data_powers.shape != (k,) or self.pilot_powers.shape != (k,):
            raise ValueError("data_powers and pilot_powers must hold one value per user")
        if np.any(self.data_powers < 0) or np.any(self.pilot_powers < 0):
            raise ValueError("powers must be non-negative")
        if not self.wavelength > 0 or not self.aperture > 0:
            raise ValueError("wavelength and aperture must be positive")
        if self.gain_exponent < 0:
            raise ValueError("gain_exponent must be >= 0")
        if not 0 < self.theta_max <= np.pi / 2:
            raise ValueError("theta_max must lie in (0, pi/2]")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.pilot_length < k:
            raise ValueError(f"pilot_length ({self.pilot_length}) must be >= number of users ({k})")
        if self.coherence_length <= self.pilot_length:
            raise ValueError("coherence_length must exceed pilot_length")

    @property
    def n_antennas(self):
        return self.antenna_positions.shape[0]

    @property
    def n_users(self):
        return self.user_positions.shape[0]

    @property
    def n_clusters(self):
        return self.cluster_positions.shape[0]

    @property
    def pilot_energies(self):
        """Per-user effective pilot energy: pilot_length * pilot_power."""
        return self.pilot_length * self.pilot_powers

    @property
    def prelog(self):
        """Rate pre-log factor 1 - pilot_length / coherence_length."""
        return 1.0 - self.pilot_length / self.coherence_length


@dataclass(frozen=True)
class GeometryTables:
    """Distances and unit direction vectors derived from a Scenario.

    ``s_users[k, n]`` is the unit vector from antenna n toward user k, and
    ``r_users[k, n]`` the corresponding distance; analogously for clusters.
    ``d_cluster_user[q, k]`` is the cluster-to-user distance.
    """

    r_users: np.ndarray          # (K, N)
    s_users: np.ndarray          # (K, N, 3)
    r_clusters: np.ndarray       # (Q, N)
    s_clusters: np.ndarray       # (Q, N, 3)
    d_cluster_user: np.ndarray   # (Q, K)


def _distances_and_directions(targets, sources, what):
    diff = targets[:, None, :] - sources[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r <= 0.0):
        a, b = np.argwhere(r <= 0.0)[0]
        raise DegenerateGeometryError(f"coincident {what} pair (indices {a}, {b})")
    return r, diff / r[..., None]


def geometry_tables(scenario):
    """All pairwise distances and directions between antennas, users, clusters."""
    r_users, s_users = _distances_and_directions(
        scenario.user_positions, scenario.antenna_positions, "user/antenna")
    if scenario.n_clusters:
        r_clusters, s_clusters = _distances_and_directions(
            scenario.cluster_positions, scenario.antenna_positions, "cluster/antenna")
        d_cluster_user = np.linalg.norm(
            scenario.user_positions[None, :, :] - scenario.cluster_positions[:, None, :], axis=-1)
        if np.any(d_cluster_user <= 0.0):
            q, k = np.argwhere(d_cluster_user <= 0.0)[0]
            raise DegenerateGeometryError(f"coincident cluster/user pair (indices {q}, {k})")
    else:
        n = scenario.n_antennas
        r_clusters = np.zeros((0, n))
        s_clusters = np.zeros((0, n, 3))
        d_cluster_user = np.zeros((0, scenario.n_users))
    return GeometryTables(r_users, s_users, r_clusters, s_clusters, d_cluster_user)
