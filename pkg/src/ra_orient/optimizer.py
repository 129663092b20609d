"""Projected gradient ascent over a product of spherical caps.

Each boresight is constrained to the cap {f : |f| = 1, angle(f, e_z) <=
theta_max}. An ascent step projects the Euclidean gradient onto the sphere's
tangent space, retracts by renormalizing, projects onto the cap, and accepts
the step under an Armijo sufficient-increase rule, so the objective trace is
non-decreasing by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import channel_statistics
from .errors import StepTooLargeError
from .estimation import covariance_ranks, estimation_statistics
from .gradients import mean_nmse_and_gradient, mrc_gradient, wzf_gradient
from .surrogates import mrc_surrogate, wzf_surrogate

_EZ = np.array([0.0, 0.0, 1.0])


def broadside_orientation(n_antennas):
    """All boresights along the array normal."""
    return np.tile(_EZ, (n_antennas, 1))


def uniform_cap_orientation(n_antennas, theta_max, rng):
    """Boresights drawn uniformly (by area) over the feasible spherical cap."""
    cos_tilt = 1.0 - rng.random(n_antennas) * (1.0 - np.cos(theta_max))
    sin_tilt = np.sqrt(1.0 - cos_tilt ** 2)
    azimuth = rng.random(n_antennas) * 2.0 * np.pi
    return np.column_stack(
        [sin_tilt * np.cos(azimuth), sin_tilt * np.sin(azimuth), cos_tilt])


def validate_orientation(orientations, theta_max, norm_tol=1e-10, tilt_tol=1e-9):
    """Raise unless every row is unit norm and within the tilt limit."""
    F = np.asarray(orientations, dtype=float)
    norms = np.linalg.norm(F, axis=1)
    if np.any(np.abs(norms - 1.0) > norm_tol):
        raise ValueError("boresight rows must be unit vectors")
    tilt = np.arccos(np.clip(F[:, 2], -1.0, 1.0))
    if np.any(tilt > theta_max + tilt_tol):
        raise ValueError("boresight tilt exceeds theta_max")
    return F


def tangent_project(f, grad):
    """Component of ``grad`` tangent to the unit sphere at ``f``."""
    f = np.asarray(f, dtype=float)
    grad = np.asarray(grad, dtype=float)
    return grad - (f @ grad) * f


def project_to_cap(v, theta_max, previous=None):
    """Closest point of the spherical cap to the unit vector ``v``.

    Inside the cap ``v`` is returned unchanged; otherwise the point at tilt
    exactly theta_max with the azimuth of ``v``. When ``v`` has no azimuth
    (parallel to the axis), +e_z maps to e_z and -e_z falls back to the
    azimuth of ``previous`` (or the x-axis), keeping the result deterministic.
    """
    v = np.asarray(v, dtype=float)
    cos_tilt = np.clip(v[2], -1.0, 1.0)
    if np.arccos(cos_tilt) <= theta_max:
        return v
    horizontal = np.array([v[0], v[1], 0.0])
    size = np.linalg.norm(horizontal)
    if size < 1e-12:
        if previous is not None:
            horizontal = np.array([previous[0], previous[1], 0.0])
            size = np.linalg.norm(horizontal)
        if size < 1e-12:
            horizontal = np.array([1.0, 0.0, 0.0])
            size = 1.0
    return np.cos(theta_max) * _EZ + np.sin(theta_max) * horizontal / size


def retract_and_cap(f, g, step, theta_max):
    """One feasible update of a single boresight: retract then cap-project.

    Raises StepTooLargeError when f + step * g (numerically) vanishes, in
    which case the caller should backtrack.
    """
    v = np.asarray(f, dtype=float) + step * np.asarray(g, dtype=float)
    size = np.linalg.norm(v)
    if size < 1e-12:
        raise StepTooLargeError("retraction produced a zero vector")
    return project_to_cap(v / size, theta_max, previous=f)


@dataclass(frozen=True)
class PgaConfig:
    """Step-size and termination parameters of the projected gradient ascent."""

    alpha0: float = 1.0          # initial trial step
    rho: float = 0.5             # backtracking decay
    c: float = 1e-4              # Armijo sufficient-increase parameter
    eps: float = 1e-6            # stop when max projected-gradient norm <= eps
    max_iters: int = 500
    max_backtracks: int = 40

    def __post_init__(self):
        if not self.alpha0 > 0 or not 0 < self.rho < 1 or not 0 < self.c < 1:
            raise ValueError("need alpha0 > 0, rho in (0,1), c in (0,1)")
        if not self.eps > 0 or self.max_iters < 1 or self.max_backtracks < 0:
            raise ValueError("need eps > 0, max_iters >= 1, max_backtracks >= 0")


@dataclass
class PgaTrace:
    """Iteration history of one projected gradient ascent run.

    ``objective`` holds the value at the start point followed by one entry
    per accepted step; ``grad_norm`` the max projected-gradient norm at each
    iterate where it was evaluated.
    """

    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    orientations: np.ndarray | None = None
    termination: str = ""

    @property
    def n_iters(self):
        return len(self.step_size)

    @property
    def final_objective(self):
        return self.objective[-1]


def pga(fun, start, theta_max, cfg=None):
    """Maximize ``fun`` over the product of spherical caps from ``start``.

    ``fun`` maps an (N, 3) orientation matrix to (value, gradient) with the
    gradient of shape (N, 3). The accepted-objective sequence is
    non-decreasing; termination is by small projected gradient, iteration
    limit, or Armijo failure ("step-failure", treated as stationary).
    """
    cfg = cfg or PgaConfig()
    F = validate_orientation(start, theta_max).copy()
    value, grad = fun(F)
    trace = PgaTrace()
    trace.objective.append(float(value))

    for _ in range(cfg.max_iters):
        tangent = grad - np.einsum("nm,nm->n", F, grad)[:, None] * F
        norms = np.linalg.norm(tangent, axis=1)
        trace.grad_norm.append(float(norms.max()))
        if norms.max() <= cfg.eps:
            trace.termination = "gradient-norm"
            break
        ascent_budget = float(np.sum(norms ** 2))

        accepted = False
        for q in range(cfg.max_backtracks + 1):
            step = cfg.alpha0 * cfg.rho ** q
            try:
                candidate = np.array(
                    [retract_and_cap(F[n], tangent[n], step, theta_max)
                     for n in range(F.shape[0])])
            except StepTooLargeError:
                continue
            cand_value, cand_grad = fun(candidate)
            if cand_value >= value + cfg.c * step * ascent_budget:
                F, value, grad = candidate, cand_value, cand_grad
                trace.objective.append(float(value))
                trace.step_size.append(step)
                trace.backtracks.append(q)
                accepted = True
                break
        if not accepted:
            trace.termination = "step-failure"
            break
    else:
        trace.termination = "max-iters"
    trace.orientations = F
    return trace


def nmse_objective(scenario, tables, orientations, stats=None, est=None):
    """Mean NMSE over users and its orientation gradient (minimization metric)."""
    return mean_nmse_and_gradient(scenario, tables, orientations, stats=stats, est=est)


def make_objective(scenario, tables, receiver):
    """Ascent objective (value, gradient) for one receiver type.

    "mrc" and "wzf" maximize the corresponding sum-rate surrogate; "nmse"
    maximizes the negated mean NMSE. The NMSE objective warns when the
    numerical rank of any user's covariance changes between evaluations.
    """
    if receiver == "mrc":
        def fun(F):
            stats = channel_statistics(scenario, tables, F)
            est = estimation_statistics(stats, scenario)
            terms = mrc_surrogate(stats, est, scenario)
            grad = mrc_gradient(scenario, tables, F, stats=stats, est=est, terms=terms)
            return terms.sum_rate, grad
        return fun
    if receiver == "wzf":
        def fun(F):
            stats = channel_statistics(scenario, tables, F)
            est = estimation_statistics(stats, scenario)
            terms = wzf_surrogate(stats, est, scenario)
            grad = wzf_gradient(scenario, tables, F, stats=stats, est=est, terms=terms)
            return terms.sum_rate, grad
        return fun
    if receiver == "nmse":
        last_ranks = [None]

        def fun(F):
            stats = channel_statistics(scenario, tables, F)
            est = estimation_statistics(stats, scenario)
            ranks = tuple(covariance_ranks(est))
            if last_ranks[0] is not None and ranks != last_ranks[0]:
                warnings.warn(
                    f"covariance rank changed across NMSE evaluations: "
                    f"{last_ranks[0]} -> {ranks}", RuntimeWarning, stacklevel=2)
            last_ranks[0] = ranks
            value, grad = mean_nmse_and_gradient(scenario, tables, F, stats=stats, est=est)
            return -value, -grad
        return fun
    raise ValueError(f"unknown receiver {receiver!r}")


def optimize_orientation(scenario, tables, receiver, cfg=None, n_restarts=1, seed=0):
    """Best-of-restarts projected gradient ascent for one receiver.

    Restart 0 starts from broadside; further restarts start uniformly on the
    cap with streams derived from ``seed``. Returns (orientations, trace) of
    the best run.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    fun = make_objective(scenario, tables, receiver)
    theta_max = scenario.theta_max
    best = None
    for restart in range(n_restarts):
        if restart == 0:
            start = broadside_orientation(scenario.n_antennas)
        else:
            rng = np.random.default_rng(np.random.SeedSequence((int(seed), restart)))
            start = uniform_cap_orientation(scenario.n_antennas, theta_max, rng)
        trace = pga(fun, start, theta_max, cfg)
        if best is None or trace.final_objective > best.final_objective:
            best = trace
    return best.orientations, best
