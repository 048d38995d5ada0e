"""Sequential Monte Carlo filter over orbital states.

The cloud is a block of weighted inertial states sharing one epoch.  The
filter initializes from the first radar return by rejection sampling over
the unobserved angular rates (admissible-region initial orbit
determination), predicts particles through the noisy dynamics, reweights on
TLE pseudo-observations, and processes radar returns through a Gaussian
approximation in the sensor's spherical frame followed by a linear Kalman
update and a fresh resampling of the posterior.

A single filter loop owns the cloud and the random generator; the pure
per-particle math can fan out safely because every random draw happens in
one documented order inside these functions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DEFAULT_CONSTANTS,
    DEFAULT_FORCES,
    ForceConfig,
    OrbitalState,
    PhysicalConstants,
    SphericalFrame,
    eci_frame,
    propagate_states,
    ric_basis,
    spherical_to_states,
    station_frame,
    states_to_spherical,
)
from .errors import IncompatibleObservationError, InfeasibleRegionError, NumericError
from .radar import RadarObservation, RadarStation, wrap_angle
from .tle import TleModelParams, tle_possibility_many

log = logging.getLogger(__name__)

_WEIGHT_TOL = 1e-9
_ANGULAR = (1, 2)  # indices of azimuth-like and elevation-like components


@dataclass(frozen=True)
class FilterConfig:
    particle_count: int = 500
    resample_threshold: float = 0.20
    process_noise_sigma: float = 1e-5   # m/s^3 per RIC axis
    rate_bound: float = 0.002           # +/- sampling box for angular rates, rad/s
    min_perigee_altitude: float = 200e3  # m
    seed: int = 0
    on_incompatible_tle: str = "skip"   # or "raise"

    def __post_init__(self):
        if not 0.0 < self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in (0, 1]")
        if self.particle_count < 2:
            raise ValueError("particle_count must be at least 2")
        if self.on_incompatible_tle not in ("skip", "raise"):
            raise ValueError("on_incompatible_tle must be 'skip' or 'raise'")


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted particles sharing a common epoch; weights sum to 1."""
    weights: np.ndarray
    states: np.ndarray  # (N, 6) position+velocity rows
    epoch: float

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        states = np.array(self.states, dtype=float)
        if states.shape != (weights.size, 6):
            raise ValueError("states must be an (N, 6) block matching the weights")
        if np.any(weights < 0.0):
            raise ValueError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        weights.flags.writeable = False
        states.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "states", states)

    @property
    def count(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class SphericalGaussian:
    """Gaussian summary of a cloud in a spherical 6-state parametrization."""
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(6)
        cov = np.array(self.covariance, dtype=float).reshape(6, 6)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def effective_ratio(cloud: ParticleCloud) -> float:
    """Normalized effective sample size: 1/(N sum w^2)."""
    return 1.0 / (cloud.count * float(np.sum(cloud.weights ** 2)))


def systematic_resample(cloud: ParticleCloud, rng: np.random.Generator) -> ParticleCloud:
    """Single-offset systematic resampling; output weights are uniform."""
    n = cloud.count
    positions = (rng.random() + np.arange(n)) / n
    indices = np.searchsorted(np.cumsum(cloud.weights), positions)
    indices = np.minimum(indices, n - 1)
    return ParticleCloud(
        weights=np.full(n, 1.0 / n),
        states=cloud.states[indices],
        epoch=cloud.epoch,
    )


def admissible_mask(
    states: np.ndarray,
    config: FilterConfig,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Bounded-orbit acceptance test: negative energy and perigee above the
    configured minimum altitude."""
    states = np.atleast_2d(states)
    mu = constants.mu_earth
    min_radius = constants.equatorial_radius + config.min_perigee_altitude
    r = np.linalg.norm(states[:, :3], axis=1)
    v2 = np.sum(states[:, 3:] ** 2, axis=1)
    energy = -mu / r + 0.5 * v2
    bounded = energy < 0.0
    h2 = np.sum(np.cross(states[:, :3], states[:, 3:]) ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        semi_major = -mu / (2.0 * energy)
        ecc = np.sqrt(np.maximum(0.0, 1.0 + 2.0 * energy * h2 / mu**2))
        perigee = semi_major * (1.0 - ecc)
    return bounded & (perigee >= min_radius)


def init_admissible_region(
    observation: RadarObservation,
    station: RadarStation,
    config: FilterConfig,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    rng: np.random.Generator | None = None,
) -> ParticleCloud:
    """Particle cloud from the first radar return.

    The return fixes range, angles, and range rate; the unobserved angular
    rates are drawn uniformly from the configured box and kept only when
    the reconstructed state passes :func:`admissible_mask`.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    frame = station_frame(station.site, observation.epoch, constants)
    n = config.particle_count

    accepted: list[np.ndarray] = []
    kept = 0
    drawn = 0
    max_draws = 10_000_000
    batch = max(4 * n, 10_000)
    while kept < n:
        if drawn >= max_draws and kept / drawn < 1e-4:
            raise InfeasibleRegionError(
                f"admissible-region acceptance rate {kept / drawn:.2e} after "
                f"{drawn} draws; check the angular-rate bounds"
            )
        rates = rng.uniform(-config.rate_bound, config.rate_bound, size=(batch, 2))
        drawn += batch
        spherical = np.empty((batch, 6))
        spherical[:, :4] = observation.values
        spherical[:, 4:] = rates
        candidates = spherical_to_states(spherical, frame)
        keep = admissible_mask(candidates, config, constants)
        if keep.any():
            accepted.append(candidates[keep])
            kept += int(keep.sum())
    states = np.concatenate(accepted, axis=0)[:n]
    return ParticleCloud(
        weights=np.full(n, 1.0 / n), states=states, epoch=observation.epoch
    )


def predict(
    cloud: ParticleCloud,
    t_target: float,
    config: FilterConfig,
    rng: np.random.Generator,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    forces: ForceConfig = DEFAULT_FORCES,
) -> ParticleCloud:
    """Propagate every particle with a fresh per-particle noise draw.

    Weights are untouched: the transition kernel is the proposal.  A zero
    time step consumes no randomness and returns the cloud unchanged.
    """
    if t_target == cloud.epoch:
        return cloud
    noise = None
    if config.process_noise_sigma > 0.0:
        noise = rng.normal(scale=config.process_noise_sigma, size=(cloud.count, 3))
    states = propagate_states(
        cloud.states, cloud.epoch, t_target, constants, forces, noise
    )
    return ParticleCloud(weights=cloud.weights, states=states, epoch=t_target)


def update_tle(
    cloud: ParticleCloud,
    observed: OrbitalState,
    params: TleModelParams,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    on_incompatible: str = "skip",
) -> ParticleCloud:
    """Reweight the cloud by the TLE possibility of each particle.

    When every particle scores zero the update is skipped with a warning
    (or raised, per ``on_incompatible``): one outlier record must not kill
    a long-running filter.
    """
    values = tle_possibility_many(observed, cloud.states, params, constants)
    numerator = values * cloud.weights
    total = float(numerator.sum())
    if total <= 0.0:
        if on_incompatible == "raise":
            raise IncompatibleObservationError(
                f"TLE at epoch {observed.epoch} scores possibility 0 for every particle"
            )
        log.warning(
            "TLE at epoch %s incompatible with the whole cloud; keeping prior weights",
            observed.epoch,
        )
        return cloud
    return ParticleCloud(
        weights=numerator / total, states=cloud.states, epoch=cloud.epoch
    )


def _weighted_circular_mean(angles: np.ndarray, weights: np.ndarray) -> float:
    return math.atan2(
        float(np.sum(weights * np.sin(angles))),
        float(np.sum(weights * np.cos(angles))),
    )


def to_spherical_gaussian(
    cloud: ParticleCloud, frame: SphericalFrame
) -> SphericalGaussian:
    """Weighted Gaussian summary of the cloud in a spherical frame.

    Angular components use the circular mean and wrapped residuals; a cloud
    spanning more than pi in an angle is flagged but still summarized.
    """
    spherical = states_to_spherical(cloud.states, frame)
    w = cloud.weights
    mean = spherical.T @ w
    residuals = spherical - mean
    for index in _ANGULAR:
        center = _weighted_circular_mean(spherical[:, index], w)
        mean[index] = center
        residuals[:, index] = wrap_angle(spherical[:, index] - center)
        span = residuals[:, index].max() - residuals[:, index].min()
        if span > math.pi:
            log.warning(
                "angular component %d spans %.3f rad > pi; wrap may be ambiguous",
                index, span,
            )
    covariance = (residuals * w[:, None]).T @ residuals
    return SphericalGaussian(mean=mean, covariance=covariance)


def update_radar(
    cloud: ParticleCloud,
    observation: RadarObservation,
    station: RadarStation,
    rng: np.random.Generator,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> ParticleCloud:
    """Gaussian radar update in the sensor's spherical frame.

    Transform, summarize as a Gaussian, apply the linear Kalman correction
    on the observed [range, azimuth, elevation, range rate] components,
    then draw a fresh uniformly-weighted cloud from the posterior and map
    it back to inertial coordinates.
    """
    if observation.epoch != cloud.epoch:
        raise ValueError("observation and cloud epochs differ")
    frame = station_frame(station.site, cloud.epoch, constants)
    prior = to_spherical_gaussian(cloud, frame)

    h = np.zeros((4, 6))
    h[np.arange(4), np.arange(4)] = 1.0
    s = station.noise_covariance
    innovation = observation.values - prior.mean[:4]
    innovation[1] = wrap_angle(innovation[1])
    gain_denominator = h @ prior.covariance @ h.T + s
    try:
        gain = np.linalg.solve(gain_denominator.T, (prior.covariance @ h.T).T).T
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"radar update innovation matrix is singular: {exc}") from exc
    mean = prior.mean + gain @ innovation
    covariance = (np.eye(6) - gain @ h) @ prior.covariance
    covariance = 0.5 * (covariance + covariance.T)

    # Eigendecomposition tolerates the semi-definite covariances that arise
    # when the cloud has collapsed in the observed components.
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    scale = eigenvectors * np.sqrt(np.maximum(eigenvalues, 0.0))
    draws = rng.standard_normal((cloud.count, 6))
    samples = mean + draws @ scale.T
    states = spherical_to_states(samples, frame)
    return ParticleCloud(
        weights=np.full(cloud.count, 1.0 / cloud.count),
        states=states,
        epoch=cloud.epoch,
    )


def map_estimate(cloud: ParticleCloud) -> OrbitalState:
    """Point estimate: weighted spherical mean mapped back to Cartesian.

    Averaging in an Earth-centered spherical parametrization keeps the
    estimate's radius inside the cloud's radius range even when the
    particles spread along an orbital arc.
    """
    summary = to_spherical_gaussian(cloud, eci_frame())
    out = spherical_to_states(summary.mean[None, :], eci_frame())[0]
    return OrbitalState(out[:3], out[3:], cloud.epoch)


@dataclass(frozen=True)
class RicErrorStats:
    """Weighted per-axis offset statistics in the truth's RIC frame."""
    position_mean: np.ndarray
    position_std: np.ndarray
    velocity_mean: np.ndarray
    velocity_std: np.ndarray


def ric_error_stats(cloud: ParticleCloud, truth: OrbitalState) -> RicErrorStats:
    """Particle offsets from the truth rotated into the truth's RIC frame."""
    if truth.epoch != cloud.epoch:
        raise ValueError("truth and cloud epochs differ")
    basis = ric_basis(truth)
    dp = (cloud.states[:, :3] - truth.position) @ basis.T
    dv = (cloud.states[:, 3:] - truth.velocity) @ basis.T
    w = cloud.weights

    def moments(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = block.T @ w
        var = ((block - mean) ** 2).T @ w
        return mean, np.sqrt(var)

    p_mean, p_std = moments(dp)
    v_mean, v_std = moments(dv)
    return RicErrorStats(p_mean, p_std, v_mean, v_std)
