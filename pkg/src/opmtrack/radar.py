"""Simulated Doppler radar: FOV gating, noisy returns, and the Gaussian
observation possibility with its scaled likelihood counterpart.

The topocentric mapping lives in :mod:`opmtrack.dynamics`; this module never
re-derives it.  Detection is deterministic inside the field of view: no
missed detections, no clutter.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DEFAULT_CONSTANTS,
    GeodeticSite,
    OrbitalState,
    PhysicalConstants,
    eci_to_topocentric,
    station_state,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RadarStation:
    """Ground radar with a spherical field of view and diagonal noise."""
    site: GeodeticSite
    fov_radius: float = 2.0e6  # m, ECI distance
    noise_sigmas: tuple[float, float, float, float] = (
        28.0, math.radians(0.1), math.radians(0.1), 11.0,
    )
    station_id: str = "radar"

    def __post_init__(self):
        if self.fov_radius <= 0.0:
            raise ValueError("fov_radius must be strictly positive")
        if any(s <= 0.0 for s in self.noise_sigmas):
            raise ValueError("noise sigmas must be strictly positive")

    @property
    def noise_covariance(self) -> np.ndarray:
        return np.diag(np.square(self.noise_sigmas))


@dataclass(frozen=True)
class RadarObservation:
    """[range m, azimuth rad, elevation rad, range rate m/s] at an epoch."""
    values: np.ndarray
    epoch: float
    station_id: str = "radar"

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(4)
        if values[0] <= 0.0:
            raise ValueError("range must be strictly positive")
        if not -math.pi / 2 <= values[2] <= math.pi / 2:
            raise ValueError("elevation must lie in [-pi/2, pi/2]")
        if not 0.0 <= values[1] < TWO_PI:
            raise ValueError("azimuth must lie in [0, 2pi)")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    wrapped = np.asarray(angle, dtype=float) % TWO_PI
    wrapped = np.where(wrapped > math.pi, wrapped - TWO_PI, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def in_fov(
    station: RadarStation,
    state: OrbitalState,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> bool:
    """True when the object is inside the closed FOV ball at its epoch."""
    position, _ = station_state(station.site, state.epoch, constants)
    return float(np.linalg.norm(state.position - position)) <= station.fov_radius


def observe(
    station: RadarStation,
    state: OrbitalState,
    rng: np.random.Generator,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> RadarObservation:
    """Noisy radar return for an in-FOV state; raises when called outside."""
    if not in_fov(station, state, constants):
        raise ValueError("observe() called for a state outside the field of view")
    truth = eci_to_topocentric(station.site, state, constants)
    noisy = truth + rng.normal(size=4) * np.asarray(station.noise_sigmas)
    # Spherical re-wrap: an elevation pushed past the pole flips azimuth.
    if noisy[2] > math.pi / 2:
        noisy[2] = math.pi - noisy[2]
        noisy[1] += math.pi
    elif noisy[2] < -math.pi / 2:
        noisy[2] = -math.pi - noisy[2]
        noisy[1] += math.pi
    noisy[1] %= TWO_PI
    return RadarObservation(noisy, state.epoch, station.station_id)


def observation_residual(
    station: RadarStation,
    observation: RadarObservation,
    state: OrbitalState,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Observed minus predicted return, azimuth wrapped to (-pi, pi]."""
    predicted = eci_to_topocentric(station.site, state, constants)
    residual = observation.values - predicted
    residual[1] = wrap_angle(residual[1])
    return residual


def gaussian_possibility(residual: np.ndarray, covariance: np.ndarray) -> float:
    """exp(-r' S^-1 r / 2): dimensionless, 1 exactly at zero residual."""
    residual = np.asarray(residual, dtype=float)
    value = residual @ np.linalg.solve(np.asarray(covariance, dtype=float), residual)
    return math.exp(-0.5 * float(value))


def radar_possibility(
    station: RadarStation,
    observation: RadarObservation,
    state: OrbitalState,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> float:
    """Gaussian possibility of the return given a candidate state."""
    residual = observation_residual(station, observation, state, constants)
    return gaussian_possibility(residual, station.noise_covariance)


def radar_likelihood(
    station: RadarStation,
    observation: RadarObservation,
    state: OrbitalState,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> float:
    """Probability-density counterpart; carries the inverse unit volume of
    the observation space and therefore scales under unit changes."""
    sigmas = np.asarray(station.noise_sigmas)
    norm = math.sqrt((TWO_PI ** 4) * float(np.prod(np.square(sigmas))))
    return radar_possibility(station, observation, state, constants) / norm


def write_observation_csv(path, observations: list[RadarObservation]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["epoch_s", "range_m", "azimuth_rad", "elevation_rad",
             "range_rate_ms", "station_id"]
        )
        for obs in observations:
            writer.writerow(
                [repr(float(obs.epoch))]
                + [repr(float(v)) for v in obs.values]
                + [obs.station_id]
            )


def read_observation_csv(path) -> list[RadarObservation]:
    observations = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            observations.append(RadarObservation(
                values=np.array([float(c) for c in row[1:5]]),
                epoch=float(row[0]),
                station_id=row[5],
            ))
    return observations
