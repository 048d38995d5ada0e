"""Orbital states, frames, element conversion, and numerical propagation.

States are position/velocity in a single Earth-centered inertial frame with
epochs in seconds past a fixed reference instant.  The force model is
two-body gravity plus configurable zonal harmonics (J2 by default, up to
J4); Earth orientation is a uniform rotation about the polar axis over a
spherical Earth.  Per-interval process noise is a constant acceleration-rate
vector in the object's osculating radial/in-track/cross-track frame.

All types are immutable and all functions are pure; distinct states can be
propagated concurrently.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import FrameError, NumericError, ReentryError


@dataclass(frozen=True)
class PhysicalConstants:
    """Earth model constants (SI units)."""
    mu_earth: float = 3.986004418e14      # m^3/s^2
    equatorial_radius: float = 6378137.0  # m
    j2: float = 1.08263e-3
    j3: float = -2.53266e-6
    j4: float = -1.61996e-6
    rotation_rate: float = 7.2921159e-5   # rad/s

    def __post_init__(self):
        for name in ("mu_earth", "equatorial_radius", "j2", "rotation_rate"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class ForceConfig:
    """Propagation force model and integrator tolerances."""
    zonal_max: int = 2      # 0 = two-body only; 2, 3, 4 add J2..J4
    rtol: float = 1e-12
    atol: float = 1e-9      # meters

    def __post_init__(self):
        if self.zonal_max not in (0, 2, 3, 4):
            raise ValueError("zonal_max must be one of 0, 2, 3, 4")


DEFAULT_FORCES = ForceConfig()


@dataclass(frozen=True)
class OrbitalState:
    """Inertial position (m) and velocity (m/s) at an epoch (s)."""
    position: np.ndarray
    velocity: np.ndarray
    epoch: float

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        v = np.array(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("state components must be finite")
        p.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


@dataclass(frozen=True)
class KeplerElements:
    """Classical elements; angles in degrees, mean motion in rad/s."""
    raan_deg: float
    inclination_deg: float
    arg_perigee_deg: float
    mean_motion_rad_s: float
    eccentricity: float
    mean_anomaly_deg: float

    def __post_init__(self):
        if not 0.0 <= self.eccentricity < 1.0:
            raise ValueError(f"eccentricity {self.eccentricity} outside [0, 1)")
        if self.mean_motion_rad_s <= 0.0:
            raise ValueError("mean motion must be strictly positive")
        for name in ("raan_deg", "arg_perigee_deg", "mean_anomaly_deg", "inclination_deg"):
            object.__setattr__(self, name, getattr(self, name) % 360.0)


def solve_kepler(mean_anomaly_rad: float, eccentricity: float,
                 tol: float = 1e-12, max_iter: int = 50) -> float:
    """Eccentric anomaly from Kepler's equation by Newton iteration."""
    if eccentricity >= 1.0:
        raise ValueError("Kepler solver requires eccentricity < 1")
    m = math.fmod(mean_anomaly_rad, 2.0 * math.pi)
    e_anom = m if eccentricity < 0.8 else math.pi
    for _ in range(max_iter):
        delta = (e_anom - eccentricity * math.sin(e_anom) - m) / (
            1.0 - eccentricity * math.cos(e_anom)
        )
        e_anom -= delta
        if abs(delta) < tol:
            return e_anom
    raise NumericError(
        f"Kepler iteration did not reach |dE| < {tol} in {max_iter} steps"
    )


def kepler_to_cartesian(
    elements: KeplerElements,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    epoch: float = 0.0,
) -> OrbitalState:
    """Inertial state from classical elements (epoch supplied by the caller)."""
    n = elements.mean_motion_rad_s
    ecc = elements.eccentricity
    a = (constants.mu_earth / (n * n)) ** (1.0 / 3.0)
    e_anom = solve_kepler(math.radians(elements.mean_anomaly_deg), ecc)

    cos_e, sin_e = math.cos(e_anom), math.sin(e_anom)
    beta = math.sqrt(1.0 - ecc * ecc)
    r_pf = np.array([a * (cos_e - ecc), a * beta * sin_e, 0.0])
    rate = n / (1.0 - ecc * cos_e)
    v_pf = np.array([-a * rate * sin_e, a * beta * rate * cos_e, 0.0])

    co, so = math.cos(math.radians(elements.raan_deg)), math.sin(math.radians(elements.raan_deg))
    ci, si = math.cos(math.radians(elements.inclination_deg)), math.sin(math.radians(elements.inclination_deg))
    cw, sw = math.cos(math.radians(elements.arg_perigee_deg)), math.sin(math.radians(elements.arg_perigee_deg))
    rot = np.array([
        [co * cw - so * sw * ci, -co * sw - so * cw * ci, so * si],
        [so * cw + co * sw * ci, -so * sw + co * cw * ci, -co * si],
        [sw * si, cw * si, ci],
    ])
    return OrbitalState(rot @ r_pf, rot @ v_pf, epoch)


def specific_angular_momentum(state: OrbitalState) -> np.ndarray:
    """p x v in m^2/s; fixes the orbital plane orientation."""
    return np.cross(state.position, state.velocity)


def specific_orbital_energy(
    state: OrbitalState, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """-mu/|p| + |v|^2/2 in m^2/s^2; negative for bounded orbits."""
    r = float(np.linalg.norm(state.position))
    v2 = float(state.velocity @ state.velocity)
    return -constants.mu_earth / r + 0.5 * v2


def ric_basis(state: OrbitalState) -> np.ndarray:
    """Rows are the radial, in-track, cross-track unit vectors in ECI."""
    r_hat = state.position / np.linalg.norm(state.position)
    h = np.cross(state.position, state.velocity)
    h_norm = float(np.linalg.norm(h))
    if h_norm == 0.0 or not np.isfinite(h_norm):
        raise FrameError("radial trajectory has no RIC frame (p x v = 0)")
    c_hat = h / h_norm
    i_hat = np.cross(c_hat, r_hat)
    return np.vstack([r_hat, i_hat, c_hat])


def eci_to_ric(reference: OrbitalState, vector: np.ndarray) -> np.ndarray:
    return ric_basis(reference) @ np.asarray(vector, dtype=float)


def ric_to_eci(reference: OrbitalState, vector: np.ndarray) -> np.ndarray:
    return ric_basis(reference).T @ np.asarray(vector, dtype=float)


# --- Propagation ---

def _zonal_acceleration(
    p: np.ndarray, constants: PhysicalConstants, zonal_max: int
) -> np.ndarray:
    """Zonal harmonic accelerations for an (N, 3) array of positions."""
    mu, re = constants.mu_earth, constants.equatorial_radius
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    r2 = x * x + y * y + z * z
    r = np.sqrt(r2)
    acc = np.zeros_like(p)
    if zonal_max >= 2:
        c2 = -1.5 * constants.j2 * mu * re * re / (r2 * r2 * r)
        z2r2 = z * z / r2
        acc[:, 0] += c2 * x * (1.0 - 5.0 * z2r2)
        acc[:, 1] += c2 * y * (1.0 - 5.0 * z2r2)
        acc[:, 2] += c2 * z * (3.0 - 5.0 * z2r2)
    if zonal_max >= 3:
        r9 = r2 ** 4 * r
        c3 = constants.j3 * mu * re ** 3 / (2.0 * r9)
        z2 = z * z
        acc[:, 0] += 5.0 * c3 * x * z * (7.0 * z2 - 3.0 * r2)
        acc[:, 1] += 5.0 * c3 * y * z * (7.0 * z2 - 3.0 * r2)
        acc[:, 2] += c3 * (35.0 * z2 * z2 - 30.0 * z2 * r2 + 3.0 * r2 * r2)
    if zonal_max >= 4:
        r11 = r2 ** 5 * r
        c4 = 5.0 * constants.j4 * mu * re ** 4 / (8.0 * r11)
        z2 = z * z
        poly_xy = 63.0 * z2 * z2 - 42.0 * z2 * r2 + 3.0 * r2 * r2
        acc[:, 0] += c4 * x * poly_xy
        acc[:, 1] += c4 * y * poly_xy
        acc[:, 2] += c4 * z * (63.0 * z2 * z2 - 70.0 * z2 * r2 + 15.0 * r2 * r2)
    return acc


def _ensemble_rhs(
    t: float,
    flat: np.ndarray,
    t_start: float,
    noise: np.ndarray | None,
    constants: PhysicalConstants,
    forces: ForceConfig,
) -> np.ndarray:
    states = flat.reshape(-1, 6)
    p, v = states[:, :3], states[:, 3:]
    r = np.linalg.norm(p, axis=1, keepdims=True)
    acc = -constants.mu_earth * p / r ** 3
    if forces.zonal_max >= 2:
        acc = acc + _zonal_acceleration(p, constants, forces.zonal_max)
    if noise is not None:
        # Noise grows linearly over the interval and is expressed in the
        # particle's current osculating RIC frame.
        h = np.cross(p, v)
        h_norm = np.linalg.norm(h, axis=1, keepdims=True)
        r_hat = p / r
        c_hat = h / h_norm
        i_hat = np.cross(c_hat, r_hat)
        ric = (t - t_start) * noise
        acc = acc + ric[:, 0:1] * r_hat + ric[:, 1:2] * i_hat + ric[:, 2:3] * c_hat
    return np.concatenate([v, acc], axis=1).ravel()


def propagate_states(
    states: np.ndarray,
    t_start: float,
    t_target: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    forces: ForceConfig = DEFAULT_FORCES,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Propagate an (N, 6) block of states to a common target epoch.

    One noise draw per row, constant over the interval.  The whole block is
    integrated as a single ODE system; the adaptive step is therefore shared,
    which is deterministic and much faster than per-row integration.
    """
    states = np.asarray(states, dtype=float)
    if t_target < t_start:
        raise ValueError(f"cannot propagate backwards: {t_target} < {t_start}")
    if t_target == t_start:
        return states.copy()
    if noise is not None:
        noise = np.asarray(noise, dtype=float).reshape(states.shape[0], 3)

    def min_altitude(t, flat, *_):
        p = flat.reshape(-1, 6)[:, :3]
        return float(np.min(np.linalg.norm(p, axis=1)) - constants.equatorial_radius)

    min_altitude.terminal = True
    min_altitude.direction = -1.0

    solution = solve_ivp(
        _ensemble_rhs,
        (t_start, t_target),
        states.ravel(),
        method="RK45",
        rtol=forces.rtol,
        atol=forces.atol,
        args=(t_start, noise, constants, forces),
        events=min_altitude,
    )
    if solution.status == 1:
        raise ReentryError(
            f"trajectory reached the Earth's surface near t={solution.t_events[0][0]:.3f}"
        )
    if not solution.success:
        raise NumericError(f"propagation failed: {solution.message}")
    return solution.y[:, -1].reshape(states.shape)


def propagate(
    state: OrbitalState,
    t_target: float,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    forces: ForceConfig = DEFAULT_FORCES,
    noise: np.ndarray | None = None,
) -> OrbitalState:
    """Propagate a single state, optionally with one RIC noise draw (m/s^3)."""
    block = state.vector[None, :]
    noise_block = None if noise is None else np.asarray(noise, dtype=float)[None, :]
    out = propagate_states(block, state.epoch, t_target, constants, forces, noise_block)
    return OrbitalState(out[0, :3], out[0, 3:], t_target)


def propagate_trajectory(
    state: OrbitalState,
    epochs: np.ndarray,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
    forces: ForceConfig = DEFAULT_FORCES,
) -> np.ndarray:
    """Noise-free states at each requested epoch (sorted, >= state.epoch)."""
    epochs = np.asarray(epochs, dtype=float)
    if epochs.size == 0:
        return np.empty((0, 6))
    if np.any(np.diff(epochs) < 0.0) or epochs[0] < state.epoch:
        raise ValueError("epochs must be sorted and not precede the state epoch")

    def min_altitude(t, flat, *_):
        p = flat.reshape(-1, 6)[:, :3]
        return float(np.min(np.linalg.norm(p, axis=1)) - constants.equatorial_radius)

    min_altitude.terminal = True
    min_altitude.direction = -1.0

    solution = solve_ivp(
        _ensemble_rhs,
        (state.epoch, float(epochs[-1])),
        state.vector,
        method="RK45",
        rtol=forces.rtol,
        atol=forces.atol,
        t_eval=epochs,
        args=(state.epoch, None, constants, forces),
        events=min_altitude,
    )
    if solution.status == 1:
        raise ReentryError(
            f"trajectory reached the Earth's surface near t={solution.t_events[0][0]:.3f}"
        )
    if not solution.success:
        raise NumericError(f"propagation failed: {solution.message}")
    return solution.y.T


# --- Ground stations and spherical frames ---

@dataclass(frozen=True)
class GeodeticSite:
    """Station site on a spherical Earth."""
    latitude_deg: float
    longitude_deg: float
    altitude_m: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ValueError("latitude must lie in [-90, 90] degrees")


def station_state(
    site: GeodeticSite, epoch: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> tuple[np.ndarray, np.ndarray]:
    """Station ECI position and velocity under uniform Earth rotation."""
    lat = math.radians(site.latitude_deg)
    theta = math.radians(site.longitude_deg) + constants.rotation_rate * epoch
    radius = constants.equatorial_radius + site.altitude_m
    position = radius * np.array([
        math.cos(lat) * math.cos(theta),
        math.cos(lat) * math.sin(theta),
        math.sin(lat),
    ])
    spin = np.array([0.0, 0.0, constants.rotation_rate])
    return position, np.cross(spin, position)


@dataclass(frozen=True)
class SphericalFrame:
    """Origin plus rotating orthonormal basis for 6-state spherical coordinates.

    Rows of ``basis`` are the (A, B, C) axes: the first angle is measured
    from B toward A in the AB-plane, the second is the latitude toward C.
    ``rotation`` is the angular velocity of the basis (and origin) in ECI.
    """
    origin_position: np.ndarray
    origin_velocity: np.ndarray
    basis: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        for name, shape in (("origin_position", (3,)), ("origin_velocity", (3,)),
                            ("basis", (3, 3)), ("rotation", (3,))):
            arr = np.array(getattr(self, name), dtype=float).reshape(shape)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def station_frame(
    site: GeodeticSite, epoch: float, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> SphericalFrame:
    """Topocentric east-north-up frame: angles are azimuth (from north toward
    east) and elevation."""
    position, velocity = station_state(site, epoch, constants)
    lat = math.radians(site.latitude_deg)
    theta = math.radians(site.longitude_deg) + constants.rotation_rate * epoch
    east = np.array([-math.sin(theta), math.cos(theta), 0.0])
    north = np.array([-math.sin(lat) * math.cos(theta),
                      -math.sin(lat) * math.sin(theta),
                      math.cos(lat)])
    up = np.array([math.cos(lat) * math.cos(theta),
                   math.cos(lat) * math.sin(theta),
                   math.sin(lat)])
    return SphericalFrame(
        origin_position=position,
        origin_velocity=velocity,
        basis=np.vstack([east, north, up]),
        rotation=np.array([0.0, 0.0, constants.rotation_rate]),
    )


def eci_frame() -> SphericalFrame:
    """Earth-centered inertial spherical frame: right ascension/declination."""
    return SphericalFrame(
        origin_position=np.zeros(3),
        origin_velocity=np.zeros(3),
        basis=np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
        rotation=np.zeros(3),
    )


def states_to_spherical(states: np.ndarray, frame: SphericalFrame) -> np.ndarray:
    """Map (N, 6) inertial states to [r, theta, phi, r', theta', phi'].

    Rates are true time derivatives, including the rotation of the frame's
    basis, so the first four components match a range/angles/range-rate
    sensor reading exactly.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    d = states[:, :3] - frame.origin_position
    d_dot = states[:, 3:] - frame.origin_velocity
    comp = d @ frame.basis.T
    # d/dt of components on a rotating basis: e_i' = omega x e_i.
    basis_rates = np.cross(frame.rotation, frame.basis)
    comp_dot = d_dot @ frame.basis.T + d @ basis_rates.T

    ca, cb, cc = comp[:, 0], comp[:, 1], comp[:, 2]
    da, db, dc = comp_dot[:, 0], comp_dot[:, 1], comp_dot[:, 2]
    r = np.linalg.norm(comp, axis=1)
    theta = np.arctan2(ca, cb)
    phi = np.arcsin(np.clip(cc / r, -1.0, 1.0))
    r_dot = (ca * da + cb * db + cc * dc) / r
    planar = ca * ca + cb * cb
    theta_dot = (da * cb - ca * db) / planar
    phi_dot = (dc - r_dot * cc / r) / (r * np.cos(phi))
    return np.column_stack([r, theta, phi, r_dot, theta_dot, phi_dot])


def spherical_to_states(spherical: np.ndarray, frame: SphericalFrame) -> np.ndarray:
    """Inverse of :func:`states_to_spherical` (exact round trip)."""
    s = np.atleast_2d(np.asarray(spherical, dtype=float))
    r, theta, phi = s[:, 0], s[:, 1], s[:, 2]
    r_dot, theta_dot, phi_dot = s[:, 3], s[:, 4], s[:, 5]
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)

    comp = np.column_stack([r * cp * st, r * cp * ct, r * sp])
    comp_dot = np.column_stack([
        r_dot * cp * st - r * sp * st * phi_dot + r * cp * ct * theta_dot,
        r_dot * cp * ct - r * sp * ct * phi_dot - r * cp * st * theta_dot,
        r_dot * sp + r * cp * phi_dot,
    ])
    d = comp @ frame.basis
    basis_rates = np.cross(frame.rotation, frame.basis)
    d_dot = (comp_dot - d @ basis_rates.T) @ frame.basis
    positions = d + frame.origin_position
    velocities = d_dot + frame.origin_velocity
    return np.concatenate([positions, velocities], axis=1)


def state_to_spherical(state: OrbitalState, frame: SphericalFrame) -> np.ndarray:
    return states_to_spherical(state.vector[None, :], frame)[0]


def spherical_to_state(
    spherical: np.ndarray, frame: SphericalFrame, epoch: float
) -> OrbitalState:
    out = spherical_to_states(np.asarray(spherical)[None, :], frame)[0]
    return OrbitalState(out[:3], out[3:], epoch)


def eci_to_topocentric(
    site: GeodeticSite,
    state: OrbitalState,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Observation 4-vector [range m, azimuth rad, elevation rad, range rate m/s].

    Azimuth is measured from north toward east and wrapped to [0, 2pi).
    """
    frame = station_frame(site, state.epoch, constants)
    spherical = state_to_spherical(state, frame)
    if spherical[0] == 0.0:
        raise FrameError("object collocated with the station: angles undefined")
    observation = spherical[:4].copy()
    observation[1] = observation[1] % (2.0 * math.pi)
    return observation


def write_ephemeris_csv(path, epochs: np.ndarray, states: np.ndarray) -> None:
    """Ephemeris rows: epoch, position (3 cols, m), velocity (3 cols, m/s)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch_s", "px_m", "py_m", "pz_m", "vx_ms", "vy_ms", "vz_ms"])
        for t, row in zip(epochs, states):
            writer.writerow([repr(float(t))] + [repr(float(c)) for c in row])


def read_ephemeris_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an ephemeris written by :func:`write_ephemeris_csv`."""
    epochs = []
    states = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for row in reader:
            epochs.append(float(row[0]))
            states.append([float(c) for c in row[1:7]])
    return np.asarray(epochs), np.asarray(states)
