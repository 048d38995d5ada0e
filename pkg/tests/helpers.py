"""Independent oracles used across the test suite.

Everything here is deliberately written from first principles (textbook
relations, finite differences, brute-force loops) and never calls the code
path it is used to check.
"""
import math

import numpy as np

TWO_PI = 2.0 * math.pi


def cartesian_to_kepler(position, velocity, mu):
    """Classical elements from a cartesian state via the e-vector route.

    Returns (raan_deg, inclination_deg, arg_perigee_deg, mean_motion_rad_s,
    eccentricity, mean_anomaly_deg), angles in [0, 360).
    """
    p = np.asarray(position, dtype=float)
    v = np.asarray(velocity, dtype=float)
    r = np.linalg.norm(p)
    h = np.cross(p, v)
    node = np.cross([0.0, 0.0, 1.0], h)
    e_vec = np.cross(v, h) / mu - p / r
    ecc = np.linalg.norm(e_vec)
    energy = 0.5 * float(v @ v) - mu / r
    a = -mu / (2.0 * energy)
    mean_motion = math.sqrt(mu / a**3)
    inclination = math.acos(h[2] / np.linalg.norm(h))
    raan = math.atan2(node[1], node[0]) % TWO_PI
    arg_perigee = math.acos(
        np.clip(node @ e_vec / (np.linalg.norm(node) * ecc), -1.0, 1.0)
    )
    if e_vec[2] < 0.0:
        arg_perigee = TWO_PI - arg_perigee
    true_anom = math.acos(np.clip(e_vec @ p / (ecc * r), -1.0, 1.0))
    if p @ v < 0.0:
        true_anom = TWO_PI - true_anom
    ecc_anom = 2.0 * math.atan(
        math.sqrt((1.0 - ecc) / (1.0 + ecc)) * math.tan(true_anom / 2.0)
    )
    mean_anom = (ecc_anom - ecc * math.sin(ecc_anom)) % TWO_PI
    return (
        math.degrees(raan) % 360.0,
        math.degrees(inclination) % 360.0,
        math.degrees(arg_perigee) % 360.0,
        mean_motion,
        ecc,
        math.degrees(mean_anom) % 360.0,
    )


def _digit_sum_mod10(line):
    total = 0
    for ch in line:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


def encode_tle(catalog_id, epoch_year2, epoch_day, inclination_deg, raan_deg,
               eccentricity, arg_perigee_deg, mean_anomaly_deg, mean_motion_rev_day):
    """Build a pair of valid 69-character TLE lines (encoder oracle)."""
    body1 = (
        f"1 {catalog_id:05d}U 17001A   "
        f"{epoch_year2:02d}{epoch_day:012.8f} "
        f" .00000000  00000-0  00000-0 0  999"
    )
    ecc_digits = f"{eccentricity:.7f}"[2:]
    body2 = (
        f"2 {catalog_id:05d} {inclination_deg:8.4f} {raan_deg:8.4f} "
        f"{ecc_digits} {arg_perigee_deg:8.4f} {mean_anomaly_deg:8.4f} "
        f"{mean_motion_rev_day:11.8f}  999"
    )
    assert len(body1) == 68, len(body1)
    assert len(body2) == 68, len(body2)
    return (
        body1 + str(_digit_sum_mod10(body1)),
        body2 + str(_digit_sum_mod10(body2)),
    )


def zonal_perturbation_potential(position, mu, re, j_coeffs):
    """Zonal part of the geopotential (central term excluded), from explicit
    Legendre polynomials."""
    x, y, z = position
    r = math.sqrt(x * x + y * y + z * z)
    u = z / r
    legendre = {
        2: (3 * u**2 - 1) / 2,
        3: (5 * u**3 - 3 * u) / 2,
        4: (35 * u**4 - 30 * u**2 + 3) / 8,
    }
    total = 0.0
    for order, j in j_coeffs.items():
        total -= j * (re / r) ** order * legendre[order]
    return mu / r * total


def zonal_gradient(position, mu, re, j_coeffs, step=1.0):
    """Central-difference oracle for the zonal perturbing acceleration."""
    grad = np.zeros(3)
    for axis in range(3):
        fwd = np.array(position, dtype=float)
        back = np.array(position, dtype=float)
        fwd[axis] += step
        back[axis] -= step
        grad[axis] = (
            zonal_perturbation_potential(fwd, mu, re, j_coeffs)
            - zonal_perturbation_potential(back, mu, re, j_coeffs)
        ) / (2.0 * step)
    return grad


def kalman_1d(prior_mean, prior_var, observed, obs_var):
    """Closed-form scalar conjugate-Gaussian posterior."""
    gain = prior_var / (prior_var + obs_var)
    return prior_mean + gain * (observed - prior_mean), (1.0 - gain) * prior_var


def weighted_moments(values, weights):
    """Plain-loop weighted mean and population std per column."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    weights = np.asarray(weights, dtype=float)
    mean = np.zeros(values.shape[1])
    for w, row in zip(weights, values):
        mean += w * row
    var = np.zeros(values.shape[1])
    for w, row in zip(weights, values):
        var += w * (row - mean) ** 2
    return mean, np.sqrt(var)
