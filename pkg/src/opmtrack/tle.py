"""NORAD two-line-element ingestion and the TLE possibility model.

A TLE is treated as a point pseudo-observation in the inertial state space:
its mean elements are converted as osculating Keplerian elements at the
record epoch.  The possibility of a TLE given a candidate state is the
product of two trapezoids, one over the orbital-plane alignment of the two
specific angular momenta and one over the specific-energy offset.

Parsing and evaluation are pure; evaluation across a particle block is
vectorized.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .dynamics import (
    DEFAULT_CONSTANTS,
    KeplerElements,
    OrbitalState,
    PhysicalConstants,
    kepler_to_cartesian,
)
from .errors import (
    InsufficientDataError,
    TleChecksumError,
    TleFieldError,
    TleFormatError,
)

log = logging.getLogger(__name__)

REFERENCE_EPOCH = datetime(2000, 1, 1, 12, 0, 0)  # epoch zero for all state times

ANGLE_TOLERANCE_FLOOR = 1e-12
ENERGY_TOLERANCE_FLOOR = 1e-6  # m^2/s^2


@dataclass(frozen=True)
class TleRecord:
    catalog_id: int
    epoch: float  # seconds past REFERENCE_EPOCH
    elements: KeplerElements
    line1: str
    line2: str


@dataclass(frozen=True)
class TleModelParams:
    """Trapezoid geometry for the TLE possibility.

    ``angle_tolerance`` is the plateau depth below 1 for the plane-alignment
    trapezoid; ``energy_offset``/``energy_tolerance`` center and half-width
    the energy plateau (m^2/s^2); each ramp reaches zero at ``foot_factor``
    tolerances from the nominal value.
    """
    angle_tolerance: float = 1e-7
    energy_offset: float = -2.67e4
    energy_tolerance: float = 0.5e4
    foot_factor: float = 5.0

    def __post_init__(self):
        if self.angle_tolerance <= 0.0 or self.energy_tolerance <= 0.0:
            raise ValueError("tolerances must be strictly positive")
        if self.foot_factor <= 1.0:
            raise ValueError("foot_factor must exceed 1")


def line_checksum(line: str) -> int:
    """Mod-10 sum of digits over the first 68 columns; '-' counts as 1."""
    total = 0
    for ch in line[:68]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


def _check_line(line: str, number: int) -> None:
    if len(line) != 69:
        raise TleFormatError(
            f"line {number} has {len(line)} characters, expected 69"
        )
    expected = line_checksum(line)
    if line[68] != str(expected):
        raise TleChecksumError(number, expected, line[68])


def _field(line: str, number: int, columns: tuple[int, int], cast):
    """Decode a 1-indexed inclusive column range."""
    text = line[columns[0] - 1:columns[1]]
    try:
        return cast(text)
    except ValueError:
        raise TleFieldError(number, columns, text) from None


def _epoch_seconds(year_two_digit: int, day_of_year: float) -> float:
    year = 2000 + year_two_digit if year_two_digit < 57 else 1900 + year_two_digit
    start = datetime(year, 1, 1) + timedelta(days=day_of_year - 1.0)
    return (start - REFERENCE_EPOCH).total_seconds()


def parse_tle(line1: str, line2: str) -> TleRecord:
    """Decode a TLE record; both checksums and the catalog id must agree."""
    _check_line(line1, 1)
    _check_line(line2, 2)
    catalog = _field(line1, 1, (3, 7), lambda s: int(s))
    catalog2 = _field(line2, 2, (3, 7), lambda s: int(s))
    if catalog != catalog2:
        raise TleFormatError(
            f"catalog id differs between lines: {catalog} vs {catalog2}"
        )
    year = _field(line1, 1, (19, 20), lambda s: int(s))
    day = _field(line1, 1, (21, 32), float)

    inclination = _field(line2, 2, (9, 16), float)
    raan = _field(line2, 2, (18, 25), float)
    eccentricity = _field(line2, 2, (27, 33), lambda s: float("0." + s.strip()))
    arg_perigee = _field(line2, 2, (35, 42), float)
    mean_anomaly = _field(line2, 2, (44, 51), float)
    mean_motion_rev_day = _field(line2, 2, (53, 63), float)

    elements = KeplerElements(
        raan_deg=raan,
        inclination_deg=inclination,
        arg_perigee_deg=arg_perigee,
        mean_motion_rad_s=mean_motion_rev_day * 2.0 * math.pi / 86400.0,
        eccentricity=eccentricity,
        mean_anomaly_deg=mean_anomaly,
    )
    return TleRecord(
        catalog_id=catalog,
        epoch=_epoch_seconds(year, day),
        elements=elements,
        line1=line1,
        line2=line2,
    )


def read_tle_file(path) -> list[TleRecord]:
    """Read consecutive line pairs; a leading '0 ...' name line is skipped."""
    records = []
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    index = 0
    while index < len(lines):
        if lines[index].startswith("0 "):
            index += 1
            continue
        if index + 1 >= len(lines):
            raise TleFormatError("dangling TLE line at end of file")
        records.append(parse_tle(lines[index], lines[index + 1]))
        index += 2
    return records


def tle_to_eci(
    record: TleRecord, constants: PhysicalConstants = DEFAULT_CONSTANTS
) -> OrbitalState:
    """Pseudo-observation: the record's elements as an inertial state."""
    return kepler_to_cartesian(record.elements, constants, epoch=record.epoch)


# --- Offsets and the possibility model ---

def _momentum_rows(states: np.ndarray) -> np.ndarray:
    return np.cross(states[:, :3], states[:, 3:])


def plane_alignment_many(observed: OrbitalState, states: np.ndarray) -> np.ndarray:
    """Normalized dot product of specific angular momenta, one per row."""
    h_obs = np.cross(observed.position, observed.velocity)
    n_obs = np.linalg.norm(h_obs)
    h = _momentum_rows(np.atleast_2d(states))
    norms = np.linalg.norm(h, axis=1)
    if n_obs == 0.0 or np.any(norms == 0.0):
        raise ValueError("degenerate state: zero specific angular momentum")
    return np.clip(h @ (h_obs / n_obs) / norms, -1.0, 1.0)


def plane_alignment(observed: OrbitalState, state: OrbitalState) -> float:
    return float(plane_alignment_many(observed, state.vector[None, :])[0])


def energy_offset_many(
    observed: OrbitalState,
    states: np.ndarray,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Specific-energy difference (observed minus candidate), one per row."""
    states = np.atleast_2d(states)
    mu = constants.mu_earth
    r_obs = np.linalg.norm(observed.position)
    v2_obs = float(observed.velocity @ observed.velocity)
    r = np.linalg.norm(states[:, :3], axis=1)
    v2 = np.sum(states[:, 3:] ** 2, axis=1)
    return -mu * (1.0 / r_obs - 1.0 / r) + 0.5 * (v2_obs - v2)


def energy_offset(
    observed: OrbitalState,
    state: OrbitalState,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> float:
    return float(energy_offset_many(observed, state.vector[None, :], constants)[0])


def alignment_possibility(delta, params: TleModelParams = TleModelParams()):
    """One-sided trapezoid on [-1, 1]: plateau within angle_tolerance of 1."""
    edge = 1.0 - params.angle_tolerance
    foot = 1.0 - params.foot_factor * params.angle_tolerance
    delta = np.asarray(delta, dtype=float)
    ramp = (delta - foot) / (edge - foot)
    out = np.clip(ramp, 0.0, 1.0)
    out = np.where(delta >= edge, 1.0, out)
    return float(out) if out.ndim == 0 else out


def energy_possibility(delta, params: TleModelParams = TleModelParams()):
    """Symmetric trapezoid centered on the nominal energy offset."""
    lo_edge = params.energy_offset - params.energy_tolerance
    hi_edge = params.energy_offset + params.energy_tolerance
    lo_foot = params.energy_offset - params.foot_factor * params.energy_tolerance
    hi_foot = params.energy_offset + params.foot_factor * params.energy_tolerance
    delta = np.asarray(delta, dtype=float)
    rising = (delta - lo_foot) / (lo_edge - lo_foot)
    falling = (hi_foot - delta) / (hi_foot - hi_edge)
    out = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    out = np.where((delta >= lo_edge) & (delta <= hi_edge), 1.0, out)
    return float(out) if out.ndim == 0 else out


def tle_possibility_many(
    observed: OrbitalState,
    states: np.ndarray,
    params: TleModelParams = TleModelParams(),
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """Product of the alignment and energy trapezoids, one value per row."""
    angles = plane_alignment_many(observed, states)
    energies = energy_offset_many(observed, states, constants)
    return alignment_possibility(angles, params) * energy_possibility(energies, params)


def tle_possibility(
    observed: OrbitalState,
    state: OrbitalState,
    params: TleModelParams = TleModelParams(),
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> float:
    return float(tle_possibility_many(observed, state.vector[None, :], params, constants)[0])


# --- Calibration ---

def compute_offsets(
    pairs: list[tuple[OrbitalState, OrbitalState]],
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair (alignment, energy) offsets of TLE states against references."""
    angles = np.array([plane_alignment(y, x) for y, x in pairs])
    energies = np.array([energy_offset(y, x, constants) for y, x in pairs])
    return angles, energies


def calibrate(
    pairs: list[tuple[OrbitalState, OrbitalState]],
    foot_factor: float = 5.0,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> TleModelParams:
    """Fit plateau geometry so every training pair scores possibility 1.

    The angle tolerance is the worst observed deviation below 1; the energy
    plateau is centered on the mean offset with half-width the worst
    excursion.  Degenerate training sets are floored to keep the plateaus
    from collapsing to zero width.
    """
    if len(pairs) < 2:
        raise InsufficientDataError(
            f"calibration needs at least 2 pairs, got {len(pairs)}"
        )
    angles, energies = compute_offsets(pairs, constants)
    angle_tol = float(np.max(1.0 - angles))
    if angle_tol < ANGLE_TOLERANCE_FLOOR:
        log.warning("degenerate angle offsets; flooring tolerance at %g",
                    ANGLE_TOLERANCE_FLOOR)
        angle_tol = ANGLE_TOLERANCE_FLOOR
    center = float(np.mean(energies))
    energy_tol = float(np.max(np.abs(energies - center)))
    if energy_tol < ENERGY_TOLERANCE_FLOOR:
        log.warning("degenerate energy offsets; flooring tolerance at %g",
                    ENERGY_TOLERANCE_FLOOR)
        energy_tol = ENERGY_TOLERANCE_FLOOR
    return TleModelParams(
        angle_tolerance=angle_tol,
        energy_offset=center,
        energy_tolerance=energy_tol,
        foot_factor=foot_factor,
    )


def write_calibration_csv(path, angles: np.ndarray, energies: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["pair", "plane_alignment", "energy_offset_m2s2"])
        for index, (a, e) in enumerate(zip(angles, energies)):
            writer.writerow([index, repr(float(a)), repr(float(e))])
