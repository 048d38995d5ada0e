import math

import numpy as np
import pytest

from opmtrack.dynamics import (
    DEFAULT_CONSTANTS,
    ForceConfig,
    GeodeticSite,
    KeplerElements,
    OrbitalState,
    PhysicalConstants,
    eci_frame,
    eci_to_ric,
    eci_to_topocentric,
    kepler_to_cartesian,
    propagate,
    propagate_states,
    propagate_trajectory,
    read_ephemeris_csv,
    ric_basis,
    ric_to_eci,
    solve_kepler,
    spherical_to_states,
    state_to_spherical,
    states_to_spherical,
    station_frame,
    station_state,
    write_ephemeris_csv,
)
from opmtrack.dynamics import _zonal_acceleration
from opmtrack.errors import FrameError, ReentryError

from helpers import cartesian_to_kepler, zonal_gradient

C = DEFAULT_CONSTANTS
MU = C.mu_earth
TWO_BODY = ForceConfig(zonal_max=0)


def circular_state(radius=7.0e6, epoch=0.0):
    v = math.sqrt(MU / radius)
    return OrbitalState([radius, 0.0, 0.0], [0.0, v, 0.0], epoch)


def table_one_elements():
    return KeplerElements(
        raan_deg=311.18, inclination_deg=97.45, arg_perigee_deg=144.12,
        mean_motion_rad_s=11.07e-4, eccentricity=11.95e-4,
        mean_anomaly_deg=216.09,
    )


# --- element conversion ---

def test_circular_equatorial_state():
    a = 7.0e6
    n = math.sqrt(MU / a**3)
    el = KeplerElements(0.0, 0.0, 0.0, n, 0.0, 0.0)
    st = kepler_to_cartesian(el)
    np.testing.assert_allclose(st.position, [a, 0.0, 0.0], rtol=1e-12)
    np.testing.assert_allclose(st.velocity, [0.0, math.sqrt(MU / a), 0.0], rtol=1e-12)


def test_circular_quarter_anomaly_rotates_in_plane():
    a = 7.0e6
    n = math.sqrt(MU / a**3)
    st = kepler_to_cartesian(KeplerElements(0.0, 0.0, 0.0, n, 0.0, 90.0))
    assert np.linalg.norm(st.position) == pytest.approx(a, rel=1e-12)
    np.testing.assert_allclose(st.position, [0.0, a, 0.0], atol=1e-3)


def test_table_row_energy_matches_semi_major_axis():
    el = table_one_elements()
    st = kepler_to_cartesian(el)
    a = (MU / el.mean_motion_rad_s**2) ** (1.0 / 3.0)
    energy = -MU / np.linalg.norm(st.position) + 0.5 * st.velocity @ st.velocity
    assert energy == pytest.approx(-MU / (2 * a), rel=1e-6)


def test_kepler_roundtrip_against_independent_oracle():
    rng = np.random.default_rng(11)
    for _ in range(25):
        el = KeplerElements(
            raan_deg=rng.uniform(0, 360),
            inclination_deg=rng.uniform(5, 175),
            arg_perigee_deg=rng.uniform(0, 360),
            mean_motion_rad_s=rng.uniform(8e-4, 12e-4),
            eccentricity=rng.uniform(1e-4, 0.1),
            mean_anomaly_deg=rng.uniform(0, 360),
        )
        st = kepler_to_cartesian(el)
        raan, inc, argp, n, ecc, m_anom = cartesian_to_kepler(
            st.position, st.velocity, MU
        )
        assert raan == pytest.approx(el.raan_deg, abs=1e-9)
        assert inc == pytest.approx(el.inclination_deg, abs=1e-9)
        assert argp == pytest.approx(el.arg_perigee_deg, abs=1e-7)
        assert n == pytest.approx(el.mean_motion_rad_s, rel=1e-9)
        assert ecc == pytest.approx(el.eccentricity, abs=1e-9)
        assert m_anom == pytest.approx(el.mean_anomaly_deg, abs=1e-7)


def test_solve_kepler_converges_and_validates():
    e_anom = solve_kepler(2.0, 0.3)
    assert e_anom - 0.3 * math.sin(e_anom) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        solve_kepler(1.0, 1.0)


def test_elements_validation():
    with pytest.raises(ValueError):
        KeplerElements(0, 0, 0, 1e-3, 1.2, 0)
    with pytest.raises(ValueError):
        KeplerElements(0, 0, 0, -1e-3, 0.1, 0)
    normalized = KeplerElements(370.0, 0, -10.0, 1e-3, 0.0, 0)
    assert normalized.raan_deg == pytest.approx(10.0)
    assert normalized.arg_perigee_deg == pytest.approx(350.0)


# --- conserved quantities ---

def test_angular_momentum_axis_aligned():
    st = OrbitalState([7e6, 0, 0], [0, 7.5e3, 0], 0.0)
    np.testing.assert_allclose(
        np.cross(st.position, st.velocity), [0, 0, 5.25e10], rtol=1e-15
    )


def test_angular_momentum_degenerate_radial():
    st = OrbitalState([7e6, 0, 0], [1e3, 0, 0], 0.0)
    np.testing.assert_array_equal(np.cross(st.position, st.velocity), [0, 0, 0])
    with pytest.raises(FrameError):
        ric_basis(st)


def test_energy_circular_escape_and_hyperbolic():
    from opmtrack.dynamics import specific_orbital_energy

    r = 7.0e6
    circular = OrbitalState([r, 0, 0], [0, math.sqrt(MU / r), 0], 0.0)
    assert specific_orbital_energy(circular) == pytest.approx(-MU / (2 * r), rel=1e-12)
    escape = OrbitalState([r, 0, 0], [0, math.sqrt(2 * MU / r), 0], 0.0)
    assert specific_orbital_energy(escape) == pytest.approx(0.0, abs=1e-3)
    fast = OrbitalState([r, 0, 0], [0, 1.1 * math.sqrt(2 * MU / r), 0], 0.0)
    assert specific_orbital_energy(fast) > 0.0


def test_momentum_conserved_along_two_body_arc():
    from opmtrack.dynamics import specific_angular_momentum

    st = circular_state()
    h0 = specific_angular_momentum(st)
    later = propagate(st, 2000.0, forces=TWO_BODY)
    h1 = specific_angular_momentum(later)
    np.testing.assert_allclose(h1, h0, rtol=1e-9)


# --- RIC frame ---

def test_ric_radial_unit_vector():
    st = circular_state()
    radial = st.position / np.linalg.norm(st.position)
    np.testing.assert_allclose(eci_to_ric(st, radial), [1.0, 0.0, 0.0], atol=1e-15)


def test_ric_roundtrip_and_norms():
    rng = np.random.default_rng(3)
    st = kepler_to_cartesian(table_one_elements())
    for _ in range(20):
        vec = rng.normal(size=3) * 100.0
        back = ric_to_eci(st, eci_to_ric(st, vec))
        np.testing.assert_allclose(back, vec, rtol=1e-12, atol=1e-12)
        assert np.linalg.norm(eci_to_ric(st, vec)) == pytest.approx(
            np.linalg.norm(vec), rel=1e-12
        )


# --- zonal model ---

def test_zonal_acceleration_matches_potential_gradient():
    rng = np.random.default_rng(5)
    coeffs = {2: C.j2, 3: C.j3, 4: C.j4}
    for _ in range(10):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        p = direction * rng.uniform(6.7e6, 8.0e6)
        computed = _zonal_acceleration(p[None, :], C, 4)[0]
        oracle = zonal_gradient(p, MU, C.equatorial_radius, coeffs)
        np.testing.assert_allclose(computed, oracle, rtol=1e-7, atol=1e-12)


# --- propagation ---

def test_propagate_zero_interval_is_identity():
    st = circular_state()
    out = propagate(st, 0.0)
    np.testing.assert_array_equal(out.position, st.position)
    np.testing.assert_array_equal(out.velocity, st.velocity)


def test_two_body_period_returns_to_start():
    r = 7.0e6
    st = circular_state(r)
    period = 2.0 * math.pi * math.sqrt(r**3 / MU)
    out = propagate(st, period, forces=TWO_BODY)
    assert np.linalg.norm(out.position - st.position) < 1.0  # meters


def test_two_body_conserves_energy_and_momentum_over_period():
    from opmtrack.dynamics import specific_angular_momentum, specific_orbital_energy

    el = table_one_elements()
    st = kepler_to_cartesian(el)
    period = 2.0 * math.pi / el.mean_motion_rad_s
    out = propagate(st, st.epoch + period, forces=TWO_BODY)
    e0, e1 = specific_orbital_energy(st), specific_orbital_energy(out)
    assert abs((e1 - e0) / e0) <= 1e-9
    h0, h1 = specific_angular_momentum(st), specific_angular_momentum(out)
    np.testing.assert_allclose(h1, h0, rtol=0, atol=1e-9 * np.linalg.norm(h0))


def test_j2_raan_drift_matches_secular_oracle():
    a = 7.0e6
    n = math.sqrt(MU / a**3)
    inc = math.radians(97.45)
    el = KeplerElements(40.0, 97.45, 0.0, n, 1e-6, 0.0)
    st = kepler_to_cartesian(el)
    period = 2.0 * math.pi / n
    orbits = int(round(86400.0 / period))
    duration = orbits * period  # whole orbits cancel the short-period terms
    out = propagate(st, duration, forces=ForceConfig(zonal_max=2))

    def raan_of(state):
        h = np.cross(state.position, state.velocity)
        return math.atan2(h[0], -h[1])

    drift = (raan_of(out) - raan_of(st) + math.pi) % (2 * math.pi) - math.pi
    expected = (
        -1.5 * C.j2 * n * (C.equatorial_radius / a) ** 2 * math.cos(inc) * duration
    )
    assert drift == pytest.approx(expected, rel=0.05)


def test_j2_no_secular_drift_over_day():
    from helpers import zonal_perturbation_potential
    from opmtrack.dynamics import specific_orbital_energy

    st = kepler_to_cartesian(table_one_elements())
    out = propagate(st, st.epoch + 86400.0, forces=ForceConfig(zonal_max=2))

    def total_energy(state):
        # Osculating two-body energy oscillates under J2, but the energy
        # including the zonal potential is conserved; any drift is
        # integrator error.
        return specific_orbital_energy(state) - zonal_perturbation_potential(
            state.position, MU, C.equatorial_radius, {2: C.j2}
        )

    drift = abs((total_energy(out) - total_energy(st)) / total_energy(st))
    assert drift < 1e-6
    # The zonal field is axisymmetric: the polar component of h is conserved.
    h0 = np.cross(st.position, st.velocity)
    h1 = np.cross(out.position, out.velocity)
    assert h1[2] == pytest.approx(h0[2], rel=1e-6)
    # |h| may oscillate but must stay bounded (no secular growth).
    assert np.linalg.norm(h1) == pytest.approx(np.linalg.norm(h0), rel=1e-2)


def test_propagate_backwards_rejected():
    st = circular_state(epoch=100.0)
    with pytest.raises(ValueError):
        propagate(st, 50.0)


def test_reentry_detected():
    r = C.equatorial_radius + 1e3
    st = OrbitalState([r, 0, 0], [0, 100.0, 0], 0.0)  # far below orbital speed
    with pytest.raises(ReentryError):
        propagate(st, 2000.0)


def test_ensemble_propagation_matches_single():
    st = circular_state()
    block = np.vstack([st.vector])
    out_block = propagate_states(block, 0.0, 600.0, forces=TWO_BODY)
    out_single = propagate(st, 600.0, forces=TWO_BODY)
    np.testing.assert_array_equal(out_block[0], out_single.vector)


def test_noise_accelerates_in_track():
    st = circular_state()
    quiet = propagate(st, 120.0, forces=TWO_BODY)
    pushed = propagate(st, 120.0, forces=TWO_BODY, noise=np.array([0.0, 1e-4, 0.0]))
    delta = pushed.position - quiet.position
    in_track = eci_to_ric(quiet, delta)
    # (t - t0) * omega integrates to ~ t^3/6 * omega along-track
    assert in_track[1] == pytest.approx(120.0**3 / 6.0 * 1e-4, rel=0.05)
    assert abs(in_track[2]) < abs(in_track[1]) * 0.05


def test_trajectory_tabulation_matches_stepwise():
    st = circular_state()
    epochs = np.array([0.0, 300.0, 600.0])
    table = propagate_trajectory(st, epochs, forces=TWO_BODY)
    direct = propagate(st, 600.0, forces=TWO_BODY)
    np.testing.assert_allclose(table[2], direct.vector, rtol=1e-9)
    np.testing.assert_array_equal(table[0], st.vector)


# --- station geometry and spherical frames ---

def test_station_rotates_with_earth():
    site = GeodeticSite(0.0, 0.0, 0.0)
    p0, v0 = station_state(site, 0.0)
    np.testing.assert_allclose(p0, [C.equatorial_radius, 0.0, 0.0], atol=1e-6)
    quarter = (math.pi / 2.0) / C.rotation_rate
    p1, _ = station_state(site, quarter)
    np.testing.assert_allclose(p1, [0.0, C.equatorial_radius, 0.0], atol=1e-3)
    assert np.linalg.norm(v0) == pytest.approx(
        C.rotation_rate * C.equatorial_radius, rel=1e-12
    )


def test_overhead_geometry():
    site = GeodeticSite(45.0, 30.0, 0.0)
    epoch = 500.0
    p_st, v_st = station_state(site, epoch)
    direction = p_st / np.linalg.norm(p_st)
    altitude = 600e3
    # Same angular velocity as the ground: relative velocity is zero.
    st = OrbitalState(
        p_st + altitude * direction,
        v_st * (1.0 + altitude / np.linalg.norm(p_st)),
        epoch,
    )
    obs = eci_to_topocentric(site, st)
    assert obs[0] == pytest.approx(altitude, rel=1e-12)
    assert obs[2] == pytest.approx(math.pi / 2, abs=1e-9)
    assert obs[3] == pytest.approx(0.0, abs=1e-9)


def test_range_rate_matches_finite_difference():
    site = GeodeticSite(64.84, -147.72, 100.0)
    st = kepler_to_cartesian(table_one_elements(), epoch=250.0)
    dt = 0.1
    plus = propagate(st, 250.0 + dt, forces=TWO_BODY)
    minus_state = OrbitalState(
        *_coast_back(st, dt), 250.0 - dt
    )
    rho_plus = eci_to_topocentric(site, plus)[0]
    rho_minus = eci_to_topocentric(site, minus_state)[0]
    measured = eci_to_topocentric(site, st)[3]
    finite_diff = (rho_plus - rho_minus) / (2.0 * dt)
    assert measured == pytest.approx(finite_diff, abs=0.1)


def _coast_back(state, dt):
    """Second-order coast backwards for the finite-difference oracle."""
    r = np.linalg.norm(state.position)
    acc = -MU * state.position / r**3
    p = state.position - state.velocity * dt + 0.5 * acc * dt * dt
    v = state.velocity - acc * dt
    return p, v


def test_spherical_roundtrip_station_frame():
    rng = np.random.default_rng(9)
    site = GeodeticSite(64.84, -147.72)
    frame = station_frame(site, 777.0)
    for _ in range(20):
        state = np.concatenate([
            rng.normal(scale=7e6, size=3), rng.normal(scale=7e3, size=3)
        ])
        spherical = states_to_spherical(state[None, :], frame)
        back = spherical_to_states(spherical, frame)[0]
        np.testing.assert_allclose(back, state, rtol=1e-9, atol=1e-6)


def test_spherical_rates_match_finite_difference():
    site = GeodeticSite(10.0, 100.0)
    st = kepler_to_cartesian(table_one_elements(), epoch=100.0)
    dt = 0.05
    plus = propagate(st, 100.0 + dt, forces=TWO_BODY)
    spherical = state_to_spherical(st, station_frame(site, 100.0))
    spherical_plus = states_to_spherical(
        plus.vector[None, :], station_frame(site, 100.0 + dt)
    )[0]
    for index, tol in ((0, 0.5), (1, 1e-6), (2, 1e-6)):
        rate = (spherical_plus[index] - spherical[index]) / dt
        assert spherical[index + 3] == pytest.approx(rate, abs=tol * 10)


def test_eci_frame_is_inertial_spherical():
    st = OrbitalState([0.0, 7e6, 0.0], [0.0, 0.0, 7.5e3], 0.0)
    spherical = state_to_spherical(st, eci_frame())
    assert spherical[0] == pytest.approx(7e6)
    assert spherical[1] == pytest.approx(math.pi / 2)  # right ascension
    assert spherical[2] == pytest.approx(0.0, abs=1e-15)


def test_ephemeris_csv_roundtrip(tmp_path):
    st = circular_state()
    epochs = np.array([0.0, 120.0, 240.0])
    table = propagate_trajectory(st, epochs, forces=TWO_BODY)
    path = tmp_path / "eph.csv"
    write_ephemeris_csv(path, epochs, table)
    back_epochs, back_states = read_ephemeris_csv(path)
    np.testing.assert_array_equal(back_epochs, epochs)
    np.testing.assert_array_equal(back_states, table)


def test_constants_validation():
    with pytest.raises(ValueError):
        PhysicalConstants(mu_earth=-1.0)
    with pytest.raises(ValueError):
        ForceConfig(zonal_max=1)
