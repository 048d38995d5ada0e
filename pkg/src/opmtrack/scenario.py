"""Scenario runner: simulated truth, radar passes, TLE injection, filtering.

A scenario is described by a flat INI-style config file (sections mirror the
domain types; see the README for the key list).  The runner builds the time
grid, simulates ground truth with its own force model, generates noisy radar
returns while the object is inside the station's field of view, injects TLE
pseudo-observations from a file or synthesized from the truth, and drives
independent filter replicates in radar-only and radar+TLE modes.

Replicates share nothing except the truth and the TLE points: replicate r
uses seed ``base_seed + r``, from which separate observation and filter
streams are derived.  Within a replicate the two modes consume identical
observation and noise streams, so their outputs match exactly until the
first TLE update.
"""
from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import (
    DEFAULT_CONSTANTS,
    ForceConfig,
    GeodeticSite,
    KeplerElements,
    OrbitalState,
    PhysicalConstants,
    kepler_to_cartesian,
    propagate_trajectory,
    write_ephemeris_csv,
)
from .errors import ConfigError, OpmTrackError
from .radar import RadarObservation, RadarStation, in_fov, observe, write_observation_csv
from .smc import (
    FilterConfig,
    ParticleCloud,
    effective_ratio,
    init_admissible_region,
    map_estimate,
    predict,
    ric_error_stats,
    systematic_resample,
    update_radar,
    update_tle,
)
from .tle import TleModelParams, read_tle_file, tle_to_eci

MODES = ("radar", "fused")


@dataclass(frozen=True)
class TleSourceConfig:
    """Where TLE pseudo-observations come from."""
    source: str = "none"  # "none" | "synthesize" | "file"
    epochs_s: tuple[float, ...] = ()  # offsets from t0 (synthesize mode)
    file: str | None = None
    params: TleModelParams = field(default_factory=TleModelParams)

    def __post_init__(self):
        if self.source not in ("none", "synthesize", "file"):
            raise ConfigError(f"unknown tle source {self.source!r}")
        if self.source == "file" and not self.file:
            raise ConfigError("tle source 'file' needs a file path")


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float
    station: RadarStation
    truth_elements: KeplerElements | None = None
    truth_state: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    step_s: float = 120.0
    t0: float = 0.0
    mc_runs: int = 10
    base_seed: int = 0
    mode: str = "both"  # "radar" | "fused" | "both"
    out_dir: str = "out"
    snapshot_particles: bool = False
    filter: FilterConfig = field(default_factory=FilterConfig)
    filter_forces: ForceConfig = field(default_factory=ForceConfig)
    truth_forces: ForceConfig = field(default_factory=ForceConfig)
    tle: TleSourceConfig = field(default_factory=TleSourceConfig)
    constants: PhysicalConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        if self.step_s <= 0.0:
            raise ConfigError("step_s must be strictly positive")
        if self.duration_s < self.step_s:
            raise ConfigError("duration_s must be at least one step")
        if self.mc_runs < 1:
            raise ConfigError("mc_runs must be at least 1")
        if self.mode not in ("radar", "fused", "both"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if (self.truth_elements is None) == (self.truth_state is None):
            raise ConfigError("configure exactly one of truth elements or truth state")
        for offset in self.tle.epochs_s:
            if not 0.0 <= offset <= self.duration_s:
                raise ConfigError(
                    f"TLE epoch offset {offset} outside [0, {self.duration_s}]"
                )

    def initial_truth(self) -> OrbitalState:
        if self.truth_elements is not None:
            return kepler_to_cartesian(self.truth_elements, self.constants, self.t0)
        position, velocity = self.truth_state
        return OrbitalState(np.asarray(position), np.asarray(velocity), self.t0)


@dataclass(frozen=True)
class TimelineEntry:
    epoch: float
    on_grid: bool
    tle_indices: tuple[int, ...] = ()


def build_timeline(
    config: ScenarioConfig, tle_epochs: tuple[float, ...] = (), include_tles: bool = True
) -> list[TimelineEntry]:
    """Sorted union of the even step grid and the TLE epochs, tags merged."""
    steps = int(round(config.duration_s / config.step_s))
    grid = [config.t0 + k * config.step_s for k in range(steps + 1)
            if config.t0 + k * config.step_s <= config.t0 + config.duration_s]
    entries: dict[float, TimelineEntry] = {
        epoch: TimelineEntry(epoch, on_grid=True) for epoch in grid
    }
    if include_tles:
        for index, epoch in enumerate(tle_epochs):
            if not config.t0 <= epoch <= config.t0 + config.duration_s:
                raise ConfigError(
                    f"TLE epoch {epoch} outside the scenario window"
                )
            existing = entries.get(epoch)
            if existing is None:
                entries[epoch] = TimelineEntry(epoch, on_grid=False, tle_indices=(index,))
            else:
                entries[epoch] = TimelineEntry(
                    epoch, on_grid=existing.on_grid,
                    tle_indices=existing.tle_indices + (index,),
                )
    return [entries[epoch] for epoch in sorted(entries)]


def synthesize_tles(
    truth_states: np.ndarray,
    epochs: np.ndarray,
    params: TleModelParams,
    rng: np.random.Generator,
    constants: PhysicalConstants = DEFAULT_CONSTANTS,
) -> list[OrbitalState]:
    """Perturb truth states so both TLE offsets land uniformly on the plateaus.

    The orbital plane is tilted by a rotation about a random axis
    perpendicular to the angular momentum (drawing the alignment uniformly
    within its plateau), then the speed is rescaled to hit an energy offset
    drawn uniformly within the energy plateau.
    """
    out = []
    for epoch, row in zip(epochs, truth_states):
        p, v = row[:3].copy(), row[3:].copy()
        h = np.cross(p, v)
        h_hat = h / np.linalg.norm(h)
        seed_vec = np.array([1.0, 0.0, 0.0])
        if abs(h_hat @ seed_vec) > 0.9:
            seed_vec = np.array([0.0, 1.0, 0.0])
        e1 = np.cross(h_hat, seed_vec)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(h_hat, e1)

        psi = rng.uniform(0.0, 2.0 * math.pi)
        alignment = rng.uniform(1.0 - params.angle_tolerance, 1.0)
        energy_shift = rng.uniform(
            params.energy_offset - params.energy_tolerance,
            params.energy_offset + params.energy_tolerance,
        )

        axis = math.cos(psi) * e1 + math.sin(psi) * e2
        beta = math.acos(min(alignment, 1.0))
        cos_b, sin_b = math.cos(beta), math.sin(beta)

        def rotate(vec):
            return (vec * cos_b + np.cross(axis, vec) * sin_b
                    + axis * (axis @ vec) * (1.0 - cos_b))

        p_new = rotate(p)
        v_new = rotate(v)
        mu = constants.mu_earth
        energy = -mu / np.linalg.norm(p_new) + 0.5 * float(v_new @ v_new)
        target_v2 = 2.0 * (energy + energy_shift + mu / np.linalg.norm(p_new))
        v_new *= math.sqrt(target_v2 / float(v_new @ v_new))
        out.append(OrbitalState(p_new, v_new, float(epoch)))
    return out


# --- Metrics ---

METRICS_HEADER = [
    "epoch_s", "map_distance_m",
    "ric_pos_mean_r_m", "ric_pos_mean_i_m", "ric_pos_mean_c_m",
    "ric_pos_std_r_m", "ric_pos_std_i_m", "ric_pos_std_c_m",
    "ric_vel_mean_r_ms", "ric_vel_mean_i_ms", "ric_vel_mean_c_ms",
    "ric_vel_std_r_ms", "ric_vel_std_i_ms", "ric_vel_std_c_ms",
    "r_eff", "event",
]


@dataclass(frozen=True)
class MetricsRow:
    epoch: float
    map_distance_m: float
    ric_pos_mean: tuple[float, float, float]
    ric_pos_std: tuple[float, float, float]
    ric_vel_mean: tuple[float, float, float]
    ric_vel_std: tuple[float, float, float]
    r_eff: float
    event: str

    def numbers(self) -> list[float]:
        return [
            self.epoch, self.map_distance_m,
            *self.ric_pos_mean, *self.ric_pos_std,
            *self.ric_vel_mean, *self.ric_vel_std,
            self.r_eff,
        ]


def write_metrics_csv(path, rows: list[MetricsRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row.numbers()] + [row.event])


def read_metrics_csv(path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        for record in reader:
            values = [float(v) for v in record[:15]]
            rows.append(MetricsRow(
                epoch=values[0], map_distance_m=values[1],
                ric_pos_mean=tuple(values[2:5]), ric_pos_std=tuple(values[5:8]),
                ric_vel_mean=tuple(values[8:11]), ric_vel_std=tuple(values[11:14]),
                r_eff=values[14], event=record[15],
            ))
    return rows


def average_metrics(per_run: list[list[MetricsRow]]) -> list[MetricsRow]:
    """Arithmetic mean of per-run metrics; event tags keep the part common
    to every run."""
    averaged = []
    for rows in zip(*per_run):
        table = np.array([row.numbers() for row in rows], dtype=float)
        mean = table.mean(axis=0)
        tags = set(rows[0].event.split("+"))
        for row in rows[1:]:
            tags &= set(row.event.split("+"))
        averaged.append(MetricsRow(
            epoch=mean[0], map_distance_m=mean[1],
            ric_pos_mean=tuple(mean[2:5]), ric_pos_std=tuple(mean[5:8]),
            ric_vel_mean=tuple(mean[8:11]), ric_vel_std=tuple(mean[11:14]),
            r_eff=mean[14],
            event="+".join(sorted(tags)) if tags else "none",
        ))
    return averaged


# --- Filter loop ---

def _nan_row(epoch: float, event: str) -> MetricsRow:
    nan3 = (math.nan,) * 3
    return MetricsRow(
        epoch=epoch, map_distance_m=math.nan,
        ric_pos_mean=nan3, ric_pos_std=nan3,
        ric_vel_mean=nan3, ric_vel_std=nan3,
        r_eff=1.0, event=event,
    )


def run_filter(
    config: ScenarioConfig,
    timeline: list[TimelineEntry],
    truth_by_epoch: dict[float, OrbitalState],
    observations: dict[float, RadarObservation],
    tle_observations: list[OrbitalState],
    filter_rng: np.random.Generator,
    snapshots: list | None = None,
) -> list[MetricsRow]:
    """One filter replicate over a prepared timeline.

    The cloud comes into existence at the first radar return (admissible
    region initialization); rows before that carry NaN estimates.
    """
    cloud: ParticleCloud | None = None
    rows: list[MetricsRow] = []
    for entry in timeline:
        tags = []
        try:
            if cloud is not None and entry.epoch > cloud.epoch:
                cloud = predict(
                    cloud, entry.epoch, config.filter, filter_rng,
                    config.constants, config.filter_forces,
                )
            obs = observations.get(entry.epoch)
            if obs is not None:
                tags.append("radar")
                if cloud is None:
                    cloud = init_admissible_region(
                        obs, config.station, config.filter, config.constants,
                        filter_rng,
                    )
                else:
                    cloud = update_radar(
                        cloud, obs, config.station, filter_rng, config.constants
                    )
            for index in entry.tle_indices:
                tags.append("tle")
                if cloud is None:
                    continue
                cloud = update_tle(
                    cloud, tle_observations[index], config.tle.params,
                    config.constants, config.filter.on_incompatible_tle,
                )
            if cloud is not None and effective_ratio(cloud) < config.filter.resample_threshold:
                cloud = systematic_resample(cloud, filter_rng)
                tags.append("resample")
        except OpmTrackError as exc:
            event = "+".join(tags) if tags else "coast"
            raise type(exc)(
                f"filter failed at epoch {entry.epoch} ({event}): {exc}"
            ) from exc

        event = "+".join(tags) if tags else "coast"
        if cloud is None:
            rows.append(_nan_row(entry.epoch, event))
            continue
        truth = truth_by_epoch[entry.epoch]
        estimate = map_estimate(cloud)
        stats = ric_error_stats(cloud, truth)
        rows.append(MetricsRow(
            epoch=entry.epoch,
            map_distance_m=float(np.linalg.norm(estimate.position - truth.position)),
            ric_pos_mean=tuple(stats.position_mean),
            ric_pos_std=tuple(stats.position_std),
            ric_vel_mean=tuple(stats.velocity_mean),
            ric_vel_std=tuple(stats.velocity_std),
            r_eff=effective_ratio(cloud),
            event=event,
        ))
        if snapshots is not None:
            snapshots.append((entry.epoch, cloud))
    return rows


@dataclass(frozen=True)
class ScenarioResult:
    out_dir: Path
    metrics: dict[str, list[list[MetricsRow]]]   # mode -> per-run rows
    averages: dict[str, list[MetricsRow]]        # mode -> averaged rows
    tle_epochs: tuple[float, ...]
    pass_epochs: tuple[float, ...]               # grid epochs with the truth in FOV


def run_scenario(config: ScenarioConfig) -> ScenarioResult:
    """Simulate, filter, and write all CSV products.

    Writes per-run and run-averaged metrics for each requested mode, the
    truth ephemeris, and per-run observation logs into the output directory.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    constants = config.constants

    # TLE epochs first: the truth must be tabulated on them too.
    if config.tle.source == "file":
        records = read_tle_file(config.tle.file)
        tle_states = [tle_to_eci(rec, constants) for rec in records]
        tle_epochs = tuple(state.epoch for state in tle_states)
        for epoch in tle_epochs:
            if not config.t0 <= epoch <= config.t0 + config.duration_s:
                raise ConfigError(f"TLE record epoch {epoch} outside the scenario window")
    elif config.tle.source == "synthesize":
        tle_epochs = tuple(config.t0 + dt for dt in config.tle.epochs_s)
        tle_states = []  # filled after the truth exists
    else:
        tle_epochs = ()
        tle_states = []

    fused_timeline = build_timeline(config, tle_epochs, include_tles=True)
    radar_timeline = build_timeline(config, tle_epochs, include_tles=False)
    all_epochs = np.array([entry.epoch for entry in fused_timeline])

    truth0 = config.initial_truth()
    truth_table = propagate_trajectory(truth0, all_epochs, constants, config.truth_forces)
    truth_by_epoch = {
        float(epoch): OrbitalState(row[:3], row[3:], float(epoch))
        for epoch, row in zip(all_epochs, truth_table)
    }
    write_ephemeris_csv(out_dir / "truth.csv", all_epochs, truth_table)

    if config.tle.source == "synthesize" and tle_epochs:
        tle_rows = np.array([truth_by_epoch[e].vector for e in tle_epochs])
        tle_states = synthesize_tles(
            tle_rows, np.array(tle_epochs), config.tle.params,
            np.random.default_rng([config.base_seed, 3]), constants,
        )

    pass_epochs = tuple(
        entry.epoch for entry in radar_timeline
        if in_fov(config.station, truth_by_epoch[entry.epoch], constants)
    )

    modes = MODES if config.mode == "both" else (config.mode,)
    metrics: dict[str, list[list[MetricsRow]]] = {mode: [] for mode in modes}
    for run_index in range(config.mc_runs):
        replicate_seed = config.base_seed + run_index
        observation_rng = np.random.default_rng([replicate_seed, 1])
        observations = {}
        for epoch in pass_epochs:
            observations[epoch] = observe(
                config.station, truth_by_epoch[epoch], observation_rng, constants
            )
        write_observation_csv(
            out_dir / f"observations_run{run_index}.csv",
            [observations[e] for e in pass_epochs],
        )
        for mode in modes:
            timeline = fused_timeline if mode == "fused" else radar_timeline
            tles = tle_states if mode == "fused" else []
            filter_rng = np.random.default_rng([replicate_seed, 2])
            snapshots = [] if config.snapshot_particles else None
            rows = run_filter(
                config, timeline, truth_by_epoch, observations, tles,
                filter_rng, snapshots,
            )
            metrics[mode].append(rows)
            write_metrics_csv(out_dir / f"metrics_{mode}_run{run_index}.csv", rows)
            if snapshots is not None:
                _write_particle_csv(
                    out_dir / f"particles_{mode}_run{run_index}.csv", snapshots
                )

    averages = {}
    for mode in modes:
        averages[mode] = average_metrics(metrics[mode])
        write_metrics_csv(out_dir / f"metrics_{mode}_mean.csv", averages[mode])
    return ScenarioResult(
        out_dir=out_dir, metrics=metrics, averages=averages,
        tle_epochs=tle_epochs, pass_epochs=pass_epochs,
    )


def _write_particle_csv(path, snapshots) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["epoch_s", "particle", "weight",
             "px_m", "py_m", "pz_m", "vx_ms", "vy_ms", "vz_ms"]
        )
        for epoch, cloud in snapshots:
            for index, (w, row) in enumerate(zip(cloud.weights, cloud.states)):
                writer.writerow(
                    [repr(float(epoch)), index, repr(float(w))]
                    + [repr(float(c)) for c in row]
                )


# --- Config file parsing ---

def _get(section, key, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing key {key!r} in section [{section.name}]")
        return default
    try:
        return cast(section[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from exc


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.replace(",", " ").split())


def load_config(path) -> ScenarioConfig:
    """Parse a scenario INI file into a :class:`ScenarioConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    if "scenario" not in parser or "station" not in parser or "truth" not in parser:
        raise ConfigError("config needs [scenario], [truth], and [station] sections")

    sc = parser["scenario"]
    st = parser["station"]
    tr = parser["truth"]

    station = RadarStation(
        site=GeodeticSite(
            latitude_deg=_get(st, "latitude_deg", float, required=True),
            longitude_deg=_get(st, "longitude_deg", float, required=True),
            altitude_m=_get(st, "altitude_m", float, 0.0),
        ),
        fov_radius=_get(st, "fov_radius_m", float, 2.0e6),
        noise_sigmas=(
            _get(st, "sigma_range_m", float, 28.0),
            math.radians(_get(st, "sigma_azimuth_deg", float, 0.1)),
            math.radians(_get(st, "sigma_elevation_deg", float, 0.1)),
            _get(st, "sigma_range_rate_ms", float, 11.0),
        ),
        station_id=_get(st, "station_id", str, "radar"),
    )

    truth_elements = None
    truth_state = None
    if "position_m" in tr:
        truth_state = (_floats(tr["position_m"]), _floats(tr["velocity_ms"]))
    else:
        truth_elements = KeplerElements(
            raan_deg=_get(tr, "raan_deg", float, required=True),
            inclination_deg=_get(tr, "inclination_deg", float, required=True),
            arg_perigee_deg=_get(tr, "arg_perigee_deg", float, required=True),
            mean_motion_rad_s=_get(tr, "mean_motion_rad_s", float, required=True),
            eccentricity=_get(tr, "eccentricity", float, required=True),
            mean_anomaly_deg=_get(tr, "mean_anomaly_deg", float, required=True),
        )

    filter_section = parser["filter"] if "filter" in parser else {}
    filter_config = FilterConfig(
        particle_count=_get(filter_section, "particle_count", int, 500),
        resample_threshold=_get(filter_section, "resample_threshold", float, 0.20),
        process_noise_sigma=_get(filter_section, "process_noise_sigma", float, 1e-5),
        rate_bound=_get(filter_section, "rate_bound", float, 0.002),
        min_perigee_altitude=_get(filter_section, "min_perigee_altitude_m", float, 200e3),
        on_incompatible_tle=_get(filter_section, "on_incompatible_tle", str, "skip"),
    ) if filter_section else FilterConfig()

    tle_section = parser["tle"] if "tle" in parser else None
    if tle_section is not None:
        params = TleModelParams(
            angle_tolerance=_get(tle_section, "angle_tolerance", float, 1e-7),
            energy_offset=_get(tle_section, "energy_offset", float, -2.67e4),
            energy_tolerance=_get(tle_section, "energy_tolerance", float, 0.5e4),
            foot_factor=_get(tle_section, "foot_factor", float, 5.0),
        )
        tle_config = TleSourceConfig(
            source=_get(tle_section, "source", str, "none"),
            epochs_s=_get(tle_section, "epochs_s", _floats, ()),
            file=_get(tle_section, "file", str, None),
            params=params,
        )
    else:
        tle_config = TleSourceConfig()

    return ScenarioConfig(
        duration_s=_get(sc, "duration_s", float, required=True),
        step_s=_get(sc, "step_s", float, 120.0),
        t0=_get(sc, "t0_s", float, 0.0),
        mc_runs=_get(sc, "mc_runs", int, 10),
        base_seed=_get(sc, "base_seed", int, 0),
        mode=_get(sc, "mode", str, "both"),
        out_dir=_get(sc, "out_dir", str, "out"),
        snapshot_particles=_get(sc, "snapshot_particles", lambda s: s.lower() == "true", False),
        station=station,
        truth_elements=truth_elements,
        truth_state=truth_state,
        filter=filter_config,
        filter_forces=ForceConfig(
            zonal_max=_get(filter_section, "zonal_max", int, 2) if filter_section else 2
        ),
        truth_forces=ForceConfig(zonal_max=_get(tr, "zonal_max", int, 2)),
        tle=tle_config,
    )


def apply_overrides(
    config: ScenarioConfig,
    seed: int | None = None,
    mc_runs: int | None = None,
    out_dir: str | None = None,
    mode: str | None = None,
) -> ScenarioConfig:
    """Command-line overrides on top of a parsed config."""
    updates = {}
    if seed is not None:
        updates["base_seed"] = seed
    if mc_runs is not None:
        updates["mc_runs"] = mc_runs
    if out_dir is not None:
        updates["out_dir"] = out_dir
    if mode is not None:
        updates["mode"] = mode
    return replace(config, **updates) if updates else config
