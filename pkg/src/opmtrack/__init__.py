"""Orbit tracking with possibility-based fusion of radar and TLE data."""

from .dynamics import (
    DEFAULT_CONSTANTS,
    ForceConfig,
    GeodeticSite,
    KeplerElements,
    OrbitalState,
    PhysicalConstants,
    eci_to_topocentric,
    kepler_to_cartesian,
    propagate,
    specific_angular_momentum,
    specific_orbital_energy,
)
from .possibility import (
    BoxPossibility,
    GaussianPossibility,
    GridPossibility,
    OuterProbabilityMeasure,
    ProbabilityBounds,
    ProductPossibility,
    TrapezoidPossibility,
    box,
    probability_bounds,
    union,
)
from .radar import RadarObservation, RadarStation, in_fov, observe
from .smc import (
    FilterConfig,
    ParticleCloud,
    effective_ratio,
    init_admissible_region,
    map_estimate,
    predict,
    systematic_resample,
    update_radar,
    update_tle,
)
from .scenario import ScenarioConfig, load_config, run_scenario
from .tle import TleModelParams, TleRecord, calibrate, parse_tle, tle_possibility

__version__ = "0.1.0"
