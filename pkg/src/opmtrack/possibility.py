"""Possibility functions, outer probability measures, and probability bounds.

A possibility function is a non-negative function with supremum 1 over its
domain; it upper-bounds every probability density compatible with the
analyst's information.  An outer probability measure (OPM) is a finite
weighted mixture of possibility functions evaluated on subsets of the state
space.  Subsets are restricted to finite unions of axis-aligned regions
(with open/closed endpoints, so complements stay exact) plus boolean masks
over grid-tabulated possibilities.

Everything here is immutable after construction and all operations are pure,
so concurrent evaluation needs no coordination.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DimensionError,
    IncompatibleObservationError,
    ModelError,
    UnsupportedRegionError,
)

_SUP_TOL = 1e-12


# --- Subset descriptors ---

@dataclass(frozen=True)
class Interval:
    """One axis of an axis-aligned region; endpoints may be +/-inf."""
    lo: float = -math.inf
    hi: float = math.inf
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self):
        # Infinite endpoints are never attained.
        if math.isinf(self.lo):
            object.__setattr__(self, "lo_open", True)
        if math.isinf(self.hi):
            object.__setattr__(self, "hi_open", True)

    @property
    def empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and (self.lo_open or self.hi_open)

    def contains(self, x: float) -> bool:
        if x < self.lo or (x == self.lo and self.lo_open):
            return False
        if x > self.hi or (x == self.hi and self.hi_open):
            return False
        return True

    def clamp(self, x: float) -> float:
        """Closest point of the interval's closure to x."""
        return min(max(x, self.lo), self.hi)

    def intersect(self, other: "Interval") -> "Interval | None":
        if self.lo > other.lo:
            lo, lo_open = self.lo, self.lo_open
        elif self.lo < other.lo:
            lo, lo_open = other.lo, other.lo_open
        else:
            lo, lo_open = self.lo, self.lo_open or other.lo_open
        if self.hi < other.hi:
            hi, hi_open = self.hi, self.hi_open
        elif self.hi > other.hi:
            hi, hi_open = other.hi, other.hi_open
        else:
            hi, hi_open = self.hi, self.hi_open or other.hi_open
        out = Interval(lo, hi, lo_open, hi_open)
        return None if out.empty else out

    def complement(self) -> tuple["Interval", ...]:
        parts = []
        below = Interval(-math.inf, self.lo, hi_open=not self.lo_open)
        above = Interval(self.hi, math.inf, lo_open=not self.hi_open)
        for part in (below, above):
            if not part.empty:
                parts.append(part)
        return tuple(parts)


@dataclass(frozen=True)
class Region:
    """Axis-aligned box: the cartesian product of one interval per axis."""
    intervals: tuple[Interval, ...]

    @property
    def dim(self) -> int:
        return len(self.intervals)

    def contains(self, point: np.ndarray) -> bool:
        return all(iv.contains(float(c)) for iv, c in zip(self.intervals, point))

    def intersect(self, other: "Region") -> "Region | None":
        pieces = []
        for a, b in zip(self.intervals, other.intervals):
            both = a.intersect(b)
            if both is None:
                return None
            pieces.append(both)
        return Region(tuple(pieces))

    def complement(self) -> list["Region"]:
        """Decompose the complement into disjoint axis-aligned slabs."""
        out = []
        for axis, iv in enumerate(self.intervals):
            prefix = self.intervals[:axis]
            suffix = tuple(Interval() for _ in self.intervals[axis + 1:])
            for piece in iv.complement():
                out.append(Region(prefix + (piece,) + suffix))
        return out


@dataclass(frozen=True)
class RegionUnion:
    """Finite union of axis-aligned regions of a common dimension."""
    regions: tuple[Region, ...]

    def __post_init__(self):
        if not self.regions:
            raise ValueError("a region union needs at least one region")
        dims = {r.dim for r in self.regions}
        if len(dims) != 1:
            raise DimensionError(f"regions of mixed dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.regions[0].dim

    def contains(self, point: np.ndarray) -> bool:
        return any(r.contains(point) for r in self.regions)

    def complement(self) -> "RegionUnion":
        current = [Region(tuple(Interval() for _ in range(self.dim)))]
        for region in self.regions:
            pieces = region.complement()
            current = [
                isect
                for existing in current
                for piece in pieces
                if (isect := existing.intersect(piece)) is not None
            ]
            if not current:
                # Complement is empty; keep a single empty-by-construction box.
                return RegionUnion((Region(tuple(
                    Interval(0.0, 0.0, lo_open=True) for _ in range(self.dim)
                )),))
        return RegionUnion(tuple(current))


@dataclass(frozen=True)
class GridMask:
    """Boolean selection over the sample points of a grid possibility."""
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))

    def complement(self) -> "GridMask":
        return GridMask(~self.mask)


SubsetDescriptor = Union[RegionUnion, GridMask]


def box(lo, hi, lo_open: bool = False, hi_open: bool = False) -> RegionUnion:
    """Axis-aligned box from per-axis bounds (scalars give a 1-D interval)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape:
        raise DimensionError("lo/hi bounds differ in length")
    ivs = tuple(Interval(float(a), float(b), lo_open, hi_open) for a, b in zip(lo, hi))
    return RegionUnion((Region(ivs),))


def union(*parts: RegionUnion) -> RegionUnion:
    """Union of several region unions over the same space."""
    regions = tuple(r for p in parts for r in p.regions)
    return RegionUnion(regions)


def _empty_region(region: Region) -> bool:
    return any(iv.empty for iv in region.intervals)


# --- Possibility functions ---

class PossibilityFunction:
    """Base interface: point evaluation plus supremum over subsets."""

    dim: int

    def __call__(self, x) -> float:
        raise NotImplementedError

    def sup(self, subset: SubsetDescriptor) -> float:
        raise NotImplementedError

    def _check_point(self, x) -> np.ndarray:
        point = np.atleast_1d(np.asarray(x, dtype=float))
        if point.shape != (self.dim,):
            raise DimensionError(
                f"point of dimension {point.shape} for a possibility on R^{self.dim}"
            )
        return point

    def _check_region(self, subset: RegionUnion) -> None:
        if subset.dim != self.dim:
            raise DimensionError(
                f"region of dimension {subset.dim} for a possibility on R^{self.dim}"
            )


@dataclass(frozen=True)
class BoxPossibility(PossibilityFunction):
    """Indicator of a finite union of axis-aligned regions."""
    support: RegionUnion

    @property
    def dim(self) -> int:
        return self.support.dim

    def __call__(self, x) -> float:
        point = self._check_point(x)
        return 1.0 if self.support.contains(point) else 0.0

    def sup(self, subset: SubsetDescriptor) -> float:
        if not isinstance(subset, RegionUnion):
            raise UnsupportedRegionError("box possibilities only support region subsets")
        self._check_region(subset)
        for query in subset.regions:
            for supported in self.support.regions:
                hit = query.intersect(supported)
                if hit is not None and not _empty_region(hit):
                    return 1.0
        return 0.0


@dataclass(frozen=True)
class TrapezoidPossibility(PossibilityFunction):
    """1-D trapezoid: 1 on [plateau_lo, plateau_hi], linear to 0 over ramp_width."""
    plateau_lo: float
    plateau_hi: float
    ramp_width: float

    dim = 1

    def __post_init__(self):
        if self.plateau_lo > self.plateau_hi:
            raise ValueError("plateau_lo must not exceed plateau_hi")
        if self.ramp_width < 0:
            raise ValueError("ramp_width must be non-negative")

    def _eval_scalar(self, x: float) -> float:
        if self.plateau_lo <= x <= self.plateau_hi:
            return 1.0
        w = self.ramp_width
        if w == 0.0:
            return 0.0
        if x < self.plateau_lo:
            foot = self.plateau_lo - w
            return (x - foot) / (self.plateau_lo - foot) if x > foot else 0.0
        foot = self.plateau_hi + w
        return (foot - x) / (foot - self.plateau_hi) if x < foot else 0.0

    def __call__(self, x) -> float:
        point = self._check_point(x)
        return self._eval_scalar(float(point[0]))

    def sup(self, subset: SubsetDescriptor) -> float:
        if not isinstance(subset, RegionUnion):
            raise UnsupportedRegionError("trapezoids only support region subsets")
        self._check_region(subset)
        best = 0.0
        for region in subset.regions:
            if _empty_region(region):
                continue
            iv = region.intervals[0]
            # Unimodal and continuous: the sup sits at the plateau clamped
            # into the interval's closure.
            best = max(best, self._eval_scalar(iv.clamp(self.plateau_lo)),
                       self._eval_scalar(iv.clamp(self.plateau_hi)))
        return best


@dataclass(frozen=True)
class GaussianPossibility(PossibilityFunction):
    """exp(-(x-mu)' S^-1 (x-mu) / 2); equals 1 exactly at mu."""
    mean: np.ndarray
    spread: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        spread = np.asarray(self.spread, dtype=float)
        if spread.ndim == 0:
            spread = spread.reshape(1, 1)
        elif spread.ndim == 1:
            spread = np.diag(spread)
        if spread.shape != (mean.size, mean.size):
            raise DimensionError("spread matrix does not match the mean's dimension")
        try:
            np.linalg.cholesky(spread)
        except np.linalg.LinAlgError:
            raise ValueError("spread matrix must be positive definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "spread", spread)

    @property
    def dim(self) -> int:
        return self.mean.size

    def _quad(self, point: np.ndarray) -> float:
        d = point - self.mean
        return float(d @ np.linalg.solve(self.spread, d))

    def __call__(self, x) -> float:
        point = self._check_point(x)
        return math.exp(-0.5 * self._quad(point))

    def _sup_region(self, region: Region) -> float:
        lo = np.array([iv.lo for iv in region.intervals])
        hi = np.array([iv.hi for iv in region.intervals])
        clamped = np.minimum(np.maximum(self.mean, lo), hi)
        diag = np.diag(np.diag(self.spread))
        if np.allclose(self.spread, diag, rtol=0.0, atol=0.0):
            # Axis-aligned clamp is the exact S-metric projection when S is
            # diagonal.
            return math.exp(-0.5 * self._quad(clamped))
        # Correlated spread: the clamp is only a starting point; refine the
        # (convex) quadratic over the box numerically.
        s_inv = np.linalg.inv(self.spread)
        bounds = [
            (None if math.isinf(a) else a, None if math.isinf(b) else b)
            for a, b in zip(lo, hi)
        ]
        res = minimize(
            lambda p: 0.5 * (p - self.mean) @ s_inv @ (p - self.mean),
            clamped,
            jac=lambda p: s_inv @ (p - self.mean),
            bounds=bounds,
            method="L-BFGS-B",
        )
        return math.exp(-min(res.fun, 0.5 * self._quad(clamped)))

    def sup(self, subset: SubsetDescriptor) -> float:
        if not isinstance(subset, RegionUnion):
            raise UnsupportedRegionError("gaussian possibilities only support region subsets")
        self._check_region(subset)
        live = [r for r in subset.regions if not _empty_region(r)]
        return max((self._sup_region(r) for r in live), default=0.0)


@dataclass(frozen=True)
class ProductPossibility(PossibilityFunction):
    """Product of independent possibility factors over factor spaces."""
    factors: tuple[PossibilityFunction, ...]

    def __post_init__(self):
        if not self.factors:
            raise ValueError("a product needs at least one factor")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    def _split(self, items: Sequence) -> Iterable[tuple[PossibilityFunction, Sequence]]:
        start = 0
        for factor in self.factors:
            yield factor, items[start:start + factor.dim]
            start += factor.dim

    def __call__(self, x) -> float:
        point = self._check_point(x)
        value = 1.0
        for factor, sl in self._split(point):
            value *= factor(sl)
        return value

    def sup(self, subset: SubsetDescriptor) -> float:
        if not isinstance(subset, RegionUnion):
            raise UnsupportedRegionError("product possibilities only support region subsets")
        self._check_region(subset)
        best = 0.0
        for region in subset.regions:
            if _empty_region(region):
                continue
            value = 1.0
            for factor, ivs in self._split(region.intervals):
                value *= factor.sup(RegionUnion((Region(tuple(ivs)),)))
            best = max(best, value)
        return best


@dataclass(frozen=True)
class GridPossibility(PossibilityFunction):
    """Tabulated possibility: nearest-sample evaluation keeps the sup at 1."""
    samples: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        values = np.asarray(self.values, dtype=float)
        if values.shape != (samples.shape[0],):
            raise DimensionError("values must be one scalar per sample point")
        if values.size == 0:
            raise ValueError("a grid possibility needs at least one sample")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("grid values must lie in [0, 1]")
        if abs(values.max() - 1.0) > _SUP_TOL:
            raise ValueError(
                f"grid supremum is {values.max():.15g}, must be 1 within {_SUP_TOL}"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __call__(self, x) -> float:
        point = self._check_point(x)
        idx = int(np.argmin(np.sum((self.samples - point) ** 2, axis=1)))
        return float(self.values[idx])

    def sup(self, subset: SubsetDescriptor) -> float:
        if isinstance(subset, GridMask):
            if subset.mask.shape != self.values.shape:
                raise UnsupportedRegionError(
                    "mask length does not match the grid's sample count"
                )
            selected = self.values[subset.mask]
            return float(selected.max()) if selected.size else 0.0
        self._check_region(subset)
        inside = np.fromiter(
            (subset.contains(p) for p in self.samples), dtype=bool, count=len(self.samples)
        )
        return float(self.values[inside].max()) if inside.any() else 0.0

    def to_csv(self, path) -> None:
        """Write rows of coordinate(s) followed by the tabulated value."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([f"x{i}" for i in range(self.dim)] + ["value"])
            for point, value in zip(self.samples, self.values):
                writer.writerow([repr(float(c)) for c in point] + [repr(float(value))])


# --- Outer probability measures ---

@dataclass(frozen=True)
class ProbabilityBounds:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper + 1e-15:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")


@dataclass(frozen=True)
class OuterProbabilityMeasure:
    """Finite mixture of possibility functions with weights summing to 1."""
    components: tuple[tuple[float, PossibilityFunction], ...]

    def __post_init__(self):
        components = tuple((float(w), f) for w, f in self.components)
        if not components:
            raise ValueError("an OPM needs at least one component")
        weights = np.array([w for w, _ in components])
        if np.any(weights < 0.0):
            raise ValueError("mixture weights must be non-negative")
        if abs(weights.sum() - 1.0) > _SUP_TOL:
            raise ValueError(f"mixture weights sum to {weights.sum()!r}, expected 1")
        dims = {f.dim for _, f in components}
        if len(dims) != 1:
            raise DimensionError("mixture components live on different spaces")
        object.__setattr__(self, "components", components)

    @property
    def dim(self) -> int:
        return self.components[0][1].dim

    def evaluate(self, subset: SubsetDescriptor) -> float:
        """Possibility that the state lies in the subset."""
        return float(sum(w * f.sup(subset) for w, f in self.components))


def probability_bounds(
    opm: OuterProbabilityMeasure, subset: SubsetDescriptor
) -> ProbabilityBounds:
    """Bracket the (unknowable) probability of the subset from the OPM."""
    upper = opm.evaluate(subset)
    lower = 1.0 - opm.evaluate(subset.complement())
    return ProbabilityBounds(lower=lower, upper=upper)


# --- Grid-based prediction and update calculus ---

@dataclass(frozen=True)
class ConditionalGrid:
    """Conditional possibility tabulated on output x input sample points.

    values[i, j] is the possibility of output sample i given input sample j;
    every column must reach 1 somewhere (conditional normalization).
    """
    samples_out: np.ndarray
    samples_in: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        samples_out = np.asarray(self.samples_out, dtype=float)
        samples_in = np.asarray(self.samples_in, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (samples_out.size, samples_in.size):
            raise DimensionError(
                f"table shape {values.shape} does not match "
                f"{samples_out.size} outputs x {samples_in.size} inputs"
            )
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("conditional values must lie in [0, 1]")
        object.__setattr__(self, "samples_out", samples_out)
        object.__setattr__(self, "samples_in", samples_in)
        object.__setattr__(self, "values", values)

    def check_normalized(self, tol: float = 1e-6) -> None:
        column_max = self.values.max(axis=0)
        bad = np.nonzero(column_max < 1.0 - tol)[0]
        if bad.size:
            raise ModelError(
                f"conditional column {bad[0]} has max {column_max[bad[0]]:.6g} < 1"
            )


def _require_same_axis(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or not np.array_equal(a, b):
        raise DimensionError("grids are tabulated on different sample points")


def grid_predict(transition: ConditionalGrid, prior: GridPossibility) -> GridPossibility:
    """Max-product prediction of a grid possibility through a conditional."""
    if prior.dim != 1:
        raise DimensionError("grid prediction is implemented for 1-D grids")
    _require_same_axis(transition.samples_in, prior.samples[:, 0])
    transition.check_normalized()
    predicted = (transition.values * prior.values[None, :]).max(axis=1)
    top = predicted.max()
    if abs(top - 1.0) > 1e-9:
        raise ModelError(f"predicted supremum {top!r} deviates from 1 beyond 1e-9")
    return GridPossibility(transition.samples_out, predicted / top)


def grid_update(
    observation: ConditionalGrid, observed: float, prior: GridPossibility
) -> GridPossibility:
    """Bayes-analogue update of a grid possibility at an observed value."""
    if prior.dim != 1:
        raise DimensionError("grid update is implemented for 1-D grids")
    _require_same_axis(observation.samples_in, prior.samples[:, 0])
    row = int(np.argmin(np.abs(observation.samples_out - observed)))
    numerator = observation.values[row, :] * prior.values
    normalizer = numerator.max()
    if normalizer <= 0.0:
        raise IncompatibleObservationError(
            f"observation {observed!r} has possibility 0 against the whole prior"
        )
    return GridPossibility(prior.samples[:, 0], numerator / normalizer)


def opm_grid_predict(
    transition: ConditionalGrid, prior: OuterProbabilityMeasure
) -> OuterProbabilityMeasure:
    """Predict a mixture of grid possibilities component by component."""
    parts = tuple(
        (w, grid_predict(transition, f)) for w, f in prior.components
    )
    return OuterProbabilityMeasure(parts)


def opm_grid_update(
    observation: ConditionalGrid, observed: float, prior: OuterProbabilityMeasure
) -> OuterProbabilityMeasure:
    """Update a mixture of grid possibilities; weights pick up each
    component's normalizer before renormalizing."""
    updated = []
    scaled = []
    for w, f in prior.components:
        if not isinstance(f, GridPossibility):
            raise UnsupportedRegionError("mixture update needs grid components")
        row = int(np.argmin(np.abs(observation.samples_out - observed)))
        numerator = observation.values[row, :] * f.values
        z = numerator.max()
        if z > 0.0:
            updated.append(GridPossibility(f.samples[:, 0], numerator / z))
            scaled.append(w * z)
        else:
            updated.append(f)
            scaled.append(0.0)
    total = sum(scaled)
    if total <= 0.0:
        raise IncompatibleObservationError(
            f"observation {observed!r} is incompatible with every mixture component"
        )
    return OuterProbabilityMeasure(
        tuple((s / total, f) for s, f in zip(scaled, updated) if s > 0.0)
    )
