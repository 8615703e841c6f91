"""Game specification: piecewise-linear costs, sector labels, regime verdicts.

A game is described by the slopes of the two players' piecewise-linear state
costs.  The plane of slope pairs is split into eight open half-quadrant cones;
which cones the per-interval slope pairs occupy decides whether the game has a
unique admissible solution, infinitely many, or none, and which construction
applies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    LengthMismatch,
    NonFiniteEntry,
    NonIncreasingBreakpoints,
    SpecError,
    ZeroSlopePair,
)

# A slope pair on an axis or diagonal is treated as unclassifiable rather
# than snapped into a neighbouring cone.
BOUNDARY_ANGLE_TOL = 1e-12


class Sector(Enum):
    """Open cone of angles ](i-1)*pi/4, i*pi/4[ in the slope plane.

    BOUNDARY marks points whose angle is an exact multiple of pi/4 (within
    tolerance) and the origin.
    """

    BOUNDARY = 0
    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4
    S5 = 5
    S6 = 6
    S7 = 7
    S8 = 8

    @property
    def index(self) -> int:
        return self.value


class Regime(Enum):
    COOPERATIVE_UNIQUE = "CooperativeUnique"
    CONFLICTING_MANY = "ConflictingMany"
    CONFLICTING_NONE = "ConflictingNone"
    MIXED_MANY = "MixedMany"
    PERIODIC = "Periodic"
    UNSUPPORTED_BOUNDARY = "UnsupportedBoundary"
    UNSUPPORTED_COMBINATION = "UnsupportedCombination"


@dataclass(frozen=True)
class CostSpec:
    """Piecewise-linear cost pair h_1, h_2.

    breakpoints: strictly increasing interior knots x_1 < ... < x_N (may be
        empty).  They split the line into N+1 open intervals.
    slopes: one (k1, k2) pair per interval, left to right.  Interval j has
        h_i'(x) = slopes[j][i-1].
    offsets: (h_1(0), h_2(0)).  Costs are reconstructed by integrating the
        slopes from 0, so they are continuous by construction.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[tuple[float, float], ...]
    offsets: tuple[float, float] = (0.0, 0.0)

    @property
    def n_breakpoints(self) -> int:
        return len(self.breakpoints)

    def interval_index(self, x: float) -> int:
        """Index of the open interval containing x (ties go right)."""
        return int(np.searchsorted(np.asarray(self.breakpoints), x, side="right"))

    def interval_of(self, j: int) -> tuple[float, float]:
        """(lo, hi) bounds of interval j, using +-inf at the ends."""
        lo = -math.inf if j == 0 else self.breakpoints[j - 1]
        hi = math.inf if j == len(self.breakpoints) else self.breakpoints[j]
        return lo, hi

    def to_json_dict(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "slopes": [list(k) for k in self.slopes],
            "offsets": list(self.offsets),
        }


@dataclass(frozen=True)
class RegimeReport:
    per_interval_sectors: tuple[Sector, ...]
    regime: Regime
    notes: str

    def to_json_dict(self) -> dict:
        return {
            "per_interval_sectors": [s.name for s in self.per_interval_sectors],
            "regime": self.regime.value,
            "notes": self.notes,
        }


def validate_spec(raw: CostSpec) -> CostSpec:
    """Check all CostSpec invariants, returning the spec unchanged.

    Raises NonIncreasingBreakpoints, ZeroSlopePair, NonFiniteEntry or
    LengthMismatch.
    """
    bps = tuple(float(b) for b in raw.breakpoints)
    slopes = tuple((float(k1), float(k2)) for k1, k2 in raw.slopes)
    offsets = (float(raw.offsets[0]), float(raw.offsets[1]))

    for v in (*bps, *(k for pair in slopes for k in pair), *offsets):
        if not math.isfinite(v):
            raise NonFiniteEntry(f"non-finite entry {v!r} in cost spec")
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise NonIncreasingBreakpoints(f"breakpoints not strictly increasing: {bps}")
    if len(slopes) != len(bps) + 1:
        raise LengthMismatch(
            f"need {len(bps) + 1} slope pairs for {len(bps)} breakpoints, got {len(slopes)}"
        )
    if not slopes:
        raise LengthMismatch("at least one slope pair is required")
    for j, (k1, k2) in enumerate(slopes):
        if k1 == 0.0 and k2 == 0.0:
            raise ZeroSlopePair(f"slope pair {j} is (0, 0)")
    return CostSpec(breakpoints=bps, slopes=slopes, offsets=offsets)


def _knot_values(spec: CostSpec, player: int) -> np.ndarray:
    """Cost values at the breakpoints, integrating the slopes from 0."""
    i = player - 1
    bps = np.asarray(spec.breakpoints)
    vals = np.empty(len(bps))
    if len(bps) == 0:
        return vals
    # integrate rightwards from 0 over breakpoints > 0, leftwards over < 0
    j0 = spec.interval_index(0.0)
    acc = spec.offsets[i]
    xprev = 0.0
    for j in range(j0, len(bps)):
        acc += spec.slopes[j][i] * (bps[j] - xprev)
        vals[j] = acc
        xprev = bps[j]
    acc = spec.offsets[i]
    xprev = 0.0
    for j in range(j0 - 1, -1, -1):
        acc += spec.slopes[j + 1][i] * (bps[j] - xprev)
        vals[j] = acc
        xprev = bps[j]
    return vals


def eval_cost(spec: CostSpec, player: int, x):
    """Evaluate h_player at x (scalar or array): offset plus integrated slope."""
    if player not in (1, 2):
        raise SpecError(f"player must be 1 or 2, got {player}")
    i = player - 1
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    if len(spec.breakpoints) == 0:
        out = spec.offsets[i] + spec.slopes[0][i] * xs
        return float(out[0]) if scalar else out
    bps = np.asarray(spec.breakpoints)
    knots = _knot_values(spec, player)
    slopes = np.asarray([pair[i] for pair in spec.slopes])
    j = np.searchsorted(bps, xs, side="right")
    out = np.empty_like(xs)
    # value = cost at the nearest breakpoint to the left (or the first one,
    # for points left of all breakpoints), plus the interval slope overhang
    left = j > 0
    right = ~left
    out[left] = knots[j[left] - 1] + slopes[j[left]] * (xs[left] - bps[j[left] - 1])
    out[right] = knots[0] + slopes[0] * (xs[right] - bps[0])
    return float(out[0]) if scalar else out


def slope_at(spec: CostSpec, x: float) -> tuple[float, float]:
    """Slope pair governing the interval that contains x."""
    return spec.slopes[spec.interval_index(x)]


def classify_sector(point: tuple[float, float]) -> Sector:
    """Which of the eight open pi/4-cones the point's angle falls in.

    Angles within BOUNDARY_ANGLE_TOL of a multiple of pi/4, and the origin,
    report BOUNDARY.
    """
    p1, p2 = float(point[0]), float(point[1])
    if p1 == 0.0 and p2 == 0.0:
        return Sector.BOUNDARY
    theta = math.atan2(p2, p1)
    if theta < 0.0:
        theta += 2.0 * math.pi
    step = math.pi / 4.0
    nearest = round(theta / step)
    if abs(theta - nearest * step) <= BOUNDARY_ANGLE_TOL:
        return Sector.BOUNDARY
    idx = int(theta // step) + 1
    if idx > 8:  # theta just below 2*pi
        idx = 8
    return Sector(idx)


_COOP_LO = {Sector.S1, Sector.S2}
_COOP_HI = {Sector.S5, Sector.S6}


def classify_regime(spec: CostSpec) -> RegimeReport:
    """Assign the game's regime from the per-interval sector pattern."""
    sectors = tuple(classify_sector(k) for k in spec.slopes)

    # Cooperative first: the diagonal inside the open first/third quadrant
    # separates two cooperative sectors, so it does not spoil the verdict.
    # Axis and anti-diagonal boundaries do, and are refused below.
    if all(k1 > 0.0 and k2 > 0.0 for k1, k2 in spec.slopes) or all(
        k1 < 0.0 and k2 < 0.0 for k1, k2 in spec.slopes
    ):
        return RegimeReport(
            sectors,
            Regime.COOPERATIVE_UNIQUE,
            "both costs share monotonicity on every interval (cooperative); "
            "a unique admissible solution exists and is built by gluing "
            "interval solutions left to right",
        )

    if any(s is Sector.BOUNDARY for s in sectors):
        return RegimeReport(
            sectors,
            Regime.UNSUPPORTED_BOUNDARY,
            "some slope pair lies on a sector boundary (axis or diagonal); "
            "the analysis requires open sectors and no verdict is offered",
        )

    if len(spec.slopes) == 2:
        s0, s1 = sectors
        # the second pattern of each pair is the image of the first under
        # the reflection (p, x) -> (-p, -x), which also swaps the intervals
        if (s0, s1) in ((Sector.S4, Sector.S3), (Sector.S7, Sector.S8)):
            return RegimeReport(
                sectors,
                Regime.CONFLICTING_MANY,
                "opposite player interests with the first interval's "
                "equilibrium repelling and the second's attracting; "
                "infinitely many admissible solutions, one per anti-diagonal "
                "datum near the origin",
            )
        if (s0, s1) in ((Sector.S3, Sector.S4), (Sector.S8, Sector.S7)):
            return RegimeReport(
                sectors,
                Regime.CONFLICTING_NONE,
                "opposite player interests with the first interval's "
                "equilibrium attracting and the second's repelling; no "
                "admissible solution exists (every candidate gradient orbit "
                "is unbounded on one side)",
            )
        if s0 in _COOP_HI and s1 in _COOP_LO:
            a0 = spec.slopes[0][1] / spec.slopes[0][0]
            a1 = spec.slopes[1][1] / spec.slopes[1][0]
            if a0 != a1:
                return RegimeReport(
                    sectors,
                    Regime.MIXED_MANY,
                    "costs switch from conflicting to cooperative across the "
                    "breakpoint with distinct slope ratios; an open cone of "
                    "data near the origin yields a family of admissible "
                    "solutions",
                )
            return RegimeReport(
                sectors,
                Regime.UNSUPPORTED_COMBINATION,
                "mixed sector pattern but equal slope ratios on both sides; "
                "the family construction needs distinct ratios",
            )

    return RegimeReport(
        sectors,
        Regime.UNSUPPORTED_COMBINATION,
        "sector pattern not covered by the analysis "
        f"({', '.join(s.name for s in sectors)}); no verdict is offered",
    )


def spec_from_json_dict(doc: dict) -> CostSpec:
    """Build and validate a CostSpec from a parsed config document."""
    if not isinstance(doc, dict):
        raise SpecError("config document must be a JSON object")
    try:
        breakpoints = tuple(doc.get("breakpoints", []))
        slopes = tuple(tuple(pair) for pair in doc["slopes"])
    except (KeyError, TypeError) as exc:
        raise SpecError(f"malformed config document: {exc}") from exc
    for pair in slopes:
        if len(pair) != 2:
            raise SpecError(f"slope entries must be pairs, got {pair!r}")
    offsets = doc.get("offsets", (0.0, 0.0))
    if len(offsets) != 2:
        raise SpecError(f"offsets must be a pair, got {offsets!r}")
    return validate_spec(CostSpec(breakpoints, slopes, tuple(offsets)))


def load_spec(path) -> CostSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"config is not valid JSON: {exc}") from exc
    return spec_from_json_dict(doc)


def dump_spec(spec: CostSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_json_dict(), fh, indent=2)
        fh.write("\n")
