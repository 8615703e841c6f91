"""Orbit integration for the rescaled gradient system.

Integrates one interval's planar dynamics together with the physical
coordinate x (dx/ds equals the coupling determinant) and the running value
integrals, shoots the stable/unstable orbits of the origin saddle, detects
blow-up and convergence, intersects sampled orbits, and recovers the finite
x-limit of orbits that end at the singular origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    AnchorOutOfRange,
    InvalidStopConditions,
    StepSizeUnderflow,
    ZeroSlopePair,
)
from .phase import capital_delta, linearization, vector_field

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-10
DEFAULT_REFINE_TOL = 1e-8
MANIFOLD_OFFSET = 1e-6


class TerminationKind(Enum):
    REACHED_EQUILIBRIUM = "reached_equilibrium"
    REACHED_ORIGIN = "reached_origin"
    BLOW_UP = "blow_up"
    SPAN_EXHAUSTED = "span_exhausted"
    CROSSED_BREAKPOINT = "crossed_breakpoint"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    equilibrium: tuple[float, float] | None = None
    s_estimate: float | None = None
    x_crossed: float | None = None

    @property
    def tag(self) -> str:
        return self.kind.value


class ManifoldTag(Enum):
    STABLE_OF_ORIGIN = "stable_of_origin"
    UNSTABLE_OF_ORIGIN = "unstable_of_origin"


class PhaseState(NamedTuple):
    p1: float
    p2: float
    s: float
    x: float


@dataclass(frozen=True)
class StopConditions:
    """Termination rules for integrate().

    x_crossings are absolute physical coordinates; the run stops at the
    first one the x-component crosses.
    """

    s_span: float = 200.0
    blow_up_radius: float = 1e6
    origin_radius: float = 1e-8
    equilibrium_radius: float = 1e-8
    x_crossings: tuple[float, ...] = ()

    def validate(self) -> None:
        if not (self.s_span > 0.0 and math.isfinite(self.s_span)):
            raise InvalidStopConditions(f"s_span must be positive, got {self.s_span}")
        for name in ("blow_up_radius", "origin_radius", "equilibrium_radius"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise InvalidStopConditions(f"{name} must be positive, got {v}")
        if self.origin_radius >= self.blow_up_radius:
            raise InvalidStopConditions("origin radius must be below blow-up radius")


@dataclass
class Orbit:
    """Sampled trajectory of one interval's dynamics.

    Arrays are ordered by increasing s regardless of integration direction;
    terminal_end records at which end the stop condition fired ('last' for
    forward runs, 'first' for backward ones).  w holds the running integrals
    of p_i dx used by the value reconstruction (same per-sample order).
    """

    s: np.ndarray
    p: np.ndarray
    x: np.ndarray
    w: np.ndarray | None
    K: tuple[float, float]
    direction: str
    termination: Termination
    terminal_end: str
    manifold_tag: ManifoldTag | None = None
    origin_limit_left: float | None = None
    origin_limit_right: float | None = None

    def __len__(self) -> int:
        return len(self.s)

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.p[i, 0], self.p[i, 1], self.s[i], self.x[i])

    @property
    def delta(self) -> np.ndarray:
        return capital_delta((self.p[:, 0], self.p[:, 1]))

    def reversed_in_s(self) -> "Orbit":
        """Flip sample order (s decreasing); used only for exports."""
        w = None if self.w is None else self.w[::-1].copy()
        return replace(
            self,
            s=self.s[::-1].copy(),
            p=self.p[::-1].copy(),
            x=self.x[::-1].copy(),
            w=w,
            terminal_end="first" if self.terminal_end == "last" else "last",
        )


def _rhs(sign: float, K):
    k1, k2 = K

    def rhs(t, y):
        p1, p2 = y[0], y[1]
        q = p1 + p2
        d = q * q - p1 * p2
        return (
            sign * (k1 * q - p1 * (k2 + p1)),
            sign * (k2 * q - p2 * (k1 + p2)),
            sign * d,
            sign * p1 * d,
            sign * p2 * d,
        )

    return rhs


def _refine_samples(dense, ts: np.ndarray, tol: float, max_depth: int = 14) -> np.ndarray:
    """Insert nodes until linear interpolation of (p, x) between consecutive
    samples agrees with the integrator's dense output to tol (relative to the
    local magnitude, so blow-up tails stay coarse)."""
    ts = np.asarray(ts, dtype=float)
    for _ in range(max_depth):
        if len(ts) < 2:
            return ts
        mids = 0.5 * (ts[:-1] + ts[1:])
        ym = dense(mids)
        yl = dense(ts[:-1])
        yr = dense(ts[1:])
        pred = 0.5 * (yl + yr)
        scale = np.maximum(1.0, np.max(np.abs(np.stack([yl[:3], yr[:3]])), axis=0))
        err = np.max(np.abs(ym[:3] - pred[:3]) / scale, axis=0)
        bad = err > tol
        if not bad.any():
            return ts
        ts = np.sort(np.concatenate([ts, mids[bad]]))
    return ts


def integrate(
    p0,
    K,
    direction: str = "forward",
    stop: StopConditions | None = None,
    *,
    x0: float = 0.0,
    s0: float = 0.0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    refine_tol: float | None = DEFAULT_REFINE_TOL,
) -> Orbit:
    """Adaptively integrate the rescaled system under slope pair K.

    Augments the planar dynamics with the physical coordinate and the two
    running value integrals, and stops at the first triggered condition of
    `stop`.  Backward runs integrate the time-reversed field; the returned
    samples are always ordered by increasing s.
    """
    stop = stop or StopConditions()
    stop.validate()
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction}")
    sign = 1.0 if direction == "forward" else -1.0
    k = (float(K[0]), float(K[1]))
    y0 = np.array([float(p0[0]), float(p0[1]), float(x0), 0.0, 0.0])

    def ev_blow(t, y):
        return y[0] * y[0] + y[1] * y[1] - stop.blow_up_radius**2

    ev_blow.terminal, ev_blow.direction = True, 1.0

    def ev_origin(t, y):
        return y[0] * y[0] + y[1] * y[1] - stop.origin_radius**2

    ev_origin.terminal, ev_origin.direction = True, -1.0

    def ev_eq(t, y):
        return (y[0] - k[0]) ** 2 + (y[1] - k[1]) ** 2 - stop.equilibrium_radius**2

    ev_eq.terminal, ev_eq.direction = True, -1.0

    events = [ev_blow, ev_origin, ev_eq]
    for xt in stop.x_crossings:
        def ev_x(t, y, _xt=xt):
            return y[2] - _xt

        ev_x.terminal, ev_x.direction = True, sign
        events.append(ev_x)

    sol = solve_ivp(
        _rhs(sign, k),
        (0.0, stop.s_span),
        y0,
        method="RK45",
        rtol=rtol,
        atol=atol,
        events=events,
        dense_output=True,
    )
    if sol.status == -1:
        raise StepSizeUnderflow(f"integrator failed: {sol.message}")

    if sol.t_events[0].size:
        # crude finite-blow-up estimate from the quadratic growth of |p|
        p_end = math.hypot(sol.y[0, -1], sol.y[1, -1])
        s_est = s0 + sign * (sol.t[-1] + 1.0 / max(p_end, 1.0))
        term = Termination(TerminationKind.BLOW_UP, s_estimate=s_est)
    elif sol.t_events[1].size:
        term = Termination(TerminationKind.REACHED_ORIGIN)
    elif sol.t_events[2].size:
        term = Termination(TerminationKind.REACHED_EQUILIBRIUM, equilibrium=k)
    elif any(ev.size for ev in sol.t_events[3:]):
        hits = [
            (ev[0], xt)
            for ev, xt in zip(sol.t_events[3:], stop.x_crossings)
            if ev.size
        ]
        term = Termination(
            TerminationKind.CROSSED_BREAKPOINT, x_crossed=min(hits)[1]
        )
    else:
        term = Termination(TerminationKind.SPAN_EXHAUSTED)

    ts = sol.t
    if refine_tol is not None and len(ts) > 1:
        ts = _refine_samples(sol.sol, ts, refine_tol)
    Y = sol.sol(ts) if len(ts) != len(sol.t) else sol.y

    s = s0 + sign * ts
    p = Y[:2].T.copy()
    x = Y[2].copy()
    w = Y[3:5].T.copy()
    terminal_end = "last"
    if direction == "backward":
        s, p, x, w = s[::-1].copy(), p[::-1].copy(), x[::-1].copy(), w[::-1].copy()
        terminal_end = "first"
    return Orbit(
        s=s,
        p=p,
        x=x,
        w=w,
        K=k,
        direction=direction,
        termination=term,
        terminal_end=terminal_end,
    )


def _manifold_seed(K, which: str, side: int, offset_scale: float = 1.0) -> tuple[np.ndarray, float]:
    _, eig = linearization(K)
    v = np.array(eig.v_plus if which == "unstable" else eig.v_minus)
    v = v / np.linalg.norm(v)
    eps = max(offset_scale * MANIFOLD_OFFSET * abs(eig.lambda_plus), 1e-9)
    return side * eps * v, eig.lambda_plus


def shoot_unstable(
    K,
    side: int = 1,
    stop: StopConditions | None = None,
    *,
    refine_tol: float | None = DEFAULT_REFINE_TOL,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    offset_scale: float = 1.0,
) -> Orbit:
    """Forward orbit leaving the origin along the unstable eigendirection.

    side selects the branch (+1 along the eigenvector, -1 opposite).  s
    starts at 0 and x is relative; anchor it with reconstruct_x.
    """
    if float(K[0]) == 0.0 and float(K[1]) == 0.0:
        raise ZeroSlopePair("manifold shooting requires a nonzero slope pair")
    seed, lam = _manifold_seed(K, "unstable", side, offset_scale)
    orb = integrate(
        seed, K, "forward", stop, rtol=rtol, atol=atol, refine_tol=refine_tol
    )
    orb.manifold_tag = ManifoldTag.UNSTABLE_OF_ORIGIN
    orb.s = orb.s - orb.s[0]
    return _attach_origin_limit(orb, end="first", rate_hint=2.0 * lam)


def shoot_stable(
    K,
    side: int = 1,
    stop: StopConditions | None = None,
    *,
    refine_tol: float | None = DEFAULT_REFINE_TOL,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    offset_scale: float = 1.0,
) -> Orbit:
    """Orbit approaching the origin along the stable eigendirection.

    Integrated backward from the seed and returned in forward reading order,
    so the origin end is the last sample.
    """
    if float(K[0]) == 0.0 and float(K[1]) == 0.0:
        raise ZeroSlopePair("manifold shooting requires a nonzero slope pair")
    seed, lam = _manifold_seed(K, "stable", side, offset_scale)
    orb = integrate(
        seed, K, "backward", stop, rtol=rtol, atol=atol, refine_tol=refine_tol
    )
    orb.manifold_tag = ManifoldTag.STABLE_OF_ORIGIN
    orb.s = orb.s - orb.s[0]
    return _attach_origin_limit(orb, end="last", rate_hint=2.0 * lam)


def _attach_origin_limit(orbit: Orbit, end: str, rate_hint: float) -> Orbit:
    """Estimate the finite x-limit at an origin-adjacent end of the orbit.

    The coupling determinant decays exponentially into the origin, so the
    missing x is delta/rate; the rate comes from a log-linear fit over the
    samples nearest the origin, falling back to the linearized rate.
    """
    d = orbit.delta
    if end == "first":
        idx = slice(0, min(len(orbit), 60))
        d_edge = d[0]
    else:
        idx = slice(max(0, len(orbit) - 60), len(orbit))
        d_edge = d[-1]
    rate = rate_hint
    svals, dvals = orbit.s[idx], d[idx]
    good = dvals > 0
    if good.sum() >= 3:
        coef = np.polyfit(svals[good], np.log(dvals[good]), 1)
        fitted = coef[0] if end == "first" else -coef[0]
        if 0.25 * rate_hint <= fitted <= 4.0 * rate_hint:
            rate = fitted
    tail = d_edge / rate
    if end == "first":
        orbit.origin_limit_left = float(orbit.x[0] - tail)
    else:
        orbit.origin_limit_right = float(orbit.x[-1] + tail)
    return orbit


def reconstruct_x(orbit: Orbit, anchor_x: float, anchor_index: int) -> Orbit:
    """Shift the orbit's x samples so samples[anchor_index].x == anchor_x."""
    n = len(orbit)
    if anchor_index < -n or anchor_index >= n:
        raise AnchorOutOfRange(f"index {anchor_index} outside 0..{n - 1}")
    shift = float(anchor_x) - orbit.x[anchor_index]
    out = replace(orbit, x=orbit.x + shift)
    if orbit.origin_limit_left is not None:
        out.origin_limit_left = orbit.origin_limit_left + shift
    if orbit.origin_limit_right is not None:
        out.origin_limit_right = orbit.origin_limit_right + shift
    return out


class IntersectionDetail(NamedTuple):
    point: tuple[float, float]
    index_a: int
    t_a: float
    index_b: int
    t_b: float


def _segment_crossings(A: np.ndarray, B: np.ndarray, max_pairs: float = 5e7):
    """All polyline crossings between sample arrays A, B of shape (n, 2)."""
    hits = []
    na, nb = len(A) - 1, len(B) - 1
    if na < 1 or nb < 1:
        return hits
    if na * nb > max_pairs:
        # coarse pass on decimated polylines, exact pass near coarse hits
        ka = max(1, int(na // 2000))
        kb = max(1, int(nb // 2000))
        Ad = np.vstack([A[::ka], A[-1]])
        Bd = np.vstack([B[::kb], B[-1]])
        for hit in _segment_crossings(Ad, Bd):
            ia0 = max(0, (hit.index_a - 1) * ka)
            ia1 = min(len(A), (hit.index_a + 2) * ka + 1)
            ib0 = max(0, (hit.index_b - 1) * kb)
            ib1 = min(len(B), (hit.index_b + 2) * kb + 1)
            for sub in _segment_crossings(A[ia0:ia1], B[ib0:ib1]):
                hits.append(
                    IntersectionDetail(
                        sub.point, sub.index_a + ia0, sub.t_a, sub.index_b + ib0, sub.t_b
                    )
                )
        return hits

    a0 = A[:-1]
    da = A[1:] - a0
    for j in range(nb):
        c = B[j]
        r = B[j + 1] - c
        denom = da[:, 0] * r[1] - da[:, 1] * r[0]
        qx = c[0] - a0[:, 0]
        qy = c[1] - a0[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qx * r[1] - qy * r[0]) / denom
            u = (qx * da[:, 1] - qy * da[:, 0]) / denom
        mask = np.isfinite(t) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
        for i in np.nonzero(mask)[0]:
            pt = (float(a0[i, 0] + t[i] * da[i, 0]), float(a0[i, 1] + t[i] * da[i, 1]))
            hits.append(IntersectionDetail(pt, int(i), float(t[i]), int(j), float(u[i])))
    return hits


def _bisect_refine(A: np.ndarray, B: np.ndarray, hit: IntersectionDetail, tol: float = 1e-10):
    """Polish a crossing by bisection on segment A's parameter against the
    signed side of segment B, until the bracket is below tol in p."""
    a0, a1 = A[hit.index_a], A[hit.index_a + 1]
    b0, b1 = B[hit.index_b], B[hit.index_b + 1]
    r = b1 - b0

    def side(t):
        pt = a0 + t * (a1 - a0)
        return r[0] * (pt[1] - b0[1]) - r[1] * (pt[0] - b0[0])

    lo, hi = 0.0, 1.0
    f_lo = side(lo)
    if f_lo == 0.0:
        t_star = lo
    else:
        if f_lo * side(hi) > 0.0:
            return hit  # degenerate (near-parallel); keep the direct solve
        seg_len = float(np.linalg.norm(a1 - a0))
        while (hi - lo) * seg_len > tol:
            mid = 0.5 * (lo + hi)
            if f_lo * side(mid) <= 0.0:
                hi = mid
            else:
                lo = mid
                f_lo = side(lo)
        t_star = 0.5 * (lo + hi)
    pt = a0 + t_star * (a1 - a0)
    # parameter on B from projection onto the segment direction
    u = float(np.dot(pt - b0, r) / max(np.dot(r, r), 1e-300))
    return IntersectionDetail(
        (float(pt[0]), float(pt[1])), hit.index_a, float(t_star), hit.index_b, min(max(u, 0.0), 1.0)
    )


def locate_intersection(orbit_a: Orbit, orbit_b: Orbit) -> IntersectionDetail | None:
    """Crossing of the two orbit polylines nearest the origin, refined by
    bisection; None when the polylines do not cross."""
    A = orbit_a.p
    B = orbit_b.p
    hits = _segment_crossings(A, B)
    if orbit_a.manifold_tag is not None and orbit_b.manifold_tag is not None:
        # both arcs emanate from seeds next to the origin; contacts there are
        # artifacts of the seed offsets, not genuine crossings
        hits = [h for h in hits if math.hypot(*h.point) > 1e-5]
    if not hits:
        return None
    best = min(hits, key=lambda h: math.hypot(*h.point))
    return _bisect_refine(A, B, best)


def find_intersection(orbit_a: Orbit, orbit_b: Orbit) -> tuple[float, float] | None:
    """Point where the two sampled orbits cross, if any (smallest |p|)."""
    detail = locate_intersection(orbit_a, orbit_b)
    return None if detail is None else detail.point


def truncate_after(orbit: Orbit, index: int, t: float, point) -> Orbit:
    """Keep samples[0..index] and append the crossing point interpolated at
    parameter t on segment (index, index+1)."""
    i = int(index)
    frac = float(t)
    s_new = orbit.s[i] + frac * (orbit.s[i + 1] - orbit.s[i])
    x_new = orbit.x[i] + frac * (orbit.x[i + 1] - orbit.x[i])
    p_new = np.asarray(point, dtype=float)
    w_new = None
    if orbit.w is not None:
        w_new = orbit.w[i] + frac * (orbit.w[i + 1] - orbit.w[i])
    s = np.append(orbit.s[: i + 1], s_new)
    x = np.append(orbit.x[: i + 1], x_new)
    p = np.vstack([orbit.p[: i + 1], p_new])
    w = None if w_new is None else np.vstack([orbit.w[: i + 1], w_new])
    return replace(orbit, s=s, p=p, x=x, w=w, origin_limit_right=None)


def truncate_before(orbit: Orbit, index: int, t: float, point) -> Orbit:
    """Drop samples before the crossing point at parameter t on segment
    (index, index+1) and prepend the point itself."""
    i = int(index)
    frac = float(t)
    s_new = orbit.s[i] + frac * (orbit.s[i + 1] - orbit.s[i])
    x_new = orbit.x[i] + frac * (orbit.x[i + 1] - orbit.x[i])
    p_new = np.asarray(point, dtype=float)
    w_new = None
    if orbit.w is not None:
        w_new = orbit.w[i] + frac * (orbit.w[i + 1] - orbit.w[i])
    s = np.concatenate([[s_new], orbit.s[i + 1 :]])
    x = np.concatenate([[x_new], orbit.x[i + 1 :]])
    p = np.vstack([p_new, orbit.p[i + 1 :]])
    w = None if w_new is None else np.vstack([w_new, orbit.w[i + 1 :]])
    return replace(orbit, s=s, p=p, x=x, w=w, origin_limit_left=None)


def orbit_to_csv(orbit: Orbit, path) -> None:
    """Write the orbit as CSV (s, p1, p2, x, delta) with the termination
    reason on a trailing comment line."""
    d = orbit.delta
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("s,p1,p2,x,delta\n")
        for i in range(len(orbit)):
            row = (orbit.s[i], orbit.p[i, 0], orbit.p[i, 1], orbit.x[i], d[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
        fh.write(f"# termination={orbit.termination.tag}\n")
