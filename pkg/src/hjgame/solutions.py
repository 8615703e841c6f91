"""Construction and certification of admissible solutions.

An admissible solution is an absolutely continuous candidate value pair whose
gradient profile solves the rescaled dynamics interval by interval, grows at
most linearly, and whose gradient discontinuities (if any) are sign-correct
reflections.  Each game regime has its own construction:

* cooperative: glue interval orbits left to right starting from the constant
  first-interval equilibrium (mirrored when both costs decrease),
* conflicting (many): one solution per anti-diagonal datum near the origin,
  plus an optional extra solution through the crossing of the two origin
  manifold arcs,
* conflicting (none): a probe sweep corroborating that no candidate stays
  bounded on both sides,
* mixed: one solution per datum in the open cone between the two relevant
  eigendirection slopes,
* periodic costs induced by a manifold crossing: the two arcs repeat.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import (
    ConvergenceFailure,
    DatumOutsideFamily,
    InvariantBoxViolation,
    NoIntersection,
    RegimeMismatch,
)
from .model import (
    CostSpec,
    Regime,
    RegimeReport,
    Sector,
    classify_regime,
    classify_sector,
    eval_cost,
    spec_from_json_dict,
)
from .orbits import (
    Orbit,
    StopConditions,
    TerminationKind,
    integrate,
    locate_intersection,
    reconstruct_x,
    shoot_stable,
    shoot_unstable,
    truncate_after,
    truncate_before,
)
from .phase import capital_delta, eigen_slope

PROFILE_WINDOW = (-50.0, 50.0)
PROFILE_DX = 1e-3
# piece seams with a p-gap above this are treated as genuine jumps and get
# the reflection checks; below it they are numerical seams (manifold offsets,
# equilibrium cut-offs) and only value continuity is enforced
JUMP_DETECT = 1e-4


@dataclass(frozen=True)
class Tolerances:
    residual: float = 1e-6
    jump: float = 1e-8
    seam: float = 1e-6
    growth_window: tuple[float, float] = PROFILE_WINDOW
    grid_dx: float = PROFILE_DX


@dataclass(frozen=True)
class PeriodicCost:
    """Two-slope cost pattern repeating with period x_plus - x_minus.

    Within the base cell ]x_minus, x_plus[ the slopes are K_left on the
    negative part and K_right on the positive part; h_i(0) = offsets[i].
    """

    K_left: tuple[float, float]
    K_right: tuple[float, float]
    x_minus: float
    x_plus: float
    offsets: tuple[float, float] = (0.0, 0.0)

    @property
    def period(self) -> float:
        return self.x_plus - self.x_minus

    def _base_value(self, i: int, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.where(xi < 0.0, self.K_left[i] * xi, self.K_right[i] * xi)

    def h_at(self, player: int, x) -> np.ndarray:
        i = player - 1
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        ell = self.period
        n = np.floor((xs - self.x_minus) / ell)
        xi = xs - n * ell
        per_cell = self.K_right[i] * self.x_plus - self.K_left[i] * self.x_minus
        out = self.offsets[i] + n * per_cell + self._base_value(i, xi)
        return out if np.ndim(x) else float(out[0])

    def slope_at(self, x: float) -> tuple[float, float]:
        xi = x - self.period * math.floor((x - self.x_minus) / self.period)
        return self.K_left if xi < 0.0 else self.K_right

    def to_json_dict(self) -> dict:
        return {
            "kind": "periodic",
            "slopes_negative_part": list(self.K_left),
            "slopes_positive_part": list(self.K_right),
            "x_minus": self.x_minus,
            "x_plus": self.x_plus,
            "period": self.period,
            "offsets": list(self.offsets),
        }


def cost_eval(cost, player: int, x):
    if isinstance(cost, PeriodicCost):
        return cost.h_at(player, x)
    return eval_cost(cost, player, x)


@dataclass
class Piece:
    """One x-contiguous fragment of a gradient profile.

    Constant pieces carry an exact p value (tails and first-interval
    equilibria); sampled pieces carry orbit arrays.  x_lo/x_hi may be
    infinite on tails.
    """

    x_lo: float
    x_hi: float
    K: tuple[float, float]
    interval_index: int | None = None
    p_const: tuple[float, float] | None = None
    s: np.ndarray | None = None
    p: np.ndarray | None = None
    x: np.ndarray | None = None
    w: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "constant" if self.p_const is not None else "sampled"

    @classmethod
    def from_orbit(cls, orbit: Orbit, x_lo: float, x_hi: float, interval_index=None):
        keep = np.concatenate([[True], np.diff(orbit.x) > 0.0])
        return cls(
            x_lo=float(x_lo),
            x_hi=float(x_hi),
            K=orbit.K,
            interval_index=interval_index,
            s=orbit.s[keep],
            p=orbit.p[keep],
            x=orbit.x[keep],
            w=None if orbit.w is None else orbit.w[keep],
        )

    def p_eval(self, xq: np.ndarray) -> np.ndarray:
        out = np.empty((len(xq), 2))
        if self.p_const is not None:
            out[:, 0] = self.p_const[0]
            out[:, 1] = self.p_const[1]
            return out
        out[:, 0] = np.interp(xq, self.x, self.p[:, 0])
        out[:, 1] = np.interp(xq, self.x, self.p[:, 1])
        return out

    def p_left(self) -> np.ndarray:
        return np.asarray(self.p_const if self.p_const is not None else self.p[0])

    def p_right(self) -> np.ndarray:
        return np.asarray(self.p_const if self.p_const is not None else self.p[-1])


@dataclass(frozen=True)
class JumpPoint:
    x: float
    p_left: tuple[float, float]
    p_right: tuple[float, float]


@dataclass
class AdmissibilityReport:
    hj_residual_sup: float
    growth_constant: float
    tail_slopes: dict
    tails_linear: bool
    jump_checks: list[dict]
    seam_sup: float
    verdict: str
    reasons: list[str] = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return self.verdict == "admissible"

    def to_json_dict(self) -> dict:
        return {
            "hj_residual_sup": self.hj_residual_sup,
            "growth_constant": self.growth_constant,
            "tail_slopes": self.tail_slopes,
            "tails_linear": self.tails_linear,
            "jump_checks": self.jump_checks,
            "seam_sup": self.seam_sup,
            "verdict": self.verdict,
            "reasons": self.reasons,
        }


@dataclass
class AdmissibleSolution:
    """A gradient profile over the whole line plus its value reconstruction.

    pieces are ordered, contiguous, and cover the line either through
    infinite constant tails or a periodic extension (meta['period']).
    """

    cost: object
    pieces: list[Piece]
    jump_points: list[JumpPoint]
    regime: Regime
    window: tuple[float, float]
    profile_x: np.ndarray | None = None
    profile_p: np.ndarray | None = None
    profile_u: np.ndarray | None = None
    admissibility: AdmissibilityReport | None = None
    meta: dict = field(default_factory=dict)

    @property
    def period(self) -> float | None:
        return self.meta.get("period")

    def covered_range(self) -> tuple[float, float]:
        return self.pieces[0].x_lo, self.pieces[-1].x_hi

    def _fold(self, xq: np.ndarray) -> np.ndarray:
        ell = self.period
        if ell is None:
            return xq
        lo, hi = self.covered_range()
        out = xq.copy()
        below = out < lo
        above = out > hi
        out[below] += ell * np.ceil((lo - out[below]) / ell)
        out[above] -= ell * np.ceil((out[above] - hi) / ell)
        return out

    def p_at(self, x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        xs_f = self._fold(xs)
        bounds = np.array([pc.x_hi for pc in self.pieces[:-1]])
        idx = np.searchsorted(bounds, xs_f, side="right")
        out = np.empty((len(xs_f), 2))
        for j, pc in enumerate(self.pieces):
            m = idx == j
            if m.any():
                out[m] = pc.p_eval(xs_f[m])
        return out if np.ndim(x) else out[0]

    def u_at(self, x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_2d(self.p_at(xs))
        q = p[:, 0] * p[:, 1]
        out = np.empty_like(p)
        for i in (0, 1):
            out[:, i] = cost_eval(self.cost, i + 1, xs) - q - 0.5 * p[:, i] ** 2
        return out if np.ndim(x) else out[0]


def profile_grid(solution: AdmissibleSolution, window, grid_dx: float) -> np.ndarray:
    """Union of a uniform grid over the window with every orbit sample and
    finite piece boundary.

    Samples outside the window are kept so the grid always reaches the true
    tail cut-offs; evaluating a profile against tails attached at the window
    edge would otherwise manufacture spurious seams."""
    lo, hi = float(window[0]), float(window[1])
    n = max(2, int(round((hi - lo) / grid_dx)) + 1)
    xs = [np.linspace(lo, hi, n)]
    for pc in solution.pieces:
        if pc.x is not None:
            xs.append(pc.x)
        for b in (pc.x_lo, pc.x_hi):
            if math.isfinite(b):
                xs.append(np.array([b]))
    grid = np.unique(np.concatenate(xs))
    return grid


def reconstruct_values(solution: AdmissibleSolution, window=None, grid_dx=None):
    """Pointwise value reconstruction u_i = h_i - p1*p2 - p_i^2/2 on the
    union grid; stores and returns (x, p, u) arrays."""
    window = window or solution.window
    grid_dx = grid_dx or PROFILE_DX
    xs = profile_grid(solution, window, grid_dx)
    p = solution.p_at(xs)
    u = solution.u_at(xs)
    solution.profile_x, solution.profile_p, solution.profile_u = xs, p, u
    return xs, p, u


def _integral_values(solution: AdmissibleSolution, xs, p_grid, u_grid):
    """Candidate values obtained by integrating the gradient profile,
    anchored to the pointwise reconstruction at the left edge.

    Orbit pieces use their integrator-accumulated running integrals between
    samples, so the comparison against the pointwise values is limited by
    the integration tolerance, not by the grid."""
    u_int = np.empty_like(u_grid)
    bounds = np.array([pc.x_hi for pc in solution.pieces[:-1]])
    xs_f = solution._fold(xs.copy()) if solution.period is not None else xs
    idx = np.searchsorted(bounds, xs_f, side="right")
    running = u_grid[0].copy()
    for j, pc in enumerate(solution.pieces):
        m = idx == j
        if not m.any():
            continue
        xq = xs_f[m]
        order = np.argsort(xq)
        xq_s = xq[order]
        if pc.p_const is not None:
            W = np.outer(xq_s - xq_s[0], np.asarray(pc.p_const))
            x_exit = pc.x_hi if math.isfinite(pc.x_hi) else xq_s[-1]
            w_exit = np.asarray(pc.p_const) * (x_exit - xq_s[0])
        else:
            k = np.clip(np.searchsorted(pc.x, xq_s, side="right") - 1, 0, len(pc.x) - 2)
            pq = pc.p_eval(xq_s)
            if pc.w is not None:
                w_at_k = pc.w[k] - pc.w[0]
                w_end = pc.w[-1] - pc.w[0]
            else:
                cellw = 0.5 * (pc.p[1:] + pc.p[:-1]) * np.diff(pc.x)[:, None]
                cum = np.vstack([np.zeros(2), np.cumsum(cellw, axis=0)])
                w_at_k = cum[k]
                w_end = cum[-1]
            partial = 0.5 * (pq + pc.p[k]) * (xq_s - pc.x[k])[:, None]
            Wabs = w_at_k + partial
            W = Wabs - Wabs[0]
            w_exit = w_end - Wabs[0]
        vals = running[None, :] + W
        tmp = np.empty_like(vals)
        tmp[order] = vals
        u_int[m] = tmp
        running = running + w_exit
    return u_int


def _tail_descriptions(solution: AdmissibleSolution) -> tuple[dict, bool]:
    tails = {}
    linear = True
    if solution.period is not None:
        lo, hi = solution.covered_range()
        tails["kind"] = "periodic"
        tails["period"] = solution.period
        ell = solution.period
        trend = [
            float(cost_eval(solution.cost, i, lo + ell) - cost_eval(solution.cost, i, lo)) / ell
            for i in (1, 2)
        ]
        tails["per_period_value_trend"] = trend
        return tails, True
    left, right = solution.pieces[0], solution.pieces[-1]
    for name, pc in (("left", left), ("right", right)):
        if pc.p_const is not None and not math.isfinite(
            pc.x_lo if name == "left" else pc.x_hi
        ):
            tails[name] = {"p": list(pc.p_const), "from_x": pc.x_hi if name == "left" else pc.x_lo}
        else:
            linear = False
    return tails, linear


def detect_jumps(solution: AdmissibleSolution) -> list[JumpPoint]:
    """Seams whose p-gap exceeds the jump-detection threshold."""
    jumps = list(solution.jump_points)
    known = {round(j.x, 9) for j in jumps}
    for a, b in zip(solution.pieces[:-1], solution.pieces[1:]):
        gap = np.abs(a.p_right() - b.p_left()).max()
        if gap > JUMP_DETECT and round(a.x_hi, 9) not in known:
            jumps.append(
                JumpPoint(a.x_hi, tuple(a.p_right()), tuple(b.p_left()))
            )
    return sorted(jumps, key=lambda j: j.x)


def check_admissibility(
    solution: AdmissibleSolution,
    window: tuple[float, float] | None = None,
    tolerances: Tolerances | None = None,
) -> AdmissibilityReport:
    """Evaluate the three admissibility conditions on a sample grid.

    The equation residual compares the pointwise value reconstruction with
    the integral of the gradient profile (anchored at the window's left
    edge); growth is the smallest linear bound over the window together with
    the exactness of the tails; jumps must be sign-correct reflections."""
    tol = tolerances or Tolerances()
    window = window or tol.growth_window
    xs = profile_grid(solution, window, tol.grid_dx)
    p = solution.p_at(xs)
    u = solution.u_at(xs)
    u_int = _integral_values(solution, xs, p, u)
    residual = float(np.max(np.abs(u - u_int)))

    growth = float(np.max(np.abs(u) / (1.0 + np.abs(xs))[:, None]))
    tails, tails_linear = _tail_descriptions(solution)

    reasons = []
    jump_rows = []
    for jp in detect_jumps(solution):
        pl = np.asarray(jp.p_left)
        pr = np.asarray(jp.p_right)
        reflection_err = float(np.max(np.abs(pl + pr)))
        sum_right = float(pr.sum())
        sum_left = float(pl.sum())
        reflection_ok = reflection_err <= tol.jump
        sign_ok = sum_right <= tol.jump
        one_sided = (sum_right <= tol.jump) or (sum_left >= -tol.jump)
        ok = reflection_ok and sign_ok
        jump_rows.append(
            {
                "x": jp.x,
                "p_left": list(map(float, pl)),
                "p_right": list(map(float, pr)),
                "reflection_error": reflection_err,
                "sum_right": sum_right,
                "passes": ok,
                "one_sided_pass": one_sided,
            }
        )
        if not ok:
            if one_sided and not reflection_ok:
                reasons.append("jump_reflection")
            else:
                reasons.append("jump_sign")

    # value continuity across piece seams (gradient seams are checked above)
    seam_sup = 0.0
    for a, b in zip(solution.pieces[:-1], solution.pieces[1:]):
        if not math.isfinite(a.x_hi):
            continue
        pl = a.p_right()
        pr = b.p_left()
        xb = a.x_hi
        h = np.array([cost_eval(solution.cost, i, xb) for i in (1, 2)])
        ul = h - pl[0] * pl[1] - 0.5 * pl**2
        ur = h - pr[0] * pr[1] - 0.5 * pr**2
        seam_sup = max(seam_sup, float(np.max(np.abs(ul - ur))))

    if residual > tol.residual:
        reasons.insert(0, "residual")
    if not (math.isfinite(growth) and tails_linear):
        reasons.append("growth")
    if seam_sup > tol.seam:
        reasons.append("seam")

    verdict = "admissible" if not reasons else f"inadmissible({','.join(reasons)})"
    return AdmissibilityReport(
        hj_residual_sup=residual,
        growth_constant=growth,
        tail_slopes=tails,
        tails_linear=tails_linear,
        jump_checks=jump_rows,
        seam_sup=seam_sup,
        verdict=verdict,
        reasons=reasons,
    )


def _finish(solution: AdmissibleSolution, tolerances: Tolerances | None) -> AdmissibleSolution:
    tol = tolerances or Tolerances()
    reconstruct_values(solution, solution.window, tol.grid_dx)
    solution.admissibility = check_admissibility(solution, solution.window, tol)
    return solution


# ---------------------------------------------------------------------------
# cooperative construction


def _mirror_spec(spec: CostSpec) -> CostSpec:
    return CostSpec(
        breakpoints=tuple(sorted(-b for b in spec.breakpoints)),
        slopes=tuple((-k1, -k2) for (k1, k2) in reversed(spec.slopes)),
        offsets=spec.offsets,
    )


def _mirror_piece(pc: Piece, n_intervals: int) -> Piece:
    idx = None if pc.interval_index is None else n_intervals - 1 - pc.interval_index
    if pc.p_const is not None:
        return Piece(
            x_lo=-pc.x_hi,
            x_hi=-pc.x_lo,
            K=(-pc.K[0], -pc.K[1]),
            interval_index=idx,
            p_const=(-pc.p_const[0], -pc.p_const[1]),
        )
    return Piece(
        x_lo=-pc.x_hi,
        x_hi=-pc.x_lo,
        K=(-pc.K[0], -pc.K[1]),
        interval_index=idx,
        s=-pc.s[::-1],
        p=-pc.p[::-1],
        x=-pc.x[::-1],
        w=None if pc.w is None else pc.w[::-1].copy(),
    )


def _invariant_box_check(orbit_p: np.ndarray, K, entry, label: str) -> None:
    c1 = max(K[0], K[1], entry[0] / 2.0, entry[1] / 2.0)
    c2 = min(K[0], K[1], entry[0] + entry[1])
    slack = 1e-7 * max(1.0, 2.0 * c1)
    inside = (
        (orbit_p >= -slack).all()
        and (orbit_p <= 2.0 * c1 + slack).all()
        and (orbit_p.sum(axis=1) >= c2 / 2.0 - slack).all()
    )
    if not inside:
        raise InvariantBoxViolation(
            f"{label}: orbit left the invariant box (C1={c1}, C2={c2}); "
            "this indicates an integration fault"
        )


def invariant_box(K, entry) -> tuple[float, float]:
    """(C1, C2) of the positively invariant box for one gluing step."""
    return (
        max(K[0], K[1], entry[0] / 2.0, entry[1] / 2.0),
        min(K[0], K[1], entry[0] + entry[1]),
    )


def build_cooperative(
    spec: CostSpec,
    window: tuple[float, float] = PROFILE_WINDOW,
    tolerances: Tolerances | None = None,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-10,
) -> AdmissibleSolution:
    """Unique admissible solution for a cooperative spec.

    Constant on the first interval, then each interval continues the
    previous endpoint under its own dynamics; the final orbit runs to the
    last interval's equilibrium inside the invariant box.  When both costs
    decrease the mirrored game is built and reflected back.
    """
    report = classify_regime(spec)
    if report.regime is not Regime.COOPERATIVE_UNIQUE:
        raise RegimeMismatch(f"cooperative build requires CooperativeUnique, got {report.regime.value}")

    if all(k1 < 0.0 and k2 < 0.0 for k1, k2 in spec.slopes):
        mirrored = build_cooperative(
            _mirror_spec(spec),
            window=(-window[1], -window[0]),
            tolerances=Tolerances(growth_window=(-window[1], -window[0])),
            rtol=rtol,
            atol=atol,
        )
        pieces = [
            _mirror_piece(pc, len(spec.slopes)) for pc in reversed(mirrored.pieces)
        ]
        solution = AdmissibleSolution(
            cost=spec,
            pieces=pieces,
            jump_points=[],
            regime=Regime.COOPERATIVE_UNIQUE,
            window=window,
            meta={"construction": "cooperative-mirrored"},
        )
        return _finish(solution, tolerances)

    bps = spec.breakpoints
    pieces: list[Piece] = []
    if not bps:
        pieces.append(Piece(-math.inf, math.inf, spec.slopes[0], 0, p_const=spec.slopes[0]))
        solution = AdmissibleSolution(
            cost=spec, pieces=pieces, jump_points=[], regime=Regime.COOPERATIVE_UNIQUE,
            window=window, meta={"construction": "cooperative"},
        )
        return _finish(solution, tolerances)

    pieces.append(Piece(-math.inf, bps[0], spec.slopes[0], 0, p_const=spec.slopes[0]))
    entry = np.asarray(spec.slopes[0], dtype=float)
    for j in range(1, len(spec.slopes)):
        K = spec.slopes[j]
        x_lo = bps[j - 1]
        last = j == len(spec.slopes) - 1
        if last:
            stop = StopConditions(s_span=400.0)
        else:
            stop = StopConditions(
                s_span=400.0, equilibrium_radius=1e-12, x_crossings=(bps[j],)
            )
        orb = integrate(entry, K, "forward", stop, x0=x_lo, rtol=rtol, atol=atol)
        _invariant_box_check(orb.p, K, entry, f"interval {j}")
        if last:
            if orb.termination.kind is not TerminationKind.REACHED_EQUILIBRIUM:
                raise ConvergenceFailure(
                    f"final interval orbit did not reach its equilibrium "
                    f"({orb.termination.tag})"
                )
            pieces.append(Piece.from_orbit(orb, x_lo, orb.x[-1], j))
            pieces.append(Piece(orb.x[-1], math.inf, K, j, p_const=K))
        else:
            if orb.termination.kind is TerminationKind.REACHED_EQUILIBRIUM:
                # endpoint effectively sits on this interval's equilibrium;
                # continue as a constant stretch up to the next breakpoint
                pieces.append(Piece.from_orbit(orb, x_lo, orb.x[-1], j))
                pcst = (float(orb.p[-1, 0]), float(orb.p[-1, 1]))
                pieces.append(Piece(orb.x[-1], bps[j], K, j, p_const=pcst))
                entry = np.asarray(pcst)
            elif orb.termination.kind is TerminationKind.CROSSED_BREAKPOINT:
                pieces.append(Piece.from_orbit(orb, x_lo, bps[j], j))
                entry = orb.p[-1].copy()
            else:
                raise ConvergenceFailure(
                    f"interval {j} orbit terminated {orb.termination.tag} "
                    f"before reaching x={bps[j]}"
                )
    solution = AdmissibleSolution(
        cost=spec, pieces=pieces, jump_points=[], regime=Regime.COOPERATIVE_UNIQUE,
        window=window, meta={"construction": "cooperative"},
    )
    return _finish(solution, tolerances)


# ---------------------------------------------------------------------------
# heteroclinic family constructions (conflicting and mixed)


def _converging_orbit(
    p_in: np.ndarray,
    K,
    direction: str,
    *,
    span: float = 300.0,
    rtol: float = 1e-10,
    atol: float = 1e-10,
) -> Orbit | None:
    """Orbit from p_in that reaches the equilibrium K in the requested
    direction, retrying once with a longer span; None when it diverges."""
    for s_span in (span, 4.0 * span):
        orb = integrate(
            p_in, K, direction, StopConditions(s_span=s_span), rtol=rtol, atol=atol
        )
        kind = orb.termination.kind
        if kind is TerminationKind.REACHED_EQUILIBRIUM:
            return orb
        if kind is not TerminationKind.SPAN_EXHAUSTED:
            return None
    return None


def _two_sided_family_solution(
    spec: CostSpec,
    p_in,
    regime: Regime,
    construction: str,
    window,
    tolerances,
    max_shrinks: int = 40,
) -> AdmissibleSolution:
    """Backward orbit to the first-interval equilibrium, forward orbit to the
    second-interval one, datum anchored at x = 0; the datum is shrunk
    direction-preserving until both orbits converge."""
    K0, K1 = spec.slopes
    requested = np.asarray(p_in, dtype=float)
    datum = requested.copy()
    for attempt in range(max_shrinks + 1):
        back = _converging_orbit(datum, K0, "backward")
        fwd = _converging_orbit(datum, K1, "forward") if back is not None else None
        if back is not None and fwd is not None:
            break
        datum = 0.5 * datum
    else:
        raise ConvergenceFailure(
            f"family datum {tuple(requested)} failed to connect both "
            f"equilibria even after {max_shrinks} halvings"
        )
    back = reconstruct_x(back, 0.0, len(back) - 1)
    fwd = reconstruct_x(fwd, 0.0, 0)
    pieces = [
        Piece(-math.inf, back.x[0], K0, 0, p_const=K0),
        Piece.from_orbit(back, back.x[0], 0.0, 0),
        Piece.from_orbit(fwd, 0.0, fwd.x[-1], 1),
        Piece(fwd.x[-1], math.inf, K1, 1, p_const=K1),
    ]
    solution = AdmissibleSolution(
        cost=spec,
        pieces=pieces,
        jump_points=[],
        regime=regime,
        window=window,
        meta={
            "construction": construction,
            "requested_datum": list(map(float, requested)),
            "used_datum": list(map(float, datum)),
            "shrink_count": attempt,
        },
    )
    return _finish(solution, tolerances)


def _conflicting_quadrant(report: RegimeReport) -> int:
    """-1 when the family lives in the p1<0<p2 quadrant, +1 for the mirror
    pattern (first interval in sector 7), whose data have p2 < 0 < p1."""
    return -1 if report.per_interval_sectors[0] in (Sector.S4, Sector.S3) else 1


def build_conflicting_family(
    spec: CostSpec,
    p_in,
    window: tuple[float, float] = PROFILE_WINDOW,
    tolerances: Tolerances | None = None,
) -> AdmissibleSolution:
    """One member of the anti-diagonal family of admissible solutions."""
    report = classify_regime(spec)
    if report.regime is not Regime.CONFLICTING_MANY:
        raise RegimeMismatch(
            f"family build requires ConflictingMany, got {report.regime.value}"
        )
    quad = _conflicting_quadrant(report)
    p1, p2 = float(p_in[0]), float(p_in[1])
    norm = math.hypot(p1, p2)
    if norm == 0.0:
        raise DatumOutsideFamily("datum must be nonzero")
    if abs(p1 + p2) > 1e-9 * norm:
        raise DatumOutsideFamily(f"datum {p_in} is not on the anti-diagonal")
    if quad == -1 and not (p1 < 0.0 < p2):
        raise DatumOutsideFamily(f"datum {p_in} must satisfy p1 < 0 < p2")
    if quad == 1 and not (p2 < 0.0 < p1):
        raise DatumOutsideFamily(f"datum {p_in} must satisfy p2 < 0 < p1")
    a0 = spec.slopes[0][1] / spec.slopes[0][0]
    a1 = spec.slopes[1][1] / spec.slopes[1][0]
    if not (eigen_slope(a1, -1) < -1.0 < eigen_slope(a0, 1)):
        raise DatumOutsideFamily(
            "anti-diagonal data are not between the relevant eigendirections"
        )
    return _two_sided_family_solution(
        spec, (p1, p2), Regime.CONFLICTING_MANY, "conflicting-family", window, tolerances
    )


def mixed_cone_bounds(spec: CostSpec) -> tuple[float, float]:
    """Open interval of admissible datum slopes p2/p1 for the mixed regime."""
    a0 = spec.slopes[0][1] / spec.slopes[0][0]
    a1 = spec.slopes[1][1] / spec.slopes[1][0]
    b0, b1 = eigen_slope(a0, -1), eigen_slope(a1, -1)
    return (b0, b1) if b0 < b1 else (b1, b0)


def build_mixed_family(
    spec: CostSpec,
    p_in,
    window: tuple[float, float] = PROFILE_WINDOW,
    tolerances: Tolerances | None = None,
) -> AdmissibleSolution:
    """One member of the mixed-regime family, datum in the open slope cone."""
    report = classify_regime(spec)
    if report.regime is not Regime.MIXED_MANY:
        raise RegimeMismatch(f"mixed build requires MixedMany, got {report.regime.value}")
    p1, p2 = float(p_in[0]), float(p_in[1])
    if not (p1 < 0.0 < p2):
        raise DatumOutsideFamily(f"datum {p_in} must satisfy p1 < 0 < p2")
    lo, hi = mixed_cone_bounds(spec)
    ratio = p2 / p1
    if not (lo < ratio < hi):
        raise DatumOutsideFamily(
            f"datum slope {ratio:.6g} outside the open cone ({lo:.6g}, {hi:.6g})"
        )
    return _two_sided_family_solution(
        spec, (p1, p2), Regime.MIXED_MANY, "mixed-family", window, tolerances
    )


# ---------------------------------------------------------------------------
# manifold-arc constructions (extra conflicting solution, periodic costs)


def _manifold_arcs(K0, K1, side: int, span: float = 80.0):
    """Unstable arc of the first dynamics and stable arc of the second, shot
    into the quadrant selected by side, plus their crossing (or None)."""
    g_u = shoot_unstable(K0, side, StopConditions(s_span=span))
    g_s = shoot_stable(K1, side, StopConditions(s_span=span))
    detail = locate_intersection(g_u, g_s)
    return g_u, g_s, detail


def _anchored_crossing_arcs(g_u: Orbit, g_s: Orbit, detail):
    """Truncate the arcs at the crossing and anchor it at x = 0; returns the
    two arcs plus the finite x-extent (x_minus, x_plus) of the pair."""
    arc_u = truncate_after(g_u, detail.index_a, detail.t_a, detail.point)
    arc_s = truncate_before(g_s, detail.index_b, detail.t_b, detail.point)
    arc_u = reconstruct_x(arc_u, 0.0, len(arc_u) - 1)
    arc_s = reconstruct_x(arc_s, 0.0, 0)
    x_minus = arc_u.origin_limit_left
    x_plus = arc_s.origin_limit_right
    if x_minus is None or x_plus is None or not (x_minus < 0.0 < x_plus):
        raise ConvergenceFailure("crossing arcs have no valid finite x-extent")
    return arc_u, arc_s, float(x_minus), float(x_plus)


def build_conflicting_extra(
    spec: CostSpec,
    window: tuple[float, float] = PROFILE_WINDOW,
    tolerances: Tolerances | None = None,
) -> AdmissibleSolution | None:
    """Extra solution through the crossing of the two origin manifold arcs.

    Present only when the unstable arc of the first interval crosses the
    stable arc of the second; the crossing sits at x = 0 and the profile is
    extended through the origin by the complementary manifold arcs and then
    by the constant equilibria."""
    report = classify_regime(spec)
    if report.regime is not Regime.CONFLICTING_MANY:
        raise RegimeMismatch(
            f"extra-solution build requires ConflictingMany, got {report.regime.value}"
        )
    K0, K1 = spec.slopes
    side = _conflicting_quadrant(report)
    g_u, g_s, detail = _manifold_arcs(K0, K1, side)
    if detail is None:
        return None
    arc_u, arc_s, x_minus, x_plus = _anchored_crossing_arcs(g_u, g_s, detail)

    ext_left = None
    for s in (side, -side):
        cand = shoot_stable(K0, s, StopConditions(s_span=300.0))
        if cand.termination.kind is TerminationKind.REACHED_EQUILIBRIUM:
            ext_left = cand
            break
    ext_right = None
    for s in (side, -side):
        cand = shoot_unstable(K1, s, StopConditions(s_span=300.0))
        if cand.termination.kind is TerminationKind.REACHED_EQUILIBRIUM:
            ext_right = cand
            break
    if ext_left is None or ext_right is None:
        raise ConvergenceFailure(
            "extension manifold arcs do not connect to the interval equilibria"
        )
    ext_left = replace(
        ext_left, x=ext_left.x + (x_minus - ext_left.origin_limit_right)
    )
    ext_right = replace(
        ext_right, x=ext_right.x + (x_plus - ext_right.origin_limit_left)
    )
    pieces = [
        Piece(-math.inf, ext_left.x[0], K0, 0, p_const=K0),
        Piece.from_orbit(ext_left, ext_left.x[0], x_minus, 0),
        Piece.from_orbit(arc_u, x_minus, 0.0, 0),
        Piece.from_orbit(arc_s, 0.0, x_plus, 1),
        Piece.from_orbit(ext_right, x_plus, ext_right.x[-1], 1),
        Piece(ext_right.x[-1], math.inf, K1, 1, p_const=K1),
    ]
    solution = AdmissibleSolution(
        cost=spec,
        pieces=pieces,
        jump_points=[],
        regime=Regime.CONFLICTING_MANY,
        window=window,
        meta={
            "construction": "conflicting-extra",
            "crossing": list(detail.point),
            "x_minus": x_minus,
            "x_plus": x_plus,
        },
    )
    return _finish(solution, tolerances)


def build_periodic(
    K0,
    K1,
    n_periods: int = 2,
    tolerances: Tolerances | None = None,
) -> AdmissibleSolution:
    """Periodic-cost solution induced by a crossing of the manifold arcs.

    Requires the first slope pair in sector 3 and the second in sector 4;
    raises NoIntersection when the arcs do not cross (the construction is
    conditional on the crossing)."""
    s0, s1 = classify_sector(K0), classify_sector(K1)
    if (s0, s1) != (Sector.S3, Sector.S4):
        raise RegimeMismatch(
            f"periodic build requires sectors (S3, S4), got ({s0.name}, {s1.name})"
        )
    g_u, g_s, detail = _manifold_arcs(K0, K1, -1)
    if detail is None:
        raise NoIntersection(
            "the unstable and stable manifold arcs do not cross for this slope pair"
        )
    arc_u, arc_s, x_minus, x_plus = _anchored_crossing_arcs(g_u, g_s, detail)
    ell = x_plus - x_minus
    cost = PeriodicCost(tuple(map(float, K0)), tuple(map(float, K1)), x_minus, x_plus)

    pieces = []
    for n in range(-n_periods, n_periods + 1):
        shift = n * ell
        u_n = replace(arc_u, x=arc_u.x + shift)
        s_n = replace(arc_s, x=arc_s.x + shift)
        pieces.append(Piece.from_orbit(u_n, x_minus + shift, shift, None))
        pieces.append(Piece.from_orbit(s_n, shift, x_plus + shift, None))
    window = (x_minus - n_periods * ell, x_plus + n_periods * ell)
    solution = AdmissibleSolution(
        cost=cost,
        pieces=pieces,
        jump_points=[],
        regime=Regime.PERIODIC,
        window=window,
        meta={
            "construction": "periodic",
            "period": ell,
            "crossing": list(detail.point),
            "x_minus": x_minus,
            "x_plus": x_plus,
        },
    )
    tol = tolerances or Tolerances(growth_window=window)
    if tol.growth_window != window:
        tol = replace(tol, growth_window=window)
    return _finish(solution, tol)


# ---------------------------------------------------------------------------
# nonexistence certification


@dataclass
class NonexistenceCertificate:
    regime: Regime
    note: str
    n_probes: int
    probe_radius: float
    origin_exclusion: float
    probes: list[dict]
    counts: dict
    inconsistent_count: int
    verdict: str

    def to_json_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "note": self.note,
            "n_probes": self.n_probes,
            "probe_radius": self.probe_radius,
            "origin_exclusion": self.origin_exclusion,
            "counts": self.counts,
            "inconsistent_count": self.inconsistent_count,
            "verdict": self.verdict,
            "probes": self.probes,
        }


def _probe_grid(n: int, radius: float, exclusion: float) -> np.ndarray:
    """Deterministic cell-centered grid in the square of the given radius,
    excluding a ball around the origin, truncated to exactly n points."""
    if n <= 0:
        return np.empty((0, 2))
    m = max(2, math.ceil(math.sqrt(n)))
    while True:
        c = (np.arange(m) + 0.5) / m * 2.0 * radius - radius
        X, Y = np.meshgrid(c, c, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > exclusion]
        if len(pts) >= n:
            return pts[:n]
        m += 1


def certify_nonexistence(
    spec: CostSpec,
    n_probes: int,
    *,
    probe_radius: float | None = None,
    span: float = 80.0,
) -> NonexistenceCertificate:
    """Probe sweep corroborating that no admissible solution exists.

    Every candidate profile needs a forward orbit of the second interval's
    dynamics that stays bounded and a backward orbit of the first interval's
    that does the same; each probe is checked on both sides and counted as
    inconsistent when either side blows up."""
    report = classify_regime(spec)
    if report.regime is not Regime.CONFLICTING_NONE:
        raise RegimeMismatch(
            f"nonexistence certification requires ConflictingNone, got {report.regime.value}"
        )
    K0, K1 = spec.slopes
    radius = probe_radius or 1.0 + max(abs(k) for pair in spec.slopes for k in pair)
    exclusion = 0.05 * radius
    pts = _probe_grid(n_probes, radius, exclusion)
    stop = StopConditions(s_span=span)
    rows = []
    counts = {
        "forward_blowup": 0,
        "stable_orbit_backward_blowup": 0,
        "backward_blowup_only": 0,
        "bounded_both": 0,
        "undetermined": 0,
    }
    n_inconsistent = 0
    for p0 in pts:
        # qualitative outcomes only; looser tolerances keep the sweep fast
        fwd = integrate(p0, K1, "forward", stop, refine_tol=None, rtol=1e-8, atol=1e-8)
        bwd = integrate(p0, K0, "backward", stop, refine_tol=None, rtol=1e-8, atol=1e-8)
        fk, bk = fwd.termination.kind, bwd.termination.kind
        inconsistent = TerminationKind.BLOW_UP in (fk, bk)
        if fk is TerminationKind.BLOW_UP:
            category = "forward_blowup"
        elif fk is TerminationKind.REACHED_ORIGIN and bk is TerminationKind.BLOW_UP:
            category = "stable_orbit_backward_blowup"
        elif bk is TerminationKind.BLOW_UP:
            category = "backward_blowup_only"
        elif fk is TerminationKind.SPAN_EXHAUSTED or bk is TerminationKind.SPAN_EXHAUSTED:
            category = "undetermined"
        else:
            category = "bounded_both"
        counts[category] += 1
        n_inconsistent += int(inconsistent)
        rows.append(
            {
                "p1": float(p0[0]),
                "p2": float(p0[1]),
                "forward": fk.value,
                "backward": bk.value,
                "inconsistent": bool(inconsistent),
                "category": category,
            }
        )
    if n_probes == 0:
        verdict = "no admissible solution (regime verdict; no probes requested)"
    elif n_inconsistent == n_probes:
        verdict = (
            f"no admissible solution corroborated: {n_inconsistent}/{n_probes} "
            "probes inconsistent with admissibility"
        )
    else:
        verdict = (
            f"corroboration incomplete: {n_inconsistent}/{n_probes} probes "
            "inconsistent with admissibility"
        )
    return NonexistenceCertificate(
        regime=Regime.CONFLICTING_NONE,
        note=report.notes,
        n_probes=n_probes,
        probe_radius=float(radius),
        origin_exclusion=float(exclusion),
        probes=rows,
        counts=counts,
        inconsistent_count=n_inconsistent,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# artifact io


def _piece_index_for(solution: AdmissibleSolution, xs: np.ndarray) -> np.ndarray:
    bounds = np.array([pc.x_hi for pc in solution.pieces[:-1]])
    xs_f = solution._fold(xs.copy()) if solution.period is not None else xs
    return np.searchsorted(bounds, xs_f, side="right")


def save_solution_csv(solution: AdmissibleSolution, path) -> None:
    if solution.profile_x is None:
        reconstruct_values(solution)
    xs, p, u = solution.profile_x, solution.profile_p, solution.profile_u
    idx = _piece_index_for(solution, xs)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,p1,p2,u1,u2,piece_index\n")
        for i in range(len(xs)):
            fh.write(
                f"{float(xs[i])!r},{float(p[i, 0])!r},{float(p[i, 1])!r},"
                f"{float(u[i, 0])!r},{float(u[i, 1])!r},{int(idx[i])}\n"
            )


def solution_sidecar_dict(solution: AdmissibleSolution, tolerances: Tolerances | None = None) -> dict:
    tol = tolerances or Tolerances()
    tails, _ = _tail_descriptions(solution)
    cost_dict = (
        solution.cost.to_json_dict()
        if hasattr(solution.cost, "to_json_dict")
        else None
    )
    return {
        "regime": solution.regime.value,
        "cost": cost_dict,
        "window": list(solution.window),
        "jump_points": [
            {"x": j.x, "p_left": list(j.p_left), "p_right": list(j.p_right)}
            for j in detect_jumps(solution)
        ],
        "tails": tails,
        "admissibility": (
            solution.admissibility.to_json_dict() if solution.admissibility else None
        ),
        "tolerances": {
            "residual": tol.residual,
            "jump": tol.jump,
            "seam": tol.seam,
            "growth_window": list(tol.growth_window),
            "grid_dx": tol.grid_dx,
        },
        "meta": solution.meta,
    }


def save_solution(solution: AdmissibleSolution, csv_path, json_path, tolerances=None) -> None:
    save_solution_csv(solution, csv_path)
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(solution_sidecar_dict(solution, tolerances), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_solution(csv_path, json_path) -> AdmissibleSolution:
    """Rebuild an evaluable solution from its CSV profile and JSON sidecar."""
    data = np.genfromtxt(csv_path, delimiter=",", skip_header=1, comments="#")
    data = np.atleast_2d(data)
    xs, p = data[:, 0], data[:, 1:3]
    with open(json_path, "r", encoding="utf-8") as fh:
        side = json.load(fh)
    cost_doc = side.get("cost")
    if cost_doc and cost_doc.get("kind") == "periodic":
        cost = PeriodicCost(
            tuple(cost_doc["slopes_negative_part"]),
            tuple(cost_doc["slopes_positive_part"]),
            cost_doc["x_minus"],
            cost_doc["x_plus"],
            tuple(cost_doc.get("offsets", (0.0, 0.0))),
        )
    else:
        cost = spec_from_json_dict(cost_doc)
    tails = side.get("tails", {})
    meta = dict(side.get("meta", {}))
    pieces = []
    core = Piece(
        x_lo=float(xs[0]),
        x_hi=float(xs[-1]),
        K=(math.nan, math.nan),
        s=np.arange(len(xs), dtype=float),
        p=p.copy(),
        x=xs.copy(),
        w=None,
    )
    period = tails.get("period") if tails.get("kind") == "periodic" else None
    if period is None:
        if "left" in tails:
            pieces.append(
                Piece(-math.inf, float(xs[0]), tuple(tails["left"]["p"]), p_const=tuple(tails["left"]["p"]))
            )
        pieces.append(core)
        if "right" in tails:
            pieces.append(
                Piece(float(xs[-1]), math.inf, tuple(tails["right"]["p"]), p_const=tuple(tails["right"]["p"]))
            )
    else:
        meta["period"] = period
        pieces.append(core)
    jumps = [
        JumpPoint(j["x"], tuple(j["p_left"]), tuple(j["p_right"]))
        for j in side.get("jump_points", [])
    ]
    sol = AdmissibleSolution(
        cost=cost,
        pieces=pieces,
        jump_points=jumps,
        regime=Regime(side["regime"]),
        window=tuple(side.get("window", PROFILE_WINDOW)),
        meta=meta,
    )
    sol.profile_x = xs
    sol.profile_p = p
    if data.shape[1] >= 5:
        sol.profile_u = data[:, 3:5]
    return sol
