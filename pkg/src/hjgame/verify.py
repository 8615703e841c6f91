"""Closed-loop simulation and numerical Nash certification.

The candidate feedback pair is minus the gradient profile of an admissible
solution.  Certification simulates the closed loop to get each player's
realized discounted cost, then freezes the opponent's feedback and solves the
deviating player's stationary control problem on a grid; the gap between the
two numbers is the (numerical) incentive to deviate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import (
    EmptyTrajectory,
    InvalidGrid,
    InvalidHorizon,
    NonConvergence,
    WindowEscape,
)
from .solutions import AdmissibleSolution, cost_eval

SETTLE_SPEED = 1e-9
SETTLE_HOLD = 1.0


class _GradientProfile:
    """Compact evaluator of a solution's gradient profile with tails.

    Interpolates on the orbit samples rather than the dense reporting grid,
    with a scalar fast path for ODE right-hand sides.  Raises WindowEscape
    outside the covered range when no tail or periodic extension exists."""

    def __init__(self, solution: AdmissibleSolution):
        xs_parts = []
        p_parts = []
        for pc in solution.pieces:
            if pc.x is not None:
                xs_parts.append(pc.x)
                p_parts.append(pc.p)
        if xs_parts:
            xs = np.concatenate(xs_parts)
            ps = np.vstack(p_parts)
            order = np.argsort(xs, kind="stable")
            xs, ps = xs[order], ps[order]
            keep = np.concatenate([[True], np.diff(xs) > 0.0])
            self.xs = xs[keep]
            self.p1 = np.ascontiguousarray(ps[keep, 0])
            self.p2 = np.ascontiguousarray(ps[keep, 1])
        else:
            self.xs = np.empty(0)
            self.p1 = self.p2 = self.xs
        self.period = solution.period
        self.left = self.right = None
        for pc in (solution.pieces[0], solution.pieces[-1]):
            if pc.p_const is not None:
                if not math.isfinite(pc.x_lo):
                    self.left = np.asarray(pc.p_const, dtype=float)
                if not math.isfinite(pc.x_hi):
                    self.right = np.asarray(pc.p_const, dtype=float)

    def scalar(self, x: float) -> tuple[float, float]:
        xs = self.xs
        if self.period is not None and len(xs):
            x = x - self.period * math.floor((x - xs[0]) / self.period)
            x = min(max(x, xs[0]), xs[-1])
        if not len(xs) or x < xs[0]:
            if self.left is None:
                raise WindowEscape(f"state {x:.6g} left the profiled window")
            return self.left[0], self.left[1]
        if x > xs[-1]:
            if self.right is None:
                raise WindowEscape(f"state {x:.6g} left the profiled window")
            return self.right[0], self.right[1]
        return float(np.interp(x, xs, self.p1)), float(np.interp(x, xs, self.p2))

    def __call__(self, x):
        q = np.atleast_1d(np.asarray(x, dtype=float))
        xs = self.xs
        if self.period is not None and len(xs):
            q = q - self.period * np.floor((q - xs[0]) / self.period)
            q = np.clip(q, xs[0], xs[-1])
        if not len(xs):
            below = np.ones(len(q), dtype=bool)
            above = np.zeros(len(q), dtype=bool)
            out = np.empty((len(q), 2))
        else:
            out = np.stack([np.interp(q, xs, self.p1), np.interp(q, xs, self.p2)], axis=1)
            below = q < xs[0]
            above = q > xs[-1]
        if below.any():
            if self.left is None:
                raise WindowEscape(f"state {q[below][0]:.6g} left the profiled window")
            out[below] = self.left
        if above.any():
            if self.right is None:
                raise WindowEscape(f"state {q[above][0]:.6g} left the profiled window")
            out[above] = self.right
        return out


def _gradient_evaluator(solution: AdmissibleSolution) -> _GradientProfile:
    return _GradientProfile(solution)


@dataclass
class ClosedLoopRun:
    y: float
    horizon: float
    t: np.ndarray
    x: np.ndarray
    alphas: np.ndarray  # (n, 2) control samples
    costs: tuple[float, float]
    settled: bool
    t_settle: float | None
    tail_estimates: tuple[float, float]

    def to_json_dict(self) -> dict:
        return {
            "y": self.y,
            "horizon": self.horizon,
            "costs": list(self.costs),
            "settled": self.settled,
            "t_settle": self.t_settle,
            "tail_estimates": list(self.tail_estimates),
            "n_samples": int(len(self.t)),
        }


def run_to_csv(run: ClosedLoopRun, cost, path) -> None:
    g1 = cost_eval(cost, 1, run.x) + 0.5 * run.alphas[:, 0] ** 2
    g2 = cost_eval(cost, 2, run.x) + 0.5 * run.alphas[:, 1] ** 2
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,x,alpha1,alpha2,running_cost1,running_cost2\n")
        for i in range(len(run.t)):
            row = (run.t[i], run.x[i], run.alphas[i, 0], run.alphas[i, 1], g1[i], g2[i])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def evaluate_cost(t, x, alpha, cost, player: int) -> float:
    """Discounted quadrature of h_i(x(t)) + alpha_i(t)^2/2 over the samples.

    The integrand is taken linear on each step and the discount weight is
    integrated exactly inside the step; a linear-extrapolation tail term is
    added beyond the last sample (exact for eventually-linear integrands)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if t.size == 0:
        raise EmptyTrajectory("cost evaluation needs at least one sample")
    g = cost_eval(cost, player, x) + 0.5 * alpha**2
    if t.size == 1:
        return float(math.exp(-t[0]) * g[0])
    dt = np.diff(t)
    m = np.diff(g) / dt
    a_fac = 1.0 - np.exp(-dt)
    b_fac = 1.0 - (1.0 + dt) * np.exp(-dt)
    total = float(np.sum(np.exp(-t[:-1]) * (g[:-1] * a_fac + m * b_fac)))
    tail = math.exp(-t[-1]) * (g[-1] + m[-1])
    return total + tail


def simulate_closed_loop(
    solution: AdmissibleSolution,
    y: float,
    horizon: float,
    *,
    control_shift: tuple[float, float] = (0.0, 0.0),
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_step: float = 0.05,
) -> ClosedLoopRun:
    """Integrate the closed loop from y and accumulate both players' costs.

    control_shift perturbs the played feedbacks additively (used by the
    corrupted-feedback fixtures); the candidate equilibrium is shift (0, 0).
    When the state settles (drift below SETTLE_SPEED for SETTLE_HOLD time
    units) the remaining cost is added in closed form."""
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise InvalidHorizon(f"horizon must be positive and finite, got {horizon}")
    grad = _gradient_evaluator(solution)
    d1, d2 = float(control_shift[0]), float(control_shift[1])
    shift = d1 + d2

    def rhs(t, state):
        q1, q2 = grad.scalar(state[0])
        return (-q1 - q2 + shift,)

    sol = solve_ivp(
        rhs,
        (0.0, horizon),
        (float(y),),
        method="RK45",
        rtol=rtol,
        atol=atol,
        max_step=max_step,
        dense_output=False,
    )
    if sol.status == -1:
        raise WindowEscape(f"closed-loop integration failed: {sol.message}")
    t = sol.t
    x = sol.y[0]
    p = grad(x)
    alphas = np.stack([-p[:, 0] + d1, -p[:, 1] + d2], axis=1)

    drift = alphas.sum(axis=1)
    settled = False
    t_settle = None
    slow = np.abs(drift) < SETTLE_SPEED
    if slow[-1]:
        idx = len(slow) - 1
        while idx > 0 and slow[idx - 1]:
            idx -= 1
        if t[-1] - t[idx] >= SETTLE_HOLD:
            settled = True
            t_settle = float(t[idx])

    costs = []
    tails = []
    for i in (1, 2):
        if settled:
            m = t <= t_settle
            j_head = evaluate_cost(t[m], x[m], alphas[m, i - 1], solution.cost, i)
            # evaluate_cost already added its own linear tail; replace it by
            # the exact settled remainder
            g_end = float(
                cost_eval(solution.cost, i, x[m][-1]) + 0.5 * alphas[m, i - 1][-1] ** 2
            )
            mslope = 0.0
            j_head -= math.exp(-t[m][-1]) * g_end
            tail = math.exp(-t[m][-1]) * (g_end + mslope)
            costs.append(j_head + tail)
            tails.append(tail)
        else:
            g_end = float(
                cost_eval(solution.cost, i, x[-1]) + 0.5 * alphas[-1, i - 1] ** 2
            )
            costs.append(evaluate_cost(t, x, alphas[:, i - 1], solution.cost, i))
            tails.append(math.exp(-t[-1]) * g_end)
    return ClosedLoopRun(
        y=float(y),
        horizon=float(horizon),
        t=t,
        x=x,
        alphas=alphas,
        costs=(costs[0], costs[1]),
        settled=settled,
        t_settle=t_settle,
        tail_estimates=(tails[0], tails[1]),
    )


# ---------------------------------------------------------------------------
# grid best response


@dataclass(frozen=True)
class GridParams:
    x_lo: float
    x_hi: float
    dx: float
    n_controls: int = 401
    control_bound: float | None = None
    max_policy_iterations: int = 200
    value_tol: float = 1e-9

    def validate(self) -> None:
        if not (self.dx > 0.0 and math.isfinite(self.dx)):
            raise InvalidGrid(f"dx must be positive, got {self.dx}")
        if not self.x_hi > self.x_lo:
            raise InvalidGrid(f"empty window [{self.x_lo}, {self.x_hi}]")
        if self.n_controls < 2:
            raise InvalidGrid("need at least two control points")


@dataclass
class Discretization:
    """Semi-Lagrangian discretization of one player's deviation problem.

    One pseudo-timestep costs tau*(h + a^2/2) and lands on x + tau*(a - p_opp)
    with weight (1 - tau); feet outside the window are evaluated by linear
    extrapolation from the edge cells (penalty-free extension)."""

    xs: np.ndarray
    controls: np.ndarray
    h_vals: np.ndarray
    p_opp: np.ndarray
    tau: float
    extrapolated: bool = field(default=False)

    def _interp(self, v: np.ndarray, q: np.ndarray) -> np.ndarray:
        xs = self.xs
        dx = xs[1] - xs[0]
        idx = np.clip(np.floor((q - xs[0]) / dx).astype(np.int64), 0, len(xs) - 2)
        theta = (q - xs[idx]) / dx
        return (1.0 - theta) * v[idx] + theta * v[idx + 1]

    def sweep(self, v: np.ndarray) -> np.ndarray:
        """One exhaustive-minimization value-iteration sweep."""
        best = None
        for a in self.controls:
            feet = self.xs + self.tau * (a - self.p_opp)
            q = self.tau * (self.h_vals + 0.5 * a * a) + (1.0 - self.tau) * self._interp(v, feet)
            best = q if best is None else np.minimum(best, q)
        return best

    def improve(self, v: np.ndarray) -> np.ndarray:
        """Greedy policy (indices into controls) for the current values."""
        best = None
        arg = np.zeros(len(self.xs), dtype=np.int64)
        for ia, a in enumerate(self.controls):
            feet = self.xs + self.tau * (a - self.p_opp)
            q = self.tau * (self.h_vals + 0.5 * a * a) + (1.0 - self.tau) * self._interp(v, feet)
            if best is None:
                best = q.copy()
            else:
                better = q < best
                best[better] = q[better]
                arg[better] = ia
        return arg

    def evaluate_policy(self, policy: np.ndarray) -> np.ndarray:
        """Exact fixed point of the policy's affine operator (sparse solve)."""
        xs = self.xs
        n = len(xs)
        dx = xs[1] - xs[0]
        a = self.controls[policy]
        feet = xs + self.tau * (a - self.p_opp)
        if (feet < xs[0]).any() or (feet > xs[-1]).any():
            self.extrapolated = True
        idx = np.clip(np.floor((feet - xs[0]) / dx).astype(np.int64), 0, n - 2)
        theta = (feet - xs[idx]) / dx
        rows = np.concatenate([np.arange(n), np.arange(n), np.arange(n)])
        cols = np.concatenate([np.arange(n), idx, idx + 1])
        vals = np.concatenate(
            [np.ones(n), -(1.0 - self.tau) * (1.0 - theta), -(1.0 - self.tau) * theta]
        )
        A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        rho = self.tau * (self.h_vals + 0.5 * a * a)
        return spla.spsolve(A, rho)


def make_discretization(h_fn, opponent_profile, grid: GridParams) -> Discretization:
    grid.validate()
    n = int(round((grid.x_hi - grid.x_lo) / grid.dx)) + 1
    xs = np.linspace(grid.x_lo, grid.x_hi, n)
    p_opp = np.asarray(opponent_profile(xs), dtype=float)
    if p_opp.shape != xs.shape:
        raise InvalidGrid("opponent profile must return one value per grid node")
    bound = grid.control_bound
    if bound is None:
        bound = 2.0 * float(np.max(np.abs(p_opp))) + 1.0
    controls = np.linspace(-bound, bound, grid.n_controls)
    tau = grid.dx / (bound + float(np.max(np.abs(p_opp))) + 1e-12)
    return Discretization(
        xs=xs,
        controls=controls,
        h_vals=np.asarray(h_fn(xs), dtype=float),
        p_opp=p_opp,
        tau=tau,
    )


@dataclass
class ValueTable:
    xs: np.ndarray
    v: np.ndarray
    policy: np.ndarray
    controls: np.ndarray
    tau: float
    iterations: int
    extrapolated: bool
    boundary_control_hit: bool

    def at(self, y: float) -> float:
        return float(np.interp(y, self.xs, self.v))


def solve_best_response_core(h_fn, opponent_profile, grid: GridParams) -> ValueTable:
    """Policy-iteration solve of the semi-Lagrangian fixed point."""
    disc = make_discretization(h_fn, opponent_profile, grid)
    v = disc.h_vals.copy()  # stationary-cost guess
    policy = disc.improve(v)
    for it in range(1, grid.max_policy_iterations + 1):
        v_new = disc.evaluate_policy(policy)
        new_policy = disc.improve(v_new)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if np.array_equal(new_policy, policy) or delta <= grid.value_tol:
            policy = new_policy
            break
        policy = new_policy
    else:
        raise NonConvergence(
            f"policy iteration did not converge within {grid.max_policy_iterations} sweeps"
        )
    boundary_hit = bool((policy == 0).any() or (policy == len(disc.controls) - 1).any())
    return ValueTable(
        xs=disc.xs,
        v=v,
        policy=policy,
        controls=disc.controls,
        tau=disc.tau,
        iterations=it,
        extrapolated=disc.extrapolated,
        boundary_control_hit=boundary_hit,
    )


def best_response(spec, opponent_profile, player: int, grid: GridParams) -> ValueTable:
    """Value table of the deviating player's stationary control problem with
    the opponent's gradient profile frozen."""

    def h_fn(xs):
        return cost_eval(spec, player, xs)

    return solve_best_response_core(h_fn, opponent_profile, grid)


@dataclass
class DeviationReport:
    player: int
    y: float
    nash_cost: float
    best_response_value: float
    gap: float
    grid_dx: float
    iterations: int
    extrapolated: bool
    boundary_control_hit: bool
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "player": self.player,
            "y": self.y,
            "nash_cost": self.nash_cost,
            "best_response_value": self.best_response_value,
            "gap": self.gap,
            "grid_dx": self.grid_dx,
            "iterations": self.iterations,
            "extrapolated": self.extrapolated,
            "boundary_control_hit": self.boundary_control_hit,
            "warnings": self.warnings,
        }


def deviation_gap(
    solution: AdmissibleSolution,
    spec,
    y: float,
    grid: GridParams,
    *,
    horizon: float = 40.0,
    gap_warn: float = 5e-2,
    control_shift: tuple[float, float] = (0.0, 0.0),
) -> tuple[DeviationReport, DeviationReport]:
    """Per-player comparison of the played cost against the grid best
    response with the opponent's feedback frozen."""
    grid.validate()
    if not (grid.x_lo < y < grid.x_hi):
        raise InvalidGrid(f"y={y} must be interior to [{grid.x_lo}, {grid.x_hi}]")
    run = simulate_closed_loop(solution, y, horizon, control_shift=control_shift)
    grad = _gradient_evaluator(solution)
    if grid.control_bound is None:
        n = int(round((grid.x_hi - grid.x_lo) / grid.dx)) + 1
        xs = np.linspace(grid.x_lo, grid.x_hi, n)
        bound = 2.0 * float(np.max(np.abs(grad(xs)))) + 1.0
        grid = GridParams(
            grid.x_lo, grid.x_hi, grid.dx, grid.n_controls, bound,
            grid.max_policy_iterations, grid.value_tol,
        )
    reports = []
    for player in (1, 2):
        other = 2 - (player - 1) - 1  # 0-based index of the opponent column

        def opp(xq, _col=other):
            return grad(xq)[:, _col]

        table = best_response(spec, opp, player, grid)
        v_y = table.at(y)
        nash = run.costs[player - 1]
        gap = nash - v_y
        warnings = []
        if abs(gap) > gap_warn:
            warnings.append(
                f"gap {gap:.4g} exceeds the certification threshold {gap_warn}"
            )
        if table.boundary_control_hit:
            warnings.append("optimal control touched the discretized bound")
        if table.extrapolated:
            warnings.append("value interpolation extrapolated beyond the window")
        reports.append(
            DeviationReport(
                player=player,
                y=float(y),
                nash_cost=float(nash),
                best_response_value=float(v_y),
                gap=float(gap),
                grid_dx=grid.dx,
                iterations=table.iterations,
                extrapolated=table.extrapolated,
                boundary_control_hit=table.boundary_control_hit,
                warnings=warnings,
            )
        )
    return reports[0], reports[1]
