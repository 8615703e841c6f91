"""Command-line front end.

Grammar: hjgame <classify|solve|family|nonexist|periodic|verify|simulate|export>
         --config <path> [options]

Every invocation persists a run directory (config copy, manifest, artifacts)
under the runs root.  Artifacts are deterministic: identical config, command,
parameters and tolerances produce byte-identical CSV/JSON files; run metadata
lives only in the manifest.

Exit codes: 2 config/artifact errors, 3 regime mismatch, 4 construction
failure, 5 best-response non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import plots
from .errors import (
    ConstructionError,
    HJGameError,
    NoIntersection,
    NonConvergence,
    RegimeMismatch,
    SpecError,
)
from .model import Regime, classify_regime, load_spec
from .solutions import (
    PROFILE_WINDOW,
    Tolerances,
    build_conflicting_family,
    build_cooperative,
    build_mixed_family,
    build_periodic,
    certify_nonexistence,
    load_solution,
    mixed_cone_bounds,
    save_solution,
)
from .verify import GridParams, deviation_gap, run_to_csv, simulate_closed_loop

EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_CONSTRUCTION = 4
EXIT_NONCONVERGENCE = 5


def _config_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _new_run_dir(runs_root: Path, config_hash: str) -> tuple[Path, str]:
    base = time.strftime("%Y%m%dT%H%M%S", time.gmtime()) + f"-{config_hash[:8]}"
    run_id = base
    k = 1
    while (runs_root / run_id).exists():
        run_id = f"{base}-{k}"
        k += 1
    run_dir = runs_root / run_id
    run_dir.mkdir(parents=True)
    return run_dir, run_id


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


class RunContext:
    """Artifact directory plus the manifest bookkeeping for one invocation."""

    def __init__(self, args, command: str):
        self.command = command
        self.config_path = Path(args.config) if args.config else None
        self.parameters = {
            k: v
            for k, v in vars(args).items()
            if k not in ("func", "config", "runs_root", "out") and v is not None
        }
        runs_root = Path(args.runs_root)
        chash = _config_hash(self.config_path) if self.config_path else "none"
        if args.out:
            self.dir = Path(args.out)
            self.dir.mkdir(parents=True, exist_ok=True)
            self.run_id = self.dir.name
        else:
            self.dir, self.run_id = _new_run_dir(runs_root, chash)
        self.config_hash = chash
        self.outputs: list[str] = []
        if self.config_path:
            shutil.copy(self.config_path, self.dir / "config.json")

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.dir / name

    def finalize(self) -> None:
        manifest = {
            "run_id": self.run_id,
            "command": self.command,
            "config_hash": self.config_hash,
            "parameters": {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.parameters.items()
            },
            "outputs": sorted(set(self.outputs)),
        }
        _write_json(self.dir / "manifest.json", manifest)
        print(f"artifacts in {self.dir}")


def _tolerances(args) -> Tolerances:
    window = tuple(args.window) if getattr(args, "window", None) else PROFILE_WINDOW
    return Tolerances(
        residual=args.tol_residual,
        jump=args.tol_jump,
        growth_window=window,
        grid_dx=args.profile_dx,
    )


def _render_solution_artifacts(ctx: RunContext, solution, tol, stem: str = "solution"):
    save_solution(solution, ctx.path(f"{stem}.csv"), ctx.path(f"{stem.replace('solution', 'admissibility')}.json"), tol)
    plots.render_phase_figure(solution, ctx.path(f"{stem}_phase.png"))
    plots.render_profile_figure(solution, ctx.path(f"{stem}_profile.png"))


def cmd_classify(args) -> int:
    spec = load_spec(args.config)
    report = classify_regime(spec)
    ctx = RunContext(args, "classify")
    _write_json(ctx.path("regime.json"), report.to_json_dict())
    print("interval sectors:")
    for j, s in enumerate(report.per_interval_sectors):
        lo, hi = spec.interval_of(j)
        print(f"  [{lo:g}, {hi:g}] slopes {spec.slopes[j]}: {s.name}")
    print(f"regime: {report.regime.value}")
    print(f"notes: {report.notes}")
    ctx.finalize()
    return 0


def cmd_solve(args) -> int:
    spec = load_spec(args.config)
    tol = _tolerances(args)
    solution = build_cooperative(spec, window=tol.growth_window, tolerances=tol)
    ctx = RunContext(args, "solve")
    _render_solution_artifacts(ctx, solution, tol)
    rep = solution.admissibility
    print(f"regime: {solution.regime.value}")
    print(f"admissibility: {rep.verdict} (residual {rep.hj_residual_sup:.3e})")
    ctx.finalize()
    return 0


def _family_data(spec, report, count: int):
    k_scale = min(math.hypot(*k) for k in spec.slopes)
    r0 = 0.05 * k_scale
    if report.regime is Regime.CONFLICTING_MANY:
        from .solutions import _conflicting_quadrant

        sgn = _conflicting_quadrant(report)
        direction = np.array([sgn, -sgn]) / math.sqrt(2.0)
    else:
        lo, hi = mixed_cone_bounds(spec)
        slope = 0.5 * (lo + hi)
        direction = np.array([-1.0, -slope])
        direction /= np.linalg.norm(direction)
    return [tuple(r0 * 0.5**k * direction) for k in range(count)]


def cmd_family(args) -> int:
    spec = load_spec(args.config)
    report = classify_regime(spec)
    tol = _tolerances(args)
    if report.regime is Regime.CONFLICTING_MANY:
        builder = build_conflicting_family
    elif report.regime is Regime.MIXED_MANY:
        builder = build_mixed_family
    else:
        raise RegimeMismatch(
            f"family command requires ConflictingMany or MixedMany, got {report.regime.value}"
        )
    if args.pin:
        data = [tuple(float(v) for v in args.pin.split(","))]
    else:
        data = _family_data(spec, report, args.count)
    ctx = RunContext(args, "family")
    for k, p_in in enumerate(data):
        solution = builder(spec, p_in, window=tol.growth_window, tolerances=tol)
        _render_solution_artifacts(ctx, solution, tol, stem=f"solution-{k:03d}")
        rep = solution.admissibility
        used = solution.meta["used_datum"]
        print(
            f"member {k}: datum ({used[0]:.6g}, {used[1]:.6g}) -> {rep.verdict} "
            f"(residual {rep.hj_residual_sup:.3e})"
        )
    ctx.finalize()
    return 0


def cmd_nonexist(args) -> int:
    spec = load_spec(args.config)
    cert = certify_nonexistence(spec, args.probes)
    ctx = RunContext(args, "nonexist")
    _write_json(ctx.path("certificate.json"), cert.to_json_dict())
    if cert.probes:
        plots.render_probe_figure(cert, ctx.path("probes.png"))
    print(cert.verdict)
    for cat, n in cert.counts.items():
        if n:
            print(f"  {cat}: {n}")
    ctx.finalize()
    return 0


def cmd_periodic(args) -> int:
    spec = load_spec(args.config)
    if len(spec.slopes) != 2:
        raise RegimeMismatch("periodic command needs a two-interval config")
    tol = _tolerances(args)
    ctx = RunContext(args, "periodic")
    try:
        solution = build_periodic(
            spec.slopes[0], spec.slopes[1], n_periods=args.periods, tolerances=tol
        )
    except NoIntersection as exc:
        _write_json(
            ctx.path("periodic.json"),
            {"outcome": "no_intersection", "detail": str(exc)},
        )
        print(f"no intersection: {exc}")
        print("the periodic construction is conditional on the crossing; outcome recorded")
        ctx.finalize()
        return 0
    _render_solution_artifacts(ctx, solution, tol)
    _write_json(
        ctx.path("periodic.json"),
        {
            "outcome": "built",
            "period": solution.meta["period"],
            "x_minus": solution.meta["x_minus"],
            "x_plus": solution.meta["x_plus"],
            "crossing": solution.meta["crossing"],
            "induced_cost": solution.cost.to_json_dict(),
        },
    )
    rep = solution.admissibility
    print(
        f"periodic solution built: period {solution.meta['period']:.6g}, "
        f"{rep.verdict} (residual {rep.hj_residual_sup:.3e})"
    )
    ctx.finalize()
    return 0


def _load_artifact(path_str: str):
    csv_path = Path(path_str)
    if not csv_path.exists():
        raise SpecError(f"solution artifact {csv_path} does not exist")
    stem = csv_path.stem
    sidecar = csv_path.parent / (stem.replace("solution", "admissibility") + ".json")
    if not sidecar.exists():
        sidecar = csv_path.with_suffix(".json")
    if not sidecar.exists():
        raise SpecError(f"sidecar JSON for {csv_path} not found")
    return load_solution(csv_path, sidecar)


def cmd_verify(args) -> int:
    spec = load_spec(args.config)
    solution = _load_artifact(args.solution)
    ys = [float(v) for v in args.y.split(",")]
    window = tuple(args.window) if args.window else PROFILE_WINDOW
    lo = min(window[0], min(ys) - 5.0)
    hi = max(window[1], max(ys) + 5.0)
    grid = GridParams(lo, hi, args.grid_dx)
    shift = (0.0, 0.0)
    if args.perturb_feedback:
        player_s, delta_s = args.perturb_feedback.split(":")
        shift = (float(delta_s), 0.0) if int(player_s) == 1 else (0.0, float(delta_s))
    ctx = RunContext(args, "verify")
    rows = []
    print(f"{'y':>8} {'player':>6} {'nash_cost':>14} {'best_resp':>14} {'gap':>12}")
    for y in ys:
        r1, r2 = deviation_gap(solution, spec, y, grid, control_shift=shift)
        for rep in (r1, r2):
            rows.append(rep.to_json_dict())
            print(
                f"{y:8.3f} {rep.player:6d} {rep.nash_cost:14.6f} "
                f"{rep.best_response_value:14.6f} {rep.gap:12.3e}"
            )
            for w in rep.warnings:
                print(f"         warning: {w}")
    _write_json(ctx.path("deviation_reports.json"), rows)
    ctx.finalize()
    return 0


def cmd_simulate(args) -> int:
    spec = load_spec(args.config)
    solution = _load_artifact(args.solution)
    ctx = RunContext(args, "simulate")
    run = simulate_closed_loop(solution, args.y, args.horizon)
    run_to_csv(run, solution.cost, ctx.path("trajectory.csv"))
    _write_json(ctx.path("run.json"), run.to_json_dict())
    print(
        f"closed loop from y={args.y}: J1={run.costs[0]:.6f}, J2={run.costs[1]:.6f}"
        + (f", settled at t={run.t_settle:.3f}" if run.settled else "")
    )
    del spec
    ctx.finalize()
    return 0


def cmd_export(args) -> int:
    solution = _load_artifact(args.artifact)
    if args.format not in ("csv", "svg-data"):
        raise SpecError(f"unknown export format {args.format!r}")
    ctx = RunContext(args, "export")
    if args.format == "csv":
        plots.write_phase_csv(solution, ctx.path("phase_polylines.csv"))
        plots.write_marker_csv(solution, ctx.path("phase_markers.csv"))
        plots.write_xprofile_csv(solution, ctx.path("xprofile.csv"))
    else:
        plots.write_phase_svg(solution, ctx.path("phase.svg"))
        plots.write_xprofile_svg(solution, ctx.path("xprofile.svg"))
    plots.render_phase_figure(solution, ctx.path("phase.png"))
    plots.render_profile_figure(solution, ctx.path("profile.png"))
    print(f"exported {args.format} plot data and figures")
    ctx.finalize()
    return 0


def _add_common(p: argparse.ArgumentParser, needs_config=True) -> None:
    if needs_config:
        p.add_argument("--config", required=True, help="game config JSON")
    else:
        p.add_argument("--config", help="game config JSON")
    p.add_argument("--runs-root", default="runs", help="run persistence root")
    p.add_argument("--out", help="write artifacts into this directory instead")
    p.add_argument("--tol-residual", type=float, default=1e-6)
    p.add_argument("--tol-jump", type=float, default=1e-8)
    p.add_argument("--profile-dx", type=float, default=1e-3, help="reporting grid step")
    p.add_argument(
        "--window", type=float, nargs=2, metavar=("LO", "HI"), help="reporting window"
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hjgame",
        description=(
            "classify, solve, and certify feedback Nash equilibria of a scalar "
            "two-player discounted game with piecewise-linear state costs"
        ),
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="sector and regime classification")
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("solve", help="build the unique cooperative solution")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("family", help="build family members (conflicting or mixed)")
    _add_common(p)
    p.add_argument("--pin", help="explicit datum 'p1,p2'")
    p.add_argument("--count", type=int, default=3, help="number of members")
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("nonexist", help="certify nonexistence by probe sweep")
    _add_common(p)
    p.add_argument("--probes", type=int, default=100)
    p.set_defaults(func=cmd_nonexist)

    p = sub.add_parser("periodic", help="periodic construction from manifold crossing")
    _add_common(p)
    p.add_argument("--periods", type=int, default=2, help="periods on each side")
    p.set_defaults(func=cmd_periodic)

    p = sub.add_parser("verify", help="deviation-gap certification of a solution")
    _add_common(p)
    p.add_argument("--solution", required=True, help="solution CSV artifact")
    p.add_argument("--y", default="0.0", help="comma-separated initial states")
    p.add_argument("--grid-dx", type=float, default=1e-3)
    p.add_argument(
        "--perturb-feedback",
        help="'PLAYER:DELTA' additive feedback perturbation fixture",
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="closed-loop run under the solution feedback")
    _add_common(p)
    p.add_argument("--solution", required=True, help="solution CSV artifact")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--horizon", type=float, default=40.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="plot-ready data and figures from an artifact")
    _add_common(p, needs_config=False)
    p.add_argument("--artifact", required=True, help="solution CSV artifact")
    p.add_argument("--format", default="csv", help="csv or svg-data")
    p.set_defaults(func=cmd_export)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeMismatch as exc:
        print(f"regime mismatch: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConstructionError, HJGameError) as exc:
        print(f"construction failure: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
