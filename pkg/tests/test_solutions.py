import math

import numpy as np
import pytest

from hjgame.errors import DatumOutsideFamily, NoIntersection, RegimeMismatch
from hjgame.model import CostSpec, Regime, validate_spec
from hjgame.phase import vector_field
from hjgame.solutions import (
    JumpPoint,
    Tolerances,
    build_conflicting_extra,
    build_conflicting_family,
    build_cooperative,
    build_mixed_family,
    build_periodic,
    certify_nonexistence,
    check_admissibility,
    invariant_box,
    load_solution,
    mixed_cone_bounds,
    reconstruct_values,
    save_solution,
)

from conftest import solution_from_arrays


class TestCooperative:
    def test_single_interval_closed_form(self, single_coop_solution):
        sol = single_coop_solution
        assert sol.admissibility.admissible
        assert sol.admissibility.hj_residual_sup <= 1e-12
        xs = np.linspace(-40.0, 40.0, 1001)
        u = sol.u_at(xs)
        assert np.max(np.abs(u - (xs - 1.5)[:, None])) <= 1e-12
        assert not sol.admissibility.jump_checks

    def test_first_interval_is_exact_equilibrium(self, glued_spec):
        assert vector_field(glued_spec.slopes[0], glued_spec.slopes[0]) == (0.0, 0.0)

    def test_two_interval_connects_to_second_equilibrium(self):
        spec = validate_spec(CostSpec((0.0,), ((1.0, 1.0), (2.0, 2.0))))
        sol = build_cooperative(spec)
        assert sol.admissibility.admissible
        assert sol.p_at(-3.0) == pytest.approx((1.0, 1.0))
        # the sampled orbit ends at the equilibrium radius; the constant tail
        # beyond it is exact
        assert sol.p_at(200.0) == pytest.approx((2.0, 2.0))

    def test_glued_admissible_no_jumps_linear_tails(self, glued_solution):
        rep = glued_solution.admissibility
        assert rep.admissible
        assert rep.hj_residual_sup <= 1e-6
        assert not rep.jump_checks
        assert rep.tails_linear
        assert rep.tail_slopes["left"]["p"] == [1.0, 2.0]
        assert rep.tail_slopes["right"]["p"] == [1.0, 3.0]

    def test_glued_profile_continuous_across_breakpoints(self, glued_solution):
        for b in (0.0, 1.0):
            left = glued_solution.p_at(b - 1e-9)
            right = glued_solution.p_at(b + 1e-9)
            assert left == pytest.approx(right, abs=1e-6)

    def test_pieces_stay_in_invariant_boxes(self, glued_solution, glued_spec):
        entry = np.asarray(glued_spec.slopes[0], dtype=float)
        for j, pc in enumerate(glued_solution.pieces):
            if pc.p is None or pc.interval_index is None:
                continue
            K = glued_spec.slopes[pc.interval_index]
            c1, c2 = invariant_box(K, entry)
            assert np.all(pc.p >= -1e-7)
            assert np.all(pc.p <= 2.0 * c1 + 1e-7)
            assert np.all(pc.p.sum(axis=1) >= c2 / 2.0 - 1e-7)
            entry = pc.p[-1]

    def test_regime_mismatch(self, conflicting_many_spec):
        with pytest.raises(RegimeMismatch):
            build_cooperative(conflicting_many_spec)

    def test_mirrored_orientation(self):
        spec = validate_spec(CostSpec((0.0,), ((-3.0, -1.0), (-1.0, -2.0))))
        sol = build_cooperative(spec)
        assert sol.admissibility.admissible
        # constant on the rightmost interval, gluing leftwards
        assert sol.p_at(40.0) == pytest.approx((-1.0, -2.0))
        assert sol.p_at(-200.0) == pytest.approx((-3.0, -1.0))
        # the reflection negates slopes and reverses the interval order
        mirror = build_cooperative(
            validate_spec(CostSpec((0.0,), ((1.0, 2.0), (3.0, 1.0))))
        )
        xs = np.linspace(-20.0, 20.0, 401)
        assert sol.p_at(xs) == pytest.approx(-mirror.p_at(-xs), abs=1e-7)


class TestConflictingFamily:
    def test_members_admissible_and_datum_interpolated(self, conflicting_many_spec):
        for pin in ((-0.02, 0.02), (-0.05, 0.05)):
            sol = build_conflicting_family(conflicting_many_spec, pin)
            assert sol.admissibility.admissible
            assert sol.p_at(0.0) == pytest.approx(pin, abs=1e-12)
            assert sol.meta["shrink_count"] == 0

    def test_distinctness_equals_datum_gap(self, conflicting_many_spec):
        a = build_conflicting_family(conflicting_many_spec, (-0.02, 0.02))
        b = build_conflicting_family(conflicting_many_spec, (-0.05, 0.05))
        gap = np.abs(a.p_at(0.0) - b.p_at(0.0))
        assert gap == pytest.approx((0.03, 0.03), abs=1e-12)

    def test_tails_are_interval_equilibria(self, conflicting_many_spec):
        sol = build_conflicting_family(conflicting_many_spec, (-0.05, 0.05))
        assert sol.p_at(-200.0) == pytest.approx((-2.0, 1.0))
        assert sol.p_at(200.0) == pytest.approx((-1.0, 2.0))

    def test_wrong_sign_datum_rejected(self, conflicting_many_spec):
        with pytest.raises(DatumOutsideFamily):
            build_conflicting_family(conflicting_many_spec, (0.05, -0.05))

    def test_off_line_datum_rejected(self, conflicting_many_spec):
        with pytest.raises(DatumOutsideFamily):
            build_conflicting_family(conflicting_many_spec, (-0.05, 0.06))

    def test_regime_mismatch(self, glued_spec):
        with pytest.raises(RegimeMismatch):
            build_conflicting_family(glued_spec, (-0.05, 0.05))

    def test_mirror_sector_family(self):
        # the reflected pattern (sectors 7 then 8); data live on the
        # anti-diagonal with p2 < 0 < p1
        spec = validate_spec(CostSpec((0.0,), ((1.0, -2.0), (2.0, -1.0))))
        sol = build_conflicting_family(spec, (0.05, -0.05))
        assert sol.admissibility.admissible
        assert sol.p_at(-100.0) == pytest.approx((1.0, -2.0))

    def test_reflected_nonexistence_pattern(self):
        spec = validate_spec(CostSpec((0.0,), ((2.0, -1.0), (1.0, -2.0))))
        cert = certify_nonexistence(spec, 9)
        assert cert.inconsistent_count == 9


class TestConflictingExtra:
    def test_extra_solution_present_and_admissible(self, conflicting_many_spec):
        sol = build_conflicting_extra(conflicting_many_spec)
        assert sol is not None
        assert sol.admissibility.admissible
        x_minus, x_plus = sol.meta["x_minus"], sol.meta["x_plus"]
        assert x_minus < 0.0 < x_plus
        # crossing datum interpolated at x = 0
        assert sol.p_at(0.0) == pytest.approx(sol.meta["crossing"], abs=1e-9)
        # profile passes through the origin region at the arc junctions
        assert np.hypot(*sol.p_at(x_minus)) < 1e-4
        assert np.hypot(*sol.p_at(x_plus)) < 1e-4

    def test_absent_when_arcs_do_not_cross(self, conflicting_many_spec, monkeypatch):
        import hjgame.solutions as solutions

        monkeypatch.setattr(solutions, "locate_intersection", lambda a, b: None)
        assert build_conflicting_extra(conflicting_many_spec) is None

    def test_regime_mismatch(self, glued_spec):
        with pytest.raises(RegimeMismatch):
            build_conflicting_extra(glued_spec)


class TestNonexistence:
    def test_certificate_all_inconsistent(self, conflicting_none_spec):
        cert = certify_nonexistence(conflicting_none_spec, 25)
        assert cert.n_probes == 25
        assert cert.inconsistent_count == 25
        assert len(cert.probes) == 25
        assert cert.counts["bounded_both"] == 0

    def test_vacuous_certificate(self, conflicting_none_spec):
        cert = certify_nonexistence(conflicting_none_spec, 0)
        assert cert.inconsistent_count == 0
        assert cert.probes == []
        assert "no probes requested" in cert.verdict

    def test_regime_mismatch(self, glued_spec, conflicting_many_spec):
        for spec in (glued_spec, conflicting_many_spec):
            with pytest.raises(RegimeMismatch):
                certify_nonexistence(spec, 4)

    def test_probe_grid_avoids_origin(self, conflicting_none_spec):
        cert = certify_nonexistence(conflicting_none_spec, 16)
        for row in cert.probes:
            assert math.hypot(row["p1"], row["p2"]) > cert.origin_exclusion


class TestMixedFamily:
    def test_cone_bounds_closed_form(self, mixed_spec):
        lo, hi = mixed_cone_bounds(mixed_spec)
        assert lo == pytest.approx(-0.5 - math.sqrt(0.75), abs=1e-12)
        assert hi == pytest.approx(1.0 - math.sqrt(3.0), abs=1e-12)

    def test_member_admissible(self, mixed_spec):
        sol = build_mixed_family(mixed_spec, (-0.1, 0.1))
        assert sol.admissibility.admissible
        assert sol.p_at(0.0) == pytest.approx((-0.1, 0.1), abs=1e-12)
        assert sol.p_at(-200.0) == pytest.approx((-2.0, -1.0))
        assert sol.p_at(200.0) == pytest.approx((1.0, 2.0))

    def test_ratio_outside_cone_rejected(self, mixed_spec):
        with pytest.raises(DatumOutsideFamily):
            build_mixed_family(mixed_spec, (-0.1, 0.05))

    def test_wrong_quadrant_rejected(self, mixed_spec):
        with pytest.raises(DatumOutsideFamily):
            build_mixed_family(mixed_spec, (0.1, 0.1))

    def test_equal_ratio_spec_is_regime_mismatch(self):
        spec = validate_spec(CostSpec((0.0,), ((-1.0, -2.0), (1.0, 2.0))))
        with pytest.raises(RegimeMismatch):
            build_mixed_family(spec, (-0.1, 0.1))


class TestPeriodic:
    def test_no_intersection_pair(self):
        with pytest.raises(NoIntersection):
            build_periodic((-1.0, 2.0), (-2.0, 1.0))

    def test_crossing_pair_builds_periodic_solution(self):
        sol = build_periodic((-1.0, 1.2), (-1.2, 1.0), n_periods=2,
                             tolerances=Tolerances(grid_dx=5e-3))
        rep = sol.admissibility
        assert rep.admissible
        ell = sol.meta["period"]
        assert ell > 0
        lo, _ = sol.window
        xs = np.linspace(lo, lo + 2 * ell, 4001)
        assert np.max(np.abs(sol.p_at(xs + ell) - sol.p_at(xs))) <= 1e-6
        # the induced cost repeats with the same period up to a linear trend
        c = sol.cost
        for i in (1, 2):
            trend = c.h_at(i, lo + ell) - c.h_at(i, lo)
            shifted = c.h_at(i, xs + ell) - c.h_at(i, xs)
            assert np.max(np.abs(shifted - trend)) < 1e-9

    def test_wrong_sector_rejected(self):
        with pytest.raises(RegimeMismatch):
            build_periodic((1.0, 2.0), (-2.0, 1.0))


class TestValuesAndAdmissibility:
    def test_constant_gradient_matches_cost_slope(self, single_coop_solution):
        xs, p, u = reconstruct_values(single_coop_solution)
        du = np.diff(u[:, 0]) / np.diff(xs)
        assert np.max(np.abs(du - 1.0)) < 1e-9

    def test_reflection_jump_preserves_value_continuity(self):
        spec = validate_spec(CostSpec((0.0,), ((1.0, 2.0), (-1.0, -2.0))))
        x = np.linspace(-5.0, 5.0, 2001)
        p = np.where(x[:, None] < 0.0, [1.0, 2.0], [-1.0, -2.0])
        sol = solution_from_arrays(
            spec, x, p, (1.0, 2.0), (-1.0, -2.0),
            jumps=[JumpPoint(0.0, (1.0, 2.0), (-1.0, -2.0))],
        )
        rep = check_admissibility(sol, window=(-5.0, 5.0))
        assert rep.jump_checks and rep.jump_checks[0]["passes"]
        assert rep.seam_sup <= 1e-12
        assert rep.admissible

    def test_upward_jump_fails_sign_condition(self):
        spec = validate_spec(CostSpec((0.0,), ((-1.0, -2.0), (1.0, 2.0))))
        x = np.linspace(-5.0, 5.0, 2001)
        p = np.where(x[:, None] < 0.0, [-1.0, -2.0], [1.0, 2.0])
        sol = solution_from_arrays(
            spec, x, p, (-1.0, -2.0), (1.0, 2.0),
            jumps=[JumpPoint(0.0, (-1.0, -2.0), (1.0, 2.0))],
        )
        rep = check_admissibility(sol, window=(-5.0, 5.0))
        assert not rep.admissible
        assert "jump_sign" in rep.reasons

    def test_one_sided_pass_reflection_fail_distinct_reason(self):
        spec = validate_spec(CostSpec((0.0,), ((-1.0, -2.0), (-0.5, -1.0))))
        x = np.linspace(-5.0, 5.0, 2001)
        p = np.where(x[:, None] < 0.0, [-1.0, -2.0], [-0.5, -1.0])
        sol = solution_from_arrays(
            spec, x, p, (-1.0, -2.0), (-0.5, -1.0),
            jumps=[JumpPoint(0.0, (-1.0, -2.0), (-0.5, -1.0))],
        )
        rep = check_admissibility(sol, window=(-5.0, 5.0))
        assert not rep.admissible
        assert "jump_reflection" in rep.reasons
        assert rep.jump_checks[0]["one_sided_pass"]

    def test_corrupted_profile_fails_residual(self, glued_solution, glued_spec):
        xs = glued_solution.profile_x
        p = glued_solution.profile_p.copy()
        mask = (xs > 2.0) & (xs < 4.0)
        p[mask, 1] += 0.1
        left = glued_solution.pieces[0].p_const
        right = glued_solution.pieces[-1].p_const
        corrupted = solution_from_arrays(glued_spec, xs, p, left, right)
        rep = check_admissibility(corrupted, window=(-10.0, 10.0))
        assert not rep.admissible
        assert "residual" in rep.reasons
        assert rep.hj_residual_sup > 0.01

    def test_uncorrupted_profile_copy_is_admissible(self, glued_solution, glued_spec):
        xs = glued_solution.profile_x
        left = glued_solution.pieces[0].p_const
        right = glued_solution.pieces[-1].p_const
        copy = solution_from_arrays(glued_spec, xs, glued_solution.profile_p, left, right)
        rep = check_admissibility(copy, window=(-10.0, 10.0))
        assert rep.admissible

    def test_residual_shrinks_with_grid_until_floor(self, glued_solution):
        coarse = check_admissibility(
            glued_solution, window=(-5.0, 5.0), tolerances=Tolerances(grid_dx=8e-3)
        )
        fine = check_admissibility(
            glued_solution, window=(-5.0, 5.0), tolerances=Tolerances(grid_dx=4e-3)
        )
        floor = 1e-7
        assert (
            fine.hj_residual_sup <= coarse.hj_residual_sup / 2.0
            or fine.hj_residual_sup <= floor
        )

    def test_growth_constant_finite_with_linear_tails(self, glued_solution):
        rep = glued_solution.admissibility
        assert math.isfinite(rep.growth_constant)
        assert rep.tails_linear


class TestArtifacts:
    def test_save_load_round_trip(self, tmp_path, conflicting_many_spec):
        sol = build_conflicting_family(conflicting_many_spec, (-0.05, 0.05))
        csv = tmp_path / "solution.csv"
        side = tmp_path / "admissibility.json"
        save_solution(sol, csv, side)
        loaded = load_solution(csv, side)
        assert loaded.regime is Regime.CONFLICTING_MANY
        xs = np.linspace(-30.0, 30.0, 301)
        assert loaded.p_at(xs) == pytest.approx(sol.p_at(xs), abs=1e-9)
        assert loaded.p_at(500.0) == pytest.approx((-1.0, 2.0))
        assert loaded.u_at(3.0) == pytest.approx(sol.u_at(3.0), abs=1e-9)

    def test_loaded_profile_passes_admissibility(self, tmp_path, glued_solution):
        csv = tmp_path / "solution.csv"
        side = tmp_path / "admissibility.json"
        save_solution(glued_solution, csv, side)
        loaded = load_solution(csv, side)
        rep = check_admissibility(loaded, window=(-10.0, 10.0))
        assert rep.admissible
