import json
import math

import numpy as np
import pytest

from hjgame.errors import (
    LengthMismatch,
    NonFiniteEntry,
    NonIncreasingBreakpoints,
    SpecError,
    ZeroSlopePair,
)
from hjgame.model import (
    CostSpec,
    Regime,
    Sector,
    classify_regime,
    classify_sector,
    eval_cost,
    spec_from_json_dict,
    validate_spec,
)


class TestValidateSpec:
    def test_empty_breakpoints_valid(self):
        spec = validate_spec(CostSpec((), ((1.0, 1.0),), (0.0, 0.0)))
        assert spec.n_breakpoints == 0

    def test_single_jump_config_valid(self, conflicting_many_spec):
        assert conflicting_many_spec.slopes == ((-2.0, 1.0), (-1.0, 2.0))

    def test_non_increasing_breakpoints(self):
        with pytest.raises(NonIncreasingBreakpoints):
            validate_spec(CostSpec((1.0, 0.0), ((1.0, 1.0),) * 3))

    def test_zero_slope_pair(self):
        with pytest.raises(ZeroSlopePair):
            validate_spec(CostSpec((0.0,), ((1.0, 1.0), (0.0, 0.0))))

    def test_non_finite_entry(self):
        with pytest.raises(NonFiniteEntry):
            validate_spec(CostSpec((), ((math.inf, 1.0),)))

    def test_slope_count_mismatch(self):
        with pytest.raises(LengthMismatch):
            validate_spec(CostSpec((0.0,), ((1.0, 1.0),)))


class TestEvalCost:
    def test_single_piece(self, single_coop_spec):
        assert eval_cost(single_coop_spec, 1, 2.0) == 2.0

    def test_piecewise_right(self, conflicting_many_spec):
        # slope -1 on x > 0 for player 1
        assert eval_cost(conflicting_many_spec, 1, 1.0) == pytest.approx(-1.0, abs=1e-14)

    def test_piecewise_left(self, conflicting_many_spec):
        # slope -2 on x < 0 for player 1
        assert eval_cost(conflicting_many_spec, 1, -1.0) == pytest.approx(2.0, abs=1e-14)

    def test_continuity_at_breakpoints(self, glued_spec):
        for b in glued_spec.breakpoints:
            for player in (1, 2):
                lo = eval_cost(glued_spec, player, b - 1e-12)
                hi = eval_cost(glued_spec, player, b + 1e-12)
                assert abs(hi - lo) < 1e-10

    def test_vectorized_matches_scalar(self, glued_spec):
        xs = np.linspace(-3.0, 3.0, 41)
        vec = eval_cost(glued_spec, 2, xs)
        assert vec == pytest.approx([eval_cost(glued_spec, 2, float(x)) for x in xs])

    def test_lipschitz_bound(self, glued_spec):
        rng = np.random.default_rng(7)
        xs = rng.uniform(-20, 20, size=2000)
        ys = xs + rng.uniform(-1, 1, size=xs.size)
        for player in (1, 2):
            bound = max(abs(k[player - 1]) for k in glued_spec.slopes)
            num = np.abs(eval_cost(glued_spec, player, xs) - eval_cost(glued_spec, player, ys))
            den = np.abs(xs - ys)
            assert np.all(num <= bound * den + 1e-12)


class TestClassifySector:
    @pytest.mark.parametrize(
        "point,expected",
        [
            ((1.0, 2.0), Sector.S2),
            ((-2.0, 1.0), Sector.S4),
            ((1.0, 1.0), Sector.BOUNDARY),
            ((2.0, 1.0), Sector.S1),
            ((-1.0, 2.0), Sector.S3),
            ((-1.0, -2.0), Sector.S6),
            ((-3.0, -1.0), Sector.S5),
            ((1.0, -2.0), Sector.S7),
            ((2.0, -1.0), Sector.S8),
            ((0.0, 1.0), Sector.BOUNDARY),
            ((0.0, 0.0), Sector.BOUNDARY),
            ((-1.0, 1.0), Sector.BOUNDARY),
        ],
    )
    def test_examples(self, point, expected):
        assert classify_sector(point) is expected

    def test_scale_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            theta = rng.uniform(0, 2 * math.pi)
            base = classify_sector((math.cos(theta), math.sin(theta)))
            rho = 10.0 ** rng.uniform(-6, 6)
            scaled = classify_sector((rho * math.cos(theta), rho * math.sin(theta)))
            assert scaled is base


def _sector_representative(i: int) -> tuple[float, float]:
    theta = (i - 0.5) * math.pi / 4.0
    return (math.cos(theta), math.sin(theta))


def _expected_two_interval_regime(s0: int, s1: int) -> Regime:
    if {s0, s1} <= {1, 2} or {s0, s1} <= {5, 6}:
        return Regime.COOPERATIVE_UNIQUE
    # (7, 8) is the reflection image of (4, 3): the reflection negates the
    # gradients and reverses x, so it swaps the interval order too
    if (s0, s1) in ((4, 3), (7, 8)):
        return Regime.CONFLICTING_MANY
    if (s0, s1) in ((3, 4), (8, 7)):
        return Regime.CONFLICTING_NONE
    if s0 in (5, 6) and s1 in (1, 2):
        return Regime.MIXED_MANY
    return Regime.UNSUPPORTED_COMBINATION


class TestClassifyRegime:
    def test_cooperative_example(self, glued_spec):
        assert classify_regime(glued_spec).regime is Regime.COOPERATIVE_UNIQUE

    def test_conflicting_many_example(self, conflicting_many_spec):
        assert classify_regime(conflicting_many_spec).regime is Regime.CONFLICTING_MANY

    def test_conflicting_none_example(self, conflicting_none_spec):
        assert classify_regime(conflicting_none_spec).regime is Regime.CONFLICTING_NONE

    def test_mixed_example(self, mixed_spec):
        assert classify_regime(mixed_spec).regime is Regime.MIXED_MANY

    def test_all_two_interval_sector_combinations(self):
        for i in range(1, 9):
            for j in range(1, 9):
                spec = validate_spec(
                    CostSpec((0.0,), (_sector_representative(i), _sector_representative(j)))
                )
                report = classify_regime(spec)
                assert report.regime is _expected_two_interval_regime(i, j), (i, j)

    def test_interior_diagonal_counts_as_cooperative(self):
        # the diagonal inside the open first quadrant separates two
        # cooperative sectors; the construction applies there unchanged
        spec = validate_spec(CostSpec((), ((1.0, 1.0),)))
        assert classify_regime(spec).regime is Regime.COOPERATIVE_UNIQUE

    def test_axis_boundary_refused(self):
        spec = validate_spec(CostSpec((), ((0.0, 1.0),)))
        assert classify_regime(spec).regime is Regime.UNSUPPORTED_BOUNDARY

    def test_anti_diagonal_boundary_refused(self):
        spec = validate_spec(CostSpec((0.0,), ((-1.0, 1.0), (-1.0, 2.0))))
        assert classify_regime(spec).regime is Regime.UNSUPPORTED_BOUNDARY

    def test_mixed_with_equal_ratios_unsupported(self):
        spec = validate_spec(CostSpec((0.0,), ((-1.0, -2.0), (1.0, 2.0))))
        assert classify_regime(spec).regime is Regime.UNSUPPORTED_COMBINATION

    def test_multi_breakpoint_conflicting_unsupported(self):
        spec = validate_spec(
            CostSpec((0.0, 1.0), ((-2.0, 1.0), (-1.0, 2.0), (-2.0, 1.0)))
        )
        assert classify_regime(spec).regime is Regime.UNSUPPORTED_COMBINATION

    def test_translation_invariance(self, glued_spec, conflicting_many_spec):
        for spec in (glued_spec, conflicting_many_spec):
            shifted = validate_spec(
                CostSpec(
                    tuple(b + 17.25 for b in spec.breakpoints), spec.slopes, spec.offsets
                )
            )
            assert classify_regime(shifted).regime is classify_regime(spec).regime


class TestJsonConfig:
    def test_round_trip_bit_exact(self, tmp_path):
        doc = {
            "breakpoints": [0.1, 1.0 / 3.0],
            "slopes": [[1.1, 2.7], [2.0, 1e-17], [0.3, 3.0]],
            "offsets": [-0.25, 1.75],
        }
        spec = spec_from_json_dict(doc)
        text = json.dumps(spec.to_json_dict())
        again = spec_from_json_dict(json.loads(text))
        assert again == spec
        assert json.dumps(again.to_json_dict()) == text

    def test_defaults_offsets(self):
        spec = spec_from_json_dict({"breakpoints": [], "slopes": [[1, 1]]})
        assert spec.offsets == (0.0, 0.0)

    def test_malformed_document(self):
        with pytest.raises(SpecError):
            spec_from_json_dict({"breakpoints": []})
        with pytest.raises(SpecError):
            spec_from_json_dict({"breakpoints": [], "slopes": [[1, 2, 3]]})
