import math

import numpy as np
import pytest

from hjgame.model import CostSpec, validate_spec
from hjgame.solutions import AdmissibleSolution, Piece, build_cooperative


@pytest.fixture(scope="session")
def single_coop_spec():
    return validate_spec(CostSpec((), ((1.0, 1.0),), (0.0, 0.0)))


@pytest.fixture(scope="session")
def glued_spec():
    return validate_spec(CostSpec((0.0, 1.0), ((1.0, 2.0), (2.0, 1.0), (1.0, 3.0))))


@pytest.fixture(scope="session")
def conflicting_many_spec():
    return validate_spec(CostSpec((0.0,), ((-2.0, 1.0), (-1.0, 2.0))))


@pytest.fixture(scope="session")
def conflicting_none_spec():
    return validate_spec(CostSpec((0.0,), ((-1.0, 2.0), (-2.0, 1.0))))


@pytest.fixture(scope="session")
def mixed_spec():
    return validate_spec(CostSpec((0.0,), ((-2.0, -1.0), (1.0, 2.0))))


@pytest.fixture(scope="session")
def single_coop_solution(single_coop_spec):
    return build_cooperative(single_coop_spec)


@pytest.fixture(scope="session")
def glued_solution(glued_spec):
    return build_cooperative(glued_spec)


def solution_from_arrays(cost, x, p, left_tail, right_tail, jumps=(), regime=None):
    """Profile-backed solution for synthetic admissibility tests.

    left_tail/right_tail are constant gradient pairs extending the sampled
    core to the respective infinity.  The core is split at every JumpPoint
    so the gradient discontinuity sits at a piece boundary (one-sided limits
    taken from the jump record, not interpolated across)."""
    from hjgame.model import Regime

    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    pieces = []
    if left_tail is not None:
        pieces.append(Piece(-math.inf, float(x[0]), tuple(left_tail), p_const=tuple(left_tail)))

    def sampled_piece(xseg, pseg):
        return Piece(
            float(xseg[0]),
            float(xseg[-1]),
            (math.nan, math.nan),
            s=np.arange(len(xseg), dtype=float),
            p=np.asarray(pseg, dtype=float),
            x=np.asarray(xseg, dtype=float),
            w=None,
        )

    start = 0
    for jp in sorted(jumps, key=lambda j: j.x):
        idx = int(np.searchsorted(x, jp.x))
        xseg = np.concatenate([x[start:idx], [jp.x]])
        pseg = np.vstack([p[start:idx], jp.p_left])
        pieces.append(sampled_piece(xseg, pseg))
        if idx < len(x) and x[idx] == jp.x:
            start = idx
            p = p.copy()
            p[idx] = jp.p_right
        else:
            start = idx
    xseg = x[start:]
    pseg = p[start:]
    if start and x[start] != pieces[-1].x_hi:
        xseg = np.concatenate([[pieces[-1].x_hi], xseg])
        pseg = np.vstack([list(jumps)[-1].p_right, pseg])
    pieces.append(sampled_piece(xseg, pseg))
    if right_tail is not None:
        pieces.append(Piece(float(x[-1]), math.inf, tuple(right_tail), p_const=tuple(right_tail)))
    return AdmissibleSolution(
        cost=cost,
        pieces=pieces,
        jump_points=list(jumps),
        regime=regime or Regime.UNSUPPORTED_COMBINATION,
        window=(float(x[0]), float(x[-1])),
    )
