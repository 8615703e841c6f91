"""Rescaled gradient dynamics in the (p1, p2) plane.

Within one cost interval with slope pair K = (k1, k2) the gradients of the
value functions obey a polynomial planar field with equilibria at the origin
(a saddle) and at K.  This module provides the field, the change-of-variables
determinant, the saddle linearization, and the eigendirection-slope maps used
to delimit the family cones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainViolation, ZeroSlopePair

# beyond this ratio magnitude the direct formula for the eigendirection
# slope loses digits to cancellation; switch to the conjugate form
_CONJUGATE_SWITCH = 1e4


def capital_delta(p) -> float:
    """Determinant (p1+p2)^2 - p1*p2 of the gradient coupling matrix.

    Positive away from the origin and pinched between 0.5*|p|^2 and 2*|p|^2.
    """
    p1, p2 = p[0], p[1]
    return (p1 + p2) ** 2 - p1 * p2


def coupling_matrix(p) -> np.ndarray:
    p1, p2 = float(p[0]), float(p[1])
    return np.array([[p1 + p2, p1], [p2, p1 + p2]])


def vector_field(p, K):
    """Right-hand side of the rescaled gradient system for slope pair K.

    Factored so that the second equilibrium p = K cancels exactly in
    floating point."""
    p1, p2 = p[0], p[1]
    k1, k2 = K[0], K[1]
    return (
        k1 * (p1 + p2) - p1 * (k2 + p1),
        k2 * (p1 + p2) - p2 * (k1 + p2),
    )


@dataclass(frozen=True)
class EigenData:
    """Saddle data at the origin for one interval's dynamics."""

    lambda_minus: float
    lambda_plus: float
    v_minus: tuple[float, float]
    v_plus: tuple[float, float]
    alpha: float  # slope ratio k2/k1 (signed infinity when k1 == 0)


def linearization(K) -> tuple[np.ndarray, EigenData]:
    """Linearized matrix at the origin and its eigenstructure.

    Eigenvectors are normalized to first component 1 when k1 != 0; for
    k1 == 0 they come from a direct 2x2 eigen-solve, unit length, sign fixed
    so the second component is >= 0 (first component > 0 on ties).
    """
    k1, k2 = float(K[0]), float(K[1])
    if k1 == 0.0 and k2 == 0.0:
        raise ZeroSlopePair("linearization requires a nonzero slope pair")
    H = np.array([[k1 - k2, k1], [k2, k2 - k1]])
    lam = math.sqrt(k1 * k1 + k2 * k2 - k1 * k2)
    if k1 != 0.0:
        alpha = k2 / k1
        v_minus = (1.0, (k2 - k1 - lam) / k1)
        v_plus = (1.0, (k2 - k1 + lam) / k1)
    else:
        alpha = math.copysign(math.inf, k2)
        vals, vecs = np.linalg.eig(H)
        order = np.argsort(vals)
        vs = []
        for idx in order:
            v = vecs[:, idx]
            if v[1] < 0.0 or (v[1] == 0.0 and v[0] < 0.0):
                v = -v
            vs.append((float(v[0]), float(v[1])))
        v_minus, v_plus = vs
    return H, EigenData(-lam, lam, v_minus, v_plus, alpha)


def eigen_slope(alpha: float, branch: int) -> float:
    """Slope alpha - 1 + branch*sqrt(alpha^2 - alpha + 1), branch in {-1, +1}.

    The two values are the slopes of the saddle eigendirections as a
    function of the slope ratio alpha.  Large |alpha| is evaluated through
    the conjugate quotient to avoid cancellation.
    """
    a = float(alpha)
    root = math.sqrt(a * a - a + 1.0)
    if branch == -1:
        if a > _CONJUGATE_SWITCH:
            return -a / ((a - 1.0) + root)
        return a - 1.0 - root
    if branch == 1:
        if a < -_CONJUGATE_SWITCH:
            return a / (root - (a - 1.0))
        return a - 1.0 + root
    raise ValueError(f"branch must be -1 or +1, got {branch}")


class DirectionMap(Enum):
    """The four eigendirection-slope maps, split by branch and ratio sign.

    LOWER is the -sqrt branch, UPPER the +sqrt branch; POS/NEG restrict the
    ratio argument to alpha > 0 / alpha < 0.  Ranges:
      LOWER_POS -> ]-2, -1/2[      LOWER_NEG -> ]-inf, -2[
      UPPER_POS -> ]0, +inf[       UPPER_NEG -> ]-1/2, 0[
    """

    LOWER_POS = ("lower", 1)
    LOWER_NEG = ("lower", -1)
    UPPER_POS = ("upper", 1)
    UPPER_NEG = ("upper", -1)

    @property
    def branch(self) -> int:
        return -1 if self.value[0] == "lower" else 1

    @property
    def domain_sign(self) -> int:
        return self.value[1]


def direction_map(which: DirectionMap, alpha: float) -> float:
    """Evaluate one of the four eigendirection-slope maps.

    Raises DomainViolation when alpha does not have the map's sign.
    """
    a = float(alpha)
    if which.domain_sign > 0 and not a > 0.0:
        raise DomainViolation(f"{which.name} requires alpha > 0, got {a}")
    if which.domain_sign < 0 and not a < 0.0:
        raise DomainViolation(f"{which.name} requires alpha < 0, got {a}")
    return eigen_slope(a, which.branch)


def stable_slope(K) -> float:
    """Slope of the stable eigendirection at the origin for slope pair K."""
    k1, k2 = float(K[0]), float(K[1])
    if k1 == 0.0:
        _, eig = linearization(K)
        v = eig.v_minus
        return math.inf if v[0] == 0.0 else v[1] / v[0]
    # which root is stable flips with the sign of k1
    return eigen_slope(k2 / k1, -1 if k1 > 0 else 1)


def unstable_slope(K) -> float:
    """Slope of the unstable eigendirection at the origin for slope pair K."""
    k1, k2 = float(K[0]), float(K[1])
    if k1 == 0.0:
        _, eig = linearization(K)
        v = eig.v_plus
        return math.inf if v[0] == 0.0 else v[1] / v[0]
    return eigen_slope(k2 / k1, 1 if k1 > 0 else -1)
