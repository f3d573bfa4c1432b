"""Integer-exact rounding helpers.

Score and weight math throughout the package rounds half away from zero
(Python's round() is banker's rounding and would disagree at .5). The
ratio form stays in integer arithmetic so results are independent of
summation order.
"""

from __future__ import annotations

import math


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties going away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def round_ratio_half_away(num: int, den: int) -> int:
    """Round num/den half away from zero using only integer arithmetic.

    den must be positive.
    """
    if den <= 0:
        raise ValueError("denominator must be positive")
    sign = -1 if num < 0 else 1
    return sign * ((2 * abs(num) + den) // (2 * den))


def clamp(value: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, value))
