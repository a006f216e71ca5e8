"""Loss functions that map a task value onto a normalized penalty.

Three basic shapes (Gaussian, wall, polynomial) are combined into the
groove (specific goal), swamp (range of equally valid goals) and swamp
groove (range with a preferred goal) losses.  Every loss has a matching
``*_derivative`` with respect to the task value.

The ``_``-prefixed numba kernels take plain floats so the objective kernel
can call them directly; the public functions validate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba as nb

WALL_FRACTION = 0.95

GROOVE = 0
SWAMP = 1
SWAMP_GROOVE = 2
LOSS_KINDS = {"groove": GROOVE, "swamp": SWAMP, "swamp_groove": SWAMP_GROOVE}


class InvalidRangeError(ValueError):
    """Raised for an empty or inverted goal interval."""


@dataclass(frozen=True)
class LossParams:
    """Shape parameters shared by the parametric losses.

    ``b`` defaults to the wall offset for ``n`` so the wall reaches 95% of
    its height exactly at the interval bounds.  ``width`` is the distance
    (in task units) over which a one-sided barrier rises when the other
    bound is infinite.
    """

    c: float = 0.1
    a1: float = 50.0
    a2: float = 1.0
    m: int = 2
    n: int = 4
    b: float | None = None
    width: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("a1 and a2 must be non-negative")
        for key in ("m", "n"):
            v = getattr(self, key)
            if int(v) != v or v < 2 or int(v) % 2:
                raise ValueError(f"{key} must be an even integer >= 2, got {v}")
            object.__setattr__(self, key, int(v))
        if self.b is None:
            object.__setattr__(self, "b", wall_offset(self.n))
        elif not self.b > 0:
            raise ValueError("b must be positive")
        if not self.width > 0:
            raise ValueError("width must be positive")

    def with_(self, **changes) -> LossParams:
        if "n" in changes and "b" not in changes:
            changes["b"] = None
        return replace(self, **changes)


@dataclass(frozen=True)
class GoalRange:
    """Acceptable interval ``[lower, upper]`` with an optional preferred goal."""

    lower: float
    upper: float
    preferred: float | None = None

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise InvalidRangeError(f"invalid range [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.preferred is not None:
            g = float(self.preferred)
            if not lo <= g <= hi:
                raise ValueError(f"preferred goal {g} lies outside [{lo}, {hi}]")
            object.__setattr__(self, "preferred", g)

    @classmethod
    def exact(cls, goal: float) -> GoalRange:
        return cls(goal, goal, goal)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    @property
    def unbounded(self) -> bool:
        return self.lower == -math.inf and self.upper == math.inf

    @property
    def degenerate(self) -> bool:
        return self.lower == self.upper


# --------------------------------------------------------------------------
# kernels

@nb.njit(cache=True)
def _gaussian(x, g, c):
    d = x - g
    return -math.exp(-d * d / (2.0 * c * c))


@nb.njit(cache=True)
def _gaussian_d(x, g, c):
    d = x - g
    return d / (c * c) * math.exp(-d * d / (2.0 * c * c))


@nb.njit(cache=True)
def _polynomial(x, g, a2, m):
    return a2 * (x - g) ** m


@nb.njit(cache=True)
def _polynomial_d(x, g, a2, m):
    return m * a2 * (x - g) ** (m - 1)


@nb.njit(cache=True)
def _groove(x, g, c, a2, m):
    return _gaussian(x, g, c) + _polynomial(x, g, a2, m)


@nb.njit(cache=True)
def _groove_d(x, g, c, a2, m):
    return _gaussian_d(x, g, c) + _polynomial_d(x, g, a2, m)


@nb.njit(cache=True)
def _scaled(x, lo, hi, width):
    """Scaled task value and its derivative.

    Finite intervals map affinely onto [-1, 1].  With one infinite bound the
    finite side keeps a barrier that starts rising ``width`` inside the
    bound, and the scaled value is held at 0 beyond that (the barrier is
    flat there to first order, so the loss stays C1).
    """
    lo_fin = lo > -math.inf
    hi_fin = hi < math.inf
    if lo_fin and hi_fin:
        s = 2.0 / (hi - lo)
        return (2.0 * x - lo - hi) / (hi - lo), s
    if lo_fin:
        t = (x - lo) / width - 1.0
        if t < 0.0:
            return t, 1.0 / width
        return 0.0, 0.0
    if hi_fin:
        t = (x - hi) / width + 1.0
        if t > 0.0:
            return t, 1.0 / width
        return 0.0, 0.0
    return 0.0, 0.0


@nb.njit(cache=True)
def _barrier(xs, n, b):
    """1 - exp(-x'^n / b^n) and its derivative in x'."""
    bn = b ** n
    u = -(xs ** n) / bn
    return -math.expm1(u), math.exp(u) * n * xs ** (n - 1) / bn


@nb.njit(cache=True)
def _wall(x, lo, hi, a1, n, b, width):
    xs, ds = _scaled(x, lo, hi, width)
    w, _ = _barrier(xs, n, b)
    return a1 * w


@nb.njit(cache=True)
def _wall_d(x, lo, hi, a1, n, b, width):
    xs, ds = _scaled(x, lo, hi, width)
    _, dw = _barrier(xs, n, b)
    return a1 * dw * ds


@nb.njit(cache=True)
def _swamp(x, lo, hi, a1, a2, m, n, b, width):
    xs, ds = _scaled(x, lo, hi, width)
    w, _ = _barrier(xs, n, b)
    return (a1 + a2 * xs ** m) * w - 1.0


@nb.njit(cache=True)
def _swamp_d(x, lo, hi, a1, a2, m, n, b, width):
    xs, ds = _scaled(x, lo, hi, width)
    w, dw = _barrier(xs, n, b)
    return (m * a2 * xs ** (m - 1) * w + (a1 + a2 * xs ** m) * dw) * ds


@nb.njit(cache=True)
def _swamp_groove(x, lo, hi, g, c, a1, a2, m, n, b, width):
    return _groove(x, g, c, a2, m) + _wall(x, lo, hi, a1, n, b, width)


@nb.njit(cache=True)
def _swamp_groove_d(x, lo, hi, g, c, a1, a2, m, n, b, width):
    return _groove_d(x, g, c, a2, m) + _wall_d(x, lo, hi, a1, n, b, width)


# Offset forms: the loss plus one, computed with expm1 so that values near a
# minimum keep full relative precision.  The objective sums these (a
# constant shift of the weighted sum) so line-search comparisons close to
# the optimum are not swamped by rounding of the -1 offsets.

@nb.njit(cache=True)
def _groove1(x, g, c, a2, m):
    d = x - g
    return -math.expm1(-d * d / (2.0 * c * c)) + a2 * d ** m


@nb.njit(cache=True)
def _swamp1(x, lo, hi, a1, a2, m, n, b, width):
    xs, ds = _scaled(x, lo, hi, width)
    w = -math.expm1(-(xs ** n) / b ** n)
    return (a1 + a2 * xs ** m) * w


@nb.njit(cache=True)
def _swamp_groove1(x, lo, hi, g, c, a1, a2, m, n, b, width):
    return _groove1(x, g, c, a2, m) + _wall(x, lo, hi, a1, n, b, width)


# --------------------------------------------------------------------------
# public API

def wall_offset(n: int) -> float:
    """Wall location ``b`` solving ``1 - exp(-1/b^n) = 0.95``."""
    if int(n) != n or n < 2 or int(n) % 2:
        raise ValueError(f"n must be an even integer >= 2, got {n}")
    return (1.0 / math.log(1.0 / (1.0 - WALL_FRACTION))) ** (1.0 / n)


def scale_to_unit(x: float, lower: float, upper: float) -> float:
    """Affine map of ``[lower, upper]`` onto ``[-1, 1]``."""
    _check_finite_range(lower, upper)
    return (2.0 * x - lower - upper) / (upper - lower)


def _check_finite_range(lower, upper):
    if not (math.isfinite(lower) and math.isfinite(upper)) or not lower < upper:
        raise InvalidRangeError(f"need finite lower < upper, got [{lower}, {upper}]")


def gaussian(x: float, g: float, c: float) -> float:
    if not c > 0:
        raise ValueError("c must be positive")
    return _gaussian(float(x), float(g), float(c))


def gaussian_derivative(x: float, g: float, c: float) -> float:
    return _gaussian_d(float(x), float(g), float(c))


def polynomial(x: float, g: float, a2: float, m: int) -> float:
    return _polynomial(float(x), float(g), float(a2), int(m))


def polynomial_derivative(x: float, g: float, a2: float, m: int) -> float:
    return _polynomial_d(float(x), float(g), float(a2), int(m))


def wall(x: float, lower: float, upper: float, a1: float, n: int) -> float:
    _check_finite_range(lower, upper)
    return _wall(float(x), float(lower), float(upper), float(a1), int(n), wall_offset(n), 1.0)


def wall_derivative(x: float, lower: float, upper: float, a1: float, n: int) -> float:
    _check_finite_range(lower, upper)
    return _wall_d(float(x), float(lower), float(upper), float(a1), int(n), wall_offset(n), 1.0)


def groove(x: float, g: float, params: LossParams) -> float:
    return _groove(float(x), float(g), params.c, params.a2, params.m)


def groove_derivative(x: float, g: float, params: LossParams) -> float:
    return _groove_d(float(x), float(g), params.c, params.a2, params.m)


def _check_ranged(rng: GoalRange):
    if not rng.finite:
        raise InvalidRangeError("swamp losses need finite bounds; use a task to handle infinite ones")
    if rng.degenerate:
        raise InvalidRangeError("swamp losses need lower < upper")


def swamp(x: float, rng: GoalRange, params: LossParams) -> float:
    _check_ranged(rng)
    p = params
    return _swamp(float(x), rng.lower, rng.upper, p.a1, p.a2, p.m, p.n, p.b, p.width)


def swamp_derivative(x: float, rng: GoalRange, params: LossParams) -> float:
    _check_ranged(rng)
    p = params
    return _swamp_d(float(x), rng.lower, rng.upper, p.a1, p.a2, p.m, p.n, p.b, p.width)


def _preferred(rng: GoalRange) -> float:
    if rng.preferred is None:
        raise ValueError("swamp_groove needs a preferred goal")
    return rng.preferred


def swamp_groove(x: float, rng: GoalRange, params: LossParams) -> float:
    _check_ranged(rng)
    p = params
    return _swamp_groove(float(x), rng.lower, rng.upper, _preferred(rng),
                         p.c, p.a1, p.a2, p.m, p.n, p.b, p.width)


def swamp_groove_derivative(x: float, rng: GoalRange, params: LossParams) -> float:
    _check_ranged(rng)
    p = params
    return _swamp_groove_d(float(x), rng.lower, rng.upper, _preferred(rng),
                           p.c, p.a1, p.a2, p.m, p.n, p.b, p.width)


def evaluate_loss(kind: str, x: float, rng: GoalRange, params: LossParams) -> float:
    """Loss ``kind`` applied to ``x``, the way a task applies it.

    Unlike the bare kernels this honours the task conventions: a degenerate
    range collapses to a groove at that value, an unbounded range is a
    constant -1 and a single infinite bound gives a one-sided barrier.
    """
    p = params
    if kind == "groove" or rng.degenerate:
        g = rng.lower if rng.degenerate else _preferred(rng)
        return _groove(float(x), g, p.c, p.a2, p.m)
    if kind == "swamp":
        return _swamp(float(x), rng.lower, rng.upper, p.a1, p.a2, p.m, p.n, p.b, p.width)
    if kind == "swamp_groove":
        return _swamp_groove(float(x), rng.lower, rng.upper, _preferred(rng),
                             p.c, p.a1, p.a2, p.m, p.n, p.b, p.width)
    raise ValueError(f"unknown loss kind {kind!r}")
