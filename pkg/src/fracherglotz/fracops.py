"""One-dimensional fractional operators on uniformly sampled functions.

The Riemann-Liouville integrals use the product-trapezoidal rule: on each
subinterval the integrand is replaced by its linear interpolant and the
weakly singular moments are integrated in closed form, which keeps the
kernel singularity out of the quadrature weights.  Caputo derivatives of
order in (0, 1) use the L1 difference scheme (the same product rule applied
to the derivative of the piecewise-linear interpolant), or the fractional
integral of supplied derivative samples when those are attached.  The
right-sided Riemann-Liouville derivative is evaluated as the (negated)
classical derivative of the right fractional integral, so the weak
singularity stays inside the closed-form moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import Grid, SampledFunction, trapezoid

__all__ = [
    "FractionalOrder",
    "DifferintegralOrder",
    "PoleError",
    "OrderRangeError",
    "UnsupportedOrderError",
    "MissingDerivativeError",
    "gamma",
    "rgamma",
    "digamma",
    "trigamma",
    "binom_frac",
    "left_rl_integral",
    "right_rl_integral",
    "left_caputo_deriv",
    "right_caputo_deriv",
    "right_rl_differintegral",
    "ibp_defect",
]


class PoleError(ValueError):
    """Gamma evaluated at (or within 1e-12 of) a non-positive integer."""


class OrderRangeError(ValueError):
    """Fractional order outside the range an operation supports."""


class UnsupportedOrderError(ValueError):
    """Differintegral order outside the implemented |beta| < 2 band."""


class MissingDerivativeError(ValueError):
    """An operation needed derivative samples that were not attached."""


@dataclass(frozen=True)
class FractionalOrder:
    """Order alpha > 0 with its ceiling index n = floor(alpha) + 1."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise OrderRangeError(f"fractional order must be positive, got {self.alpha}")

    @property
    def n(self) -> int:
        return int(math.floor(self.alpha)) + 1


@dataclass(frozen=True)
class DifferintegralOrder:
    """Signed order: beta > 0 differentiates, beta < 0 integrates, 0 is identity."""

    beta: float

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise UnsupportedOrderError("differintegral order must be finite")


# --------------------------------------------------------------------------
# Special functions.  A fixed-coefficient Lanczos approximation keeps the
# library dependency-free and bit-for-bit deterministic.
# --------------------------------------------------------------------------

_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_POLE_TOL = 1e-12


def _near_pole(x: float) -> bool:
    r = round(x)
    return r <= 0 and abs(x - r) <= _POLE_TOL


def _sinpi(x: float) -> float:
    # sin(pi*x) computed from the distance to the nearest integer, which
    # keeps full precision near the zeros that the reflection formula hits.
    r = round(x)
    s = math.sin(math.pi * (x - r))
    return -s if r % 2 else s


def _cospi(x: float) -> float:
    r = round(x)
    c = math.cos(math.pi * (x - r))
    return -c if r % 2 else c


def _gamma_positive(x: float) -> float:
    z = x - 1.0
    acc = _LANCZOS_COEFFS[0]
    for i, c in enumerate(_LANCZOS_COEFFS[1:], start=1):
        acc += c / (z + i)
    t = z + 7.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def gamma(x: float) -> float:
    """Gamma function for real arguments, reflection handles x < 1/2."""
    x = float(x)
    if _near_pole(x):
        raise PoleError(f"gamma pole at {x}")
    if x < 0.5:
        return math.pi / (_sinpi(x) * _gamma_positive(1.0 - x))
    return _gamma_positive(x)


def rgamma(x: float) -> float:
    """Reciprocal gamma, entire: returns 0 at the poles of gamma."""
    x = float(x)
    if _near_pole(x):
        return 0.0
    return 1.0 / gamma(x)


# Asymptotic psi(x) ~ ln x - 1/(2x) - sum B_{2k}/(2k x^{2k}); shifted up to
# x >= 8 by the recurrence, reflected for x < 1/2.
_DIGAMMA_TAIL = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def digamma(x: float) -> float:
    """Logarithmic derivative of gamma for real non-pole arguments."""
    x = float(x)
    if _near_pole(x):
        raise PoleError(f"digamma pole at {x}")
    if x < 0.5:
        return digamma(1.0 - x) - math.pi * _cospi(x) / _sinpi(x)
    acc = 0.0
    while x < 8.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    tail = 0.0
    for c in reversed(_DIGAMMA_TAIL):
        tail = (tail + c) * inv2
    return acc + math.log(x) - 0.5 / x - tail


_TRIGAMMA_TAIL = (1.0, 0.5, 1.0 / 6.0, 0.0, -1.0 / 30.0, 0.0, 1.0 / 42.0, 0.0, -1.0 / 30.0)


def trigamma(x: float) -> float:
    """Derivative of digamma; needed for second-order differentiation."""
    x = float(x)
    if _near_pole(x):
        raise PoleError(f"trigamma pole at {x}")
    if x < 0.5:
        s = _sinpi(x)
        return math.pi * math.pi / (s * s) - trigamma(1.0 - x)
    acc = 0.0
    while x < 8.0:
        acc += 1.0 / (x * x)
        x += 1.0
    invx = 1.0 / x
    tail = 0.0
    for c in reversed(_TRIGAMMA_TAIL):
        tail = tail * invx + c
    return acc + tail * invx


def binom_frac(alpha: float, k: int) -> float:
    """Generalized binomial coefficient binom(alpha, k).

    Uses the recurrence binom(a, k) = binom(a, k-1) * (a - k + 1) / k, which
    avoids gamma evaluations at negative arguments.
    """
    if k < 0 or k != int(k):
        raise ValueError(f"k must be a non-negative integer, got {k}")
    out = 1.0
    for j in range(1, int(k) + 1):
        out *= (alpha - j + 1) / j
    return out


# --------------------------------------------------------------------------
# Product-trapezoidal weights
# --------------------------------------------------------------------------


def _as_order(alpha) -> FractionalOrder:
    return alpha if isinstance(alpha, FractionalOrder) else FractionalOrder(float(alpha))


def _left_integral_values(values: np.ndarray, h: float, alpha: float) -> np.ndarray:
    """Product-trapezoidal left RL integral of order alpha > 0 on samples."""
    n = values.size
    m = np.arange(n + 1, dtype=float)
    p1 = m ** (alpha + 1.0)
    # interior convolution weights c_m = (m+1)^(a+1) - 2 m^(a+1) + (m-1)^(a+1)
    c = np.zeros(n)
    c[1:] = p1[2 : n + 1] - 2.0 * p1[1:n] + p1[0 : n - 1]
    # j = 0 weight depends on the target node k
    k = np.arange(1, n, dtype=float)
    a0 = np.zeros(n)
    a0[1:] = (k - 1.0) ** (alpha + 1.0) - k**alpha * (k - alpha - 1.0)
    conv = np.convolve(values, c)[:n]
    out = (conv - c * values[0]) + a0 * values[0] + values
    out *= h**alpha * rgamma(alpha + 2.0)
    out[0] = 0.0
    return out


def left_rl_integral(f: SampledFunction, alpha) -> SampledFunction:
    """Left Riemann-Liouville integral of order alpha > 0; zero at t = a."""
    order = _as_order(alpha)
    out = _left_integral_values(f.values, f.grid.h, order.alpha)
    return SampledFunction(f.grid, out)


def right_rl_integral(f: SampledFunction, alpha) -> SampledFunction:
    """Right Riemann-Liouville integral of order alpha > 0; zero at t = b."""
    order = _as_order(alpha)
    rev = _left_integral_values(f.values[::-1], f.grid.h, order.alpha)
    return SampledFunction(f.grid, rev[::-1].copy())


def _l1_caputo_values(values: np.ndarray, h: float, alpha: float) -> np.ndarray:
    """L1 scheme for the left Caputo derivative, alpha in (0, 1)."""
    n = values.size
    g = np.diff(values)
    m = np.arange(n, dtype=float)
    b = np.zeros(n)
    b[1:] = m[1:] ** (1.0 - alpha) - m[:-1] ** (1.0 - alpha)
    out = np.convolve(g, b)[:n]
    out *= h ** (-alpha) * rgamma(2.0 - alpha)
    out[0] = 0.0
    return out


def left_caputo_deriv(f: SampledFunction, alpha) -> SampledFunction:
    """Left Caputo derivative for alpha in (0, 1); zero at t = a.

    With an attached first-derivative row the operator is the left RL
    integral of order 1 - alpha applied to those samples; otherwise the L1
    scheme acts on the values directly.
    """
    order = _as_order(alpha)
    if not 0.0 < order.alpha < 1.0:
        raise OrderRangeError(f"left Caputo derivative needs alpha in (0,1), got {order.alpha}")
    if f.derivs:
        return left_rl_integral(SampledFunction(f.grid, f.derivs[0]), 1.0 - order.alpha)
    return SampledFunction(f.grid, _l1_caputo_values(f.values, f.grid.h, order.alpha))


def right_caputo_deriv(f: SampledFunction, alpha) -> SampledFunction:
    """Right Caputo derivative for alpha in (0, 1); zero at t = b.

    Mirror image of the left operator: reflecting the samples about the
    interval midpoint also flips the sign of the derivative samples, which
    is exactly the (-1)^n factor of the right-sided definition.
    """
    order = _as_order(alpha)
    if not 0.0 < order.alpha < 1.0:
        raise OrderRangeError(f"right Caputo derivative needs alpha in (0,1), got {order.alpha}")
    mirrored = SampledFunction(
        f.grid,
        f.values[::-1].copy(),
        tuple((-row[::-1]).copy() for row in f.derivs[:1]),
    )
    out = left_caputo_deriv(mirrored, order)
    return SampledFunction(f.grid, out.values[::-1].copy())


def _fd1(values: np.ndarray, h: float) -> np.ndarray:
    """Classical first derivative: central inside, one-sided at the ends."""
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def _fd2(values: np.ndarray, h: float) -> np.ndarray:
    """Classical second derivative: central inside, copied at the ends."""
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def right_rl_differintegral(f: SampledFunction, order) -> SampledFunction:
    """Right RL operator of signed order beta, |beta| < 2.

    beta < 0 integrates (order -beta), beta = 0 is the identity,
    beta in (0, 1) is minus the classical derivative of the right integral
    of order 1 - beta, and beta in [1, 2) is the plain second derivative of
    the right integral of order 2 - beta.
    """
    beta = order.beta if isinstance(order, DifferintegralOrder) else float(order)
    if abs(beta) >= 2.0:
        raise UnsupportedOrderError(f"|beta| must be < 2, got {beta}")
    if beta == 0.0:
        return SampledFunction(f.grid, f.values.copy())
    if beta < 0.0:
        return right_rl_integral(f, -beta)
    if beta < 1.0:
        inner = right_rl_integral(f, 1.0 - beta)
        return SampledFunction(f.grid, -_fd1(inner.values, f.grid.h))
    if beta == 1.0:
        return SampledFunction(f.grid, -_fd1(f.values, f.grid.h))
    inner = right_rl_integral(f, 2.0 - beta)
    return SampledFunction(f.grid, _fd2(inner.values, f.grid.h))


def ibp_defect(x: SampledFunction, y: SampledFunction, alpha) -> float:
    """Discretization defect of the fractional integration-by-parts identity.

    Returns |int y * cD_a x - int x * D_b y - [I_b^{1-a} y * x]_a^b| with
    trapezoidal outer quadrature; a self-check that must shrink under grid
    refinement.
    """
    x.check_same_grid(y)
    order = _as_order(alpha)
    if not 0.0 < order.alpha < 1.0:
        raise OrderRangeError(f"ibp defect needs alpha in (0,1), got {order.alpha}")
    h = x.grid.h
    cdx = left_caputo_deriv(x, order).values
    dby = right_rl_differintegral(y, DifferintegralOrder(order.alpha)).values
    iby = right_rl_integral(y, 1.0 - order.alpha).values
    lhs = trapezoid(y.values * cdx, h)
    rhs = trapezoid(x.values * dby, h)
    boundary = iby[-1] * x.values[-1] - iby[0] * x.values[0]
    return abs(lhs - rhs - boundary)
