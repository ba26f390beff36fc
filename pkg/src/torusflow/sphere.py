"""
Isotropic averages over the unit sphere S^(d-1) for d = 2, 3.

Exact rational moment coefficients, pairing combinatorics, quadrature
rules under the normalized surface measure (total mass 1), a seeded
Monte Carlo oracle, and the two scalar kernel series

    tangential_kernel(d, p, x)  =  Re avg_S (n.e)^(2p) exp(-i x n.e)
    longitudinal_kernel(d, p, x):  same with an extra (n.w)^2 factor,
        w a unit vector orthogonal to e (the coefficient multiplying
        |u(k)|^2 after contracting a divergence-free two-point tensor)

where e is any unit vector and x >= 0. Both are entire functions of x
given by alternating series; in double precision those series are
catastrophic for large x, so evaluation switches to closed
forms/quadrature beyond ``SERIES_X_MAX`` and the series branch runs in
extended precision (mpmath).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
from scipy.special import roots_legendre

__all__ = [
    "RATIONAL_ORDER_MAX",
    "beta",
    "pairing_count",
    "isotropic_tensor_average",
    "SphereRule",
    "sphere_average",
    "monte_carlo_sphere_average",
    "tangential_kernel",
    "longitudinal_kernel",
    "tangential_kernel_deriv",
    "longitudinal_kernel_deriv",
]

# rational coefficients beyond this order are refused rather than silently
# evaluated (they feed exact acceptance checks)
RATIONAL_ORDER_MAX = 20

SERIES_X_MAX = 30.0
SERIES_TERM_CAP = 200
SERIES_RELATIVE_TOL = 1e-16


class SeriesDivergenceError(ArithmeticError):
    """Raised when the kernel series truncation policy fails to converge."""


def beta(d: int, k: int) -> Fraction:
    """
    Coefficient of one pairing in the isotropic 2k-th moment of n.

    1/(2^k k!) on the circle, 2^k k!/(2k+1)! on the 2-sphere, exact.
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > RATIONAL_ORDER_MAX:
        raise OverflowError(f"rational moment order {k} > {RATIONAL_ORDER_MAX}")
    if d == 2:
        return Fraction(1, 2**k * math.factorial(k))
    return Fraction(2**k * math.factorial(k), math.factorial(2 * k + 1))


def pairing_count(k: int) -> int:
    """Number of perfect pairings of 2k items: (2k)!/(2^k k!)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > RATIONAL_ORDER_MAX:
        raise OverflowError(f"pairing order {k} > {RATIONAL_ORDER_MAX}")
    return math.factorial(2 * k) // (2**k * math.factorial(k))


def _pairings(items: tuple[int, ...]):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for i, second in enumerate(rest):
        for tail in _pairings(rest[:i] + rest[i + 1 :]):
            yield ((first, second),) + tail


def isotropic_tensor_average(d: int, indices) -> Fraction:
    """
    Exact average of ``prod_j n_{i_j}`` over S^(d-1).

    Equals ``beta(d, k)`` times the number of pairings of the index list
    whose pairs all match; odd-length index lists average to 0.
    """
    idx = tuple(int(i) for i in indices)
    if any(i < 1 or i > d for i in idx):
        raise ValueError(f"indices must lie in 1..{d}")
    if len(idx) % 2 == 1:
        return Fraction(0)
    k = len(idx) // 2
    matched = 0
    for pairing in _pairings(tuple(range(len(idx)))):
        if all(idx[a] == idx[b] for a, b in pairing):
            matched += 1
    return beta(d, k) * matched


# ---------------------------------------------------------------------------
# quadrature rules


@dataclass(frozen=True)
class SphereRule:
    """
    Nodes and weights for the normalized surface measure on S^(d-1).

    ``nodes`` has shape (count, d); weights are nonnegative and sum to 1.
    The node sets are symmetric under n -> -n, so all odd moments vanish
    to rounding.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def circle(cls, count: int = 64) -> "SphereRule":
        """Uniform (trapezoid) rule on S^1; exact for harmonics < count."""
        if count % 2 != 0:
            raise ValueError("use an even node count for n -> -n symmetry")
        theta = 2.0 * np.pi * np.arange(count) / count
        nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return cls(2, nodes, np.full(count, 1.0 / count))

    @classmethod
    def sphere_product(cls, n_polar: int = 64, n_azimuth: int = 128) -> "SphereRule":
        """Gauss-Legendre (cos theta) x uniform (phi) product rule on S^2."""
        t, wt = roots_legendre(n_polar)
        phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
        st = np.sqrt(1.0 - t**2)
        nodes = np.empty((n_polar * n_azimuth, 3))
        nodes[:, 0] = np.repeat(t, n_azimuth)
        nodes[:, 1] = (st[:, None] * np.cos(phi)[None, :]).ravel()
        nodes[:, 2] = (st[:, None] * np.sin(phi)[None, :]).ravel()
        weights = np.repeat(wt / 2.0, n_azimuth) / n_azimuth
        return cls(3, nodes, weights)

    @classmethod
    def default(cls, d: int, count_2d: int = 64) -> "SphereRule":
        return cls.circle(count_2d) if d == 2 else cls.sphere_product()


def sphere_average(rule: SphereRule, integrand) -> float:
    """Weighted node sum of ``integrand(nodes)`` (vectorized over nodes)."""
    vals = np.asarray(integrand(rule.nodes), dtype=np.float64)
    return float(np.dot(rule.weights, vals))


def monte_carlo_sphere_average(d: int, integrand, sample_count: int, seed: int) -> tuple[float, float]:
    """
    Unbiased sphere average with standard error, deterministic per seed.

    Uniform sphere points come from normalized Gaussians drawn from a
    counter-based Philox stream.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    out_sum = 0.0
    out_sumsq = 0.0
    remaining = sample_count
    while remaining > 0:
        m = min(remaining, 1 << 18)
        pts = rng.standard_normal((m, d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        vals = np.asarray(integrand(pts), dtype=np.float64)
        out_sum += vals.sum()
        out_sumsq += (vals**2).sum()
        remaining -= m
    mean = out_sum / sample_count
    var = max(out_sumsq / sample_count - mean**2, 0.0)
    return mean, math.sqrt(var / sample_count)


# ---------------------------------------------------------------------------
# kernel series (extended precision) and closed forms / quadrature


def _series_eval(t0: Fraction, ratio, x: float, derivative: bool = False) -> float:
    """
    Evaluate ``sum_m a_m (-1)^m x^(2m)`` (or its x-derivative) with
    ``a_0 = t0`` and ``a_(m+1)/a_m = ratio(m)``, in extended precision.
    """
    with mpmath.workdps(50):
        xsq = mpmath.mpf(x) ** 2
        term = mpmath.mpf(t0.numerator) / t0.denominator
        total = mpmath.mpf(0) if derivative else term
        for m in range(SERIES_TERM_CAP):
            r = ratio(m)
            term = term * (-xsq) * r.numerator / r.denominator
            inc = term * (2 * (m + 1)) / mpmath.mpf(x) if derivative else term
            total += inc
            if abs(term) < SERIES_RELATIVE_TOL * (abs(total) + mpmath.mpf("1e-300")):
                return float(total)
        raise SeriesDivergenceError(f"series did not converge at x = {x}")


def _beta_ratio(d: int, q: int) -> Fraction:
    # beta_d(q+1) / beta_d(q) without factorial blowup
    return Fraction(1, 2 * (q + 1)) if d == 2 else Fraction(1, 2 * q + 3)


def _kernel_t0(d: int, p: int, shift: int) -> Fraction:
    return beta(d, p + shift) * Fraction(math.factorial(2 * p), 2**p * math.factorial(p))


def _kernel_ratio(d: int, p: int, shift: int):
    def ratio(m: int) -> Fraction:
        r = _beta_ratio(d, m + p + shift)
        num = (2 * m + 2 * p + 2) * (2 * m + 2 * p + 1)
        den = 2 * (m + p + 1) * (2 * m + 2) * (2 * m + 1)
        return r * Fraction(num, den)

    return ratio


def _tangential_series(d: int, p: int, x: float, derivative: bool = False) -> float:
    if derivative and x == 0.0:
        return 0.0
    return _series_eval(_kernel_t0(d, p, 0), _kernel_ratio(d, p, 0), x, derivative)


def _longitudinal_series(d: int, p: int, x: float, derivative: bool = False) -> float:
    if derivative and x == 0.0:
        return 0.0
    return _series_eval(_kernel_t0(d, p, 1), _kernel_ratio(d, p, 1), x, derivative)


def _gauss_segment_cos(f_poly, x: float, n_nodes: int = 600) -> float:
    """(1/2) * int_{-1}^{1} f_poly(t) cos(x t) dt by Gauss-Legendre."""
    t, w = roots_legendre(n_nodes)
    return 0.5 * float(np.dot(w, f_poly(t) * np.cos(x * t)))


def _circle_quadrature(weight, x: float, n_nodes: int = 4096) -> float:
    theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    c = np.cos(theta)
    return float(np.mean(weight(theta, c) * np.cos(x * c)))


def tangential_kernel(d: int, p: int, x: float) -> float:
    """
    Re avg over S^(d-1) of ``(n.e)^(2p) exp(-i x (n.e))``.

    Series branch (extended precision) for ``x <= SERIES_X_MAX``; beyond
    that, spectrally accurate quadrature of the defining integral.
    ``tangential_kernel(2, 0, x) = J0(x)``;
    ``tangential_kernel(3, 0, x) = sin(x)/x``.
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    if p < 0 or x < 0:
        raise ValueError("need p >= 0 and x >= 0")
    if x <= SERIES_X_MAX:
        return _tangential_series(d, p, x)
    if d == 2:
        return _circle_quadrature(lambda th, c: c ** (2 * p), x)
    return _gauss_segment_cos(lambda t: t ** (2 * p), x)


def longitudinal_kernel(d: int, p: int, x: float) -> float:
    """
    Divergence-free contraction kernel: for unit w orthogonal to e,
    Re avg of ``(n.w)^2 (n.e)^(2p) exp(-i x (n.e))``.

    ``longitudinal_kernel(2, 0, x) = J1(x)/x``;
    ``longitudinal_kernel(3, 0, x) = (sin x - x cos x)/x^3``.
    """
    if d not in (2, 3):
        raise ValueError("d must be 2 or 3")
    if p < 0 or x < 0:
        raise ValueError("need p >= 0 and x >= 0")
    if x <= SERIES_X_MAX:
        return _longitudinal_series(d, p, x)
    if d == 2:
        return _circle_quadrature(lambda th, c: np.sin(th) ** 2 * c ** (2 * p), x)
    # average of (n.w)^2 over azimuth is (1 - t^2)/2
    return _gauss_segment_cos(lambda t: 0.5 * (1.0 - t**2) * t ** (2 * p), x)


# ---------------------------------------------------------------------------
# fast vectorized p = 0 kernels for the lattice-sum diagnostics.
# Closed forms with series fallbacks below the cancellation threshold.

_SMALL_X = 0.5


def _poly_eval(x: np.ndarray, coeffs) -> np.ndarray:
    xsq = x * x
    out = np.zeros_like(x)
    for c in reversed(coeffs):
        out = out * xsq + c
    return out


def _series_coeffs(t0: Fraction, ratio, n_terms: int = 10) -> list[float]:
    out = [t0]
    for m in range(n_terms - 1):
        out.append(out[-1] * ratio(m) * -1)
    return [float(c) for c in out]


class _FastKernel:
    """Vectorized kernel with small-x series and large-x closed form."""

    def __init__(self, t0, ratio, closed, closed_deriv):
        self.value_coeffs = _series_coeffs(t0, ratio)
        dcoeffs = [c * (2 * (m + 1)) for m, c in enumerate(self.value_coeffs[1:])]
        self.deriv_coeffs = dcoeffs
        self.closed = closed
        self.closed_deriv = closed_deriv

    def __call__(self, x) -> np.ndarray:
        x = np.abs(np.asarray(x, dtype=np.float64))
        small = x < _SMALL_X
        out = np.empty_like(x)
        out[small] = _poly_eval(x[small], self.value_coeffs)
        out[~small] = self.closed(x[~small])
        return out

    def deriv(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        sign = np.sign(x)
        x = np.abs(x)
        small = x < _SMALL_X
        out = np.empty_like(x)
        out[small] = x[small] * _poly_eval(x[small], self.deriv_coeffs)
        out[~small] = self.closed_deriv(x[~small])
        return out * sign


def _make_fast_kernels() -> dict:
    from scipy.special import j0 as _j0, j1 as _j1

    tan2 = _FastKernel(
        _kernel_t0(2, 0, 0),
        _kernel_ratio(2, 0, 0),
        lambda x: _j0(x),
        lambda x: -_j1(x),
    )
    tan3 = _FastKernel(
        _kernel_t0(3, 0, 0),
        _kernel_ratio(3, 0, 0),
        lambda x: np.sin(x) / x,
        lambda x: (x * np.cos(x) - np.sin(x)) / x**2,
    )
    long2 = _FastKernel(
        _kernel_t0(2, 0, 1),
        _kernel_ratio(2, 0, 1),
        lambda x: _j1(x) / x,
        lambda x: _j0(x) / x - 2.0 * _j1(x) / x**2,
    )
    long3 = _FastKernel(
        _kernel_t0(3, 0, 1),
        _kernel_ratio(3, 0, 1),
        lambda x: (np.sin(x) - x * np.cos(x)) / x**3,
        lambda x: (x**2 * np.sin(x) - 3.0 * np.sin(x) + 3.0 * x * np.cos(x)) / x**4,
    )
    return {("tangential", 2): tan2, ("tangential", 3): tan3, ("longitudinal", 2): long2, ("longitudinal", 3): long3}


FAST_KERNELS = _make_fast_kernels()


def kernel_p0(kind: str, d: int, x) -> np.ndarray:
    """Vectorized order-0 kernel (kind 'tangential' or 'longitudinal')."""
    return FAST_KERNELS[(kind, d)](x)


def kernel_p0_deriv(kind: str, d: int, x) -> np.ndarray:
    """Vectorized derivative of the order-0 kernel."""
    return FAST_KERNELS[(kind, d)].deriv(x)


def tangential_kernel_deriv(d: int, p: int, x: float) -> float:
    """d/dx of :func:`tangential_kernel` (term-wise series / quadrature)."""
    if x <= SERIES_X_MAX:
        return _tangential_series(d, p, x, derivative=True)
    if d == 2:
        theta = 2.0 * np.pi * np.arange(4096) / 4096
        c = np.cos(theta)
        return float(np.mean(-c ** (2 * p + 1) * np.sin(x * c)))
    t, w = roots_legendre(600)
    return 0.5 * float(np.dot(w, -(t ** (2 * p + 1)) * np.sin(x * t)))


def longitudinal_kernel_deriv(d: int, p: int, x: float) -> float:
    """d/dx of :func:`longitudinal_kernel`."""
    if x <= SERIES_X_MAX:
        return _longitudinal_series(d, p, x, derivative=True)
    if d == 2:
        theta = 2.0 * np.pi * np.arange(4096) / 4096
        c = np.cos(theta)
        return float(np.mean(-np.sin(theta) ** 2 * c ** (2 * p + 1) * np.sin(x * c)))
    t, w = roots_legendre(600)
    return 0.5 * float(np.dot(w, -0.5 * (1.0 - t**2) * t ** (2 * p + 1) * np.sin(x * t)))
