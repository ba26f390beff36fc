import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import j0, j1

from torusflow.sphere import (
    SphereRule,
    beta,
    isotropic_tensor_average,
    kernel_p0,
    kernel_p0_deriv,
    longitudinal_kernel,
    longitudinal_kernel_deriv,
    monte_carlo_sphere_average,
    pairing_count,
    sphere_average,
    tangential_kernel,
    tangential_kernel_deriv,
)


def test_beta_values():
    assert beta(2, 1) == Fraction(1, 2)
    assert beta(3, 1) == Fraction(1, 3)
    assert beta(3, 2) == Fraction(1, 15)
    assert beta(2, 0) == Fraction(1)
    assert beta(2, 4) == Fraction(1, 2**4 * math.factorial(4))
    assert beta(3, 4) == Fraction(2**4 * math.factorial(4), math.factorial(9))


def test_beta_overflow_reported():
    with pytest.raises(OverflowError):
        beta(2, 21)
    with pytest.raises(OverflowError):
        pairing_count(21)


def test_pairing_count():
    assert pairing_count(0) == 1
    assert pairing_count(2) == 3
    assert pairing_count(5) == 945
    assert pairing_count(5) == math.factorial(10) // (2**5 * math.factorial(5))


def test_isotropic_average_examples():
    assert isotropic_tensor_average(2, (1, 1)) == Fraction(1, 2)
    assert isotropic_tensor_average(3, (1, 1, 1, 1)) == Fraction(1, 5)
    assert isotropic_tensor_average(2, (1, 2)) == 0
    assert isotropic_tensor_average(3, (1, 1, 2)) == 0  # odd count
    assert isotropic_tensor_average(2, (1, 1, 1, 1)) == Fraction(3, 8)


def test_reduction_formula():
    # beta(d,k) * pairing_count(k) equals the 2k-th moment of one component
    for k in range(0, 7):
        m2 = beta(2, k) * pairing_count(k)
        dfact_odd = math.prod(range(1, 2 * k, 2)) if k else 1
        dfact_even = 2**k * math.factorial(k)
        assert m2 == Fraction(dfact_odd, dfact_even)
        m3 = beta(3, k) * pairing_count(k)
        assert m3 == Fraction(1, 2 * k + 1)


@pytest.mark.parametrize("d", [2, 3])
def test_rule_basic_properties(d):
    rule = SphereRule.default(d)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.abs(np.linalg.norm(rule.nodes, axis=1) - 1.0).max() < 1e-14
    # odd monomials integrate to ~0 by node symmetry
    for comp in range(d):
        odd = sphere_average(rule, lambda n: n[:, comp] ** 3)
        assert abs(odd) < 1e-12


@pytest.mark.parametrize("d", [2, 3])
def test_rule_matches_exact_moments(d):
    rule = SphereRule.default(d)
    for idx in [(1, 1), (1, 1, 2, 2), (2, 2, 2, 2)]:
        if max(idx) > d:
            continue
        exact = float(isotropic_tensor_average(d, idx))
        got = sphere_average(rule, lambda n: np.prod([n[:, i - 1] for i in idx], axis=0))
        assert got == pytest.approx(exact, abs=1e-13)


def test_monte_carlo_oracle():
    mean, err = monte_carlo_sphere_average(3, lambda n: n[:, 0] ** 2, 10**6, seed=123)
    assert abs(mean - 1.0 / 3.0) < 3 * err
    mean1, err1 = monte_carlo_sphere_average(2, lambda n: np.ones(len(n)), 10**4, seed=5)
    assert mean1 == pytest.approx(1.0, abs=1e-14)
    mean4, err4 = monte_carlo_sphere_average(2, lambda n: n[:, 0] ** 4, 10**6, seed=77)
    assert abs(mean4 - 3.0 / 8.0) < 3 * err4


def test_monte_carlo_deterministic():
    a = monte_carlo_sphere_average(3, lambda n: n[:, 1] ** 2, 10**4, seed=9)
    b = monte_carlo_sphere_average(3, lambda n: n[:, 1] ** 2, 10**4, seed=9)
    assert a == b


def test_isotropic_average_vs_monte_carlo():
    rng = np.random.Generator(np.random.Philox(key=2024))
    for _ in range(50):
        d = int(rng.integers(2, 4))
        k = int(rng.integers(1, 5))
        idx = tuple(int(i) for i in rng.integers(1, d + 1, size=2 * k))
        exact = float(isotropic_tensor_average(d, idx))
        mean, err = monte_carlo_sphere_average(
            d, lambda n: np.prod([n[:, i - 1] for i in idx], axis=0), 10**5, seed=int(rng.integers(1 << 30))
        )
        assert abs(mean - exact) <= 4 * max(err, 1e-12)


def test_tangential_closed_forms():
    for x in (0.0, 0.7, 5.0, 18.0, 29.5, 34.0, 49.0):
        assert tangential_kernel(2, 0, x) == pytest.approx(j0(x), abs=1e-12)
        sinc = 1.0 if x == 0 else math.sin(x) / x
        assert tangential_kernel(3, 0, x) == pytest.approx(sinc, abs=1e-12)
    # d=2, p=1 reduces to J0 - J1/x through the Bessel recurrence
    for x in (0.5, 3.0, 12.0, 31.0):
        assert tangential_kernel(2, 1, x) == pytest.approx(j0(x) - j1(x) / x, abs=1e-12)
        expect3 = (x**2 * math.sin(x) + 2 * x * math.cos(x) - 2 * math.sin(x)) / x**3
        assert tangential_kernel(3, 1, x) == pytest.approx(expect3, abs=1e-12)


def test_tangential_at_pi():
    assert abs(tangential_kernel(3, 0, math.pi)) < 1e-12


def test_kernel_value_at_zero():
    for d in (2, 3):
        for p in (0, 1, 2, 3):
            expect = float(beta(d, p)) * math.factorial(2 * p) / (2**p * math.factorial(p))
            assert tangential_kernel(d, p, 0.0) == pytest.approx(expect, rel=1e-14)
    assert tangential_kernel(2, 0, 0.0) == 1.0
    assert longitudinal_kernel(2, 0, 0.0) == pytest.approx(0.5, rel=1e-14)
    assert longitudinal_kernel(3, 1, 0.0) == pytest.approx(1.0 / 15.0, rel=1e-14)


def test_longitudinal_closed_forms():
    for x in (0.4, 2.0, 11.0, 29.0, 33.0, 47.0):
        assert longitudinal_kernel(2, 0, x) == pytest.approx(j1(x) / x, abs=1e-12)
        expect = (math.sin(x) - x * math.cos(x)) / x**3
        assert longitudinal_kernel(3, 0, x) == pytest.approx(expect, abs=1e-12)


def _quad_oracle_tangential(d, p, x):
    if d == 2:
        rule = SphereRule.circle(4096)
    else:
        rule = SphereRule.sphere_product(100, 128)  # >= 1e4 nodes
    return sphere_average(rule, lambda n: n[:, 0] ** (2 * p) * np.cos(x * n[:, 0]))


def _quad_oracle_longitudinal(d, p, x):
    if d == 2:
        rule = SphereRule.circle(4096)
    else:
        rule = SphereRule.sphere_product(100, 128)
    return sphere_average(rule, lambda n: n[:, 1] ** 2 * n[:, 0] ** (2 * p) * np.cos(x * n[:, 0]))


@pytest.mark.parametrize("d,p", [(2, 0), (2, 1), (2, 2), (3, 0), (3, 1), (3, 2)])
def test_kernels_match_quadrature_spot(d, p):
    for x in (0.0, 1.3, 7.0, 22.0, 31.0, 45.0):
        assert tangential_kernel(d, p, x) == pytest.approx(_quad_oracle_tangential(d, p, x), abs=1e-8)
        assert longitudinal_kernel(d, p, x) == pytest.approx(_quad_oracle_longitudinal(d, p, x), abs=1e-8)


def test_kernels_match_monte_carlo():
    x = 10.0
    mean, err = monte_carlo_sphere_average(2, lambda n: n[:, 0] ** 2 * np.cos(x * n[:, 0]), 10**6, seed=31)
    assert abs(tangential_kernel(2, 1, x) - mean) < 3 * err
    # longitudinal with an explicit divergence-free contraction: random unit
    # amplitude perpendicular to k = e1
    x = 5.0
    mean, err = monte_carlo_sphere_average(2, lambda n: n[:, 1] ** 2 * np.cos(x * n[:, 0]), 10**6, seed=32)
    assert abs(longitudinal_kernel(2, 0, x) - mean) < 3 * err


def test_kernel_derivatives():
    for x in (0.3, 2.0, 9.0, 28.0, 35.0):
        assert tangential_kernel_deriv(2, 0, x) == pytest.approx(-j1(x), abs=1e-11)
        h = 1e-6
        for d, p in [(2, 1), (3, 0), (3, 1)]:
            fd = (tangential_kernel(d, p, x + h) - tangential_kernel(d, p, x - h)) / (2 * h)
            assert tangential_kernel_deriv(d, p, x) == pytest.approx(fd, abs=5e-9)
            fdl = (longitudinal_kernel(d, p, x + h) - longitudinal_kernel(d, p, x - h)) / (2 * h)
            assert longitudinal_kernel_deriv(d, p, x) == pytest.approx(fdl, abs=5e-9)


def test_fast_kernels_match_slow_path():
    xs = np.array([1e-8, 1e-3, 0.2, 0.499, 0.5, 2.0, 17.0, 80.0])
    for d in (2, 3):
        fast_t = kernel_p0("tangential", d, xs)
        fast_l = kernel_p0("longitudinal", d, xs)
        for i, x in enumerate(xs):
            assert fast_t[i] == pytest.approx(tangential_kernel(d, 0, float(x)), abs=1e-12)
            assert fast_l[i] == pytest.approx(longitudinal_kernel(d, 0, float(x)), abs=1e-12)
        dt = kernel_p0_deriv("tangential", d, xs)
        dl = kernel_p0_deriv("longitudinal", d, xs)
        for i, x in enumerate(xs[1:], start=1):
            assert dt[i] == pytest.approx(tangential_kernel_deriv(d, 0, float(x)), abs=1e-11)
            assert dl[i] == pytest.approx(longitudinal_kernel_deriv(d, 0, float(x)), abs=1e-11)
