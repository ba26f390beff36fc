"""
Karman-Howarth-Monin budgets and the cascade coefficient families.

The three stationary budget identities evaluated here, for separation
ell and dimension d:

    S_vel(l)     = -4 nu G_vel'(l)     - (4/l^(d-1)) int_0^l r^(d-1) a_vel(r) dr
    S_vel_par(l) = -4 nu G_vel_par'(l) + (2/l^(d+1)) int_0^l r^d S_vel(r) dr
                                       - (4/l^(d+1)) int_0^l r^(d+1) a_vel_par(r) dr
    S_vor(l)     = -4 nu G_vor'(l)     - (4/l) int_0^l r a_vor(r) dr        (d = 2)

Correlation derivatives come from the analytic kernel sums (never finite
differences); the forcing integrals are adaptive Gauss-Legendre on the
exact kernel sums.

Each ``CoefficientFamily`` is the weight c(l, k) that multiplies a
dissipation density in the corresponding flux-law derivation, written as
``c(x) = L - deficit(x)`` with ``x = l |k|``; ``deficit`` is an
alternating entire series with ``deficit(0) = L`` (so c(0) = 0) and
``deficit -> 0`` as x -> infinity (so c -> L). Closed forms in Bessel /
trigonometric functions are attached where they exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import j1, jv, roots_legendre

from .correlations import correlation_spectral
from .sphere import SERIES_RELATIVE_TOL, SERIES_TERM_CAP, beta, kernel_p0

__all__ = [
    "FAMILIES",
    "CoefficientFamily",
    "family_key",
    "coefficient_c",
    "coefficient_limit",
    "decay_envelope_check",
    "KhmBudget",
    "khm_rhs",
    "khm_residual",
    "adaptive_gauss_legendre",
]


# ---------------------------------------------------------------------------
# coefficient families


@dataclass(frozen=True)
class CoefficientFamily:
    """One c(l, k) weight family: limit, series and closed form."""

    name: str
    d: int
    limit: Fraction  # L = lim c(x) as x -> infinity (exact)
    b0: Fraction  # leading deficit coefficient, equals L
    ratio: object  # m -> b_(m+1)/b_m as Fraction
    closed_deficit: object  # vectorized float deficit
    envelope_rate: float  # |deficit| <= C x^(-rate)
    envelope_constant: float | None  # exact C where the source fixes one


def _fam_ratio_dir2d_vor(m: int) -> Fraction:
    return Fraction(1, 4 * (m + 2) * (m + 1))


def _fam_ratio_dir2d_s0(m: int) -> Fraction:
    return Fraction(1, 4 * (m + 3) * (m + 2))


def _fam_ratio_dir2d_spar(m: int) -> Fraction:
    return Fraction(1, 4 * (m + 2) * (m + 4))


def _fam_ratio_dir3d_s0(m: int) -> Fraction:
    return Fraction(1, (2 * m + 2) * (2 * m + 5))


def _fam_ratio_dir3d_spar(m: int) -> Fraction:
    return Fraction(1, (2 * m + 2) * (2 * m + 7))


def _fam_ratio_inv_s0(d: int):
    def ratio(m: int) -> Fraction:
        if d == 2:
            return Fraction(1, 4 * (m + 1) * (m + 2))
        return Fraction(1, 2 * (m + 1) * (2 * m + 5))

    return ratio


def _fam_ratio_inv_spar(d: int):
    def ratio(m: int) -> Fraction:
        if d == 2:
            return Fraction(1, 4 * (m + 1) * (m + 3))
        return Fraction(1, 2 * (m + 1) * (2 * m + 7))

    return ratio


def _closed_dir2d_vor(x):
    return 4.0 * j1(x) / x


def _closed_dir2d_s0(x):
    # -(4/x^2) * int_0^x J2(t)/t dt  ==  4 J1(x)/x^3 - 2/x^2
    return 4.0 * j1(x) / x**3 - 2.0 / x**2


def _closed_dir2d_spar(x):
    # (4/x^2) * int_0^x J3(t)/t^2 dt  ==  1/(2 x^2) - 4 J2(x)/x^4
    return 0.5 / x**2 - 4.0 * jv(2, x) / x**4


def _closed_dir3d_s0(x):
    # (4/x^3) * int_0^x t sin t dt
    return 4.0 * (np.sin(x) - x * np.cos(x)) / x**3


def _closed_dir3d_spar(x):
    # (4/x^5) * int_0^x t int_0^t s sin s ds dt
    return 4.0 * (3.0 * np.sin(x) - 3.0 * x * np.cos(x) - x**2 * np.sin(x)) / x**5


FAMILIES: dict[str, CoefficientFamily] = {}


def _register(name, d, limit, ratio, closed, rate, constant=None) -> None:
    FAMILIES[name] = CoefficientFamily(
        name=name,
        d=d,
        limit=limit,
        b0=limit,
        ratio=ratio,
        closed_deficit=closed,
        envelope_rate=rate,
        envelope_constant=constant,
    )


_register("dir2d_vor", 2, Fraction(2), _fam_ratio_dir2d_vor, _closed_dir2d_vor, 1.5)
_register("dir2d_S0", 2, Fraction(-1, 4), _fam_ratio_dir2d_s0, _closed_dir2d_s0, 0.5)
_register("dir2d_Spar", 2, Fraction(1, 24), _fam_ratio_dir2d_spar, _closed_dir2d_spar, 1.0)
_register("dir3d_S0", 3, Fraction(4, 3), _fam_ratio_dir3d_s0, _closed_dir3d_s0, 1.0, constant=2.0)
_register("dir3d_Spar", 3, Fraction(4, 15), _fam_ratio_dir3d_spar, _closed_dir3d_spar, 1.0)
for _d in (2, 3):
    _register(
        f"inv_S0_{_d}d",
        _d,
        -4 * beta(_d, 1),
        _fam_ratio_inv_s0(_d),
        (lambda x: -_closed_dir2d_vor(x)) if _d == 2 else (lambda x: -_closed_dir3d_s0(x)),
        1.0,
    )
    _register(
        f"inv_Spar_{_d}d",
        _d,
        -(4 * beta(_d, 2)),
        _fam_ratio_inv_spar(_d),
        (lambda x: -4.0 * jv(2, x) / x**2) if _d == 2 else (lambda x: -_closed_dir3d_spar(x)),
        1.0,
    )
# plain aliases for the d-generic inverse families
FAMILIES["inv_S0"] = FAMILIES["inv_S0_2d"]
FAMILIES["inv_Spar"] = FAMILIES["inv_Spar_2d"]


def family_key(family: str, d: int | None = None) -> str:
    """Resolve a d-generic inverse-family name to its registry key."""
    if d is not None and family in ("inv_S0", "inv_Spar"):
        return f"{family}_{d}d"
    return family


def coefficient_limit(family: str, d: int | None = None) -> Fraction:
    return FAMILIES[family_key(family, d)].limit


def _deficit_series(fam: CoefficientFamily, x: float) -> float:
    """Extended-precision alternating series for the deficit."""
    dps = 30 + int(0.5 * x)
    with mpmath.workdps(dps):
        xsq = mpmath.mpf(x) ** 2
        term = mpmath.mpf(fam.b0.numerator) / fam.b0.denominator
        total = term
        for m in range(SERIES_TERM_CAP):
            r = fam.ratio(m)
            term = term * (-xsq) * r.numerator / r.denominator
            total += term
            if abs(term) < SERIES_RELATIVE_TOL * (abs(total) + mpmath.mpf("1e-300")):
                return float(total)
        raise ArithmeticError(f"deficit series for {fam.name} did not converge at x={x}")


def _deficit_series_float(fam: CoefficientFamily, x) -> np.ndarray:
    """Plain float series, adequate for small x only (no cancellation)."""
    x = np.asarray(x, dtype=np.float64)
    xsq = x * x
    term = np.full_like(x, float(fam.b0))
    total = term.copy()
    for m in range(40):
        term = term * (-xsq) * float(fam.ratio(m))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def coefficient_c(family: str, x, method: str = "auto"):
    """
    Evaluate the family weight c at ``x = l |k|`` (scalar or array).

    ``method='series'`` runs the defining series in extended precision
    (the contract path); ``'closed'`` uses the attached closed form;
    ``'auto'`` picks a float series at small x and the closed form
    elsewhere, which is accurate everywhere and vectorizes.
    """
    fam = FAMILIES[family]
    limit = float(fam.limit)
    if method == "series":
        xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.array([limit - _deficit_series(fam, xi) if xi > 0 else 0.0 for xi in xs])
        return float(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out
    xs = np.asarray(x, dtype=np.float64)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    out = np.empty_like(xs)
    small = xs < 1.0
    if method == "closed":
        small = xs == 0.0
    out[small] = limit - _deficit_series_float(fam, xs[small])
    big = ~small
    if big.any():
        out[big] = limit - fam.closed_deficit(xs[big])
    out[xs == 0.0] = 0.0
    return float(out[0]) if scalar else out


def decay_envelope_check(family: str, x_grid) -> dict:
    """
    Verify ``|L - c(x)| <= C x^(-rate)`` on a grid.

    Uses the exact constant where one is fixed (violations reported);
    otherwise fits C on even-index points and checks the odd-index
    holdout. Returns the constant, the max violation, and the observed
    worst-case decay exponent sanity value.
    """
    fam = FAMILIES[family]
    x = np.asarray(x_grid, dtype=np.float64)
    if np.any(x <= 0):
        raise ValueError("envelope grid must be positive")
    deficit = np.abs(np.asarray(coefficient_c(family, x, method="auto")) - float(fam.limit))
    envelope = x ** (-fam.envelope_rate)
    if fam.envelope_constant is not None:
        c_used = fam.envelope_constant
        violation = float(np.max(deficit - c_used * envelope))
        fitted = False
    else:
        # 5% slack: the fit grid can miss an oscillation crest that a
        # holdout point sits on
        fit_idx = np.arange(x.size) % 2 == 0
        c_used = float(np.max(deficit[fit_idx] / envelope[fit_idx]))
        holdout = ~fit_idx
        violation = float(np.max(deficit[holdout] - 1.05 * c_used * envelope[holdout]))
        fitted = True
    return {
        "family": family,
        "rate": fam.envelope_rate,
        "constant": c_used,
        "fitted": fitted,
        "max_violation": violation,
    }


# ---------------------------------------------------------------------------
# quadrature


def adaptive_gauss_legendre(f, a: float, b: float, rel_tol: float = 1e-11, max_depth: int = 14) -> float:
    """
    Adaptive bisection Gauss-Legendre quadrature of a vectorized ``f``.

    Each panel compares 20- and 40-node rules and splits on mismatch.
    """
    t20, w20 = roots_legendre(20)
    t40, w40 = roots_legendre(40)

    def panel(lo: float, hi: float):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        c20 = half * float(np.dot(w20, f(mid + half * t20)))
        c40 = half * float(np.dot(w40, f(mid + half * t40)))
        return c20, c40

    total_scale = max(abs(b - a), 1e-300)

    def recurse(lo: float, hi: float, depth: int) -> float:
        c20, c40 = panel(lo, hi)
        if abs(c40 - c20) <= rel_tol * (abs(c40) + total_scale * 1e-300) + 1e-300:
            return c40
        if depth >= max_depth:
            return c40
        mid = 0.5 * (lo + hi)
        return recurse(lo, mid, depth + 1) + recurse(mid, hi, depth + 1)

    if b <= a:
        return 0.0
    return recurse(a, b, 0)


# ---------------------------------------------------------------------------
# budgets


@dataclass
class KhmBudget:
    """One relation's left side, right-side term breakdown and residual."""

    relation: str
    d: int
    separations: np.ndarray
    terms: dict[str, np.ndarray]
    rhs: np.ndarray
    lhs: np.ndarray | None = None
    residual: np.ndarray | None = None
    relative_residual: np.ndarray | None = None
    lhs_stderr: np.ndarray | None = None
    floor: np.ndarray | None = None

    def recompute_rhs(self) -> np.ndarray:
        out = np.zeros_like(self.rhs)
        for term in self.terms.values():
            out = out + term
        return out


RELATIONS = ("vel", "vel_par", "vor")


def _forcing_integral(k: np.ndarray, w: np.ndarray, kernel: str, d: int, power: int, ell: float) -> float:
    """int_0^ell r^power * sum_k w K(r k) dr by adaptive quadrature."""

    def integrand(r):
        r = np.asarray(r)
        x = r[:, None] * k[None, :]
        return r**power * (kernel_p0(kernel, d, x) @ w)

    return adaptive_gauss_legendre(integrand, 0.0, ell)


def _nested_analytic(k_s, w_s, k_f, w_f, d: int, nu: float, ell: float) -> float:
    """
    (2/l^(d+1)) int_0^l r^d S_vel(r) dr with the analytic S_vel RHS.

    The viscous part integrates by parts through the correlation value
    (int r^d G' = l^d G(l) - d int r^(d-1) G); the forcing double
    integral collapses by swapping the order of integration to
    -2 int_0^l s^(d-1) (l^2 - s^2) a_vel(s) ds.
    """

    def corr(r):
        r = np.atleast_1d(np.asarray(r, dtype=np.float64))
        x = r[:, None] * k_s[None, :]
        return kernel_p0("tangential", d, x) @ w_s

    gamma_ell = float(corr(np.array([ell]))[0])
    int_gamma = adaptive_gauss_legendre(lambda r: np.asarray(r) ** (d - 1) * corr(r), 0.0, ell)
    part_viscous = -4.0 * nu * (ell**d * gamma_ell - d * int_gamma)

    def a_weighted(s):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        x = s[:, None] * k_f[None, :]
        return s ** (d - 1) * (ell**2 - s**2) * (kernel_p0("tangential", d, x) @ w_f)

    part_forcing = -2.0 * adaptive_gauss_legendre(a_weighted, 0.0, ell)
    return (2.0 / ell ** (d + 1)) * (part_viscous + part_forcing)


def khm_rhs(
    relation: str,
    d: int,
    nu: float,
    spectrum: tuple[np.ndarray, np.ndarray],
    forcing_spectrum: tuple[np.ndarray, np.ndarray],
    separations: np.ndarray,
    s_vel_curve: tuple[np.ndarray, np.ndarray] | None = None,
) -> KhmBudget:
    """
    Right-hand side of one KHM relation on a separation grid.

    ``spectrum`` is (k_mags, weights) of the time-averaged velocity
    density ``E|u(k)|^2`` (vorticity density for the 'vor' relation);
    ``forcing_spectrum`` is (k_mags, weights) of ``(1/2) sum_j |f_j|^2``
    (curl profiles for 'vor'). For 'vel_par', the nested S_vel integral
    uses the provided measured curve (monotone-cubic interpolation
    through the origin) or, when none is given, the analytic S_vel
    right-hand side of the same spectra.
    """
    if relation not in RELATIONS:
        raise ValueError(f"unknown relation {relation!r}")
    if relation == "vor" and d != 2:
        raise ValueError("the vorticity relation is 2-d only")
    seps = np.asarray(separations, dtype=np.float64)
    k_s, w_s = (np.asarray(a, dtype=np.float64) for a in spectrum)
    k_f, w_f = (np.asarray(a, dtype=np.float64) for a in forcing_spectrum)

    corr_kind = {"vel": "G_vel", "vel_par": "G_vel_par", "vor": "G_vor"}[relation]
    corr = correlation_spectral(k_s, w_s, corr_kind, seps, d)
    viscous = -4.0 * nu * corr.derivatives

    terms: dict[str, np.ndarray] = {"viscous": viscous}
    if relation in ("vel", "vor"):
        power = d - 1 if relation == "vel" else 1
        forcing = np.array(
            [-(4.0 / ell**power) * _forcing_integral(k_f, w_f, "tangential", d, power, ell) for ell in seps]
        )
        terms["forcing"] = forcing
    else:
        forcing = np.array(
            [-(4.0 / ell ** (d + 1)) * _forcing_integral(k_f, w_f, "longitudinal", d, d + 1, ell) for ell in seps]
        )
        terms["forcing"] = forcing
        if s_vel_curve is None:
            nested = np.array([_nested_analytic(k_s, w_s, k_f, w_f, d, nu, ell) for ell in seps])
        else:
            r_pts, s_pts = s_vel_curve
            r_ext = np.concatenate([[0.0], np.asarray(r_pts, dtype=np.float64)])
            s_ext = np.concatenate([[0.0], np.asarray(s_pts, dtype=np.float64)])
            interp = PchipInterpolator(r_ext, s_ext, extrapolate=True)
            nested = np.array(
                [(2.0 / ell ** (d + 1))
                 * adaptive_gauss_legendre(lambda r: np.asarray(r) ** d * interp(np.asarray(r)), 0.0, ell)
                 for ell in seps]
            )
        terms["nested"] = nested

    rhs = np.zeros_like(seps)
    for t in terms.values():
        rhs = rhs + t
    return KhmBudget(relation=relation, d=d, separations=seps, terms=terms, rhs=rhs)


def residual_floor(relation: str, d: int, seps: np.ndarray, epsilon: float, eta: float) -> np.ndarray:
    """Normalization floor max(eps, eta) * l^power for relative residuals."""
    if d == 2 and relation in ("vel", "vel_par"):
        power = 3
    else:
        power = 1
    return max(epsilon, eta if not math.isnan(eta) else 0.0) * seps**power


def khm_residual(
    relation: str,
    d: int,
    nu: float,
    lhs_curve,
    spectrum,
    forcing_spectrum,
    epsilon: float,
    eta: float,
    s_vel_curve=None,
) -> KhmBudget:
    """
    Assemble LHS (measured structure curve) against the spectral RHS.

    ``lhs_curve`` is a :class:`~torusflow.correlations.StructureCurve`;
    the residual is LHS - RHS and the relative residual normalizes by
    ``max(|LHS|, |RHS|, floor)`` pointwise.
    """
    seps = np.asarray(lhs_curve.separations, dtype=np.float64)
    budget = khm_rhs(relation, d, nu, spectrum, forcing_spectrum, seps, s_vel_curve=s_vel_curve)
    budget.lhs = np.asarray(lhs_curve.values, dtype=np.float64)
    budget.lhs_stderr = np.asarray(lhs_curve.stderr, dtype=np.float64)
    budget.residual = budget.lhs - budget.rhs
    budget.floor = residual_floor(relation, d, seps, epsilon, eta)
    denom = np.maximum(np.maximum(np.abs(budget.lhs), np.abs(budget.rhs)), budget.floor)
    budget.relative_residual = np.abs(budget.residual) / denom
    return budget
