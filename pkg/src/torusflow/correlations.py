"""
Structure functions and two-point correlations of separation length.

Two independent evaluation paths:

* shift-based: exact spectral translation of the snapshot fields,
  pointwise products in physical space, box mean (alias-free for the
  2/3-dealiased fields), then sphere-rule and snapshot averaging;
* spectral: lattice sums of the order-0 tangential/longitudinal kernels
  against a per-mode energy density, with analytic derivatives.

The two agree to rounding for trigonometric polynomials whenever the
sphere rule resolves the integrand's harmonic content.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .grid import SpectralField, WaveGrid, biot_savart, radial_profile, shift_phase
from .sphere import SphereRule, kernel_p0, kernel_p0_deriv

__all__ = [
    "StructureCurve",
    "CorrelationCurve",
    "STRUCTURE_KINDS",
    "CORRELATION_KINDS",
    "default_separations",
    "structure_function",
    "structure_function_samples",
    "correlation_spectral",
    "correlation_shift_based",
    "cross_validate",
]

STRUCTURE_KINDS = ("S_vel", "S_vel_par", "S_vor")
CORRELATION_KINDS = ("G_vel", "G_vel_par", "G_vor", "a_vel", "a_vel_par", "a_vor")

# kernel type and weighting used by each correlation kind
_CORR_KERNEL = {
    "G_vel": ("tangential", "velocity"),
    "G_vel_par": ("longitudinal", "velocity"),
    "G_vor": ("tangential", "vorticity"),
    "a_vel": ("tangential", "forcing"),
    "a_vel_par": ("longitudinal", "forcing"),
    "a_vor": ("tangential", "forcing_curl"),
}


@dataclass
class StructureCurve:
    kind: str
    separations: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    node_count: int
    sample_count: int


@dataclass
class CorrelationCurve:
    kind: str
    separations: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray


def default_separations(grid: WaveGrid, count: int = 48) -> np.ndarray:
    """Log-spaced separations from the resolved cutoff to just under half the box."""
    lo = 3.0 * grid.length / grid.n_axis
    hi = 0.45 * grid.length
    return np.geomspace(lo, hi, count)


def _velocity_and_scalar(snapshot: SpectralField) -> tuple[SpectralField, SpectralField | None]:
    if snapshot.kind == "scalar":
        if snapshot.grid.dim != 2:
            raise ValueError("scalar snapshots are 2-d vorticity fields")
        return biot_savart(snapshot), snapshot
    return snapshot, None


def structure_function_samples(
    snapshots: list[SpectralField],
    kinds: tuple[str, ...],
    separations: np.ndarray,
    node_count: int = 64,
    ell_block: int = 16,
) -> dict[str, np.ndarray]:
    """
    Per-snapshot structure-function curves, shape (n_snapshots, n_ell).

    All requested kinds share one pass over (snapshot, node, separation),
    reusing the translated fields. Separations beyond half the box are
    rejected (wrap-around would alias the correlation).
    """
    if not snapshots:
        raise ValueError("need at least one snapshot")
    grid = snapshots[0].grid
    for s in snapshots:
        if s.grid != grid:
            raise ValueError("snapshots must share a grid")
    seps = np.asarray(separations, dtype=np.float64)
    if np.any(seps <= 0) or np.any(seps > grid.length / 2):
        raise ValueError("separations must lie in (0, length/2]")
    for kind in kinds:
        if kind not in STRUCTURE_KINDS:
            raise ValueError(f"unknown structure kind {kind!r}")
    need_vorticity = "S_vor" in kinds
    rule = SphereRule.default(grid.dim, count_2d=node_count)
    if grid.dim == 3 and node_count != 64:
        rule = SphereRule.sphere_product(16, 32)

    out = {kind: np.zeros((len(snapshots), seps.size)) for kind in kinds}
    for s_idx, snap in enumerate(snapshots):
        vel, vort = _velocity_and_scalar(snap)
        if need_vorticity and vort is None:
            raise ValueError("S_vor needs 2-d vorticity snapshots")
        nfields = grid.dim + (1 if need_vorticity else 0)
        base = np.empty((nfields,) + grid.shape, dtype=np.complex128)
        base[: grid.dim] = vel.coeffs
        if need_vorticity:
            base[grid.dim] = vort.coeffs
        axes = tuple(range(-grid.dim, 0))
        phys0 = sfft.ifftn(base, axes=axes).real * grid.n_points

        for node, weight in zip(rule.nodes, rule.weights):
            phase = np.tensordot(node, grid.k_vectors, axes=(0, 0))
            for lo in range(0, seps.size, ell_block):
                ell = seps[lo : lo + ell_block]
                mult = np.exp(1j * ell[:, None, None] * phase[None])
                shifted = sfft.ifftn(base[None] * mult[:, None], axes=axes).real * grid.n_points
                delta = shifted - phys0[None]
                du = delta[:, : grid.dim]
                du_n = np.tensordot(node, du, axes=(0, 1))
                red_axes = tuple(range(-grid.dim, 0))
                if "S_vel" in kinds:
                    dusq = np.sum(du * du, axis=1)
                    out["S_vel"][s_idx, lo : lo + ell.size] += weight * np.mean(dusq * du_n, axis=red_axes)
                if "S_vel_par" in kinds:
                    out["S_vel_par"][s_idx, lo : lo + ell.size] += weight * np.mean(du_n**3, axis=red_axes)
                if "S_vor" in kinds:
                    dw = delta[:, grid.dim]
                    out["S_vor"][s_idx, lo : lo + ell.size] += weight * np.mean(dw * dw * du_n, axis=red_axes)
    return out


def structure_function(
    snapshots: list[SpectralField],
    kind: str,
    separations: np.ndarray,
    node_count: int = 64,
) -> StructureCurve:
    """Snapshot-averaged structure function with per-separation stderr."""
    samples = structure_function_samples(snapshots, (kind,), separations, node_count)[kind]
    values = samples.mean(axis=0)
    if samples.shape[0] > 1:
        stderr = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    else:
        stderr = np.zeros_like(values)
    return StructureCurve(
        kind=kind,
        separations=np.asarray(separations, dtype=np.float64),
        values=values,
        stderr=stderr,
        node_count=node_count,
        sample_count=samples.shape[0],
    )


# ---------------------------------------------------------------------------
# spectral path


def correlation_spectral(
    k_mags: np.ndarray,
    weights: np.ndarray,
    kind: str,
    separations: np.ndarray,
    d: int,
) -> CorrelationCurve:
    """
    Correlation curve from a radial spectral density.

    ``weights`` are total densities per distinct wavenumber magnitude
    (e.g. from :func:`torusflow.grid.radial_profile`); for the forcing
    correlations they must already carry the 1/2 prefactor. Values and
    analytic derivatives are kernel sums; no finite differencing.
    """
    if kind not in _CORR_KERNEL:
        raise ValueError(f"unknown correlation kind {kind!r}")
    kernel_kind = _CORR_KERNEL[kind][0]
    seps = np.asarray(separations, dtype=np.float64)
    k = np.asarray(k_mags, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    x = seps[:, None] * k[None, :]
    vals = kernel_p0(kernel_kind, d, x) @ w
    derivs = (kernel_p0_deriv(kernel_kind, d, x) * k[None, :]) @ w
    return CorrelationCurve(kind=kind, separations=seps, values=vals, derivatives=derivs)


def correlation_of_field(field: SpectralField, kind: str, separations: np.ndarray) -> CorrelationCurve:
    """Spectral-path correlation of a single snapshot's own density."""
    dens = np.abs(field.coeffs) ** 2
    if field.kind == "velocity":
        dens = dens.sum(axis=0)
    k, w = radial_profile(field.grid, dens)
    return correlation_spectral(k, w, kind, separations, field.grid.dim)


def correlation_shift_based(
    field: SpectralField,
    kind: str,
    separations: np.ndarray,
    node_count: int = 64,
) -> np.ndarray:
    """
    Second-order correlation via explicit translation and box means.

    Supports the quadratic kinds G_vel, G_vel_par, G_vor on a single
    snapshot; used to cross-check the spectral path.
    """
    grid = field.grid
    seps = np.asarray(separations, dtype=np.float64)
    vel, vort = _velocity_and_scalar(field)
    if kind == "G_vor":
        if vort is None:
            raise ValueError("G_vor needs a 2-d vorticity snapshot")
        fields = vort.coeffs[None]
    elif kind in ("G_vel", "G_vel_par"):
        fields = vel.coeffs
    else:
        raise ValueError(f"shift-based path supports second-order kinds, not {kind!r}")

    rule = SphereRule.default(grid.dim, count_2d=node_count)
    axes = tuple(range(-grid.dim, 0))
    phys0 = sfft.ifftn(fields, axes=axes).real * grid.n_points
    out = np.zeros(seps.size)
    for node, weight in zip(rule.nodes, rule.weights):
        phase = np.tensordot(node, grid.k_vectors, axes=(0, 0))
        mult = np.exp(1j * seps[:, None, None] * phase[None])
        shifted = sfft.ifftn(fields[None] * mult[:, None], axes=axes).real * grid.n_points
        if kind == "G_vel":
            vals = np.mean(np.sum(shifted * phys0[None], axis=1), axis=axes)
        elif kind == "G_vor":
            vals = np.mean(shifted[:, 0] * phys0[0][None], axis=axes)
        else:  # G_vel_par: (n . u)(n . T u)
            u_n = np.tensordot(node, phys0, axes=(0, 0))
            tu_n = np.tensordot(node, shifted, axes=(0, 1))
            vals = np.mean(u_n[None] * tu_n, axis=axes)
        out += weight * vals
    return out


def cross_validate(field: SpectralField, kind: str, separations: np.ndarray, node_count: int = 64) -> float:
    """
    Max relative discrepancy between the shift and spectral paths.

    Both paths are exact for trigonometric polynomials once the sphere
    rule resolves the integrand, so this should sit at rounding level.
    """
    if kind == "G_vor" and field.kind != "scalar":
        raise ValueError("G_vor cross-validation needs a vorticity snapshot")
    shift_vals = correlation_shift_based(field, kind, separations, node_count)
    vel, vort = _velocity_and_scalar(field)
    source = vort if kind == "G_vor" else vel
    spectral = correlation_of_field(source, kind, separations)
    scale = max(np.abs(spectral.values).max(), 1e-300)
    return float(np.abs(shift_vals - spectral.values).max() / scale)
