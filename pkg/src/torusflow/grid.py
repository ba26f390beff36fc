"""
Torus geometry, wavenumber lattice and spectral field representation.

Fourier conventions used throughout the package
------------------------------------------------
Forward transform (averaged integral over the periodic box of side
``length``)::

    coeff(k) = (1/length^d) * integral f(x) exp(-i k.x) dx
             = mean over grid samples of f(x) exp(-i k.x)

Inverse transform::

    f(x) = sum_k coeff(k) exp(i k.x)

This is the unique self-consistent pair for the averaged forward
transform; it makes the round trip exact for trigonometric polynomials.
The resulting Parseval identity, used by every norm helper in the
package, is::

    mean_square(f) = (1/length^d) * integral |f|^2 dx = sum_k |coeff(k)|^2

Wavenumbers are ``(2*pi/length) * z`` with integer ``z``; the unmatched
Nyquist row of an even grid is forced to zero everywhere so that every
retained mode has its Hermitian partner and spectral translation is
exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "WaveGrid",
    "SpectralField",
    "ShellSpectrum",
    "transform_to_physical",
    "transform_to_spectral",
    "biot_savart",
    "leray_project",
    "spectral_shift",
    "curl_2d",
    "mean_square",
    "gradient_mean_square",
    "hermitian_symmetrize",
    "hermitian_defect",
    "divergence_defect",
    "random_field",
    "shell_spectrum",
    "save_snapshot",
    "load_snapshot",
]


@dataclass(frozen=True)
class WaveGrid:
    """
    Periodic box ``[0, length)^dim`` sampled on ``n_axis`` points per axis.

    Parameters
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    length : float
        Torus side length (the box is ``[0, length)^dim``).
    n_axis : int
        Points per axis; must be even so the 2/3 dealias rule and the
        Nyquist-zeroing convention are well defined.
    """

    dim: int
    length: float
    n_axis: int

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if self.n_axis <= 0 or self.n_axis % 2 != 0:
            raise ValueError("n_axis must be a positive even integer")

        n = self.n_axis
        # integer mode numbers in FFT layout, e.g. 0,1,...,n/2-1,-n/2,...,-1
        z = np.rint(np.fft.fftfreq(n) * n).astype(np.int64)
        spacing = 2.0 * np.pi / self.length
        axes = [spacing * z.astype(np.float64)] * self.dim
        mesh = np.meshgrid(*([z] * self.dim), indexing="ij")
        zvec = np.stack(mesh).astype(np.int64)
        kvec = spacing * zvec.astype(np.float64)
        ksq = np.sum(kvec * kvec, axis=0)

        nyq = np.zeros(self.shape, dtype=bool)
        for axis_z in mesh:
            nyq |= axis_z == -n // 2

        # 2/3-rule mask: keep |z| <= floor(n/3); cubic x-means of kept
        # modes are then alias-free (3*floor(n/3) < n for even n not
        # divisible by 3, = n otherwise, handled by strict comparison).
        zmax = n // 3 if (3 * (n // 3) < n) else n // 3 - 1
        keep = np.ones(self.shape, dtype=bool)
        for axis_z in mesh:
            keep &= np.abs(axis_z) <= zmax
        keep &= ~nyq

        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "k_axes", axes)
        object.__setattr__(self, "z_vectors", zvec)
        object.__setattr__(self, "k_vectors", kvec)
        object.__setattr__(self, "k_sq", ksq)
        object.__setattr__(self, "nyquist_mask", nyq)
        object.__setattr__(self, "dealias_mask", keep)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_axis,) * self.dim

    @property
    def n_points(self) -> int:
        return self.n_axis**self.dim

    @property
    def dx(self) -> float:
        return self.length / self.n_axis

    def x_axes(self) -> list[np.ndarray]:
        """Physical sample coordinates along each axis."""
        return [self.length * np.arange(self.n_axis) / self.n_axis] * self.dim

    def mode_index(self, z: tuple[int, ...]) -> tuple[int, ...]:
        """Array index of the lattice point with integer mode numbers ``z``."""
        n = self.n_axis
        idx = []
        for zi in z:
            if not -n // 2 < zi < n // 2:
                raise ValueError(f"mode {z} outside the retained lattice")
            idx.append(zi % n)
        return tuple(idx)


@dataclass
class SpectralField:
    """
    Real field on a :class:`WaveGrid`, stored as Fourier coefficients.

    ``kind`` is ``"velocity"`` (``dim`` components, coefficient array of
    shape ``(dim, n, ..., n)``) or ``"scalar"`` (shape ``(n, ..., n)``).
    Coefficients follow the package convention documented in the module
    docstring; real-valuedness corresponds to Hermitian symmetry
    ``coeff(-k) = conj(coeff(k))``.
    """

    grid: WaveGrid
    kind: str
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("velocity", "scalar"):
            raise ValueError("kind must be 'velocity' or 'scalar'")
        expect = (self.grid.dim,) + self.grid.shape if self.kind == "velocity" else self.grid.shape
        if self.coeffs.shape != expect:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != expected {expect}")

    @classmethod
    def zeros(cls, grid: WaveGrid, kind: str) -> "SpectralField":
        shape = (grid.dim,) + grid.shape if kind == "velocity" else grid.shape
        return cls(grid, kind, np.zeros(shape, dtype=np.complex128))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.kind, self.coeffs.copy())

    def set_mode(self, z: tuple[int, ...], value, component: int | None = None) -> None:
        """Set coeff at integer mode ``z`` and its conjugate at ``-z``."""
        idx = self.grid.mode_index(z)
        neg = self.grid.mode_index(tuple(-zi for zi in z))
        if self.kind == "velocity":
            if component is None:
                raise ValueError("velocity fields need a component index")
            self.coeffs[(component,) + idx] = value
            self.coeffs[(component,) + neg] = np.conj(value)
        else:
            self.coeffs[idx] = value
            self.coeffs[neg] = np.conj(value)


# ---------------------------------------------------------------------------
# transforms


def transform_to_physical(field: SpectralField) -> np.ndarray:
    """Physical samples on the ``n_axis^dim`` grid (real array)."""
    axes = tuple(range(-field.grid.dim, 0))
    phys = sfft.ifftn(field.coeffs, axes=axes) * field.grid.n_points
    return np.ascontiguousarray(phys.real)


def transform_to_spectral(samples: np.ndarray, grid: WaveGrid, kind: str = "scalar") -> SpectralField:
    """Forward (averaged) transform of real samples; Nyquist row zeroed."""
    axes = tuple(range(-grid.dim, 0))
    coeffs = sfft.fftn(samples.astype(np.float64), axes=axes) / grid.n_points
    coeffs[..., grid.nyquist_mask] = 0.0
    return SpectralField(grid, kind, coeffs)


# ---------------------------------------------------------------------------
# operators


def biot_savart(omega: SpectralField) -> SpectralField:
    """
    Velocity with ``curl u = omega`` and ``div u = 0`` on a 2-torus.

    Per mode ``u(k) = i (k2, -k1) w(k) / |k|^2``; requires a mean-zero
    scalar vorticity (the ``k = 0`` mode of the inverse Laplacian is not
    invertible).
    """
    grid = omega.grid
    if grid.dim != 2 or omega.kind != "scalar":
        raise ValueError("biot_savart needs a scalar field on a 2-d grid")
    zero = (0,) * grid.dim
    if abs(omega.coeffs[zero]) > 1e-13 * max(1.0, np.abs(omega.coeffs).max()):
        raise ValueError("vorticity must be mean-zero")
    inv_ksq = np.zeros(grid.shape)
    nonzero = grid.k_sq > 0
    inv_ksq[nonzero] = 1.0 / grid.k_sq[nonzero]
    k1, k2 = grid.k_vectors
    u = np.empty((2,) + grid.shape, dtype=np.complex128)
    u[0] = 1j * k2 * omega.coeffs * inv_ksq
    u[1] = -1j * k1 * omega.coeffs * inv_ksq
    return SpectralField(grid, "velocity", u)


def curl_2d(velocity: SpectralField) -> SpectralField:
    """Scalar curl ``d1 u2 - d2 u1`` of a 2-d velocity field."""
    grid = velocity.grid
    if grid.dim != 2 or velocity.kind != "velocity":
        raise ValueError("curl_2d needs a velocity field on a 2-d grid")
    k1, k2 = grid.k_vectors
    w = 1j * (k1 * velocity.coeffs[1] - k2 * velocity.coeffs[0])
    return SpectralField(grid, "scalar", w)


def leray_project(velocity: SpectralField) -> SpectralField:
    """Remove the gradient part: ``u(k) -> u(k) - k (k.u(k)) / |k|^2``."""
    grid = velocity.grid
    if velocity.kind != "velocity":
        raise ValueError("leray_project needs a velocity field")
    inv_ksq = np.zeros(grid.shape)
    nonzero = grid.k_sq > 0
    inv_ksq[nonzero] = 1.0 / grid.k_sq[nonzero]
    kdotu = np.sum(grid.k_vectors * velocity.coeffs, axis=0)
    out = velocity.coeffs - grid.k_vectors * (kdotu * inv_ksq)
    return SpectralField(grid, "velocity", out)


def spectral_shift(field: SpectralField, displacement) -> SpectralField:
    """
    Exact translation ``f(x) -> f(x + y)`` for any real displacement ``y``.

    Multiplies each coefficient by ``exp(i k.y)``; exact for the
    trigonometric polynomials this package represents, norm preserving,
    and periodic in every component of ``y`` with period ``length``.
    """
    y = np.asarray(displacement, dtype=np.float64)
    if y.shape != (field.grid.dim,):
        raise ValueError(f"displacement must have {field.grid.dim} components")
    phase = np.tensordot(y, field.grid.k_vectors, axes=(0, 0))
    return SpectralField(field.grid, field.kind, field.coeffs * np.exp(1j * phase))


def shift_phase(grid: WaveGrid, displacement) -> np.ndarray:
    """The multiplier ``exp(i k.y)`` of :func:`spectral_shift` by itself."""
    y = np.asarray(displacement, dtype=np.float64)
    phase = np.tensordot(y, grid.k_vectors, axes=(0, 0))
    return np.exp(1j * phase)


# ---------------------------------------------------------------------------
# norms and symmetry checks


def mean_square(field: SpectralField) -> float:
    """Box-averaged L2 norm squared, summed over components (Parseval)."""
    return float(np.sum(np.abs(field.coeffs) ** 2))


def gradient_mean_square(field: SpectralField) -> float:
    """Box-averaged ``|grad f|^2``, i.e. ``sum_k |k|^2 |coeff(k)|^2``."""
    return float(np.sum(field.grid.k_sq * np.abs(field.coeffs) ** 2))


def hermitian_symmetrize(field: SpectralField) -> SpectralField:
    """Project onto real-valued fields: average coeff(k) and conj(coeff(-k))."""
    c = field.coeffs
    axes = tuple(range(-field.grid.dim, 0))
    rev = np.conj(_reverse_modes(c, axes))
    out = 0.5 * (c + rev)
    out[..., field.grid.nyquist_mask] = 0.0
    return SpectralField(field.grid, field.kind, out)


def _reverse_modes(c: np.ndarray, axes) -> np.ndarray:
    out = c
    for ax in axes:
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def hermitian_defect(field: SpectralField) -> float:
    """Max |coeff(k) - conj(coeff(-k))| relative to the largest coefficient."""
    c = field.coeffs
    axes = tuple(range(-field.grid.dim, 0))
    rev = np.conj(_reverse_modes(c, axes))
    scale = np.abs(c).max()
    if scale == 0.0:
        return 0.0
    return float(np.abs(c - rev).max() / scale)


def divergence_defect(field: SpectralField) -> float:
    """Max |k.u(k)| relative to max |k||u(k)| (0 for divergence-free)."""
    if field.kind != "velocity":
        raise ValueError("divergence is defined for velocity fields")
    kdotu = np.abs(np.sum(field.grid.k_vectors * field.coeffs, axis=0))
    scale = np.max(np.sqrt(field.grid.k_sq) * np.abs(field.coeffs).max(axis=0))
    if scale == 0.0:
        return 0.0
    return float(kdotu.max() / scale)


# ---------------------------------------------------------------------------
# field construction


def random_field(
    grid: WaveGrid,
    kind: str,
    seed: int,
    slope: float = 0.0,
    band: tuple[float, float] | None = None,
    mean_zero: bool = True,
) -> SpectralField:
    """
    Random real field with isotropic spectrum ``|coeff| ~ |k|^(-slope)``.

    Velocity fields are Leray-projected (divergence-free). ``band``
    restricts support to ``band[0] <= |z| <= band[1]`` in integer lattice
    units. Deterministic for a fixed seed.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    shape = (grid.dim,) + grid.shape if kind == "velocity" else grid.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    zmag = np.sqrt(np.sum(grid.z_vectors.astype(np.float64) ** 2, axis=0))
    envelope = np.zeros(grid.shape)
    inside = grid.dealias_mask & (zmag > 0)
    if band is not None:
        inside &= (zmag >= band[0]) & (zmag <= band[1])
    envelope[inside] = zmag[inside] ** (-slope)
    field = SpectralField(grid, kind, raw * envelope)
    field = hermitian_symmetrize(field)
    if kind == "velocity":
        field = leray_project(field)
    if mean_zero:
        field.coeffs[..., (0,) * grid.dim] = 0.0
    return field


# ---------------------------------------------------------------------------
# shell spectra


@dataclass
class ShellSpectrum:
    """
    Nonnegative per-mode density (e.g. ``E|u(k)|^2``) with a shell view.

    Shells are half-open bins ``[m*spacing, (m+1)*spacing)`` in ``|k|``,
    i.e. bin ``m`` collects integer lattice radii with ``floor(|z|) == m``.
    """

    grid: WaveGrid
    density: np.ndarray

    def __post_init__(self) -> None:
        if self.density.shape != self.grid.shape:
            raise ValueError("density must be a per-lattice-point array")
        if np.any(self.density < -1e-15 * max(1.0, self.density.max(initial=0.0))):
            raise ValueError("spectral density must be nonnegative")

    def shell_sums(self) -> tuple[np.ndarray, np.ndarray]:
        """(shell index array, per-shell sums); sums preserve the total."""
        zmag = np.sqrt(np.sum(self.grid.z_vectors.astype(np.float64) ** 2, axis=0))
        shells = np.floor(zmag).astype(np.int64)
        nmax = shells.max()
        sums = np.bincount(shells.ravel(), weights=self.density.ravel(), minlength=nmax + 1)
        return np.arange(nmax + 1), sums

    def total(self) -> float:
        return float(self.density.sum())


def shell_spectrum(field: SpectralField) -> ShellSpectrum:
    """Energy density ``|coeff(k)|^2`` per lattice point (components summed)."""
    dens = np.abs(field.coeffs) ** 2
    if field.kind == "velocity":
        dens = dens.sum(axis=0)
    return ShellSpectrum(field.grid, dens)


def radial_profile(grid: WaveGrid, density: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Collapse a per-mode density onto exact wavenumber magnitudes.

    Returns ``(k_mags, weights)`` where magnitudes are the distinct
    ``|k|`` present on the lattice (grouping by the integer ``|z|^2`` is
    exact). Used by diagnostics whose kernels depend only on ``|k|``.
    """
    if density.shape != grid.shape:
        raise ValueError("density must be a per-lattice-point array")
    zsq = np.sum(grid.z_vectors.astype(np.int64) ** 2, axis=0).ravel()
    order = np.argsort(zsq, kind="stable")
    zsq_sorted = zsq[order]
    w_sorted = density.ravel()[order]
    uniq, starts = np.unique(zsq_sorted, return_index=True)
    sums = np.add.reduceat(w_sorted, starts)
    return grid.spacing * np.sqrt(uniq.astype(np.float64)), sums


# ---------------------------------------------------------------------------
# snapshot I/O: flat little-endian float64 (re, im) pairs in row-major
# lattice order (component-major for velocity) plus a JSON sidecar.


def save_snapshot(field: SpectralField, path: str | Path, time: float = 0.0, seed: int = 0) -> None:
    path = Path(path)
    flat = field.coeffs.ravel()
    inter = np.empty(2 * flat.size, dtype="<f8")
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    inter.tofile(path)
    sidecar = {
        "d": field.grid.dim,
        "lambda": field.grid.length,
        "n_axis": field.grid.n_axis,
        "kind": field.kind,
        "time": time,
        "seed": seed,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def load_snapshot(path: str | Path) -> tuple[SpectralField, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = WaveGrid(meta["d"], meta["lambda"], meta["n_axis"])
    inter = np.fromfile(path, dtype="<f8")
    flat = inter[0::2] + 1j * inter[1::2]
    shape = (grid.dim,) + grid.shape if meta["kind"] == "velocity" else grid.shape
    return SpectralField(grid, meta["kind"], flat.reshape(shape)), meta
