"""
White-in-time, coloured-in-space Gaussian forcing.

The forcing is a finite family of fixed divergence-free velocity
profiles, each multiplied by an independent Brownian increment. Noise
is drawn from counter-based Philox streams keyed on (root seed, step
chunk), so trajectories are reproducible and different steps can be
sampled independently and in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import SpectralField, WaveGrid, curl_2d, divergence_defect, hermitian_defect, mean_square

__all__ = ["ForcingSpec", "shell_forcing", "forcing_from_config", "injection_rates", "sample_increment"]

NOISE_CHUNK = 256


@dataclass
class ForcingSpec:
    """
    Family of divergence-free forcing profiles with an RNG root seed.

    ``epsilon`` (energy injection rate) is half the sum of the profiles'
    mean-square norms; in 2-d ``eta`` (enstrophy injection) is the same
    with each profile replaced by its curl.
    """

    grid: WaveGrid
    components: list[SpectralField]
    seed: int = 0
    _vel_stack: np.ndarray = field(init=False, repr=False)
    _vort_stack: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self) -> None:
        for f in self.components:
            if f.kind != "velocity" or f.grid != self.grid:
                raise ValueError("forcing profiles must be velocity fields on the common grid")
            if hermitian_defect(f) > 1e-12:
                raise ValueError("forcing profiles must be real (Hermitian) fields")
            if divergence_defect(f) > 1e-12:
                raise ValueError("forcing profiles must be divergence-free")
        shape = (len(self.components), self.grid.dim) + self.grid.shape
        stack = np.zeros(shape, dtype=np.complex128)
        for j, f in enumerate(self.components):
            stack[j] = f.coeffs
        self._vel_stack = stack
        if self.grid.dim == 2:
            vort = np.zeros((len(self.components),) + self.grid.shape, dtype=np.complex128)
            for j, f in enumerate(self.components):
                vort[j] = curl_2d(f).coeffs
            self._vort_stack = vort

    def __len__(self) -> int:
        return len(self.components)

    def mean_zero(self) -> bool:
        origin = (slice(None), slice(None)) + (0,) * self.grid.dim
        return bool(np.all(np.abs(self._vel_stack[origin]) == 0.0))

    def velocity_spectrum(self) -> np.ndarray:
        """Per-mode ``sum_j |f_j(k)|^2`` summed over components."""
        return np.sum(np.abs(self._vel_stack) ** 2, axis=(0, 1))

    def vorticity_spectrum(self) -> np.ndarray:
        """Per-mode ``sum_j |curl f_j(k)|^2`` (2-d only)."""
        if self._vort_stack is None:
            raise ValueError("vorticity spectrum only defined for 2-d forcing")
        return np.sum(np.abs(self._vort_stack) ** 2, axis=0)

    def smoothness_sum(self) -> float:
        """``sum_j`` of the mean-square third gradient (always finite here)."""
        ksq = self.grid.k_sq
        return float(np.sum(ksq[None, None] ** 3 * np.abs(self._vel_stack) ** 2))

    def _noise_block(self, chunk: int) -> np.ndarray:
        key = (int(self.seed) << 64) | (chunk & ((1 << 64) - 1))
        rng = np.random.Generator(np.random.Philox(key=key))
        return rng.standard_normal((NOISE_CHUNK, len(self.components)))

    def noise_row(self, step_index: int) -> np.ndarray:
        """Standard normals xi_j for one step, from the keyed stream."""
        chunk, offset = divmod(int(step_index), NOISE_CHUNK)
        if getattr(self, "_chunk_id", None) != chunk:
            self._chunk_block = self._noise_block(chunk)
            self._chunk_id = chunk
        return self._chunk_block[offset]


def injection_rates(spec: ForcingSpec) -> tuple[float, float | None]:
    """(epsilon, eta) with eta only for 2-d forcing."""
    eps = 0.5 * sum(mean_square(f) for f in spec.components)
    eta = None
    if spec.grid.dim == 2:
        eta = 0.5 * sum(mean_square(curl_2d(f)) for f in spec.components)
    return eps, eta


def sample_increment(spec: ForcingSpec, dt: float, step_index: int, kind: str = "velocity") -> SpectralField:
    """
    One forcing increment ``sum_j f_j xi_j sqrt(dt)``.

    ``kind="vorticity"`` returns the curl-profile increment driven by the
    same normals, so velocity and vorticity increments match mode by
    mode. Bit-identical for fixed (seed, step_index).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    xi = spec.noise_row(step_index)
    if kind == "velocity":
        coeffs = np.tensordot(xi, spec._vel_stack, axes=(0, 0)) * np.sqrt(dt)
        return SpectralField(spec.grid, "velocity", coeffs)
    if kind == "vorticity":
        if spec._vort_stack is None:
            raise ValueError("vorticity increments require 2-d forcing")
        coeffs = np.tensordot(xi, spec._vort_stack, axes=(0, 0)) * np.sqrt(dt)
        return SpectralField(spec.grid, "scalar", coeffs)
    raise ValueError("kind must be 'velocity' or 'vorticity'")


# ---------------------------------------------------------------------------
# constructors


def _half_lattice_shell(grid: WaveGrid, lo: float, hi: float) -> list[tuple[int, ...]]:
    # one representative per +-z pair, ordered deterministically
    out = []
    ranges = [range(-grid.n_axis // 2 + 1, grid.n_axis // 2)] * grid.dim
    for z in np.ndindex(*[len(r) for r in ranges]):
        zv = tuple(ranges[i][z[i]] for i in range(grid.dim))
        mag = np.sqrt(sum(c * c for c in zv))
        if not (lo <= mag <= hi):
            continue
        # canonical half-space: first nonzero component positive
        for c in zv:
            if c != 0:
                if c > 0:
                    out.append(zv)
                break
    return sorted(out)


def shell_forcing(
    grid: WaveGrid,
    shell_lo: float = 3.0,
    shell_hi: float = 5.0,
    amplitude: float | None = None,
    epsilon: float | None = None,
    seed: int = 0,
) -> ForcingSpec:
    """
    Equal-amplitude forcing on the integer-lattice shell ``lo <= |z| <= hi``.

    Each mode pair becomes one profile, divergence-free by construction
    (coefficients along the perpendicular of k), with a random fixed
    phase drawn from ``seed``. Exactly one of ``amplitude`` (coefficient
    magnitude) or ``epsilon`` (target energy injection rate) is used;
    with ``epsilon`` the amplitudes are scaled so the rate is hit
    exactly.
    """
    if grid.dim != 2:
        raise ValueError("shell forcing is generated for 2-d grids")
    pairs = _half_lattice_shell(grid, shell_lo, shell_hi)
    if not pairs:
        raise ValueError("no lattice modes in the requested shell")
    if amplitude is None:
        amplitude = 1.0
    rng = np.random.Generator(np.random.Philox(key=seed))
    phases = np.exp(2j * np.pi * rng.random(len(pairs)))
    comps = []
    for z, phase in zip(pairs, phases):
        f = SpectralField.zeros(grid, "velocity")
        kvec = np.array(z, dtype=np.float64) * grid.spacing
        perp = np.array([-kvec[1], kvec[0]]) / np.linalg.norm(kvec)
        value = amplitude * phase
        f.set_mode(z, value * perp[0], component=0)
        f.set_mode(z, value * perp[1], component=1)
        comps.append(f)
    spec = ForcingSpec(grid, comps, seed=seed)
    if epsilon is not None:
        eps_now, _ = injection_rates(spec)
        scale = np.sqrt(epsilon / eps_now)
        for f in spec.components:
            f.coeffs *= scale
        spec = ForcingSpec(grid, spec.components, seed=seed)
    return spec


def forcing_from_config(grid: WaveGrid, cfg: dict) -> ForcingSpec:
    """
    Build a spec from a config mapping.

    ``{"type": "shell", "shell_lo": .., "shell_hi": .., "amplitude"|
    "epsilon": .., "seed": ..}`` or ``{"type": "modes", "seed": ..,
    "modes": [{"z": [1, 0], "amplitude": [re, im]}, ...]}``.
    """
    kind = cfg.get("type", "shell")
    if kind == "shell":
        return shell_forcing(
            grid,
            shell_lo=cfg.get("shell_lo", 3.0),
            shell_hi=cfg.get("shell_hi", 5.0),
            amplitude=cfg.get("amplitude"),
            epsilon=cfg.get("epsilon"),
            seed=cfg.get("seed", 0),
        )
    if kind == "modes":
        comps = []
        for entry in cfg["modes"]:
            z = tuple(int(c) for c in entry["z"])
            re, im = entry["amplitude"]
            value = complex(re, im)
            f = SpectralField.zeros(grid, "velocity")
            kvec = np.array(z, dtype=np.float64) * grid.spacing
            perp = np.array([-kvec[1], kvec[0]]) / np.linalg.norm(kvec)
            f.set_mode(z, value * perp[0], component=0)
            f.set_mode(z, value * perp[1], component=1)
            comps.append(f)
        return ForcingSpec(grid, comps, seed=cfg.get("seed", 0))
    raise ValueError(f"unknown forcing type {kind!r}")
