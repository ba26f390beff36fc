import numpy as np
import pytest
from scipy.special import j0

from torusflow.correlations import (
    correlation_of_field,
    correlation_shift_based,
    correlation_spectral,
    cross_validate,
    default_separations,
    structure_function,
    structure_function_samples,
)
from torusflow.grid import (
    SpectralField,
    WaveGrid,
    biot_savart,
    mean_square,
    radial_profile,
    random_field,
    transform_to_physical,
)


@pytest.fixture
def grid():
    return WaveGrid(2, 2 * np.pi, 32)


@pytest.fixture
def vorticity(grid):
    return random_field(grid, "scalar", seed=17, band=(1, 8))


def test_separation_bounds(grid, vorticity):
    with pytest.raises(ValueError):
        structure_function([vorticity], "S_vel", np.array([0.6 * grid.length]))
    with pytest.raises(ValueError):
        structure_function([vorticity], "S_vel", np.array([0.0, 0.1]))


def test_constant_field_structure_is_zero(grid):
    # a uniform velocity has no increments at all
    coeffs = np.zeros((2,) + grid.shape, dtype=np.complex128)
    coeffs[0][(0, 0)] = 0.5
    const = SpectralField(grid, "velocity", coeffs)
    seps = default_separations(grid, 8)
    for kind in ("S_vel", "S_vel_par"):
        curve = structure_function([const], kind, seps)
        assert np.abs(curve.values).max() < 1e-15


def test_structure_parity(grid, vorticity):
    seps = default_separations(grid, 10)
    flipped = SpectralField(grid, "scalar", -vorticity.coeffs)
    for kind in ("S_vel", "S_vel_par", "S_vor"):
        a = structure_function([vorticity], kind, seps).values
        b = structure_function([flipped], kind, seps).values
        assert np.abs(a + b).max() < 1e-12 * max(np.abs(a).max(), 1e-300)


def test_structure_smooth_small_ell_limit(grid, vorticity):
    # increments of the band-limited field vanish as ell -> 0
    tiny = np.array([1e-4, 1e-3, 1e-2])
    curve = structure_function([vorticity], "S_vel", tiny)
    assert np.abs(curve.values[0]) < np.abs(curve.values[-1])
    assert np.abs(curve.values[0]) < 1e-9


def test_structure_integer_shift_oracle():
    # on an 8^2 grid with integer-cell separations the spectral shift
    # equals an index roll, so the whole pipeline can be brute-forced
    g = WaveGrid(2, 2 * np.pi, 8)
    w = random_field(g, "scalar", seed=23, band=(1, 2))
    u = biot_savart(w)
    uph = transform_to_physical(u)
    wph = transform_to_physical(w)
    cells = 2
    ell = cells * g.dx
    from torusflow.sphere import SphereRule

    rule = SphereRule.circle(4)  # +-e1, +-e2 only: rolls stay on-grid
    acc = {"S_vel": 0.0, "S_vel_par": 0.0, "S_vor": 0.0}
    for node, wt in zip(rule.nodes, rule.weights):
        shift_cells = np.rint(node * cells).astype(int)
        ru = np.stack([np.roll(uph[c], tuple(-shift_cells), axis=(0, 1)) for c in range(2)])
        rw = np.roll(wph, tuple(-shift_cells), axis=(0, 1))
        du = ru - uph
        dw = rw - wph
        dun = node[0] * du[0] + node[1] * du[1]
        acc["S_vel"] += wt * np.mean(np.sum(du * du, axis=0) * dun)
        acc["S_vel_par"] += wt * np.mean(dun**3)
        acc["S_vor"] += wt * np.mean(dw * dw * dun)
    samples = structure_function_samples([w], ("S_vel", "S_vel_par", "S_vor"), np.array([ell]), node_count=4)
    cubic_scale = max(mean_square(u), mean_square(w)) ** 1.5
    for kind, expect in acc.items():
        assert samples[kind][0, 0] == pytest.approx(expect, abs=1e-12 * cubic_scale)


def test_structure_stderr_and_counts(grid):
    snaps = [random_field(grid, "scalar", seed=s, band=(1, 8)) for s in range(4)]
    seps = default_separations(grid, 6)
    curve = structure_function(snaps, "S_vel", seps)
    assert curve.sample_count == 4
    assert np.all(curve.stderr >= 0)


def test_correlation_zero_separation_is_energy(grid, vorticity):
    u = biot_savart(vorticity)
    curve = correlation_of_field(u, "G_vel", np.array([1e-9, 0.5]))
    assert curve.values[0] == pytest.approx(mean_square(u), rel=1e-12)


def test_correlation_single_mode_bessel(grid):
    # an isotropic single-|k| velocity field has G_vel(l) = J0(l k) E|u|^2
    w = SpectralField.zeros(grid, "scalar")
    w.set_mode((3, 0), 1.0)
    w.set_mode((0, 3), 0.5 + 0.2j)
    u = biot_savart(w)
    e = mean_square(u)
    seps = np.linspace(1e-6, 2.0, 40)
    curve = correlation_of_field(u, "G_vel", seps)
    assert np.abs(curve.values - j0(3 * seps) * e).max() < 1e-12 * e


def test_correlation_even_in_ell(grid, vorticity):
    # kernels depend on l|k| only, so the curve is even by construction
    u = biot_savart(vorticity)
    seps = np.array([0.3, 0.9])
    k, w = radial_profile(grid, np.sum(np.abs(u.coeffs) ** 2, axis=0))
    a = correlation_spectral(k, w, "G_vel", seps, 2).values
    b = correlation_spectral(k, w, "G_vel", -seps, 2).values
    assert np.array_equal(a, b)


def test_correlation_decay_bound(grid):
    # mean-zero field with support in |z| >= 4: |G(l)| <= sup_{x >= l k0} |J0| * E
    w = random_field(grid, "scalar", seed=29, band=(4, 9))
    u = biot_savart(w)
    e = mean_square(u)
    seps = np.linspace(0.5, 3.0, 16)
    curve = correlation_of_field(u, "G_vel", seps)
    from scipy.special import j0 as bessel0

    xs = np.linspace(0, 200, 20001)
    for ell, val in zip(seps, curve.values):
        bound = np.abs(bessel0(xs[xs >= ell * 4.0])).max() * e
        assert abs(val) <= bound * (1 + 1e-12)


def test_derivative_by_finite_difference(grid, vorticity):
    u = biot_savart(vorticity)
    seps = np.array([0.4, 1.1])
    k, w = radial_profile(grid, np.sum(np.abs(u.coeffs) ** 2, axis=0))
    curve = correlation_spectral(k, w, "G_vel", seps, 2)
    h = 1e-6
    for i, ell in enumerate(seps):
        fd = (
            correlation_spectral(k, w, "G_vel", np.array([ell + h]), 2).values[0]
            - correlation_spectral(k, w, "G_vel", np.array([ell - h]), 2).values[0]
        ) / (2 * h)
        assert curve.derivatives[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("kind", ["G_vel", "G_vel_par", "G_vor"])
def test_cross_validate_paths(grid, vorticity, kind):
    assert cross_validate(vorticity, kind, default_separations(grid, 12)) < 1e-10


def test_cross_validate_white_spectrum(grid):
    flat = random_field(grid, "scalar", seed=31, band=(1, 10), slope=0.0)
    assert cross_validate(flat, "G_vor", default_separations(grid, 8)) < 1e-10


def test_cross_validate_grid_mismatch(grid):
    other = WaveGrid(2, 2 * np.pi, 16)
    w1 = random_field(grid, "scalar", seed=1, band=(1, 4))
    w2 = random_field(other, "scalar", seed=1, band=(1, 4))
    with pytest.raises(ValueError):
        structure_function_samples([w1, w2], ("S_vel",), np.array([0.3]))


def test_forcing_correlation_at_zero(grid):
    # a_vel(0) recovers the energy injection rate
    from torusflow.forcing import injection_rates, shell_forcing

    fs = shell_forcing(grid, 3, 5, epsilon=0.75, seed=3)
    eps, _ = injection_rates(fs)
    k, w = radial_profile(grid, 0.5 * fs.velocity_spectrum())
    curve = correlation_spectral(k, w, "a_vel", np.array([1e-12, 0.2]), 2)
    assert curve.values[0] == pytest.approx(eps, rel=1e-12)
