import numpy as np
import pytest

from torusflow.forcing import ForcingSpec, forcing_from_config, injection_rates, sample_increment, shell_forcing
from torusflow.grid import SpectralField, WaveGrid, curl_2d, divergence_defect, hermitian_defect, mean_square


@pytest.fixture
def grid():
    return WaveGrid(2, 2 * np.pi, 32)


def test_epsilon_definition(grid):
    spec = shell_forcing(grid, 3, 3, amplitude=1.0, seed=0)
    f = spec.components[0]
    f.coeffs *= np.sqrt(2.0 / mean_square(f))
    single = ForcingSpec(grid, [f], seed=0)
    eps, _ = injection_rates(single)
    assert eps == pytest.approx(1.0, rel=1e-13)


def test_empty_spec(grid):
    eps, eta = injection_rates(ForcingSpec(grid, [], seed=0))
    assert eps == 0.0 and eta == 0.0


def test_single_shell_eta_scaling(grid):
    # curl multiplies each mode by |k|: a single-shell spec has eta = k0^2 eps
    spec = shell_forcing(grid, 5, 5, amplitude=0.3, seed=1)
    eps, eta = injection_rates(spec)
    assert eta == pytest.approx(25.0 * eps, rel=1e-12)


def test_shell_forcing_epsilon_target(grid):
    spec = shell_forcing(grid, 3, 5, epsilon=0.125, seed=2)
    eps, eta = injection_rates(spec)
    assert eps == pytest.approx(0.125, rel=1e-13)
    assert spec.mean_zero()
    assert np.isfinite(spec.smoothness_sum())
    for f in spec.components:
        assert hermitian_defect(f) < 1e-13
        assert divergence_defect(f) < 1e-13


def test_spec_rejects_bad_profiles(grid):
    bad = SpectralField.zeros(grid, "velocity")
    bad.coeffs[0][grid.mode_index((1, 0))] = 1.0  # not Hermitian
    with pytest.raises(ValueError):
        ForcingSpec(grid, [bad], seed=0)


def test_increment_determinism(grid):
    spec = shell_forcing(grid, 3, 5, epsilon=1.0, seed=11)
    a = sample_increment(spec, 0.1, 7)
    spec2 = shell_forcing(grid, 3, 5, epsilon=1.0, seed=11)
    b = sample_increment(spec2, 0.1, 7)
    assert np.array_equal(a.coeffs, b.coeffs)  # bit-identical
    c = sample_increment(spec, 0.1, 8)
    assert not np.array_equal(a.coeffs, c.coeffs)


def test_increment_dt_scaling(grid):
    spec = shell_forcing(grid, 3, 5, epsilon=1.0, seed=3)
    idx = grid.mode_index((3, 0))
    draws1 = np.array([sample_increment(spec, 0.1, s).coeffs[1][idx] for s in range(400)])
    draws2 = np.array([sample_increment(spec, 0.4, s).coeffs[1][idx] for s in range(400)])
    v1, v2 = np.var(draws1.real), np.var(draws2.real)
    assert v2 / v1 == pytest.approx(4.0, rel=0.35)  # linear in dt


def test_increment_energy_rate(grid):
    # (1/2) E |increment|^2 / dt -> epsilon
    spec = shell_forcing(grid, 3, 5, epsilon=2.0, seed=4)
    dt = 0.05
    n = 3000
    vals = np.empty(n)
    for s in range(n):
        vals[s] = 0.5 * mean_square(sample_increment(spec, dt, s)) / dt
    mean = vals.mean()
    stderr = vals.std(ddof=1) / np.sqrt(n)
    assert abs(mean - 2.0) < 3 * stderr


def test_increment_mean_zero_per_mode(grid):
    spec = shell_forcing(grid, 3, 4, epsilon=1.0, seed=5)
    idx = grid.mode_index((3, 1))
    n = 4000
    draws = np.array([sample_increment(spec, 1.0, s).coeffs[0][idx] for s in range(n)])
    for part in (draws.real, draws.imag):
        assert abs(part.mean()) < 4 * part.std(ddof=1) / np.sqrt(n)


def test_increment_step_independence(grid):
    spec = shell_forcing(grid, 3, 4, epsilon=1.0, seed=6)
    idx = grid.mode_index((0, 3))
    n = 4000
    draws = np.array([sample_increment(spec, 1.0, s).coeffs[0][idx].real for s in range(n + 1)])
    r = np.corrcoef(draws[:-1], draws[1:])[0, 1]
    assert abs(r) < 4 / np.sqrt(n)


def test_velocity_vorticity_increments_match(grid):
    spec = shell_forcing(grid, 3, 5, epsilon=1.0, seed=7)
    vel = sample_increment(spec, 0.2, 13, kind="velocity")
    vor = sample_increment(spec, 0.2, 13, kind="vorticity")
    assert np.abs(curl_2d(vel).coeffs - vor.coeffs).max() < 1e-14 * np.abs(vor.coeffs).max()


def test_forcing_from_config(grid):
    spec = forcing_from_config(grid, {"type": "shell", "shell_lo": 3, "shell_hi": 4, "epsilon": 0.5, "seed": 9})
    eps, _ = injection_rates(spec)
    assert eps == pytest.approx(0.5, rel=1e-13)
    spec2 = forcing_from_config(grid, {"type": "modes", "seed": 0, "modes": [{"z": [2, 1], "amplitude": [0.5, 0.25]}]})
    assert len(spec2) == 1
    eps2, _ = injection_rates(spec2)
    assert eps2 == pytest.approx(0.5 * 2 * abs(0.5 + 0.25j) ** 2, rel=1e-13)
    with pytest.raises(ValueError):
        forcing_from_config(grid, {"type": "nope"})
