import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paista.core import (
    NoiseModel, PulseBank, TemporalGrid, add_noise, make_rng, mse, project_qpsk,
    random_qpsk, random_sparse, sample_at, ser, synthesize,
)

GRID = TemporalGrid()


def test_default_grid_matches_experiment_window():
    assert GRID.n_t == 256 and GRID.dt == 0.3
    assert GRID.t[0] == pytest.approx(-38.4)
    assert GRID.t[-1] == pytest.approx(38.4 - 0.3)
    assert GRID.width == pytest.approx(76.8)


def test_omega_centered_and_matches_fft_bins():
    w = GRID.omega
    assert w[GRID.n_t // 2] == 0
    # symmetric up to the single Nyquist bin at index 0
    np.testing.assert_allclose(w[1:], -w[1:][::-1], atol=1e-12)
    np.testing.assert_allclose(np.sort(GRID.omega_fft), w, atol=1e-12)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        TemporalGrid(n_t=100)


def test_single_pulse_values():
    grid = TemporalGrid(n_t=64, dt=0.5, t_min=-16.0)
    bank = PulseBank([0.0], t0=1.0)
    w = synthesize([1.0], bank, grid)
    i0 = grid.index_of(0.0)[0]
    i1 = grid.index_of(1.0)[0]
    assert w.values[i0] == pytest.approx(1.0)
    assert w.values[i1] == pytest.approx(0.60653066, abs=1e-8)


def test_zero_coeffs_give_zero_waveform():
    bank = PulseBank.evenly_spaced(30, GRID)
    assert np.all(synthesize(np.zeros(30), bank, GRID).values == 0)


def test_synthesis_dimension_mismatch():
    bank = PulseBank.evenly_spaced(30, GRID)
    with pytest.raises(ValueError):
        synthesize(np.zeros(29), bank, GRID)


def test_position_outside_margin_rejected():
    with pytest.raises(ValueError):
        synthesize([1.0], PulseBank([-37.0]), GRID)


def test_default_bank_layout():
    bank = PulseBank.evenly_spaced(30, GRID)
    assert bank.n == 30
    assert bank.positions[0] - GRID.t_min >= 6.0
    assert GRID.t_min + GRID.width - bank.positions[-1] >= 6.0
    GRID.index_of(bank.positions)  # on grid
    assert np.allclose(np.diff(bank.positions), np.diff(bank.positions)[0])


cplx = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(cplx, min_size=30, max_size=30), st.lists(cplx, min_size=30, max_size=30), cplx)
def test_synthesis_linear(a, b, alpha):
    bank = PulseBank.evenly_spaced(30, GRID)
    a, b = np.array(a), np.array(b)
    lhs = synthesize(alpha * a + b, bank, GRID).values
    rhs = alpha * synthesize(a, bank, GRID).values + synthesize(b, bank, GRID).values
    scale = max(np.max(np.abs(lhs)), 1e-300)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale + 1e-300


@settings(max_examples=50, deadline=None)
@given(st.lists(cplx, min_size=30, max_size=30))
def test_peak_bounded_by_l1(s):
    bank = PulseBank.evenly_spaced(30, GRID)
    s = np.array(s)
    assert np.max(np.abs(synthesize(s, bank, GRID).values)) <= np.sum(np.abs(s)) * (1 + 1e-12)


def test_sample_full_grid_is_identity():
    w = synthesize(random_sparse(30, 3, make_rng(1)), PulseBank.evenly_spaced(30, GRID), GRID)
    np.testing.assert_array_equal(sample_at(w, GRID.t), w.values)
    assert sample_at(w, [GRID.t_min])[0] == w.values[0]
    assert sample_at(w, []).shape == (0,)


def test_sample_off_grid_rejected():
    w = synthesize(np.zeros(30), PulseBank.evenly_spaced(30, GRID), GRID)
    with pytest.raises(ValueError):
        sample_at(w, [GRID.t_min + 0.1])


def test_noise_sigma2():
    assert NoiseModel(15).sigma2 == pytest.approx(0.031623, rel=1e-4)
    assert NoiseModel(5).sigma2 == pytest.approx(0.31623, rel=1e-4)


def test_infinite_snr_is_noiseless():
    x = np.arange(5) + 1j
    np.testing.assert_array_equal(add_noise(x, NoiseModel(math.inf), make_rng(0)), x)


def test_noise_variance_monte_carlo():
    x = np.zeros(1_000_000, dtype=complex)
    n = add_noise(x, NoiseModel(5), make_rng(3))
    assert np.mean(np.abs(n) ** 2) == pytest.approx(10**-0.5, rel=1e-2)
    assert np.var(n.real) == pytest.approx(10**-0.5 / 2, rel=1e-2)


def test_noise_reproducible():
    x = np.ones(100, dtype=complex)
    a = add_noise(x, NoiseModel(10), make_rng(42, 7))
    b = add_noise(x, NoiseModel(10), make_rng(42, 7))
    assert a.tobytes() == b.tobytes()


def test_random_sparse_properties():
    s = random_sparse(30, 3, make_rng(5))
    assert np.count_nonzero(s) == 3
    np.testing.assert_allclose(np.abs(s[s != 0]), 1.0)


def test_random_qpsk_uniform():
    s = random_qpsk(40000, make_rng(6))
    _, counts = np.unique(s, return_counts=True)
    assert counts.size == 4
    np.testing.assert_allclose(counts / s.size, 0.25, atol=0.01)


def test_metrics():
    s = random_sparse(30, 3, make_rng(2))
    assert mse(s, s) == 0
    assert mse([1, 0], [0, 0]) == 1
    q = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
    assert ser(q, q) == 0
    assert ser(q, np.array([1 + 1j, 1 - 1j, -1 + 1j, 1 - 1j])) == 0.25
    with pytest.raises(ValueError):
        mse([1, 0], [0])


def test_project_qpsk_tie_break():
    assert project_qpsk(0) == 1 + 1j
