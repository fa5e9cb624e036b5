import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from paista import validation
from paista.core import (
    FiberChannel, NoiseModel, PulseBank, TemporalGrid, Waveform, add_noise, make_rng,
    random_sparse, synthesize,
)
from paista.nlse import PropagationError, channel_forward, dbp, ssfm_propagate

GRID = TemporalGrid()
BANK = PulseBank.evenly_spaced(30, GRID)


def test_identity_when_no_physics():
    u0 = synthesize(random_sparse(30, 3, make_rng(0)), BANK, GRID)
    ch = FiberChannel(0.0, 0.0, 0.3, 0.01)
    out, _ = ssfm_propagate(u0, ch)
    np.testing.assert_allclose(out.values, u0.values, atol=1e-14)
    np.testing.assert_allclose(dbp(u0, ch).values, u0.values, atol=1e-14)


def test_constant_field_pure_nonlinearity():
    assert validation.nonlinear_exactness().passed


def test_pure_nonlinearity_preserves_modulus():
    u0 = synthesize(random_sparse(30, 3, make_rng(1)), BANK, GRID)
    out, _ = ssfm_propagate(u0, FiberChannel(0.0, 2.0, 0.3, 0.01))
    np.testing.assert_allclose(np.abs(out.values), np.abs(u0.values), rtol=0, atol=1e-13)


def test_soliton():
    check = validation.soliton()
    assert check.passed, check


def test_soliton_negative_control():
    assert not validation.soliton(corrupt_dispersion_sign=True).passed


def test_linear_dispersion_matches_closed_form():
    check = validation.linear_dispersion()
    assert check.passed, check


def test_half_step_sign_convention():
    # the multiplier on centered bins must equal exp(i beta2 w^2 dz / 4)
    from paista.nlse import half_step_multiplier
    h = half_step_multiplier(GRID, -10.0, 0.01)
    np.testing.assert_allclose(
        np.fft.fftshift(h), np.exp(1j * -10.0 * GRID.omega**2 * 0.01 / 4), atol=1e-14
    )


@pytest.mark.parametrize("seed", range(3))
def test_energy_conservation(seed):
    check = validation.energy_conservation(seed=seed)
    assert check.passed, check


def test_convergence_order():
    check = validation.convergence_order()
    assert check.passed, check


def test_grid_consistency():
    check = validation.grid_consistency()
    assert check.passed, check


@settings(max_examples=20, deadline=None)
@given(
    beta2=st.floats(-20, 20), gamma=st.floats(-3, 3), length=st.floats(0.01, 0.5),
    dz=st.sampled_from([0.003, 0.01, 0.02]), seed=st.integers(0, 2**32 - 1),
)
def test_dbp_inverts_forward(beta2, gamma, length, dz, seed):
    assume(length >= dz)
    rng = make_rng(seed)
    s = rng.normal(size=30) + 1j * rng.normal(size=30)
    u0 = synthesize(s, BANK, GRID)
    ch = FiberChannel(beta2, gamma, length, dz)
    back = dbp(ssfm_propagate(u0, ch)[0], ch)
    assert validation.rel_l2(back.values, u0.values) < 1e-8


def test_dbp_noise_degrades():
    rng = make_rng(4)
    ch = FiberChannel()
    errs = {}
    for snr in (np.inf, 15.0):
        total = 0.0
        for _ in range(10):
            u0 = synthesize(random_sparse(30, 3, rng), BANK, GRID)
            out = ssfm_propagate(u0, ch)[0]
            noisy = Waveform(GRID, add_noise(out.values, NoiseModel(snr), rng))
            total += validation.rel_l2(dbp(noisy, ch).values, u0.values)
        errs[snr] = total
    assert errs[np.inf] < 1e-8 < errs[15.0]


def test_step_schedule_keeps_total_length():
    ch = FiberChannel(length=0.3, dz=0.01)
    assert len(ch.steps()) == 30  # 0.3/0.01 is 29.999... in floating point
    ch = FiberChannel(length=0.305, dz=0.01)
    assert len(ch.steps()) == 31
    assert sum(ch.steps()) == pytest.approx(0.305)


def test_trace_layout():
    u0 = synthesize(random_sparse(30, 3, make_rng(2)), BANK, GRID)
    _, trace = ssfm_propagate(u0, FiberChannel(), record=True)
    assert len(trace) == 30
    assert all(m.shape == (GRID.n_t,) for m in trace.u_mid)


def test_blow_up_reports_step():
    u0 = Waveform(GRID, np.full(GRID.n_t, 1e154 + 0j))
    with pytest.raises(PropagationError) as exc:
        ssfm_propagate(u0, FiberChannel(-10.0, 2.0, 0.1, 0.01))
    assert exc.value.step == 0


def test_channel_forward_zero_and_energy():
    ch = FiberChannel()
    assert np.all(channel_forward(np.zeros(30), BANK, GRID, ch, GRID.t) == 0)
    s = random_sparse(30, 3, make_rng(3))
    y = channel_forward(s, BANK, GRID, ch, GRID.t)
    e_in = np.sum(np.abs(synthesize(s, BANK, GRID).values) ** 2)
    assert np.all(np.isfinite(y))
    assert abs(np.sum(np.abs(y) ** 2) - e_in) / e_in < 1e-8


def test_batched_propagation_matches_single():
    rng = make_rng(5)
    s = np.stack([random_sparse(30, 3, rng) for _ in range(3)])
    batch = channel_forward(s, BANK, GRID, FiberChannel(), GRID.t)
    for i in range(3):
        single = channel_forward(s[i], BANK, GRID, FiberChannel(), GRID.t)
        np.testing.assert_allclose(batch[i], single, atol=1e-13)
