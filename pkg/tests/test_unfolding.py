import json

import numpy as np
import pytest

from paista.core import FiberChannel, NoiseModel, PulseBank, TemporalGrid, make_rng
from paista.recovery import ChannelContext, ShrinkageKind, UnfoldedParams, dbp_initialize
from paista.unfolding import (
    AdamState, GradientStore, TrainConfig, draw_sample, load_params, replay_chain,
    replay_phase, save_params, store_phase, train,
)

GRID = TemporalGrid()
CTX = ChannelContext(GRID, PulseBank.evenly_spaced(30, GRID), FiberChannel())
QCTX = ChannelContext(GRID, PulseBank.evenly_spaced(15, GRID), FiberChannel(length=0.5))


def _sample(seed, snr=15.0, ctx=CTX, kind=ShrinkageKind.SOFT):
    return draw_sample(ctx, kind, 3, NoiseModel(snr), make_rng(seed))


def test_empty_store():
    s, y = _sample(0)
    store, est = store_phase(y, UnfoldedParams.constant(0, 0.01, 0.001), CTX)
    assert store.grads.shape == (0, 30)
    np.testing.assert_array_equal(est, dbp_initialize(y, CTX))


def test_zero_signal_stores_zero_gradients():
    y = CTX.measure(np.zeros(30), NoiseModel(np.inf), None)
    store, _ = store_phase(y, UnfoldedParams.constant(5, 0.01, 0.001), CTX)
    assert np.all(store.grads == 0)


def test_store_shape_experiment_config():
    _, y = _sample(1)
    store, _ = store_phase(y, UnfoldedParams.constant(30, 0.01, 0.001), CTX)
    assert store.grads.shape == (30, 30)
    assert np.all(np.isfinite(store.grads))


@pytest.mark.parametrize("kind,ctx,theta", [
    (ShrinkageKind.SOFT, CTX, 0.001), (ShrinkageKind.QPSK_TANH, QCTX, 2.0),
])
def test_replay_reproduces_store_bit_for_bit(kind, ctx, theta):
    s, y = _sample(2, ctx=ctx, kind=kind)
    params = UnfoldedParams.constant(10, 0.01, theta)
    store, est = store_phase(y, params, ctx, kind)
    traj, _ = replay_chain(store, params, kind)
    assert traj[-1].tobytes() == est.tobytes()


def test_saturated_thresholds():
    s, y = _sample(3)
    params = UnfoldedParams.constant(5, 0.01, 1e6)
    store, _ = store_phase(y, params, CTX)
    loss, g_eta, g_theta = replay_phase(store, s, params)
    assert loss == pytest.approx(np.sum(np.abs(s) ** 2))
    assert np.all(g_eta == 0)


def _replay_fd_probe(store, s, params, kind, which, k, eps=1e-6):
    def loss_at(delta):
        p = params.copy()
        getattr(p, which)[k] += delta
        return replay_phase(store, s, p, kind)[0]

    def active(delta):
        p = params.copy()
        getattr(p, which)[k] += delta
        _, zs = replay_chain(store, p, kind)
        return [np.abs(z) > t for z, t in zip(zs, p.theta)]

    if kind is ShrinkageKind.SOFT and any(
        np.any(a != b) for a, b in zip(active(eps), active(-eps))
    ):
        return None  # straddles a threshold kink
    return (loss_at(eps) - loss_at(-eps)) / (2 * eps)


@pytest.mark.parametrize("kind,ctx,theta0", [
    (ShrinkageKind.SOFT, CTX, 0.02), (ShrinkageKind.QPSK_TANH, QCTX, 2.0),
])
def test_replay_gradients_match_finite_differences(kind, ctx, theta0):
    rng = make_rng(4)
    checked = 0
    for trial in range(3):
        s, y = _sample(100 + trial, ctx=ctx, kind=kind)
        params = UnfoldedParams(0.01 + 0.02 * rng.random(8), theta0 * (0.5 + rng.random(8)))
        store, _ = store_phase(y, params, ctx, kind)
        _, g_eta, g_theta = replay_phase(store, s, params, kind)
        for k in range(8):
            for which, grad in (("eta", g_eta), ("theta", g_theta)):
                fd = _replay_fd_probe(store, s, params, kind, which, k)
                if fd is None:
                    continue
                assert grad[k] == pytest.approx(fd, rel=1e-4, abs=1e-9), (which, k)
                checked += 1
    assert checked >= 30


def test_replay_length_mismatch():
    store = GradientStore(np.zeros(30, complex), np.zeros((4, 30), complex))
    with pytest.raises(ValueError):
        replay_phase(store, np.zeros(30), UnfoldedParams.constant(5, 0.01, 0.01))
    with pytest.raises(ValueError):
        replay_phase(store, np.zeros(29), UnfoldedParams.constant(4, 0.01, 0.01))


def test_adam_matches_torch():
    torch = pytest.importorskip("torch")
    rng = make_rng(5)
    p0 = rng.normal(size=6)
    grads = [rng.normal(size=6) for _ in range(5)]
    tp = torch.tensor(p0.copy(), dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([tp], lr=1e-2, betas=(0.9, 0.999), eps=1e-8)
    adam = AdamState(lr=1e-2)
    p = p0.copy()
    for g in grads:
        opt.zero_grad()
        tp.grad = torch.tensor(g, dtype=torch.float64)
        opt.step()
        p = adam.step(p, g)
    np.testing.assert_allclose(p, tp.detach().numpy(), rtol=1e-12, atol=1e-14)


def test_adam_first_step_is_signed_lr():
    p = AdamState(lr=0.1).step(np.zeros(3), np.array([2.0, -3.0, 0.5]))
    np.testing.assert_allclose(p, [-0.1, 0.1, -0.1], rtol=1e-6)


def test_zero_learning_rate_keeps_params():
    cfg = TrainConfig(iterations=2, layers=4, lr=0.0, val_every=0)
    res = train(cfg, CTX)
    assert res.params.eta.tobytes() == res.init.eta.tobytes()
    assert res.params.theta.tobytes() == res.init.theta.tobytes()


def test_training_deterministic_and_moves_params():
    cfg = TrainConfig(iterations=3, layers=5, lr=1e-3, seed=9, val_every=0)
    a, b = train(cfg, CTX), train(cfg, CTX)
    assert a.params.eta.tobytes() == b.params.eta.tobytes()
    assert a.params.theta.tobytes() == b.params.theta.tobytes()
    assert a.loss == b.loss
    assert not np.array_equal(a.params.eta, a.init.eta)


def test_incremental_training_freezes_late_layers():
    cfg = TrainConfig(iterations=2, layers=6, lr=1e-3, val_every=0, incremental=True)
    res = train(cfg, CTX)
    assert res.mode == "incremental"
    # layers join at iterations 0 (layer 0) and 1 (layers 1-3); 4 and 5 never train
    np.testing.assert_array_equal(res.params.eta[4:], res.init.eta[4:])
    assert np.all(res.params.eta[:4] != res.init.eta[:4])


def test_validation_log():
    cfg = TrainConfig(iterations=4, layers=3, val_every=2, val_size=2)
    res = train(cfg, CTX)
    assert [it for it, _ in res.val] == [2, 4]


def test_params_json_roundtrip(tmp_path):
    params = UnfoldedParams(np.linspace(0.01, 0.02, 5), np.full(5, 0.001))
    doc = save_params(tmp_path / "p.json", params, seed=3, cfg=TrainConfig(layers=5))
    assert set(doc) == {"u", "eta", "theta", "seed", "config_hash"}
    back = load_params(tmp_path / "p.json")
    assert back.eta.tobytes() == params.eta.tobytes()
    assert json.loads((tmp_path / "p.json").read_text())["u"] == 5


def test_noiseless_training_keeps_thresholds_nonnegative():
    # noise-free samples push the thresholds toward zero
    cfg = TrainConfig(iterations=40, layers=30, theta0=1e-4, lr=1e-3, snr_db=np.inf, val_every=0)
    res = train(cfg, CTX)
    assert np.all(res.params.theta >= 0)
    assert np.any(res.params.theta == 0)
