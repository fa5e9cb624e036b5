"""Deep unfolding of PA-ISTA with the store-and-replay method.

The store phase runs ordinary PA-ISTA and keeps every physics gradient.  The
replay phase reruns the layer chain s <- shrink(s - |eta_k| G_k, theta_k) with the
stored G_k held constant, so differentiating the training loss with respect to
(eta, theta) only needs a reverse sweep through shrinkage and axpy operations.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import NoiseModel, make_rng, mse, random_qpsk, random_sparse
from .recovery import (
    ChannelContext, MeasurementVector, RecoveryConfig, ShrinkageKind, UnfoldedParams,
    dbp_initialize, ista_update, pa_ista,
)

log = logging.getLogger(__name__)

__all__ = [
    "UnfoldedParams", "GradientStore", "AdamState", "TrainConfig", "TrainResult",
    "store_phase", "replay_phase", "train", "draw_sample", "save_params", "load_params",
]


@dataclass
class GradientStore:
    x0: np.ndarray
    grads: np.ndarray  # shape (U, n)

    @property
    def u(self) -> int:
        return self.grads.shape[0]


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(param)
            self.v = np.zeros_like(param)
        if self.m.shape != param.shape:
            raise ValueError("Adam moment shape does not match parameters")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def store_phase(y: MeasurementVector, params: UnfoldedParams, ctx: ChannelContext,
                kind: ShrinkageKind = ShrinkageKind.SOFT, x0=None):
    """PA-ISTA without parameter updates, recording each Wirtinger gradient.

    Returns ``(GradientStore, final estimate)``.
    """
    x = dbp_initialize(y, ctx) if x0 is None else np.asarray(x0, dtype=complex)
    store = GradientStore(x.copy(), np.zeros((params.u, ctx.n), dtype=complex))
    for k in range(params.u):
        _, g = ctx.gradient(x, y.samples)
        store.grads[k] = g
        x = ista_update(x, g, params.eta[k], params.theta[k], kind)
    return store, x


def _shrink_vjp(c, z, theta, kind: ShrinkageKind):
    """Cotangent wrt z and derivative wrt theta of shrink(z, theta), c = dL/dw*."""
    if ShrinkageKind(kind) is ShrinkageKind.SOFT:
        mag = np.abs(z)
        active = mag > theta  # boundary |z| == theta takes the zero-side derivative
        safe = np.where(active, mag, 1.0)
        dw_dz = 1.0 - theta / (2 * safe)
        dw_dzc = theta * z**2 / (2 * safe**3)
        cz = np.where(active, np.conj(c) * dw_dzc + c * dw_dz, 0.0)
        dtheta = 2 * np.sum(np.real(np.conj(c) * np.where(active, -z / safe, 0.0)))
        return cz, float(dtheta)
    a, b = z.real, z.imag
    sa = 1.0 / np.cosh(theta * a) ** 2
    sb = 1.0 / np.cosh(theta * b) ** 2
    cz = theta * (sa * c.real + 1j * sb * c.imag)
    dtheta = 2 * np.sum(c.real * a * sa + c.imag * b * sb)
    return cz, float(dtheta)


def replay_chain(store: GradientStore, params: UnfoldedParams,
                 kind: ShrinkageKind = ShrinkageKind.SOFT):
    """Iterates s_0..s_U and pre-shrink points z_0..z_{U-1} of the replayed chain."""
    if params.u != store.u:
        raise ValueError(f"{params.u} layers but {store.u} stored gradients")
    s = [store.x0.copy()]
    zs = []
    for k in range(params.u):
        zs.append(s[-1] - abs(params.eta[k]) * store.grads[k])
        s.append(ista_update(s[-1], store.grads[k], params.eta[k], params.theta[k], kind))
    return s, zs


def replay_phase(store: GradientStore, truth, params: UnfoldedParams,
                 kind: ShrinkageKind = ShrinkageKind.SOFT):
    """Loss ||s_U - truth||^2 of the replayed chain and its exact (eta, theta) gradients."""
    truth = np.asarray(truth, dtype=complex)
    if truth.shape != store.x0.shape:
        raise ValueError("truth does not match the stored state size")
    s, zs = replay_chain(store, params, kind)
    loss = float(np.sum(np.abs(s[-1] - truth) ** 2))
    c = s[-1] - truth
    g_eta = np.zeros(params.u)
    g_theta = np.zeros(params.u)
    for k in range(params.u - 1, -1, -1):
        c, g_theta[k] = _shrink_vjp(c, zs[k], params.theta[k], kind)
        g_eta[k] = np.sign(params.eta[k]) * 2 * np.sum(np.real(np.conj(c) * -store.grads[k]))
    return loss, g_eta, g_theta


@dataclass
class TrainConfig:
    iterations: int = 100
    layers: int = 30
    eta0: float = 0.01
    theta0: float = 0.001
    lr: float = 1e-4
    seed: int = 0
    snr_db: float = 15.0
    k: int = 3
    shrinkage: ShrinkageKind = ShrinkageKind.SOFT
    val_every: int = 10
    val_size: int = 20
    incremental: bool = False  # layer-wise: layer j joins training at iteration j*T/U

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("training needs at least one iteration")
        self.shrinkage = ShrinkageKind(self.shrinkage)


@dataclass
class TrainResult:
    params: UnfoldedParams
    init: UnfoldedParams
    loss: list[float] = field(default_factory=list)
    val: list[tuple[int, float]] = field(default_factory=list)
    mode: str = "joint"


def draw_sample(ctx: ChannelContext, kind: ShrinkageKind, k: int, noise: NoiseModel, rng):
    """A fresh (truth, measurement) pair."""
    s = random_sparse(ctx.n, k, rng) if ShrinkageKind(kind) is ShrinkageKind.SOFT else random_qpsk(ctx.n, rng)
    return s, ctx.measure(s, noise, rng)


def validation_mse(params, samples, ctx, kind) -> float:
    cfg = RecoveryConfig(params, kind)
    return float(np.mean([mse(s, pa_ista(y, cfg, ctx).estimate) for s, y in samples]))


def train(cfg: TrainConfig, ctx: ChannelContext) -> TrainResult:
    """Adam on (eta, theta), one fresh sample per iteration, store then replay."""
    kind = ShrinkageKind(cfg.shrinkage)
    noise = NoiseModel(cfg.snr_db)
    init = UnfoldedParams.constant(cfg.layers, cfg.eta0, cfg.theta0)
    params = init.copy()
    adam_eta, adam_theta = AdamState(lr=cfg.lr), AdamState(lr=cfg.lr)
    result = TrainResult(params, init, mode="incremental" if cfg.incremental else "joint")

    val_set = []
    if cfg.val_every > 0:
        val_set = [draw_sample(ctx, kind, cfg.k, noise, make_rng(cfg.seed, 2, i))
                   for i in range(cfg.val_size)]

    for it in range(cfg.iterations):
        s, y = draw_sample(ctx, kind, cfg.k, noise, make_rng(cfg.seed, 1, it))
        store, _ = store_phase(y, params, ctx, kind)
        loss, g_eta, g_theta = replay_phase(store, s, params, kind)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training loss diverged at iteration {it}")
        if cfg.incremental:
            live = min(cfg.layers, 1 + it * cfg.layers // cfg.iterations)
            g_eta[live:] = 0.0
            g_theta[live:] = 0.0
        theta = adam_theta.step(params.theta, g_theta)
        if kind is ShrinkageKind.SOFT:
            theta = np.maximum(theta, 0.0)  # projected step keeps thresholds valid
        params = UnfoldedParams(adam_eta.step(params.eta, g_eta), theta)
        result.loss.append(loss)
        if val_set and (it + 1) % cfg.val_every == 0:
            v = validation_mse(params, val_set, ctx, kind)
            result.val.append((it + 1, v))
            log.info("iter %d loss %.4g val_mse %.4g", it + 1, loss, v)
    result.params = params
    return result


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_params(path, params: UnfoldedParams, seed: int, cfg: TrainConfig | None = None):
    cfg_dict = asdict(cfg) if cfg is not None else {}
    doc = {
        "u": params.u,
        "eta": params.eta.tolist(),
        "theta": params.theta.tolist(),
        "seed": seed,
        "config_hash": config_hash(cfg_dict),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return doc


def load_params(path) -> UnfoldedParams:
    with open(path) as f:
        doc = json.load(f)
    params = UnfoldedParams(doc["eta"], doc["theta"])
    if params.u != doc["u"]:
        raise ValueError(f"{path}: 'u' is {doc['u']} but {params.u} layers stored")
    return params
