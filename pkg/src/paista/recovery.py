"""PA-ISTA: physics-aware gradient steps through the SSFM followed by shrinkage."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import (
    FiberChannel, MeasurementVector, NoiseModel, PulseBank, TemporalGrid, Waveform,
    add_noise, mse, project_qpsk,
)
from .gradient import fidelity_and_gradient
from .nlse import channel_forward, dbp

__all__ = [
    "ShrinkageKind", "UnfoldedParams", "Backtracking", "RecoveryConfig", "RecoveryReport",
    "ChannelContext", "soft_threshold_c", "qpsk_shrink", "project_qpsk", "shrink",
    "ista_update", "dbp_initialize", "pa_ista",
]


class ShrinkageKind(str, enum.Enum):
    SOFT = "soft"
    QPSK_TANH = "qpsk_tanh"


def soft_threshold_c(x, tau):
    """Complex soft threshold: magnitude max(|x| - tau, 0), phase of x kept."""
    if tau < 0:
        raise ValueError(f"soft threshold needs tau >= 0, got {tau}")
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    active = mag > tau
    scale = np.where(active, 1.0 - tau / np.where(active, mag, 1.0), 0.0)
    return x * scale


def qpsk_shrink(y, lam):
    y = np.asarray(y, dtype=complex)
    return np.tanh(lam * y.real) + 1j * np.tanh(lam * y.imag)


def shrink(z, theta, kind: ShrinkageKind):
    if ShrinkageKind(kind) is ShrinkageKind.SOFT:
        return soft_threshold_c(z, theta)
    return qpsk_shrink(z, theta)


def ista_update(x, g, eta: float, theta: float, kind: ShrinkageKind):
    """One PA-ISTA layer, shrink(x - |eta| g, theta).

    Both the recovery loop and the unfolding replay call this, so replaying
    stored gradients reproduces the iterates exactly.
    """
    return shrink(x - abs(eta) * g, theta, kind)


@dataclass
class UnfoldedParams:
    eta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float).copy()
        self.theta = np.asarray(self.theta, dtype=float).copy()
        if self.eta.shape != self.theta.shape or self.eta.ndim != 1:
            raise ValueError("eta and theta must be vectors of equal length")
        if not (np.all(np.isfinite(self.eta)) and np.all(np.isfinite(self.theta))):
            raise ValueError("non-finite unfolded parameters")

    @classmethod
    def constant(cls, u: int, eta: float, theta: float) -> UnfoldedParams:
        return cls(np.full(u, float(eta)), np.full(u, float(theta)))

    @property
    def u(self) -> int:
        return self.eta.size

    def copy(self) -> UnfoldedParams:
        return UnfoldedParams(self.eta, self.theta)


@dataclass(frozen=True)
class Backtracking:
    tau: float = 0.5
    sigma: float = 0.1
    max_halvings: int = 20

    def __post_init__(self):
        if not (0 < self.tau < 1 and 0 < self.sigma < 1 and self.max_halvings >= 0):
            raise ValueError("backtracking needs tau, sigma in (0, 1) and max_halvings >= 0")


@dataclass
class RecoveryConfig:
    params: UnfoldedParams
    shrinkage: ShrinkageKind = ShrinkageKind.SOFT
    backtracking: Backtracking | None = None
    init: str = "peak"  # or "lstsq"

    def __post_init__(self):
        self.shrinkage = ShrinkageKind(self.shrinkage)
        if self.shrinkage is ShrinkageKind.SOFT and np.any(self.params.theta < 0):
            raise ValueError("soft-threshold layers need theta >= 0")

    @property
    def iterations(self) -> int:
        return self.params.u


@dataclass
class RecoveryReport:
    estimate: np.ndarray
    x0: np.ndarray
    loss: list[float] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    iterations: int = 0
    backtracks: list[int] = field(default_factory=list)
    rejected: list[bool] = field(default_factory=list)
    error: str | None = None


@dataclass(frozen=True)
class ChannelContext:
    """Everything needed to evaluate the forward map: grid, pulses, fiber, sample times."""

    grid: TemporalGrid
    bank: PulseBank
    channel: FiberChannel
    q: np.ndarray | None = None

    def __post_init__(self):
        q = self.grid.t if self.q is None else np.asarray(self.q, dtype=float)
        self.grid.index_of(q)
        object.__setattr__(self, "q", q)

    @property
    def n(self) -> int:
        return self.bank.n

    def forward(self, x) -> np.ndarray:
        return channel_forward(x, self.bank, self.grid, self.channel, self.q)

    def measure(self, s, noise: NoiseModel, rng) -> MeasurementVector:
        return MeasurementVector(add_noise(self.forward(s), noise, rng), self.q)

    def gradient(self, x, y):
        return fidelity_and_gradient(x, y, self.q, self.bank, self.grid, self.channel)


def dbp_initialize(y: MeasurementVector, ctx: ChannelContext, readout: str = "peak"):
    """Back-propagate the measured waveform and read one coefficient per pulse."""
    idx = ctx.grid.index_of(y.positions)
    if np.unique(idx).size != ctx.grid.n_t:
        raise ValueError("DBP initialization needs samples on every grid point")
    field_ = np.zeros(y.samples.shape[:-1] + (ctx.grid.n_t,), dtype=complex)
    field_[..., idx] = y.samples
    back = dbp(Waveform(ctx.grid, field_), ctx.channel).values
    if readout == "peak":
        return back[..., ctx.grid.index_of(ctx.bank.positions)]
    if readout == "lstsq":
        phi = ctx.bank.matrix(ctx.grid)
        sol, *_ = np.linalg.lstsq(phi, np.moveaxis(back, -1, 0), rcond=None)
        return np.moveaxis(sol, 0, -1)
    raise ValueError(f"unknown readout {readout!r}")


def _objective(fid: float, x, lam: float, kind: ShrinkageKind) -> float:
    # half the fidelity: g is then the real gradient of the smooth part
    reg = lam * float(np.sum(np.abs(x))) if ShrinkageKind(kind) is ShrinkageKind.SOFT else 0.0
    return 0.5 * float(fid) + reg


def pa_ista(y: MeasurementVector, cfg: RecoveryConfig, ctx: ChannelContext,
            truth=None, x0=None) -> RecoveryReport:
    """Run PA-ISTA from the DBP initialization (or ``x0`` when given).

    ``report.loss[k]`` is F(x^(k)) = 0.5 ||y - f(x^(k))||^2 + lam ||x^(k)||_1 with
    lam = theta/|eta| of the layer that produced x^(k) (layer 0 for x^(0)).
    """
    kind = ShrinkageKind(cfg.shrinkage)
    eta, theta = cfg.params.eta, cfg.params.theta
    x = dbp_initialize(y, ctx, cfg.init) if x0 is None else np.asarray(x0, dtype=complex)
    report = RecoveryReport(estimate=x, x0=x.copy())

    def lam_of(k):
        return theta[k] / abs(eta[k]) if k < eta.size and eta[k] != 0 else 0.0

    fid, g = ctx.gradient(x, y.samples)
    report.loss.append(_objective(fid, x, lam_of(0), kind))
    if truth is not None:
        report.mse.append(mse(truth, x))

    for k in range(cfg.iterations):
        try:
            step_out = _layer(k, x, fid, g, y, cfg, ctx, kind, lam_of(k))
        except FloatingPointError as exc:
            report.error = f"iteration {k}: {exc}"
            break
        x_new, fid_new, g_new, nb, rejected = step_out
        if not np.all(np.isfinite(x_new)):
            report.error = f"non-finite iterate at iteration {k}"
            break
        x, fid, g = x_new, fid_new, g_new
        report.iterations = k + 1
        report.backtracks.append(nb)
        report.rejected.append(rejected)
        report.loss.append(_objective(fid, x, lam_of(k), kind))
        if truth is not None:
            report.mse.append(mse(truth, x))
    report.estimate = x
    return report


def _layer(k, x, fid, g, y, cfg, ctx, kind, lam):
    """One layer, with the sufficient-decrease search when backtracking is on."""
    eta, theta = cfg.params.eta, cfg.params.theta
    bt = cfg.backtracking
    if bt is None:
        x_new = ista_update(x, g, eta[k], theta[k], kind)
        nb, rejected = 0, False
        fid_new, g_new = ctx.gradient(x_new, y.samples)
    else:
        f_cur = _objective(fid, x, lam, kind)
        step, thr = abs(eta[k]), theta[k]
        for nb in range(bt.max_halvings + 1):
            x_new = ista_update(x, g, step, thr, kind)
            fid_new, g_new = ctx.gradient(x_new, y.samples)
            decrease = bt.sigma / (2 * step) * float(np.sum(np.abs(x_new - x) ** 2)) if step else 0.0
            if _objective(fid_new, x_new, lam, kind) <= f_cur - decrease:
                rejected = False
                break
            step, thr = step * bt.tau, thr * bt.tau
        else:
            # no sufficient decrease found: null step keeps F monotone
            x_new, fid_new, g_new, rejected = x, fid, g, True
    return x_new, fid_new, g_new, nb, rejected
