"""Solver and gradient checks against closed-form or brute-force oracles.

Each check returns a measured error (or order) and the threshold it must meet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FiberChannel, PulseBank, TemporalGrid, Waveform, make_rng, random_sparse, synthesize
from .gradient import fidelity_and_gradient
from .nlse import channel_forward, dbp, ssfm_propagate


@dataclass
class Check:
    name: str
    measured: float
    threshold: float
    higher_is_better: bool = False

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.measured):
            return False
        if self.higher_is_better:
            return self.measured >= self.threshold
        return self.measured < self.threshold


def rel_l2(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


def _random_field(grid: TemporalGrid, n: int, rng) -> Waveform:
    bank = PulseBank.evenly_spaced(n, grid)
    s = rng.normal(size=n) + 1j * rng.normal(size=n)
    return synthesize(s / math.sqrt(2), bank, grid)


def energy_conservation(grid=None, ch=None, seed: int = 0) -> Check:
    grid = grid or TemporalGrid()
    ch = ch or FiberChannel()
    u0 = synthesize(random_sparse(30, 3, make_rng(seed)), PulseBank.evenly_spaced(30, grid), grid)
    out, _ = ssfm_propagate(u0, ch)
    return Check("energy_conservation", abs(out.energy() - u0.energy()) / u0.energy(), 1e-8)


def nonlinear_exactness(grid=None) -> Check:
    """beta2 = 0 on a constant field: closed form A exp(i gamma |A|^2 L)."""
    grid = grid or TemporalGrid()
    amp = 0.7 - 0.4j
    ch = FiberChannel(beta2=0.0, gamma=2.0, length=0.3, dz=0.01)
    out, _ = ssfm_propagate(Waveform(grid, np.full(grid.n_t, amp)), ch)
    exact = amp * np.exp(1j * ch.gamma * abs(amp) ** 2 * ch.length)
    return Check("nonlinear_exactness", float(np.max(np.abs(out.values - exact))), 1e-12)


def soliton(grid=None, corrupt_dispersion_sign: bool = False) -> Check:
    """Fundamental soliton sqrt(|beta2|/gamma) sech(t) only picks up a phase."""
    grid = grid or TemporalGrid()
    beta2, gamma, length = -10.0, 2.0, 0.3
    amp = math.sqrt(abs(beta2) / gamma)
    t = grid.t
    u0 = Waveform(grid, amp / np.cosh(t))
    run_beta2 = -beta2 if corrupt_dispersion_sign else beta2
    out, _ = ssfm_propagate(u0, FiberChannel(run_beta2, gamma, length, 0.001))
    exact = u0.values * np.exp(1j * abs(beta2) / 2 * length)
    return Check("soliton", rel_l2(out.values, exact), 1e-3)


def dispersed_gaussian(t, z, beta2, t0=1.0):
    """Closed-form solution of the linear equation for a unit Gaussian input."""
    q = t0**2 - 1j * beta2 * z
    return t0 / np.sqrt(q) * np.exp(-(t**2) / (2 * q))


def linear_dispersion(grid=None) -> Check:
    grid = grid or TemporalGrid()
    ch = FiberChannel(-10.0, 0.0, 0.3, 0.01)
    bank = PulseBank(grid.index_of(0.0) * 0 + np.array([0.0]))
    out = channel_forward([1.0], bank, grid, ch, grid.t)
    exact = dispersed_gaussian(grid.t, ch.length, ch.beta2)
    return Check("linear_dispersion", float(np.max(np.abs(out - exact))), 1e-6)


def dbp_roundtrip(trials: int = 20, seed: int = 0, grid=None) -> Check:
    """Worst relative error of dbp(ssfm(u)) over random fields and channels."""
    grid = grid or TemporalGrid()
    rng = make_rng(seed, 11)
    worst = 0.0
    for _ in range(trials):
        u0 = _random_field(grid, 30, rng)
        ch = FiberChannel(beta2=rng.uniform(-20, 20), gamma=rng.uniform(-3, 3),
                          length=rng.uniform(0.05, 0.6), dz=rng.choice([0.005, 0.01, 0.02]))
        back = dbp(ssfm_propagate(u0, ch)[0], ch)
        worst = max(worst, rel_l2(back.values, u0.values))
    return Check("dbp_roundtrip", worst, 1e-8)


def convergence_order(grid=None, seed: int = 0, dzs=(0.02, 0.01, 0.005)) -> Check:
    """Least-squares slope of log error vs log dz against a dz/16 reference."""
    grid = grid or TemporalGrid()
    u0 = synthesize(random_sparse(30, 3, make_rng(seed)) * 1.5,
                    PulseBank.evenly_spaced(30, grid), grid)
    ref, _ = ssfm_propagate(u0, FiberChannel(-10.0, 2.0, 0.3, min(dzs) / 16))
    errs = [rel_l2(ssfm_propagate(u0, FiberChannel(-10.0, 2.0, 0.3, dz))[0].values, ref.values)
            for dz in dzs]
    slope = np.polyfit(np.log(dzs), np.log(errs), 1)[0]
    return Check("convergence_order", float(slope), 1.8, higher_is_better=True)


def grid_consistency(seed: int = 0) -> Check:
    """Doubling n_t at fixed window barely moves samples at the shared time points."""
    coarse = TemporalGrid()
    fine = TemporalGrid(n_t=2 * coarse.n_t, dt=coarse.dt / 2, t_min=coarse.t_min)
    s = random_sparse(30, 3, make_rng(seed))
    bank = PulseBank.evenly_spaced(30, coarse)
    ch = FiberChannel()
    a = channel_forward(s, bank, coarse, ch, coarse.t)
    b = channel_forward(s, bank, fine, ch, coarse.t)
    return Check("grid_consistency", float(np.max(np.abs(a - b))), 1e-4)


def gradient_fd(probes: int = 50, seed: int = 0, eps: float = 1e-6) -> Check:
    """Worst relative gap between central differences and 2 Re <g, v>."""
    grid, ch = TemporalGrid(), FiberChannel()
    bank = PulseBank.evenly_spaced(30, grid)
    rng = make_rng(seed, 12)
    q = grid.t
    worst = 0.0
    for _ in range(probes):
        s = random_sparse(30, 3, rng)
        y = channel_forward(s, bank, grid, ch, q)
        y = y + 0.1 * (rng.normal(size=y.size) + 1j * rng.normal(size=y.size))
        x = s + 0.3 * (rng.normal(size=30) + 1j * rng.normal(size=30))
        v = rng.normal(size=30) + 1j * rng.normal(size=30)
        v /= np.linalg.norm(v)
        _, g = fidelity_and_gradient(x, y, q, bank, grid, ch)
        both = np.stack([x + eps * v, x - eps * v])
        lp, lm = fidelity_and_gradient(both, np.stack([y, y]), q, bank, grid, ch)[0]
        fd = (lp - lm) / (2 * eps)
        an = 2 * np.real(np.vdot(g, v))
        worst = max(worst, abs(fd - an) / abs(an))
    return Check("gradient_fd", worst, 1e-4)


def forward_matrix(bank: PulseBank, grid: TemporalGrid, ch: FiberChannel, q) -> np.ndarray:
    """Columns are the channel outputs for unit coefficient vectors (valid when gamma == 0)."""
    return channel_forward(np.eye(bank.n, dtype=complex), bank, grid, ch, q).T


def linear_gradient(seed: int = 0) -> Check:
    grid = TemporalGrid()
    ch = FiberChannel(-10.0, 0.0, 0.3, 0.01)
    bank = PulseBank.evenly_spaced(30, grid)
    rng = make_rng(seed, 13)
    a = forward_matrix(bank, grid, ch, grid.t)
    x = rng.normal(size=30) + 1j * rng.normal(size=30)
    y = rng.normal(size=256) + 1j * rng.normal(size=256)
    _, g = fidelity_and_gradient(x, y, grid.t, bank, grid, ch)
    expected = a.conj().T @ (a @ x - y)
    return Check("linear_gradient", rel_l2(g, expected), 1e-8)


def run_all(corrupt_dispersion_sign: bool = False, fd_probes: int = 50) -> list[Check]:
    return [
        energy_conservation(),
        nonlinear_exactness(),
        soliton(corrupt_dispersion_sign=corrupt_dispersion_sign),
        linear_dispersion(),
        dbp_roundtrip(),
        convergence_order(),
        grid_consistency(),
        gradient_fd(fd_probes),
        linear_gradient(),
    ]
