"""Shared substrate: time grid, pulse bank, signal generation, noise and metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

QPSK_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j])


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed`` and optional stream ids."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TemporalGrid:
    n_t: int = 256
    dt: float = 0.3
    t_min: float = -38.4

    def __post_init__(self):
        if self.n_t < 1 or self.n_t & (self.n_t - 1):
            raise ValueError(f"n_t must be a power of two, got {self.n_t}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def t(self) -> np.ndarray:
        return self.t_min + self.dt * np.arange(self.n_t)

    @property
    def width(self) -> float:
        return self.n_t * self.dt

    @property
    def omega(self) -> np.ndarray:
        """Angular frequencies in centered order, 2*pi*(i - n_t/2)/(n_t*dt)."""
        return 2 * np.pi * (np.arange(self.n_t) - self.n_t // 2) / (self.n_t * self.dt)

    @property
    def omega_fft(self) -> np.ndarray:
        """Angular frequencies in natural FFT order (matches ``np.fft.fft`` bins)."""
        return 2 * np.pi * np.fft.fftfreq(self.n_t, self.dt)

    def index_of(self, q, tol: float = 1e-9) -> np.ndarray:
        """Grid indices of times ``q``; raises if any is off-grid or outside the window."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        pos = (q - self.t_min) / self.dt
        idx = np.rint(pos).astype(int)
        bad = (np.abs(pos - idx) > tol) | (idx < 0) | (idx >= self.n_t)
        if np.any(bad):
            raise ValueError(f"sample times not on grid: {q[bad][:5]}")
        return idx


@dataclass(frozen=True)
class Waveform:
    grid: TemporalGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape[-1] != self.grid.n_t:
            raise ValueError(f"waveform length {v.shape[-1]} != grid n_t {self.grid.n_t}")
        if not np.all(np.isfinite(v)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "values", v)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dt)


@dataclass(frozen=True)
class FiberChannel:
    beta2: float = -10.0
    gamma: float = 2.0
    length: float = 0.3
    dz: float = 0.01

    def __post_init__(self):
        if not (self.length > 0 and self.dz > 0):
            raise ValueError("length and dz must be positive")
        if self.length < self.dz * (1 - 1e-9):
            raise ValueError("length must cover at least one step dz")

    def dispersion_length(self, t0: float) -> float:
        return t0**2 / abs(self.beta2)

    def nonlinear_length(self) -> float:
        return 1.0 / self.gamma

    def steps(self) -> list[float]:
        """Step sizes: floor(L/dz) full steps plus one shorter step for any remainder."""
        n_full = int(math.floor(self.length / self.dz + 1e-9))
        out = [self.dz] * n_full
        rem = self.length - n_full * self.dz
        if rem > 1e-9 * self.dz:
            out.append(rem)
        return out

    def reversed(self) -> FiberChannel:
        return FiberChannel(-self.beta2, -self.gamma, self.length, self.dz)


def pulse(x, t0: float = 1.0):
    """Gaussian pulse exp(-x^2 / (2 t0^2)) with unit peak."""
    return np.exp(-np.asarray(x) ** 2 / (2 * t0**2))


@dataclass(frozen=True)
class PulseBank:
    positions: np.ndarray
    t0: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("positions must be a non-empty vector")
        if np.any(np.diff(p) <= 0):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", p)

    @property
    def n(self) -> int:
        return self.positions.size

    def check_margin(self, grid: TemporalGrid, margin: float = 3.0) -> None:
        lo = grid.t_min + margin * self.t0
        hi = grid.t_min + grid.width - margin * self.t0
        if self.positions[0] < lo or self.positions[-1] > hi:
            raise ValueError(
                f"pulse centers must stay {margin}*t0 inside the window [{lo}, {hi}]"
            )

    def matrix(self, grid: TemporalGrid) -> np.ndarray:
        """Synthesis matrix Phi with Phi[j, i] = phi(t_j - p_i), shape (n_t, n)."""
        return pulse(grid.t[:, None] - self.positions[None, :], self.t0)

    @classmethod
    def evenly_spaced(
        cls, n: int, grid: TemporalGrid, t0: float = 1.0, margin: float = 6.0,
        spacing: float | None = None,
    ) -> PulseBank:
        """Grid-aligned, centered pulse train keeping ``margin*t0`` from both edges.

        Default spacing is the widest whole number of grid steps that fits.
        """
        if spacing is None:
            usable = grid.width - 2 * margin * t0 - grid.dt
            steps = int(usable / grid.dt / max(n - 1, 1)) if n > 1 else 0
            if n > 1 and steps < 1:
                raise ValueError(f"{n} pulses do not fit with margin {margin}*t0")
        else:
            steps = int(round(spacing / grid.dt))
        span = steps * (n - 1)
        start = (grid.n_t - 1 - span) // 2
        bank = cls(grid.t_min + grid.dt * (start + steps * np.arange(n)), t0)
        bank.check_margin(grid, min(margin, 3.0))
        return bank


def synthesize(coeffs, bank: PulseBank, grid: TemporalGrid) -> Waveform:
    """Sum of pulses s_i * phi(t - p_i) sampled on the grid."""
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.shape[-1] != bank.n:
        raise ValueError(f"{coeffs.shape[-1]} coefficients for {bank.n} pulses")
    bank.check_margin(grid)
    return Waveform(grid, coeffs @ bank.matrix(grid).T)


def sample_at(w: Waveform, q) -> np.ndarray:
    """Field values at the grid times ``q`` (index lookup, no interpolation)."""
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        return np.zeros(w.values.shape[:-1] + (0,), dtype=complex)
    return w.values[..., w.grid.index_of(q, tol=1e-9)]


@dataclass(frozen=True)
class NoiseModel:
    snr_db: float = 15.0

    @property
    def sigma2(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)


def add_noise(samples, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise CN(0, sigma2)."""
    samples = np.asarray(samples, dtype=complex)
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite samples")
    if math.isinf(noise.snr_db) and noise.snr_db > 0:
        return samples.copy()
    std = math.sqrt(noise.sigma2 / 2)
    n = rng.normal(0.0, std, samples.shape) + 1j * rng.normal(0.0, std, samples.shape)
    return samples + n


@dataclass(frozen=True)
class MeasurementVector:
    samples: np.ndarray
    positions: np.ndarray = field(default=None)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        q = np.asarray(self.positions, dtype=float)
        if s.shape[-1] != q.shape[-1]:
            raise ValueError("samples and positions differ in length")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "positions", q)


def random_sparse(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Length-n vector with k unit-modulus entries of uniform phase at uniform positions."""
    s = np.zeros(n, dtype=complex)
    support = rng.choice(n, size=k, replace=False)
    s[support] = np.exp(2j * np.pi * rng.random(k))
    return s


def random_qpsk(n: int, rng: np.random.Generator) -> np.ndarray:
    return QPSK_POINTS[rng.integers(0, 4, size=n)]


def project_qpsk(x) -> np.ndarray:
    """Nearest QPSK point, sign(re) + i sign(im) with sign(0) = +1."""
    x = np.asarray(x, dtype=complex)
    return np.where(x.real >= 0, 1.0, -1.0) + 1j * np.where(x.imag >= 0, 1.0, -1.0)


def mse(truth, est) -> float:
    """Squared L2 distance between coefficient vectors (one trial)."""
    truth, est = np.asarray(truth), np.asarray(est)
    if truth.shape != est.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {est.shape}")
    return float(np.sum(np.abs(truth - est) ** 2))


def ser(truth, est) -> float:
    """Fraction of symbols whose projected constellation points differ."""
    truth, est = np.asarray(truth), np.asarray(est)
    if truth.shape != est.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {est.shape}")
    if truth.size == 0:
        return 0.0
    return float(np.mean(project_qpsk(truth) != project_qpsk(est)))
