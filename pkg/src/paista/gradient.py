"""Conjugate Wirtinger gradient of ||y - f(x)||^2 by a hand-written reverse pass.

Cotangents are carried as c = dL/du* for the real loss L; dL/du is conj(c).
For a map w(u) this gives

    c_u = conj(c_w) * dw/du* + c_w * conj(dw/du)

which for holomorphic linear maps w = M u reduces to c_u = M^H c_w.  The nonlinear
step w = u exp(i a |u|^2), a = gamma*dz, has

    dw/du  = exp(i a |u|^2) (1 + i a |u|^2)
    dw/du* = i a u^2 exp(i a |u|^2)

With this convention the directional derivative of L along v is 2 Re <g, v>.
"""

from __future__ import annotations

import numpy as np

from .core import FiberChannel, PulseBank, TemporalGrid, synthesize
from .nlse import PropagationError, SsfmTrace, ssfm_propagate


def _adjoint_half_step(c: np.ndarray, h: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.conj(h) * np.fft.fft(c))


def _adjoint_nonlinear(c: np.ndarray, u: np.ndarray, a: float) -> np.ndarray:
    p2 = np.abs(u) ** 2
    rot = np.exp(1j * a * p2)
    return np.conj(c) * (1j * a * u**2 * rot) + c * np.conj(rot) * (1 - 1j * a * p2)


def backpropagate(c_out: np.ndarray, trace: SsfmTrace) -> np.ndarray:
    """Pull a cotangent at the fiber output back to the fiber input."""
    if trace is None:
        raise ValueError("a recorded SSFM trace is required")
    c = np.asarray(c_out, dtype=complex)
    for k in range(len(trace) - 1, -1, -1):
        h = trace.half_steps[k]
        c = _adjoint_half_step(c, h)
        c = _adjoint_nonlinear(c, trace.u_mid[k], trace.gamma * trace.dzs[k])
        c = _adjoint_half_step(c, h)
        if not np.all(np.isfinite(c)):
            raise PropagationError(k, "adjoint")
    return c


def fidelity_and_gradient(x, y, q, bank: PulseBank, grid: TemporalGrid, ch: FiberChannel):
    """Return ``(loss, g)`` with loss = ||y - f(x)||^2 and g = d loss / d x*.

    ``x`` may carry leading batch axes matching those of ``y``; loss then has the
    batch shape.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.shape[-1] != bank.n:
        raise ValueError(f"x has {x.shape[-1]} entries, bank has {bank.n} pulses")
    idx = grid.index_of(q)
    if y.shape[-1] != idx.size:
        raise ValueError("measurement length does not match sample positions")

    phi = bank.matrix(grid)
    out, trace = ssfm_propagate(synthesize(x, bank, grid), ch, record=True)
    resid = out.values[..., idx] - y
    loss = np.sum(np.abs(resid) ** 2, axis=-1)

    c = np.zeros(out.values.shape, dtype=complex)
    # np.add.at keeps repeated sample positions additive
    np.add.at(c, (..., idx), resid)
    c = backpropagate(c, trace)
    return loss, c @ phi
