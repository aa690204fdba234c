"""Gray-mapped square QAM with max-log soft demapping.

LLR sign convention: positive means bit 0.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64)


def bits_per_symbol(order: int) -> int:
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported modulation order {order}; expected one of {SUPPORTED_ORDERS}")
    return int(np.log2(order))


def _gray_pam(bits_per_axis: int) -> np.ndarray:
    """levels[g] for each bit pattern g (MSB first), Gray ordered."""
    L = 1 << bits_per_axis
    idx = np.arange(L)
    gray = idx ^ (idx >> 1)
    levels = np.empty(L)
    levels[gray] = 2 * idx - (L - 1)
    return levels


@lru_cache(maxsize=None)
def constellation(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Points indexed by symbol value, plus the bit table (order x bps).

    The first half of each symbol's bits selects the in-phase level, the
    second half the quadrature level.
    """
    bps = bits_per_symbol(order)
    half = bps // 2
    pam = _gray_pam(half)
    sym = np.arange(order)
    i_idx, q_idx = sym >> half, sym & ((1 << half) - 1)
    points = pam[i_idx] + 1j * pam[q_idx]
    points /= np.sqrt(np.mean(np.abs(points) ** 2))
    table = (sym[:, None] >> np.arange(bps - 1, -1, -1)[None, :]) & 1
    points.setflags(write=False)
    table.setflags(write=False)
    return points, table.astype(np.uint8)


def qam_map(bits, order: int) -> np.ndarray:
    bps = bits_per_symbol(order)
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % bps:
        raise ValueError(f"bit count {bits.size} not divisible by {bps}")
    weights = 1 << np.arange(bps - 1, -1, -1)
    sym = bits.reshape(-1, bps) @ weights
    return constellation(order)[0][sym]


def hard_symbols(y, order: int) -> np.ndarray:
    """Nearest constellation point (symbol index) for every sample."""
    y = np.asarray(y, dtype=complex).ravel()
    half = bits_per_symbol(order) // 2
    norm = 1.0 / np.sqrt(2 * (order - 1) / 3)
    L = 1 << half

    def axis(v):
        lvl = np.clip(np.round((v / norm + (L - 1)) / 2), 0, L - 1).astype(int)
        return lvl ^ (lvl >> 1)

    return (axis(y.real) << half) | axis(y.imag)


def qam_hard_demap(y, order: int) -> np.ndarray:
    _, table = constellation(order)
    return table[hard_symbols(y, order)].ravel()


def qam_slice(y, order: int) -> np.ndarray:
    """Hard-decided constellation points, same shape as ``y``."""
    y = np.asarray(y, dtype=complex)
    return constellation(order)[0][hard_symbols(y, order)].reshape(y.shape)


def qam_llr(y, noise_var, order: int) -> np.ndarray:
    """Max-log-MAP bit LLRs for complex noise variance ``noise_var``."""
    y = np.asarray(y, dtype=complex).ravel()
    noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), y.shape)
    if np.any(noise_var <= 0):
        raise ValueError("noise variance must be positive")
    points, table = constellation(order)
    d2 = np.abs(y[:, None] - points[None, :]) ** 2
    bps = table.shape[1]
    llr = np.empty((y.size, bps))
    for b in range(bps):
        ones = table[:, b] == 1
        llr[:, b] = d2[:, ones].min(axis=1) - d2[:, ~ones].min(axis=1)
    return (llr / noise_var[:, None]).ravel()
