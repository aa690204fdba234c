"""Symbol-by-symbol OFDM detection with a single-tap MMSE equalizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, NoiseModel, check_cp, ofdm_freq_response
from .geometry import FrameGeometry, OccupancyMask
from .transforms import CpPrecoder
from .tx import ofdm_scale

_TINY = 1e-300


@dataclass
class OfdmSymbolEstimate:
    soft_symbols: np.ndarray
    post_eq_noise_var: np.ndarray
    symbol_index: int
    bias: np.ndarray

    def unbiased(self) -> tuple[np.ndarray, np.ndarray]:
        """Symbols divided by the MMSE bias and their noise variance.

        Bins with a null channel come back as zero with a huge variance.
        """
        ok = self.bias > 1e-12
        sym = np.where(ok, self.soft_symbols / np.where(ok, self.bias, 1.0), 0.0)
        var = np.where(ok, self.post_eq_noise_var / np.where(ok, self.bias, 1.0) ** 2, 1e12)
        return sym, np.maximum(var, _TINY)


def detect_ofdm_symbol(r_n, h_n, noise: NoiseModel, L_cp: int, symbol_index: int = 0,
                       scale: float = 1.0) -> OfdmSymbolEstimate:
    """x = conj(h) * DFT(cp_remove(r_n)) / (|h|^2 + sigma^2)."""
    r_n = np.asarray(r_n, dtype=complex)
    h_n = np.asarray(h_n, dtype=complex)
    if not noise.sigma2 > 0:
        raise ValueError("noise variance must be positive")
    pre = CpPrecoder(r_n.size, L_cp)
    if h_n.size != pre.K:
        raise ValueError(f"channel response length {h_n.size} != {pre.K}")
    y = np.fft.fft(pre.remove(r_n), norm="ortho") / scale
    sigma2 = noise.sigma2 / scale**2
    p = np.abs(h_n) ** 2
    den = p + sigma2
    x_hat = np.conj(h_n) * y / den
    var = sigma2 * p / den**2
    return OfdmSymbolEstimate(x_hat, var, symbol_index, p / den)


def detect_ofdm_frame(r, ch: ChannelRealization, geometry: FrameGeometry, noise: NoiseModel,
                      mask: OccupancyMask | None = None, time_ref: str = "start") -> list[OfdmSymbolEstimate]:
    """Run the single-tap detector on every OFDM column of the frame."""
    mask = geometry.mask if mask is None else mask
    check_cp(ch, geometry)
    r = np.asarray(r, dtype=complex)
    scale = ofdm_scale(geometry)
    out = []
    for n in mask.ofdm_columns:
        h = ofdm_freq_response(ch, n, geometry, time_ref)
        out.append(detect_ofdm_symbol(r[mask.column_samples(n)], h, noise, geometry.L_cp, n, scale))
    return out


def stack_estimates(estimates: list[OfdmSymbolEstimate]) -> tuple[np.ndarray, np.ndarray]:
    """(K x N_tf unbiased symbols, matching noise variances) in column order."""
    if not estimates:
        return np.zeros((0, 0), complex), np.zeros((0, 0))
    pairs = [e.unbiased() for e in estimates]
    return np.stack([p[0] for p in pairs], axis=1), np.stack([p[1] for p in pairs], axis=1)


def ici_power(ch: ChannelRealization, geometry: FrameGeometry) -> float:
    """Average inter-carrier interference power after CP removal.

    Each tap keeps the fraction |a|^2 of its power on the desired bin, where
    a is the mean of its Doppler phasor over the K retained samples.
    """
    K = geometry.ofdm_fft_size
    t = np.arange(K) * geometry.T_s
    total = 0.0
    for tap in ch.taps:
        a = np.mean(np.exp(2j * np.pi * tap.doppler_hz * t))
        total += abs(tap.gain) ** 2 * (1.0 - abs(a) ** 2)
    return float(total)
