"""Blind OFDM interference cancellation over a small configuration pool.

Each hypothesis fixes the OFDM modulation order and which OFDM columns
are occupied. The receiver decides the OFDM symbols under every
hypothesis, rebuilds their contribution through H_t and keeps the
hypothesis that leaves the least energy on the OFDM sample positions.
Only the samples after each CP are scored: the delayed tail of the
preceding CP-free OTFS column lands inside the CP and would add the same
energy to every hypothesis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, NoiseModel, build_Ht
from .geometry import FrameGeometry
from .qam import bits_per_symbol, qam_slice
from .rx_ofdm import detect_ofdm_frame, stack_estimates
from .rx_otfs import ofdm_interference


@dataclass(frozen=True)
class Hypothesis:
    order: int
    columns: tuple[int, ...] | None = None  # None: every OFDM column
    name: str = ""

    def __post_init__(self):
        bits_per_symbol(self.order)

    @property
    def label(self) -> str:
        return self.name or f"{self.order}QAM" + ("" if self.columns is None else f"@{list(self.columns)}")


@dataclass
class BlindResult:
    hypothesis: Hypothesis
    index: int
    cleaned: np.ndarray
    scores: list[dict]


def decide_ofdm(estimates, hyp: Hypothesis, geometry: FrameGeometry, mask=None) -> np.ndarray:
    """Hard decisions under ``hyp``; unoccupied columns are left at zero."""
    mask = geometry.mask if mask is None else mask
    soft, _ = stack_estimates(estimates)
    dec = qam_slice(soft, hyp.order)
    if hyp.columns is not None:
        keep = np.isin(np.asarray(mask.ofdm_columns), hyp.columns)
        dec[:, ~keep] = 0.0
    return dec


def scored_samples(geometry: FrameGeometry, mask=None) -> np.ndarray:
    """Post-CP sample indices of every OFDM column."""
    mask = geometry.mask if mask is None else mask
    cols = np.asarray(mask.ofdm_columns, dtype=np.int64)
    return (cols[:, None] * geometry.M + np.arange(geometry.L_cp, geometry.M)[None, :]).ravel()


def blind_cancel(r, ch: ChannelRealization, geometry: FrameGeometry, noise: NoiseModel,
                 pool: list[Hypothesis], H_t=None, time_ref: str = "start", mask=None) -> BlindResult:
    """Pick the pool entry whose reconstruction best explains the OFDM samples.

    Ties go to the lower modulation order, then to the earlier pool entry.
    """
    if not pool:
        raise ValueError("hypothesis pool is empty")
    mask = geometry.mask if mask is None else mask
    for h in pool:
        if h.columns is not None and not set(h.columns) <= set(mask.ofdm_columns):
            raise ValueError(f"hypothesis {h.label} occupies non-OFDM columns")
    r = np.asarray(r, dtype=complex)
    H_t = build_Ht(ch, geometry) if H_t is None else H_t
    estimates = detect_ofdm_frame(r, ch, geometry, noise, mask=mask, time_ref=time_ref)
    pos = scored_samples(geometry, mask)
    scores, cleaned = [], []
    for i, h in enumerate(pool):
        clean = r - ofdm_interference(H_t, decide_ofdm(estimates, h, geometry, mask), geometry, mask)
        scores.append({"index": i, "hypothesis": h.label, "order": h.order,
                       "score": float(np.sum(np.abs(clean[pos]) ** 2))})
        cleaned.append(clean)
    best = min(scores, key=lambda s: (s["score"], s["order"], s["index"]))["index"]
    return BlindResult(pool[best], best, cleaned[best], scores)
