"""Frame assembly: bits -> QAM -> delay-Doppler / CP-precoded grids ->
combined time-frequency grid -> time samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import FrameGeometry, OccupancyMask
from .qam import bits_per_symbol, qam_map
from .transforms import CpPrecoder, heisenberg, isfft, replicate_doppler


@dataclass(frozen=True, eq=False)
class HybridFrame:
    geometry: FrameGeometry
    mask: OccupancyMask
    s_dd: np.ndarray | None
    s_tf_raw: np.ndarray | None
    x: np.ndarray
    samples: np.ndarray
    otfs_bits: np.ndarray
    ofdm_bits: np.ndarray
    otfs_order: int
    ofdm_order: int
    kind: str = "hybrid"


def otfs_scale(geometry: FrameGeometry) -> float:
    """Amplitude factor giving OTFS columns unit expected sample power.

    Unit-energy symbols, 1/sqrt(r) replication and unitary transforms put
    M * N_dd units of energy into N_dd columns of M samples.
    """
    energy = geometry.M * geometry.N_dd
    return float(np.sqrt(geometry.M * geometry.N_dd / energy))


def ofdm_scale(geometry: FrameGeometry) -> float:
    """Amplitude factor giving CP-precoded columns unit expected sample power.

    The CP repeats L_cp of the K = M - L_cp unit-power samples.
    """
    energy = geometry.ofdm_fft_size + geometry.L_cp
    return float(np.sqrt(geometry.M / energy))


def place_columns(values: np.ndarray, columns, M: int, N: int) -> np.ndarray:
    out = np.zeros((M, N), dtype=complex)
    out[:, list(columns)] = values
    return out


def otfs_grid(s_dd: np.ndarray, geometry: FrameGeometry) -> np.ndarray:
    """Time-frequency grid of the OTFS component (nonzero on OTFS columns)."""
    return otfs_scale(geometry) * isfft(replicate_doppler(s_dd, geometry), "dd_to_tf")


def ofdm_grid(s_tf_raw: np.ndarray, geometry: FrameGeometry, mask: OccupancyMask | None = None) -> np.ndarray:
    """Time-frequency grid of the CP-precoded OFDM component.

    Shared by the transmitter and by interference reconstruction at the
    receiver so the two always apply identical scaling.
    """
    mask = geometry.mask if mask is None else mask
    pre = CpPrecoder(geometry.M, geometry.L_cp)
    cols = ofdm_scale(geometry) * pre.precode(np.asarray(s_tf_raw, dtype=complex))
    return place_columns(cols, mask.ofdm_columns, geometry.M, geometry.N)


def payload_sizes(geometry: FrameGeometry, otfs_order: int, ofdm_order: int,
                  mask: OccupancyMask | None = None) -> tuple[int, int]:
    mask = geometry.mask if mask is None else mask
    n_otfs = geometry.M * len(mask.otfs_columns) * bits_per_symbol(otfs_order)
    n_ofdm = geometry.ofdm_fft_size * len(mask.ofdm_columns) * bits_per_symbol(ofdm_order) if mask.ofdm_columns else 0
    return n_otfs, n_ofdm


def _map(bits, count: int, order: int, what: str) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    need = count * bits_per_symbol(order)
    if bits.size != need:
        raise ValueError(f"bit-count mismatch for {what}: got {bits.size}, need {need}")
    return qam_map(bits, order)


def build_hybrid_frame(otfs_bits, ofdm_bits, geometry: FrameGeometry, otfs_order: int = 16,
                       ofdm_order: int = 16) -> HybridFrame:
    g = geometry
    K = g.ofdm_fft_size
    s_dd = _map(otfs_bits, g.M * g.N_dd, otfs_order, "OTFS").reshape(g.M, g.N_dd, order="F")
    x = otfs_grid(s_dd, g)
    s_tf_raw = None
    if g.N_tf:
        s_tf_raw = _map(ofdm_bits, K * g.N_tf, ofdm_order, "OFDM").reshape(K, g.N_tf, order="F")
        x = x + ofdm_grid(s_tf_raw, g)
    elif np.asarray(ofdm_bits).size:
        raise ValueError("bit-count mismatch for OFDM: frame has no OFDM columns")
    return HybridFrame(g, g.mask, s_dd, s_tf_raw, x, heisenberg(x, "tf_to_time"),
                       np.asarray(otfs_bits, dtype=np.uint8).ravel(),
                       np.asarray(ofdm_bits, dtype=np.uint8).ravel(), otfs_order, ofdm_order)


def build_standalone(kind: str, bits, geometry: FrameGeometry, order: int = 16) -> HybridFrame:
    """Baseline frame with every column given to one waveform."""
    g = geometry
    empty = np.zeros(0, dtype=np.uint8)
    if kind == "otfs":
        g1 = g.standalone_otfs()
        f = build_hybrid_frame(bits, empty, g1, order, order)
        return HybridFrame(g1, g1.mask, f.s_dd, None, f.x, f.samples, f.otfs_bits, empty, order, order, "otfs")
    if kind == "ofdm":
        mask = OccupancyMask.all_ofdm(g.M, g.N)
        K = g.ofdm_fft_size
        s_tf_raw = _map(bits, K * g.N, order, "OFDM").reshape(K, g.N, order="F")
        x = ofdm_grid(s_tf_raw, g, mask)
        return HybridFrame(g, mask, None, s_tf_raw, x, heisenberg(x, "tf_to_time"), empty,
                           np.asarray(bits, dtype=np.uint8).ravel(), order, order, "ofdm")
    raise ValueError(f"unknown standalone kind {kind!r}")
