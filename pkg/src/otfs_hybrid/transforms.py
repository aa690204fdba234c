"""Deterministic linear maps between the delay-Doppler, time-frequency and
time domains. Every DFT here is unitary (1/sqrt(K) in both directions)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import FrameGeometry


def unitary_dft(x, direction: str = "forward", axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("DFT length must be >= 1")
    if direction == "forward":
        return np.fft.fft(x, axis=axis, norm="ortho")
    if direction == "inverse":
        return np.fft.ifft(x, axis=axis, norm="ortho")
    raise ValueError(f"unknown direction {direction!r}")


def dft_matrix(K: int) -> np.ndarray:
    """Dense unitary DFT matrix, F[k, n] = exp(-2j pi k n / K) / sqrt(K)."""
    k = np.arange(K)
    return np.exp(-2j * np.pi * np.outer(k, k) / K) / np.sqrt(K)


def _shape_check(a: np.ndarray, shape: tuple, what: str):
    if a.shape != shape:
        raise ValueError(f"{what}: expected shape {shape}, got {a.shape}")


def replicate_doppler(s_dd, geometry: FrameGeometry) -> np.ndarray:
    """Tile the M x N_dd delay-Doppler grid r times along Doppler.

    Scaled by 1/sqrt(r) so the grid energy is unchanged.
    """
    s_dd = np.asarray(s_dd, dtype=complex)
    _shape_check(s_dd, (geometry.M, geometry.N_dd), "replicate_doppler")
    return np.tile(s_dd, (1, geometry.r)) / np.sqrt(geometry.r)


def isfft(grid, direction: str = "dd_to_tf") -> np.ndarray:
    """dd_to_tf: F_M G F_N^H.  tf_to_dd: F_M^H G F_N."""
    grid = np.asarray(grid, dtype=complex)
    if grid.ndim != 2:
        raise ValueError(f"isfft expects a 2-D grid, got shape {grid.shape}")
    if direction == "dd_to_tf":
        return np.fft.ifft(np.fft.fft(grid, axis=0, norm="ortho"), axis=1, norm="ortho")
    if direction == "tf_to_dd":
        return np.fft.fft(np.fft.ifft(grid, axis=0, norm="ortho"), axis=1, norm="ortho")
    raise ValueError(f"unknown direction {direction!r}")


def heisenberg(x, direction: str = "tf_to_time", M: int | None = None) -> np.ndarray:
    """Rectangular-pulse Heisenberg transform and its inverse (Wigner).

    ``tf_to_time`` maps an M x N grid to the length-MN column-major sample
    vector; ``time_to_tf`` needs ``M`` to undo the flattening.
    """
    x = np.asarray(x, dtype=complex)
    if direction == "tf_to_time":
        if x.ndim != 2:
            raise ValueError(f"heisenberg expects an M x N grid, got shape {x.shape}")
        return np.fft.ifft(x, axis=0, norm="ortho").ravel(order="F")
    if direction == "time_to_tf":
        if M is None or x.ndim != 1 or x.size % M:
            raise ValueError(f"cannot reshape {x.shape} samples into columns of M={M}")
        return np.fft.fft(x.reshape(M, -1, order="F"), axis=0, norm="ortho")
    raise ValueError(f"unknown direction {direction!r}")


def vec(grid) -> np.ndarray:
    return np.asarray(grid).ravel(order="F")


def unvec(samples, M: int) -> np.ndarray:
    return np.asarray(samples).reshape(M, -1, order="F")


def interpolate_time_zeros(s_tf, geometry: FrameGeometry) -> np.ndarray:
    """Place the N_tf OFDM columns into the frame, zero at OTFS columns."""
    s_tf = np.asarray(s_tf, dtype=complex)
    _shape_check(s_tf, (s_tf.shape[0], geometry.N_tf), "interpolate_time_zeros")
    if s_tf.shape[0] != geometry.M:
        raise ValueError(f"interpolate_time_zeros: expected {geometry.M} rows, got {s_tf.shape[0]}")
    out = np.zeros((geometry.M, geometry.N), dtype=complex)
    out[:, list(geometry.mask.ofdm_columns)] = s_tf
    return out


@dataclass(frozen=True)
class CpPrecoder:
    """x = F_M B_cp F_{M-L}^H s_bar: embeds a CP inside a length-M symbol."""

    M: int
    L_cp: int

    def __post_init__(self):
        if not 0 < self.L_cp < self.M:
            raise ValueError(f"0 < L_cp < M violated (L_cp={self.L_cp}, M={self.M})")

    @property
    def K(self) -> int:
        return self.M - self.L_cp

    def cp_matrix(self) -> np.ndarray:
        """B_cp, the M x (M-L_cp) CP-insertion operator."""
        B = np.zeros((self.M, self.K))
        B[: self.L_cp, self.K - self.L_cp:] = np.eye(self.L_cp)
        B[self.L_cp:, :] = np.eye(self.K)
        return B

    def matrix(self) -> np.ndarray:
        return dft_matrix(self.M) @ self.cp_matrix() @ dft_matrix(self.K).conj().T

    def add_cp(self, u: np.ndarray) -> np.ndarray:
        return np.concatenate([u[self.K - self.L_cp:], u], axis=0)

    def precode(self, s_bar) -> np.ndarray:
        s_bar = np.asarray(s_bar, dtype=complex)
        if s_bar.shape[0] != self.K:
            raise ValueError(f"cp_precode: expected length {self.K}, got {s_bar.shape[0]}")
        u = np.fft.ifft(s_bar, axis=0, norm="ortho")
        return np.fft.fft(self.add_cp(u), axis=0, norm="ortho")

    def remove(self, r_n) -> np.ndarray:
        r_n = np.asarray(r_n)
        if r_n.shape[0] != self.M:
            raise ValueError(f"cp_remove: expected length {self.M}, got {r_n.shape[0]}")
        return r_n[self.L_cp:]


def cp_precode(s_bar, precoder: CpPrecoder) -> np.ndarray:
    return precoder.precode(s_bar)


def cp_remove(r_n, precoder: CpPrecoder) -> np.ndarray:
    return precoder.remove(r_n)
