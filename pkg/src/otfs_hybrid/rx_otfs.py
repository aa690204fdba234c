"""OTFS receivers for the hybrid frame.

TFDS equalizes element-wise on the time-frequency grid and masks out the
OFDM columns. TDIC rebuilds the decided OFDM signal through H_t and
subtracts it in the time domain, after which a delay-Doppler detector
(LMMSE or MRC rake DFE) runs on the OTFS samples only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .channel import ChannelRealization, NoiseModel
from .geometry import FrameGeometry, OccupancyMask
from .qam import qam_slice
from .transforms import heisenberg, isfft
from .tx import ofdm_grid, otfs_scale


@dataclass
class DdEstimate:
    y_dd: np.ndarray
    method: str
    residual_energy: float = 0.0
    iterations: int = 0
    converged: bool = True


# --------------------------------------------------------------------- TFDS

def tfds_equalize(r, h_tf, noise: NoiseModel) -> np.ndarray:
    """Element-wise MMSE on the grid: conj(H) * F_M R / (|H|^2 + sigma^2)."""
    h_tf = np.asarray(h_tf, dtype=complex)
    if not noise.sigma2 > 0:
        raise ValueError("noise variance must be positive")
    M = h_tf.shape[0]
    R = np.asarray(r, dtype=complex).reshape(M, -1, order="F")
    if R.shape != h_tf.shape:
        raise ValueError(f"received grid {R.shape} does not match H_tf {h_tf.shape}")
    Y = np.fft.fft(R, axis=0, norm="ortho")
    return np.conj(h_tf) * Y / (np.abs(h_tf) ** 2 + noise.sigma2)


def tfds_extract_dd(y_hat, geometry: FrameGeometry, mask: OccupancyMask | None = None) -> DdEstimate:
    """Zero the OFDM columns, go to delay-Doppler, keep Doppler bins [0, N_dd)."""
    mask = geometry.mask if mask is None else mask
    Z = np.array(y_hat, dtype=complex)
    Z[:, list(mask.ofdm_columns)] = 0.0
    full = isfft(Z, "tf_to_dd")
    y_dd = full[:, : geometry.N_dd] * np.sqrt(geometry.r) / otfs_scale(geometry)
    return DdEstimate(y_dd, "tfds")


def tfds_bias(h_tf, noise: NoiseModel, geometry: FrameGeometry) -> float:
    """Average MMSE shrinkage over the OTFS columns."""
    p = np.abs(np.asarray(h_tf)[:, list(geometry.mask.otfs_columns)]) ** 2
    return float(np.mean(p / (p + noise.sigma2)))


# --------------------------------------------------------------------- TDIC

def ofdm_interference(H_t, s_tf_hat, geometry: FrameGeometry, mask: OccupancyMask | None = None) -> np.ndarray:
    """Delta r = H_t vec(F_M^H X_tf) for decided OFDM symbols."""
    x_tf = ofdm_grid(s_tf_hat, geometry, mask)
    return H_t @ heisenberg(x_tf, "tf_to_time")


def tdic_cancel(r, H_t, s_tf_hat, geometry: FrameGeometry, mask: OccupancyMask | None = None) -> np.ndarray:
    """Subtract the reconstructed OFDM contribution from the received frame.

    ``s_tf_hat`` holds the decided pre-precoding OFDM symbols
    ((M - L_cp) x number of OFDM columns); precoding and power scaling go
    through the transmitter's own code path.
    """
    r = np.asarray(r, dtype=complex)
    if s_tf_hat is None or np.size(s_tf_hat) == 0:
        return r.copy()
    return r - ofdm_interference(H_t, s_tf_hat, geometry, mask)


def tdic_extract_dd(r_clean, geometry: FrameGeometry, mask: OccupancyMask | None = None) -> DdEstimate:
    """Unequalized delay-Doppler samples F_M^H vec^-1(r - Delta r) F_N."""
    Y = np.fft.fft(np.asarray(r_clean).reshape(geometry.M, -1, order="F"), axis=0, norm="ortho")
    est = tfds_extract_dd(Y, geometry, mask)
    est.method = "tdic"
    return est


# ------------------------------------------------------- effective channel

@dataclass
class EffectiveChannel:
    """Map from the M x N_o OTFS delay-Doppler symbols to received samples.

    Stored factored: ``A = B T`` with ``B`` the columns of H_t at OTFS
    sample positions (restricted to ``rows``) and ``T`` the (scaled unitary)
    transmit chain, which on the occupied columns is an inverse DFT across
    Doppler.
    """

    B: sp.csr_matrix
    M: int
    N_o: int
    scale: float
    rows: np.ndarray = field(repr=False)
    frame_len: int = 0
    h_tf: np.ndarray | None = field(default=None, repr=False)

    def observe(self, r) -> np.ndarray:
        """Pick this operator's rows out of a full received frame."""
        r = np.asarray(r, dtype=complex)
        return r[self.rows] if r.size == self.frame_len else r

    @property
    def size(self) -> int:
        return self.M * self.N_o

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows.size, self.size)

    def tx_chain(self, s_dd) -> np.ndarray:
        s_dd = np.asarray(s_dd, dtype=complex).reshape(self.M, self.N_o, order="F")
        return self.scale * np.fft.ifft(s_dd, axis=1, norm="ortho").ravel(order="F")

    def tx_chain_adjoint(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex).reshape(self.M, self.N_o, order="F")
        return self.scale * np.fft.fft(z, axis=1, norm="ortho").ravel(order="F")

    def matvec(self, s_dd) -> np.ndarray:
        return self.B @ self.tx_chain(s_dd)

    def rmatvec(self, y) -> np.ndarray:
        return self.tx_chain_adjoint(self.B.conj().T @ y)

    def matrix(self) -> sp.csr_matrix:
        """Materialized sparse A (M N_o x M N_o)."""
        F = np.fft.ifft(np.eye(self.N_o), axis=0, norm="ortho")
        T = self.scale * sp.kron(sp.csr_matrix(F), sp.identity(self.M), format="csr")
        return (self.B @ T).tocsr()

    def bias(self, noise: NoiseModel) -> float:
        """Average LMMSE shrinkage, from the ideal-pulse per-bin response."""
        if self.h_tf is None:
            d = np.asarray(abs(self.B).power(2).sum(axis=0)).ravel() * self.scale**2
            return float(np.mean(d / (d + noise.sigma2)))
        p = self.scale**2 * np.abs(self.h_tf) ** 2
        return float(np.mean(p / (p + noise.sigma2)))


def build_effective_channel(H_t, geometry: FrameGeometry, mask: OccupancyMask | None = None,
                            ch: ChannelRealization | None = None, collect_spill: bool = True) -> EffectiveChannel:
    """RowSelect * H_t * ColumnEmbed(OTFS) * TxChain.

    With ``collect_spill=False`` the rows are exactly the OTFS sample
    positions. Otherwise they are every row H_t reaches from an OTFS column,
    which adds the delayed tail each CP-free OTFS column spills into the
    head of the following column; after TDIC those samples hold only OTFS
    energy and noise. Leakage from OFDM columns is excluded by construction
    either way. ``ch`` (optional) supplies the per-bin response used for
    preconditioning and bias estimates.
    """
    mask = geometry.mask if mask is None else mask
    idx = mask.otfs_samples
    Hc = sp.csr_matrix(H_t)[:, idx]
    if collect_spill:
        rows = np.union1d(idx, np.unique(Hc.nonzero()[0]))
    else:
        rows = idx
    B = Hc[rows].tocsr()
    h_tf = None
    if ch is not None:
        h_tf = _column_response(ch, geometry, mask)
    return EffectiveChannel(B, geometry.M, len(mask.otfs_columns), otfs_scale(geometry), rows,
                            geometry.num_samples, h_tf)


def _column_response(ch: ChannelRealization, geometry: FrameGeometry, mask: OccupancyMask) -> np.ndarray:
    """Per-subcarrier response of each OTFS column, Doppler at mid-column."""
    M = geometry.M
    m = np.arange(M)[:, None]
    t = (np.asarray(mask.otfs_columns)[None, :] * M + (M - 1) / 2) * geometry.T_s
    H = np.zeros((M, len(mask.otfs_columns)), dtype=complex)
    for tap in ch.taps:
        H += tap.gain * np.exp(2j * np.pi * tap.doppler_hz * t) * np.exp(-2j * np.pi * m * tap.delay_samples / M)
    return H


# ----------------------------------------------------------------- LMMSE

@dataclass
class DetectorResult:
    symbols: np.ndarray
    converged: bool
    iterations: int
    residual: float
    noise_var: float | None = None


def _pcg(apply_A, b, apply_P, tol: float, max_iter: int):
    """Preconditioned conjugate gradients; returns the best iterate seen."""
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, True, 0, 0.0
    r = b.copy()
    z = apply_P(r)
    p = z.copy()
    rz = np.vdot(r, z)
    best, best_res = x.copy(), 1.0
    for it in range(1, max_iter + 1):
        Ap = apply_A(p)
        alpha = rz / np.vdot(p, Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res < best_res:
            best, best_res = x.copy(), res
        if res < tol:
            return x, True, it, res
        z = apply_P(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return best, False, max_iter, best_res


def detect_otfs_lmmse(r_clean, eff: EffectiveChannel, noise: NoiseModel, tol: float = 1e-6,
                      max_iter: int = 200, precondition: str | None = "block") -> DetectorResult:
    """Solve (A^H A + sigma^2 I) s = A^H y on the OTFS samples of ``r_clean``.

    The iteration runs in the delay-time basis (A = B T with T a scaled
    unitary map), where the normal matrix is sparse. Iterates and residual
    norms are those of conjugate gradients on the delay-Doppler system.

    ``precondition``: ``"block"`` factors each OTFS column's own normal
    matrix (exact when columns do not couple, i.e. r >= 2), ``"circulant"``
    uses the ideal-pulse per-bin response, ``None`` runs plain CG.
    """
    y = eff.observe(r_clean)
    c2 = eff.scale**2
    B, BH = eff.B, eff.B.conj().T.tocsr()
    b = eff.scale * (BH @ y)

    def normal(z):
        return c2 * (BH @ (B @ z)) + noise.sigma2 * z

    precond = _preconditioner(eff, noise, precondition)
    z, ok, it, res = _pcg(normal, b, precond, tol, max_iter)
    s = eff.tx_chain_adjoint(z) / eff.scale
    return DetectorResult(s.reshape(eff.M, eff.N_o, order="F"), ok, it, float(res))


def _preconditioner(eff: EffectiveChannel, noise: NoiseModel, kind: str | None):
    M, N_o, c2 = eff.M, eff.N_o, eff.scale**2
    if kind is None:
        return lambda v: v
    if kind == "circulant":
        if eff.h_tf is None:
            raise ValueError("circulant preconditioner needs the channel taps")
        inv = 1.0 / (c2 * np.abs(eff.h_tf) ** 2 + noise.sigma2)

        def apply(v):
            V = v.reshape(M, N_o, order="F")
            return np.fft.ifft(np.fft.fft(V, axis=0) * inv, axis=0).ravel(order="F")
        return apply
    if kind == "block":
        factors = []
        Bc = eff.B.tocsc()
        for k in range(N_o):
            blk = Bc[:, k * M:(k + 1) * M]
            G = c2 * (blk.conj().T @ blk).toarray() + noise.sigma2 * np.eye(M)
            factors.append(cho_factor(G, lower=True, check_finite=False))

        def apply(v):
            V = v.reshape(M, N_o, order="F")
            out = np.empty_like(V)
            for k, f in enumerate(factors):
                out[:, k] = cho_solve(f, V[:, k], check_finite=False)
            return out.ravel(order="F")
        return apply
    raise ValueError(f"unknown preconditioner {kind!r}")


# ---------------------------------------------------------------- MRC-DFE

def detect_otfs_mrc_dfe(r_clean, eff: EffectiveChannel, noise: NoiseModel, order: int = 16,
                        max_iters: int = 15, tol: float = 1e-4, omega: float = 0.25) -> DetectorResult:
    """Iterative rake decision-feedback detector with maximum-ratio combining.

    Each sweep visits the delay bins in order; all Doppler-time samples of a
    delay bin are refined at once by combining the channel branches that
    carry them (their rows are disjoint). After a sweep the delay-time
    estimate is taken to delay-Doppler, sliced, and the decisions are fed
    back with weight ``omega``. Returns the soft delay-Doppler symbols from
    the final sweep, before slicing.
    """
    y = eff.observe(r_clean)
    M, N_o, c = eff.M, eff.N_o, eff.scale
    Bc = eff.B.tocsc()
    groups = []
    for l in range(M):
        cols = l + M * np.arange(N_o)
        sub = Bc[:, cols]
        d = np.asarray(abs(sub).power(2).sum(axis=0)).ravel()
        groups.append((cols, sub.tocsr(), sub.conj().T.tocsr(), np.where(d > 0, d, np.inf)))
    z = np.zeros(M * N_o, dtype=complex)
    dy = y.copy()
    soft = np.zeros((M, N_o), dtype=complex)
    converged, it = False, 0
    for it in range(1, max_iters + 1):
        z_prev = z.copy()
        for cols, sub, subH, d in groups:
            delta = (subH @ dy) / d
            z[cols] += delta
            dy -= sub @ delta
        soft = np.fft.fft(z.reshape(M, N_o, order="F"), axis=1, norm="ortho") / c
        hard = qam_slice(soft, order)
        z_fb = (1 - omega) * z + omega * c * np.fft.ifft(hard, axis=1, norm="ortho").ravel(order="F")
        dy -= eff.B @ (z_fb - z)
        z = z_fb
        change = np.linalg.norm(z - z_prev) / max(np.linalg.norm(z), 1e-300)
        # stop once decisions stop moving or already explain the observation
        if change < tol or np.linalg.norm(dy) <= tol * np.linalg.norm(y):
            converged = True
            break
    nv = float(np.mean(np.abs(soft - qam_slice(soft, order)) ** 2))
    return DetectorResult(soft, converged, it, float(np.linalg.norm(dy) / max(np.linalg.norm(y), 1e-300)),
                          noise_var=max(nv, 1e-12))
