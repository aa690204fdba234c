"""Doubly-dispersive tapped-delay-line channels.

A realization is a list of taps (gain, integer sample delay, Doppler). The
same taps drive the direct time-domain evaluation, the sparse sample matrix
H_t and the ideal-pulse time-frequency view H_tf.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import FrameGeometry

SPEED_OF_LIGHT = 3e8
EDGE_MODES = ("linear", "cyclic", "block_cyclic")
PHASE_REFS = ("source", "dest")


class ChannelError(ValueError):
    pass


class ChannelEstimationError(ChannelError):
    pass


@dataclass(frozen=True)
class ChannelTap:
    gain: complex
    delay_ns: float
    delay_samples: int
    doppler_hz: float


@dataclass(frozen=True)
class ChannelRealization:
    """Taps plus frame-edge handling.

    ``mode``: ``linear`` (zero before the frame start), ``cyclic`` (indices
    wrap modulo the frame length) or ``block_cyclic`` (each M-sample column
    wraps onto itself, the ideal-CP model). ``phase_ref`` selects whether a
    tap's Doppler phase is evaluated at the source sample (default) or at the
    output sample.
    """

    taps: tuple[ChannelTap, ...]
    mode: str = "linear"
    profile: str = ""
    nu_max: float = 0.0
    phase_ref: str = "source"

    def __post_init__(self):
        if self.mode not in EDGE_MODES:
            raise ChannelError(f"unknown edge mode {self.mode!r}")
        if self.phase_ref not in PHASE_REFS:
            raise ChannelError(f"unknown phase reference {self.phase_ref!r}")

    @property
    def gains(self) -> np.ndarray:
        return np.array([t.gain for t in self.taps], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay_samples for t in self.taps], dtype=np.int64)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler_hz for t in self.taps], dtype=float)

    @property
    def max_delay(self) -> int:
        return int(self.delays.max()) if self.taps else 0

    def with_mode(self, mode: str) -> "ChannelRealization":
        return replace(self, mode=mode)


def identity_channel(mode: str = "linear") -> ChannelRealization:
    return ChannelRealization((ChannelTap(1.0 + 0j, 0.0, 0, 0.0),), mode=mode, profile="identity")


def make_channel(gains, delays_samples, dopplers_hz, geometry: FrameGeometry, mode="linear",
                 profile="custom", phase_ref="source") -> ChannelRealization:
    taps = tuple(
        ChannelTap(complex(g), float(d) * geometry.T_s * 1e9, int(d), float(nu))
        for g, d, nu in zip(np.atleast_1d(gains), np.atleast_1d(delays_samples), np.atleast_1d(dopplers_hz))
    )
    return ChannelRealization(taps, mode=mode, profile=profile, phase_ref=phase_ref)


# ------------------------------------------------------------------ profiles

def load_profile(name_or_path) -> tuple[np.ndarray, np.ndarray]:
    """Return (delays_ns, linear powers normalized to unit sum).

    Accepts a shipped profile name (EPA, EVA, ETU) or a CSV path with
    ``delay_ns`` and ``power_db`` columns.
    """
    path = Path(str(name_or_path))
    if not path.is_file():
        ref = resources.files("otfs_hybrid") / "data" / "profiles" / f"{str(name_or_path).upper()}.csv"
        if not ref.is_file():
            raise ChannelError(f"unknown channel profile {name_or_path!r}")
        text = ref.read_text()
    else:
        text = path.read_text()
    rows = list(csv.DictReader(text.splitlines()))
    if not rows:
        raise ChannelError(f"empty channel profile {name_or_path!r}")
    delays = np.array([float(r["delay_ns"]) for r in rows])
    power = 10 ** (np.array([float(r["power_db"]) for r in rows]) / 10)
    order = np.argsort(delays, kind="stable")
    return delays[order], power[order] / power.sum()


def max_doppler(velocity_kmh: float, f_c: float) -> float:
    return velocity_kmh / 3.6 * f_c / SPEED_OF_LIGHT


def sample_realization(profile, velocity_kmh: float, geometry: FrameGeometry, rng: np.random.Generator,
                       mode: str = "linear", doppler_resolution: float | None = None,
                       phase_ref: str = "source") -> ChannelRealization:
    """Rayleigh taps on the profile's delays; Doppler per tap ~ U(0, nu_max).

    With ``doppler_resolution`` the Doppler shifts are rounded onto that grid
    (on-grid channels for the pilot estimator).
    """
    if velocity_kmh < 0:
        raise ChannelError("velocity must be non-negative")
    delays_ns, power = load_profile(profile)
    nu_max = max_doppler(velocity_kmh, geometry.f_c)
    g = np.sqrt(power / 2) * (rng.standard_normal(power.size) + 1j * rng.standard_normal(power.size))
    nu = rng.uniform(0.0, nu_max, power.size) if nu_max > 0 else np.zeros(power.size)
    if doppler_resolution:
        nu = np.round(nu / doppler_resolution) * doppler_resolution
    d_samp = np.rint(delays_ns * 1e-9 * geometry.f_s).astype(np.int64)
    taps = tuple(ChannelTap(complex(a), float(dn), int(ds), float(f)) for a, dn, ds, f in zip(g, delays_ns, d_samp, nu))
    name = str(profile).upper() if not Path(str(profile)).is_file() else str(profile)
    return ChannelRealization(taps, mode=mode, profile=name, nu_max=nu_max, phase_ref=phase_ref)


def check_cp(ch: ChannelRealization, geometry: FrameGeometry) -> None:
    if geometry.N_tf and ch.max_delay >= geometry.L_cp:
        raise ChannelError(
            f"CP shorter than delay spread (L_cp={geometry.L_cp}, max delay={ch.max_delay} samples)")


# ------------------------------------------------------- time-domain coupling

def _coupling(ch: ChannelRealization, geometry: FrameGeometry):
    """Yield (dest, src, coefficient) index arrays for every tap."""
    MN, M = geometry.num_samples, geometry.M
    p = np.arange(MN)
    for t in ch.taps:
        l = t.delay_samples
        if l < 0 or l >= MN:
            raise ChannelError(f"tap delay {l} outside [0, {MN})")
        if ch.mode == "linear":
            src = p[: MN - l]
            dest = src + l
        elif ch.mode == "cyclic":
            src, dest = p, (p + l) % MN
        else:
            if l >= M:
                raise ChannelError(f"block-cyclic tap delay {l} must be < M={M}")
            src = p
            dest = (p // M) * M + (p % M + l) % M
        when = src if ch.phase_ref == "source" else dest
        coef = t.gain * np.exp(2j * np.pi * t.doppler_hz * when * geometry.T_s)
        yield dest, src, coef


def apply_channel(frame, ch: ChannelRealization, geometry: FrameGeometry) -> np.ndarray:
    """r[q] = sum_i g_i exp(j 2 pi nu_i (q - l_i) T_s) s[q - l_i]; no noise."""
    frame = np.asarray(frame, dtype=complex)
    if frame.shape != (geometry.num_samples,):
        raise ChannelError(f"frame must have {geometry.num_samples} samples, got {frame.shape}")
    out = np.zeros_like(frame)
    for dest, src, coef in _coupling(ch, geometry):
        out[dest] += coef * frame[src]  # dest is one-to-one within a tap
    return out


def build_Ht(ch: ChannelRealization, geometry: FrameGeometry) -> sp.csr_matrix:
    MN = geometry.num_samples
    parts = list(_coupling(ch, geometry))
    if not parts:
        return sp.csr_matrix((MN, MN), dtype=complex)
    rows = np.concatenate([d for d, _, _ in parts])
    cols = np.concatenate([s for _, s, _ in parts])
    vals = np.concatenate([c for _, _, c in parts])
    return sp.csr_matrix((vals, (rows, cols)), shape=(MN, MN))


def build_Htf(ch: ChannelRealization, geometry: FrameGeometry) -> np.ndarray:
    """Ideal-pulse per-bin response, Doppler phase at each symbol start."""
    M, N = geometry.M, geometry.N
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    H = np.zeros((M, N), dtype=complex)
    for t in ch.taps:
        H += (t.gain * np.exp(2j * np.pi * t.doppler_hz * n * M * geometry.T_s)
              * np.exp(-2j * np.pi * m * t.delay_samples / M))
    return H


def ofdm_freq_response(ch: ChannelRealization, n: int, geometry: FrameGeometry,
                       time_ref: str = "start") -> np.ndarray:
    """Per-subcarrier response seen by the size-(M - L_cp) OFDM DFT of column n.

    ``time_ref='start'`` evaluates Doppler at the first post-CP sample;
    ``'mid'`` at the centre of the useful part.
    """
    if not 0 <= n < geometry.N:
        raise ChannelError(f"symbol index {n} outside [0, {geometry.N})")
    K = geometry.ofdm_fft_size
    t_n = n * geometry.M + geometry.L_cp
    if time_ref == "mid":
        t_n += (K - 1) / 2
    elif time_ref != "start":
        raise ChannelError(f"unknown time reference {time_ref!r}")
    k = np.arange(K)
    h = np.zeros(K, dtype=complex)
    for t in ch.taps:
        h += (t.gain * np.exp(2j * np.pi * t.doppler_hz * t_n * geometry.T_s)
              * np.exp(-2j * np.pi * k * t.delay_samples / K))
    return h


# --------------------------------------------------------------------- noise

@dataclass(frozen=True)
class NoiseModel:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"noise variance must be positive, got {self.sigma2}")

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "NoiseModel":
        """Per-sample Es/N0 for a unit-power frame."""
        return cls(10 ** (-snr_db / 10))


def add_awgn(frame, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    frame = np.asarray(frame, dtype=complex)
    w = rng.standard_normal(frame.shape) + 1j * rng.standard_normal(frame.shape)
    return frame + np.sqrt(noise.sigma2 / 2) * w


# -------------------------------------------------------- pilot estimation

def pilot_amplitude(geometry: FrameGeometry) -> float:
    """Pulse amplitude giving the pilot frame unit average sample power."""
    return float(np.sqrt(geometry.M * geometry.N))


def build_pilot_frame(geometry: FrameGeometry, delay_bin: int = 0, doppler_bin: int = 0,
                      amplitude: float | None = None) -> np.ndarray:
    """All-OTFS frame (r = 1) with one delay-Doppler pulse and zeros elsewhere."""
    amp = pilot_amplitude(geometry) if amplitude is None else amplitude
    dd = np.zeros((geometry.M, geometry.N), dtype=complex)
    dd[delay_bin, doppler_bin] = amp
    # r = 1 OTFS: delay-time samples are the row-wise inverse DFT over Doppler
    return np.fft.ifft(dd, axis=1, norm="ortho").ravel(order="F")


@dataclass
class PilotEstimator:
    """Threshold detector on the delay-Doppler image of a pilot frame."""

    geometry: FrameGeometry
    kappa: float = 4.0
    delay_bin: int = 0
    doppler_bin: int = 0
    amplitude: float | None = None
    max_delay: int | None = None
    max_doppler_bins: int | None = None
    mode: str = "linear"

    def estimate(self, received, noise: NoiseModel) -> ChannelRealization:
        g = self.geometry
        M, N = g.M, g.N
        received = np.asarray(received, dtype=complex)
        if received.shape != (M * N,):
            raise ChannelError(f"pilot frame must have {M * N} samples")
        amp = pilot_amplitude(g) if self.amplitude is None else self.amplitude
        Y = np.fft.fft(received.reshape(M, N, order="F"), axis=1, norm="ortho")
        max_l = self.max_delay if self.max_delay is not None else max(g.L_cp, 1)
        max_k = self.max_doppler_bins if self.max_doppler_bins is not None else max(N // 4, 1)
        max_l = min(max_l, M - 1 - self.delay_bin)
        ls = np.arange(0, max_l + 1)
        ks = np.arange(-max_k, max_k + 1) if 2 * max_k + 1 <= N else np.arange(-(N // 2), N - N // 2)
        win = Y[np.ix_(self.delay_bin + ls, (self.doppler_bin + ks) % N)]
        hit_l, hit_k = np.nonzero(np.abs(win) > self.kappa * np.sqrt(noise.sigma2))
        if hit_l.size == 0:
            raise ChannelEstimationError("no delay-Doppler bin exceeds the detection threshold")
        taps = []
        res = g.f_s / (M * N)
        for il, ik in zip(hit_l, hit_k):
            l, k = int(ls[il]), int(ks[ik])
            gain = win[il, ik] / amp * np.exp(-2j * np.pi * k * self.delay_bin / (M * N))
            taps.append(ChannelTap(complex(gain), l * g.T_s * 1e9, l, k * res))
        return ChannelRealization(tuple(taps), mode=self.mode, profile="estimated")


def estimate_dd_channel(received, geometry: FrameGeometry, noise: NoiseModel, kappa: float = 4.0,
                        **kwargs) -> ChannelRealization:
    return PilotEstimator(geometry, kappa=kappa, **kwargs).estimate(received, noise)
