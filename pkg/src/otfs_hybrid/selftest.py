"""Fast numerical checks run by ``otfs-hybrid selftest`` (a few seconds)."""

from __future__ import annotations

import numpy as np

from .blind_ic import Hypothesis, blind_cancel
from .channel import NoiseModel, apply_channel, build_Ht, identity_channel, sample_realization
from .geometry import FrameGeometry, DEFAULT_GEOMETRY
from .ldpc import ldpc_decode, ldpc_encode, shipped_code
from .qam import qam_hard_demap, qam_slice
from .rx_ofdm import detect_ofdm_frame, stack_estimates
from .rx_otfs import build_effective_channel, detect_otfs_lmmse, tdic_cancel
from .transforms import CpPrecoder, heisenberg, isfft
from .tx import build_hybrid_frame, payload_sizes


def _transforms(rng, g):
    a = rng.standard_normal((g.M, g.N)) + 1j * rng.standard_normal((g.M, g.N))
    e1 = np.max(np.abs(isfft(isfft(a, "dd_to_tf"), "tf_to_dd") - a))
    e2 = np.max(np.abs(heisenberg(heisenberg(a), "time_to_tf", g.M) - a))
    pre = CpPrecoder(g.M, g.L_cp)
    s = rng.standard_normal(pre.K) + 1j * rng.standard_normal(pre.K)
    u = np.fft.ifft(pre.precode(s), norm="ortho")
    e3 = np.max(np.abs(np.fft.fft(pre.remove(u), norm="ortho") - s))
    err = max(e1, e2, e3)
    return err < 1e-10, f"max error {err:.2e}"


def _noiseless_hybrid(rng, g):
    n_otfs, n_ofdm = payload_sizes(g, 16, 16)
    bo, bf = rng.integers(0, 2, n_otfs), rng.integers(0, 2, n_ofdm)
    f = build_hybrid_frame(bo, bf, g)
    ch = identity_channel()
    noise = NoiseModel(1e-12)
    r = apply_channel(f.samples, ch, g)
    soft, _ = stack_estimates(detect_ofdm_frame(r, ch, g, noise))
    H_t = build_Ht(ch, g)
    clean = tdic_cancel(r, H_t, qam_slice(soft, 16), g)
    s = detect_otfs_lmmse(clean, build_effective_channel(H_t, g, ch=ch), noise).symbols
    ok = (np.array_equal(qam_hard_demap(soft.ravel(order="F"), 16), bf)
          and np.array_equal(qam_hard_demap(s.ravel(order="F"), 16), bo))
    return ok, "bit-exact" if ok else "payload mismatch"


def _channel_oracle(rng, g):
    err = 0.0
    for mode in ("linear", "cyclic"):
        ch = sample_realization("EVA", 300.0, g, rng, mode=mode)
        x = rng.standard_normal(g.num_samples) + 1j * rng.standard_normal(g.num_samples)
        err = max(err, np.max(np.abs(apply_channel(x, ch, g) - build_Ht(ch, g) @ x)))
    return err < 1e-9, f"max error {err:.2e}"


def _ldpc(rng, g):
    code = shipped_code(16384)
    m = rng.integers(0, 2, code.k)
    c = ldpc_encode(m, code)
    res = ldpc_decode(np.where(c == 0, 20.0, -20.0), code)
    ok = bool(res.converged) and np.array_equal(res.bits, m) and not np.any(code.syndrome(c))
    return ok, "round trip exact" if ok else "decode mismatch"


def _blind_singleton(rng, g):
    n_otfs, n_ofdm = payload_sizes(g, 16, 16)
    f = build_hybrid_frame(rng.integers(0, 2, n_otfs), rng.integers(0, 2, n_ofdm), g)
    ch = sample_realization("EVA", 30.0, g, rng)
    noise = NoiseModel.from_snr_db(25.0)
    r = apply_channel(f.samples, ch, g) + np.sqrt(noise.sigma2 / 2) * (
        rng.standard_normal(g.num_samples) + 1j * rng.standard_normal(g.num_samples))
    H_t = build_Ht(ch, g)
    soft, _ = stack_estimates(detect_ofdm_frame(r, ch, g, noise))
    ref = tdic_cancel(r, H_t, qam_slice(soft, 16), g)
    got = blind_cancel(r, ch, g, noise, [Hypothesis(16)], H_t).cleaned
    ok = np.array_equal(ref, got)
    return ok, "identical" if ok else "differs"


CHECKS = [("transform identities", _transforms), ("noiseless hybrid recovery", _noiseless_hybrid),
          ("apply_channel vs H_t", _channel_oracle), ("LDPC round trip", _ldpc),
          ("blind singleton equals TDIC", _blind_singleton)]


def run_all(seed: int = 0):
    g = FrameGeometry(**DEFAULT_GEOMETRY)
    rng = np.random.default_rng(seed)
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng, g)
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
