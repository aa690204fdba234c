"""Monte-Carlo link simulation: trials, SNR sweeps and result files.

Random streams are keyed on (seed, frame index, role), so a frame sees the
same bits, channel and unit noise at every SNR point and speed, and the
outcome of a sweep does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .blind_ic import Hypothesis, blind_cancel
from .channel import (ChannelEstimationError, NoiseModel, PilotEstimator, add_awgn, apply_channel,
                      build_Ht, build_Htf, build_pilot_frame, identity_channel, sample_realization)
from .geometry import FrameGeometry, DEFAULT_GEOMETRY
from .ldpc import ldpc_decode, ldpc_encode, lifting_size, shipped_code
from .qam import bits_per_symbol, qam_hard_demap, qam_llr, qam_map, qam_slice
from .rx_ofdm import detect_ofdm_frame, ici_power, stack_estimates
from .rx_otfs import (build_effective_channel, detect_otfs_lmmse, detect_otfs_mrc_dfe, tdic_cancel,
                      tfds_bias, tfds_equalize, tfds_extract_dd)
from .transforms import heisenberg
from .tx import build_hybrid_frame, build_standalone, ofdm_grid, otfs_grid, payload_sizes

RECEIVERS = ("tfds", "tdic", "blind_tdic", "genie_tdic")
DETECTORS = ("lmmse", "mrc_dfe")
MAX_CODEWORD = 16384
_ROLES = {"bits": 1, "channel": 2, "noise": 3, "pilot": 4, "blind": 5}


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    geometry: dict = field(default_factory=lambda: dict(DEFAULT_GEOMETRY))
    channel: str = "EVA"
    velocities: list = field(default_factory=lambda: [300.0])
    snr_db: list = field(default_factory=lambda: [14.0, 18.0, 22.0, 26.0])
    receiver: str = "tdic"
    detector: str = "lmmse"
    csi: str = "perfect"
    coding: str = "none"
    frame: str = "hybrid"
    otfs_order: int = 16
    ofdm_order: int = 16
    frames: int = 10
    target_errors: int = 500
    min_bits: int = 0
    seed: int = 1
    workers: int = 1
    edge_mode: str = "linear"
    phase_ref: str = "source"
    ofdm_time_ref: str = "mid"
    collect_spill: bool = True
    doppler_on_grid: bool = False
    pilot_kappa: float = 4.0
    pool: list = field(default_factory=lambda: [{"order": 4}, {"order": 16}, {"order": 64}])
    ldpc_iters: int = 50
    mrc_iters: int = 15
    cg_tol: float = 1e-6

    def __post_init__(self):
        self.velocities = [float(v) for v in np.atleast_1d(self.velocities)]
        self.snr_db = [float(s) for s in np.atleast_1d(self.snr_db)]
        checks = [("receiver", RECEIVERS), ("detector", DETECTORS), ("csi", ("perfect", "estimated")),
                  ("coding", ("none", "ldpc")), ("frame", ("hybrid", "standalone")),
                  ("edge_mode", ("linear", "cyclic", "block_cyclic")), ("ofdm_time_ref", ("start", "mid"))]
        for name, allowed in checks:
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.frames < 1 or self.workers < 1:
            raise ConfigError("frames and workers must be positive")
        if not self.pool:
            raise ConfigError("hypothesis pool is empty")
        self.frame_geometry()

    def frame_geometry(self) -> FrameGeometry:
        return FrameGeometry(**self.geometry)

    def hypotheses(self) -> list[Hypothesis]:
        out = []
        for h in self.pool:
            cols = h.get("columns")
            out.append(Hypothesis(int(h["order"]), None if cols is None else tuple(int(c) for c in cols),
                                  h.get("name", "")))
        return out

    def replace(self, **changes) -> "SimConfig":
        d = asdict(self)
        d.update({k: v for k, v in changes.items() if v is not None})
        return SimConfig(**d)

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw = dict(raw)
        if "geometry" in raw:
            raw["geometry"] = {**DEFAULT_GEOMETRY, **raw["geometry"]}
        return cls(**raw)

    @classmethod
    def from_yaml(cls, path=None) -> "SimConfig":
        if path is None:
            text = (resources.files("otfs_hybrid") / "data" / "default.yaml").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(yaml.safe_load(text) or {})


@dataclass
class FrameCounts:
    otfs_bits: int = 0
    otfs_errors: int = 0
    otfs_info_bits: int = 0
    otfs_info_errors: int = 0
    ofdm_bits: int = 0
    ofdm_errors: int = 0
    ofdm_info_bits: int = 0
    ofdm_info_errors: int = 0
    blind_trials: int = 0
    blind_correct: int = 0
    estimation_failures: int = 0
    frames: int = 0

    def __add__(self, other: "FrameCounts") -> "FrameCounts":
        return FrameCounts(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})


@dataclass
class BerRecord:
    snr_db: float
    velocity_kmh: float
    channel: str
    frame: str
    receiver: str
    detector: str
    csi: str
    coding: str
    otfs_raw_ber: float
    otfs_coded_ber: float
    ofdm_raw_ber: float
    ofdm_coded_ber: float
    otfs_bits: int
    otfs_errors: int
    otfs_info_bits: int
    otfs_info_errors: int
    ofdm_bits: int
    ofdm_errors: int
    ofdm_info_bits: int
    ofdm_info_errors: int
    frames: int
    seed: int
    blind_accuracy: float = float("nan")
    estimation_failures: int = 0


def _ratio(a: int, b: int) -> float:
    return a / b if b else float("nan")


def _rng(seed: int, index: int, role: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index, _ROLES[role]]))


# ----------------------------------------------------------------- coding

def codeword_layout(capacity: int) -> tuple[int, int]:
    """(codeword length, count) filling ``capacity`` bits with as few codewords
    of at most MAX_CODEWORD bits as possible; leftover bits are padding."""
    count = max(1, math.ceil(capacity / MAX_CODEWORD))
    n = capacity // count
    for step in (512, 256, 128, 64, 32, 16):
        m = n - n % step
        if m >= 6 * step // 2 and m > 0:
            n = m
            break
    lifting_size(n)
    return n, count


@dataclass
class Payload:
    tx_bits: np.ndarray
    info_bits: np.ndarray | None = None
    n: int = 0
    count: int = 0
    perm: np.ndarray | None = None


def make_payload(capacity: int, coding: str, rng: np.random.Generator) -> Payload:
    if coding == "none":
        return Payload(rng.integers(0, 2, capacity, dtype=np.uint8))
    n, count = codeword_layout(capacity)
    code = shipped_code(n)
    info = rng.integers(0, 2, (count, code.k), dtype=np.uint8)
    coded = np.concatenate([ldpc_encode(m, code) for m in info]
                           + [rng.integers(0, 2, capacity - n * count, dtype=np.uint8)])
    perm = np.random.default_rng(capacity).permutation(capacity)
    return Payload(coded[perm], info, n, count, perm)


def decode_payload(llr: np.ndarray, payload: Payload, iters: int) -> int:
    """Information-bit errors after deinterleaving and decoding."""
    code = shipped_code(payload.n)
    deint = np.empty_like(llr)
    deint[payload.perm] = llr
    errors = 0
    for i in range(payload.count):
        res = ldpc_decode(deint[i * payload.n:(i + 1) * payload.n], code, max_iters=iters)
        errors += int(np.sum(res.bits != payload.info_bits[i]))
    return errors


def _score(counts: FrameCounts, prefix: str, soft, noise_var, order: int, payload: Payload,
           cfg: SimConfig) -> None:
    soft = np.asarray(soft).ravel(order="F")
    bits = qam_hard_demap(soft, order)
    setattr(counts, f"{prefix}_bits", payload.tx_bits.size)
    setattr(counts, f"{prefix}_errors", int(np.sum(bits != payload.tx_bits)))
    if cfg.coding == "ldpc":
        nv = np.maximum(np.asarray(noise_var, dtype=float).ravel(order="F"), 1e-12)
        llr = qam_llr(soft, nv, order)
        setattr(counts, f"{prefix}_info_bits", payload.info_bits.size)
        setattr(counts, f"{prefix}_info_errors", decode_payload(llr, payload, cfg.ldpc_iters))


def _fail(counts: FrameCounts, prefix: str, payload: Payload) -> None:
    setattr(counts, f"{prefix}_bits", payload.tx_bits.size)
    setattr(counts, f"{prefix}_errors", payload.tx_bits.size // 2)
    if payload.info_bits is not None:
        setattr(counts, f"{prefix}_info_bits", payload.info_bits.size)
        setattr(counts, f"{prefix}_info_errors", payload.info_bits.size // 2)


# ----------------------------------------------------------------- trials

def _channel(cfg: SimConfig, g: FrameGeometry, index: int, velocity: float):
    if cfg.channel.lower() == "identity":
        return identity_channel(cfg.edge_mode)
    res = g.f_s / (g.M * g.N) if cfg.doppler_on_grid else None
    return sample_realization(cfg.channel, velocity, g, _rng(cfg.seed, index, "channel"), mode=cfg.edge_mode,
                              doppler_resolution=res, phase_ref=cfg.phase_ref)


def _receiver_csi(cfg: SimConfig, g: FrameGeometry, ch, noise: NoiseModel, index: int):
    """The channel the receiver works with: the truth, or a pilot-frame estimate."""
    if cfg.csi == "perfect":
        return ch
    pilot = build_pilot_frame(g)
    rp = add_awgn(apply_channel(pilot, ch, g), noise, _rng(cfg.seed, index, "pilot"))
    est = PilotEstimator(g, kappa=cfg.pilot_kappa, max_delay=max(g.L_cp - 1, 0), mode=ch.mode)
    return est.estimate(rp, noise)


def _ofdm_soft(r, ch_rx, g, noise, mask, cfg):
    est = detect_ofdm_frame(r, ch_rx, g, noise, mask=mask, time_ref=cfg.ofdm_time_ref)
    soft, var = stack_estimates(est)
    var = var * (noise.sigma2 + ici_power(ch_rx, g)) / noise.sigma2
    return soft, var


def _otfs_detect(r_clean, H_t, ch_rx, g, mask, noise, cfg):
    eff = build_effective_channel(H_t, g, mask, ch_rx, collect_spill=cfg.collect_spill)
    if cfg.detector == "lmmse":
        res = detect_otfs_lmmse(r_clean, eff, noise, tol=cfg.cg_tol)
        beta = eff.bias(noise)
        return res.symbols / beta, (1 - beta) / beta
    res = detect_otfs_mrc_dfe(r_clean, eff, noise, order=cfg.otfs_order, max_iters=cfg.mrc_iters)
    return res.symbols, res.noise_var


def _tfds(r, ch_rx, g, mask, noise, order):
    h_tf = build_Htf(ch_rx, g)
    y = tfds_extract_dd(tfds_equalize(r, h_tf, noise), g, mask).y_dd / tfds_bias(h_tf, noise, g)
    return y, float(np.mean(np.abs(y - qam_slice(y, order)) ** 2))


def run_trial(cfg: SimConfig, frame_index: int, snr_db: float | None = None,
              velocity: float | None = None) -> FrameCounts:
    """Simulate one frame and count raw and decoded bit errors per component."""
    snr_db = cfg.snr_db[0] if snr_db is None else snr_db
    velocity = cfg.velocities[0] if velocity is None else velocity
    g = cfg.frame_geometry()
    noise = NoiseModel.from_snr_db(snr_db)
    ch = _channel(cfg, g, frame_index, velocity)
    counts = FrameCounts(frames=1)
    rng_bits = _rng(cfg.seed, frame_index, "bits")
    try:
        ch_rx = _receiver_csi(cfg, g, ch, noise, frame_index)
    except ChannelEstimationError:
        ch_rx = None
        counts.estimation_failures = 1

    def receive(samples, geometry):
        rx = apply_channel(samples, ch, geometry)
        return add_awgn(rx, noise, _rng(cfg.seed, frame_index, "noise"))

    if cfg.frame == "standalone":
        g1 = g.standalone_otfs()
        n_otfs = g.M * g.N * bits_per_symbol(cfg.otfs_order)
        n_ofdm = g.ofdm_fft_size * g.N * bits_per_symbol(cfg.ofdm_order)
        p_otfs = make_payload(n_otfs, cfg.coding, rng_bits)
        p_ofdm = make_payload(n_ofdm, cfg.coding, rng_bits)
        f_otfs = build_standalone("otfs", p_otfs.tx_bits, g, cfg.otfs_order)
        f_ofdm = build_standalone("ofdm", p_ofdm.tx_bits, g, cfg.ofdm_order)
        if ch_rx is None:
            _fail(counts, "otfs", p_otfs)
            _fail(counts, "ofdm", p_ofdm)
            return counts
        r_otfs = receive(f_otfs.samples, g1)
        if cfg.receiver == "tfds":
            soft, nv = _tfds(r_otfs, ch_rx, g1, g1.mask, noise, cfg.otfs_order)
        else:
            soft, nv = _otfs_detect(r_otfs, build_Ht(ch_rx, g1), ch_rx, g1, g1.mask, noise, cfg)
        _score(counts, "otfs", soft, nv, cfg.otfs_order, p_otfs, cfg)
        mask = f_ofdm.mask
        soft, var = _ofdm_soft(receive(f_ofdm.samples, g), ch_rx, g, noise, mask, cfg)
        _score(counts, "ofdm", soft, var, cfg.ofdm_order, p_ofdm, cfg)
        return counts

    n_otfs, n_ofdm = payload_sizes(g, cfg.otfs_order, cfg.ofdm_order)
    p_otfs = make_payload(n_otfs, cfg.coding, rng_bits)
    p_ofdm = make_payload(n_ofdm, cfg.coding, rng_bits)
    frame = build_hybrid_frame(p_otfs.tx_bits, p_ofdm.tx_bits, g, cfg.otfs_order, cfg.ofdm_order)
    if ch_rx is None:
        _fail(counts, "otfs", p_otfs)
        _fail(counts, "ofdm", p_ofdm)
        return counts
    r = receive(frame.samples, g)
    mask = g.mask
    soft_f, var_f = _ofdm_soft(r, ch_rx, g, noise, mask, cfg)
    _score(counts, "ofdm", soft_f, var_f, cfg.ofdm_order, p_ofdm, cfg)

    if cfg.receiver == "tfds":
        soft, nv = _tfds(r, ch_rx, g, mask, noise, cfg.otfs_order)
    else:
        H_t = build_Ht(ch_rx, g)
        if cfg.receiver == "genie_tdic":
            r_clean = tdic_cancel(r, H_t, frame.s_tf_raw, g, mask)
        elif cfg.receiver == "tdic":
            r_clean = tdic_cancel(r, H_t, qam_slice(soft_f, cfg.ofdm_order), g, mask)
        else:
            res = blind_cancel(r, ch_rx, g, noise, cfg.hypotheses(), H_t, cfg.ofdm_time_ref, mask)
            r_clean = res.cleaned
            counts.blind_trials = 1
            counts.blind_correct = int(res.hypothesis.order == cfg.ofdm_order and res.hypothesis.columns is None)
        soft, nv = _otfs_detect(r_clean, H_t, ch_rx, g, mask, noise, cfg)
    _score(counts, "otfs", soft, nv, cfg.otfs_order, p_otfs, cfg)
    return counts


def blind_trial(cfg: SimConfig, index: int, snr_db: float, velocity: float,
                truth: int | None = None) -> tuple[int, int]:
    """Transmit one pool configuration (drawn at random unless ``truth`` is
    given) and run blind selection.

    Returns (true pool index, chosen pool index). Unoccupied OFDM columns
    carry zeros.
    """
    g = cfg.frame_geometry()
    pool = cfg.hypotheses()
    rng = _rng(cfg.seed, index, "blind")
    drawn = int(rng.integers(len(pool)))
    truth = drawn if truth is None else truth
    hyp = pool[truth]
    K, mask = g.ofdm_fft_size, g.mask
    s_dd = qam_map(rng.integers(0, 2, g.M * g.N_dd * bits_per_symbol(cfg.otfs_order)), cfg.otfs_order)
    s_tf = qam_map(rng.integers(0, 2, K * g.N_tf * bits_per_symbol(hyp.order)), hyp.order).reshape(K, g.N_tf, order="F")
    if hyp.columns is not None:
        s_tf[:, ~np.isin(np.asarray(mask.ofdm_columns), hyp.columns)] = 0.0
    x = otfs_grid(s_dd.reshape(g.M, g.N_dd, order="F"), g) + ofdm_grid(s_tf, g)
    noise = NoiseModel.from_snr_db(snr_db)
    ch = _channel(cfg, g, index, velocity)
    r = add_awgn(apply_channel(heisenberg(x, "tf_to_time"), ch, g), noise, _rng(cfg.seed, index, "noise"))
    ch_rx = _receiver_csi(cfg, g, ch, noise, index)
    res = blind_cancel(r, ch_rx, g, noise, pool, time_ref=cfg.ofdm_time_ref)
    return truth, res.index


# ----------------------------------------------------------------- sweeps

def _trial_args(args):
    cfg, index, snr, v = args
    return run_trial(cfg, index, snr, v)


def _done(total: FrameCounts, cfg: SimConfig) -> bool:
    if cfg.target_errors <= 0:
        return False
    key = "info_errors" if cfg.coding == "ldpc" else "errors"
    parts = [p for p in ("otfs", "ofdm") if getattr(total, f"{p}_bits")]
    errors = min(getattr(total, f"{p}_{key}") for p in parts)
    bits = min(getattr(total, f"{p}_bits") for p in parts)
    return errors >= cfg.target_errors and bits >= cfg.min_bits


def run_point(cfg: SimConfig, snr_db: float, velocity: float, executor=None) -> FrameCounts:
    """Accumulate frames 0, 1, ... until the stop rule or the frame budget.

    The rule is checked after every frame in index order, so parallel
    batches give the same totals as a serial run.
    """
    total = FrameCounts()
    batch = cfg.workers if executor is not None else 1
    index = 0
    while index < cfg.frames:
        idx = range(index, min(index + batch, cfg.frames))
        args = [(cfg, i, snr_db, velocity) for i in idx]
        results = executor.map(_trial_args, args) if executor is not None else map(_trial_args, args)
        for c in results:
            total = total + c
            index += 1
            if _done(total, cfg):
                return total
    return total


def to_record(cfg: SimConfig, snr_db: float, velocity: float, c: FrameCounts) -> BerRecord:
    return BerRecord(snr_db, velocity, cfg.channel, cfg.frame, cfg.receiver, cfg.detector, cfg.csi, cfg.coding,
                     _ratio(c.otfs_errors, c.otfs_bits), _ratio(c.otfs_info_errors, c.otfs_info_bits),
                     _ratio(c.ofdm_errors, c.ofdm_bits), _ratio(c.ofdm_info_errors, c.ofdm_info_bits),
                     c.otfs_bits, c.otfs_errors, c.otfs_info_bits, c.otfs_info_errors,
                     c.ofdm_bits, c.ofdm_errors, c.ofdm_info_bits, c.ofdm_info_errors, c.frames, cfg.seed,
                     _ratio(c.blind_correct, c.blind_trials), c.estimation_failures)


def run_sweep(cfg: SimConfig, progress=None) -> list[BerRecord]:
    records = []
    executor = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for v in cfg.velocities:
            for snr in cfg.snr_db:
                rec = to_record(cfg, snr, v, run_point(cfg, snr, v, executor))
                records.append(rec)
                if progress:
                    progress(rec)
    finally:
        if executor is not None:
            executor.shutdown()
    return records


# ---------------------------------------------------------------- results

def emit_results(records: list[BerRecord], path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    rows = [asdict(r) for r in records]
    if fmt == "json":
        path.write_text(json.dumps(rows, indent=1))
    elif fmt == "csv":
        names = [f.name for f in fields(BerRecord)]
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names)
            w.writeheader()
            w.writerows(rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def load_results(path) -> list[BerRecord]:
    path = Path(path)
    if path.suffix == ".json":
        rows = json.loads(path.read_text())
    else:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    types = {f.name: f.type for f in fields(BerRecord)}
    conv = {"float": float, "int": int, "str": str}
    return [BerRecord(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rows]


def crossing_snr(snr_db, ber, target: float, floor=None) -> float | None:
    """First SNR where the BER curve drops to ``target``, interpolating
    linearly in log10(BER). None if the curve never gets there.

    Zero BER points are replaced by ``floor`` (scalar or per point, e.g.
    half a counted error); without a floor they end the interpolation at
    that grid point.
    """
    snr = np.asarray(snr_db, dtype=float)
    b = np.asarray(ber, dtype=float).copy()
    if floor is not None:
        b = np.where(b > 0, b, np.broadcast_to(np.asarray(floor, dtype=float), b.shape))
    for i in range(len(snr)):
        if b[i] <= target:
            if i == 0:
                return float(snr[0]) if b[0] == target else None
            hi, lo = b[i - 1], b[i]
            if lo <= 0:
                return float(snr[i])
            t = (math.log10(hi) - math.log10(target)) / (math.log10(hi) - math.log10(lo))
            return float(snr[i - 1] + t * (snr[i] - snr[i - 1]))
    return None
