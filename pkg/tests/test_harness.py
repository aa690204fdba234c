import math

import numpy as np
import pytest

from otfs_hybrid.harness import (BerRecord, ConfigError, FrameCounts, SimConfig, codeword_layout, crossing_snr,
                                 emit_results, load_results, make_payload, run_point, run_sweep, run_trial)


def quick(**kw):
    base = dict(frames=2, target_errors=0, snr_db=[20.0], velocities=[300.0])
    base.update(kw)
    return SimConfig(**base)


def test_default_config_geometry():
    cfg = SimConfig.from_yaml()
    g = cfg.frame_geometry()
    assert (g.M, g.N, g.N_dd, g.N_tf, g.L_cp) == (512, 16, 8, 8, 160)
    assert g.delta_f == 60e3 and g.f_c == 28e9
    assert cfg.target_errors == 500 and cfg.receiver == "tdic"


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        SimConfig.from_dict({"snr": [1]})
    with pytest.raises(ConfigError, match="receiver"):
        SimConfig(receiver="zf")
    with pytest.raises(ConfigError):
        SimConfig(frames=0)
    with pytest.raises(ValueError):
        SimConfig(geometry=dict(M=512, N=16, N_dd=5, N_tf=11))
    p = tmp_path / "c.yaml"
    p.write_text("channel: ETU\ngeometry: {L_cp: 200}\nsnr_db: 12\n")
    cfg = SimConfig.from_yaml(p)
    assert cfg.channel == "ETU" and cfg.frame_geometry().L_cp == 200 and cfg.snr_db == [12.0]
    assert cfg.replace(seed=9, frames=None).seed == 9


def test_identity_noiseless_has_no_errors():
    for kw in (dict(), dict(receiver="tfds"), dict(frame="standalone"), dict(coding="ldpc")):
        c = run_trial(quick(channel="identity", **kw), 0, 300.0)
        assert c.otfs_errors == 0 and c.ofdm_errors == 0 and c.otfs_info_errors == 0


def test_trial_is_deterministic():
    cfg = quick(receiver="blind_tdic")
    assert run_trial(cfg, 3) == run_trial(cfg, 3)
    assert run_trial(cfg, 3) != run_trial(cfg, 4)


def test_counts_bounded_by_payload():
    c = run_trial(quick(channel="EPA", geometry=dict(M=512, N=16, N_dd=8, N_tf=8, L_cp=64)), 0, 10.0)
    assert (c.otfs_bits, c.ofdm_bits) == (16384, 14336)
    assert 0 < c.otfs_errors < c.otfs_bits and 0 < c.ofdm_errors < c.ofdm_bits


def test_guessing_floor():
    rec = run_sweep(quick(snr_db=[-20.0], frames=3))[0]
    assert rec.otfs_raw_ber == pytest.approx(0.5, abs=0.05)
    assert rec.ofdm_raw_ber == pytest.approx(0.5, abs=0.05)


def test_sweep_two_points_monotone():
    recs = run_sweep(quick(snr_db=[12.0, 24.0], frames=10))
    assert len(recs) == 2
    assert recs[0].otfs_raw_ber > recs[1].otfs_raw_ber
    assert recs[0].ofdm_raw_ber > recs[1].ofdm_raw_ber
    for r in recs:
        assert r.otfs_bits > 0 and 0 <= r.otfs_raw_ber <= 1


def test_stop_rule():
    cfg = quick(snr_db=[10.0], frames=50, target_errors=500, min_bits=30000)
    total = run_point(cfg, 10.0, 300.0)
    # 500 errors arrive in the first frame, the OFDM bit floor (11264 per frame) needs three
    assert total.frames == 3
    assert run_point(cfg.replace(min_bits=0), 10.0, 300.0).frames == 1


def test_worker_count_does_not_change_results(tmp_path):
    cfg = quick(snr_db=[14.0, 18.0], frames=4, target_errors=300)
    a = emit_results(run_sweep(cfg), tmp_path / "a.csv")
    b = emit_results(run_sweep(cfg.replace(workers=2)), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_tdic_not_worse_than_tfds():
    cfg = quick(snr_db=[22.0], frames=6)
    tdic = run_sweep(cfg)[0]
    tfds = run_sweep(cfg.replace(receiver="tfds"))[0]
    sigma = math.sqrt(tfds.otfs_raw_ber * (1 - tfds.otfs_raw_ber) / tfds.otfs_bits)
    assert tdic.otfs_raw_ber <= tfds.otfs_raw_ber + 2 * sigma


def test_results_round_trip(tmp_path):
    recs = run_sweep(quick(frames=1))
    p = emit_results(recs, tmp_path / "r.csv")
    assert len(p.read_text().strip().splitlines()) == 2
    back = load_results(p)
    for a, b in zip(back, recs):
        for key, val in b.__dict__.items():
            got = getattr(a, key)
            if isinstance(val, float):
                assert got == pytest.approx(val, nan_ok=True), key
            else:
                assert got == val, key
    j = emit_results(recs, tmp_path / "r.json")
    assert load_results(j)[0].otfs_errors == recs[0].otfs_errors
    with pytest.raises(ValueError):
        emit_results(recs, tmp_path / "r.txt", "xml")


def test_record_fields():
    names = BerRecord.__dataclass_fields__
    for key in ("snr_db", "velocity_kmh", "channel", "receiver", "detector", "csi", "frame",
                "otfs_raw_ber", "otfs_coded_ber", "ofdm_raw_ber", "ofdm_coded_ber", "otfs_bits", "seed"):
        assert key in names
    assert FrameCounts(otfs_bits=2) + FrameCounts(otfs_bits=3) == FrameCounts(otfs_bits=5)


def test_codeword_layout():
    assert codeword_layout(16384) == (16384, 1)
    assert codeword_layout(11264) == (11264, 1)
    assert codeword_layout(32768) == (16384, 2)
    assert codeword_layout(22528) == (11264, 2)
    n, count = codeword_layout(14336)
    assert n * count <= 14336 and n % 2 == 0


def test_payload_interleaves_codewords(rng):
    p = make_payload(16384, "ldpc", rng)
    assert p.tx_bits.size == 16384 and p.info_bits.shape == (1, 8192)
    assert not np.array_equal(p.tx_bits[:8192], p.info_bits[0])
    assert make_payload(100, "none", rng).info_bits is None


def test_crossing_snr():
    snr = [10, 12, 14]
    assert crossing_snr(snr, [1e-1, 1e-2, 1e-3], 1e-2) == pytest.approx(12.0)
    assert crossing_snr(snr, [1e-1, 1e-2, 1e-3], math.sqrt(1e-3)) == pytest.approx(11.0)
    assert crossing_snr(snr, [1e-1, 5e-2, 2e-2], 1e-2) is None
    assert crossing_snr(snr, [1e-1, 1e-3, 0.0], 1e-4) == pytest.approx(14.0)
    assert crossing_snr(snr, [1e-1, 1e-3, 0.0], 1e-4, floor=1e-5) == pytest.approx(13.0)
    assert crossing_snr(snr, [1e-3, 1e-4, 0.0], 1e-2) is None


@pytest.mark.parametrize("kw", [dict(detector="mrc_dfe"), dict(csi="estimated"), dict(receiver="genie_tdic")])
def test_receiver_variants_run(kw):
    c = run_trial(quick(**kw), 0, 24.0)
    assert c.otfs_errors < 0.1 * c.otfs_bits
