import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from conftest import crandn
from otfs_hybrid.channel import (ChannelError, ChannelEstimationError, NoiseModel, PilotEstimator, add_awgn,
                                 apply_channel, build_Ht, build_Htf, build_pilot_frame, check_cp,
                                 estimate_dd_channel, identity_channel, load_profile, make_channel,
                                 max_doppler, ofdm_freq_response, sample_realization)
from otfs_hybrid.geometry import FrameGeometry
from otfs_hybrid.transforms import CpPrecoder


def test_max_doppler_at_300kmh():
    assert max_doppler(300, 28e9) == pytest.approx(7777.8, abs=0.1)


def test_static_velocity_has_no_doppler(default_geometry, rng):
    ch = sample_realization("EVA", 0.0, default_geometry, rng)
    assert not np.any(ch.dopplers)


@pytest.mark.parametrize("name, taps, max_delay", [("EPA", 7, 13), ("EVA", 9, 77), ("ETU", 9, 154)])
def test_shipped_profiles(name, taps, max_delay, default_geometry, rng):
    delays, power = load_profile(name)
    assert delays.size == taps and power.sum() == pytest.approx(1.0)
    ch = sample_realization(name, 30.0, default_geometry, rng)
    assert ch.max_delay == max_delay
    assert np.all(ch.dopplers >= 0) and np.all(ch.dopplers <= ch.nu_max)


def test_custom_profile_file(tmp_path, default_geometry, rng):
    p = tmp_path / "two.csv"
    p.write_text("delay_ns,power_db\n100,-3\n0,0\n")
    delays, power = load_profile(p)
    np.testing.assert_allclose(delays, [0, 100])
    np.testing.assert_allclose(power, np.array([1, 10 ** -0.3]) / (1 + 10 ** -0.3))
    assert sample_realization(p, 3.0, default_geometry, rng).delays.tolist() == [0, 3]
    with pytest.raises(ChannelError, match="unknown channel profile"):
        load_profile("XYZ")


def test_on_grid_dopplers(default_geometry, rng):
    g = default_geometry
    res = g.f_s / (g.M * g.N)
    ch = sample_realization("EVA", 300.0, g, rng, doppler_resolution=res)
    np.testing.assert_allclose(ch.dopplers / res, np.round(ch.dopplers / res), atol=1e-9)


def test_identity_and_shift(small_geometry, rng):
    g = small_geometry
    x = crandn(rng, g.num_samples)
    np.testing.assert_array_equal(apply_channel(x, identity_channel(), g), x)
    y = apply_channel(x, make_channel([1.0], [3], [0.0], g), g)
    np.testing.assert_array_equal(y[:3], 0)
    np.testing.assert_array_equal(y[3:], x[:-3])
    assert (build_Ht(identity_channel(), g) != sp.identity(g.num_samples)).nnz == 0


def test_doppler_phase_rides_the_delayed_signal(small_geometry):
    g = small_geometry
    nu = 1234.5
    x = np.ones(g.num_samples, complex)
    y = apply_channel(x, make_channel([1.0], [2], [nu], g), g)
    q = np.arange(2, g.num_samples)
    np.testing.assert_allclose(y[2:], np.exp(2j * np.pi * nu * (q - 2) * g.T_s))
    y = apply_channel(x, make_channel([1.0], [2], [nu], g, phase_ref="dest"), g)
    np.testing.assert_allclose(y[2:], np.exp(2j * np.pi * nu * q * g.T_s))


@given(st.integers(0, 2**32 - 1), st.sampled_from(["linear", "cyclic", "block_cyclic"]))
def test_apply_equals_matrix(seed, mode):
    rng = np.random.default_rng(seed)
    g = FrameGeometry(M=32, N=4, N_dd=2, N_tf=2, L_cp=8)
    k = int(rng.integers(1, 5))
    ch = make_channel(crandn(rng, k), rng.integers(0, 20, k), rng.uniform(-5e3, 5e3, k), g, mode=mode)
    x = crandn(rng, g.num_samples)
    assert np.max(np.abs(apply_channel(x, ch, g) - build_Ht(ch, g) @ x)) < 1e-9


def test_zero_doppler_block_cyclic_is_circulant_per_column(small_geometry, rng):
    g = small_geometry
    ch = make_channel(crandn(rng, 3), [0, 2, 5], [0, 0, 0], g, mode="block_cyclic")
    H = build_Ht(ch, g).toarray()
    F = np.fft.fft(np.eye(g.M), norm="ortho")
    Htf = build_Htf(ch, g)
    for n in range(g.N):
        blk = H[n * g.M:(n + 1) * g.M, n * g.M:(n + 1) * g.M]
        np.testing.assert_allclose(blk, np.roll(np.roll(blk, 1, 0), 1, 1), atol=1e-14)
        np.testing.assert_allclose(F @ blk @ F.conj().T, np.diag(Htf[:, n]), atol=1e-12)
    off = H.copy()
    for n in range(g.N):
        off[n * g.M:(n + 1) * g.M, n * g.M:(n + 1) * g.M] = 0
    assert not np.any(off)


def test_htf_examples(small_geometry):
    g = small_geometry
    np.testing.assert_array_equal(build_Htf(identity_channel(), g), np.ones((g.M, g.N)))
    H = build_Htf(make_channel([1.0], [3], [0.0], g), g)
    np.testing.assert_allclose(H, H[:, :1] * np.ones((1, g.N)))
    np.testing.assert_allclose(H[:, 0], np.exp(-2j * np.pi * np.arange(g.M) * 3 / g.M))


def test_ofdm_response_equalizes_static_channel(rng):
    g = FrameGeometry(M=64, N=4, N_dd=2, N_tf=2, L_cp=16)
    pre = CpPrecoder(g.M, g.L_cp)
    np.testing.assert_array_equal(ofdm_freq_response(identity_channel(), 1, g), np.ones(48))
    ch = make_channel([1.0, 0.5j], [0, 7], [0, 0], g)
    s = crandn(rng, 48)
    frame = np.zeros(g.num_samples, complex)
    frame[64:128] = np.fft.ifft(pre.precode(s), norm="ortho")
    r = apply_channel(frame, ch, g)
    y = np.fft.fft(pre.remove(r[64:128]), norm="ortho")
    np.testing.assert_allclose(y / ofdm_freq_response(ch, 1, g), s, atol=1e-9)
    with pytest.raises(ChannelError):
        ofdm_freq_response(ch, 9, g)


def test_cp_guard(default_geometry, rng):
    ch = sample_realization("ETU", 30.0, FrameGeometry(M=512, N=16, N_dd=8, N_tf=8, L_cp=100), rng)
    with pytest.raises(ChannelError, match="CP shorter than delay spread"):
        check_cp(ch, FrameGeometry(M=512, N=16, N_dd=8, N_tf=8, L_cp=100))
    check_cp(ch, default_geometry)


def test_energy_preserved_on_average():
    g = FrameGeometry(M=128, N=4, N_dd=2, N_tf=2, L_cp=16)
    rng = np.random.default_rng(7)
    x = crandn(rng, g.num_samples)
    ratio = [np.linalg.norm(apply_channel(x, sample_realization("EVA", 300.0, g, rng, mode="cyclic"), g)) ** 2
             for _ in range(10_000)]
    assert np.mean(ratio) / np.linalg.norm(x) ** 2 == pytest.approx(1.0, abs=0.02)


def test_noise():
    x = np.ones(16, complex)
    np.testing.assert_allclose(add_awgn(x, NoiseModel(1e-30), np.random.default_rng(0)), x, atol=1e-12)
    w = add_awgn(np.zeros(1_000_000), NoiseModel(1.0), np.random.default_rng(0))
    assert np.var(w) == pytest.approx(1.0, abs=0.01)
    a = add_awgn(x, NoiseModel(0.1), np.random.default_rng(5))
    np.testing.assert_array_equal(a, add_awgn(x, NoiseModel(0.1), np.random.default_rng(5)))
    assert NoiseModel.from_snr_db(20).sigma2 == pytest.approx(0.01)
    with pytest.raises(ValueError):
        NoiseModel(0.0)


def test_edge_mode_validation():
    with pytest.raises(ChannelError):
        identity_channel("wrapped")


# ----------------------------------------------------------------- pilot

def test_pilot_frame_unit_power(default_geometry):
    p = build_pilot_frame(default_geometry)
    assert np.mean(np.abs(p) ** 2) == pytest.approx(1.0)


def test_pilot_recovers_on_grid_tap(default_geometry):
    g = default_geometry
    res = g.f_s / (g.M * g.N)
    ch = make_channel([0.6 - 0.3j], [5], [2 * res], g)
    est = estimate_dd_channel(apply_channel(build_pilot_frame(g), ch, g), g, NoiseModel(1e-20))
    assert len(est.taps) == 1
    t = est.taps[0]
    assert abs(t.gain - (0.6 - 0.3j)) < 1e-6
    assert t.delay_samples == 5 and t.doppler_hz == pytest.approx(2 * res)


def test_pilot_identity(default_geometry):
    g = default_geometry
    est = PilotEstimator(g).estimate(build_pilot_frame(g), NoiseModel(1e-20))
    assert len(est.taps) == 1
    assert est.taps[0].gain == pytest.approx(1.0) and est.taps[0].delay_samples == 0
    assert est.taps[0].doppler_hz == 0


def test_pilot_off_origin_and_negative_doppler(default_geometry, rng):
    g = default_geometry
    res = g.f_s / (g.M * g.N)
    ch = make_channel([0.8, 0.4j], [0, 30], [-res, 3 * res], g)
    pe = PilotEstimator(g, delay_bin=10, doppler_bin=5)
    rx = apply_channel(build_pilot_frame(g, 10, 5), ch, g)
    est = pe.estimate(rx, NoiseModel(1e-20))
    got = sorted((t.delay_samples, round(t.doppler_hz / res), t.gain) for t in est.taps)
    assert [(d, k) for d, k, _ in got] == [(0, -1), (30, 3)]
    np.testing.assert_allclose([gn for *_, gn in got], [0.8, 0.4j], atol=1e-9)


def test_pure_noise_rarely_passes_threshold(default_geometry):
    g = default_geometry
    empty = 0
    for seed in range(40):
        w = add_awgn(np.zeros(g.num_samples), NoiseModel(1.0), np.random.default_rng(seed))
        try:
            PilotEstimator(g, kappa=3.0).estimate(w, NoiseModel(1.0))
        except ChannelEstimationError:
            empty += 1
    assert empty >= 28


def test_pilot_shape_check(default_geometry):
    with pytest.raises(ChannelError):
        PilotEstimator(default_geometry).estimate(np.zeros(10), NoiseModel(1.0))
