import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import crandn
from otfs_hybrid.geometry import FrameGeometry
from otfs_hybrid.transforms import (CpPrecoder, cp_precode, cp_remove, dft_matrix, heisenberg,
                                    interpolate_time_zeros, isfft, replicate_doppler, unitary_dft,
                                    unvec, vec)
from otfs_hybrid.tx import ofdm_grid, otfs_grid

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_impulse_is_flat():
    np.testing.assert_allclose(unitary_dft(np.array([1, 0, 0, 0])), [0.5, 0.5, 0.5, 0.5], atol=1e-15)


def test_dft_round_trip_and_parseval(rng):
    x = crandn(rng, 8)
    assert np.max(np.abs(unitary_dft(unitary_dft(x), "inverse") - x)) < 1e-12
    y = crandn(rng, 16)
    assert abs(np.linalg.norm(y) ** 2 - np.linalg.norm(unitary_dft(y)) ** 2) < 1e-12 * np.linalg.norm(y) ** 2


def test_dft_matrix_unitary():
    F = dft_matrix(12)
    np.testing.assert_allclose(F @ F.conj().T, np.eye(12), atol=1e-13)
    with pytest.raises(ValueError):
        unitary_dft(np.ones(3), "sideways")


def test_replicate_definition():
    # two rows: a one-row grid cannot carry a CP
    g = FrameGeometry(M=2, N=4, N_dd=2, N_tf=2, L_cp=1)
    s = np.array([[1 + 2j, 3 - 1j], [0.5, -2j]])
    out = replicate_doppler(s, g)
    np.testing.assert_allclose(out, np.hstack([s, s]) / np.sqrt(2))
    assert not np.any(replicate_doppler(np.zeros((2, 2)), g))


def test_replicate_shape_check():
    g = FrameGeometry(M=2, N=4, N_dd=2, N_tf=2, L_cp=1)
    with pytest.raises(ValueError, match="replicate_doppler"):
        replicate_doppler(np.ones((2, 3)), g)


def test_isfft_round_trip_and_impulse(rng):
    a = crandn(rng, 8, 4)
    assert np.max(np.abs(isfft(isfft(a, "dd_to_tf"), "tf_to_dd") - a)) < 1e-12
    imp = np.zeros((8, 4))
    imp[0, 0] = 1
    np.testing.assert_allclose(np.abs(isfft(imp)), np.full((8, 4), 1 / np.sqrt(32)), atol=1e-15)


def test_heisenberg_round_trip_and_locality(rng):
    a = crandn(rng, 8, 4)
    assert np.max(np.abs(heisenberg(heisenberg(a), "time_to_tf", 8) - a)) < 1e-12
    one = np.zeros((8, 4), complex)
    one[:, 2] = crandn(rng, 8)
    x = heisenberg(one)
    assert x.size == 32
    assert not np.any(x[:16]) and not np.any(x[24:])
    with pytest.raises(ValueError):
        heisenberg(np.ones(10), "time_to_tf", 4)


def test_chain_leaves_ofdm_columns_empty(rng, default_geometry):
    g = default_geometry
    x = heisenberg(otfs_grid(crandn(rng, g.M, g.N_dd), g))
    assert np.max(np.abs(x[g.mask.ofdm_samples])) < 1e-12


def test_replication_equals_time_interpolation(rng, small_geometry):
    # OTFS column r*k in time equals the Doppler inverse DFT of S_dd, column k
    g = small_geometry
    s = crandn(rng, g.M, g.N_dd)
    x = heisenberg(otfs_grid(s, g)).reshape(g.M, g.N, order="F")
    ref = np.fft.ifft(s, axis=1, norm="ortho")
    np.testing.assert_allclose(x[:, list(g.mask.otfs_columns)], ref, atol=1e-12)


def test_interpolate_time_zeros():
    g = FrameGeometry(M=2, N=4, N_dd=2, N_tf=2, L_cp=1)
    c = np.array([[1, 2], [3, 4]], dtype=complex)
    out = interpolate_time_zeros(c, g)
    np.testing.assert_array_equal(out, [[0, 1, 0, 2], [0, 3, 0, 4]])
    assert not np.any(interpolate_time_zeros(np.zeros((2, 2)), g))


def test_cp_precode_impulse():
    pre = CpPrecoder(8, 2)
    s_bar = np.fft.fft(np.eye(6)[0], norm="ortho")
    t = np.fft.ifft(cp_precode(s_bar, pre), norm="ortho")
    np.testing.assert_allclose(t, [0, 0, 1, 0, 0, 0, 0, 0], atol=1e-14)


def test_cp_precode_matrix_matches(rng):
    pre = CpPrecoder(12, 3)
    s = crandn(rng, 9)
    np.testing.assert_allclose(pre.matrix() @ s, pre.precode(s), atol=1e-12)
    B = pre.cp_matrix()
    assert B.shape == (12, 9)
    np.testing.assert_array_equal(B @ np.arange(9), [6, 7, 8, 0, 1, 2, 3, 4, 5, 6, 7, 8])


def test_cp_remove():
    pre = CpPrecoder(6, 2)
    assert list(cp_remove(np.array(list("abcdef")), pre)) == list("cdef")
    assert not np.any(cp_remove(np.zeros(6), pre))
    with pytest.raises(ValueError):
        cp_remove(np.zeros(5), pre)


def test_cp_round_trip(rng):
    pre = CpPrecoder(16, 5)
    s = crandn(rng, 11)
    t = np.fft.ifft(cp_precode(s, pre), norm="ortho")
    np.testing.assert_allclose(cp_remove(t, pre), np.fft.ifft(s, norm="ortho"), atol=1e-12)


def test_cp_precode_energy(rng):
    # per-input energy depends on the CP content; the Frobenius gain is M/K
    pre = CpPrecoder(16, 4)
    P = pre.matrix()
    assert np.linalg.norm(P) ** 2 == pytest.approx(16, rel=1e-12)
    s = crandn(rng, 12, 2000)
    ratio = np.sum(np.abs(pre.precode(s)) ** 2) / np.sum(np.abs(s) ** 2)
    assert ratio == pytest.approx(16 / 12, rel=0.02)


def test_cp_precoder_rejects_bad_lengths():
    with pytest.raises(ValueError):
        CpPrecoder(8, 8)
    with pytest.raises(ValueError):
        CpPrecoder(8, 2).precode(np.ones(7))


def test_vec_unvec(rng):
    a = crandn(rng, 4, 3)
    np.testing.assert_array_equal(unvec(vec(a), 4), a)
    np.testing.assert_array_equal(vec(a)[:4], a[:, 0])


@given(st.integers(1, 32), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_zero_interpolation_identity(l, i, seed):
    s = crandn(np.random.default_rng(seed), l)
    up = np.zeros(l * i, complex)
    up[::i] = s
    lhs = unitary_dft(up, "inverse")
    rhs = np.tile(unitary_dft(s, "inverse"), i) / np.sqrt(i)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@given(st.sampled_from([(8, 4), (16, 2), (64, 16), (512, 16)]), st.integers(0, 2**32 - 1))
def test_round_trips_up_to_table_size(shape, seed):
    a = crandn(np.random.default_rng(seed), *shape)
    assert np.max(np.abs(isfft(isfft(a), "tf_to_dd") - a)) < 1e-10
    assert np.max(np.abs(heisenberg(heisenberg(a), "time_to_tf", shape[0]) - a)) < 1e-10


@given(arrays(np.float64, (8, 2), elements=finite), arrays(np.float64, (4, 2), elements=finite))
def test_components_orthogonal_in_time(dd, tf):
    g = FrameGeometry(M=8, N=4, N_dd=2, N_tf=2, L_cp=4)
    x1 = heisenberg(otfs_grid(dd.astype(complex), g))
    x2 = heisenberg(ofdm_grid(tf.astype(complex), g))
    assert abs(np.vdot(x1, x2)) < 1e-10 * max(1.0, np.linalg.norm(x1) * np.linalg.norm(x2))
