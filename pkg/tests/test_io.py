import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chanaug.io import (TensorFileError, load_sf_weights, read_tensor, read_wav, save_sf_weights,
                        tensor_from_bytes, tensor_to_bytes, write_tensor, write_wav)
from chanaug.sf import SfWeights
from chanaug.spectral import Waveform

from conftest import crandn

DTYPES = [np.float32, np.float64, np.complex64, np.complex128]


class TestTensorFile:
    def test_header_layout(self):
        blob = tensor_to_bytes(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert blob[:4] == b"MCTF"
        assert struct.unpack_from("<HBB", blob, 4) == (1, 0, 2)
        assert struct.unpack_from("<2Q", blob, 8) == (2, 3)
        assert len(blob) == 8 + 16 + 6 * 4
        assert np.frombuffer(blob[24:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]

    @pytest.mark.parametrize("dtype", DTYPES)
    def test_round_trip_file(self, tmp_path, rng, dtype):
        a = crandn(rng, 3, 4, 5)
        a = (a if np.dtype(dtype).kind == "c" else a.real).astype(dtype)
        write_tensor(tmp_path / "t.mctf", a)
        b = read_tensor(tmp_path / "t.mctf")
        assert b.dtype == a.dtype and b.shape == a.shape
        np.testing.assert_array_equal(a, b)

    @settings(max_examples=50, deadline=None)
    @given(shape=st.lists(st.integers(0, 4), min_size=0, max_size=4),
           dtype=st.sampled_from(DTYPES), seed=st.integers(0, 1000))
    def test_round_trip_any_shape(self, shape, dtype, seed):
        rng = np.random.default_rng(seed)
        a = crandn(rng, *shape)
        a = (a if np.dtype(dtype).kind == "c" else a.real).astype(dtype)
        b = tensor_from_bytes(tensor_to_bytes(a))
        assert b.shape == a.shape and b.dtype == a.dtype
        np.testing.assert_array_equal(a, b)

    def test_defaults_for_other_dtypes(self):
        assert tensor_from_bytes(tensor_to_bytes(np.array([True, False]))).dtype == np.float32
        assert tensor_from_bytes(tensor_to_bytes(np.arange(3))).dtype == np.float64
        with pytest.raises(TensorFileError):
            tensor_to_bytes(np.array(["a"]))

    def test_rejects_bad_headers(self):
        good = tensor_to_bytes(np.zeros(3))
        with pytest.raises(TensorFileError, match="magic"):
            tensor_from_bytes(b"NOPE" + good[4:])
        with pytest.raises(TensorFileError, match="version"):
            tensor_from_bytes(good[:4] + struct.pack("<H", 2) + good[6:])
        with pytest.raises(TensorFileError, match="dtype"):
            tensor_from_bytes(good[:6] + bytes([9]) + good[7:])
        with pytest.raises(TensorFileError, match="payload"):
            tensor_from_bytes(good[:-1])

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        write_tensor(tmp_path / "a.mctf", np.zeros(2))
        assert os.listdir(tmp_path) == ["a.mctf"]

    def test_sf_weights(self, tmp_path, rng):
        W = SfWeights(crandn(rng, 5, 3, 4), crandn(rng, 5, 3))
        save_sf_weights(tmp_path / "w.mctf", W)
        V = load_sf_weights(tmp_path / "w.mctf")
        np.testing.assert_array_equal(V.w, W.w)
        np.testing.assert_array_equal(V.b, W.b)


class TestWav:
    @pytest.mark.parametrize("C", [1, 2, 16])
    def test_float32_lossless(self, tmp_path, rng, C):
        x = rng.uniform(-1, 1, (C, 1000)).astype(np.float32).astype(np.float64)
        write_wav(tmp_path / "a.wav", Waveform(x, 16000))
        y = read_wav(tmp_path / "a.wav")
        assert y.sample_rate == 16000
        np.testing.assert_array_equal(y.samples, x)
        write_wav(tmp_path / "b.wav", y)
        assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()

    def test_pcm16(self, tmp_path, rng):
        x = rng.uniform(-0.9, 0.9, (3, 500))
        write_wav(tmp_path / "a.wav", Waveform(x, 8000), "pcm16")
        y = read_wav(tmp_path / "a.wav")
        assert np.abs(y.samples - x).max() <= 0.5 / 32768 + 1e-12
        assert y.sample_rate == 8000

    def test_errors(self, tmp_path):
        with pytest.raises(ValueError):
            read_wav(tmp_path / "missing.wav")
        (tmp_path / "junk.wav").write_bytes(b"not a wav file")
        with pytest.raises(ValueError):
            read_wav(tmp_path / "junk.wav")
        with pytest.raises(ValueError):
            write_wav(tmp_path / "x.wav", Waveform(np.zeros(4), 16000), "mp3")
