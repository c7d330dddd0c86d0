import numpy as np
import pytest

from chanaug.features import cmn, features, hz_to_mel, log_mel, mel_filterbank, mel_to_hz
from chanaug.spectral import StftConfig


class TestMel:
    def test_scale_round_trip(self):
        f = np.array([0.0, 20.0, 700.0, 1000.0, 7600.0])
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)
        assert hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2))

    def test_filterbank_shape_and_support(self):
        fb = mel_filterbank()
        assert fb.shape == (80, 257)
        assert np.all(fb >= 0) and fb.max() <= 1
        assert np.all(fb.sum(axis=1) > 0)  # every band sees at least one bin
        freqs = StftConfig().bin_frequencies(16000)
        assert not np.any(fb[:, freqs < 20]) and not np.any(fb[:, freqs > 7600])

    def test_band_centres_increase(self):
        fb = mel_filterbank(40)
        assert np.all(np.diff(np.argmax(fb, axis=1)) >= 0)

    def test_bad_range(self):
        with pytest.raises(ValueError):
            mel_filterbank(f_low=100, f_high=50)
        with pytest.raises(ValueError):
            mel_filterbank(n_mels=0)


class TestLogMel:
    def test_against_loop(self, rng):
        fb = mel_filterbank(8, StftConfig(64, 16), 16000, 20, 7600)
        p = rng.uniform(0, 1, (5, 33))
        out = log_mel(p, fb)
        for t in range(5):
            for m in range(8):
                assert out[t, m] == pytest.approx(np.log(max(np.dot(fb[m], p[t]), 1e-10)))

    def test_floor(self):
        fb = mel_filterbank()
        np.testing.assert_allclose(log_mel(np.zeros((2, 257)), fb, 1e-3), np.log(1e-3))
        with pytest.raises(ValueError):
            log_mel(np.zeros((2, 257)), fb, 0)

    def test_white_spectrum_positive_in_all_bands(self):
        fb = mel_filterbank()
        energy = np.ones((3, 257)) @ fb.T
        assert np.all(energy > 0)

    def test_cmn(self, rng):
        f = cmn(rng.standard_normal((50, 80)) + 3)
        np.testing.assert_allclose(f.mean(axis=0), 0, atol=1e-12)
        with pytest.raises(ValueError):
            cmn(np.zeros((0, 3)))

    def test_features_gain_invariant(self, rng):
        p = rng.uniform(0.1, 1, (20, 257))
        np.testing.assert_allclose(features(p), features(4 * p), atol=1e-10)
