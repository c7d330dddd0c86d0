"""Log-Mel features with per-utterance mean normalisation."""

import numpy as np

from .spectral import StftConfig

__all__ = ["hz_to_mel", "mel_to_hz", "mel_filterbank", "log_mel", "cmn", "features"]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels=80, cfg=StftConfig(), sample_rate=16000, f_low=20.0, f_high=7600.0):
    """Triangular filters with centres equally spaced in mel, shape (n_mels, F).

    Filter ``i`` rises from edge ``i`` to a peak of 1 at edge ``i + 1`` and
    falls to zero at edge ``i + 2`` (edges in Hz, ``n_mels + 2`` of them).
    """
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if not 0 <= f_low < f_high <= sample_rate / 2:
        raise ValueError(
            f"need 0 <= f_low < f_high <= {sample_rate / 2}, got ({f_low}, {f_high})")
    edges = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_mels + 2))
    freqs = cfg.bin_frequencies(sample_rate)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs - lo) / (mid - lo)
    fall = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rise, fall))


def log_mel(power, fbank, floor=1e-10):
    """``ln(max(fbank @ p_t, floor))`` for every frame; (T, F) -> (T, n_mels)."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    power = np.asarray(power, dtype=float)
    fbank = np.asarray(fbank, dtype=float)
    if power.ndim != 2 or power.shape[1] != fbank.shape[1]:
        raise ValueError(f"power {power.shape} does not match filterbank {fbank.shape}")
    return np.log(np.maximum(power @ fbank.T, floor))


def cmn(feat):
    feat = np.asarray(feat, dtype=float)
    if feat.ndim != 2 or feat.shape[0] < 1:
        raise ValueError(f"features must be (T >= 1, bands), got shape {feat.shape}")
    return feat - feat.mean(axis=0, keepdims=True)


def features(power, cfg=StftConfig(), sample_rate=16000, n_mels=80, floor=1e-10):
    """Enhanced power spectrum -> mean-normalised log-Mel features."""
    fb = mel_filterbank(n_mels, cfg, sample_rate)
    return cmn(log_mel(power, fb, floor))
