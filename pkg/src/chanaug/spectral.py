"""Multi-channel STFT / iSTFT and waveform preprocessing.

Shape conventions used throughout the package:

    waveform samples:   (C, N)        channels x samples
    complex spectrum:   (T, F, C)     frames x bins x channels

Frames are taken with a periodic analysis window; the last partial frame is
zero-padded so every input sample lands in at least one frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

__all__ = [
    "Waveform",
    "StftConfig",
    "ComplexSpectrum",
    "stft",
    "istft",
    "highpass",
    "num_frames",
    "get_window",
    "as_spectrum_array",
]

WINDOWS = ("hann", "sqrt-hann")


@dataclass(frozen=True)
class Waveform:
    """Real multi-channel audio, ``samples`` shaped (C, N)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ValueError(f"samples must be (channels, samples), got shape {x.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", x)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 128
    window: str = "hann"

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ValueError(f"fft_size must be a power of two >= 2, got {n}")
        if not 1 <= self.hop <= n:
            raise ValueError(f"hop must be in [1, fft_size], got {self.hop}")
        if self.window not in WINDOWS:
            raise ValueError(f"window must be one of {WINDOWS}, got {self.window!r}")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def bin_frequencies(self, sample_rate: float) -> np.ndarray:
        return np.arange(self.num_bins) * sample_rate / self.fft_size


@dataclass(frozen=True)
class ComplexSpectrum:
    """STFT tensor ``data`` shaped (T, F, C) plus the parameters that made it.

    ``length`` is the number of time samples of the source waveform, so that
    :func:`istft` can trim the zero-padded tail.
    """

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    sample_rate: int = 16000
    length: int | None = None

    def __post_init__(self):
        x = np.asarray(self.data)
        if x.ndim != 3:
            raise ValueError(f"spectrum must be (T, F, C), got shape {x.shape}")
        if x.shape[1] != self.config.num_bins:
            raise ValueError(
                f"spectrum has {x.shape[1]} bins, config implies {self.config.num_bins}")
        if x.shape[2] < 1:
            raise ValueError("spectrum needs at least one channel")
        object.__setattr__(self, "data", x.astype(np.complex128, copy=False))

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "ComplexSpectrum":
        return ComplexSpectrum(data, self.config, self.sample_rate, self.length)


def as_spectrum_array(X) -> np.ndarray:
    """Return the raw (T, F, C) array for either a ComplexSpectrum or an array."""
    if isinstance(X, ComplexSpectrum):
        return X.data
    X = np.asarray(X)
    if X.ndim != 3:
        raise ValueError(f"expected a (T, F, C) tensor, got shape {X.shape}")
    return X


def get_window(cfg: StftConfig) -> np.ndarray:
    w = sps.get_window("hann", cfg.fft_size, fftbins=True)
    if cfg.window == "sqrt-hann":
        w = np.sqrt(w)
    return w


def num_frames(num_samples: int, cfg: StftConfig) -> int:
    if num_samples < cfg.fft_size:
        raise ValueError(
            f"waveform of {num_samples} samples is shorter than one frame ({cfg.fft_size})")
    return 1 + -(-(num_samples - cfg.fft_size) // cfg.hop)


def _ola_envelope(win_sq: np.ndarray, hop: int) -> np.ndarray:
    n = len(win_sq)
    env = np.zeros(hop)
    for start in range(0, n, hop):
        seg = win_sq[start:start + hop]
        env[:len(seg)] += seg
    return env


def _cola_constant(cfg: StftConfig) -> float:
    win = get_window(cfg)
    env = _ola_envelope(win * win, cfg.hop)
    if env.max() - env.min() > 1e-10 * env.mean():
        raise ValueError(
            f"window {cfg.window!r} with fft_size={cfg.fft_size}, hop={cfg.hop} "
            "violates the constant-overlap-add condition")
    return float(env.mean())


def stft(w: Waveform | np.ndarray, cfg: StftConfig = StftConfig(),
         sample_rate: int | None = None) -> ComplexSpectrum:
    """Multi-channel STFT.

    Parameters
    ----------
    w : Waveform or array_like, shape (C, N) or (N,)
    cfg : StftConfig
    sample_rate : int, optional
        Only used when ``w`` is a bare array (default 16000).

    Returns
    -------
    ComplexSpectrum
        ``data`` has shape (T, fft_size // 2 + 1, C) with
        ``T = 1 + ceil((N - fft_size) / hop)``.
    """
    if not isinstance(w, Waveform):
        w = Waveform(np.asarray(w), sample_rate or 16000)
    x = w.samples
    n = x.shape[1]
    T = num_frames(n, cfg)
    padded_len = (T - 1) * cfg.hop + cfg.fft_size
    if padded_len > n:
        x = np.pad(x, ((0, 0), (0, padded_len - n)))
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.fft_size, axis=-1)[:, ::cfg.hop]
    spec = np.fft.rfft(frames * get_window(cfg), axis=-1)  # (C, T, F)
    return ComplexSpectrum(np.ascontiguousarray(spec.transpose(1, 2, 0)), cfg,
                           w.sample_rate, n)


def istft(X: ComplexSpectrum | np.ndarray, cfg: StftConfig | None = None,
          length: int | None = None, sample_rate: int | None = None) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`.

    The synthesis window equals the analysis window and the output is divided
    by the (constant) overlap-added squared window, so reconstruction is exact
    wherever a sample is covered by a full set of overlapping frames.
    """
    if isinstance(X, ComplexSpectrum):
        cfg = cfg or X.config
        length = length if length is not None else X.length
        sample_rate = sample_rate or X.sample_rate
        data = X.data
    else:
        data = np.asarray(X)
        if data.ndim == 2:
            data = data[:, :, None]
        if cfg is None:
            raise ValueError("cfg is required when X is a bare array")
    if data.shape[1] != cfg.num_bins:
        raise ValueError(f"spectrum has {data.shape[1]} bins, config implies {cfg.num_bins}")
    norm = _cola_constant(cfg)
    win = get_window(cfg)
    T, _, C = data.shape
    frames = np.fft.irfft(data.transpose(2, 0, 1), n=cfg.fft_size, axis=-1) * win
    out = np.zeros((C, (T - 1) * cfg.hop + cfg.fft_size))
    for t in range(T):
        out[:, t * cfg.hop:t * cfg.hop + cfg.fft_size] += frames[:, t]
    out /= norm
    if length is not None:
        if length > out.shape[1]:
            out = np.pad(out, ((0, 0), (0, length - out.shape[1])))
        out = out[:, :length]
    return Waveform(out, sample_rate or 16000)


def highpass(w: Waveform, cutoff_hz: float = 50.0) -> Waveform:
    """Second-order Butterworth high-pass, single forward pass per channel."""
    nyq = w.sample_rate / 2
    if not 0 < cutoff_hz < nyq:
        raise ValueError(f"cutoff must lie in (0, {nyq}) Hz, got {cutoff_hz}")
    sos = sps.butter(2, cutoff_hz, btype="highpass", fs=w.sample_rate, output="sos")
    return Waveform(sps.sosfilt(sos, w.samples, axis=-1), w.sample_rate)
