"""Multi-channel speech frontends (spatial filtering and mask-based MVDR)
with channel-subset data augmentation, room simulation and evaluation tools."""

__version__ = "0.1.0"

from .spectral import ComplexSpectrum, StftConfig, Waveform, istft, stft  # noqa: E402

__all__ = ["__version__", "ComplexSpectrum", "StftConfig", "Waveform", "stft", "istft"]
