"""ChannelAugment and SpecAugment.

All sampling goes through an explicitly passed ``numpy.random.Generator``
(see :mod:`chanaug.rng` for the pinned bit generator).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .rng import make_rng, spawn_rngs
from .spectral import ComplexSpectrum, as_spectrum_array

__all__ = [
    "MODES",
    "ChannelAugmentPolicy",
    "ChannelSubset",
    "SpecAugmentPolicy",
    "make_rng",
    "spawn_rngs",
    "ca_sample_subset",
    "ca_zero",
    "ca_slice",
    "ca_freq_dependent",
    "channel_augment",
    "spec_augment",
]

MODES = ("freq_independent_zero", "freq_independent_slice", "freq_dependent")


@dataclass(frozen=True)
class ChannelAugmentPolicy:
    mode: str = "freq_independent_slice"
    c_min: int | None = None
    c_max: int | None = None
    p_keep: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "freq_dependent":
            if self.p_keep is None or not 0 < self.p_keep <= 1:
                raise ValueError(f"p_keep must lie in (0, 1], got {self.p_keep}")
        else:
            if self.c_min is None or self.c_max is None:
                raise ValueError("c_min and c_max are required for frequency-independent modes")
            if not 1 <= self.c_min <= self.c_max:
                raise ValueError(f"need 1 <= c_min <= c_max, got ({self.c_min}, {self.c_max})")

    def validate_for(self, num_channels: int):
        if self.mode != "freq_dependent" and self.c_max > num_channels:
            raise ValueError(f"c_max={self.c_max} exceeds the {num_channels} available channels")

    def summary(self) -> str:
        if self.mode == "freq_dependent":
            return f"fd:p={self.p_keep:g}"
        kind = "zero" if self.mode == "freq_independent_zero" else "slice"
        return f"{kind}:{self.c_min}-{self.c_max}"

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ChannelSubset:
    kept: tuple
    original_c: int

    def __post_init__(self):
        kept = tuple(sorted(int(k) for k in self.kept))
        if not kept:
            raise ValueError("channel subset is empty")
        if len(set(kept)) != len(kept):
            raise ValueError(f"duplicate channels in subset {kept}")
        if kept[0] < 0 or kept[-1] >= self.original_c:
            raise ValueError(f"subset {kept} out of range for {self.original_c} channels")
        object.__setattr__(self, "kept", kept)

    def __len__(self):
        return len(self.kept)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.original_c, dtype=bool)
        m[list(self.kept)] = True
        return m


@dataclass(frozen=True)
class SpecAugmentPolicy:
    f_max: int = 15
    m_f: int = 2
    t_max: int = 0
    m_t: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("f_max", "m_f", "t_max", "m_t"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def ca_sample_subset(c: int, policy: ChannelAugmentPolicy, rng: np.random.Generator) -> ChannelSubset:
    """Draw |Z| uniformly from {c_min..c_max}, then Z without replacement."""
    if policy.mode == "freq_dependent":
        raise ValueError("subset sampling needs a frequency-independent policy")
    policy.validate_for(c)
    k = int(rng.integers(policy.c_min, policy.c_max + 1))
    return ChannelSubset(tuple(rng.choice(c, size=k, replace=False)), c)


def _rewrap(X, data):
    return X.with_data(data) if isinstance(X, ComplexSpectrum) else data


def _check_subset(data, z: ChannelSubset):
    if data.shape[-1] != z.original_c:
        raise ValueError(f"subset drawn for {z.original_c} channels, spectrum has {data.shape[-1]}")


def ca_zero(X, z: ChannelSubset):
    """Zero every channel outside ``z``; shape is preserved."""
    data = as_spectrum_array(X)
    _check_subset(data, z)
    return _rewrap(X, data * z.mask())


def ca_slice(X, z: ChannelSubset):
    """Keep only the channels in ``z``, in ascending original order."""
    data = as_spectrum_array(X)
    _check_subset(data, z)
    return _rewrap(X, np.ascontiguousarray(data[:, :, list(z.kept)]))


def ca_freq_dependent(X, p_keep: float, rng: np.random.Generator):
    """Multiply by a time-invariant Bernoulli(p_keep) mask drawn per (f, c).

    Returns ``(X_augmented, mask)`` with ``mask`` boolean of shape (F, C).
    """
    if not 0 < p_keep <= 1:
        raise ValueError(f"p_keep must lie in (0, 1], got {p_keep}")
    data = as_spectrum_array(X)
    mask = rng.random(data.shape[1:]) < p_keep
    return _rewrap(X, data * mask[None]), mask


def channel_augment(X, policy: ChannelAugmentPolicy, rng: np.random.Generator,
                    frontend: str = "sf"):
    """Apply ``policy`` to ``X`` for the given frontend.

    Returns ``(X_augmented, info)`` where ``info`` is the :class:`ChannelSubset`
    for frequency-independent modes and the (F, C) keep mask otherwise.
    Zeroing is refused for MVDR (zeroed channels make the noise PSD
    singular), as is the frequency-dependent mode.
    """
    if frontend not in ("sf", "mvdr"):
        raise ValueError(f"unknown frontend {frontend!r}")
    data = as_spectrum_array(X)
    if policy.mode == "freq_dependent":
        if frontend == "mvdr":
            raise ValueError("frequency-dependent ChannelAugment is defined for SF only")
        return ca_freq_dependent(X, policy.p_keep, rng)
    z = ca_sample_subset(data.shape[-1], policy, rng)
    if policy.mode == "freq_independent_zero":
        if frontend == "mvdr":
            raise ValueError("zeroing mode is not supported for MVDR; use slicing")
        return ca_zero(X, z), z
    return ca_slice(X, z), z


def spec_augment(feat, policy: SpecAugmentPolicy, rng: np.random.Generator,
                 return_regions: bool = False):
    """Zero ``m_f`` random frequency bands and ``m_t`` random time spans.

    ``feat`` is (T, n_bands). Widths are uniform on {0..max} and starts
    uniform on the valid positions; regions may overlap. Time widths are
    clipped to the utterance length.
    """
    feat = np.asarray(feat)
    if feat.ndim != 2:
        raise ValueError(f"features must be (T, bands), got shape {feat.shape}")
    T, nb = feat.shape
    if policy.m_f > 0 and policy.f_max > nb:
        raise ValueError(f"f_max={policy.f_max} exceeds the {nb} feature bands")
    out = feat.copy()
    freq_regions, time_regions = [], []
    for _ in range(policy.m_f):
        width = int(rng.integers(0, policy.f_max + 1))
        start = int(rng.integers(0, nb - width + 1))
        out[:, start:start + width] = 0
        freq_regions.append((start, width))
    t_max = min(policy.t_max, T)
    for _ in range(policy.m_t):
        width = int(rng.integers(0, t_max + 1))
        start = int(rng.integers(0, T - width + 1))
        out[start:start + width, :] = 0
        time_regions.append((start, width))
    if return_regions:
        return out, freq_regions, time_regions
    return out
