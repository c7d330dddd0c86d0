"""Image-method room simulation and multi-channel mixture synthesis.

Shoebox rooms with frequency-independent wall reflection coefficients
(Allen & Berkley image sources), fractional delays rendered with a
Hann-windowed sinc truncated to +-8 samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps
from scipy.signal import fftconvolve

from .rng import spawn_rngs
from .spectral import StftConfig, Waveform, stft

__all__ = [
    "ArrayGeometry",
    "RoomSpec",
    "MixtureBundle",
    "PRESETS",
    "ula",
    "image_rir",
    "room_rirs",
    "synthesize",
    "oracle_masks",
    "array_subset",
    "white_noise",
    "pink_noise",
    "synthetic_speech",
    "SceneConfig",
    "simulate_dataset",
]

SINC_HALF_WIDTH = 8

# Index sets over a 16-mic ULA, centred on the array. "S<k>" = skip k mics between kept mics.
PRESETS = {
    "2": (7, 8),
    "4": (6, 7, 8, 9),
    "4S1": (4, 6, 8, 10),
    "4S3": (2, 6, 10, 14),
    "7": (4, 5, 6, 7, 8, 9, 10),
    "7S1": (2, 4, 6, 8, 10, 12, 14),
    "16": tuple(range(16)),
}


@dataclass(frozen=True)
class ArrayGeometry:
    mic_positions: np.ndarray  # (C, 3) metres

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
            raise ValueError(f"mic_positions must be (C >= 1, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("mic positions must be finite")
        if p.shape[0] > 1:
            d = np.linalg.norm(p[:, None] - p[None], axis=-1)
            if np.any(d[np.triu_indices(len(p), 1)] == 0):
                raise ValueError("mic positions must be pairwise distinct")
        object.__setattr__(self, "mic_positions", p)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    def subset(self, kept) -> "ArrayGeometry":
        return ArrayGeometry(self.mic_positions[list(kept)])

    def aperture(self) -> float:
        p = self.mic_positions
        return float(np.max(np.linalg.norm(p[:, None] - p[None], axis=-1)))


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple
    reflection_coeff: float | tuple = 0.8
    source_pos: tuple = (1.0, 1.0, 1.5)
    fs: int = 16000
    max_order: int = 10
    rir_length: int = 4096
    c_sound: float = 343.0

    def __post_init__(self):
        dims = np.asarray(self.dims, dtype=float)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise ValueError(f"room dims must be three positive lengths, got {self.dims}")
        beta = np.broadcast_to(np.asarray(self.reflection_coeff, dtype=float), (6,))
        if np.any(beta < 0) or np.any(beta >= 1):
            raise ValueError("reflection coefficients must lie in [0, 1)")
        if self.max_order < 0 or self.rir_length < 1 or self.fs <= 0 or self.c_sound <= 0:
            raise ValueError("max_order >= 0, rir_length >= 1, fs > 0 and c_sound > 0 required")
        self.check_inside(self.source_pos, "source")

    @property
    def betas(self) -> np.ndarray:
        """Per-wall coefficients ordered (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz)."""
        return np.broadcast_to(np.asarray(self.reflection_coeff, dtype=float), (6,)).copy()

    def check_inside(self, pos, what="position"):
        p = np.asarray(pos, dtype=float)
        if p.shape != (3,) or not np.all(np.isfinite(p)) or np.any(p <= 0) or np.any(p >= self.dims):
            raise ValueError(f"{what} {tuple(np.round(p, 4))} is not strictly inside room {self.dims}")


@dataclass
class MixtureBundle:
    """Mixture plus its exact decomposition ``mixture = gains * (clean + noise)``."""

    mixture: Waveform
    clean_image: Waveform
    noise_image: Waveform
    gains: np.ndarray
    snr_db: float
    meta: dict = field(default_factory=dict)

    @property
    def num_channels(self) -> int:
        return self.mixture.num_channels

    def subset(self, kept) -> "MixtureBundle":
        k = list(kept)
        fs = self.mixture.sample_rate
        return MixtureBundle(
            Waveform(self.mixture.samples[k], fs), Waveform(self.clean_image.samples[k], fs),
            Waveform(self.noise_image.samples[k], fs), self.gains[k], self.snr_db, dict(self.meta))


def ula(n_mics: int, spacing_m: float = 0.033, center=(0.0, 0.0, 0.0),
        orientation_deg: float = 0.0) -> ArrayGeometry:
    """Uniform linear array along azimuth ``orientation_deg``, centred on ``center``."""
    if n_mics < 1 or spacing_m <= 0:
        raise ValueError("need n_mics >= 1 and spacing_m > 0")
    o = np.deg2rad(orientation_deg)
    axis = np.array([np.cos(o), np.sin(o), 0.0])
    offsets = (np.arange(n_mics) - (n_mics - 1) / 2) * spacing_m
    return ArrayGeometry(np.asarray(center, dtype=float) + offsets[:, None] * axis)


def _image_sources(room: RoomSpec):
    """Image positions, reflection orders and amplitude numerators up to max_order."""
    K = room.max_order
    n = np.arange(-K, K + 1)
    q = np.array([0, 1])
    beta = room.betas
    src = np.asarray(room.source_pos, dtype=float)
    per_axis = []
    for ax in range(3):
        nn, qq = np.meshgrid(n, q, indexing="ij")
        nn, qq = nn.ravel(), qq.ravel()
        lo, hi = np.abs(nn - qq), np.abs(nn)
        per_axis.append(dict(
            pos=(1 - 2 * qq) * src[ax] + 2 * nn * room.dims[ax],
            order=lo + hi,
            gain=beta[2 * ax] ** lo * beta[2 * ax + 1] ** hi,
        ))
    ix, iy, iz = np.meshgrid(*(np.arange(len(a["pos"])) for a in per_axis), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    order = per_axis[0]["order"][ix] + per_axis[1]["order"][iy] + per_axis[2]["order"][iz]
    keep = order <= K
    ix, iy, iz, order = ix[keep], iy[keep], iz[keep], order[keep]
    pos = np.stack([per_axis[0]["pos"][ix], per_axis[1]["pos"][iy], per_axis[2]["pos"][iz]], axis=-1)
    gain = per_axis[0]["gain"][ix] * per_axis[1]["gain"][iy] * per_axis[2]["gain"][iz]
    return pos, order, gain


def _render(delays, amps, length):
    h = np.zeros(length + 2 * SINC_HALF_WIDTH + 2)
    offs = np.arange(-SINC_HALF_WIDTH, SINC_HALF_WIDTH + 1)
    base = np.round(delays).astype(int)
    taps = base[:, None] + offs[None]
    x = taps - delays[:, None]
    kern = np.sinc(x) * np.where(np.abs(x) <= SINC_HALF_WIDTH,
                                 0.5 * (1 + np.cos(np.pi * x / SINC_HALF_WIDTH)), 0.0)
    valid = (taps >= 0) & (taps < length)
    np.add.at(h, taps[valid], (amps[:, None] * kern)[valid])
    return h[:length]


def image_rir(room: RoomSpec, mic, return_order_energy: bool = False):
    """Room impulse response from ``room.source_pos`` to ``mic``.

    Each image source contributes ``prod(beta) / (4 pi dist)`` at delay
    ``fs * dist / c`` samples. With ``return_order_energy`` the per-order sum
    of squared image amplitudes (index = reflection order) is returned too.
    """
    room.check_inside(mic, "microphone")
    pos, order, gain = _image_sources(room)
    dist = np.linalg.norm(pos - np.asarray(mic, dtype=float), axis=-1)
    delays = room.fs * dist / room.c_sound
    direct = room.fs * np.linalg.norm(np.subtract(room.source_pos, mic)) / room.c_sound
    if direct >= room.rir_length:
        raise ValueError(
            f"rir_length={room.rir_length} is shorter than the direct-path delay ({direct:.1f} samples)")
    amps = gain / (4 * np.pi * dist)
    live = (delays < room.rir_length + SINC_HALF_WIDTH) & (amps != 0)
    h = _render(delays[live], amps[live], room.rir_length)
    if return_order_energy:
        energy = np.bincount(order, weights=amps ** 2, minlength=room.max_order + 1)
        return h, energy
    return h


def room_rirs(room: RoomSpec, geometry: ArrayGeometry) -> np.ndarray:
    """(C, rir_length) impulse responses, one per microphone."""
    return np.stack([image_rir(room, m) for m in geometry.mic_positions])


def _mono(x, what):
    if x is None:
        return None
    if isinstance(x, Waveform):
        if x.num_channels != 1:
            raise ValueError(f"{what} must be mono, got {x.num_channels} channels")
        return x.samples[0], x.sample_rate
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{what} must be a 1-D signal")
    return x, None


def _fit_length(noise, n, rng):
    if len(noise) < n:
        noise = np.tile(noise, -(-n // len(noise)))
    if len(noise) > n:
        start = int(rng.integers(0, len(noise) - n + 1))
        noise = noise[start:start + n]
    return noise


def _random_inside(room: RoomSpec, rng, margin=0.5):
    dims = np.asarray(room.dims)
    margin = np.minimum(margin, dims / 4)
    return tuple(rng.uniform(margin, dims - margin))


def synthesize(clean, room: RoomSpec, geometry: ArrayGeometry, noise=None, snr_db: float = 0.0,
               gain_offset_db_range: float = 0.0, self_noise_db: float | None = None,
               rng: np.random.Generator | None = None, noise_pos=None,
               normalize_snr: bool = True, rirs=None, noise_rirs=None) -> MixtureBundle:
    """Reverberant multi-channel mixture with oracle components.

    ``clean`` is convolved with the source RIRs, ``noise`` with RIRs from
    ``noise_pos`` (random position when omitted) and scaled so that the
    total clean-image to noise-image energy over all channels is ``snr_db``.
    White self-noise ``self_noise_db`` below the mean clean-image power is
    then added to the noise image of each channel, and finally each channel
    is multiplied by a gain drawn uniformly in +-``gain_offset_db_range`` dB.

    ``snr_db = inf`` disables the ambient noise. ``normalize_snr=False``
    skips the SNR rescaling (the noise is used at its given level).
    Precomputed ``rirs`` / ``noise_rirs`` of shape (C, L) may be passed to
    avoid re-simulating the room.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    s, fs = _mono(clean, "clean")
    if fs is not None and fs != room.fs:
        raise ValueError(f"clean sample rate {fs} differs from room fs {room.fs}")
    if not np.any(s):
        raise ValueError("clean signal has zero energy")
    n = len(s)
    C = geometry.num_mics
    h = room_rirs(room, geometry) if rirs is None else np.asarray(rirs)
    clean_img = fftconvolve(s[None], h, axes=-1)[:, :n]
    noise_img = np.zeros_like(clean_img)
    meta = {"fs": room.fs, "source_pos": [float(v) for v in room.source_pos]}
    if np.isfinite(snr_db):
        v = _mono(noise, "noise")
        if v is None:
            raise ValueError("a noise signal is required for finite snr_db")
        v, nfs = v
        if nfs is not None and nfs != room.fs:
            raise ValueError(f"noise sample rate {nfs} differs from room fs {room.fs}")
        if not np.any(v):
            raise ValueError("noise signal has zero energy")
        v = _fit_length(v, n, rng)
        if noise_rirs is None:
            if noise_pos is None:
                noise_pos = _random_inside(room, rng)
            noise_rirs = room_rirs(replace(room, source_pos=tuple(noise_pos)), geometry)
        noise_img = fftconvolve(v[None], np.asarray(noise_rirs), axes=-1)[:, :n]
        if normalize_snr:
            e_clean = np.sum(clean_img ** 2)
            e_noise = np.sum(noise_img ** 2)
            if e_noise == 0:
                raise ValueError("noise image has zero energy")
            noise_img = noise_img * np.sqrt(e_clean / (e_noise * 10 ** (snr_db / 10)))
        if noise_pos is not None:
            meta["noise_pos"] = [float(x) for x in noise_pos]
    if self_noise_db is not None:
        level = np.mean(clean_img ** 2) * 10 ** (-self_noise_db / 10)
        noise_img = noise_img + np.sqrt(level) * rng.standard_normal(clean_img.shape)
    if gain_offset_db_range > 0:
        gains = 10 ** (rng.uniform(-gain_offset_db_range, gain_offset_db_range, C) / 20)
    else:
        gains = np.ones(C)
    mixture = gains[:, None] * (clean_img + noise_img)
    return MixtureBundle(Waveform(mixture, room.fs), Waveform(clean_img, room.fs),
                         Waveform(noise_img, room.fs), gains, float(snr_db), meta)


def oracle_masks(bundle: MixtureBundle, cfg: StftConfig = StftConfig()):
    """Per-channel ideal ratio masks ``(speech, noise)``, each (T, F, C).

    ``speech = |S|^2 / (|S|^2 + |N|^2)`` (0.5 where both vanish) and
    ``noise = 1 - speech``.
    """
    S = stft(bundle.clean_image, cfg).data
    N = stft(bundle.noise_image, cfg).data
    ps = S.real ** 2 + S.imag ** 2
    pn = N.real ** 2 + N.imag ** 2
    tot = ps + pn
    speech = np.divide(ps, tot, out=np.full_like(ps, 0.5), where=tot > 0)
    return speech, 1.0 - speech


def array_subset(source, preset: str, presets: dict | None = None) -> tuple:
    """Channel indices of a named array configuration.

    ``source`` is a channel count, an :class:`ArrayGeometry` or a tensor whose
    last axis is channels.
    """
    table = PRESETS if presets is None else presets
    if isinstance(source, (int, np.integer)):
        c = int(source)
    elif isinstance(source, ArrayGeometry):
        c = source.num_mics
    else:
        c = np.shape(getattr(source, "data", source))[-1]
    if preset not in table:
        raise KeyError(f"unknown array preset {preset!r}; known: {sorted(table)}")
    idx = tuple(int(i) for i in table[preset])
    if max(idx) >= c:
        raise ValueError(f"preset {preset!r} needs at least {max(idx) + 1} channels, got {c}")
    return idx


def white_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(n)


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """1/f-power noise, unit variance."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec), dtype=float)
    f[0] = 1.0
    x = np.fft.irfft(spec / np.sqrt(f), n=n)
    return x / np.std(x)


def _resonator(freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    a = [1.0, -2 * r * np.cos(2 * np.pi * freq / fs), r * r]
    return [sum(a)], a


def synthetic_speech(duration_s: float, fs: int, rng: np.random.Generator) -> np.ndarray:
    """Speech-like test signal from a source-filter model.

    Voiced syllables: jittered glottal pulse train with a pitch glide and
    aspiration noise, shaped by a -6 dB/oct tilt and four formant
    resonators. Unvoiced syllables: high-passed noise bursts. Syllables are
    separated by pauses, so the result is sparse in time-frequency the way
    real speech is. Unit peak amplitude.
    """
    n = int(round(duration_s * fs))
    out = np.zeros(n)
    t0 = int(rng.integers(int(0.05 * fs), int(0.2 * fs)))
    while t0 < n:
        seg = int(rng.uniform(0.1, 0.3) * fs)
        if rng.random() < 0.2:
            exc = sps.lfilter([1, -0.95], [1], rng.standard_normal(seg)) * 0.3
            formants = [(rng.uniform(2500, 3500), 400), (rng.uniform(4500, 6500), 800)]
        else:
            f0 = rng.uniform(90, 240) * (1 + rng.uniform(-0.25, 0.25) * np.linspace(0, 1, seg))
            f0 *= 1 + 0.01 * rng.standard_normal(seg)
            pulses = np.diff(np.floor(np.cumsum(f0) / fs), prepend=0.0)
            exc = sps.lfilter([1.0], [1, -0.9], pulses) + 0.02 * rng.standard_normal(seg)
            formants = [(rng.uniform(300, 900), 80), (rng.uniform(900, 2300), 120),
                        (rng.uniform(2300, 3300), 200), (rng.uniform(3300, 4500), 300)]
        syl = np.zeros(seg)
        for freq, bw in formants:
            b, a = _resonator(freq, bw, fs)
            syl += sps.lfilter(b, a, exc)
        end = min(n, t0 + seg)
        syl *= np.hanning(seg) / (np.max(np.abs(syl)) + 1e-12)
        out[t0:end] += syl[:end - t0] * rng.uniform(0.3, 1.0)
        t0 += seg + int(rng.uniform(0.03, 0.25) * fs)
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


@dataclass(frozen=True)
class SceneConfig:
    """One room, a wall-mounted ULA, a handful of talker positions.

    Talkers sit ``source_distance`` metres from the array centre at azimuths
    in ``source_azimuth`` (degrees, measured from the array axis). Each
    bundle picks one of the ``n_source_positions`` talker positions in turn
    and a fresh ambient-noise point source at a random spot in the room.
    """

    room_dims: tuple = (6.0, 5.0, 3.0)
    reflection_coeff: float = 0.7
    max_order: int = 10
    rir_length: int = 4096
    fs: int = 16000
    c_sound: float = 343.0
    n_mics: int = 16
    spacing_m: float = 0.033
    array_center: tuple = (3.0, 0.5, 1.4)
    orientation_deg: float = 0.0
    n_source_positions: int = 5
    source_distance: tuple = (1.0, 2.0)
    source_azimuth: tuple = (20.0, 160.0)
    duration_s: tuple = (2.0, 6.0)
    snr_db: float = 0.0
    noise: str = "white"
    gain_offset_db: float = 1.0
    self_noise_db: float | None = 30.0

    def geometry(self) -> ArrayGeometry:
        return ula(self.n_mics, self.spacing_m, self.array_center, self.orientation_deg)

    def room(self, source_pos) -> RoomSpec:
        return RoomSpec(tuple(self.room_dims), self.reflection_coeff, tuple(source_pos), self.fs,
                        self.max_order, self.rir_length, self.c_sound)

    def source_positions(self, rng: np.random.Generator) -> list:
        centre = np.asarray(self.array_center, dtype=float)
        out = []
        for _ in range(self.n_source_positions):
            az = np.deg2rad(self.orientation_deg + rng.uniform(*self.source_azimuth))
            dist = rng.uniform(*self.source_distance)
            pos = centre + dist * np.array([np.cos(az), np.sin(az), 0.0])
            pos[2] += rng.uniform(-0.2, 0.3)
            out.append(tuple(float(v) for v in pos))
        return out


def _noise_signal(kind, n, rng):
    if kind == "white":
        return white_noise(n, rng)
    if kind == "pink":
        return pink_noise(n, rng)
    raise ValueError(f"unknown noise type {kind!r}; use 'white' or 'pink'")


def simulate_dataset(scene: SceneConfig, n_bundles: int, seed: int) -> list:
    """``n_bundles`` mixtures from ``scene``; bundle ``i`` depends only on (seed, i).

    Bundles carry ``meta["seed"]``, ``meta["index"]`` and the talker slot.
    """
    geom = scene.geometry()
    scene_rng, = spawn_rngs(seed, 1)
    positions = scene.source_positions(scene_rng)
    rirs = {}
    bundles = []
    for i, rng in enumerate(spawn_rngs(seed + 1, n_bundles)):
        slot = i % len(positions)
        room = scene.room(positions[slot])
        if slot not in rirs:
            rirs[slot] = room_rirs(room, geom)
        n = int(round(rng.uniform(*scene.duration_s) * scene.fs))
        clean = synthetic_speech(n / scene.fs, scene.fs, rng)
        noise = _noise_signal(scene.noise, n, rng) if np.isfinite(scene.snr_db) else None
        b = synthesize(clean, room, geom, noise, scene.snr_db, scene.gain_offset_db,
                       scene.self_noise_db, rng, rirs=rirs[slot])
        b.meta.update(seed=int(seed), index=i, source_slot=slot)
        bundles.append(b)
    return bundles
