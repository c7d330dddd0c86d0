"""Mask-based MVDR beamformer with time-invariant (per-utterance) filters.

    Phi_f = sum_t m[t,f] x[t,f] x[t,f]^H / sum_t m[t,f]
    g_f   = (Phi^N_f)^-1 Phi^S_f u / Tr((Phi^N_f)^-1 Phi^S_f)
    s     = g_f^H x[t,f],  power = |s|^2

Masks come from outside (oracle masks from the simulator in this package).
The reference channel ``u`` is picked by a mask-weighted SNR rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import hermitian_project, regularized_inverse

__all__ = [
    "MaskMassError",
    "DegenerateSpeechError",
    "BeamformerCoeffs",
    "MvdrResult",
    "average_masks",
    "estimate_psd",
    "mvdr_coeffs",
    "select_reference",
    "mvdr_apply",
    "mvdr_enhance",
    "mvdr_pipeline",
    "noise_floor_masks",
]

TRACE_TOL = 1e-12


class MaskMassError(ValueError):
    def __init__(self, frequency):
        super().__init__(
            f"mask has zero mass at frequency bin {frequency}; floor the mask to avoid this")
        self.frequency = frequency


class DegenerateSpeechError(ValueError):
    def __init__(self, frequency, value):
        super().__init__(
            f"|Tr(inv(Phi_N) Phi_S)| = {value:.3g} < {TRACE_TOL} at frequency bin {frequency}")
        self.frequency = frequency


@dataclass
class BeamformerCoeffs:
    g: np.ndarray  # (F, C)
    reference: int

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.complex128)
        if self.g.ndim != 2:
            raise ValueError(f"g must be (F, C), got shape {self.g.shape}")
        if not 0 <= self.reference < self.g.shape[1]:
            raise ValueError(f"reference {self.reference} out of range for C={self.g.shape[1]}")


@dataclass
class MvdrResult:
    enhanced: np.ndarray  # (T, F) complex
    power: np.ndarray  # (T, F)
    coeffs: BeamformerCoeffs


def _check_mask(m, name="mask"):
    m = np.asarray(m, dtype=float)
    if np.any(m < 0) or np.any(m > 1) or np.any(np.isnan(m)):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return m


def average_masks(per_channel, kept=None) -> np.ndarray:
    """Mean over channels of a (T, F, C) mask; restricted to ``kept`` if given.

    A (T, F) mask is returned unchanged.
    """
    m = _check_mask(per_channel)
    if m.ndim == 2:
        return m
    if m.ndim != 3:
        raise ValueError(f"expected a (T, F, C) mask, got shape {m.shape}")
    if kept is not None:
        kept = np.asarray(getattr(kept, "kept", kept), dtype=int)
        if kept.size == 0:
            raise ValueError("kept channel set is empty")
        m = m[:, :, kept]
    # a fixed memory layout keeps the summation order, and so the result,
    # independent of how the caller sliced the channel axis
    return np.ascontiguousarray(m).mean(axis=-1)


def estimate_psd(X, mask) -> np.ndarray:
    """Mask-weighted spatial covariance per frequency, shape (F, C, C)."""
    X = np.asarray(getattr(X, "data", X))
    m = _check_mask(mask)
    if m.shape != X.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match spectrum (T, F) = {X.shape[:2]}")
    mass = m.sum(axis=0)
    if np.any(mass <= 0):
        raise MaskMassError(int(np.argmax(mass <= 0)))
    Xf = np.ascontiguousarray(X.transpose(1, 2, 0))  # (F, C, T)
    phi = (Xf * m.T[:, None, :]) @ np.conj(Xf).transpose(0, 2, 1)
    return hermitian_project(phi / mass[:, None, None])


def mvdr_coeffs(speech_psd, noise_psd, reference: int = 0, eps_rel: float = 1e-6) -> BeamformerCoeffs:
    speech_psd = np.asarray(speech_psd)
    noise_psd = np.asarray(noise_psd)
    if speech_psd.shape != noise_psd.shape or speech_psd.ndim != 3:
        raise ValueError(
            f"PSD stacks must share shape (F, C, C): {speech_psd.shape} vs {noise_psd.shape}")
    C = speech_psd.shape[-1]
    if not 0 <= reference < C:
        raise ValueError(f"reference {reference} out of range for C={C}")
    num = regularized_inverse(noise_psd, eps_rel) @ speech_psd
    tr = np.trace(num, axis1=-2, axis2=-1)
    small = np.abs(tr) < TRACE_TOL
    if np.any(small):
        f = int(np.argmax(small))
        raise DegenerateSpeechError(f, abs(tr[f]))
    return BeamformerCoeffs(num[:, :, reference] / tr[:, None], reference)


def select_reference(X, speech_mask, noise_mask, eps: float = 1e-12) -> int:
    """Channel maximising mask-weighted speech-to-noise power.

    Ties (within a relative band of 1e-12) go to the lowest index.
    """
    X = np.asarray(getattr(X, "data", X))
    power = X.real ** 2 + X.imag ** 2
    ms = np.asarray(speech_mask, dtype=float)
    mn = np.asarray(noise_mask, dtype=float)
    num = np.einsum("tf,tfc->c", ms, power)
    den = np.einsum("tf,tfc->c", mn, power) + eps
    ratio = num / den
    best = ratio.max()
    return int(np.flatnonzero(ratio >= best - 1e-12 * abs(best))[0])


def mvdr_apply(X, coeffs: BeamformerCoeffs):
    """Returns ``(enhanced, power)``, both (T, F)."""
    X = np.asarray(getattr(X, "data", X))
    g = coeffs.g
    if X.ndim != 3 or X.shape[1:] != g.shape:
        raise ValueError(f"spectrum {X.shape} does not match coefficients (F, C) = {g.shape}")
    s = np.einsum("fc,tfc->tf", np.conj(g), X)
    return s, s.real ** 2 + s.imag ** 2


def mvdr_enhance(X, speech_masks, noise_masks=None, kept=None, reference=None,
                 eps_rel: float = 1e-6, mask_floor: float | None = None) -> MvdrResult:
    """Average masks, estimate PSDs, pick a reference, compute and apply g.

    Parameters
    ----------
    X : (T, F, C) spectrum
    speech_masks, noise_masks : (T, F, C) per-channel or (T, F) masks.
        ``noise_masks`` defaults to ``1 - speech_masks``.
    kept : channel subset, optional
        Slice both the spectrum and the masks to these channels first.
    reference : int, optional
        Fixed reference channel (index into the possibly sliced tensor);
        chosen by :func:`select_reference` when omitted.
    mask_floor : float, optional
        Clamp averaged masks to ``[mask_floor, 1]``.
    """
    X = np.asarray(getattr(X, "data", X))
    speech_masks = _check_mask(speech_masks, "speech mask")
    noise_masks = 1.0 - speech_masks if noise_masks is None else _check_mask(noise_masks, "noise mask")
    if kept is not None:
        kept = np.asarray(getattr(kept, "kept", kept), dtype=int)
        if kept.size == 0:
            raise ValueError("kept channel set is empty")
        X = X[:, :, kept]
        if speech_masks.ndim == 3:
            speech_masks = speech_masks[:, :, kept]
        if noise_masks.ndim == 3:
            noise_masks = noise_masks[:, :, kept]
    ms = average_masks(speech_masks)
    mn = average_masks(noise_masks)
    if mask_floor is not None:
        ms = np.clip(ms, mask_floor, 1.0)
        mn = np.clip(mn, mask_floor, 1.0)
    phi_s = estimate_psd(X, ms)
    phi_n = estimate_psd(X, mn)
    if reference is None:
        reference = select_reference(X, ms, mn)
    coeffs = mvdr_coeffs(phi_s, phi_n, reference, eps_rel)
    s, p = mvdr_apply(X, coeffs)
    return MvdrResult(s, p, coeffs)


def mvdr_pipeline(X, speech_masks, noise_masks=None, **kwargs) -> np.ndarray:
    """Enhanced power spectrum (T, F); see :func:`mvdr_enhance` for arguments."""
    return mvdr_enhance(X, speech_masks, noise_masks, **kwargs).power


def noise_floor_masks(X, percentile: float = 20.0) -> np.ndarray:
    """Crude per-channel speech masks when no mask estimator is available.

    The noise floor of each (frequency, channel) is the ``percentile``-th
    percentile of the power over time; the mask is the spectral-subtraction
    gain ``clip(1 - floor / power, 0, 1)``. Returns (T, F, C).
    """
    X = np.asarray(getattr(X, "data", X))
    p = X.real ** 2 + X.imag ** 2
    floor = np.percentile(p, percentile, axis=0, keepdims=True)
    gain = np.divide(floor, p, out=np.ones_like(p), where=p > 0)
    return np.clip(1.0 - gain, 0.0, 1.0)
