"""Spatial filtering (filter-and-sum) frontend.

The layer maps a (T, F, C) spectrum to D look-direction outputs

    y[t, f, d] = sum_c w[f, d, c] * x[t, f, c] + b[f, d]

followed by average pooling of the output power over look directions.
Weights are dense per frequency. Training of ``w`` is replaced here by an
MSE fit to a target power spectrum, with analytic gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import StftConfig, as_spectrum_array

__all__ = [
    "SfWeights",
    "default_directions",
    "sf_forward",
    "sf_pool",
    "sf_init_das",
    "sf_init_random",
    "sf_grad_mse",
    "sf_fit",
    "sf_enhance",
]

SPEED_OF_SOUND = 343.0


@dataclass
class SfWeights:
    """Complex weights ``w`` (F, D, C) and bias ``b`` (F, D)."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        if self.w.ndim != 3:
            raise ValueError(f"w must be (F, D, C), got shape {self.w.shape}")
        if self.b.shape != self.w.shape[:2]:
            raise ValueError(f"b must be (F, D) = {self.w.shape[:2]}, got {self.b.shape}")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise ValueError("weights must be finite")

    @property
    def shape(self):
        """(F, D, C)"""
        return self.w.shape

    def restrict(self, kept) -> "SfWeights":
        """Weights for the channel subset ``kept`` (ascending order preserved)."""
        kept = np.asarray(getattr(kept, "kept", kept), dtype=int)
        return SfWeights(self.w[:, :, kept], self.b.copy())

    def copy(self) -> "SfWeights":
        return SfWeights(self.w.copy(), self.b.copy())


def default_directions(n: int = 11) -> np.ndarray:
    """``n`` azimuths evenly spaced over [0, 180] degrees."""
    if n < 1:
        raise ValueError("need at least one look direction")
    if n == 1:
        return np.array([90.0])
    return np.linspace(0.0, 180.0, n)


def _check_shapes(X, W):
    T, F, C = X.shape
    if W.w.shape[0] != F or W.w.shape[2] != C:
        raise ValueError(
            f"spectrum (T={T}, F={F}, C={C}) does not match weights (F, D, C)={W.w.shape}")


def sf_forward(X, W: SfWeights) -> np.ndarray:
    """Filter-and-sum over channels; returns look-direction tensor (T, F, D)."""
    X = as_spectrum_array(X)
    _check_shapes(X, W)
    return np.einsum("tfc,fdc->tfd", X, W.w) + W.b[None]


def sf_pool(Y) -> np.ndarray:
    """Average power over look directions: (T, F, D) -> (T, F)."""
    Y = np.asarray(Y)
    if Y.ndim != 3 or Y.shape[-1] < 1:
        raise ValueError(f"expected (T, F, D) with D >= 1, got shape {Y.shape}")
    return np.mean(Y.real ** 2 + Y.imag ** 2, axis=-1)


def sf_init_das(geometry, directions, cfg: StftConfig = StftConfig(),
                sample_rate: float = 16000, c_sound: float = SPEED_OF_SOUND) -> SfWeights:
    """Far-field delay-and-sum weights, one look direction per azimuth.

    ``w[f, d, c] = exp(-2j pi f tau_c(theta_d)) / C`` where ``tau_c`` is the
    arrival-time advance of mic ``c`` relative to the array centroid for a
    plane wave from azimuth ``theta_d`` (degrees, in the x-y plane).
    """
    pos = np.asarray(getattr(geometry, "mic_positions", geometry), dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
        raise ValueError(f"geometry must be (C, 3) mic positions, got {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise ValueError("geometry contains non-finite positions")
    theta = np.deg2rad(np.atleast_1d(np.asarray(directions, dtype=float)))
    if theta.size == 0:
        raise ValueError("need at least one look direction")
    C = pos.shape[0]
    rel = pos - pos.mean(axis=0)
    u = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=-1)  # (D, 3)
    tau = u @ rel.T / c_sound  # (D, C)
    freqs = cfg.bin_frequencies(sample_rate)
    w = np.exp(-2j * np.pi * freqs[:, None, None] * tau[None]) / C
    return SfWeights(w, np.zeros(w.shape[:2], dtype=complex))


def sf_init_random(F: int, D: int, C: int, rng: np.random.Generator,
                   scale: float | None = None, bias_scale: float = 0.0) -> SfWeights:
    """Circular complex Gaussian weights with std ``scale`` (default 1/sqrt(C))."""
    scale = 1.0 / np.sqrt(C) if scale is None else scale

    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return SfWeights(scale * cn(F, D, C), bias_scale * cn(F, D))


def sf_grad_mse(X, W: SfWeights, target):
    """MSE between pooled power and ``target`` and its gradient.

    ``loss = mean_{t,f} (p[t,f] - target[t,f])**2`` with ``p = sf_pool(sf_forward(X, W))``.

    Gradients are returned as ``dL/dRe + 1j * dL/dIm`` for every complex
    parameter (twice the Wirtinger derivative with respect to the conjugate),
    so ``W - lr * grad`` is a descent step and the real/imaginary parts line
    up with finite differences on the real/imaginary coordinates.

    Returns
    -------
    grad_w : (F, D, C) complex
    grad_b : (F, D) complex
    loss : float
    """
    X = as_spectrum_array(X)
    _check_shapes(X, W)
    target = np.asarray(target, dtype=float)
    T, F, _ = X.shape
    if target.shape != (T, F):
        raise ValueError(f"target must be (T, F) = {(T, F)}, got {target.shape}")
    D = W.w.shape[1]
    Y = sf_forward(X, W)
    err = sf_pool(Y) - target
    loss = float(np.mean(err ** 2))
    # d loss / d conj(y) = (2 / (T F)) * err * y / D; doubled for the Re/Im convention
    G = (4.0 / (T * F * D)) * err[..., None] * Y  # (T, F, D)
    grad_w = np.einsum("tfd,tfc->fdc", G, np.conj(X))
    grad_b = G.sum(axis=0)
    return grad_w, grad_b, loss


def sf_fit(X, W: SfWeights, target, steps: int = 50, lr: float = 1e-2):
    """Plain gradient descent on :func:`sf_grad_mse`; returns (weights, losses).

    ``losses`` has ``steps + 1`` entries, the last one evaluated after the
    final update.
    """
    W = W.copy()
    losses = []
    for _ in range(steps):
        gw, gb, loss = sf_grad_mse(X, W, target)
        losses.append(loss)
        W = SfWeights(W.w - lr * gw, W.b - lr * gb)
    losses.append(sf_grad_mse(X, W, target)[2])
    return W, np.array(losses)


def sf_enhance(X, W: SfWeights) -> np.ndarray:
    """Enhanced power spectrum (T, F): forward pass followed by pooling."""
    return sf_pool(sf_forward(X, W))
