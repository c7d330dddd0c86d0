"""Complex Hermitian matrix helpers for the MVDR frontend.

All functions broadcast over leading axes, so a per-frequency stack of
shape (F, C, C) is handled in one call.
"""

import numpy as np

__all__ = [
    "SingularMatrixError",
    "hermitian_project",
    "diagonal_loading",
    "regularized_inverse",
    "trace",
    "matvec",
    "inner",
]

MAX_CONDITION = 1e14


class SingularMatrixError(np.linalg.LinAlgError):
    """Matrix still numerically singular after diagonal loading.

    ``index`` is the position in the leading (batch) axes, i.e. the frequency
    bin for a per-frequency stack.
    """

    def __init__(self, message, index=None, condition=None):
        super().__init__(message)
        self.index = index
        self.condition = condition


def _check_square(A):
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices (..., C, C), got shape {A.shape}")
    return A


def hermitian_project(A):
    """Return ``(A + A^H) / 2``."""
    A = _check_square(A)
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def trace(A):
    A = _check_square(A)
    return np.trace(A, axis1=-2, axis2=-1)


def diagonal_loading(A, eps_rel):
    """Loading ``eps_rel * Tr(A) / C`` per matrix (``eps_rel`` where Tr(A) = 0)."""
    A = _check_square(A)
    if eps_rel < 0:
        raise ValueError("eps_rel must be non-negative")
    C = A.shape[-1]
    tr = np.real(trace(A))
    return np.where(tr == 0, eps_rel, eps_rel * tr / C)


def _index_tuple(flat, shape):
    idx = np.unravel_index(flat, shape)
    return tuple(int(i) for i in idx) if len(shape) != 1 else int(idx[0])


def regularized_inverse(A, eps_rel=1e-6, return_loading=False):
    """Invert ``A + eps * I`` with ``eps = eps_rel * Tr(A) / C``.

    LU factorisation with partial pivoting (LAPACK ``gesv``) does the actual
    solve. The result is projected back onto the Hermitian matrices.

    Raises
    ------
    SingularMatrixError
        If a loaded matrix is exactly singular or its 1-norm condition
        estimate exceeds ``1e14``; ``err.index`` names the offending matrix.
    """
    A = _check_square(A).astype(np.complex128, copy=False)
    C = A.shape[-1]
    eps = diagonal_loading(A, eps_rel)
    loaded = A + eps[..., None, None] * np.eye(C)
    batch = loaded.shape[:-2]
    flat = loaded.reshape((-1, C, C))
    try:
        inv = np.linalg.inv(flat)
    except np.linalg.LinAlgError:
        for k in range(flat.shape[0]):
            try:
                np.linalg.inv(flat[k])
            except np.linalg.LinAlgError:
                raise SingularMatrixError(
                    f"matrix at index {_index_tuple(k, batch)} is singular "
                    f"after loading eps={eps.reshape(-1)[k]:.3g}",
                    index=_index_tuple(k, batch), condition=np.inf) from None
        raise
    cond = np.abs(flat).sum(axis=-2).max(axis=-1) * np.abs(inv).sum(axis=-2).max(axis=-1)
    bad = ~np.isfinite(cond) | (cond > MAX_CONDITION)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SingularMatrixError(
            f"matrix at index {_index_tuple(k, batch)} is ill-conditioned "
            f"(cond ~ {cond[k]:.3g}) after loading eps={eps.reshape(-1)[k]:.3g}",
            index=_index_tuple(k, batch), condition=float(cond[k]))
    out = hermitian_project(inv.reshape(loaded.shape))
    if return_loading:
        return out, eps
    return out


def matvec(A, v):
    A = _check_square(A)
    v = np.asarray(v)
    if v.shape[-1] != A.shape[-1]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} vs vector {v.shape}")
    return np.einsum("...ij,...j->...i", A, v)


def inner(u, v):
    """``u^H v``, conjugate-linear in the first argument."""
    u, v = np.asarray(u), np.asarray(v)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return np.einsum("...i,...i->...", np.conj(u), v)
