"""Geometry of symmetric positive definite (SPD) matrices.

Every matrix function here goes through one primitive: the symmetric
eigendecomposition. Inputs are symmetrized as (X + X^T)/2 immediately
before each decomposition so that rounding drift accumulated upstream
(typically at the 1e-15 scale) never reaches LAPACK.

Two tangent-space conventions appear side by side:

* the affine-invariant metric (AIRM), with distance
  ``sqrt(Tr(log^2(X^{-1/2} Y X^{-1/2})))`` and the exp/log maps used by
  the Karcher mean;
* the log-Euclidean metric (LERM), ``||log X - log Y||_F``, whose
  flattening is a plain matrix logarithm.

The two agree at the identity: ``||log X||_F`` is both the AIRM and the
LERM distance from X to I, which is what makes unnormalized descriptor
flattening meaningful.

Scale normalization ``eta(X) = |X|^{-1/d} X`` has a companion
``log_scale_normalize`` computing ``log(eta(X))`` directly from the
log-eigenvalues, ``log X - (1/d) sum_j ln(lambda_j) I``. The direct path
never materializes the determinant, so it survives dimensions where
``|X|`` would underflow; its output always has exactly zero trace up to
rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AsymmetricMatrixError,
    BadLengthError,
    DimensionMismatchError,
    EmptyInputError,
    NonPositiveEigenvalueError,
)

__all__ = [
    "symmetrize",
    "sym_eig",
    "logm",
    "expm",
    "sqrtm",
    "inv_sqrtm",
    "airm_distance",
    "lerm_distance",
    "scale_normalize",
    "log_scale_normalize",
    "half_vectorize",
    "half_unvectorize",
    "vec_dim",
    "side_from_vec_dim",
    "log_euclidean_mean",
    "karcher_mean",
    "tangent_at",
    "log_eigen_split",
    "KarcherResult",
]


def symmetrize(x: np.ndarray) -> np.ndarray:
    """Return (X + X^T)/2, broadcasting over leading batch axes."""
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def _require_square(x: np.ndarray, name: str = "matrix") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise DimensionMismatchError(
            f"{name} must be square, got shape {x.shape}"
        )
    return x

def _require_symmetric(x: np.ndarray, name: str = "matrix") -> np.ndarray:
    x = _require_square(x, name)
    scale = max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
    asym = float(np.max(np.abs(x - np.swapaxes(x, -1, -2))))
    if asym > 1e-8 * scale:
        raise AsymmetricMatrixError(
            f"{name} is not symmetric: max |X - X^T| = {asym:.3e}"
        )
    return x

def _require_same_shape(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise DimensionMismatchError(
            f"operands have different shapes: {x.shape} vs {y.shape}"
        )


def sym_eig(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Parameters
    ----------
    x : ndarray, shape (..., n, n)
        Symmetric matrix (symmetrized internally before LAPACK).

    Returns
    -------
    w : ndarray, shape (..., n)
        Eigenvalues in descending order.
    u : ndarray, shape (..., n, n)
        Matching orthonormal eigenvectors as columns, so that
        ``u @ diag(w) @ u.T`` reconstructs the input.
    """
    x = _require_symmetric(x)
    w, u = np.linalg.eigh(symmetrize(x))
    return w[..., ::-1], u[..., ::-1]


def _eigh(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigendecomposition used internally (no symmetry check)."""
    return np.linalg.eigh(symmetrize(x))


def _require_positive(w: np.ndarray, context: str) -> None:
    wmin = float(np.min(w))
    if wmin <= 0.0:
        raise NonPositiveEigenvalueError(
            f"{context}: minimum eigenvalue {wmin:.6e} is not positive; "
            "input is not positive definite (is regularization enabled?)"
        )


def _sym_apply(x: np.ndarray, fn, *, positive: bool, context: str) -> np.ndarray:
    """Apply a scalar function to the eigenvalues of a symmetric matrix."""
    x = _require_square(x)
    w, u = _eigh(x)
    if positive:
        _require_positive(w, context)
    y = (u * fn(w)[..., None, :]) @ np.swapaxes(u, -1, -2)
    return symmetrize(y)


def logm(x: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm of an SPD matrix (batchable).

    Raises
    ------
    NonPositiveEigenvalueError
        If any eigenvalue is <= 0.
    """
    return _sym_apply(x, np.log, positive=True, context="logm")


def expm(x: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (batchable).

    The result is symmetric positive definite for any symmetric input.
    """
    x = _require_symmetric(x)
    return _sym_apply(x, np.exp, positive=False, context="expm")


def sqrtm(x: np.ndarray) -> np.ndarray:
    """Principal square root of an SPD matrix."""
    return _sym_apply(x, np.sqrt, positive=True, context="sqrtm")


def inv_sqrtm(x: np.ndarray) -> np.ndarray:
    """Inverse principal square root X^{-1/2} of an SPD matrix."""
    return _sym_apply(
        x, lambda w: 1.0 / np.sqrt(w), positive=True, context="inv_sqrtm"
    )


def airm_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Affine-invariant distance sqrt(Tr(log^2(X^{-1/2} Y X^{-1/2})))."""
    x = _require_square(x, "x")
    y = _require_square(y, "y")
    _require_same_shape(x, y)
    w = inv_sqrtm(x)
    inner = symmetrize(w @ y @ w)
    lam = np.linalg.eigvalsh(inner)
    _require_positive(lam, "airm_distance")
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def lerm_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Log-Euclidean distance ||log X - log Y||_F."""
    x = _require_square(x, "x")
    y = _require_square(y, "y")
    _require_same_shape(x, y)
    return float(np.linalg.norm(logm(x) - logm(y)))


def scale_normalize(x: np.ndarray) -> np.ndarray:
    """Determinant-path scale normalization eta(X) = |X|^{-1/d} X.

    The determinant enters through its logarithm (LU-based slogdet), so
    the scaling factor itself stays representable even when |X| would
    over- or underflow. For the tangent of eta(X) computed without ever
    forming it, see :func:`log_scale_normalize`.
    """
    x = _require_square(x)
    d = x.shape[-1]
    sign, logdet = np.linalg.slogdet(x)
    if sign <= 0:
        raise NonPositiveEigenvalueError(
            "scale_normalize: determinant is not positive; input is not SPD"
        )
    scale = np.exp(-logdet / d)
    if not np.isfinite(scale):
        raise FloatingPointError(
            "scale_normalize: |X|^(-1/d) overflowed; use log_scale_normalize"
        )
    return scale * x


def log_scale_normalize(x: np.ndarray) -> np.ndarray:
    """Direct-tangent path log(eta(X)) = log X - mean_j(ln lambda_j) I.

    Works entirely on log-eigenvalues, so no determinant is formed. The
    output trace is zero up to rounding. Batchable over leading axes.
    """
    x = _require_square(x)
    w, u = _eigh(x)
    _require_positive(w, "log_scale_normalize")
    lw = np.log(w)
    lw = lw - np.mean(lw, axis=-1, keepdims=True)
    y = (u * lw[..., None, :]) @ np.swapaxes(u, -1, -2)
    return symmetrize(y)


def vec_dim(side: int) -> int:
    """Length n(n+1)/2 of the half-vectorization of an n x n matrix."""
    return side * (side + 1) // 2


def side_from_vec_dim(dim: int) -> int:
    """Matrix side n such that n(n+1)/2 == dim.

    Raises
    ------
    BadLengthError
        If no integer side matches.
    """
    side = int((np.sqrt(8 * dim + 1) - 1) / 2 + 0.5)
    if vec_dim(side) != dim:
        raise BadLengthError(
            f"length {dim} is not n(n+1)/2 for any integer n"
        )
    return side


def half_vectorize(x: np.ndarray) -> np.ndarray:
    """Norm-preserving half-vectorization of a symmetric matrix.

    Layout is the diagonal first, then the strict upper triangle in
    row-major order scaled by sqrt(2), for a total of n(n+1)/2 entries.
    The sqrt(2) makes ``||half_vectorize(X)||_2 == ||X||_F``. Persisted
    descriptors depend on this exact element order. Batchable.
    """
    x = _require_symmetric(x)
    n = x.shape[-1]
    iu, ju = np.triu_indices(n, k=1)
    diag = np.diagonal(x, axis1=-2, axis2=-1)
    off = np.sqrt(2.0) * x[..., iu, ju]
    return np.concatenate([diag, off], axis=-1)


def half_unvectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`half_vectorize` (single vector)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a flat vector, got shape {v.shape}")
    n = side_from_vec_dim(v.shape[0])
    out = np.zeros((n, n))
    out[np.diag_indices(n)] = v[:n]
    iu, ju = np.triu_indices(n, k=1)
    off = v[n:] / np.sqrt(2.0)
    out[iu, ju] = off
    out[ju, iu] = off
    return out


def _as_batch(mats: Sequence[np.ndarray] | np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(mats, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != arr.shape[-2]:
        raise DimensionMismatchError(
            f"{name} expects matrices of one common square shape, got {arr.shape}"
        )
    if arr.shape[0] == 0:
        raise EmptyInputError(f"{name}: empty input")
    return arr


def log_euclidean_mean(mats: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Log-Euclidean mean exp(mean_i log A_i) of SPD matrices."""
    batch = _as_batch(mats, "log_euclidean_mean")
    return expm(np.mean(logm(batch), axis=0))


@dataclass(frozen=True)
class KarcherResult:
    """Outcome of the Karcher mean iteration.

    Attributes
    ----------
    mean : ndarray
        The returned SPD matrix; on non-convergence this is the iterate
        with the smallest residual seen.
    residual : float
        ``||mean_i log_M(A_i)||_F`` at the returned iterate.
    iterations : int
        Number of update steps performed.
    converged : bool
        Whether the residual dropped below tolerance.
    """

    mean: np.ndarray
    residual: float
    iterations: int
    converged: bool


def karcher_mean(
    mats: Sequence[np.ndarray] | np.ndarray,
    step: float = 0.5,
    tol: float = 1e-7,
    max_iters: int = 50,
) -> KarcherResult:
    """Karcher (Frechet) mean under the affine-invariant metric.

    Iterates ``M <- exp_M((step/N) sum_i log_M(A_i))`` from the
    log-Euclidean mean, stopping when the Frobenius norm of the mean
    tangent falls below ``tol``. A single input is returned unchanged
    with residual zero. Non-convergence is not an error: the best
    iterate is returned with ``converged=False`` so callers can report
    the residual.
    """
    if not 0.0 < step <= 1.0:
        raise ValueError(f"step must be in (0, 1], got {step}")
    batch = _as_batch(mats, "karcher_mean")
    if batch.shape[0] == 1:
        return KarcherResult(batch[0].copy(), 0.0, 0, True)

    m = log_euclidean_mean(batch)
    best = m
    best_residual = np.inf
    iterations = 0
    for _ in range(max_iters):
        w, u = _eigh(m)
        _require_positive(w, "karcher_mean")
        root = (u * np.sqrt(w)[None, :]) @ u.T
        inv_root = (u * (1.0 / np.sqrt(w))[None, :]) @ u.T
        tangent = np.mean(logm(inv_root @ batch @ inv_root), axis=0)
        residual = float(np.linalg.norm(root @ tangent @ root))
        if residual < best_residual:
            best, best_residual = m, residual
        if residual < tol:
            return KarcherResult(m, residual, iterations, True)
        m = symmetrize(root @ expm(step * tangent) @ root)
        iterations += 1
    return KarcherResult(best, best_residual, iterations, False)


def tangent_at(pole: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Half-vectorized AIRM tangent of X at a pole M.

    Computes ``half_vectorize(log(M^{-1/2} X M^{-1/2}))``; its Euclidean
    norm equals ``airm_distance(M, X)``.
    """
    pole = _require_square(pole, "pole")
    x = _require_square(x, "x")
    _require_same_shape(pole, x)
    w = inv_sqrtm(pole)
    return half_vectorize(logm(symmetrize(w @ x @ w)))


def log_eigen_split(x: np.ndarray) -> tuple[float, np.ndarray]:
    """Split log X = alpha*I + B with Tr(B) = 0.

    Returns ``alpha`` (the mean log-eigenvalue, i.e. ``ln|X|/d``) and the
    eigenvalues of B in descending order. B itself is
    ``log_scale_normalize(x)``. Feeding many descriptors through this
    gives the data for the alpha/beta histogram diagnostic showing how
    much of the spectrum scale normalization removes.
    """
    x = _require_square(x)
    w = np.linalg.eigvalsh(symmetrize(x))
    _require_positive(w, "log_eigen_split")
    lw = np.log(w)
    alpha = float(np.mean(lw))
    betas = (lw - alpha)[::-1]
    return alpha, betas.copy()
