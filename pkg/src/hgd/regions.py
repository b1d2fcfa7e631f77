"""Region Gaussians: strips, spatial weights, weighted moments, embeddings.

A person image is cut into horizontal strips that overlap by half their
height (for the defaults, seven 32-row strips at vertical stride 16 on
a 128-row image). Inside a strip every patch vector g_s carries a
spatial prior weight

    w_s = exp(-(x_s - W/2)^2 / (2 (W/4)^2))

favoring patches near the vertical centerline, where the person usually
is. The weighted mean and covariance (divisor: the weight sum) summarize
the strip; the summary is ridge-regularized with eps0 * trace (no floor:
at region level traces are far from zero for any non-degenerate input)
and embedded exactly like a patch, Gaussian block form of side m+1 or
autocorrelation form of side m.

Region matrices are materialized at unit determinant, so flattening is
a plain matrix log; this keeps the vector route and the matrix-form
route bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spd
from .errors import (
    DimensionMismatchError,
    EmptyRegionError,
    InconsistentLengthsError,
)
from .patches import EmbeddingKind, Rect, EPS0

__all__ = [
    "RegionGaussian",
    "RegionMatrix",
    "strip_layout",
    "patch_weight",
    "summarize_region",
    "embed_region",
    "flatten_region",
    "concat_regions",
]


@dataclass(frozen=True)
class RegionGaussian:
    """Weighted moments of the patch vectors inside one strip."""

    mean: np.ndarray
    second: np.ndarray  # covariance (Gaussian) or autocorrelation (zero-mean)
    weight_sum: float
    kind: EmbeddingKind


@dataclass(frozen=True)
class RegionMatrix:
    """A region summary embedded as a unit-determinant SPD matrix."""

    matrix: np.ndarray
    kind: EmbeddingKind


def strip_layout(
    height: int = 128,
    width: int = 48,
    count: int = 7,
    strip_height: int = 32,
) -> list[Rect]:
    """Full-width horizontal strips with equal integer stride.

    The stride is (height - strip_height) / (count - 1) and must come
    out integral; the defaults give tops 0, 16, ..., 96 (50% overlap).
    """
    if count < 1 or strip_height < 1 or strip_height > height:
        raise DimensionMismatchError(
            f"bad strip geometry: height={height}, count={count}, strip={strip_height}"
        )
    if count == 1:
        return [(0, 0, strip_height, width)]
    span = height - strip_height
    stride, rem = divmod(span, count - 1)
    if rem != 0:
        raise DimensionMismatchError(
            f"{count} strips of {strip_height} rows do not tile {height} rows "
            "with an integer stride"
        )
    return [(g * stride, 0, g * stride + strip_height, width) for g in range(count)]


def patch_weight(center_x: float | np.ndarray, width: int) -> float | np.ndarray:
    """Centerline prior exp(-(x - W/2)^2 / (2 (W/4)^2))."""
    sigma = width / 4.0
    return np.exp(-((center_x - width / 2.0) ** 2) / (2.0 * sigma ** 2))


def summarize_region(
    vectors: np.ndarray,
    weights: np.ndarray,
    kind: EmbeddingKind,
    eps0: float = EPS0,
) -> RegionGaussian:
    """Weighted Gaussian (or autocorrelation) of patch vectors.

    vectors: (N, m) patch tangent vectors; weights: (N,) positive
    spatial weights. The divisor is the weight sum, and the ridge is
    eps0 * trace of the second-moment matrix.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if vectors.ndim != 2:
        raise DimensionMismatchError(f"vectors must be (N, m), got {vectors.shape}")
    if weights.shape != (vectors.shape[0],):
        raise DimensionMismatchError(
            f"weights shape {weights.shape} does not match {vectors.shape[0]} vectors"
        )
    if vectors.shape[0] == 0:
        raise EmptyRegionError("region summary over zero patches")
    total = float(weights.sum())
    if total <= 0:
        raise EmptyRegionError("region weights sum to zero")
    m = vectors.shape[1]
    if kind is EmbeddingKind.GAUSSIAN:
        mean = (weights @ vectors) / total
        centered = vectors - mean
        second = (weights[:, None] * centered).T @ centered / total
    else:
        mean = np.zeros(m)
        second = (weights[:, None] * vectors).T @ vectors / total
    second = spd.symmetrize(second)
    if eps0 != 0.0:
        second = second + (eps0 * float(np.trace(second))) * np.eye(m)
    return RegionGaussian(mean, second, total, kind)


def embed_region(rg: RegionGaussian) -> RegionMatrix:
    """Embed a region summary as a unit-determinant SPD matrix."""
    if rg.kind is EmbeddingKind.GAUSSIAN:
        m = rg.mean.shape[0]
        block = np.zeros((m + 1, m + 1))
        block[:m, :m] = rg.second + np.outer(rg.mean, rg.mean)
        block[:m, m] = rg.mean
        block[m, :m] = rg.mean
        block[m, m] = 1.0
        return RegionMatrix(spd.scale_normalize(block), rg.kind)
    return RegionMatrix(spd.scale_normalize(rg.second), rg.kind)


def flatten_region(rm: RegionMatrix) -> np.ndarray:
    """Half-vectorized log of a region matrix.

    The matrix already has unit determinant (scale canonicalization
    happens in :func:`embed_region`), so the log needs no trace shift;
    keeping it shift-free makes this bit-identical to the tangent at an
    identity pole.
    """
    return spd.half_vectorize(spd.logm(rm.matrix))


def concat_regions(vectors: list[np.ndarray]) -> np.ndarray:
    """Concatenate per-region vectors after checking equal lengths."""
    if not vectors:
        raise EmptyRegionError("no region vectors to concatenate")
    length = vectors[0].shape[0]
    for i, v in enumerate(vectors):
        if v.ndim != 1 or v.shape[0] != length:
            raise InconsistentLengthsError(
                f"region vector {i} has shape {v.shape}, expected ({length},)"
            )
    return np.concatenate(vectors)
