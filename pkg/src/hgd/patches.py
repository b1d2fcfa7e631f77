"""Patch Gaussians via integral images, and their SPD embeddings.

Dense k x k patches tile each region at stride p. Their first and
second moments come from exclusive-prefix integral images, so every
patch costs four corner lookups regardless of k. A patch's covariance
is ridge-regularized with

    eps_s = eps0 * max(Tr(Sigma_s), 1e-2)

whose floor keeps near-constant patches positive definite.

Two embeddings into SPD matrices are supported:

* Gaussian: G_s = [[Sigma + mu mu^T, mu], [mu^T, 1]], side d+1, with
  det(G_s) == det(Sigma_s);
* zero-mean (autocorrelation): Xi_s = Sigma + n/(n-1) mu mu^T, side d,
  which equals the raw second moment divided by (n-1).

Both are scale-normalized to unit determinant. Flattening takes the
direct-tangent route (log_scale_normalize followed by half_vectorize),
which never forms the determinant and is indifferent to whether the
matrix was already normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
import enum

import numpy as np

from . import spd
from .errors import (
    DimensionMismatchError,
    RegionTooSmallError,
    TooFewPixelsError,
)

__all__ = [
    "EPS0",
    "TRACE_FLOOR",
    "Rect",
    "PatchGaussian",
    "EmbeddedPatch",
    "EmbeddingKind",
    "IntegralImages",
    "build_integrals",
    "rect_sums",
    "patch_stats",
    "regularize_patch",
    "autocorrelation",
    "gauss_embed",
    "zmg_embed",
    "flatten_patch",
    "dense_patches",
    "patch_vectors",
]

EPS0 = 1e-3
TRACE_FLOOR = 1e-2

# (row0, col0, row1, col1), rows [row0, row1), cols [col0, col1)
Rect = tuple[int, int, int, int]


class EmbeddingKind(enum.Enum):
    GAUSSIAN = "gaussian"
    ZERO_MEAN = "zero_mean"


@dataclass(frozen=True)
class PatchGaussian:
    """First/second moments of the pixel features inside one patch."""

    mean: np.ndarray
    cov: np.ndarray
    count: int
    rect: Rect


@dataclass(frozen=True)
class EmbeddedPatch:
    """A patch mapped to a unit-determinant SPD matrix."""

    matrix: np.ndarray
    kind: EmbeddingKind
    rect: Rect


@dataclass(frozen=True)
class IntegralImages:
    """Exclusive prefix sums of the feature map and its outer products.

    ``sum1[r, c]`` holds the feature sum over rows [0, r) x cols [0, c),
    so a rectangle reduces to the usual four-corner combination; sum2
    does the same for f f^T.
    """

    sum1: np.ndarray  # (H+1, W+1, d)
    sum2: np.ndarray  # (H+1, W+1, d, d)

    @property
    def height(self) -> int:
        return self.sum1.shape[0] - 1

    @property
    def width(self) -> int:
        return self.sum1.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.sum1.shape[2]


def build_integrals(feature_map: np.ndarray) -> IntegralImages:
    """Integral images of a (H, W, d) feature map."""
    fm = np.asarray(feature_map, dtype=np.float64)
    if fm.ndim != 3:
        raise DimensionMismatchError(
            f"expected a feature map of shape (H, W, d), got {fm.shape}"
        )
    h, w, d = fm.shape
    sum1 = np.zeros((h + 1, w + 1, d))
    np.cumsum(np.cumsum(fm, axis=0), axis=1, out=sum1[1:, 1:])
    outer = fm[:, :, :, None] * fm[:, :, None, :]
    sum2 = np.zeros((h + 1, w + 1, d, d))
    np.cumsum(np.cumsum(outer, axis=0), axis=1, out=sum2[1:, 1:])
    return IntegralImages(sum1, sum2)


def _rect_array(rects: np.ndarray | list[Rect]) -> np.ndarray:
    arr = np.asarray(rects, dtype=np.intp)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise DimensionMismatchError(f"rects must be (N, 4), got {arr.shape}")
    return arr


def rect_sums(
    integrals: IntegralImages, rects: np.ndarray | list[Rect]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feature sums, outer-product sums and pixel counts per rectangle."""
    arr = _rect_array(rects)
    r0, c0, r1, c1 = arr.T
    if np.any(r0 < 0) or np.any(c0 < 0) or np.any(r1 > integrals.height) or np.any(
        c1 > integrals.width
    ) or np.any(r1 <= r0) or np.any(c1 <= c0):
        raise DimensionMismatchError("rectangle out of bounds or empty")
    s1 = (
        integrals.sum1[r1, c1]
        - integrals.sum1[r0, c1]
        - integrals.sum1[r1, c0]
        + integrals.sum1[r0, c0]
    )
    s2 = (
        integrals.sum2[r1, c1]
        - integrals.sum2[r0, c1]
        - integrals.sum2[r1, c0]
        + integrals.sum2[r0, c0]
    )
    counts = (r1 - r0) * (c1 - c0)
    return s1, s2, counts


def _moments(
    s1: np.ndarray, s2: np.ndarray, counts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n = counts[..., None].astype(np.float64)
    mu = s1 / n
    nn = counts[..., None, None].astype(np.float64)
    cov = (s2 - nn * (mu[..., :, None] * mu[..., None, :])) / (nn - 1.0)
    return mu, spd.symmetrize(cov)


def patch_stats(integrals: IntegralImages, rect: Rect) -> PatchGaussian:
    """Unbiased mean/covariance of the features inside one rectangle."""
    s1, s2, counts = rect_sums(integrals, [rect])
    if counts[0] < 2:
        raise TooFewPixelsError(
            f"rect {rect} holds {counts[0]} pixel(s); covariance needs at least 2"
        )
    mu, cov = _moments(s1, s2, counts)
    return PatchGaussian(mu[0], cov[0], int(counts[0]), tuple(rect))


def _epsilon(trace: np.ndarray | float, eps0: float) -> np.ndarray | float:
    return eps0 * np.maximum(trace, TRACE_FLOOR)


def regularize_patch(pg: PatchGaussian, eps0: float = EPS0) -> PatchGaussian:
    """Add eps0 * max(Tr(Sigma), 1e-2) to the covariance diagonal."""
    eps = _epsilon(float(np.trace(pg.cov)), eps0)
    cov = pg.cov + eps * np.eye(pg.cov.shape[0])
    return PatchGaussian(pg.mean, cov, pg.count, pg.rect)


def autocorrelation(pg: PatchGaussian) -> np.ndarray:
    """Raw autocorrelation Xi = Sigma + n/(n-1) mu mu^T (no ridge)."""
    n = pg.count
    return spd.symmetrize(pg.cov + (n / (n - 1.0)) * np.outer(pg.mean, pg.mean))


def gauss_embed(pg: PatchGaussian) -> EmbeddedPatch:
    """Embed a (regularized) patch Gaussian as a unit-determinant SPD matrix.

    The block form [[Sigma + mu mu^T, mu], [mu^T, 1]] has the same
    determinant as Sigma itself, then the whole matrix is scale
    normalized.
    """
    g = _gauss_block(pg.mean, pg.cov)
    return EmbeddedPatch(spd.scale_normalize(g), EmbeddingKind.GAUSSIAN, pg.rect)


def zmg_embed(pg: PatchGaussian, eps0: float = EPS0) -> EmbeddedPatch:
    """Embed a raw patch through its regularized autocorrelation matrix.

    Takes an *unregularized* patch: the ridge applies to Xi itself,
    eps_s = eps0 * max(Tr(Xi), 1e-2), then Xi is scale normalized. Pass
    eps0=0 to skip the ridge.
    """
    xi = autocorrelation(pg)
    if eps0 != 0.0:
        xi = xi + _epsilon(float(np.trace(xi)), eps0) * np.eye(xi.shape[0])
    return EmbeddedPatch(spd.scale_normalize(xi), EmbeddingKind.ZERO_MEAN, pg.rect)


def _gauss_block(mu: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = mu.shape[-1]
    g = np.zeros(mu.shape[:-1] + (d + 1, d + 1))
    g[..., :d, :d] = cov + mu[..., :, None] * mu[..., None, :]
    g[..., :d, d] = mu
    g[..., d, :d] = mu
    g[..., d, d] = 1.0
    return g


def flatten_patch(ep: EmbeddedPatch) -> np.ndarray:
    """Tangent vector of an embedded patch at the identity.

    half_vectorize(log_scale_normalize(matrix)): the direct-tangent
    route, which tolerates matrices whose determinant over/underflows
    and leaves already-normalized matrices unchanged.
    """
    return spd.half_vectorize(spd.log_scale_normalize(ep.matrix))


def dense_patches(
    region: Rect, size: int, stride: int
) -> tuple[list[Rect], np.ndarray]:
    """All size x size windows inside a region at the given stride.

    Windows anchor at the region's top-left corner and must lie fully
    inside it. Returns the rectangles in row-major order together with
    each window's center column (used for the spatial prior weight).
    """
    r0, c0, r1, c1 = region
    if size <= 0 or stride <= 0:
        raise RegionTooSmallError(f"size and stride must be positive, got {size}, {stride}")
    if r1 - r0 < size or c1 - c0 < size:
        raise RegionTooSmallError(
            f"region {region} is smaller than a {size}x{size} patch"
        )
    rows = range(r0, r1 - size + 1, stride)
    cols = range(c0, c1 - size + 1, stride)
    rects = [(r, c, r + size, c + size) for r in rows for c in cols]
    centers = np.array([c + (size - 1) / 2.0 for _, c, _, _ in rects])
    return rects, centers


def patch_vectors(
    integrals: IntegralImages,
    rects: list[Rect] | np.ndarray,
    kind: EmbeddingKind,
    eps0: float = EPS0,
) -> np.ndarray:
    """Flattened embeddings for a batch of patches in one pass.

    Equivalent to stats -> regularize -> embed -> flatten per patch, but
    with batched eigendecompositions and without materializing the
    normalized matrices (the log is shifted to zero trace directly).
    Returns an (N, m(m+1)/2) array, m = d+1 for Gaussian, d for
    zero-mean.
    """
    arr = _rect_array(rects)
    s1, s2, counts = rect_sums(integrals, arr)
    if np.any(counts < 2):
        raise TooFewPixelsError("every patch needs at least 2 pixels")
    mu, cov = _moments(s1, s2, counts)
    if kind is EmbeddingKind.GAUSSIAN:
        traces = np.trace(cov, axis1=-2, axis2=-1)
        eps = _epsilon(traces, eps0) if eps0 != 0.0 else np.zeros_like(traces)
        d = cov.shape[-1]
        cov = cov + eps[:, None, None] * np.eye(d)
        mats = _gauss_block(mu, cov)
    else:
        nn = counts[:, None, None].astype(np.float64)
        xi = spd.symmetrize(cov + (nn / (nn - 1.0)) * (mu[:, :, None] * mu[:, None, :]))
        if eps0 != 0.0:
            traces = np.trace(xi, axis1=-2, axis2=-1)
            xi = xi + _epsilon(traces, eps0)[:, None, None] * np.eye(xi.shape[-1])
        mats = xi
    return spd.half_vectorize(spd.log_scale_normalize(mats))
