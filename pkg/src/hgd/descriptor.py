"""Descriptor orchestration: variants, layout, extraction.

A descriptor concatenates, in a fixed order, one flattened region
Gaussian per (embedding, color space, strip) slot:

* embeddings: Gaussian ("gog" half) and zero-mean ("zoz" half); the
  fused "hgd" variant is the gog half followed by the zoz half;
* color spaces, always in the order RGB, Lab, HSV, nRnG;
* strips, top to bottom.

With the default geometry the totals are 27,622 (gog), 16,828 (zoz)
and 44,450 (hgd); see :func:`layout` for the arithmetic. Persisted
files and fitted models depend on this order, so it is part of the
on-disk contract, not an implementation detail.

Extraction is deterministic: identical pixels give bit-identical
descriptors, and the vector route is defined as the flattening of the
matrix-form route so the two can never drift apart.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import patches, pixels, regions, spd
from .config import RunConfig
from .errors import DimensionMismatchError, VariantMismatchError
from .patches import EmbeddingKind
from .pixels import ColorSpace

__all__ = [
    "Variant",
    "COLOR_SPACES",
    "SlotKey",
    "LayoutBlock",
    "DescriptorLayout",
    "layout",
    "slot_sides",
    "PersonDescriptor",
    "MatrixFormDescriptor",
    "extract",
    "extract_matrix_form",
    "flatten_matrix_form",
]

COLOR_SPACES = (ColorSpace.RGB, ColorSpace.LAB, ColorSpace.HSV, ColorSpace.NRNG)

# (embedding, color space, strip index)
SlotKey = tuple[EmbeddingKind, ColorSpace, int]


class Variant(enum.Enum):
    """Descriptor family: which embeddings are used at both levels."""

    GOG = "gog"
    ZOZ = "zoz"
    HGD = "hgd"

    @property
    def parts(self) -> tuple[EmbeddingKind, ...]:
        if self is Variant.GOG:
            return (EmbeddingKind.GAUSSIAN,)
        if self is Variant.ZOZ:
            return (EmbeddingKind.ZERO_MEAN,)
        return (EmbeddingKind.GAUSSIAN, EmbeddingKind.ZERO_MEAN)

    @classmethod
    def from_name(cls, name: str) -> "Variant":
        try:
            return cls(name.lower())
        except ValueError:
            raise VariantMismatchError(f"unknown variant {name!r}") from None


def slot_sides(kind: EmbeddingKind, space: ColorSpace) -> tuple[int, int]:
    """(patch matrix side, region matrix side) for one slot.

    A d-dimensional pixel feature gives patch matrices of side d+1
    (Gaussian) or d (zero-mean); the patch tangent length m = side
    (side+1)/2 then gives region matrices of side m+1 or m.
    """
    d = space.feature_dim
    patch_side = d + 1 if kind is EmbeddingKind.GAUSSIAN else d
    m = spd.vec_dim(patch_side)
    region_side = m + 1 if kind is EmbeddingKind.GAUSSIAN else m
    return patch_side, region_side


@dataclass(frozen=True)
class LayoutBlock:
    """One (embedding, color space) block of consecutive regions."""

    kind: EmbeddingKind
    space: ColorSpace
    offset: int
    region_length: int
    regions: int

    @property
    def length(self) -> int:
        return self.region_length * self.regions


@dataclass(frozen=True)
class DescriptorLayout:
    """Slot order and offsets of one descriptor variant."""

    variant: Variant
    blocks: tuple[LayoutBlock, ...]
    total_dim: int

    def slot_keys(self) -> list[SlotKey]:
        return [
            (b.kind, b.space, g) for b in self.blocks for g in range(b.regions)
        ]

    def slot_offsets(self) -> dict[SlotKey, tuple[int, int]]:
        out: dict[SlotKey, tuple[int, int]] = {}
        for b in self.blocks:
            for g in range(b.regions):
                out[(b.kind, b.space, g)] = (
                    b.offset + g * b.region_length,
                    b.region_length,
                )
        return out


def layout(variant: Variant, num_regions: int = 7) -> DescriptorLayout:
    """Block layout and total dimension of a variant.

    For the defaults: gog blocks are 7 x 1081 for the three 8-channel
    color spaces and 7 x 703 for nRnG (27,622 in total); zoz blocks are
    7 x 666 and 7 x 406 (16,828); hgd is both halves back to back
    (44,450).
    """
    blocks: list[LayoutBlock] = []
    offset = 0
    for kind in variant.parts:
        for space in COLOR_SPACES:
            _, region_side = slot_sides(kind, space)
            rlen = spd.vec_dim(region_side)
            blocks.append(LayoutBlock(kind, space, offset, rlen, num_regions))
            offset += rlen * num_regions
    return DescriptorLayout(variant, tuple(blocks), offset)


@dataclass(frozen=True)
class PersonDescriptor:
    """One person image flattened to a fixed-length vector."""

    data: np.ndarray
    variant: Variant
    num_regions: int = 7

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def layout(self) -> DescriptorLayout:
        return layout(self.variant, self.num_regions)


@dataclass(frozen=True)
class MatrixFormDescriptor:
    """Region matrices of one image, keyed by (embedding, space, strip).

    This is the input to intrinsic (Karcher pole) normalization, which
    needs the SPD matrices themselves rather than their flattening.
    """

    slots: dict[SlotKey, np.ndarray]
    variant: Variant
    num_regions: int


def _resized(img: np.ndarray, cfg: RunConfig) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatchError(
            f"expected an RGB image (H, W, 3), got {img.shape}"
        )
    if img.shape[:2] == (cfg.image_height, cfg.image_width):
        return img
    return pixels.resize_bilinear(img, cfg.image_width, cfg.image_height)


def extract_matrix_form(
    img: np.ndarray, variant: Variant, cfg: RunConfig | None = None
) -> MatrixFormDescriptor:
    """Region matrices for every slot of a variant.

    The image is resized to the configured geometry if needed. Patch
    rectangles shared by overlapping strips are computed once; each
    strip then summarizes its own patches under the centerline weights.
    """
    cfg = cfg or RunConfig()
    img = _resized(img, cfg)
    strips = regions.strip_layout(
        cfg.image_height, cfg.image_width, cfg.regions, cfg.strip_height
    )
    per_strip = [
        patches.dense_patches(s, cfg.patch_size, cfg.patch_stride) for s in strips
    ]
    rect_index: dict[patches.Rect, int] = {}
    for rects, _ in per_strip:
        for rect in rects:
            rect_index.setdefault(rect, len(rect_index))
    all_rects = list(rect_index)

    slots: dict[SlotKey, np.ndarray] = {}
    for space in COLOR_SPACES:
        fm = pixels.build_feature_map(img, space)
        ints = patches.build_integrals(fm)
        for kind in variant.parts:
            vecs = patches.patch_vectors(ints, all_rects, kind, cfg.eps0)
            for g, (rects, centers) in enumerate(per_strip):
                idx = [rect_index[r] for r in rects]
                ws = regions.patch_weight(centers, cfg.image_width)
                rg = regions.summarize_region(vecs[idx], ws, kind, cfg.eps0)
                slots[(kind, space, g)] = regions.embed_region(rg).matrix
    return MatrixFormDescriptor(slots, variant, cfg.regions)


def flatten_matrix_form(mfd: MatrixFormDescriptor) -> np.ndarray:
    """Concatenated region flattenings in layout order."""
    lay = layout(mfd.variant, mfd.num_regions)
    parts = []
    for key in lay.slot_keys():
        kind = key[0]
        rm = regions.RegionMatrix(mfd.slots[key], kind)
        parts.append(regions.flatten_region(rm))
    return np.concatenate(parts)


def extract(
    img: np.ndarray, variant: Variant, cfg: RunConfig | None = None
) -> PersonDescriptor:
    """Extract one descriptor vector.

    Defined as the flattening of :func:`extract_matrix_form`, so the
    vector and matrix routes agree exactly by construction.
    """
    mfd = extract_matrix_form(img, variant, cfg)
    return PersonDescriptor(flatten_matrix_form(mfd), variant, mfd.num_regions)
