from __future__ import annotations

import numpy as np
import pytest

from hgd import descriptor, spd
from hgd.config import RunConfig
from hgd.descriptor import COLOR_SPACES, Variant, layout
from hgd.errors import DimensionMismatchError, VariantMismatchError
from hgd.patches import EmbeddingKind
from hgd.pixels import ColorSpace


def person_image(rng, h=128, w=48):
    img = np.full((h, w, 3), 0.3)
    img[30:70, 14:34] = [0.7, 0.2, 0.2]
    img[70:110, 16:24] = [0.2, 0.3, 0.7]
    img[70:110, 24:32] = [0.2, 0.3, 0.7]
    img += rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


# ------------------------------------------------------------------- layout

def test_layout_totals():
    assert layout(Variant.GOG).total_dim == 27622
    assert layout(Variant.ZOZ).total_dim == 16828
    assert layout(Variant.HGD).total_dim == 44450


def test_layout_block_structure():
    lay = layout(Variant.GOG)
    assert [b.region_length for b in lay.blocks] == [1081, 1081, 1081, 703]
    assert [b.length for b in lay.blocks] == [7567, 7567, 7567, 4921]
    assert [b.space for b in lay.blocks] == list(COLOR_SPACES)
    assert lay.blocks[0].offset == 0
    assert lay.blocks[1].offset == 7567
    zoz = layout(Variant.ZOZ)
    assert [b.region_length for b in zoz.blocks] == [666, 666, 666, 406]


def test_layout_hgd_is_gog_then_zoz():
    lay = layout(Variant.HGD)
    kinds = [b.kind for b in lay.blocks]
    assert kinds == [EmbeddingKind.GAUSSIAN] * 4 + [EmbeddingKind.ZERO_MEAN] * 4
    assert lay.blocks[4].offset == 27622


def test_slot_sides():
    assert descriptor.slot_sides(EmbeddingKind.GAUSSIAN, ColorSpace.RGB) == (9, 46)
    assert descriptor.slot_sides(EmbeddingKind.GAUSSIAN, ColorSpace.NRNG) == (8, 37)
    assert descriptor.slot_sides(EmbeddingKind.ZERO_MEAN, ColorSpace.LAB) == (8, 36)
    assert descriptor.slot_sides(EmbeddingKind.ZERO_MEAN, ColorSpace.NRNG) == (7, 28)


def test_slot_offsets_cover_vector():
    lay = layout(Variant.HGD)
    offsets = lay.slot_offsets()
    assert len(offsets) == 56
    covered = np.zeros(lay.total_dim, dtype=bool)
    for off, length in offsets.values():
        assert not covered[off : off + length].any()
        covered[off : off + length] = True
    assert covered.all()


def test_variant_from_name():
    assert Variant.from_name("GOG") is Variant.GOG
    assert Variant.from_name("hgd") is Variant.HGD
    with pytest.raises(VariantMismatchError):
        Variant.from_name("gg")


# ---------------------------------------------------------------- extraction

@pytest.fixture(scope="module")
def small_cfg():
    # Desk-scale geometry: 3 strips of 16 rows on 32x16 images.
    return RunConfig(
        image_height=32, image_width=16, regions=3, strip_height=16,
        patch_size=5, patch_stride=2,
    )


@pytest.fixture(scope="module")
def small_image():
    rng = np.random.default_rng(7)
    return person_image(rng, 32, 16)


def test_extract_dims_small(small_cfg, small_image):
    for variant in Variant:
        desc = descriptor.extract(small_image, variant, small_cfg)
        assert desc.data.shape == (layout(variant, 3).total_dim,)
        assert np.all(np.isfinite(desc.data))
        assert desc.variant is variant


def test_extract_deterministic(small_cfg, small_image):
    a = descriptor.extract(small_image, Variant.GOG, small_cfg)
    b = descriptor.extract(small_image.copy(), Variant.GOG, small_cfg)
    assert np.array_equal(a.data, b.data)


def test_extract_equals_flattened_matrix_form(small_cfg, small_image):
    for variant in Variant:
        vec = descriptor.extract(small_image, variant, small_cfg)
        mfd = descriptor.extract_matrix_form(small_image, variant, small_cfg)
        assert np.array_equal(vec.data, descriptor.flatten_matrix_form(mfd))


def test_hgd_is_concatenation(small_cfg, small_image):
    gog = descriptor.extract(small_image, Variant.GOG, small_cfg)
    zoz = descriptor.extract(small_image, Variant.ZOZ, small_cfg)
    fused = descriptor.extract(small_image, Variant.HGD, small_cfg)
    assert np.array_equal(fused.data, np.concatenate([gog.data, zoz.data]))


def test_matrix_form_slots_are_spd_unit_det(small_cfg, small_image):
    mfd = descriptor.extract_matrix_form(small_image, Variant.HGD, small_cfg)
    assert len(mfd.slots) == 2 * 4 * 3
    for (kind, space, g), mat in mfd.slots.items():
        _, side = descriptor.slot_sides(kind, space)
        assert mat.shape == (side, side)
        assert np.allclose(mat, mat.T, atol=1e-12)
        assert np.linalg.eigvalsh(mat).min() > 0
        sign, logdet = np.linalg.slogdet(mat)
        assert sign > 0 and abs(logdet) < 1e-6


def test_extract_resizes_input(small_cfg, rng):
    img = person_image(rng, 61, 23)
    desc = descriptor.extract(img, Variant.ZOZ, small_cfg)
    assert desc.data.shape == (layout(Variant.ZOZ, 3).total_dim,)


def test_extract_rejects_gray(small_cfg):
    with pytest.raises(DimensionMismatchError):
        descriptor.extract(np.zeros((32, 16)), Variant.GOG, small_cfg)


def test_mirrored_symmetric_figure_identical(small_cfg):
    # A bilaterally symmetric figure: mirroring changes nothing, and the
    # pipeline has no hidden left/right asymmetry to break the tie.
    img = np.full((32, 16, 3), 0.25)
    img[8:18, 5:11] = [0.8, 0.3, 0.2]
    img[18:28, 5:8] = [0.2, 0.2, 0.6]
    img[18:28, 8:11] = [0.2, 0.2, 0.6]
    left = img[:, :8]
    img[:, 8:] = left[:, ::-1]
    mirrored = img[:, ::-1].copy()
    a = descriptor.extract(img, Variant.GOG, small_cfg)
    b = descriptor.extract(mirrored, Variant.GOG, small_cfg)
    assert np.allclose(a.data, b.data, atol=1e-6)


def test_full_size_extraction_dims(rng):
    img = person_image(rng)
    desc = descriptor.extract(img, Variant.GOG, RunConfig())
    assert desc.data.shape == (27622,)
    assert np.all(np.isfinite(desc.data))
