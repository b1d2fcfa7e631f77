"""Descriptor normalization: extrinsic (E-L2) and intrinsic (I-L2).

Both operate blockwise, one block per (embedding, color space) pair, so
the fused variant's halves are normalized independently by
construction.

Extrinsic: subtract the training mean, then scale each block to unit
Euclidean norm. Intrinsic: fit one Karcher pole per (embedding, color
space, strip) slot on the region matrices, re-express every region as
its AIRM tangent at the fitted pole, then apply the same blockwise unit
scaling. With every pole at the identity the tangent is the plain
matrix log, so intrinsic normalization degenerates to plain blockwise
L2 exactly.

Models persist to a binary container (magic ``HGDN``) with an f64
payload and a trailing CRC32, so a load after save is bit-exact.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spd
from .config import RunConfig
from .descriptor import (
    DescriptorLayout,
    MatrixFormDescriptor,
    PersonDescriptor,
    SlotKey,
    Variant,
    layout,
    slot_sides,
)
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    DimensionMismatchError,
    EmptyInputError,
    VariantMismatchError,
    VersionMismatchError,
    ZeroVectorError,
)
from .patches import EmbeddingKind
from .pixels import ColorSpace

__all__ = [
    "ExtrinsicNormModel",
    "IntrinsicNormModel",
    "SlotDiagnostics",
    "fit_extrinsic",
    "apply_extrinsic",
    "fit_intrinsic",
    "apply_intrinsic",
    "plain_l2",
    "save_model",
    "load_model",
]

_MAGIC = b"HGDN"
_VERSION = 1
_MODE_EXTRINSIC = 1
_MODE_INTRINSIC = 2

_KIND_CODE = {EmbeddingKind.GAUSSIAN: 0, EmbeddingKind.ZERO_MEAN: 1}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODE.items()}
_SPACE_CODE = {
    ColorSpace.RGB: 0, ColorSpace.LAB: 1, ColorSpace.HSV: 2, ColorSpace.NRNG: 3,
}
_SPACE_FROM_CODE = {v: k for k, v in _SPACE_CODE.items()}
_VARIANT_CODE = {Variant.GOG: 0, Variant.ZOZ: 1, Variant.HGD: 2}
_VARIANT_FROM_CODE = {v: k for k, v in _VARIANT_CODE.items()}


@dataclass(frozen=True)
class ExtrinsicNormModel:
    """Per-block training means for mean-removal L2 normalization."""

    variant: Variant
    num_regions: int
    mean: np.ndarray  # full descriptor length, f64

    @property
    def layout(self) -> DescriptorLayout:
        return layout(self.variant, self.num_regions)


@dataclass(frozen=True)
class SlotDiagnostics:
    """Karcher fit record for one slot."""

    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class IntrinsicNormModel:
    """Per-slot Karcher poles (with precomputed inverse square roots)."""

    variant: Variant
    num_regions: int
    poles: dict[SlotKey, np.ndarray]
    inv_sqrts: dict[SlotKey, np.ndarray]
    diagnostics: dict[SlotKey, SlotDiagnostics]

    @property
    def layout(self) -> DescriptorLayout:
        return layout(self.variant, self.num_regions)


def _training_matrix(
    train: list[PersonDescriptor] | np.ndarray, variant: Variant, dim: int
) -> np.ndarray:
    if isinstance(train, np.ndarray):
        data = np.asarray(train, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
    else:
        if any(d.variant is not variant for d in train):
            raise VariantMismatchError("training descriptors mix variants")
        data = np.stack([d.data for d in train]) if train else np.zeros((0, dim))
    if data.shape[0] == 0:
        raise EmptyInputError("no training descriptors")
    if data.shape[1] != dim:
        raise DimensionMismatchError(
            f"descriptors of length {data.shape[1]}, variant needs {dim}"
        )
    return data


def fit_extrinsic(
    train: list[PersonDescriptor] | np.ndarray,
    variant: Variant,
    num_regions: int = 7,
) -> ExtrinsicNormModel:
    """Mean of the training descriptors, kept at full length."""
    lay = layout(variant, num_regions)
    data = _training_matrix(train, variant, lay.total_dim)
    return ExtrinsicNormModel(variant, num_regions, data.mean(axis=0))


def _blockwise_unit(data: np.ndarray, lay: DescriptorLayout) -> np.ndarray:
    if data.shape[-1] != lay.total_dim:
        raise DimensionMismatchError(
            f"descriptor length {data.shape[-1]} does not match layout "
            f"{lay.total_dim}"
        )
    out = np.empty_like(data)
    for block in lay.blocks:
        sl = slice(block.offset, block.offset + block.length)
        chunk = data[..., sl]
        norms = np.linalg.norm(chunk, axis=-1, keepdims=True)
        if np.any(norms == 0.0):
            raise ZeroVectorError(
                f"block {block.kind.value}/{block.space.value} has zero norm; "
                "cannot normalize"
            )
        out[..., sl] = chunk / norms
    return out


def apply_extrinsic(
    model: ExtrinsicNormModel, desc: PersonDescriptor | np.ndarray
) -> PersonDescriptor | np.ndarray:
    """Centered blockwise unit normalization; accepts (D,) or (N, D) arrays."""
    if isinstance(desc, PersonDescriptor):
        if desc.variant is not model.variant:
            raise VariantMismatchError(
                f"descriptor is {desc.variant.value}, model is {model.variant.value}"
            )
        return PersonDescriptor(
            apply_extrinsic(model, desc.data), model.variant, model.num_regions
        )
    data = np.asarray(desc, dtype=np.float64)
    if data.shape[-1] != model.mean.shape[0]:
        raise DimensionMismatchError(
            f"descriptor length {data.shape[-1]} vs model {model.mean.shape[0]}"
        )
    return _blockwise_unit(data - model.mean, model.layout)


def plain_l2(
    desc: PersonDescriptor | np.ndarray,
    variant: Variant | None = None,
    num_regions: int = 7,
) -> PersonDescriptor | np.ndarray:
    """Blockwise unit normalization without centering."""
    if isinstance(desc, PersonDescriptor):
        return PersonDescriptor(
            plain_l2(desc.data, desc.variant, desc.num_regions),
            desc.variant,
            desc.num_regions,
        )
    if variant is None:
        raise DimensionMismatchError("plain_l2 on a raw array needs the variant")
    return _blockwise_unit(np.asarray(desc, dtype=np.float64), layout(variant, num_regions))


def fit_intrinsic(
    train: list[MatrixFormDescriptor],
    cfg: RunConfig | None = None,
) -> IntrinsicNormModel:
    """One Karcher pole per slot over the training region matrices.

    Non-convergent slots are kept (best iterate) and flagged in the
    diagnostics rather than failing the fit.
    """
    if not train:
        raise EmptyInputError("no training matrix-form descriptors")
    cfg = cfg or RunConfig()
    variant = train[0].variant
    num_regions = train[0].num_regions
    if any(m.variant is not variant or m.num_regions != num_regions for m in train):
        raise VariantMismatchError("training matrix forms mix variants or layouts")
    lay = layout(variant, num_regions)
    poles: dict[SlotKey, np.ndarray] = {}
    inv_sqrts: dict[SlotKey, np.ndarray] = {}
    diagnostics: dict[SlotKey, SlotDiagnostics] = {}
    for key in lay.slot_keys():
        mats = np.stack([m.slots[key] for m in train])
        res = spd.karcher_mean(
            mats, step=cfg.karcher_step, tol=cfg.karcher_tol,
            max_iters=cfg.karcher_max_iters,
        )
        poles[key] = res.mean
        inv_sqrts[key] = spd.inv_sqrtm(res.mean)
        diagnostics[key] = SlotDiagnostics(res.iterations, res.residual, res.converged)
    return IntrinsicNormModel(variant, num_regions, poles, inv_sqrts, diagnostics)


def apply_intrinsic(
    model: IntrinsicNormModel, mfd: MatrixFormDescriptor
) -> PersonDescriptor:
    """Tangent coordinates at the fitted poles, blockwise unit scaled."""
    if mfd.variant is not model.variant or mfd.num_regions != model.num_regions:
        raise VariantMismatchError(
            f"matrix form is {mfd.variant.value}/{mfd.num_regions} regions, "
            f"model is {model.variant.value}/{model.num_regions}"
        )
    lay = model.layout
    parts = []
    for key in lay.slot_keys():
        w = model.inv_sqrts[key]
        a = mfd.slots[key]
        if a.shape != w.shape:
            raise DimensionMismatchError(
                f"slot {key}: matrix side {a.shape[0]} vs pole side {w.shape[0]}"
            )
        parts.append(spd.half_vectorize(spd.logm(w @ a @ w)))
    return PersonDescriptor(
        _blockwise_unit(np.concatenate(parts), lay), model.variant,
        model.num_regions,
    )


# --------------------------------------------------------------- persistence

def _pack_extrinsic(model: ExtrinsicNormModel) -> bytes:
    lay = model.layout
    head = [
        _MAGIC,
        struct.pack(
            "<IBBII",
            _VERSION,
            _MODE_EXTRINSIC,
            _VARIANT_CODE[model.variant],
            model.num_regions,
            len(lay.blocks),
        ),
    ]
    for block in lay.blocks:
        head.append(
            struct.pack(
                "<BBI", _KIND_CODE[block.kind], _SPACE_CODE[block.space], block.length
            )
        )
    head.append(np.ascontiguousarray(model.mean, dtype="<f8").tobytes())
    body = b"".join(head)
    return body + struct.pack("<I", zlib.crc32(body))


def _pack_intrinsic(model: IntrinsicNormModel) -> bytes:
    lay = model.layout
    keys = lay.slot_keys()
    head = [
        _MAGIC,
        struct.pack(
            "<IBBII",
            _VERSION,
            _MODE_INTRINSIC,
            _VARIANT_CODE[model.variant],
            model.num_regions,
            len(keys),
        ),
    ]
    payload = []
    for key in keys:
        kind, space, region = key
        side = model.poles[key].shape[0]
        diag = model.diagnostics[key]
        head.append(
            struct.pack(
                "<BBIIIdB",
                _KIND_CODE[kind],
                _SPACE_CODE[space],
                region,
                side,
                diag.iterations,
                diag.residual,
                int(diag.converged),
            )
        )
        payload.append(np.ascontiguousarray(model.poles[key], dtype="<f8").tobytes())
        payload.append(np.ascontiguousarray(model.inv_sqrts[key], dtype="<f8").tobytes())
    body = b"".join(head) + b"".join(payload)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(
    model: ExtrinsicNormModel | IntrinsicNormModel, path: str | Path
) -> None:
    """Write a normalization model to its binary container."""
    if isinstance(model, ExtrinsicNormModel):
        blob = _pack_extrinsic(model)
    else:
        blob = _pack_intrinsic(model)
    Path(path).write_bytes(blob)


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ChecksumMismatchError(f"{self.path}: truncated file")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _check_crc(blob: bytes, path: str) -> bytes:
    if len(blob) < 4:
        raise ChecksumMismatchError(f"{path}: truncated file")
    body, tail = blob[:-4], blob[-4:]
    (stored,) = struct.unpack("<I", tail)
    if zlib.crc32(body) != stored:
        raise ChecksumMismatchError(f"{path}: checksum mismatch")
    return body


def load_model(path: str | Path) -> ExtrinsicNormModel | IntrinsicNormModel:
    """Read a normalization model; the inverse of :func:`save_model`."""
    blob = Path(path).read_bytes()
    name = str(path)
    if blob[:4] != _MAGIC:
        raise BadMagicError(f"{name}: not a normalization model file")
    body = _check_crc(blob, name)
    r = _Reader(body, name)
    r.take(4)
    version, mode, variant_code, num_regions, count = r.unpack("<IBBII")
    if version != _VERSION:
        raise VersionMismatchError(f"{name}: unsupported version {version}")
    if variant_code not in _VARIANT_FROM_CODE:
        raise VersionMismatchError(f"{name}: unknown variant tag {variant_code}")
    variant = _VARIANT_FROM_CODE[variant_code]
    if mode == _MODE_EXTRINSIC:
        lengths = []
        for _ in range(count):
            kind_code, space_code, length = r.unpack("<BBI")
            if kind_code not in _KIND_FROM_CODE or space_code not in _SPACE_FROM_CODE:
                raise VersionMismatchError(f"{name}: unknown block tags")
            lengths.append(length)
        total = sum(lengths)
        mean = np.frombuffer(r.take(total * 8), dtype="<f8").copy()
        expected = layout(variant, num_regions).total_dim
        if mean.shape[0] != expected:
            raise VersionMismatchError(
                f"{name}: payload length {mean.shape[0]} does not match layout"
            )
        return ExtrinsicNormModel(variant, num_regions, mean)
    if mode != _MODE_INTRINSIC:
        raise VersionMismatchError(f"{name}: unknown model mode {mode}")
    entries = []
    for _ in range(count):
        kind_code, space_code, region, side, iters, residual, conv = r.unpack(
            "<BBIIIdB"
        )
        if kind_code not in _KIND_FROM_CODE or space_code not in _SPACE_FROM_CODE:
            raise VersionMismatchError(f"{name}: unknown slot tags")
        entries.append(
            ((_KIND_FROM_CODE[kind_code], _SPACE_FROM_CODE[space_code], region),
             side, SlotDiagnostics(iters, residual, bool(conv)))
        )
    poles: dict[SlotKey, np.ndarray] = {}
    inv_sqrts: dict[SlotKey, np.ndarray] = {}
    diagnostics: dict[SlotKey, SlotDiagnostics] = {}
    for key, side, diag in entries:
        kind, space, _ = key
        expected_side = slot_sides(kind, space)[1]
        if side != expected_side:
            raise VersionMismatchError(
                f"{name}: slot {key} side {side}, layout expects {expected_side}"
            )
        poles[key] = np.frombuffer(r.take(side * side * 8), dtype="<f8").reshape(
            side, side
        ).copy()
        inv_sqrts[key] = np.frombuffer(r.take(side * side * 8), dtype="<f8").reshape(
            side, side
        ).copy()
        diagnostics[key] = diag
    model = IntrinsicNormModel(variant, num_regions, poles, inv_sqrts, diagnostics)
    if set(model.layout.slot_keys()) != set(poles):
        raise VersionMismatchError(f"{name}: slot table does not match layout")
    return model
