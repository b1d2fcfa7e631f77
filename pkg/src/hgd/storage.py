"""Binary containers for descriptors, distance matrices, and caches.

Descriptor and distance files share one framed layout: magic ``HGDF``,
a version word, a kind byte, tagged metadata, a little-endian numeric
payload, and a trailing CRC32 over everything before it. Descriptor
payloads are stored as f32 (extraction computes in f64 and rounds once
at write, halving a 44,450-dim file); distance payloads stay f64 so a
saved matrix ranks identically to the in-memory one.

The matrix-form cache is a plain ``.npz`` archive: one stacked array
per region slot plus identity metadata. It exists only for intrinsic
normalization, which needs the SPD matrices rather than their
flattened coordinates.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .descriptor import (
    MatrixFormDescriptor,
    PersonDescriptor,
    Variant,
    layout,
)
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    DimensionMismatchError,
    EmptyInputError,
    VersionMismatchError,
)
from .evaluation import DistanceMatrix
from .patches import EmbeddingKind
from .pixels import ColorSpace

__all__ = [
    "DescriptorSet",
    "save_descriptors",
    "load_descriptors",
    "save_distances",
    "load_distances",
    "save_matrix_forms",
    "load_matrix_forms",
]

_MAGIC = b"HGDF"
_VERSION = 1
_KIND_DESCRIPTORS = 1
_KIND_DISTANCES = 2

_VARIANT_CODE = {Variant.GOG: 0, Variant.ZOZ: 1, Variant.HGD: 2}
_VARIANT_FROM_CODE = {v: k for k, v in _VARIANT_CODE.items()}
_NO_VARIANT = 255


@dataclass(frozen=True)
class DescriptorSet:
    """A batch of flattened descriptors with per-row identity metadata."""

    data: np.ndarray
    variant: Variant
    person_ids: tuple[str, ...]
    camera_ids: tuple[int, ...]
    num_regions: int = 7

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise DimensionMismatchError(
                f"descriptor data must be (count, dim), got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise DimensionMismatchError("descriptor data contains non-finite values")
        count = data.shape[0]
        if len(self.person_ids) != count or len(self.camera_ids) != count:
            raise DimensionMismatchError(
                f"{count} rows but {len(self.person_ids)} ids "
                f"and {len(self.camera_ids)} cameras"
            )
        expected = layout(self.variant, self.num_regions).total_dim
        if data.shape[1] != expected:
            raise DimensionMismatchError(
                f"{self.variant.value} with {self.num_regions} regions needs "
                f"dim {expected}, got {data.shape[1]}"
            )

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def descriptors(self) -> list[PersonDescriptor]:
        """Rows as individual descriptor objects."""
        return [
            PersonDescriptor(row, self.variant, self.num_regions)
            for row in self.data
        ]


def _pack_rows(ids, cams) -> bytes:
    out = bytearray()
    for person, cam in zip(ids, cams):
        raw = person.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise DimensionMismatchError(f"person id too long: {person[:32]}...")
        out += struct.pack("<H", len(raw)) + raw + struct.pack("<i", int(cam))
    return bytes(out)


def save_descriptors(dset: DescriptorSet, path: str | Path) -> None:
    """Write a descriptor batch; the payload is rounded to f32 here."""
    if dset.count == 0:
        raise EmptyInputError("refusing to write an empty descriptor file")
    body = bytearray(_MAGIC)
    body += struct.pack(
        "<IBBIII",
        _VERSION,
        _KIND_DESCRIPTORS,
        _VARIANT_CODE[dset.variant],
        dset.num_regions,
        dset.count,
        dset.dim,
    )
    body += _pack_rows(dset.person_ids, dset.camera_ids)
    body += dset.data.astype("<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    Path(path).write_bytes(bytes(body))


def save_distances(dm: DistanceMatrix, path: str | Path) -> None:
    """Write a probe-by-gallery distance matrix with both metadata tables."""
    body = bytearray(_MAGIC)
    body += struct.pack(
        "<IBBIII",
        _VERSION,
        _KIND_DISTANCES,
        _NO_VARIANT,
        0,
        dm.values.shape[0],
        dm.values.shape[1],
    )
    body += _pack_rows(dm.probe_ids, dm.probe_cams)
    body += _pack_rows(dm.gallery_ids, dm.gallery_cams)
    body += np.ascontiguousarray(dm.values, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    Path(path).write_bytes(bytes(body))


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

    def rows(self, count: int) -> tuple[tuple[str, ...], tuple[int, ...]]:
        ids, cams = [], []
        for _ in range(count):
            (n,) = self.unpack("<H")
            ids.append(self.take(n).decode("utf-8"))
            (cam,) = self.unpack("<i")
            cams.append(cam)
        return tuple(ids), tuple(cams)


def _open(path: str | Path, expect_kind: int) -> tuple[_Reader, int, int, int, int]:
    name = str(path)
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise BadMagicError(f"{name}: not a descriptor-container file")
    if len(blob) < 8:
        raise ChecksumMismatchError(f"{name}: truncated file")
    stored = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored:
        raise ChecksumMismatchError(f"{name}: checksum mismatch")
    r = _Reader(blob[:-4], name)
    r.take(4)
    version, kind, variant_code, num_regions, rows, cols = r.unpack("<IBBIII")
    if version != _VERSION:
        raise VersionMismatchError(f"{name}: unsupported version {version}")
    if kind != expect_kind:
        have = "distances" if kind == _KIND_DISTANCES else f"kind {kind}"
        want = "descriptors" if expect_kind == _KIND_DESCRIPTORS else "distances"
        raise VersionMismatchError(f"{name}: holds {have}, expected {want}")
    return r, variant_code, num_regions, rows, cols


def load_descriptors(path: str | Path) -> DescriptorSet:
    """Read a descriptor batch back as f64 (exact upcast of the f32 payload)."""
    r, variant_code, num_regions, count, dim = _open(path, _KIND_DESCRIPTORS)
    if variant_code not in _VARIANT_FROM_CODE:
        raise VersionMismatchError(f"{r.path}: unknown variant tag {variant_code}")
    ids, cams = r.rows(count)
    payload = np.frombuffer(r.take(count * dim * 4), dtype="<f4")
    data = payload.astype(np.float64).reshape(count, dim)
    return DescriptorSet(
        data, _VARIANT_FROM_CODE[variant_code], ids, cams, num_regions
    )


def load_distances(path: str | Path) -> DistanceMatrix:
    """Read a distance matrix saved by :func:`save_distances`."""
    r, _, _, n_probes, n_gallery = _open(path, _KIND_DISTANCES)
    probe_ids, probe_cams = r.rows(n_probes)
    gallery_ids, gallery_cams = r.rows(n_gallery)
    payload = np.frombuffer(r.take(n_probes * n_gallery * 8), dtype="<f8")
    values = payload.astype(np.float64).reshape(n_probes, n_gallery)
    return DistanceMatrix(values, probe_ids, probe_cams, gallery_ids, gallery_cams)


def _slot_name(key) -> str:
    kind, space, region = key
    return f"slot.{kind.value}.{space.value}.{region}"


def _parse_slot_name(name: str):
    _, kind, space, region = name.split(".")
    return EmbeddingKind(kind), ColorSpace(space), int(region)


def save_matrix_forms(
    mfds: list[MatrixFormDescriptor],
    person_ids,
    camera_ids,
    path: str | Path,
) -> None:
    """Cache region matrices for a batch of images as an npz archive."""
    if not mfds:
        raise EmptyInputError("no matrix-form descriptors to save")
    first = mfds[0]
    if len(person_ids) != len(mfds) or len(camera_ids) != len(mfds):
        raise DimensionMismatchError("metadata length does not match batch size")
    for m in mfds[1:]:
        if m.variant is not first.variant or m.num_regions != first.num_regions:
            raise DimensionMismatchError("mixed variants in one matrix-form cache")
    arrays = {
        "variant": np.array(first.variant.value),
        "num_regions": np.array(first.num_regions, dtype=np.int64),
        "person_ids": np.array(list(person_ids)),
        "camera_ids": np.array([int(c) for c in camera_ids], dtype=np.int64),
    }
    for key in first.slots:
        arrays[_slot_name(key)] = np.stack([m.slots[key] for m in mfds])
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_matrix_forms(
    path: str | Path,
) -> tuple[list[MatrixFormDescriptor], tuple[str, ...], tuple[int, ...]]:
    """Read back a matrix-form cache written by :func:`save_matrix_forms`."""
    with np.load(path) as archive:
        try:
            variant = Variant(str(archive["variant"]))
            num_regions = int(archive["num_regions"])
            person_ids = tuple(str(p) for p in archive["person_ids"])
            camera_ids = tuple(int(c) for c in archive["camera_ids"])
            slot_arrays = {
                _parse_slot_name(name): archive[name]
                for name in archive.files
                if name.startswith("slot.")
            }
        except (KeyError, ValueError) as exc:
            raise VersionMismatchError(f"{path}: not a matrix-form cache ({exc})")
    count = len(person_ids)
    mfds = []
    for i in range(count):
        slots = {key: arr[i] for key, arr in slot_arrays.items()}
        mfds.append(MatrixFormDescriptor(slots, variant, num_regions))
    return mfds, person_ids, camera_ids
