"""Matching and evaluation: manifests, distances, CMC, PUR, mAP.

Datasets are described by a CSV manifest with header
``path,person_id,camera_id,split``; person ids are opaque strings,
camera ids are small integers, and paths resolve relative to the
manifest's own directory.

Distances support plain Euclidean, cosine, and a learned external
metric d(x, y) = (W^T x - W^T y)^T M (W^T x - W^T y) loaded from
projection/metric arrays; with identity W and M the external form
reduces to squared Euclidean.

The cumulative match characteristic (CMC) ranks gallery entries per
probe with stable tie-breaking (earlier gallery entry wins). The
single-shot protocol ranks raw entries; the multi-shot protocol drops
gallery images sharing the probe's camera, collapses the rest by person
id via the mean of the cross-view pair distances (the min is available
behind a flag), and ranks persons. Probes with no reachable match are
excluded from the curve but counted.

PUR = (ln N + sum_r p(r) ln p(r)) / ln N summarizes how peaked the
first-match rank distribution p(r) is against a gallery of N
identities: 1 for all rank-1 hits, 0 for ranks spread uniformly over N.
mAP follows the usual convention of hiding same-camera images of the
probe's identity from the gallery.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    ManifestError,
    NoValidProbesError,
    NonPositiveEigenvalueError,
    ZeroNormError,
)

__all__ = [
    "ManifestEntry",
    "load_manifest",
    "write_manifest",
    "split_persons",
    "ExternalMetric",
    "DistanceMatrix",
    "pairwise_distances",
    "CmcProtocol",
    "CmcResult",
    "cmc",
    "pur",
    "mean_ap",
]

MANIFEST_HEADER = ["path", "person_id", "camera_id", "split"]


@dataclass(frozen=True)
class ManifestEntry:
    """One image of one person seen by one camera."""

    path: Path
    person_id: str
    camera_id: int
    split: str = ""


def load_manifest(path: str | Path, check_paths: bool = True) -> list[ManifestEntry]:
    """Read a dataset manifest CSV.

    Relative image paths resolve against the manifest's directory.
    With ``check_paths`` every referenced file must exist.
    """
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if [h.strip() for h in header] != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: header must be {','.join(MANIFEST_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ManifestError(f"{path}:{lineno}: expected 4 columns")
            raw_path, person, camera, split = (c.strip() for c in row)
            if not person:
                raise ManifestError(f"{path}:{lineno}: empty person_id")
            try:
                cam = int(camera)
            except ValueError:
                raise ManifestError(
                    f"{path}:{lineno}: camera_id must be an integer, got {camera!r}"
                ) from None
            img = Path(raw_path)
            if not img.is_absolute():
                img = base / img
            if check_paths and not img.is_file():
                raise ManifestError(f"{path}:{lineno}: missing image {img}")
            entries.append(ManifestEntry(img, person, cam, split))
    if not entries:
        raise ManifestError(f"{path}: no entries")
    return entries


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    """Write entries back out in manifest format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in entries:
            writer.writerow([str(e.path), e.person_id, e.camera_id, e.split])


def split_persons(
    entries: list[ManifestEntry], test_fraction: float, seed: int
) -> list[ManifestEntry]:
    """Assign whole persons to train/test splits, reproducibly.

    Persons are shuffled by a PCG64 generator seeded with ``seed`` (the
    same seed always gives the same split) and the first
    round(test_fraction * count) go to "test", the rest to "train".
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ManifestError(f"test_fraction must be in [0, 1], got {test_fraction}")
    persons = sorted({e.person_id for e in entries})
    order = np.random.default_rng(seed).permutation(len(persons))
    n_test = int(round(test_fraction * len(persons)))
    test_ids = {persons[i] for i in order[:n_test]}
    return [
        replace(e, split="test" if e.person_id in test_ids else "train")
        for e in entries
    ]


@dataclass(frozen=True)
class ExternalMetric:
    """Learned metric: project with W, compare with PSD form M."""

    projection: np.ndarray  # (D, k)
    metric: np.ndarray      # (k, k)

    def __post_init__(self):
        w = np.asarray(self.projection, dtype=np.float64)
        m = np.asarray(self.metric, dtype=np.float64)
        if w.ndim != 2 or m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(
                f"projection {w.shape} / metric {m.shape} malformed"
            )
        if w.shape[1] != m.shape[0]:
            raise DimensionMismatchError(
                f"projection maps to {w.shape[1]} dims, metric is {m.shape[0]}"
            )
        if np.max(np.abs(m - m.T)) > 1e-8 * max(1.0, np.max(np.abs(m))):
            raise DimensionMismatchError("metric matrix must be symmetric")
        lam_min = float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())
        if lam_min < -1e-10 * max(1.0, np.max(np.abs(m))):
            raise NonPositiveEigenvalueError(
                f"metric matrix must be PSD (min eigenvalue {lam_min:.3e})"
            )
        object.__setattr__(self, "projection", w)
        object.__setattr__(self, "metric", 0.5 * (m + m.T))


@dataclass(frozen=True)
class DistanceMatrix:
    """Probe x gallery distances plus the metadata needed to rank them."""

    values: np.ndarray  # (P, G)
    probe_ids: tuple[str, ...]
    probe_cams: tuple[int, ...]
    gallery_ids: tuple[str, ...]
    gallery_cams: tuple[int, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionMismatchError(f"distance matrix must be 2-D, got {v.shape}")
        if v.shape != (len(self.probe_ids), len(self.gallery_ids)):
            raise DimensionMismatchError(
                f"distance shape {v.shape} vs {len(self.probe_ids)} probes, "
                f"{len(self.gallery_ids)} gallery entries"
            )
        if len(self.probe_cams) != len(self.probe_ids) or len(
            self.gallery_cams
        ) != len(self.gallery_ids):
            raise DimensionMismatchError("metadata lengths disagree")
        if not np.all(np.isfinite(v)):
            raise DimensionMismatchError("distances must be finite")
        object.__setattr__(self, "values", v)


def _euclidean(probes: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    p2 = np.sum(probes ** 2, axis=1)[:, None]
    g2 = np.sum(gallery ** 2, axis=1)[None, :]
    sq = p2 + g2 - 2.0 * (probes @ gallery.T)
    return np.sqrt(np.clip(sq, 0.0, None))


def _cosine(probes: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    pn = np.linalg.norm(probes, axis=1)
    gn = np.linalg.norm(gallery, axis=1)
    if np.any(pn == 0.0) or np.any(gn == 0.0):
        raise ZeroNormError("cosine distance undefined for zero-norm vectors")
    sim = (probes / pn[:, None]) @ (gallery / gn[:, None]).T
    return 1.0 - sim


def _external(
    probes: np.ndarray, gallery: np.ndarray, metric: ExternalMetric
) -> np.ndarray:
    if probes.shape[1] != metric.projection.shape[0]:
        raise DimensionMismatchError(
            f"descriptors of length {probes.shape[1]}, projection expects "
            f"{metric.projection.shape[0]}"
        )
    p = probes @ metric.projection
    g = gallery @ metric.projection
    # (x - y)^T M (x - y) = x^T M x + y^T M y - 2 x^T M y
    pm = p @ metric.metric
    gm = g @ metric.metric
    quad_p = np.sum(pm * p, axis=1)[:, None]
    quad_g = np.sum(gm * g, axis=1)[None, :]
    return np.clip(quad_p + quad_g - 2.0 * (pm @ g.T), 0.0, None)


def pairwise_distances(
    probes: np.ndarray,
    gallery: np.ndarray,
    metric: str | ExternalMetric = "euclidean",
    probe_ids: tuple[str, ...] | list[str] | None = None,
    probe_cams: tuple[int, ...] | list[int] | None = None,
    gallery_ids: tuple[str, ...] | list[str] | None = None,
    gallery_cams: tuple[int, ...] | list[int] | None = None,
) -> DistanceMatrix:
    """Distance matrix between probe and gallery descriptor stacks."""
    probes = np.asarray(probes, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if probes.ndim != 2 or gallery.ndim != 2:
        raise DimensionMismatchError("descriptor stacks must be (N, D)")
    if probes.shape[0] == 0 or gallery.shape[0] == 0:
        raise EmptyInputError("empty probe or gallery set")
    if probes.shape[1] != gallery.shape[1]:
        raise DimensionMismatchError(
            f"probe dim {probes.shape[1]} vs gallery dim {gallery.shape[1]}"
        )
    if isinstance(metric, ExternalMetric):
        values = _external(probes, gallery, metric)
    elif metric == "euclidean":
        values = _euclidean(probes, gallery)
    elif metric == "cosine":
        values = _cosine(probes, gallery)
    else:
        raise DimensionMismatchError(f"unknown metric {metric!r}")
    p = probes.shape[0]
    g = gallery.shape[0]
    return DistanceMatrix(
        values,
        tuple(probe_ids) if probe_ids is not None else tuple(str(i) for i in range(p)),
        tuple(probe_cams) if probe_cams is not None else tuple([0] * p),
        tuple(gallery_ids)
        if gallery_ids is not None
        else tuple(str(i) for i in range(g)),
        tuple(gallery_cams) if gallery_cams is not None else tuple([1] * g),
    )


@dataclass(frozen=True)
class CmcProtocol:
    """Ranking rules for the CMC curve."""

    shot: str = "single"          # "single" or "multi"
    collapse: str = "mean"        # multi-shot collapse: "mean" or "min"
    exclude_same_camera: bool = False  # single-shot: drop probe-camera entries

    def __post_init__(self):
        if self.shot not in ("single", "multi"):
            raise DimensionMismatchError(f"unknown shot protocol {self.shot!r}")
        if self.collapse not in ("mean", "min"):
            raise DimensionMismatchError(f"unknown collapse {self.collapse!r}")


@dataclass(frozen=True)
class CmcResult:
    """CMC curve plus probe accounting."""

    curve: np.ndarray
    valid_probes: int
    excluded_probes: int

    def at(self, rank: int) -> float:
        """Match rate at a 1-based rank, saturating beyond the curve."""
        if rank < 1:
            raise DimensionMismatchError(f"rank must be >= 1, got {rank}")
        return float(self.curve[min(rank, len(self.curve)) - 1])


def _first_match_rank_single(
    dm: DistanceMatrix, p: int, exclude_same_camera: bool
) -> tuple[int, int] | None:
    """(first match rank, ranked list length) or None if unmatched."""
    ids = np.asarray(dm.gallery_ids)
    cams = np.asarray(dm.gallery_cams)
    keep = np.ones(len(ids), dtype=bool)
    if exclude_same_camera:
        keep = cams != dm.probe_cams[p]
    matches = (ids == dm.probe_ids[p]) & keep
    if not matches.any():
        return None
    order = np.argsort(dm.values[p][keep], kind="stable")
    ranked_matches = matches[keep][order]
    rank = int(np.nonzero(ranked_matches)[0][0]) + 1
    return rank, int(keep.sum())


def _first_match_rank_multi(
    dm: DistanceMatrix, p: int, collapse: str
) -> tuple[int, int] | None:
    ids = np.asarray(dm.gallery_ids)
    cams = np.asarray(dm.gallery_cams)
    keep = cams != dm.probe_cams[p]
    if not keep.any():
        return None
    kept_ids = ids[keep]
    kept_vals = dm.values[p][keep]
    # Person order: first appearance in the gallery, for stable ties.
    persons: list[str] = []
    seen: set[str] = set()
    for pid in kept_ids:
        if pid not in seen:
            seen.add(pid)
            persons.append(pid)
    reducer = np.mean if collapse == "mean" else np.min
    collapsed = np.array([reducer(kept_vals[kept_ids == pid]) for pid in persons])
    if dm.probe_ids[p] not in seen:
        return None
    order = np.argsort(collapsed, kind="stable")
    ranked = [persons[i] for i in order]
    rank = ranked.index(dm.probe_ids[p]) + 1
    return rank, len(persons)


def cmc(dm: DistanceMatrix, protocol: CmcProtocol | None = None) -> CmcResult:
    """Cumulative match characteristic over the valid probes.

    curve[r-1] is the fraction of valid probes whose first correct
    match appears at rank <= r. The curve is monotone and ends at 1.
    """
    protocol = protocol or CmcProtocol()
    ranks: list[int] = []
    lengths: list[int] = []
    excluded = 0
    for p in range(len(dm.probe_ids)):
        if protocol.shot == "single":
            hit = _first_match_rank_single(dm, p, protocol.exclude_same_camera)
        else:
            hit = _first_match_rank_multi(dm, p, protocol.collapse)
        if hit is None:
            excluded += 1
        else:
            ranks.append(hit[0])
            lengths.append(hit[1])
    if not ranks:
        raise NoValidProbesError("no probe has a reachable gallery match")
    depth = max(lengths)
    curve = np.zeros(depth)
    for r in ranks:
        curve[r - 1] += 1.0
    curve = np.cumsum(curve) / len(ranks)
    return CmcResult(curve, len(ranks), excluded)


def pur(curve: np.ndarray, gallery_identities: int) -> float:
    """Proportion of uncertainty removed by the ranking.

    p(r) is the first-match rank distribution recovered from the CMC
    curve; PUR = (ln N + sum p ln p) / ln N with N the gallery identity
    count. Empty ranks contribute nothing.
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 1 or curve.shape[0] == 0:
        raise EmptyInputError("empty CMC curve")
    if gallery_identities < 2:
        raise DimensionMismatchError(
            f"PUR needs at least 2 gallery identities, got {gallery_identities}"
        )
    p = np.diff(np.concatenate([[0.0], curve]))
    p = p[p > 0]
    entropy = float(np.sum(p * np.log(p)))
    return (np.log(gallery_identities) + entropy) / np.log(gallery_identities)


def mean_ap(dm: DistanceMatrix) -> float:
    """Mean average precision with same-camera entries of the probe's
    identity hidden from its gallery.

    Probes with no remaining match are skipped; if every probe is
    skipped the evaluation is meaningless and raises.
    """
    ids = np.asarray(dm.gallery_ids)
    cams = np.asarray(dm.gallery_cams)
    aps: list[float] = []
    for p in range(len(dm.probe_ids)):
        junk = (ids == dm.probe_ids[p]) & (cams == dm.probe_cams[p])
        keep = ~junk
        matches = (ids == dm.probe_ids[p]) & keep
        if not matches.any():
            continue
        order = np.argsort(dm.values[p][keep], kind="stable")
        ranked_matches = matches[keep][order]
        hit_ranks = np.nonzero(ranked_matches)[0] + 1
        precisions = np.arange(1, len(hit_ranks) + 1) / hit_ranks
        aps.append(float(np.mean(precisions)))
    if not aps:
        raise NoValidProbesError("no probe has any cross-camera match")
    return float(np.mean(aps))
