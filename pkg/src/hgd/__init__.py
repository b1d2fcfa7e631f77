"""Hierarchical Gaussian descriptors for person re-identification.

The package models each body strip of a pedestrian image as a Gaussian
over local patch Gaussians, flattens the resulting symmetric
positive-definite matrices into vectors, and compares people by
distances between those vectors. The public surface below covers the
full pipeline: image loading, descriptor extraction, normalization,
storage, matching, and evaluation.
"""

from __future__ import annotations

from .config import RunConfig, make_config
from .descriptor import (
    MatrixFormDescriptor,
    PersonDescriptor,
    Variant,
    extract,
    extract_matrix_form,
    flatten_matrix_form,
    layout,
)
from .errors import HgdError
from .evaluation import (
    CmcProtocol,
    DistanceMatrix,
    ExternalMetric,
    cmc,
    load_manifest,
    mean_ap,
    pairwise_distances,
    pur,
    split_persons,
    write_manifest,
)
from .normalize import (
    apply_extrinsic,
    apply_intrinsic,
    fit_extrinsic,
    fit_intrinsic,
    load_model,
    plain_l2,
    save_model,
)
from .pixels import ColorSpace, load_image
from .report import evaluate, write_report
from .selftest import run_selftest
from .storage import (
    DescriptorSet,
    load_descriptors,
    load_distances,
    load_matrix_forms,
    save_descriptors,
    save_distances,
    save_matrix_forms,
)

__version__ = "0.1.0"

__all__ = [
    "CmcProtocol",
    "ColorSpace",
    "DescriptorSet",
    "DistanceMatrix",
    "ExternalMetric",
    "HgdError",
    "MatrixFormDescriptor",
    "PersonDescriptor",
    "RunConfig",
    "Variant",
    "apply_extrinsic",
    "apply_intrinsic",
    "cmc",
    "evaluate",
    "extract",
    "extract_matrix_form",
    "fit_extrinsic",
    "fit_intrinsic",
    "flatten_matrix_form",
    "layout",
    "load_descriptors",
    "load_distances",
    "load_image",
    "load_manifest",
    "load_matrix_forms",
    "load_model",
    "make_config",
    "mean_ap",
    "pairwise_distances",
    "plain_l2",
    "pur",
    "run_selftest",
    "save_descriptors",
    "save_distances",
    "save_matrix_forms",
    "save_model",
    "split_persons",
    "write_manifest",
    "write_report",
    "__version__",
]
