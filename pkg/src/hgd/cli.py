"""Command-line front end.

Subcommands: ``extract``, ``fit-norm``, ``apply-norm``, ``match``,
``eval``, ``split``, and ``selftest``. Extraction parameters come from
defaults, then an optional ``key = value`` config file, then explicit
flags, in that order. The worker count for batch extraction comes from
``--workers``, else the ``HGD_WORKERS`` environment variable, else the
machine's available parallelism; results are written in manifest order
regardless, so the output file is bit-identical for any worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, normalize, report, storage
from .config import WORKERS_ENV, RunConfig, make_config
from .descriptor import Variant, extract_matrix_form, flatten_matrix_form
from .errors import ConfigError, HgdError
from .evaluation import CmcProtocol, ExternalMetric, pairwise_distances
from .pixels import load_image
from .selftest import run_selftest

__all__ = ["main"]

_CONFIG_FLAGS = [f.name for f in dataclasses.fields(RunConfig)]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="key = value config file")
    group = parser.add_argument_group("config overrides")
    for field in dataclasses.fields(RunConfig):
        flag = "--" + field.name.replace("_", "-")
        kind = {"int": int, "float": float, "str": str}[field.type]
        group.add_argument(flag, type=kind, default=None, help=argparse.SUPPRESS)


def _config_from(args: argparse.Namespace) -> RunConfig:
    overrides = {
        name: getattr(args, name)
        for name in _CONFIG_FLAGS
        if getattr(args, name, None) is not None
    }
    return make_config(file=args.config, **overrides)


def _workers(flag: int | None) -> int:
    if flag is not None:
        value = flag
    elif os.environ.get(WORKERS_ENV):
        try:
            value = int(os.environ[WORKERS_ENV])
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer")
    else:
        value = os.cpu_count() or 1
    if value < 1:
        raise ConfigError(f"worker count must be positive, got {value}")
    return value


def _extract_one(task):
    index, path, variant_value, cfg, want_matrix = task
    try:
        img = load_image(path)
        mfd = extract_matrix_form(img, Variant(variant_value), cfg)
        data = flatten_matrix_form(mfd)
        return index, data, (mfd.slots if want_matrix else None), None
    except Exception as exc:  # reported per image, batch continues
        return index, None, None, f"{path}: {exc}"


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    variant = Variant(cfg.variant)
    entries = evaluation.load_manifest(args.manifest)
    if not entries:
        raise HgdError("manifest holds no entries")
    workers = _workers(args.workers)
    want_matrix = args.matrix_form is not None
    tasks = [
        (i, str(e.path), variant.value, cfg, want_matrix)
        for i, e in enumerate(entries)
    ]
    results: list = [None] * len(tasks)
    if workers == 1:
        for task in tasks:
            results[task[0]] = _extract_one(task)
            _progress(task[0] + 1, len(tasks), task[1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = 0
            for index, data, slots, error in pool.map(_extract_one, tasks):
                results[index] = (index, data, slots, error)
                done += 1
                _progress(done, len(tasks), str(entries[index].path))
    failures = [r[3] for r in results if r[3] is not None]
    for message in failures:
        print(f"error: {message}", file=sys.stderr)
    kept = [(i, data, slots) for i, data, slots, err in results if err is None]
    if not kept:
        raise HgdError("every image failed to extract")
    data = np.stack([d for _, d, _ in kept])
    ids = tuple(entries[i].person_id for i, _, _ in kept)
    cams = tuple(entries[i].camera_id for i, _, _ in kept)
    dset = storage.DescriptorSet(data, variant, ids, cams, cfg.regions)
    storage.save_descriptors(dset, args.out)
    print(f"wrote {dset.count} descriptors of dim {dset.dim} to {args.out}")
    if want_matrix:
        from .descriptor import MatrixFormDescriptor

        mfds = [
            MatrixFormDescriptor(slots, variant, cfg.regions)
            for _, _, slots in kept
        ]
        storage.save_matrix_forms(mfds, ids, cams, args.matrix_form)
        print(f"wrote matrix-form cache to {args.matrix_form}")
    return 1 if failures else 0


def _progress(done: int, total: int, path: str) -> None:
    print(f"[{done}/{total}] {path}", file=sys.stderr)


def cmd_fit_norm(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    if args.mode == "el2":
        if not args.descriptors:
            raise ConfigError("fit-norm --mode el2 needs --descriptors")
        dset = storage.load_descriptors(args.descriptors)
        model = normalize.fit_extrinsic(dset.data, dset.variant, dset.num_regions)
    else:
        if not args.matrix_form:
            raise ConfigError("fit-norm --mode il2 needs --matrix-form")
        mfds, _, _ = storage.load_matrix_forms(args.matrix_form)
        model = normalize.fit_intrinsic(mfds, cfg)
        worst = max(model.diagnostics.values(), key=lambda d: d.iterations)
        stragglers = sum(1 for d in model.diagnostics.values() if not d.converged)
        print(
            f"fitted {len(model.poles)} poles; max iterations "
            f"{worst.iterations}, non-converged slots {stragglers}"
        )
    normalize.save_model(model, args.out)
    print(f"wrote {args.mode} model to {args.out}")
    return 0


def cmd_apply_norm(args: argparse.Namespace) -> int:
    model = normalize.load_model(args.model)
    if isinstance(model, normalize.ExtrinsicNormModel):
        if not args.input:
            raise ConfigError("extrinsic models need --in descriptors")
        dset = storage.load_descriptors(args.input)
        if dset.variant is not model.variant:
            from .errors import VariantMismatchError

            raise VariantMismatchError(
                f"descriptors are {dset.variant.value}, model is {model.variant.value}"
            )
        data = normalize.apply_extrinsic(model, dset.data)
        ids, cams, regions = dset.person_ids, dset.camera_ids, dset.num_regions
        variant = dset.variant
    else:
        if not args.matrix_form:
            raise ConfigError("intrinsic models need --matrix-form cache")
        mfds, ids, cams = storage.load_matrix_forms(args.matrix_form)
        rows = [normalize.apply_intrinsic(model, mfd).data for mfd in mfds]
        data = np.stack(rows)
        regions, variant = model.num_regions, model.variant
    out = storage.DescriptorSet(data, variant, ids, cams, regions)
    storage.save_descriptors(out, args.out)
    print(f"wrote {out.count} normalized descriptors to {args.out}")
    return 0


def _load_external_metric(path: str) -> ExternalMetric:
    with np.load(path) as archive:
        try:
            return ExternalMetric(archive["projection"], archive["metric"])
        except KeyError:
            raise ConfigError(
                f"{path}: metric file needs 'projection' and 'metric' arrays"
            )


def cmd_match(args: argparse.Namespace) -> int:
    probes = storage.load_descriptors(args.probe)
    gallery = storage.load_descriptors(args.gallery)
    if probes.variant is not gallery.variant:
        from .errors import VariantMismatchError

        raise VariantMismatchError(
            f"probe file is {probes.variant.value}, gallery is {gallery.variant.value}"
        )
    if args.metric == "external":
        if not args.metric_file:
            raise ConfigError("--metric external needs --metric-file")
        metric = _load_external_metric(args.metric_file)
    else:
        metric = args.metric
    dm = pairwise_distances(
        probes.data,
        gallery.data,
        metric,
        probe_ids=probes.person_ids,
        probe_cams=probes.camera_ids,
        gallery_ids=gallery.person_ids,
        gallery_cams=gallery.camera_ids,
    )
    storage.save_distances(dm, args.out)
    print(
        f"wrote {dm.values.shape[0]}x{dm.values.shape[1]} distances to {args.out}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    dm = storage.load_distances(args.distances)
    if args.manifest:
        known = {e.person_id for e in evaluation.load_manifest(args.manifest, check_paths=False)}
        unknown = (set(dm.probe_ids) | set(dm.gallery_ids)) - known
        if unknown:
            raise HgdError(
                f"distance file names ids missing from the manifest: "
                f"{sorted(unknown)[:5]}"
            )
    protocol = CmcProtocol(
        shot=args.protocol,
        collapse=args.collapse,
        exclude_same_camera=args.exclude_same_camera,
    )
    summary = report.evaluate(dm, protocol)
    paths = report.write_report(summary, dm, args.out)
    sys.stdout.write(report.format_text(summary))
    print(f"report written to {paths['text'].parent}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    entries = evaluation.load_manifest(args.manifest, check_paths=False)
    split = evaluation.split_persons(entries, args.test_fraction, args.seed)
    evaluation.write_manifest(split, args.out)
    n_test = sum(1 for e in split if e.split == "test")
    print(
        f"wrote {args.out}: {len(split) - n_test} train rows, {n_test} test rows"
    )
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    cfg = _config_from(args)
    return 0 if run_selftest(cfg) else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgd",
        description="Hierarchical Gaussian descriptors for person re-identification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract descriptors for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--matrix-form", help="also write the region-matrix cache (npz)")
    p.add_argument("--workers", type=int, default=None)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("fit-norm", help="fit a normalization model")
    p.add_argument("--mode", choices=("el2", "il2"), required=True)
    p.add_argument("--descriptors", help="descriptor file (el2)")
    p.add_argument("--matrix-form", help="matrix-form cache (il2)")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_fit_norm)

    p = sub.add_parser("apply-norm", help="apply a fitted normalization model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", help="descriptor file (extrinsic models)")
    p.add_argument("--matrix-form", help="matrix-form cache (intrinsic models)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_apply_norm)

    p = sub.add_parser("match", help="compute probe-gallery distances")
    p.add_argument("--probe", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument(
        "--metric", choices=("euclidean", "cosine", "external"), default="euclidean"
    )
    p.add_argument("--metric-file", help="npz with 'projection' and 'metric' (external)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_match)

    p = sub.add_parser("eval", help="rank a distance file and write a report")
    p.add_argument("--distances", required=True)
    p.add_argument("--manifest", help="optional manifest to cross-check ids")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--protocol", choices=("single", "multi"), default="single")
    p.add_argument("--collapse", choices=("mean", "min"), default="mean")
    p.add_argument("--exclude-same-camera", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("split", help="assign persons to train/test splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("selftest", help="run the built-in invariant suites")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except HgdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
