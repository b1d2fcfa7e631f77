"""Built-in invariant suites for the ``selftest`` command.

Each suite checks one family of identities at desk scale and prints a
single pass/fail line. The suites honor the active configuration, so a
broken setup (for example a zero covariance ridge) is caught rather
than papered over: with ``eps0 = 0`` a constant patch has a singular
covariance and the patch regularization suite fails, as it should.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import patches, regions, spd
from .config import RunConfig
from .descriptor import Variant, extract, layout, slot_sides
from .errors import HgdError
from .evaluation import DistanceMatrix, cmc, mean_ap, pur
from .normalize import apply_extrinsic, apply_intrinsic, fit_extrinsic, plain_l2
from .patches import EmbeddingKind
from .pixels import ColorSpace

__all__ = ["SUITES", "run_selftest"]

_SEED = 335711


def _rand_spd(rng: np.random.Generator, n: int, spread: float = 2.0) -> np.ndarray:
    a = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(a)
    w = np.exp(rng.uniform(-spread, spread, size=n))
    return (q * w) @ q.T


def _suite_manifold() -> None:
    rng = np.random.default_rng(_SEED)
    for n in (2, 8, 9, 36, 46):
        x = _rand_spd(rng, n)
        back = spd.expm(spd.logm(x))
        assert np.allclose(back, x, rtol=1e-9, atol=1e-9 * np.linalg.norm(x)), (
            f"logm/expm round trip failed at side {n}"
        )
        d_lerm = spd.lerm_distance(np.eye(n), x)
        d_airm = spd.airm_distance(np.eye(n), x)
        assert abs(d_lerm - d_airm) <= 1e-9 * max(1.0, d_airm), (
            f"LERM != AIRM at identity pole, side {n}"
        )
        a = rng.uniform(0.5, 3.0)
        lhs = spd.logm(a * x)
        rhs = spd.logm(x) + np.log(a) * np.eye(n)
        assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.linalg.norm(rhs))), (
            f"log(aX) != log(X) + ln(a) I at side {n}"
        )


def _suite_scale_normalization() -> None:
    rng = np.random.default_rng(_SEED + 1)
    for n in (3, 10, 21):
        x = _rand_spd(rng, n, spread=1.5)
        for a in (1e-4, 1e4):
            assert np.allclose(
                spd.scale_normalize(a * x), spd.scale_normalize(x), rtol=1e-9
            ), f"scale normalization is not scale invariant at side {n}"
        eta = spd.scale_normalize(x)
        assert abs(np.trace(spd.logm(eta))) <= 1e-9, "Tr log eta(X) != 0"
        direct = spd.log_scale_normalize(x)
        via_det = spd.logm(spd.scale_normalize(x))
        assert np.allclose(direct, via_det, atol=1e-9), (
            "direct tangent path disagrees with determinant path"
        )


def _suite_patch_regularization(cfg: RunConfig) -> None:
    rng = np.random.default_rng(_SEED + 2)
    rect = (0, 0, 5, 5)
    flat = np.tile(rng.random(7), (5, 5, 1))  # constant patch: zero covariance
    noisy = flat + 1e-3 * rng.standard_normal(flat.shape)
    for fmap in (flat, noisy):
        pg = patches.patch_stats(patches.build_integrals(fmap), rect)
        safe = patches.regularize_patch(pg, cfg.eps0)
        embedded = patches.gauss_embed(safe)
        spd.logm(embedded.matrix)  # must be SPD to have a logarithm
        zmg = patches.zmg_embed(pg, cfg.eps0)
        spd.logm(zmg.matrix)


def _suite_embedding_identities() -> None:
    rng = np.random.default_rng(_SEED + 3)
    for d in (4, 7, 8):
        fmap = rng.random((6, 7, d))
        pg = patches.patch_stats(patches.build_integrals(fmap), (0, 0, 6, 7))
        safe = patches.regularize_patch(pg, 1e-3)
        emb = patches.gauss_embed(safe)
        det_g = np.linalg.det(
            np.block([[safe.cov + np.outer(safe.mean, safe.mean), safe.mean[:, None]],
                      [safe.mean[None, :], np.ones((1, 1))]])
        )
        assert np.isclose(det_g, np.linalg.det(safe.cov), rtol=1e-8), (
            "|G| != |Sigma|"
        )
        xi = patches.autocorrelation(pg)
        n = pg.count
        expected = pg.cov + (n / (n - 1)) * np.outer(pg.mean, pg.mean)
        assert np.allclose(xi, expected, atol=1e-10), "Xi identity failed"
        assert np.isclose(np.linalg.det(emb.matrix), 1.0, atol=1e-7), (
            "embedded patch determinant != 1"
        )


def _suite_dimensions() -> None:
    checks = {Variant.GOG: 27622, Variant.ZOZ: 16828, Variant.HGD: 44450}
    for variant, want in checks.items():
        got = layout(variant).total_dim
        assert got == want, f"{variant.value} dimension {got} != {want}"
    region_lengths = {
        (EmbeddingKind.GAUSSIAN, ColorSpace.RGB): 1081,
        (EmbeddingKind.GAUSSIAN, ColorSpace.NRNG): 703,
        (EmbeddingKind.ZERO_MEAN, ColorSpace.RGB): 666,
        (EmbeddingKind.ZERO_MEAN, ColorSpace.NRNG): 406,
    }
    for (kind, space), want in region_lengths.items():
        _, side = slot_sides(kind, space)
        got = spd.vec_dim(side)
        assert got == want, f"region length for {kind.value}/{space.value} != {want}"
    rng = np.random.default_rng(_SEED + 4)
    img = rng.random((128, 48, 3))
    desc = extract(img, Variant.GOG)
    assert desc.dim == 27622, f"extracted gog length {desc.dim} != 27622"


def _suite_karcher() -> None:
    rng = np.random.default_rng(_SEED + 5)
    mats = [_rand_spd(rng, 10) for _ in range(5)]
    result = spd.karcher_mean(mats)
    assert result.converged and result.residual < 1e-7, (
        f"Karcher iteration did not converge (residual {result.residual:.2e})"
    )
    base = _rand_spd(rng, 6)
    commuting = [spd.expm(t * spd.logm(base)) for t in (0.5, 1.0, 2.0)]
    km = spd.karcher_mean(commuting).mean
    lem = spd.log_euclidean_mean(commuting)
    assert np.allclose(km, lem, atol=1e-8), (
        "Karcher and log-Euclidean means disagree on a commuting set"
    )
    single = _rand_spd(rng, 8)
    assert np.array_equal(spd.karcher_mean([single]).mean, single), (
        "singleton Karcher mean is not exact"
    )


def _suite_normalization(cfg: RunConfig) -> None:
    rng = np.random.default_rng(_SEED + 6)
    small = RunConfig(
        image_height=32, image_width=16, regions=3, strip_height=16,
        eps0=cfg.eps0,
    )
    imgs = [rng.random((32, 16, 3)) for _ in range(3)]
    descs = [extract(img, Variant.GOG, small) for img in imgs]
    model = fit_extrinsic(descs, Variant.GOG, small.regions)
    lay = descs[0].layout
    for desc in descs:
        normed = apply_extrinsic(model, desc)
        for block in lay.blocks:
            sl = slice(block.offset, block.offset + block.region_length * block.regions)
            norm = np.linalg.norm(normed.data[sl])
            assert abs(norm - 1.0) <= 1e-12, "extrinsic block norm != 1"
    from .descriptor import extract_matrix_form
    from .normalize import IntrinsicNormModel, SlotDiagnostics

    mfd = extract_matrix_form(imgs[0], Variant.GOG, small)
    poles = {key: np.eye(mat.shape[0]) for key, mat in mfd.slots.items()}
    eye_model = IntrinsicNormModel(
        Variant.GOG, small.regions, poles,
        {key: np.eye(mat.shape[0]) for key, mat in mfd.slots.items()},
        {key: SlotDiagnostics(0, 0.0, True) for key in mfd.slots},
    )
    via_intrinsic = apply_intrinsic(eye_model, mfd)
    via_plain = plain_l2(descs[0])
    assert np.array_equal(via_intrinsic.data, via_plain.data), (
        "identity-pole intrinsic normalization != plain blockwise L2"
    )


def _suite_evaluation() -> None:
    values = np.array([[0.9, 0.2, 0.5, 0.3], [0.1, 0.4, 0.2, 0.6]])
    dm = DistanceMatrix(
        values, ("a", "b"), (0, 0), ("a", "b", "c", "a"), (1, 1, 1, 1)
    )
    res = cmc(dm)
    assert np.allclose(res.curve, [0.0, 0.5, 1.0, 1.0]), "hand CMC mismatch"
    expected_pur = 1.0 - np.log(2.0) / np.log(3.0)
    assert np.isclose(pur(res.curve, 3), expected_pur, atol=1e-12), "hand PUR mismatch"
    assert np.isclose(pur(np.array([1.0, 1.0]), 4), 1.0), "perfect PUR != 1"
    n = 6
    assert np.isclose(pur(np.arange(1, n + 1) / n, n), 0.0, atol=1e-12), (
        "uniform PUR != 0"
    )
    toy = DistanceMatrix(
        np.array([[0.1, 0.2, 0.3]]), ("a",), (0,), ("a", "b", "a"), (1, 1, 1)
    )
    assert np.isclose(mean_ap(toy), 5.0 / 6.0, atol=1e-12), "hand mAP mismatch"


SUITES: tuple[tuple[str, Callable], ...] = (
    ("manifold identities", lambda cfg: _suite_manifold()),
    ("scale normalization", lambda cfg: _suite_scale_normalization()),
    ("patch regularization", _suite_patch_regularization),
    ("embedding identities", lambda cfg: _suite_embedding_identities()),
    ("descriptor dimensions", lambda cfg: _suite_dimensions()),
    ("karcher mean", lambda cfg: _suite_karcher()),
    ("normalization", _suite_normalization),
    ("evaluation metrics", lambda cfg: _suite_evaluation()),
)


def run_selftest(cfg: RunConfig | None = None, out=print) -> bool:
    """Run every suite; one line each; True when all pass."""
    cfg = cfg or RunConfig()
    all_ok = True
    for name, fn in SUITES:
        try:
            fn(cfg)
        except (AssertionError, HgdError, np.linalg.LinAlgError) as exc:
            all_ok = False
            reason = str(exc).strip().splitlines()[0] if str(exc).strip() else exc.__class__.__name__
            out(f"FAIL {name}: {reason}")
        else:
            out(f"PASS {name}")
    return all_ok
