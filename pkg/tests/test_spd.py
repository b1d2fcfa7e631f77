from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg

from hgd import spd
from hgd.errors import (
    AsymmetricMatrixError,
    BadLengthError,
    DimensionMismatchError,
    EmptyInputError,
    NonPositiveEigenvalueError,
)

from conftest import rand_spd, rand_sym

SIDES = [2, 8, 9, 36, 46]


# ---------------------------------------------------------------- log / exp

@pytest.mark.parametrize("n", SIDES)
def test_log_exp_round_trip(rng, n):
    x = rand_spd(rng, n)
    back = spd.expm(spd.logm(x))
    assert np.linalg.norm(back - x) <= 1e-9 * np.linalg.norm(x)


@pytest.mark.parametrize("n", SIDES)
def test_exp_log_round_trip(rng, n):
    s = rand_sym(rng, n)
    back = spd.logm(spd.expm(s))
    assert np.linalg.norm(back - s) <= 1e-9 * max(1.0, np.linalg.norm(s))


@pytest.mark.parametrize("n", [3, 9, 20])
def test_logm_matches_scipy(rng, n):
    # scipy's logm is Schur/Pade based, an independent route entirely.
    x = rand_spd(rng, n)
    expected = scipy.linalg.logm(x)
    assert np.allclose(spd.logm(x), expected, atol=1e-10)


@pytest.mark.parametrize("n", [3, 9, 20])
def test_expm_matches_scipy(rng, n):
    s = rand_sym(rng, n)
    assert np.allclose(spd.expm(s), scipy.linalg.expm(s), atol=1e-10)


def test_logm_diagonal_exact():
    x = np.diag([np.e ** 2, 1.0, np.e ** -1])
    assert np.allclose(spd.logm(x), np.diag([2.0, 0.0, -1.0]), atol=1e-14)


def test_logm_rejects_non_spd():
    with pytest.raises(NonPositiveEigenvalueError):
        spd.logm(np.diag([1.0, -0.5]))
    with pytest.raises(NonPositiveEigenvalueError):
        spd.logm(np.diag([1.0, 0.0]))


def test_expm_rejects_asymmetric():
    with pytest.raises(AsymmetricMatrixError):
        spd.expm(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_logm_batched_matches_loop(rng):
    batch = np.stack([rand_spd(rng, 6) for _ in range(5)])
    stacked = spd.logm(batch)
    for i in range(5):
        assert np.allclose(stacked[i], spd.logm(batch[i]), atol=1e-12)


def test_log_linearity_under_scaling(rng):
    # log(a X) == log(X) + ln(a) I
    x = rand_spd(rng, 9)
    base = spd.logm(x)
    for a in [1e-4, 0.5, 7.0, 1e4]:
        expected = base + np.log(a) * np.eye(9)
        got = spd.logm(a * x)
        assert np.linalg.norm(got - expected) <= 1e-9 * max(
            1.0, np.linalg.norm(expected)
        )


# ---------------------------------------------------------------- sym_eig

def test_sym_eig_descending_orthonormal_reconstructs(rng):
    x = rand_sym(rng, 12)
    w, u = spd.sym_eig(x)
    assert np.all(np.diff(w) <= 1e-12)
    assert np.allclose(u.T @ u, np.eye(12), atol=1e-10)
    assert np.allclose((u * w) @ u.T, x, atol=1e-10)


# ---------------------------------------------------------------- distances

def test_distances_at_identity_equal_log_norm(rng):
    # ||log X||_F is simultaneously the AIRM and LERM distance to I.
    for n in SIDES:
        x = rand_spd(rng, n)
        ref = np.linalg.norm(spd.logm(x))
        eye = np.eye(n)
        assert abs(spd.airm_distance(x, eye) - ref) <= 1e-9 * max(1.0, ref)
        assert abs(spd.lerm_distance(x, eye) - ref) <= 1e-9 * max(1.0, ref)


def test_airm_symmetry_and_identity(rng):
    x = rand_spd(rng, 7)
    y = rand_spd(rng, 7)
    assert abs(spd.airm_distance(x, y) - spd.airm_distance(y, x)) < 1e-9
    assert spd.airm_distance(x, x) < 1e-9


def test_airm_affine_invariance(rng):
    x = rand_spd(rng, 6)
    y = rand_spd(rng, 6)
    a = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    d0 = spd.airm_distance(x, y)
    d1 = spd.airm_distance(a @ x @ a.T, a @ y @ a.T)
    assert abs(d0 - d1) <= 1e-8 * max(1.0, d0)


def test_distance_shape_mismatch():
    with pytest.raises(DimensionMismatchError):
        spd.airm_distance(np.eye(3), np.eye(4))
    with pytest.raises(DimensionMismatchError):
        spd.lerm_distance(np.eye(3), np.eye(4))


# ------------------------------------------------------- scale normalization

@pytest.mark.parametrize("n", SIDES)
def test_scale_normalize_unit_determinant(rng, n):
    y = spd.scale_normalize(rand_spd(rng, n))
    sign, logdet = np.linalg.slogdet(y)
    assert sign > 0
    assert abs(logdet) < 1e-9


@pytest.mark.parametrize("a", [1e-4, 1e4])
def test_scale_normalize_scale_invariant(rng, a):
    x = rand_spd(rng, 46)
    base = spd.scale_normalize(x)
    scaled = spd.scale_normalize(a * x)
    assert np.linalg.norm(scaled - base) <= 1e-9 * np.linalg.norm(base)


def test_log_scale_normalize_zero_trace(rng):
    for n in SIDES:
        b = spd.log_scale_normalize(rand_spd(rng, n))
        assert abs(np.trace(b)) < 1e-9


def test_direct_tangent_equals_determinant_path(rng):
    # log_scale_normalize must agree with log(scale_normalize(X)): the
    # former is eigh-only, the latter goes through an LU determinant.
    for n in SIDES:
        x = rand_spd(rng, n)
        direct = spd.log_scale_normalize(x)
        via_det = spd.logm(spd.scale_normalize(x))
        assert np.linalg.norm(direct - via_det) <= 1e-9 * max(
            1.0, np.linalg.norm(direct)
        )


def test_log_scale_normalize_scale_invariant(rng):
    x = rand_spd(rng, 9)
    base = spd.log_scale_normalize(x)
    for a in [1e-4, 1e4]:
        assert np.allclose(spd.log_scale_normalize(a * x), base, atol=1e-9)


def test_scale_normalize_rejects_non_positive():
    with pytest.raises(NonPositiveEigenvalueError):
        spd.scale_normalize(np.diag([1.0, -2.0]))


# ---------------------------------------------------------- half-vectorization

def test_half_vectorize_frozen_example():
    x = np.array([[1.0, 3.0], [3.0, 2.0]])
    expected = np.array([1.0, 2.0, 3.0 * np.sqrt(2.0)])
    assert np.allclose(spd.half_vectorize(x), expected, atol=1e-15)


@pytest.mark.parametrize("n", SIDES)
def test_half_vectorize_preserves_norm(rng, n):
    x = rand_sym(rng, n)
    v = spd.half_vectorize(x)
    assert v.shape == (n * (n + 1) // 2,)
    assert abs(np.linalg.norm(v) - np.linalg.norm(x)) <= 1e-12 * max(
        1.0, np.linalg.norm(x)
    )


def test_half_vectorize_round_trip(rng):
    x = rand_sym(rng, 11)
    assert np.allclose(spd.half_unvectorize(spd.half_vectorize(x)), x, atol=1e-14)


def test_half_vectorize_row_major_order():
    # Strict upper triangle must appear row by row after the diagonal.
    x = np.array(
        [
            [0.0, 1.0, 2.0],
            [1.0, 0.0, 3.0],
            [2.0, 3.0, 0.0],
        ]
    )
    v = spd.half_vectorize(x)
    assert np.allclose(v[3:] / np.sqrt(2.0), [1.0, 2.0, 3.0])


def test_half_unvectorize_rejects_bad_length():
    with pytest.raises(BadLengthError):
        spd.half_unvectorize(np.zeros(5))
    assert spd.side_from_vec_dim(1081) == 46
    assert spd.side_from_vec_dim(703) == 37
    with pytest.raises(BadLengthError):
        spd.side_from_vec_dim(704)


def test_half_vectorize_batched(rng):
    batch = np.stack([rand_sym(rng, 5) for _ in range(4)])
    vv = spd.half_vectorize(batch)
    assert vv.shape == (4, 15)
    for i in range(4):
        assert np.allclose(vv[i], spd.half_vectorize(batch[i]))


# ---------------------------------------------------------------- means

def test_log_euclidean_mean_of_commuting(rng):
    a = np.diag([1.0, 4.0, 9.0])
    b = np.diag([4.0, 1.0, 1.0])
    expected = np.diag([2.0, 2.0, 3.0])
    assert np.allclose(spd.log_euclidean_mean([a, b]), expected, atol=1e-12)


def test_karcher_singleton_exact(rng):
    x = rand_spd(rng, 8)
    res = spd.karcher_mean([x])
    assert res.converged and res.iterations == 0 and res.residual == 0.0
    assert np.array_equal(res.mean, x)


def test_karcher_pair_is_geodesic_midpoint(rng):
    a = rand_spd(rng, 6)
    b = rand_spd(rng, 6)
    res = spd.karcher_mean([a, b], tol=1e-12)
    assert res.converged
    da = spd.airm_distance(a, res.mean)
    db = spd.airm_distance(b, res.mean)
    assert abs(da - db) < 1e-7
    # Independent oracle: the AIRM midpoint has the closed form
    # A^(1/2) (A^(-1/2) B A^(-1/2))^(1/2) A^(1/2).
    ra = scipy.linalg.sqrtm(a)
    ira = np.linalg.inv(ra)
    mid = ra @ scipy.linalg.sqrtm(ira @ b @ ira) @ ra
    assert np.allclose(res.mean, np.real(mid), atol=1e-7)


def test_karcher_commuting_family_equals_log_euclidean(rng):
    mats = [np.diag(np.exp(rng.uniform(-1, 1, size=5))) for _ in range(6)]
    res = spd.karcher_mean(mats)
    assert res.converged
    le = spd.log_euclidean_mean(mats)
    assert np.linalg.norm(res.mean - le) <= 1e-8 * np.linalg.norm(le)


def test_karcher_identical_inputs(rng):
    x = rand_spd(rng, 7)
    res = spd.karcher_mean([x] * 4)
    assert res.converged
    assert np.allclose(res.mean, x, atol=1e-12 * np.linalg.norm(x))


def test_karcher_converges_on_random_sets(rng):
    for trial in range(3):
        mats = [rand_spd(rng, 10) for _ in range(5)]
        res = spd.karcher_mean(mats, step=0.5, tol=1e-7, max_iters=50)
        assert res.converged, f"trial {trial}: residual {res.residual}"
        assert res.residual < 1e-7
        assert res.iterations <= 50


def test_karcher_empty_and_bad_step(rng):
    with pytest.raises(EmptyInputError):
        spd.karcher_mean(np.zeros((0, 4, 4)))
    with pytest.raises(ValueError):
        spd.karcher_mean([np.eye(3)], step=0.0)


def test_karcher_non_convergence_reports_best(rng):
    mats = [rand_spd(rng, 8, log_range=(-3, 3)) for _ in range(6)]
    res = spd.karcher_mean(mats, tol=1e-16, max_iters=2)
    assert not res.converged
    assert res.iterations == 2
    assert np.isfinite(res.residual)
    np.linalg.cholesky(res.mean)  # best iterate is still SPD


# ---------------------------------------------------------------- tangents

def test_tangent_norm_equals_airm_distance(rng):
    pole = rand_spd(rng, 9)
    x = rand_spd(rng, 9)
    v = spd.tangent_at(pole, x)
    d = spd.airm_distance(pole, x)
    assert abs(np.linalg.norm(v) - d) <= 1e-9 * max(1.0, d)


def test_tangent_at_pole_is_zero(rng):
    pole = rand_spd(rng, 5)
    assert np.linalg.norm(spd.tangent_at(pole, pole)) < 1e-10


def test_tangent_at_identity_is_plain_log(rng):
    x = rand_spd(rng, 6)
    expected = spd.half_vectorize(spd.logm(x))
    assert np.array_equal(spd.tangent_at(np.eye(6), x), expected)


# ---------------------------------------------------------------- diagnostics

def test_log_eigen_split_frozen_example():
    alpha, betas = spd.log_eigen_split(np.diag([np.e ** 2, 1.0]))
    assert abs(alpha - 1.0) < 1e-12
    assert np.allclose(betas, [1.0, -1.0], atol=1e-12)


def test_log_eigen_split_reconstructs(rng):
    x = rand_spd(rng, 7)
    alpha, betas = spd.log_eigen_split(x)
    assert abs(np.sum(betas)) < 1e-9
    assert np.all(np.diff(betas) <= 1e-12)
    b = spd.log_scale_normalize(x)
    assert np.allclose(spd.expm(alpha * np.eye(7) + b), x, atol=1e-9)
