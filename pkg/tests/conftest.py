from __future__ import annotations

import numpy as np
import pytest


def rand_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def rand_spd(
    rng: np.random.Generator,
    n: int,
    log_range: tuple[float, float] = (-2.0, 2.0),
) -> np.ndarray:
    """Random SPD matrix with log-eigenvalues uniform in log_range."""
    q = rand_orthogonal(rng, n)
    lam = np.exp(rng.uniform(*log_range, size=n))
    return (q * lam) @ q.T


def rand_sym(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((n, n)) * scale
    return 0.5 * (a + a.T)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260814)
