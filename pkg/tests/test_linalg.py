"""Dense numerics against numpy oracles and explicit error paths."""

import numpy as np
import pytest

from vlamem.linalg import (
    COND_LIMIT,
    IllConditionedError,
    LinalgError,
    PowerIterationError,
    SingularMatrixError,
    frobenius_norm,
    invert,
    spectral_norm,
)


def test_frobenius_matches_numpy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = rng.standard_normal((rng.integers(1, 8), rng.integers(1, 8)))
        assert frobenius_norm(m) == pytest.approx(np.linalg.norm(m), rel=1e-14)


def test_frobenius_zero_matrix():
    assert frobenius_norm(np.zeros((4, 4))) == 0.0


def test_spectral_norm_matches_svd_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = int(rng.integers(2, 12))
        m = rng.standard_normal((d, d))
        want = np.linalg.svd(m, compute_uv=False)[0]
        assert spectral_norm(m) == pytest.approx(want, rel=1e-8)


def test_spectral_norm_symmetric_and_rank_one():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = int(rng.integers(2, 10))
        s = rng.standard_normal((d, d))
        s = s + s.T
        assert spectral_norm(s) == pytest.approx(
            np.max(np.abs(np.linalg.eigvalsh(s))), rel=1e-8
        )
        u = rng.standard_normal(d)
        v = rng.standard_normal(d)
        r1 = np.outer(u, v)
        assert spectral_norm(r1) == pytest.approx(
            np.linalg.norm(u) * np.linalg.norm(v), rel=1e-8
        )


def test_spectral_norm_diagonal_exact():
    m = np.diag([3.0, -7.0, 0.5])
    assert spectral_norm(m) == pytest.approx(7.0, rel=1e-10)


def test_spectral_norm_zero_matrix():
    assert spectral_norm(np.zeros((5, 5))) == 0.0


def test_spectral_norm_identity():
    assert spectral_norm(np.eye(6)) == pytest.approx(1.0, rel=1e-12)


def test_spectral_norm_exhausted_iterations():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((6, 6))
    with pytest.raises(PowerIterationError) as err:
        spectral_norm(m, tol=1e-300, max_iter=2)
    assert err.value.last_estimate > 0.0


def test_invert_matches_numpy():
    rng = np.random.default_rng(4)
    for _ in range(30):
        d = int(rng.integers(1, 10))
        m = rng.standard_normal((d, d)) + 3.0 * np.eye(d)
        got = invert(m)
        np.testing.assert_allclose(got, np.linalg.inv(m), rtol=1e-9, atol=1e-11)
        np.testing.assert_allclose(m @ got, np.eye(d), atol=1e-9)


def test_invert_identity_and_diagonal():
    np.testing.assert_allclose(invert(np.eye(5)), np.eye(5), atol=1e-14)
    np.testing.assert_allclose(
        invert(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=1e-14
    )


def test_invert_singular_matrix():
    m = np.ones((3, 3))
    with pytest.raises(SingularMatrixError):
        invert(m)


def test_invert_ill_conditioned():
    m = np.diag([1.0, 10.0 * COND_LIMIT])
    with pytest.raises(IllConditionedError):
        invert(m)


def test_error_hierarchy():
    assert issubclass(SingularMatrixError, LinalgError)
    assert issubclass(IllConditionedError, LinalgError)
    assert issubclass(PowerIterationError, LinalgError)


def test_non_square_rejected():
    with pytest.raises(ValueError):
        invert(np.ones((2, 3)))
    with pytest.raises(ValueError):
        spectral_norm(np.ones((2, 3)))
