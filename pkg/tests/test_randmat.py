import numpy as np
import pytest

from bayespilot.randmat import (
    InverseWishartParams,
    RngStream,
    chol_psd,
    iw_mean,
    iw_mode,
    sample_inverse_wishart,
    sample_mvn,
    sample_wishart,
)


def test_stream_repeatability():
    a = RngStream(7, 3, ()).generator().uniform(size=4)
    b = RngStream(7, 3, ()).generator().uniform(size=4)
    assert np.array_equal(a, b)


def test_stream_children_differ():
    root = RngStream(7, 0, ())
    a = root.child(0).generator().uniform(size=4)
    b = root.child(1).generator().uniform(size=4)
    assert not np.array_equal(a, b)
    # nesting extends the path rather than replacing it
    assert root.child(0).child(2).path == (0, 2)


def test_chol_psd_handles_semidefinite():
    s = np.array([[1.0, 1.0], [1.0, 1.0]])
    c = chol_psd(s)
    assert np.allclose(c @ c.T, s, atol=1e-6)


def test_sample_mvn_zero_cov_returns_mean():
    mean = np.array([1.0, -2.0])
    out = sample_mvn(mean, np.zeros((2, 2)), np.random.default_rng(0))
    assert np.array_equal(out, mean)


def test_wishart_mean():
    rng = np.random.default_rng(5)
    scale = np.array([[2.0, 0.4], [0.4, 1.0]])
    draws = np.mean([sample_wishart(scale, 7.0, rng) for _ in range(20000)], axis=0)
    assert np.allclose(draws, 7.0 * scale, rtol=0.05)


def test_iw_params_validation():
    with pytest.raises(Exception):
        InverseWishartParams(np.eye(3), 3.5)  # nu <= M + 1


def test_iw_moments():
    h = np.array([[2.0, 0.3], [0.3, 1.5]])
    params = InverseWishartParams(h, 8.0)
    assert np.allclose(iw_mean(params), h / (8.0 - 2 - 1))
    assert np.allclose(iw_mode(params), h / (8.0 + 2 + 1))


def test_iw_sample_mean_matches_analytic():
    h = np.array(
        [
            [1.0, 0.9, 0.8],
            [0.9, 1.0, 0.85],
            [0.8, 0.85, 1.0],
        ]
    )
    params = InverseWishartParams(h, 20.0)
    rng = np.random.default_rng(11)
    mean = np.mean([sample_inverse_wishart(params, rng) for _ in range(10000)], axis=0)
    expected = h / (20.0 - 3 - 1)
    assert np.abs(mean / expected - 1.0).max() < 0.05
