import itertools

import numpy as np
import pytest

from erasebss.fastica import (
    RankDeficiencyError,
    center_and_whiten,
    fastica,
    reconstruct_without,
)


def matched_abs_correlations(sources: np.ndarray, truth: np.ndarray) -> float:
    """Best mean |correlation| over all source-to-truth permutations."""
    k = truth.shape[0]
    corr = np.abs(np.corrcoef(np.vstack([sources, truth]))[:k, k:])
    best = 0.0
    for perm in itertools.permutations(range(k)):
        best = max(best, float(np.mean([corr[i, perm[i]] for i in range(k)])))
    return best


# -- whitening -----------------------------------------------------------


def test_whiten_already_white_input():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((6, 20000))
    white, transform = center_and_whiten(data)
    cov = white @ white.T / (white.shape[1] - 1)
    np.testing.assert_allclose(cov, np.eye(6), atol=1e-8)
    # transform is close to orthogonal because the input is already near-white
    gram = transform.matrix @ transform.matrix.T
    assert np.max(np.abs(gram - np.eye(6))) < 0.15


def test_whiten_duplicated_channel_raises_named_rank():
    rng = np.random.default_rng(1)
    data = rng.standard_normal((4, 5000))
    data[3] = data[0]
    with pytest.raises(RankDeficiencyError) as err:
        center_and_whiten(data)
    assert err.value.rank == 3
    assert "3" in str(err.value)


def test_whiten_random_full_rank_covariance_is_identity():
    rng = np.random.default_rng(2)
    data = rng.standard_normal((8, 10000)) * rng.uniform(0.5, 20.0, size=(8, 1))
    data += rng.uniform(-5, 5, size=(8, 1))
    white, transform = center_and_whiten(data)
    cov = np.cov(white)  # independent covariance oracle
    np.testing.assert_allclose(cov, np.eye(8), atol=1e-8)
    # whitening followed by dewhitening restores the centered data
    centered = data - data.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(transform.inverse @ white, centered, atol=1e-8)


def test_whiten_needs_more_samples_than_channels():
    with pytest.raises(Exception):
        center_and_whiten(np.zeros((5, 5)))


# -- fastica -------------------------------------------------------------


def test_two_laplacian_sources_recovered():
    rng = np.random.default_rng(3)
    truth = rng.laplace(size=(2, 50000))
    mixing = np.array([[1.0, 0.6], [0.4, 1.0]])
    dec = fastica(mixing @ truth, rng_seed=10)
    assert dec.diagnostics.converged
    assert matched_abs_correlations(dec.sources, truth) > 0.95


def test_gaussian_only_returns_with_flag_and_reconstructs():
    rng = np.random.default_rng(4)
    data = rng.standard_normal((3, 20000)) * np.array([[1.0], [2.0], [0.5]])
    dec = fastica(data, max_iter=30, tol=1e-10, rng_seed=5, n_restarts=1)
    assert isinstance(dec.diagnostics.converged, bool)
    assert dec.diagnostics.iterations > 0
    recon = dec.mixing @ dec.sources + dec.whitening.means[:, None]
    rel = np.linalg.norm(recon - data) / np.linalg.norm(data)
    assert rel < 1e-6


def test_four_source_mixture_recovered():
    rng = np.random.default_rng(6)
    n = 50000
    t = np.arange(n) / 1000.0
    truth = np.vstack([
        rng.laplace(size=n),
        rng.laplace(size=n),
        rng.uniform(-1.0, 1.0, size=n),
        np.sin(2 * np.pi * 7.3 * t),
    ])
    mixing = rng.normal(size=(4, 4)) + np.eye(4)
    dec = fastica(mixing @ truth, rng_seed=11)
    assert matched_abs_correlations(dec.sources, truth) > 0.95


def test_sources_have_unit_variance_and_wa_identity():
    rng = np.random.default_rng(7)
    truth = rng.laplace(size=(3, 30000))
    mixing = rng.normal(size=(3, 3)) + 2 * np.eye(3)
    dec = fastica(mixing @ truth, rng_seed=1)
    np.testing.assert_allclose(dec.sources.var(axis=1, ddof=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(dec.unmixing @ dec.mixing, np.eye(3), atol=1e-6)


def test_seed_determinism():
    rng = np.random.default_rng(8)
    data = np.asarray(rng.laplace(size=(3, 20000)))
    a = fastica(data, rng_seed=21).mixing
    b = fastica(data, rng_seed=21).mixing
    np.testing.assert_allclose(a, b, atol=1e-12, rtol=0.0)


def test_channel_scaling_leaves_sources_unchanged():
    rng = np.random.default_rng(9)
    truth = rng.laplace(size=(2, 50000))
    mixing = np.array([[1.0, 0.5], [0.3, 1.2]])
    data = mixing @ truth
    scaled = data.copy()
    scaled[0] *= 4.0
    dec_a = fastica(data, rng_seed=2, tol=1e-12, max_iter=3000)
    dec_b = fastica(scaled, rng_seed=2, tol=1e-12, max_iter=3000)
    # match components by correlation, then compare waveforms up to sign
    corr = np.corrcoef(np.vstack([dec_a.sources, dec_b.sources]))[:2, 2:]
    perm = np.argmax(np.abs(corr), axis=1)
    assert sorted(perm.tolist()) == [0, 1]
    for i, j in enumerate(perm):
        sign = np.sign(corr[i, j])
        np.testing.assert_allclose(dec_a.sources[i], sign * dec_b.sources[j], atol=1e-6)


# -- reconstruction --------------------------------------------------------


@pytest.fixture(scope="module")
def two_source_fixture():
    rng = np.random.default_rng(12)
    truth = rng.laplace(size=(2, 40000))
    mixing = np.array([[1.0, 0.7], [0.2, 1.0]])
    data = mixing @ truth + np.array([[3.0], [-2.0]])
    dec = fastica(data, rng_seed=3)
    return data, truth, dec


def test_reconstruct_empty_rejection_roundtrip(two_source_fixture):
    data, _, dec = two_source_fixture
    recon = reconstruct_without(dec, set())
    rel = np.linalg.norm(recon - data) / np.linalg.norm(data)
    assert rel < 1e-6


def test_reconstruct_all_rejected_gives_means(two_source_fixture):
    data, _, dec = two_source_fixture
    recon = reconstruct_without(dec, {0, 1})
    means = data.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(recon, np.broadcast_to(means, data.shape), atol=1e-8)


def test_reconstruct_removes_matched_source(two_source_fixture):
    data, truth, dec = two_source_fixture
    corr = np.abs(np.corrcoef(np.vstack([dec.sources, truth]))[:2, 2:])
    ic_for_src0 = int(np.argmax(corr[:, 0]))
    recon = reconstruct_without(dec, {ic_for_src0})
    for ch in range(2):
        c0 = abs(np.corrcoef(recon[ch], truth[0])[0, 1])
        c1 = abs(np.corrcoef(recon[ch], truth[1])[0, 1])
        assert c0 < 0.2
        assert c1 > 0.9


def test_reconstruct_index_out_of_range(two_source_fixture):
    _, _, dec = two_source_fixture
    with pytest.raises(IndexError):
        reconstruct_without(dec, {5})
