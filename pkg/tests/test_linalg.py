from __future__ import annotations

import numpy as np
import pytest
from scipy import linalg as sla

from freqlab.errors import NumericalFailure
from freqlab.linalg import discrete_noise, expm, psd_factor
from reference import covariance_quadrature


@pytest.mark.parametrize("n,scale", [(1, 0.1), (2, 1.0), (3, 10.0), (4, 50.0)])
def test_expm_matches_scipy(n, scale):
    rng = np.random.default_rng(n)
    for _ in range(20):
        a = rng.normal(size=(n, n)) * scale
        ref = sla.expm(a)
        assert np.allclose(expm(a), ref, rtol=1e-11, atol=1e-12 * np.abs(ref).max())


def test_expm_exact_cases():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
    d = np.diag([0.5, -2.0, 3.0])
    assert np.allclose(expm(d), np.diag(np.exp([0.5, -2.0, 3.0])), rtol=1e-14)
    nil = np.array([[0.0, 2.0], [0.0, 0.0]])
    assert np.allclose(expm(nil), [[1.0, 2.0], [0.0, 1.0]], rtol=0, atol=1e-15)


def test_expm_rejects_non_finite():
    with pytest.raises(NumericalFailure):
        expm(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@pytest.mark.parametrize("dt", [0.01, 1.0, 30.0, 500.0])
def test_discrete_noise_vs_quadrature(dt):
    a = np.array([[-1 / 3, -1 / 6], [0.0, -0.5]])  # two-state drift, H=3, D_L=2
    b = np.array([[0.0], [1.0]])
    phi, q = discrete_noise(a, b, dt)
    assert np.allclose(phi, sla.expm(a * dt), rtol=1e-12, atol=1e-15)
    ref = covariance_quadrature(-a, b, dt)
    assert np.allclose(q, ref, rtol=1e-9, atol=1e-14)
    assert np.array_equal(q, q.T)


def test_psd_factor_reconstructs():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(3, 3))
    q = m @ m.T
    f = psd_factor(q)
    assert np.allclose(f @ f.T, q, rtol=1e-12)
    rank1 = np.outer([1.0, 2.0], [1.0, 2.0])
    f = psd_factor(rank1)
    assert np.allclose(f @ f.T, rank1, atol=1e-14)


def test_psd_factor_rejects_indefinite():
    with pytest.raises(NumericalFailure):
        psd_factor(np.diag([1.0, -0.5]))
