"""Randomized invariants checked with hypothesis."""

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from graphsmooth.graph import build_adjacency, row_normalize, smooth
from graphsmooth.learn import ridge_fit, test_risk
from graphsmooth.model import KernelConfig, RidgeModel, d2_regression_config
from graphsmooth.theory import phi_cl, r_cl, r_reg, shrink_eigenvalues

from oracles import loop_risk, ridge_oracle

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=st.integers(2, 40), d=st.integers(1, 4), eps=st.floats(0.0, 1.0))
def test_operator_invariants(seed, n, d, eps):
    x = np.random.default_rng(seed).standard_normal((n, d)) * 2
    adj = build_adjacency(x, KernelConfig(eps))
    assert np.max(np.abs(adj.weights - adj.weights.T)) <= 1e-12
    op = row_normalize(adj)
    assert op.row_sum_error() <= 1e-10
    assert np.all(op.l_matrix >= 0)
    assert abs(op.stationary.sum() - 1.0) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(3, 30), k=st.integers(0, 30))
def test_smoothing_keeps_constants_and_convex_hull(seed, n, k):
    rng = np.random.default_rng(seed)
    op = row_normalize(build_adjacency(rng.standard_normal((n, 2)), KernelConfig(0.1)))
    z = rng.standard_normal((n, 1))
    zk = smooth(op, z, k)
    assert zk.min() >= z.min() - 1e-12 and zk.max() <= z.max() + 1e-12
    c = np.full((n, 1), 2.5)
    assert np.max(np.abs(smooth(op, c, k) - c)) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(2, 25))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    perm = rng.permutation(n)
    a = build_adjacency(x, KernelConfig(0.05)).weights
    np.testing.assert_array_equal(build_adjacency(x[perm], KernelConfig(0.05)).weights, a[np.ix_(perm, perm)])


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=st.integers(2, 30), p=st.integers(1, 4), lam=st.floats(1e-6, 10.0))
def test_ridge_matches_oracle(seed, n, p, lam):
    rng = np.random.default_rng(seed)
    z, y = rng.standard_normal((n, p)), rng.standard_normal(n)
    beta = ridge_fit(z, y, lam).beta_hat
    ref = ridge_oracle(z, y, lam)
    assert np.linalg.norm(beta - ref) <= 1e-8 * max(1.0, np.linalg.norm(ref))


@settings(max_examples=40, deadline=None)
@given(z=arrays(float, (8, 2), elements=finite), y=arrays(float, 8, elements=finite), beta=arrays(float, 2, elements=finite))
def test_risk_matches_loop(z, y, beta):
    ours = test_risk(z, y, RidgeModel(0.1, beta))
    ref = loop_risk(z, y, beta)
    assert abs(ours - ref) <= 1e-12 * max(1.0, ref)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(1e-6, 100), nu=st.floats(0, 100), lam=st.floats(1e-6, 100))
def test_r_cl_range(s, nu, lam):
    value = r_cl(s, nu, lam)
    assert 0 < value <= 1 + 1e-15


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0.01, 50), ratio=st.floats(0.01, 0.99), k=st.integers(0, 20))
def test_shrink_ratio_decreasing(a, ratio, k):
    b = a * ratio
    r0 = shrink_eigenvalues(b, k) / shrink_eigenvalues(a, k)
    r1 = shrink_eigenvalues(b, k + 1) / shrink_eigenvalues(a, k + 1)
    assert r1 < r0 or r0 == 0.0


@settings(max_examples=60, deadline=None)
@given(seed=seeds)
def test_r_reg_bounded(seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((2, 2))
    cfg = d2_regression_config()
    value = r_reg(g @ g.T + 1e-3 * np.eye(2), cfg, 0.1)
    assert 0.0 <= value <= cfg.beta_norm_sigma_sq() + 1e-10


@settings(max_examples=60, deadline=None)
@given(x=arrays(float, 3, elements=finite), mu=arrays(float, 3, elements=finite), eps=st.floats(0, 1))
def test_phi_cl_antisymmetric(x, mu, eps):
    np.testing.assert_allclose(phi_cl(-x, mu, eps), -phi_cl(x, mu, eps), rtol=1e-12, atol=1e-12)
