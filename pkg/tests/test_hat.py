import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiconf.core import ConfigError, NumericalError
from multiconf.hat import KernelSpec, constructions, local_linear_hat, nw_hat, ridge_hat


def test_ridge_orthonormal_projection(rng):
    x, _ = np.linalg.qr(rng.standard_normal((8, 3)))
    h = ridge_hat(x, [0.0]).mats[0]
    np.testing.assert_allclose(h, x @ x.T, atol=1e-9)
    np.testing.assert_allclose(h @ h, h, atol=1e-9)


def test_ridge_large_penalty_shrinks(rng):
    x = rng.standard_normal((6, 3))
    x /= np.linalg.norm(x, 2)
    h = ridge_hat(x, [1e12]).mats[0]
    assert np.abs(h).max() < 1e-9


def test_ridge_matches_svd_form(rng):
    x = rng.standard_normal((6, 3))
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    expected = u @ np.diag(s**2 / (s**2 + 1.0)) @ u.T
    hs = ridge_hat(x, [1.0, 1.0])
    assert hs.q == 2 and hs.kind == "ridge"
    for h in hs.mats:
        np.testing.assert_allclose(h, expected, atol=1e-9)
        np.testing.assert_allclose(h, h.T, atol=1e-9)


def test_ridge_per_dimension_penalty(rng):
    x = rng.standard_normal((6, 3))
    h1, h2 = ridge_hat(x, [0.5, 5.0]).mats
    assert not np.allclose(h1, h2)


def test_ridge_singular_design_errors(rng):
    x = rng.standard_normal((6, 2))
    x = np.column_stack([x, x[:, 0]])
    with pytest.raises(NumericalError):
        ridge_hat(x, [0.0])
    ridge_hat(x, [0.1])


def test_ridge_rejects_negative_penalty(rng):
    with pytest.raises(ConfigError):
        ridge_hat(rng.standard_normal((4, 2)), [-1.0])


def test_nw_identical_rows_uniform():
    x = np.ones((6, 2))
    h = nw_hat(x, KernelSpec(1.0), q=2)
    assert h.q == 2
    np.testing.assert_allclose(h.mats[0], np.full((6, 6), 1 / 6), atol=1e-15)


def test_nw_small_bandwidth_identity(rng):
    x = rng.standard_normal((7, 3))
    h = nw_hat(x, KernelSpec(1e-8 * np.abs(x).max())).mats[0]
    np.testing.assert_allclose(h, np.eye(7), atol=1e-9)


def test_nw_matches_direct_kernel_sum(rng):
    x = rng.standard_normal((5, 2))
    h = nw_hat(x, KernelSpec(1.0)).mats[0]
    for i in range(5):
        k = np.array([np.exp(-0.5 * np.sum((x[j] - x[i]) ** 2)) for j in range(5)])
        np.testing.assert_allclose(h[i], k / k.sum(), atol=1e-12)
    np.testing.assert_allclose(h.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(h >= 0)


def test_kernel_spec_validation():
    with pytest.raises(ConfigError):
        KernelSpec([1.0, 0.0])
    with pytest.raises(ConfigError):
        KernelSpec([1.0, 2.0]).for_dim(3)


def test_local_linear_reproduces_linear_functions(rng):
    x = rng.standard_normal((9, 2))
    h = local_linear_hat(x, KernelSpec(0.7)).mats[0]
    basis = np.column_stack([np.ones(9), x])
    for v in [basis @ rng.standard_normal(3) for _ in range(5)]:
        np.testing.assert_allclose(h @ v, v, atol=1e-8)


def test_local_linear_large_bandwidth_is_ols(rng):
    x = rng.standard_normal((8, 2))
    h = local_linear_hat(x, KernelSpec(1e8 * np.abs(x).max())).mats[0]
    xt = np.column_stack([np.ones(8), x])
    ols = xt @ np.linalg.solve(xt.T @ xt, xt.T)
    np.testing.assert_allclose(h, ols, atol=1e-6)


def test_local_linear_matches_wls(rng):
    x = rng.standard_normal((6, 2))
    h = local_linear_hat(x, KernelSpec(1.0)).mats[0]
    for i in range(6):
        g = np.diag(np.exp(-0.5 * np.sum((x - x[i]) ** 2, axis=1)))
        xt = np.column_stack([np.ones(6), x - x[i]])
        row = np.linalg.inv(xt.T @ g @ xt) @ xt.T @ g
        np.testing.assert_allclose(h[i], row[0], atol=1e-9)
    np.testing.assert_allclose(h.sum(axis=1), 1.0, atol=1e-9)


def test_local_linear_tiny_bandwidth_regularized(rng):
    x = rng.standard_normal((6, 2))
    h = local_linear_hat(x, KernelSpec(1e-3)).mats[0]
    assert np.all(np.isfinite(h))
    np.testing.assert_allclose(h, np.eye(6), atol=1e-6)


def test_local_linear_degenerate_rescued_by_jitter():
    # all rows equal: the slope block is singular, jitter makes it solvable
    h = local_linear_hat(np.zeros((4, 1)), KernelSpec(1.0)).mats[0]
    np.testing.assert_allclose(h, np.full((4, 4), 0.25), atol=1e-8)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_local_linear_overflow_reports_row():
    # jitter bounds cond by ~1e10, so only a non-finite system can fail
    x = np.array([[0.0], [1e200], [2e200], [3e200]])
    with pytest.raises(NumericalError, match="row 0"):
        local_linear_hat(x, KernelSpec(1e200))


def test_construction_counter(rng):
    constructions.reset()
    x = rng.standard_normal((5, 2))
    ridge_hat(x, [1.0, 1.0])
    nw_hat(x, KernelSpec(1.0))
    assert constructions.count == 2


BUILDERS = [
    lambda x: ridge_hat(x, [0.5]),
    lambda x: nw_hat(x, KernelSpec(1.3)),
    lambda x: local_linear_hat(x, KernelSpec(1.3)),
]


@pytest.mark.parametrize("build", BUILDERS, ids=["ridge", "nw", "local_linear"])
def test_deterministic(build, rng):
    x = rng.standard_normal((6, 2))
    assert np.array_equal(build(x).mats[0], build(x.copy()).mats[0])


@pytest.mark.parametrize("build", BUILDERS, ids=["ridge", "nw", "local_linear"])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_permutation_conjugation(build, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((6, 2))
    perm = np.concatenate([r.permutation(5), [5]])
    p = np.eye(6)[perm]
    h = build(x).mats[0]
    h_perm = build(x[perm]).mats[0]
    np.testing.assert_allclose(h_perm, p @ h @ p.T, atol=1e-10)
