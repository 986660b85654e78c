import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bspm_osp.errors import DataError, ParameterError
from bspm_osp.kernels import (Linear, Matern52, OnDims, RationalQuadraticARD, SpectralMixture,
                              SquaredExponential, Sum, WhiteNoise, kernel_from_dict, spatial_axis_kernel,
                              st_kernel)


def composite():
    sm = SpectralMixture([0.5, 0.3], [0.1, 0.02], [0.01, 0.2])
    temporal = Sum([sm, WhiteNoise(1e-3), Linear(0.05, 0.3)])
    return st_kernel([spatial_axis_kernel(1.3), spatial_axis_kernel(0.7, alpha=2.0),
                      spatial_axis_kernel(2.0)], temporal)


STATIONARY = [SquaredExponential(1.3, 2.0), RationalQuadraticARD([0.5, 2.0], 1.5, 0.7),
              Matern52(0.8, 1.1), OnDims(SpectralMixture([1.0, 0.4], [0.3, 1.2], [0.5, 0.05]), [0])]


def test_se_value():
    k = SquaredExponential(1.0, 1.0)
    assert k([[0.0]], [[1.0]])[0, 0] == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_sm_at_zero_lag_is_weight_sum():
    k = SpectralMixture([0.2, 1.3, 0.5], [0.1, 0.4, 2.0], [0.3, 0.01, 1.0])
    np.testing.assert_allclose(k.diag(np.linspace(0, 5, 7)), 2.0)


def test_sm_degenerate_variance_is_cosine():
    k = SpectralMixture([1.0], [0.25], [1e-12])
    tau = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(k([[0.0]], tau[:, None])[0], np.cos(2 * np.pi * 0.25 * tau), atol=1e-9)


def test_white_noise_only_on_coincident_inputs():
    k = WhiteNoise(0.3)
    K = k([[0.0], [1.0], [0.0]])
    np.testing.assert_array_equal(K, 0.3 * np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]]))


@pytest.mark.parametrize("cls, kwargs", [
    (SquaredExponential, {"lengthscale": 0.0}),
    (Matern52, {"variance": -1.0}),
    (RationalQuadraticARD, {"alpha": 0.0}),
    (SpectralMixture, {"weights": [-0.1], "means": [0.0], "variances": [1.0]}),
    (SpectralMixture, {"weights": [1.0], "means": [0.0], "variances": [0.0]}),
    (WhiteNoise, {"variance": 0.0}),
])
def test_invalid_hyperparameters(cls, kwargs):
    with pytest.raises(ParameterError):
        cls(**kwargs)


def test_dimension_mismatch():
    with pytest.raises(DataError):
        SquaredExponential()(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(DataError):
        RationalQuadraticARD([1.0, 1.0])(np.zeros((3, 3)))


def test_st_kernel_is_product_of_axes():
    rng = np.random.default_rng(3)
    k = composite()
    A, B = rng.normal(size=(5, 4)), rng.normal(size=(6, 4))
    manual = np.ones((5, 6))
    for d, f in enumerate(k.children):
        manual *= f.kernel(A[:, [d]], B[:, [d]])
    np.testing.assert_allclose(k(A, B), manual, rtol=1e-12, atol=1e-15)
    diag_manual = np.prod([f.kernel.diag(A[:, [d]]) for d, f in enumerate(k.children)], axis=0)
    np.testing.assert_allclose(k.diag(A), diag_manual, rtol=1e-12)
    np.testing.assert_allclose(k(B, A), k(A, B).T, rtol=1e-12)


@pytest.mark.parametrize("kern", STATIONARY)
def test_stationarity(kern):
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(8, 2)), rng.normal(size=(5, 2))
    c = rng.normal(size=2) * 3
    np.testing.assert_allclose(kern(A + c, B + c), kern(A, B), atol=1e-12)


def test_linear_is_not_stationary():
    k = Linear(1.0, 0.0)
    assert not np.allclose(k([[1.0]], [[2.0]]), k([[2.0]], [[3.0]]))


def test_batched_evaluation_matches_loop():
    rng = np.random.default_rng(1)
    k = composite()
    A, B = rng.normal(size=(3, 4, 4)), rng.normal(size=(3, 6, 4))
    batched = k(A, B)
    for b in range(3):
        np.testing.assert_allclose(batched[b], k(A[b], B[b]), rtol=1e-13)


@pytest.mark.parametrize("kern", [SquaredExponential(1.3, 2.0), RationalQuadraticARD([0.5, 2.0, 1.0], 1.5, 0.7),
                                  Matern52(0.8, 1.1), OnDims(SpectralMixture([1.0, 0.4], [0.3, 1.2], [0.5, 0.05]), [1]),
                                  WhiteNoise(0.1), Linear(0.4, 0.2), composite().children[0], composite()])
def test_grad_contract_matches_finite_differences(kern):
    rng = np.random.default_rng(2)
    D = 4 if kern is not None else 3
    A = rng.normal(size=(7, D))
    A[3] = A[1]  # exercise the white-noise coincidence branch
    if isinstance(kern, RationalQuadraticARD):
        A = A[:, :3]
    W = rng.normal(size=(7, 7))
    g = kern.grad_contract(A, W)
    th = kern.theta
    h = 1e-6
    for i in range(th.size):
        e = np.zeros_like(th)
        e[i] = h
        fd = (np.sum(W * kern.with_theta(th + e)(A)) - np.sum(W * kern.with_theta(th - e)(A))) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_json_round_trip_is_bit_exact():
    rng = np.random.default_rng(5)
    k = composite().with_theta(composite().theta + rng.normal(size=composite().n_params) * 0.1)
    k2 = kernel_from_dict(json.loads(json.dumps(k.to_dict())))
    np.testing.assert_array_equal(k.theta, k2.theta)
    assert json.dumps(k2.to_dict()) == json.dumps(k.to_dict())


def test_unknown_kernel_type():
    with pytest.raises(DataError):
        kernel_from_dict({"type": "Periodic"})


def test_with_theta_round_trip():
    k = composite()
    np.testing.assert_allclose(k.with_theta(k.theta).theta, k.theta, rtol=0, atol=0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 60))
def test_composite_gram_is_psd(seed, n):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.normal(size=(n, 3)), rng.uniform(0, 5, n)])
    K = composite()(X)
    assert np.linalg.eigvalsh(K + 1e-10 * np.eye(n)).min() >= -1e-8
