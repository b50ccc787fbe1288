"""Gradient oracles: losses, closed-form gradients, finite-difference checks,
and Hessian-vector products against dense finite-difference Hessians."""

import math

import numpy as np
import pytest

from saddle.datagen import make_blobs
from saddle.errors import SaddleError
from saddle.models import (
    Batch,
    LogisticRegressionOracle,
    MLPOracle,
    QuadraticOracle,
)


def random_batch(rng, n, d_in, n_classes):
    return Batch.from_arrays(
        rng.normal(size=(n, d_in)), rng.integers(0, n_classes, size=n)
    )


def random_spd(rng, d):
    m = rng.normal(size=(d, d))
    return m @ m.T / d + np.eye(d)


def fd_directional(oracle, params, batch, u, h):
    return (
        oracle.loss(params + h * u, batch) - oracle.loss(params - h * u, batch)
    ) / (2 * h)


def dense_fd_hessian(oracle, params, batch, h):
    d = params.shape[0]
    hess = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        hess[:, j] = (
            oracle.grad(params + h * e, batch) - oracle.grad(params - h * e, batch)
        ) / (2 * h)
    return 0.5 * (hess + hess.T)


def test_logreg_zero_params_balanced_batch_gives_ln2():
    oracle = LogisticRegressionOracle(d_in=3, n_classes=2)
    rng = np.random.default_rng(0)
    batch = Batch.from_arrays(rng.normal(size=(10, 3)), np.repeat([0, 1], 5))
    assert abs(oracle.loss(np.zeros(oracle.dim), batch) - math.log(2.0)) < 1e-12


def test_logreg_zero_information_batch_has_zero_bias_gradient():
    oracle = LogisticRegressionOracle(d_in=3, n_classes=2)
    x = np.tile([0.3, -1.2, 0.7], (8, 1))  # identical samples
    y = np.repeat([0, 1], 4)
    g = oracle.grad(np.zeros(oracle.dim), Batch.from_arrays(x, y))
    bias = g[oracle.layout[1].offset :]
    assert np.array_equal(bias, np.zeros(2))


def test_quadratic_closed_forms():
    rng = np.random.default_rng(1)
    a = random_spd(rng, 6)
    c = rng.normal(size=6)
    oracle = QuadraticOracle(a, c)
    x = rng.normal(size=6)
    r = x - c
    assert abs(oracle.loss(x, None) - 0.5 * r @ a @ r) < 1e-12
    assert np.allclose(oracle.grad(x, None), a @ r, atol=1e-12)
    v = rng.normal(size=6)
    assert np.array_equal(oracle.hvp(x, None, v), a @ v)


def test_quadratic_rejects_asymmetric_a():
    with pytest.raises(SaddleError):
        QuadraticOracle(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))


ORACLE_CASES = [
    ("quadratic", None),
    ("logreg", None),
    ("mlp", None),
]


def build_case(kind, rng):
    if kind == "quadratic":
        oracle = QuadraticOracle(random_spd(rng, 8), rng.normal(size=8))
        batch = None
    elif kind == "logreg":
        oracle = LogisticRegressionOracle(d_in=5, n_classes=4)
        batch = random_batch(rng, 12, 5, 4)
    else:
        oracle = MLPOracle(d_in=4, hidden=6, n_classes=3)
        batch = random_batch(rng, 12, 4, 3)
    return oracle, batch


@pytest.mark.parametrize("kind", ["quadratic", "logreg", "mlp"])
def test_gradient_matches_finite_differences_50_directions(kind):
    rng = np.random.default_rng(42)
    oracle, batch = build_case(kind, rng)
    for trial in range(50):
        params = rng.normal(scale=0.8, size=oracle.dim)
        u = rng.normal(size=oracle.dim)
        u /= np.linalg.norm(u)
        h = 1e-6 * max(1.0, float(np.linalg.norm(params)))
        fd = fd_directional(oracle, params, batch, u, h)
        an = float(oracle.grad(params, batch) @ u)
        denom = max(abs(fd), abs(an), 1e-8)
        assert abs(fd - an) / denom < 1e-4, f"{kind} trial {trial}"


def test_mlp_loss_matches_duplicate_implementation():
    # independent per-sample loop, no shared forward code
    oracle = MLPOracle(d_in=3, hidden=5, n_classes=4)
    rng = np.random.default_rng(7)
    params = rng.normal(size=oracle.dim)
    batch = random_batch(rng, 9, 3, 4)
    h, d, c = 5, 3, 4
    w1 = params[: h * d].reshape(h, d)
    b1 = params[h * d : h * d + h]
    w2 = params[h * d + h : h * d + h + c * h].reshape(c, h)
    b2 = params[h * d + h + c * h :]
    total = 0.0
    for x, y in zip(batch.features, batch.labels):
        hid = np.tanh(w1 @ x + b1)
        logits = w2 @ hid + b2
        m = logits.max()
        total += -(logits[y] - m - math.log(np.exp(logits - m).sum()))
    assert abs(oracle.loss(params, batch) - total / len(batch)) < 1e-12


def test_logreg_loss_matches_duplicate_implementation():
    oracle = LogisticRegressionOracle(d_in=4, n_classes=3)
    rng = np.random.default_rng(8)
    params = rng.normal(size=oracle.dim)
    batch = random_batch(rng, 11, 4, 3)
    w = params[:12].reshape(3, 4)
    b = params[12:]
    total = 0.0
    for x, y in zip(batch.features, batch.labels):
        logits = w @ x + b
        m = logits.max()
        total += -(logits[y] - m - math.log(np.exp(logits - m).sum()))
    assert abs(oracle.loss(params, batch) - total / len(batch)) < 1e-12


def test_hvp_zero_vector_maps_to_zero():
    rng = np.random.default_rng(3)
    for kind in ("quadratic", "logreg", "mlp"):
        oracle, batch = build_case(kind, rng)
        params = rng.normal(size=oracle.dim)
        assert np.array_equal(
            oracle.hvp(params, batch, np.zeros(oracle.dim)), np.zeros(oracle.dim)
        )


@pytest.mark.parametrize("kind", ["quadratic", "logreg", "mlp"])
def test_hvp_matches_dense_fd_hessian(kind):
    # models kept at d <= 60 so the dense Hessian stays cheap
    rng = np.random.default_rng(12)
    if kind == "quadratic":
        oracle = QuadraticOracle(random_spd(rng, 20), rng.normal(size=20))
        batch = None
    elif kind == "logreg":
        oracle = LogisticRegressionOracle(d_in=5, n_classes=4)  # dim 24
        batch = random_batch(rng, 16, 5, 4)
    else:
        oracle = MLPOracle(d_in=3, hidden=4, n_classes=3)  # dim 31
        batch = random_batch(rng, 16, 3, 3)
    assert oracle.dim <= 60
    params = rng.normal(scale=0.7, size=oracle.dim)
    dense = dense_fd_hessian(oracle, params, batch, h=1e-5)
    for _ in range(20):
        v = rng.normal(size=oracle.dim)
        hv = oracle.hvp(params, batch, v)
        ref = dense @ v
        rel = np.linalg.norm(hv - ref) / max(np.linalg.norm(ref), 1e-10)
        assert rel < 1e-2


def test_hvp_is_symmetric_bilinear_form():
    rng = np.random.default_rng(5)
    oracle = MLPOracle(d_in=4, hidden=5, n_classes=3)
    batch = random_batch(rng, 10, 4, 3)
    params = rng.normal(size=oracle.dim)
    u = rng.normal(size=oracle.dim)
    v = rng.normal(size=oracle.dim)
    uhv = float(u @ oracle.hvp(params, batch, v))
    vhu = float(v @ oracle.hvp(params, batch, u))
    assert abs(uhv - vhu) / max(abs(uhv), 1e-10) < 1e-4


def test_batch_validation():
    oracle = LogisticRegressionOracle(d_in=3, n_classes=2)
    empty = Batch.from_arrays(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
    with pytest.raises(SaddleError):
        oracle.loss(np.zeros(oracle.dim), empty)
    wrong = Batch.from_arrays(np.zeros((4, 2)), np.zeros(4, dtype=np.int64))
    with pytest.raises(SaddleError):
        oracle.grad(np.zeros(oracle.dim), wrong)
    with pytest.raises(SaddleError):
        oracle.loss(np.zeros(oracle.dim + 1), random_batch(np.random.default_rng(0), 4, 3, 2))


def test_init_params_deterministic_and_laid_out():
    for oracle in (
        QuadraticOracle(np.eye(3), np.zeros(3)),
        LogisticRegressionOracle(4, 3),
        MLPOracle(4, 5, 3),
    ):
        p1 = oracle.init_params(np.random.default_rng(9))
        p2 = oracle.init_params(np.random.default_rng(9))
        assert np.array_equal(p1, p2)
        assert p1.shape == (oracle.dim,)
        assert sum(b.length for b in oracle.layout) == oracle.dim


def test_predict_proba_rows_sum_to_one():
    rng = np.random.default_rng(2)
    ds = make_blobs(3, 10, 4, 0.2, seed=0)
    for oracle in (LogisticRegressionOracle(4, 3), MLPOracle(4, 6, 3)):
        params = oracle.init_params(rng)
        probs = oracle.predict_proba(params, ds.features)
        assert probs.shape == (30, 3)
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_loss_and_grad_are_deterministic():
    rng = np.random.default_rng(4)
    oracle = MLPOracle(3, 4, 3)
    batch = random_batch(rng, 8, 3, 3)
    params = rng.normal(size=oracle.dim)
    assert oracle.loss(params, batch) == oracle.loss(params, batch)
    assert np.array_equal(oracle.grad(params, batch), oracle.grad(params, batch))
