"""Estimator facade: sklearn contract, training quality, error paths."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from saddle.datagen import make_blobs
from saddle.errors import DivergenceError
from saddle.estimator import DecentralizedClassifier


def blob_arrays(seed=0, per_class=40, split="train"):
    ds = make_blobs(3, per_class, 2, 0.25, seed, split)
    return ds.features, ds.labels


def test_fit_predict_separable_blobs():
    X, y = blob_arrays()
    Xt, yt = blob_arrays(split="test")
    est = DecentralizedClassifier(rounds=150, eta=0.2, beta=0.9)
    assert est.fit(X, y) is est
    assert est.score(Xt, yt) > 0.9
    proba = est.predict_proba(Xt)
    assert proba.shape == (len(yt), 3)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)


def test_string_labels_round_trip():
    X, y = blob_arrays()
    names = np.array(["ant", "bee", "cat"])[y]
    est = DecentralizedClassifier(rounds=100, eta=0.2).fit(X, names)
    assert set(est.predict(X)) <= {"ant", "bee", "cat"}
    assert list(est.classes_) == ["ant", "bee", "cat"]
    assert est.score(X, names) > 0.9


def test_get_params_set_params_clone():
    est = DecentralizedClassifier(algorithm="q_saddle", rho=0.05, rounds=7)
    params = est.get_params()
    assert params["algorithm"] == "q_saddle" and params["rho"] == 0.05
    twin = clone(est)
    assert twin.get_params() == params
    twin.set_params(rounds=9)
    assert twin.rounds == 9 and est.rounds == 7


def test_predict_before_fit_raises():
    est = DecentralizedClassifier()
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((2, 2)))


def test_sam_off_matches_plain_qgm_bitwise():
    X, y = blob_arrays()
    plain = DecentralizedClassifier(algorithm="qgm", rounds=40, eta=0.1).fit(X, y)
    sam_off = DecentralizedClassifier(
        algorithm="q_saddle", rho=0.0, rounds=40, eta=0.1
    ).fit(X, y)
    assert np.array_equal(plain.params_, sam_off.params_)


def test_compression_specs():
    X, y = blob_arrays(per_class=20)
    est = DecentralizedClassifier(
        algorithm="comp_q_saddle", compression="quant:8", rho=0.01,
        rounds=30, eta=0.1, gamma=0.5,
    ).fit(X, y)
    assert est.metrics_.final_row.bits_transmitted_cumulative > 0
    with pytest.raises(ValueError, match="compression"):
        DecentralizedClassifier(
            algorithm="comp_q_saddle", compression="zlib", rounds=2
        ).fit(X, y)
    with pytest.raises(ValueError, match="compression"):
        DecentralizedClassifier(
            algorithm="comp_q_saddle", compression="quant:99", rounds=2
        ).fit(X, y)


def test_dirichlet_partition_and_metrics_log():
    X, y = blob_arrays()
    est = DecentralizedClassifier(
        partition="dirichlet", alpha=0.5, rounds=25, eta=0.1
    ).fit(X, y)
    assert len(est.metrics_.rows) == 26
    assert est.metrics_.rows[0].round == 0
    with pytest.raises(ValueError, match="alpha"):
        DecentralizedClassifier(partition="dirichlet", rounds=2).fit(X, y)


def test_single_class_rejected():
    X = np.zeros((10, 2))
    y = np.zeros(10, dtype=int)
    with pytest.raises(ValueError, match="classes"):
        DecentralizedClassifier(rounds=2).fit(X, y)


def test_divergence_raises():
    X, y = blob_arrays(per_class=10)
    est = DecentralizedClassifier(rounds=40, eta=1e160, beta=0.0, model="logreg")
    with pytest.raises(DivergenceError):
        with np.errstate(all="ignore"):
            est.fit(X, y)


def test_feature_count_checked_at_predict():
    X, y = blob_arrays()
    est = DecentralizedClassifier(rounds=10, eta=0.1).fit(X, y)
    with pytest.raises(ValueError, match="features"):
        est.predict(np.zeros((3, 5)))


def test_torus_topology_params():
    X, y = blob_arrays()
    est = DecentralizedClassifier(
        n_agents=9, topology="torus", torus_rows=3, torus_cols=3,
        rounds=20, eta=0.1,
    ).fit(X, y)
    assert est.params_.ndim == 1
    with pytest.raises(ValueError, match="torus"):
        DecentralizedClassifier(n_agents=9, topology="torus", rounds=2).fit(X, y)


def test_mlp_model_and_lr_schedule():
    X, y = blob_arrays()
    est = DecentralizedClassifier(
        model="mlp", hidden=8, rounds=60, eta=0.3,
        lr_schedule="step:0.5:0.1",
    ).fit(X, y)
    assert est.score(X, y) > 0.9
