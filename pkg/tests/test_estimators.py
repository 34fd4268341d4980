"""Estimator API: protocol compliance and fit/predict behavior."""

import numpy as np
import pytest

from kdcontext.errors import ArgumentError, DataError
from kdcontext.estimators import PointCloudClassifier, PointCloudSegmenter
from kdcontext.synthetic import make_synthetic


def classify_arrays(n_samples=16, n_points=32, seed=0):
    clouds = make_synthetic("classify4", n_points, n_samples, seed=seed)
    X = [pc.data for pc in clouds]
    y = np.array([int(pc.labels[0]) for pc in clouds])
    return X, y


def fast_classifier(**overrides):
    kwargs = dict(depth=5, width_scale=0.05, epochs=4, batch_size=8, seed=0)
    kwargs.update(overrides)
    return PointCloudClassifier(**kwargs)


def test_get_set_params_roundtrip():
    est = fast_classifier()
    params = est.get_params()
    assert params["depth"] == 5 and params["epochs"] == 4
    est.set_params(epochs=9, learning_rate=0.01)
    assert est.epochs == 9 and est.learning_rate == 0.01
    with pytest.raises(ArgumentError):
        est.set_params(nonsense=1)


def test_sklearn_clone_compatibility():
    pytest.importorskip("sklearn")
    from sklearn.base import clone

    est = fast_classifier(epochs=7)
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()


@pytest.mark.filterwarnings("ignore::DeprecationWarning")
def test_sklearn_cross_val_score_composes():
    pytest.importorskip("sklearn")
    from sklearn.model_selection import cross_val_score

    X, y = classify_arrays(n_samples=16, n_points=32)
    scores = cross_val_score(fast_classifier(epochs=2), np.stack(X), y, cv=2)
    assert scores.shape == (2,)
    assert ((scores >= 0) & (scores <= 1)).all()


def test_classifier_fit_predict_shapes():
    X, y = classify_arrays()
    est = fast_classifier().fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (len(X),)
    assert set(pred) <= set(y)
    proba = est.predict_proba(X)
    assert proba.shape == (len(X), 4)
    np.testing.assert_allclose(proba.sum(axis=1), np.ones(len(X)), atol=1e-5)
    assert 0.0 <= est.score(X, y) <= 1.0


def test_classifier_learns_above_chance():
    X, y = classify_arrays(n_samples=32, n_points=64, seed=3)
    est = PointCloudClassifier(depth=6, width_scale=0.2, epochs=100, batch_size=8,
                               learning_rate=2e-3, seed=1,
                               early_stop_metric=0.9)
    est.fit(X, y)
    assert est.score(X, y) > 0.5


def test_classifier_label_values_preserved():
    X, y = classify_arrays()
    shifted = y * 10 + 3  # arbitrary non-contiguous label values
    est = fast_classifier().fit(X, shifted)
    np.testing.assert_array_equal(est.classes_, np.unique(shifted))
    assert set(est.predict(X)) <= set(shifted)


def test_classifier_resamples_odd_sizes(rng):
    X = [rng.normal(size=(40, 3)) for _ in range(8)]  # not a power of two
    y = np.arange(8) % 2
    est = fast_classifier(epochs=2).fit(X, y)
    assert est.predict(X).shape == (8,)


def test_classifier_transform_signatures():
    X, y = classify_arrays(n_samples=8)
    est = fast_classifier(epochs=2).fit(X, y)
    sig = est.transform(X)
    assert sig.shape[0] == 8
    assert sig.shape[1] == est.config_.agg_widths[-1]


def test_predict_before_fit_rejected():
    with pytest.raises(ArgumentError, match="not fitted"):
        fast_classifier().predict([np.zeros((32, 3))])


def test_wrong_label_count_rejected():
    X, y = classify_arrays()
    with pytest.raises(DataError):
        fast_classifier().fit(X, y[:-1])


def test_3d_array_input_accepted():
    X, y = classify_arrays(n_samples=8, n_points=32)
    stacked = np.stack(X)
    est = fast_classifier(epochs=2).fit(stacked, y)
    assert est.n_features_in_ == 3
    assert est.predict(stacked).shape == (8,)


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------

def seg_clouds(n_samples=6, n_points=32, seed=5):
    return make_synthetic("segment2", n_points, n_samples, seed=seed)


def fast_segmenter(**overrides):
    kwargs = dict(depth=5, width_scale=0.05, epochs=3, batch_size=4, seed=0)
    kwargs.update(overrides)
    return PointCloudSegmenter(**kwargs)


def test_segmenter_fit_predict_alignment():
    clouds = seg_clouds()
    est = fast_segmenter().fit(clouds)
    preds = est.predict(clouds)
    assert len(preds) == len(clouds)
    for pc, pred in zip(clouds, preds):
        assert pred.shape == (pc.n,)
        assert set(np.unique(pred)) <= {0, 1}
    assert 0.0 <= est.score(clouds) <= 1.0


def test_segmenter_labels_via_y():
    clouds = seg_clouds()
    X = [pc.data for pc in clouds]
    y = [pc.labels for pc in clouds]
    est = fast_segmenter().fit(X, y)
    np.testing.assert_array_equal(est.classes_, [0, 1])


def test_segmenter_requires_labels():
    X = [np.random.default_rng(0).normal(size=(32, 3))]
    with pytest.raises(DataError, match="labels"):
        fast_segmenter().fit(X)


def test_segmenter_predict_rejects_wrong_size(rng):
    est = fast_segmenter().fit(seg_clouds())
    with pytest.raises(DataError):
        est.predict([rng.normal(size=(40, 3))])


def test_segmenter_transform_per_point_features():
    clouds = seg_clouds(n_samples=2)
    est = fast_segmenter(epochs=1).fit(clouds)
    feats = est.transform(clouds)
    assert len(feats) == 2
    assert feats[0].shape[0] == 32
