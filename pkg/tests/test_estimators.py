import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from chaoscope.estimators import (
    ChannelSelector,
    ChaosNetClassifier,
    LyapunovThresholdLabeler,
    MinMaxTrajectoryScaler,
    check_trajectories,
)


def blobs(rng, n=240, n_k=8, d=2):
    y = rng.integers(0, 2, n)
    X = rng.normal(0.0, 0.3, (n, n_k, d)) + np.where(y, 1.0, -1.0)[:, None, None]
    return X, y


SMALL = dict(conv_widths=(8,), fc_widths=(4, 1), epochs=30)


def test_get_params_round_trip():
    est = ChaosNetClassifier(preset="cnn1d", epochs=3, random_state=9)
    params = est.get_params()
    assert params["preset"] == "cnn1d" and params["epochs"] == 3
    assert clone(est).get_params() == params


def test_fit_predict_toy(rng):
    X, y = blobs(rng)
    est = ChaosNetClassifier(**SMALL, random_state=0).fit(X, y)
    assert est.score(X, y) >= 0.99
    proba = est.predict_proba(X)
    assert proba.shape == (len(X), 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(np.unique(est.predict(X))) <= {0, 1}
    assert len(est.history_) >= 1


def test_fit_is_deterministic(rng):
    X, y = blobs(rng, 100)
    a = ChaosNetClassifier(**{**SMALL, "epochs": 2}, random_state=4).fit(X, y)
    b = ChaosNetClassifier(**{**SMALL, "epochs": 2}, random_state=4).fit(X, y)
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))


def test_bad_labels_rejected(rng):
    X, _ = blobs(rng, 10)
    with pytest.raises(ValueError):
        ChaosNetClassifier(**SMALL).fit(X, np.full(10, 2))
    with pytest.raises(ValueError):
        ChaosNetClassifier(**SMALL).fit(X, np.zeros(9))


def test_pipeline_with_channel_selection(rng):
    X, y = blobs(rng)
    pipe = make_pipeline(ChannelSelector([0]), MinMaxTrajectoryScaler(),
                         ChaosNetClassifier(preset="cnn1d", **{**SMALL, "epochs": 1}))
    pipe.fit(X, y)
    assert pipe.predict(X).shape == (len(X),)


def test_channel_selector_duplicates_and_checks(rng):
    X = rng.random((3, 5, 1))
    out = ChannelSelector([0, 0]).fit_transform(X)
    assert out.shape == (3, 5, 2)
    np.testing.assert_array_equal(out[:, :, 0], out[:, :, 1])
    with pytest.raises(IndexError):
        ChannelSelector([1]).fit_transform(X)


def test_scaler_is_stateless(rng):
    X = rng.normal(size=(4, 6, 3)) * 10
    Z = MinMaxTrajectoryScaler().transform(X)
    np.testing.assert_allclose(Z.min(axis=1), 0.0)
    np.testing.assert_allclose(Z.max(axis=1), 1.0)


def test_check_trajectories_shapes():
    assert check_trajectories(np.zeros((2, 5))).shape == (2, 5, 1)
    assert check_trajectories(np.zeros((2, 5, 2, 1))).shape == (2, 5, 2)
    with pytest.raises(ValueError):
        check_trajectories(np.zeros((2, 5, 2, 3)))


def test_threshold_labeler(rng):
    lam = np.concatenate([rng.normal(0, 0.005, 300), rng.normal(0.5, 0.04, 700)])
    lab = LyapunovThresholdLabeler().fit(lam)
    assert 0.02 < lab.threshold_ < 0.4 and not lab.fallback_used_
    np.testing.assert_array_equal(lab.labels_, lab.predict(lam))
    assert lab.predict([0.0, 0.6]).tolist() == [0, 1]
    flat = LyapunovThresholdLabeler(K=0.0).fit(np.full(20, 1e-4))
    assert flat.fallback_used_ and flat.predict([0.9]).tolist() == [0]


def test_collapse_triggers_restart(rng, monkeypatch):
    import chaoscope.estimators as mod
    from chaoscope.tensornet import TrainingCollapsedError

    X, y = blobs(rng, 60)
    calls = []
    real = mod.fit_model

    def flaky(model, X, y, cfg):
        calls.append(model.parameters()[0].copy())
        if len(calls) == 1:
            raise TrainingCollapsedError("constant output")
        return real(model, X, y, cfg)

    monkeypatch.setattr(mod, "fit_model", flaky)
    est = ChaosNetClassifier(**{**SMALL, "epochs": 1}, random_state=5).fit(X, y)
    assert est.n_restarts_ == 1 and len(calls) == 2
    assert not np.array_equal(calls[0], calls[1])
    calls.clear()
    with pytest.raises(TrainingCollapsedError):
        ChaosNetClassifier(**{**SMALL, "epochs": 1}, max_restarts=0).fit(X, y)
