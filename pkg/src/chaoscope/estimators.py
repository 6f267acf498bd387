"""scikit-learn compatible wrappers.

Trajectory batches are arrays of shape (n_samples, N_K, d); a 2D array is
read as single-channel trajectories (n_samples, N_K).

    >>> from sklearn.pipeline import make_pipeline
    >>> clf = make_pipeline(ChannelSelector([0]), ChaosNetClassifier(preset="cnn1d"))
"""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import normalize_values
from .lyapunov import HistogramSpec, labels_from_lambdas
from .tensornet import Model, TrainingCollapsedError, TrainingConfig, build_preset, fit_model

log = logging.getLogger(__name__)


def check_trajectories(X, dtype=np.float64):
    """Validate a batch of trajectories and return it as (n, N_K, d)."""
    X = check_array(X, allow_nd=True, dtype=dtype, ensure_2d=True)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim == 4 and X.shape[-1] == 1:
        X = X[..., 0]
    if X.ndim != 3:
        raise ValueError(f"expected trajectories of shape (n, N_K, d), got {X.shape}")
    return X


class ChaosNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary chaos classifier on short trajectory segments.

    ``predict_proba[:, 1]`` is the network's sigmoid output; labels follow a
    0.5 cut (1 = chaotic, 0 = regular). Explicit ``conv_widths`` /
    ``fc_widths`` override the preset's widths (``conv_widths`` is ignored
    by the fcn preset). A run whose output collapses to a constant (dead
    ReLU layer) is restarted from a fresh initialization, at most
    ``max_restarts`` times; ``n_restarts_`` records how many were needed.
    """

    def __init__(self, preset="cnn2d", scale="desk", conv_widths=None, fc_widths=None,
                 fc_bias=False, dtype="float32", epochs=50, batch_size=64, learning_rate=1e-3,
                 patience=10, validation_fraction=0.1, max_restarts=4, random_state=0):
        self.preset = preset
        self.scale = scale
        self.conv_widths = conv_widths
        self.fc_widths = fc_widths
        self.fc_bias = fc_bias
        self.dtype = dtype
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.max_restarts = max_restarts
        self.random_state = random_state

    def _build_spec(self, n_k, channels):
        spec = build_preset(self.preset, n_k, channels, self.scale, self.dtype, self.fc_bias)
        if self.conv_widths is not None and spec.kind == "cnn":
            spec.conv_widths = tuple(self.conv_widths)
        if self.fc_widths is not None:
            spec.fc_widths = tuple(self.fc_widths)
        spec.__post_init__()
        return spec

    def _seeds(self, attempt=0):
        ss = np.random.SeedSequence(0 if self.random_state is None else self.random_state)
        init, shuffle = ss.spawn(2)
        if attempt:
            init = np.random.SeedSequence(init.entropy, spawn_key=(0, attempt))
        return int(init.generate_state(1)[0]), int(shuffle.generate_state(1)[0])

    def training_config(self):
        return TrainingConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.learning_rate,
                              patience=self.patience, validation_fraction=self.validation_fraction,
                              seed=self._seeds()[1])

    def fit(self, X, y):
        X = check_trajectories(X)
        y = np.asarray(y).ravel()
        if len(y) != len(X):
            raise ValueError("X and y have different lengths")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (regular) or 1 (chaotic)")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1] * X.shape[2]
        spec, cfg = self._build_spec(X.shape[1], X.shape[2]), self.training_config()
        for attempt in range(self.max_restarts + 1):
            self.model_ = Model(spec, seed=self._seeds(attempt)[0])
            self.n_restarts_ = attempt
            try:
                self.history_ = fit_model(self.model_, X, y, cfg) if cfg.epochs > 0 else []
                return self
            except TrainingCollapsedError as exc:
                if attempt == self.max_restarts:
                    raise
                log.info("restarting after collapse (%s)", exc)

    @classmethod
    def from_model(cls, model, **params):
        """Wrap an already trained Model (e.g. from a checkpoint)."""
        est = cls(**params)
        est.model_ = model
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = model.spec.input_shape[0] * model.spec.input_shape[1]
        est.history_ = []
        est.n_restarts_ = 0
        return est

    def predict_proba(self, X, batch_size=2048):
        check_is_fitted(self, "model_")
        X = check_trajectories(X)
        out = np.empty(len(X))
        for i in range(0, len(X), batch_size):
            out[i:i + batch_size] = self.model_.forward(X[i:i + batch_size])
        return np.stack([1.0 - out, out], axis=1)

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int8)


class LyapunovThresholdLabeler(ClusterMixin, BaseEstimator):
    """Two-peak histogram split of finite-time exponents.

    ``fit`` locates the threshold, ``predict`` labels exponents against it.
    ``K`` is only used by the single-peak fallback.
    """

    def __init__(self, bin_count=61, K=None, fallback=True):
        self.bin_count = bin_count
        self.K = K
        self.fallback = fallback

    def fit(self, X, y=None):
        lam = check_array(np.asarray(X, dtype=float).reshape(-1, 1)).ravel()
        ref = labels_from_lambdas(lam, self.K, HistogramSpec(self.bin_count), self.fallback)
        self.threshold_ = ref.threshold
        self.fallback_used_ = ref.fallback
        self.labels_ = ref.labels
        return self

    def predict(self, X):
        check_is_fitted(self, "threshold_")
        lam = np.asarray(X, dtype=float).ravel()
        if self.fallback_used_:
            return np.full(lam.shape, self.labels_[0], dtype=np.int8)
        return (lam > self.threshold_).astype(np.int8)


class ChannelSelector(TransformerMixin, BaseEstimator):
    """Keep the listed coordinates, in order; indices may repeat to duplicate a channel."""

    def __init__(self, channels=(0, 1)):
        self.channels = channels

    def fit(self, X, y=None):
        X = check_trajectories(X)
        self.n_channels_in_ = X.shape[2]
        return self

    def transform(self, X):
        X = check_trajectories(X)
        idx = list(self.channels)
        if any(not 0 <= c < X.shape[2] for c in idx):
            raise IndexError(f"channel index out of range for {X.shape[2]} channels")
        return X[:, :, idx]


class MinMaxTrajectoryScaler(TransformerMixin, BaseEstimator):
    """Scale every trajectory channel onto [0, 1] using that trajectory's own range.

    Stateless: ``fit`` learns nothing.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return normalize_values(check_trajectories(X), axis=1)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
