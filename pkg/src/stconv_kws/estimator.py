"""scikit-learn compatible classifier facade over the training pipeline.

`STConvClassifier` takes pre-extracted feature matrices of shape
(n_samples, 99, 40) and exposes the usual fit / predict / predict_proba
surface, so the network composes with sklearn model selection and
pipelines.  Use :mod:`stconv_kws.frontend` / :mod:`stconv_kws.dataset`
to produce the features.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from stconv_kws import model as model_mod
from stconv_kws import trainer as trainer_mod
from stconv_kws import frontend


class STConvClassifier(BaseEstimator, ClassifierMixin):
    """Separable temporal convolution network with attention.

    Parameters
    ----------
    variant : "base", "narrow" or "avg" architecture preset.
    seed : controls parameter init and shuffling; same seed, same run.
    validation_fraction : share of the training data held out for the
        learning-rate schedule and best-checkpoint selection when no
        explicit validation set is passed to ``fit``.
    """

    def __init__(self, variant="base", seed=0, max_epochs=80, batch_size=32,
                 lr_init=0.001, validation_fraction=0.1,
                 stop_at_train_accuracy=None):
        self.variant = variant
        self.seed = seed
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.validation_fraction = validation_fraction
        self.stop_at_train_accuracy = stop_at_train_accuracy

    def _validate_features(self, X):
        X = np.asarray(X, dtype=np.float64)
        expected = (frontend.NUM_FRAMES, frontend.NUM_COEFFS)
        if X.ndim != 3 or X.shape[1:] != expected:
            raise ValueError(
                f"X must have shape (n_samples, {expected[0]}, {expected[1]}), "
                f"got {X.shape}"
            )
        return X

    def fit(self, X, y, X_val=None, y_val=None):
        X = self._validate_features(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"X and y disagree: {len(X)} vs {len(y)}")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")

        if X_val is None:
            rng = np.random.default_rng(self.seed)
            perm = rng.permutation(len(y_idx))
            n_val = max(1, int(round(self.validation_fraction * len(y_idx))))
            val_idx, train_idx = perm[:n_val], perm[n_val:]
            X_val, y_val_idx = X[val_idx], y_idx[val_idx]
            X, y_idx = X[train_idx], y_idx[train_idx]
        else:
            X_val = self._validate_features(X_val)
            y_val_idx = np.searchsorted(self.classes_, np.asarray(y_val))

        config = model_mod.config_for_variant(self.variant)
        config.num_classes = len(self.classes_)
        self.model_ = model_mod.build(config, self.seed)
        cfg = trainer_mod.TrainConfig(
            lr_init=self.lr_init,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            stop_at_train_accuracy=self.stop_at_train_accuracy,
        )
        self.train_result_ = trainer_mod.train(
            self.model_, (X, y_idx), (X_val, y_val_idx), cfg
        )
        self.train_result_.restore_best(self.model_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("STConvClassifier is not fitted yet; call fit first")

    def predict_proba(self, X):
        self._check_fitted()
        X = self._validate_features(X)
        n = len(X)
        out = np.empty((n, len(self.classes_)))
        for start in range(0, n, 256):
            out[start : start + 256] = self.model_.forward(X[start : start + 256])
        return out

    def predict(self, X):
        self._check_fitted()
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
