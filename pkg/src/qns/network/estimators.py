"""Scikit-learn style estimators wrapping the recurrent network.

``SpectrumRegressor`` maps coherence decays (n_samples, n_steps) to
noise spectra through the exponential head; ``CurveDenoiser`` maps
noisy decays to clean ones through the clamped linear head.  Both
follow the fit/predict/transform conventions and compose with the
usual tooling (get_params, clone, pipelines).
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import ValidationError
from .checkpoint import load_checkpoint, save_checkpoint
from .core import Head, forward_batch, init_params
from .training import TrainingConfig, evaluate_mape, fine_tune, train_network


def _check_xy(x, y):
    x = check_array(x, dtype=np.float64)
    y = check_array(y, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValidationError("X and y must have the same number of rows")
    return x, y


class _RecurrentBase(BaseEstimator):
    _head = Head.EXPONENTIAL

    def __init__(
        self,
        hidden_dim=128,
        epochs=150,
        batch_size=32,
        max_lr=2e-2,
        warmup_frac=0.3,
        patience=40,
        validation_fraction=0.1,
        seed=0,
    ):
        self.hidden_dim = hidden_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_lr = max_lr
        self.warmup_frac = warmup_frac
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _config(self):
        return TrainingConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            max_lr=self.max_lr,
            warmup_frac=self.warmup_frac,
            patience=self.patience,
            seed=self.seed,
        )

    def _split_validation(self, x, y):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must lie in (0, 1)")
        n = x.shape[0]
        n_val = max(1, int(round(n * self.validation_fraction)))
        if n_val >= n:
            raise ValidationError("not enough samples to hold out validation data")
        order = np.random.default_rng(self.seed).permutation(n)
        val, train = order[:n_val], order[n_val:]
        return x[train], y[train], x[val], y[val]

    def _out_bias(self, y):
        raise NotImplementedError

    def fit(self, X, y, validation_data=None):
        """Train on decays ``X`` against targets ``y``.

        ``validation_data=(X_val, y_val)`` supplies an explicit
        monitoring split; otherwise ``validation_fraction`` of the rows
        is held out.  Returns self.
        """
        x, y = _check_xy(X, y)
        if validation_data is not None:
            x_val, y_val = _check_xy(*validation_data)
            x_tr, y_tr = x, y
        else:
            x_tr, y_tr, x_val, y_val = self._split_validation(x, y)
        params = init_params(
            hidden_dim=self.hidden_dim,
            output_dim=y.shape[1],
            head=self._head,
            seed=self.seed,
            out_bias=self._out_bias(y_tr),
        )
        self.params_, self.history_ = train_network(
            params, x_tr, y_tr, x_val, y_val, self._config()
        )
        self.n_steps_in_ = x.shape[1]
        return self

    def fine_tune(self, X, y, validation_data=None, epochs=None):
        """Adapt a fitted estimator to new data at reduced learning rate."""
        check_is_fitted(self, "params_")
        x, y = _check_xy(X, y)
        if y.shape[1] != self.params_.output_dim:
            raise ValidationError("fine-tune targets have a different output size")
        if validation_data is not None:
            x_val, y_val = _check_xy(*validation_data)
            x_tr, y_tr = x, y
        else:
            x_tr, y_tr, x_val, y_val = self._split_validation(x, y)
        config = self._config()
        if epochs is not None:
            from dataclasses import replace

            config = replace(config, epochs=int(epochs))
        self.params_, tune_history = fine_tune(
            self.params_, x_tr, y_tr, x_val, y_val, config
        )
        self.history_ = list(getattr(self, "history_", [])) + list(tune_history)
        return self

    def _predict(self, X, chunk=256):
        check_is_fitted(self, "params_")
        x = check_array(X, dtype=np.float64)
        if x.shape[1] != self.n_steps_in_:
            raise ValidationError(
                f"expected sequences of length {self.n_steps_in_}, got {x.shape[1]}"
            )
        outputs = [
            forward_batch(self.params_, x[i : i + chunk]) for i in range(0, x.shape[0], chunk)
        ]
        return np.vstack(outputs)

    def score_mape(self, X, y) -> float:
        """Dataset-mean MAPE (%), the training metric."""
        x, y = _check_xy(X, y)
        check_is_fitted(self, "params_")
        return evaluate_mape(self.params_, x, y)

    def save(self, path):
        check_is_fitted(self, "params_")
        save_checkpoint(
            self.params_,
            path,
            config_echo={**self.get_params(), "n_steps_in": int(self.n_steps_in_)},
        )

    @classmethod
    def from_checkpoint(cls, path):
        params, manifest = load_checkpoint(path)
        config = dict(manifest.get("config", {}))
        n_steps = config.pop("n_steps_in", None)
        known = cls().get_params()
        est = cls(**{k: v for k, v in config.items() if k in known})
        if params.head is not cls._head:
            raise ValidationError(
                f"checkpoint head {params.head.value!r} does not match {cls.__name__}"
            )
        est.params_ = params
        est.n_steps_in_ = int(n_steps) if n_steps is not None else params.output_dim
        est.history_ = []
        return est


class SpectrumRegressor(_RecurrentBase, RegressorMixin):
    """Coherence decay in, noise spectrum out (strictly positive)."""

    _head = Head.EXPONENTIAL

    def _out_bias(self, y):
        if np.any(y <= 0):
            raise ValidationError("spectrum targets must be positive")
        return np.mean(np.log(y), axis=0)

    def predict(self, X):
        return self._predict(X)


class CurveDenoiser(_RecurrentBase, TransformerMixin):
    """Noisy coherence decay in, clean decay out (clamped to (0, 1.1])."""

    _head = Head.LINEAR_CLAMPED

    def __init__(
        self,
        hidden_dim=128,
        epochs=150,
        batch_size=32,
        max_lr=2e-2,
        warmup_frac=0.3,
        patience=40,
        validation_fraction=0.1,
        seed=0,
    ):
        super().__init__(
            hidden_dim=hidden_dim,
            epochs=epochs,
            batch_size=batch_size,
            max_lr=max_lr,
            warmup_frac=warmup_frac,
            patience=patience,
            validation_fraction=validation_fraction,
            seed=seed,
        )

    def _out_bias(self, y):
        return np.mean(y, axis=0)

    def transform(self, X):
        return self._predict(X)

    def predict(self, X):
        return self._predict(X)
