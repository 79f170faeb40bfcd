"""Scikit-learn style estimators wrapping the functional core, so the
embedder, autoencoder and explainer compose with pipelines and
model-selection tooling."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import architectures, autoencoder, siamese
from .explain import (PerturbationConfig, compute_prototypes,
                      nearest_prototype)
from .explain import explain as explain_one
from .optim import OptimizerConfig


def _opt_config(optimizer, learning_rate, random_state):
    return OptimizerConfig(method=optimizer, lr=learning_rate,
                           seed=random_state)


class SiameseEmbedder(TransformerMixin, BaseEstimator):
    """Contrastive-loss embedder: fit on labeled data, transform to R^D."""

    def __init__(self, embedding_dim=2, hidden=(64,), architecture="dense",
                 tau=1.0, mu_reg=0.0, pairs_per_anchor=5, epochs=100,
                 batch_size=64, optimizer="adam", learning_rate=1e-3,
                 random_state=0):
        self.embedding_dim = embedding_dim
        self.hidden = hidden
        self.architecture = architecture
        self.tau = tau
        self.mu_reg = mu_reg
        self.pairs_per_anchor = pairs_per_anchor
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        side = int(round(np.sqrt(X.shape[1])))
        specs = architectures.build_snn_specs(
            self.architecture, self.embedding_dim, self.hidden, side)
        pairs = siamese.build_pair_set(y, self.pairs_per_anchor,
                                       self.random_state)
        params = siamese.ContrastiveParams(tau=self.tau, mu_reg=self.mu_reg)
        self.model_, self.history_ = siamese.train_snn(
            X, pairs, specs, params,
            _opt_config(self.optimizer, self.learning_rate, self.random_state),
            self.epochs, self.batch_size, init_seed=self.random_state)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return siamese.embed(self.model_, X)


class NearestPrototypeClassifier(ClassifierMixin, BaseEstimator):
    """Classifies embeddings by the closest per-class mean."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.prototypes_ = compute_prototypes(X, y)
        self.classes_ = np.asarray(self.prototypes_.classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "prototypes_")
        X = check_array(X, dtype=np.float64)
        return np.array([nearest_prototype(h, self.prototypes_)
                         for h in X])


class AlignedAutoencoder(TransformerMixin, BaseEstimator):
    """Autoencoder whose code is pulled toward a fitted embedder's output.

    transform returns codes; inverse_transform decodes embeddings back to
    input space."""

    def __init__(self, embedder=None, hidden=(64,), architecture="dense",
                 gamma=1.0, mu_close=1.0, lambda_reg=1e-4, epochs=100,
                 finetune_epochs=10, batch_size=64, optimizer="adam",
                 learning_rate=1e-3, random_state=0):
        self.embedder = embedder
        self.hidden = hidden
        self.architecture = architecture
        self.gamma = gamma
        self.mu_close = mu_close
        self.lambda_reg = lambda_reg
        self.epochs = epochs
        self.finetune_epochs = finetune_epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.embedder is None:
            raise ValueError("AlignedAutoencoder needs a fitted SiameseEmbedder")
        check_is_fitted(self.embedder, "model_")
        X = check_array(X, dtype=np.float64)
        h = self.embedder.transform(X)
        spec_enc, spec_dec = architectures.build_ae_specs(
            self.architecture, X.shape[1], h.shape[1], self.hidden)
        weights = autoencoder.AutoencoderLossWeights(
            gamma=self.gamma, mu_close=self.mu_close, lambda_reg=self.lambda_reg)
        opt = _opt_config(self.optimizer, self.learning_rate, self.random_state)
        self.model_, self.history_ = autoencoder.train_autoencoder(
            X, h, spec_enc, spec_dec, weights, opt, self.epochs,
            self.batch_size, init_seed=self.random_state)
        if self.finetune_epochs:
            self.model_ = autoencoder.finetune_decoder(
                self.model_, h, X, opt, self.finetune_epochs, self.batch_size)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return autoencoder.encode(self.model_, X)

    def inverse_transform(self, H):
        check_is_fitted(self, "model_")
        H = check_array(H, dtype=np.float64)
        return autoencoder.decode(self.model_, H)


class SiameseExplainer(BaseEstimator):
    """End-to-end pipeline: embedder + aligned autoencoder + prototypes,
    with prototype-directed perturbation explanations."""

    def __init__(self, embedder=None, autoencoder=None, s=None, q=None,
                 n_samples=5000, sigma_factor=0.1, sigma_floor=1e-6,
                 random_state=0):
        self.embedder = embedder
        self.autoencoder = autoencoder
        self.s = s
        self.q = q
        self.n_samples = n_samples
        self.sigma_factor = sigma_factor
        self.sigma_floor = sigma_floor
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.embedder_ = self.embedder or SiameseEmbedder(
            random_state=self.random_state)
        if not hasattr(self.embedder_, "model_"):
            self.embedder_.fit(X, y)
        self.autoencoder_ = self.autoencoder or AlignedAutoencoder(
            embedder=self.embedder_, random_state=self.random_state)
        if not hasattr(self.autoencoder_, "model_"):
            self.autoencoder_.embedder = self.embedder_
            self.autoencoder_.fit(X)
        h = self.embedder_.transform(X)
        self.prototypes_ = compute_prototypes(h, y)
        self.n_features_in_ = X.shape[1]
        return self

    def _config(self, n_features):
        d = self.embedder_.model_.embedding_dim
        s = self.s if self.s is not None else max(1, d // 2)
        q = self.q if self.q is not None else -(-n_features * 5 // 100)
        return PerturbationConfig(
            s=s, q=q, n_samples=self.n_samples,
            sigma_factor=self.sigma_factor, sigma_floor=self.sigma_floor,
            seed=self.random_state)

    def predict(self, X):
        check_is_fitted(self, "prototypes_")
        h = self.embedder_.transform(check_array(X, dtype=np.float64))
        return np.array([nearest_prototype(hi, self.prototypes_)
                         for hi in h])

    def explain(self, x):
        """ExplanationResult for a single input vector."""
        check_is_fitted(self, "prototypes_")
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return explain_one(x, self.embedder_.model_,
                                   self.autoencoder_.model_,
                                   self.prototypes_, self._config(len(x)))

    def transform(self, X):
        """Binary saliency masks, one row per input."""
        X = check_array(X, dtype=np.float64)
        return np.stack([self.explain(x).mask for x in X])
