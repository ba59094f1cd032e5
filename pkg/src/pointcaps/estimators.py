"""Scikit-learn style estimators over the capsule auto-encoder.

``PointCapsuleAutoencoder`` is a transformer: fit learns the network,
transform maps clouds to flattened latent grids (ready for any
downstream sklearn classifier), inverse_transform decodes latents back
to point clouds. ``CapsulePartSegmenter`` wraps the part pipeline and
``LatentHingeClassifier`` the linear shape classifier, both with the
usual fit/predict surface and get_params round-tripping.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .autodiff import AdamConfig
from .data.cloud import PointCloud
from .latent import ClassifierConfig, LinearClassifier, flatten_latent
from .metrics import seg_metrics
from .nn.decoder import DecoderConfig
from .nn.encoder import EncoderConfig
from .nn.model import PointCapsuleAE
from .nn.routing import DYNAMIC_ROUTING, RoutingConfig
from .partseg import (
    CapsulePartNet,
    PartNetConfig,
    gt_capsule_labels,
    mode_filter,
    nearest_labels,
    segment_points,
    train_partnet,
)
from .training import TrainConfig, eval_ae, train_ae
from .validation import (
    check_class_labels,
    check_cloud_array,
    check_latent_array,
    check_point_labels,
)


class PointCapsuleAutoencoder(TransformerMixin, BaseEstimator):
    """Unsupervised point-cloud transformer with capsule latents.

    fit(X) trains the auto-encoder on X of shape (n_shapes, n_points, 3);
    transform(X) returns flattened (n_shapes, latent_count * latent_dim)
    features; inverse_transform decodes them back to point sets.
    """

    def __init__(self, mlp_widths=(64, 128), branch_count=16, branch_width=1024,
                 latent_count=64, latent_dim=64, routing_iterations=3,
                 routing_mode=DYNAMIC_ROUTING, replicas_per_capsule=32,
                 decoder_widths=(), grid_seed=0, epochs=100, batch_size=8,
                 learning_rate=1e-4, seed=0, deterministic=False, dtype="float32"):
        self.mlp_widths = mlp_widths
        self.branch_count = branch_count
        self.branch_width = branch_width
        self.latent_count = latent_count
        self.latent_dim = latent_dim
        self.routing_iterations = routing_iterations
        self.routing_mode = routing_mode
        self.replicas_per_capsule = replicas_per_capsule
        self.decoder_widths = decoder_widths
        self.grid_seed = grid_seed
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.deterministic = deterministic
        self.dtype = dtype

    def _build_model(self, n_points):
        enc = EncoderConfig(
            n_points=n_points,
            mlp_widths=(3,) + tuple(self.mlp_widths),
            branch_count=self.branch_count,
            branch_width=self.branch_width,
        )
        rod = RoutingConfig(
            latent_count=self.latent_count,
            latent_dim=self.latent_dim,
            iterations=self.routing_iterations,
            mode=self.routing_mode,
        )
        dec = DecoderConfig(
            replicas_per_capsule=self.replicas_per_capsule,
            mlp_widths=tuple(self.decoder_widths),
            grid_seed=self.grid_seed,
        )
        return PointCapsuleAE(
            enc, rod, dec,
            dtype=np.dtype(self.dtype),
            seed=self.seed,
            deterministic=self.deterministic,
        )

    def fit(self, X, y=None):
        X = check_cloud_array(X)
        self.model_ = self._build_model(X.shape[1])
        cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            adam=AdamConfig(learning_rate=self.learning_rate),
            seed=self.seed,
        )
        dataset = [PointCloud(points=p) for p in X]
        report = train_ae(self.model_, dataset, cfg)
        self.loss_curve_ = report.epoch_losses
        self.n_points_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")

    def encode_capsules(self, X):
        """Latent capsule grids, shape (n_shapes, latent_count, latent_dim)."""
        self._check_fitted()
        X = check_cloud_array(X)
        self.model_.set_mode("eval")
        return np.stack([self.model_.encode_latent(p) for p in X])

    def transform(self, X):
        latents = self.encode_capsules(X)
        return latents.reshape(latents.shape[0], -1)

    def inverse_transform(self, Z):
        """Decode latent grids (flattened or not) to (n, points, 3) clouds."""
        self._check_fitted()
        Z = check_latent_array(Z, self.latent_count, self.latent_dim)
        self.model_.set_mode("eval")
        grid = self.model_.eval_grid()
        return np.stack(
            [self.model_.decode_latent(z, grid).points for z in Z]
        )

    def reconstruct(self, X):
        """Encode then decode each cloud; returns (n, points, 3)."""
        return self.inverse_transform(self.encode_capsules(X))

    def score(self, X, y=None):
        """Negative mean Chamfer distance over X (higher is better)."""
        self._check_fitted()
        X = check_cloud_array(X)
        report = eval_ae(self.model_, [PointCloud(points=p) for p in X])
        return -report.chamfer_raw


class CapsulePartSegmenter(BaseEstimator):
    """Per-point part labels via capsule attribution.

    Needs a fitted PointCapsuleAutoencoder. fit derives per-capsule part
    labels from labeled clouds and trains the capsule part network;
    predict labels every decoded point and smooths with a k-NN mode
    filter, returning labels aligned with the input points by nearest
    neighbor.
    """

    def __init__(self, autoencoder=None, category_count=1, epochs=150,
                 learning_rate=0.01, filter_k=9, seed=0):
        self.autoencoder = autoencoder
        self.category_count = category_count
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.filter_k = filter_k
        self.seed = seed

    def _model(self):
        if self.autoencoder is None or not hasattr(self.autoencoder, "model_"):
            raise RuntimeError("CapsulePartSegmenter needs a fitted autoencoder")
        return self.autoencoder.model_

    def fit(self, X, y, categories=None):
        model = self._model()
        X = check_cloud_array(X)
        y = check_point_labels(y, X.shape[0], X.shape[1])
        cats = np.zeros(X.shape[0], dtype=np.int64) if categories is None \
            else check_class_labels(categories, X.shape[0]).astype(np.int64)
        model.set_mode("eval")
        grid = model.eval_grid()
        part_count = int(y.max()) + 1
        cfg = PartNetConfig(
            part_count=part_count,
            latent_dim=model.routing_cfg.latent_dim,
            category_count=self.category_count,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )
        self.partnet_ = CapsulePartNet(cfg)
        samples = []
        for points, labels, cat in zip(X, y, cats):
            cloud = PointCloud(points=points, labels=labels)
            latent = model.encode_latent(points)
            labeling = gt_capsule_labels(model, latent, cloud, grid)
            samples.append((latent, int(cat), labeling))
        report = train_partnet(samples, self.partnet_)
        self.loss_curve_ = report.losses
        self.capsule_accuracy_ = report.accuracies[-1] if report.accuracies else float("nan")
        self.part_count_ = part_count
        return self

    def predict(self, X, categories=None):
        if not hasattr(self, "partnet_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")
        model = self._model()
        X = check_cloud_array(X)
        cats = np.zeros(X.shape[0], dtype=np.int64) if categories is None \
            else check_class_labels(categories, X.shape[0]).astype(np.int64)
        model.set_mode("eval")
        grid = model.eval_grid()
        out = np.empty((X.shape[0], X.shape[1]), dtype=np.int64)
        for i, (points, cat) in enumerate(zip(X, cats)):
            latent = model.encode_latent(points)
            seg = segment_points(model, self.partnet_, latent, int(cat), grid)
            if self.filter_k and self.filter_k > 1:
                seg = mode_filter(seg, k=self.filter_k)
            out[i] = nearest_labels(points, seg.points, seg.labels)
        return out

    def score(self, X, y, categories=None):
        """Mean point-label accuracy over the batch."""
        y = np.asarray(y, dtype=np.int64)
        pred = self.predict(X, categories=categories)
        return float(
            np.mean([seg_metrics(p, g).accuracy for p, g in zip(pred, y)])
        )


class LatentHingeClassifier(ClassifierMixin, BaseEstimator):
    """Linear one-vs-rest hinge classifier on flattened latent features."""

    def __init__(self, epochs=300, learning_rate=0.05, l2=1e-4, seed=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.l2 = l2
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X.reshape(X.shape[0], -1)
        y = check_class_labels(y, X.shape[0]).astype(np.int64)
        cfg = ClassifierConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            l2=self.l2,
            seed=self.seed,
        )
        self.classifier_, self.loss_curve_ = LinearClassifier.train(X, y, cfg)
        self.classes_ = self.classifier_.classes
        return self

    def decision_function(self, X):
        if not hasattr(self, "classifier_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X.reshape(X.shape[0], -1)
        return self.classifier_.scores(X)

    def predict(self, X):
        if not hasattr(self, "classifier_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X.reshape(X.shape[0], -1)
        return self.classifier_.predict(X)
