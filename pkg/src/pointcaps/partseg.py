"""Capsule-wise part segmentation.

Ground truth for capsules comes from geometry: decode each capsule's
patch, carry every patch point's label over from its nearest neighbor
in the labeled input cloud, and take the patch mode (ties resolve to
the lowest label). A small linear network then predicts a part for each
latent capsule from the capsule vector and a category one-hot; its
labels propagate to all points the capsule generates, followed by an
optional k-nearest-neighbor mode filter.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .autodiff import AdamConfig, ParameterStore, Tensor, adam_step, no_grad, ops
from .data.cloud import PointCloud
from .data.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .nn.layers import glorot_uniform

_BRUTE_FORCE_LIMIT = 4096


@dataclass
class CapsuleLabeling:
    """One part label per latent capsule."""

    labels: np.ndarray
    part_count: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("capsule labels must be a vector")
        if self.part_count < 1:
            raise ValueError("part_count must be positive")


def nearest_labels(query_points, ref_points, ref_labels):
    """Label each query point from its nearest reference point.

    Small sets use the exhaustive search (ties go to the lowest index);
    large ones use a k-d tree.
    """
    query_points = np.asarray(query_points, dtype=np.float64)
    ref_points = np.asarray(ref_points, dtype=np.float64)
    ref_labels = np.asarray(ref_labels, dtype=np.int64)
    if ref_points.shape[0] != ref_labels.shape[0]:
        raise ValueError("reference points and labels disagree in length")
    if query_points.shape[0] * ref_points.shape[0] <= _BRUTE_FORCE_LIMIT ** 2:
        diff = query_points[:, None, :] - ref_points[None, :, :]
        idx = np.argmin(np.sum(diff * diff, axis=-1), axis=1)
    else:
        _, idx = cKDTree(ref_points).query(query_points, k=1)
    return ref_labels[idx]


def _mode_lowest(values, minlength):
    counts = np.bincount(values, minlength=minlength)
    return int(np.argmax(counts))


def gt_capsule_labels(model, latent, gt_cloud, grid=None):
    """Derive per-capsule part labels from a labeled cloud.

    Decodes every capsule patch with the given (or the model's eval)
    grid, transfers point labels by nearest neighbor and takes the patch
    mode, lowest label winning ties.
    """
    if gt_cloud.labels is None:
        raise ValueError("gt_capsule_labels needs a labeled cloud")
    grid = grid or model.eval_grid()
    part_count = int(gt_cloud.labels.max()) + 1
    recon = model.decode_latent(latent, grid)
    transferred = nearest_labels(recon.points, gt_cloud.points, gt_cloud.labels)
    count = model.routing_cfg.latent_count
    labels = np.empty(count, dtype=np.int64)
    for j in range(count):
        patch_labels = transferred[recon.attribution == j]
        labels[j] = _mode_lowest(patch_labels, part_count)
    return CapsuleLabeling(labels=labels, part_count=part_count)


@dataclass
class PartNetConfig:
    part_count: int
    latent_dim: int
    category_count: int = 1
    epochs: int = 100
    learning_rate: float = 0.01
    seed: int = 0

    def validate(self):
        if self.part_count < 1 or self.latent_dim < 1 or self.category_count < 1:
            raise ValueError("partnet: counts and dims must be positive")
        if self.epochs < 0:
            raise ValueError("partnet: epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("partnet: learning rate must be positive")


class CapsulePartNet:
    """Shared linear classifier over capsule vector plus category one-hot."""

    def __init__(self, cfg, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.store = ParameterStore(dtype=dtype)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, 0x9A27])))
        fan_in = cfg.latent_dim + cfg.category_count
        init = glorot_uniform(rng, fan_in, cfg.part_count, (fan_in, cfg.part_count), self.store.dtype)
        self.w = self.store.add("partnet.w", init)
        self.b = self.store.add("partnet.b", np.zeros(cfg.part_count, dtype=self.store.dtype))

    def features(self, latent, category):
        latent = np.asarray(latent, dtype=self.store.dtype)
        if latent.ndim != 2 or latent.shape[1] != self.cfg.latent_dim:
            raise ValueError(
                "partnet: latent must be (capsules, %d), got %r"
                % (self.cfg.latent_dim, latent.shape)
            )
        if not 0 <= category < self.cfg.category_count:
            raise ValueError(
                "partnet: category %r out of range [0, %d)"
                % (category, self.cfg.category_count)
            )
        onehot = np.zeros((latent.shape[0], self.cfg.category_count), dtype=self.store.dtype)
        onehot[:, category] = 1.0
        return np.concatenate([latent, onehot], axis=1)

    def forward(self, features):
        """Per-capsule part probabilities; rows sum to one."""
        x = features if isinstance(features, Tensor) else Tensor(
            np.asarray(features, dtype=self.store.dtype)
        )
        logits = ops.add(ops.matmul(x, self.w), self.b)
        return ops.softmax(logits, axis=1)

    def log_probs(self, features):
        x = features if isinstance(features, Tensor) else Tensor(
            np.asarray(features, dtype=self.store.dtype)
        )
        logits = ops.add(ops.matmul(x, self.w), self.b)
        m = ops.max_over_axis(logits, axis=1, keepdims=True)
        shifted = ops.sub(logits, m)
        lse = ops.log(ops.sum_over_axis(ops.exp(shifted), axis=1, keepdims=True))
        return ops.sub(shifted, lse)

    def predict(self, latent, category):
        """Hard per-capsule labels, lowest index winning probability ties."""
        with no_grad():
            probs = self.forward(self.features(latent, category)).data
        return np.argmax(probs, axis=1).astype(np.int64)

    def save(self, path):
        cfg = self.cfg
        entries = {
            "model.kind": "partnet",
            "partnet.part_count": cfg.part_count,
            "partnet.latent_dim": cfg.latent_dim,
            "partnet.category_count": cfg.category_count,
            "partnet.seed": cfg.seed,
        }
        write_checkpoint(path, entries, self.store.state_blobs())

    @classmethod
    def load(cls, path):
        entries, blobs = read_checkpoint(path)
        if entries.get("model.kind") != "partnet":
            raise CheckpointError(
                "%s: checkpoint kind %r, expected 'partnet'"
                % (path, entries.get("model.kind"))
            )
        cfg = PartNetConfig(
            part_count=int(entries["partnet.part_count"]),
            latent_dim=int(entries["partnet.latent_dim"]),
            category_count=int(entries["partnet.category_count"]),
            seed=int(entries.get("partnet.seed", 0)),
        )
        net = cls(cfg)
        net.store.load_state_blobs(blobs)
        return net


@dataclass
class PartNetReport:
    """Per-epoch cross-entropy losses and capsule-label accuracies."""

    losses: list
    accuracies: list

    @property
    def final_accuracy(self):
        return self.accuracies[-1] if self.accuracies else float("nan")


def train_partnet(samples, net, epochs=None, learning_rate=None):
    """Fit the part network on (latent, category, CapsuleLabeling) triples.

    Full-batch cross-entropy with Adam. Zero epochs is a no-op and
    returns an empty report.
    """
    cfg = net.cfg
    epochs = cfg.epochs if epochs is None else int(epochs)
    lr = cfg.learning_rate if learning_rate is None else float(learning_rate)
    if not samples:
        raise ValueError("train_partnet: empty sample list")
    feats = []
    labels = []
    for latent, category, labeling in samples:
        if labeling.part_count != cfg.part_count:
            raise ValueError(
                "train_partnet: labeling has %d parts, network expects %d"
                % (labeling.part_count, cfg.part_count)
            )
        feats.append(net.features(latent, category))
        labels.append(labeling.labels)
    x = np.concatenate(feats, axis=0)
    y = np.concatenate(labels, axis=0)
    onehot = np.zeros((y.shape[0], cfg.part_count), dtype=net.store.dtype)
    onehot[np.arange(y.shape[0]), y] = 1.0

    adam = AdamConfig(learning_rate=lr)
    report = PartNetReport(losses=[], accuracies=[])
    for _ in range(epochs):
        net.store.zero_grad()
        logp = net.log_probs(x)
        picked = ops.sum_over_axis(ops.mul(logp, Tensor(onehot)), axis=1)
        loss = ops.scale(ops.mean_over_axis(picked, axis=0), -1.0)
        loss.backward()
        adam_step(net.store, adam)
        report.losses.append(float(loss.data))
        pred = np.argmax(logp.data, axis=1)
        report.accuracies.append(float(np.mean(pred == y)))
    return report


def segment_points(model, net, latent, category, grid=None):
    """Decode a latent grid and label every point by its capsule's part."""
    grid = grid or model.eval_grid()
    recon = model.decode_latent(latent, grid)
    capsule_labels = net.predict(latent, category)
    return PointCloud(
        points=recon.points,
        labels=capsule_labels[recon.attribution],
        category=category,
    )


def mode_filter(cloud, k=9):
    """Smooth labels with the mode over each point's k nearest neighbors.

    The point itself counts among the k. Ties keep the original label.
    k must be odd so a two-label neighborhood cannot stall on a tie.
    """
    if cloud.labels is None:
        raise ValueError("mode_filter needs a labeled cloud")
    n = len(cloud)
    if k < 1 or k % 2 == 0:
        raise ValueError("mode_filter: k must be odd and positive, got %d" % k)
    if k > n:
        raise ValueError("mode_filter: k=%d exceeds cloud size %d" % (k, n))
    pts = cloud.points
    if n <= _BRUTE_FORCE_LIMIT:
        diff = pts[:, None, :] - pts[None, :, :]
        d2 = np.sum(diff * diff, axis=-1)
        nbrs = np.argpartition(d2, k - 1, axis=1)[:, :k]
    else:
        _, nbrs = cKDTree(pts).query(pts, k=k)
    part_count = int(cloud.labels.max()) + 1
    out = cloud.labels.copy()
    for i in range(n):
        counts = np.bincount(cloud.labels[nbrs[i]], minlength=part_count)
        top = counts.max()
        winners = np.flatnonzero(counts == top)
        if winners.size == 1:
            out[i] = winners[0]
        # tie: keep the original label
    return PointCloud(points=pts.copy(), labels=out, category=cloud.category)
