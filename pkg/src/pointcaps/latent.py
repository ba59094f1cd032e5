"""Latent capsule editing and classification.

Because every capsule owns a fixed patch of the reconstruction, parts
can be edited directly in latent space: pick the capsules carrying a
part and blend them linearly toward another shape's capsules. The
flattened latent grid also serves as a feature vector for a linear
one-vs-rest hinge classifier, trained here by plain subgradient descent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data.checkpoint import CheckpointError, read_checkpoint, write_checkpoint


class EmptySelectionError(ValueError):
    """A part matched no capsules."""


@dataclass
class CapsuleSelection:
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise EmptySelectionError("capsule selection is empty")
        if np.unique(idx).size != idx.size:
            raise ValueError("capsule selection has duplicates")
        self.indices = idx


def match_part_capsules(labeling_src, labeling_tgt, part):
    """Capsule indices assigned to ``part`` in both labelings.

    Intersecting the two shapes' labelings pairs up capsules that carry
    the same part on each side, so a selection can be blended row by
    row. Raises EmptySelectionError when the intersection is empty.
    """
    if labeling_src.part_count != labeling_tgt.part_count:
        raise ValueError(
            "labelings disagree on part count: %d vs %d"
            % (labeling_src.part_count, labeling_tgt.part_count)
        )
    if not 0 <= part < labeling_src.part_count:
        raise ValueError(
            "part %d out of range [0, %d)" % (part, labeling_src.part_count)
        )
    idx = np.flatnonzero(
        (labeling_src.labels == part) & (labeling_tgt.labels == part)
    )
    if idx.size == 0:
        raise EmptySelectionError(
            "part %d matched no capsules in both shapes" % part
        )
    return CapsuleSelection(indices=idx)


def match_capsules_by_similarity(latent_src, latent_tgt, selection):
    """Greedy cosine matching for unlabeled pairs.

    For each selected source capsule (best score first), pick the most
    similar not-yet-taken target capsule. Returns target indices aligned
    with ``selection.indices``. This is the fallback when no part
    labeling exists; with labelings, matching by part is preferred.
    """
    src = np.asarray(latent_src, dtype=np.float64)
    tgt = np.asarray(latent_tgt, dtype=np.float64)
    if src.shape != tgt.shape or src.ndim != 2:
        raise ValueError(
            "latents must share a (count, dim) shape, got %r and %r"
            % (src.shape, tgt.shape)
        )

    def _unit(rows):
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return rows / norms

    sim = _unit(src[selection.indices]) @ _unit(tgt).T
    order = np.argsort(-sim.max(axis=1), kind="stable")
    taken = np.zeros(tgt.shape[0], dtype=bool)
    out = np.full(selection.indices.size, -1, dtype=np.int64)
    for row in order:
        scores = np.where(taken, -np.inf, sim[row])
        best = int(np.argmax(scores))
        out[row] = best
        taken[best] = True
    return out


def interpolate_part(latent_src, latent_tgt, selection, t):
    """Blend the selected capsules: (1 - t) * src + t * tgt, rest untouched.

    The untouched rows are copied bit for bit from the source, so
    patches outside the selection decode identically across t.
    """
    src = np.asarray(latent_src)
    tgt = np.asarray(latent_tgt)
    if src.shape != tgt.shape or src.ndim != 2:
        raise ValueError(
            "latents must share a (count, dim) shape, got %r and %r"
            % (src.shape, tgt.shape)
        )
    idx = selection.indices
    if idx.max() >= src.shape[0]:
        raise IndexError(
            "selection index %d out of range for %d capsules"
            % (int(idx.max()), src.shape[0])
        )
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError("blend position t must lie in [0, 1], got %g" % t)
    out = src.copy()
    if t == 0.0:
        return out
    if t == 1.0:
        out[idx] = tgt[idx]
        return out
    out[idx] = (1.0 - t) * src[idx] + t * tgt[idx]
    return out


def replace_part(latent_src, latent_tgt, selection):
    """Swap the selected capsules in from the target shape.

    Applying the same replacement twice with swapped roles restores the
    original exactly, since rows are copied verbatim.
    """
    return interpolate_part(latent_src, latent_tgt, selection, 1.0)


def flatten_latent(latent):
    arr = np.asarray(latent)
    if arr.ndim != 2:
        raise ValueError("flatten_latent expects (count, dim), got %r" % (arr.shape,))
    return arr.reshape(-1)


def unflatten_latent(flat, latent_count, latent_dim):
    arr = np.asarray(flat)
    if arr.shape != (latent_count * latent_dim,):
        raise ValueError(
            "unflatten_latent: expected %d values, got %r"
            % (latent_count * latent_dim, arr.shape)
        )
    return arr.reshape(latent_count, latent_dim)


@dataclass
class ClassifierConfig:
    epochs: int = 300
    learning_rate: float = 0.05
    l2: float = 1e-4
    seed: int = 0

    def validate(self):
        if self.epochs < 0:
            raise ValueError("classifier: epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("classifier: learning rate must be positive")
        if self.l2 < 0:
            raise ValueError("classifier: l2 must be non-negative")


class LinearClassifier:
    """One-vs-rest hinge classifier trained by subgradient descent.

    The step size shrinks over epochs and any step that would raise the
    objective is rolled back with a halved step, so the recorded loss
    curve never increases beyond rounding.
    """

    def __init__(self, weights, bias, classes):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.classes = np.asarray(classes, dtype=np.int64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("classifier weights and bias disagree")

    @staticmethod
    def _objective(w, b, x, targets, l2):
        margins = targets * (x @ w.T + b)
        hinge = np.maximum(0.0, 1.0 - margins)
        return float(hinge.sum(axis=1).mean() + l2 * np.sum(w * w))

    @classmethod
    def train(cls, features, labels, config=None):
        """Fit on (n, d) features and integer labels; returns (clf, curve)."""
        cfg = config or ClassifierConfig()
        cfg.validate()
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError(
                "classifier: features must be (n, d) with matching labels, got %r / %r"
                % (x.shape, y.shape)
            )
        classes = np.unique(y)
        if classes.size < 2:
            raise ValueError("classifier: training set has a single class")
        c, d, n = classes.size, x.shape[1], x.shape[0]
        targets = np.where(y[:, None] == classes[None, :], 1.0, -1.0)  # (n, c)
        w = np.zeros((c, d))
        b = np.zeros(c)
        curve = []
        loss = cls._objective(w, b, x, targets, cfg.l2)
        step = cfg.learning_rate
        for epoch in range(cfg.epochs):
            margins = targets * (x @ w.T + b)
            active = (margins < 1.0).astype(np.float64) * targets  # (n, c)
            gw = -(active.T @ x) / n + 2.0 * cfg.l2 * w
            gb = -active.sum(axis=0) / n
            rate = step / (1.0 + 0.01 * epoch)
            new_w = w - rate * gw
            new_b = b - rate * gb
            new_loss = cls._objective(new_w, new_b, x, targets, cfg.l2)
            if new_loss > loss + 1e-12:
                step *= 0.5  # roll back, retry smaller next epoch
            else:
                w, b, loss = new_w, new_b, new_loss
            curve.append(loss)
        return cls(weights=w, bias=b, classes=classes), curve

    def scores(self, features):
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None]
        if x.shape[1] != self.weights.shape[1]:
            raise ValueError(
                "classifier: feature dim %d, expected %d"
                % (x.shape[1], self.weights.shape[1])
            )
        s = x @ self.weights.T + self.bias
        return s[0] if single else s

    def predict(self, features):
        """Class of the highest score; ties go to the lowest class index."""
        s = self.scores(features)
        if s.ndim == 1:
            return int(self.classes[int(np.argmax(s))])
        return self.classes[np.argmax(s, axis=1)]

    def save(self, path):
        entries = {
            "model.kind": "classifier",
            "classifier.classes": ",".join(str(c) for c in self.classes),
            "classifier.features": self.weights.shape[1],
        }
        blobs = {"classifier.w": self.weights, "classifier.b": self.bias}
        write_checkpoint(path, entries, blobs)

    @classmethod
    def load(cls, path):
        entries, blobs = read_checkpoint(path)
        if entries.get("model.kind") != "classifier":
            raise CheckpointError(
                "%s: checkpoint kind %r, expected 'classifier'"
                % (path, entries.get("model.kind"))
            )
        classes = [int(v) for v in entries["classifier.classes"].split(",")]
        return cls(
            weights=blobs["classifier.w"].astype(np.float64),
            bias=blobs["classifier.b"].astype(np.float64),
            classes=classes,
        )


def classify(clf, feature):
    return clf.predict(feature)
