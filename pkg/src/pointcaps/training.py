"""Minibatch training and evaluation of the auto-encoder."""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import AdamConfig, adam_step, no_grad
from .data.checkpoint import save_model
from .metrics import batch_chamfer_loss, capsule_spread, chamfer
from .nn.decoder import RESAMPLE_PER_FORWARD, Reconstruction, sample_grid

_SHUFFLE_TAG = 0x5F
_GRID_TAG = 0x61


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    checkpoint_every: int = 0
    eval_every: int = 0
    out_dir: Optional[str] = None
    log_path: Optional[str] = None

    def validate(self):
        if self.epochs < 0:
            raise ValueError("train: epochs must be non-negative")
        if self.batch_size < 2:
            raise ValueError("train: batch_size must be at least 2 (batchnorm)")
        self.adam.validate()


@dataclass
class EvalReport:
    chamfer_raw: float
    chamfer_x1000: float
    per_shape: list
    spread_per_capsule: np.ndarray
    spread_mean: float


@dataclass
class TrainReport:
    epoch_losses: list
    wall_time: float
    checkpoints: list
    final_checkpoint: Optional[str]
    skipped_singletons: int
    evals: list
    start_epoch: int = 0


def _stack_dataset(dataset, dtype):
    if not dataset:
        raise ValueError("train: empty dataset")
    sizes = {len(c) for c in dataset}
    if len(sizes) != 1:
        raise ValueError(
            "train: all clouds must have the same point count, got %r" % sorted(sizes)
        )
    return np.stack([c.points for c in dataset]).astype(dtype)


def _epoch_rng(seed, tag, *extra):
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, tag, *extra]))
    )


def train_ae(model, dataset, cfg, start_epoch=0):
    """Train in place with Adam on the mean Chamfer distance.

    Epoch shuffling and per-forward grids derive from (seed, epoch,
    batch) counters, so a run resumed from a checkpoint at epoch k
    replays exactly what an uninterrupted run would have done. A
    trailing batch of one shape is skipped (batchnorm needs two) and
    counted in the report.
    """
    cfg.validate()
    points = _stack_dataset(dataset, model.dtype)
    n = points.shape[0]
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
    model.set_mode("train")
    fixed_grid = None
    if model.decoder_cfg.grid_mode != RESAMPLE_PER_FORWARD:
        fixed_grid = model.eval_grid()

    losses = []
    checkpoints = []
    evals = []
    skipped = 0
    log_lines = []
    t0 = time.perf_counter()
    for epoch in range(start_epoch, cfg.epochs):
        perm = _epoch_rng(cfg.seed, _SHUFFLE_TAG, epoch).permutation(n)
        batch_losses = []
        for step, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[lo:lo + cfg.batch_size]
            if idx.size < 2:
                skipped += 1
                continue
            batch = points[idx]
            if fixed_grid is not None:
                grid = fixed_grid
            else:
                grid = sample_grid(
                    model.decoder_cfg, model.routing_cfg.latent_count,
                    rng=_epoch_rng(cfg.seed, _GRID_TAG, epoch, step),
                    dtype=model.dtype,
                )
            latent = model.encode(batch)
            recon = model.decode(latent, grid)
            loss = batch_chamfer_loss(recon, batch)
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    "training diverged: non-finite loss at epoch %d batch %d (shapes %s)"
                    % (epoch, step, ",".join(str(i) for i in idx))
                )
            model.store.zero_grad()
            loss.backward()
            adam_step(model.store, cfg.adam)
            batch_losses.append(value)
        epoch_loss = float(np.mean(batch_losses)) if batch_losses else float("nan")
        losses.append(epoch_loss)
        elapsed = time.perf_counter() - t0
        log_lines.append("epoch %d loss %.9g time %.3f" % (epoch, epoch_loss, elapsed))

        done = epoch + 1
        if cfg.out_dir and cfg.checkpoint_every and done % cfg.checkpoint_every == 0 \
                and done != cfg.epochs:
            path = os.path.join(cfg.out_dir, "ckpt_epoch%04d.pcaps" % done)
            save_model(path, model, epoch=done, run_seed=cfg.seed)
            checkpoints.append(path)
            model.set_mode("train")
        if cfg.eval_every and done % cfg.eval_every == 0:
            report = eval_ae(model, dataset)
            evals.append((done, report))
            log_lines.append(
                "eval %d chamfer %.9g spread %.9g"
                % (done, report.chamfer_raw, report.spread_mean)
            )
            model.set_mode("train")

    final_path = None
    if cfg.out_dir:
        final_path = os.path.join(cfg.out_dir, "final.pcaps")
        save_model(final_path, model, epoch=cfg.epochs, run_seed=cfg.seed)
        checkpoints.append(final_path)
    wall = time.perf_counter() - t0
    if cfg.log_path:
        with open(cfg.log_path, "a") as fh:
            for line in log_lines:
                fh.write(line + "\n")
    return TrainReport(
        epoch_losses=losses,
        wall_time=wall,
        checkpoints=checkpoints,
        final_checkpoint=final_path,
        skipped_singletons=skipped,
        evals=evals,
        start_epoch=start_epoch,
    )


def eval_ae(model, dataset, grid=None):
    """Mean Chamfer and capsule spread over a dataset, eval-mode network.

    Uses the fixed-seed grid so repeated evaluations agree. The x1000
    figure is exactly the raw mean scaled by 1000.
    """
    if not dataset:
        raise ValueError("eval: empty dataset")
    prev_mode = model.mode
    model.set_mode("eval")
    grid = grid or model.eval_grid()
    per_shape = []
    spreads = []
    try:
        for cloud in dataset:
            recon = model.reconstruct_cloud(cloud.points, grid=grid)
            per_shape.append(chamfer(recon.points, cloud.points).value)
            spreads.append(capsule_spread(recon))
    finally:
        model.set_mode(prev_mode)
    raw = float(np.mean(per_shape))
    spread_pc = np.mean(np.stack(spreads), axis=0)
    return EvalReport(
        chamfer_raw=raw,
        chamfer_x1000=raw * 1000.0,
        per_shape=per_shape,
        spread_per_capsule=spread_pc,
        spread_mean=float(np.mean(spread_pc)),
    )


def specialization_timeline(checkpoint_paths, cloud, capsules, out_dir, fmt="xyz"):
    """Decode a fixed capsule subset under a sequence of checkpoints.

    Writes one numbered cloud per snapshot and returns (paths, spreads).
    The spread of the selected patches is expected to shrink over
    training; a violation is reported, not raised.
    """
    from .data.checkpoint import load_model
    from .data.cloud import PointCloud
    from .data.formats import write_cloud

    if not checkpoint_paths:
        raise ValueError("timeline: no checkpoints given")
    capsules = np.asarray(capsules, dtype=np.int64)
    if capsules.ndim != 1 or capsules.size == 0:
        raise ValueError("timeline: need at least one capsule index")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    spreads = []
    for i, ckpt in enumerate(checkpoint_paths):
        model, _ = load_model(ckpt)
        model.set_mode("eval")
        grid = model.eval_grid()
        latent = model.encode_latent(cloud.points)
        chunks = []
        labels = []
        for c in capsules:
            patch = model.decode_patch(latent, int(c), grid)
            chunks.append(patch)
            labels.append(np.full(patch.shape[0], int(c), dtype=np.int64))
        pts = np.concatenate(chunks, axis=0)
        recon = Reconstruction(points=pts, attribution=np.concatenate(labels))
        spreads.append(float(np.mean(capsule_spread(recon))))
        path = os.path.join(out_dir, "timeline_%03d.%s" % (i, fmt))
        write_cloud(path, PointCloud(points=pts, labels=np.concatenate(labels)))
        paths.append(path)
    return paths, spreads
