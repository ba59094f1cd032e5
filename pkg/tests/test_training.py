"""Training loop behaviour at desk scale."""
import os

import numpy as np
import pytest

from pointcaps.data.checkpoint import load_model
from pointcaps.data.synthetic import BARBELL, WINGED_CROSS, SyntheticSpec, generate
from pointcaps.training import (
    EvalReport,
    TrainConfig,
    TrainReport,
    eval_ae,
    specialization_timeline,
    train_ae,
)

from conftest import tiny_model


def tiny_dataset(n_points=16, count=4):
    fams = [BARBELL, WINGED_CROSS]
    return [
        generate(SyntheticSpec(family=fams[i % 2], n_points=n_points, seed=i))
        for i in range(count)
    ]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1).validate()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1).validate()


def test_zero_epochs_is_a_no_op(tmp_path):
    model = tiny_model(seed=3, n_points=16)
    before = {n: model.store[n].data.copy() for n in model.store.names()}
    report = train_ae(model, tiny_dataset(), TrainConfig(epochs=0, batch_size=2))
    assert report.epoch_losses == []
    assert report.skipped_singletons == 0
    for name, arr in before.items():
        assert np.array_equal(model.store[name].data, arr), name


def test_loss_decreases_on_tiny_overfit():
    from pointcaps.autodiff import AdamConfig

    model = tiny_model(seed=5, n_points=16)
    data = tiny_dataset()
    report = train_ae(
        model, data,
        TrainConfig(epochs=40, batch_size=4, seed=1,
                    adam=AdamConfig(learning_rate=5e-3)),
    )
    assert len(report.epoch_losses) == 40
    assert all(np.isfinite(v) for v in report.epoch_losses)
    assert report.epoch_losses[-1] < report.epoch_losses[0]


def test_deterministic_runs_have_identical_loss_curves():
    data = tiny_dataset()
    cfg = TrainConfig(epochs=6, batch_size=2, seed=9)
    r1 = train_ae(tiny_model(seed=2, deterministic=True, n_points=16), data, cfg)
    r2 = train_ae(tiny_model(seed=2, deterministic=True, n_points=16), data, cfg)
    assert r1.epoch_losses == r2.epoch_losses


def test_singleton_trailing_batch_is_skipped_and_counted():
    model = tiny_model(seed=1, n_points=16)
    data = tiny_dataset(count=5)  # batch 2 -> trailing single shape per epoch
    report = train_ae(model, data, TrainConfig(epochs=3, batch_size=2, seed=0))
    assert report.skipped_singletons == 3


def test_non_finite_loss_aborts_with_location():
    model = tiny_model(seed=1, n_points=16)
    model.store["dec.out.w"].data[0, 0] = np.nan
    with pytest.raises(RuntimeError, match="epoch 0 batch 0"):
        train_ae(model, tiny_dataset(), TrainConfig(epochs=1, batch_size=4))


def test_checkpoint_cadence_and_final(tmp_path):
    model = tiny_model(seed=4, n_points=16)
    out = str(tmp_path / "run")
    cfg = TrainConfig(
        epochs=4, batch_size=4, seed=2, checkpoint_every=2, out_dir=out
    )
    report = train_ae(model, tiny_dataset(), cfg)
    names = [os.path.basename(p) for p in report.checkpoints]
    assert names == ["ckpt_epoch0002.pcaps", "final.pcaps"]
    assert report.final_checkpoint.endswith("final.pcaps")
    for p in report.checkpoints:
        assert os.path.exists(p)
    _, meta = load_model(report.final_checkpoint)
    assert meta["epoch"] == 4


def test_log_file_line_format(tmp_path):
    model = tiny_model(seed=4, n_points=16)
    log = str(tmp_path / "train.log")
    cfg = TrainConfig(epochs=2, batch_size=4, seed=2, eval_every=2, log_path=log)
    train_ae(model, tiny_dataset(), cfg)
    lines = open(log).read().splitlines()
    assert len(lines) == 3  # two epochs + one eval
    for i in range(2):
        parts = lines[i].split()
        assert parts[0] == "epoch" and parts[1] == str(i)
        assert parts[2] == "loss" and np.isfinite(float(parts[3]))
        assert parts[4] == "time"
    assert lines[2].startswith("eval 2 chamfer ")


def test_resume_matches_uninterrupted_run(tmp_path):
    data = tiny_dataset()
    base = dict(batch_size=2, seed=13, checkpoint_every=2)

    full = tiny_model(seed=8, deterministic=True, n_points=16)
    out_a = str(tmp_path / "full")
    ra = train_ae(full, data, TrainConfig(epochs=4, out_dir=out_a, **base))

    part = tiny_model(seed=8, deterministic=True, n_points=16)
    out_b = str(tmp_path / "part")
    train_ae(part, data, TrainConfig(epochs=2, out_dir=out_b, **base))
    resumed, meta = load_model(os.path.join(out_b, "final.pcaps"), deterministic=True)
    out_c = str(tmp_path / "resumed")
    rb = train_ae(
        resumed, data,
        TrainConfig(epochs=4, out_dir=out_c, **base),
        start_epoch=meta["epoch"],
    )
    assert rb.start_epoch == 2
    assert ra.epoch_losses[2:] == rb.epoch_losses
    final_a = open(os.path.join(out_a, "final.pcaps"), "rb").read()
    final_c = open(os.path.join(out_c, "final.pcaps"), "rb").read()
    assert final_a == final_c


def test_eval_report_contract():
    model = tiny_model(seed=7, n_points=16)
    data = tiny_dataset()
    report = eval_ae(model, data)
    assert isinstance(report, EvalReport)
    assert report.chamfer_x1000 == report.chamfer_raw * 1000.0
    assert len(report.per_shape) == 4
    np.testing.assert_allclose(report.chamfer_raw, np.mean(report.per_shape))
    assert report.spread_per_capsule.shape == (4,)
    np.testing.assert_allclose(report.spread_mean, report.spread_per_capsule.mean())
    with pytest.raises(ValueError):
        eval_ae(model, [])


def test_eval_restores_previous_mode():
    model = tiny_model(seed=7, n_points=16)
    data = tiny_dataset()
    model.set_mode("train")
    eval_ae(model, data)
    assert model.mode == "train"
    model.set_mode("eval")
    eval_ae(model, data)
    assert model.mode == "eval"


def test_eval_is_repeatable():
    model = tiny_model(seed=7, n_points=16)
    data = tiny_dataset()
    a = eval_ae(model, data)
    b = eval_ae(model, data)
    assert a.per_shape == b.per_shape


def test_specialization_timeline(tmp_path):
    model = tiny_model(seed=4, n_points=16)
    data = tiny_dataset()
    out = str(tmp_path / "run")
    cfg = TrainConfig(
        epochs=4, batch_size=4, seed=2, checkpoint_every=2, out_dir=out
    )
    report = train_ae(model, data, cfg)
    tl_dir = str(tmp_path / "timeline")
    paths, spreads = specialization_timeline(
        report.checkpoints, data[0], [0, 2], tl_dir
    )
    assert len(paths) == len(report.checkpoints) == len(spreads)
    for p in paths:
        assert os.path.exists(p)
    from pointcaps.data.formats import read_cloud

    cloud = read_cloud(paths[0])
    assert len(cloud) == 2 * 4  # two capsules, four replicas each
    assert set(np.unique(cloud.labels)) == {0, 2}
    with pytest.raises(ValueError):
        specialization_timeline([], data[0], [0], tl_dir)
    with pytest.raises(ValueError):
        specialization_timeline(report.checkpoints, data[0], [], tl_dir)
