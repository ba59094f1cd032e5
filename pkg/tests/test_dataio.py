"""File formats, normalization, synthetic shapes, checkpoints, config."""
import numpy as np
import pytest

from pointcaps.data.checkpoint import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    load_model,
    read_checkpoint,
    save_model,
    write_checkpoint,
)
from pointcaps.data.cloud import PointCloud, normalize, resample
from pointcaps.data.formats import CloudFormatError, read_cloud, write_cloud
from pointcaps.data.runconfig import (
    RunConfigError,
    get_bool,
    parse_config_text,
    read_config,
    write_config,
)
from pointcaps.data.synthetic import (
    BARBELL,
    CAPPED_CYLINDER,
    FAMILIES,
    SyntheticSpec,
    TORUS_ON_BOX,
    WINGED_CROSS,
    _sample_family,
    default_part_counts,
    family_index,
    generate,
    part_count,
)

from conftest import tiny_model


# ----- point cloud container -------------------------------------------------


def test_cloud_validation():
    with pytest.raises(ValueError):
        PointCloud(points=np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud(points=np.zeros((4, 2)))
    with pytest.raises(ValueError):
        PointCloud(points=np.zeros((4, 3)), labels=np.zeros(3, dtype=int))


def test_cloud_copy_is_deep(rng):
    c = PointCloud(points=rng.uniform(size=(5, 3)), labels=np.arange(5), category=2)
    d = c.copy()
    d.points[0, 0] = 99.0
    d.labels[0] = 99
    assert c.points[0, 0] != 99.0
    assert c.labels[0] != 99
    assert d.category == 2


# ----- formats ---------------------------------------------------------------


def _round_trip(tmp_path, cloud, name):
    path = str(tmp_path / name)
    write_cloud(path, cloud)
    return read_cloud(path)


@pytest.mark.parametrize("ext", ["xyz", "ply"])
def test_round_trip_preserves_points_and_labels(tmp_path, rng, ext):
    cloud = PointCloud(
        points=rng.uniform(-1, 1, (30, 3)), labels=rng.integers(0, 4, 30)
    )
    back = _round_trip(tmp_path, cloud, "cloud." + ext)
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-9)
    assert np.array_equal(back.labels, cloud.labels)


@pytest.mark.parametrize("ext", ["xyz", "ply"])
def test_round_trip_without_labels(tmp_path, rng, ext):
    cloud = PointCloud(points=rng.uniform(-1, 1, (10, 3)))
    back = _round_trip(tmp_path, cloud, "plain." + ext)
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-9)
    assert back.labels is None


def test_xyz_line_with_label(tmp_path):
    path = str(tmp_path / "one.xyz")
    with open(path, "w") as fh:
        fh.write("0 0 0 2\n")
    cloud = read_cloud(path)
    assert np.array_equal(cloud.points, [[0.0, 0.0, 0.0]])
    assert np.array_equal(cloud.labels, [2])


def test_xyz_malformed_line_names_line_number(tmp_path):
    path = str(tmp_path / "bad.xyz")
    with open(path, "w") as fh:
        fh.write("0 0 0\n0 zero 0\n")
    with pytest.raises(CloudFormatError, match=":2"):
        read_cloud(path)
    with open(path, "w") as fh:
        fh.write("0 0 0\n1 1\n")
    with pytest.raises(CloudFormatError, match=":2"):
        read_cloud(path)


def test_xyz_partial_label_column_rejected(tmp_path):
    path = str(tmp_path / "mixed.xyz")
    with open(path, "w") as fh:
        fh.write("0 0 0 1\n1 1 1\n2 2 2 0\n")
    with pytest.raises(CloudFormatError):
        read_cloud(path)


def test_empty_file_rejected(tmp_path):
    path = str(tmp_path / "empty.xyz")
    open(path, "w").close()
    with pytest.raises(CloudFormatError, match="no points"):
        read_cloud(path)


def test_ply_bad_magic_and_truncated_header(tmp_path):
    path = str(tmp_path / "bad.ply")
    with open(path, "w") as fh:
        fh.write("plyx\nformat ascii 1.0\n")
    with pytest.raises(CloudFormatError, match="magic"):
        read_cloud(path)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\nelement vertex 2\n")
    with pytest.raises(CloudFormatError, match="truncated"):
        read_cloud(path)


def test_ply_body_shorter_than_declared(tmp_path):
    path = str(tmp_path / "short.ply")
    with open(path, "w") as fh:
        fh.write(
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0 0\n1 1 1\n"
        )
    with pytest.raises(CloudFormatError, match="declares 3"):
        read_cloud(path)


def test_unknown_format_rejected(tmp_path, rng):
    cloud = PointCloud(points=rng.uniform(size=(3, 3)))
    with pytest.raises(CloudFormatError):
        write_cloud(str(tmp_path / "c.xyz"), cloud, fmt="npz")


# ----- normalize / resample --------------------------------------------------


def test_normalize_two_point_fixture():
    cloud = PointCloud(points=np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
    out = normalize(cloud)
    np.testing.assert_allclose(
        out.points, [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], atol=1e-12
    )


def test_normalize_idempotent(rng):
    cloud = PointCloud(points=rng.uniform(-5, 3, (50, 3)))
    once = normalize(cloud)
    twice = normalize(once)
    np.testing.assert_allclose(twice.points, once.points, atol=1e-12)


def test_normalize_contract(rng):
    out = normalize(PointCloud(points=rng.uniform(2, 9, (40, 3))))
    np.testing.assert_allclose(out.points.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(
        np.max(np.linalg.norm(out.points, axis=1)), 1.0, atol=1e-12
    )


def test_normalize_degenerate_rejected():
    with pytest.raises(ValueError, match="degenerate"):
        normalize(PointCloud(points=np.ones((5, 3))))


def test_normalize_keeps_labels_and_category(rng):
    cloud = PointCloud(points=rng.uniform(size=(6, 3)), labels=np.arange(6), category=1)
    out = normalize(cloud)
    assert np.array_equal(out.labels, cloud.labels)
    assert out.category == 1


def test_resample_contracts(rng):
    cloud = PointCloud(
        points=rng.uniform(size=(20, 3)), labels=rng.integers(0, 3, 20), category=0
    )
    same = resample(cloud, 20)
    assert np.array_equal(same.points, cloud.points)
    down = resample(cloud, 8)
    assert len(down) == 8
    up = resample(cloud, 50)
    assert len(up) == 50
    # label-point pairing survives: every sampled row exists in the source
    src = {tuple(p): l for p, l in zip(cloud.points, cloud.labels)}
    for p, l in zip(down.points, down.labels):
        assert src[tuple(p)] == l
    a = resample(cloud, 8, seed=1)
    b = resample(cloud, 8, seed=1)
    assert np.array_equal(a.points, b.points)
    with pytest.raises(ValueError):
        resample(cloud, 0)


# ----- synthetic shapes ------------------------------------------------------


def test_families_and_part_counts():
    assert FAMILIES == (BARBELL, WINGED_CROSS, CAPPED_CYLINDER, TORUS_ON_BOX)
    for i, fam in enumerate(FAMILIES):
        assert family_index(fam) == i
        assert part_count(fam) >= 2
        counts = default_part_counts(fam, 64)
        assert sum(counts) == 64 and len(counts) == part_count(fam)


def test_generate_deterministic_and_normalized():
    spec = SyntheticSpec(family=WINGED_CROSS, n_points=128, seed=5)
    a = generate(spec)
    b = generate(SyntheticSpec(family=WINGED_CROSS, n_points=128, seed=5))
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.labels, b.labels)
    assert a.category == family_index(WINGED_CROSS)
    np.testing.assert_allclose(a.points.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(
        np.max(np.linalg.norm(a.points, axis=1)), 1.0, atol=1e-9
    )
    c = generate(SyntheticSpec(family=WINGED_CROSS, n_points=128, seed=6))
    assert not np.array_equal(a.points, c.points)


def test_label_histogram_matches_part_counts():
    spec = SyntheticSpec(
        family=CAPPED_CYLINDER, n_points=100, part_counts=(70, 30), seed=2
    )
    cloud = generate(spec)
    hist = np.bincount(cloud.labels, minlength=2)
    assert np.array_equal(hist, [70, 30])


def test_barbell_zero_jitter_points_lie_on_spheres():
    spec = SyntheticSpec(family=BARBELL, n_points=200, jitter=0.0, seed=9)
    points, labels, meta = _sample_family(spec)
    for part, (center, radius) in enumerate(meta["spheres"]):
        part_pts = points[labels == part]
        residual = np.abs(np.linalg.norm(part_pts - center, axis=1) - radius)
        assert np.max(residual) <= 1e-9


def test_generate_all_families_smoke():
    for fam in FAMILIES:
        cloud = generate(SyntheticSpec(family=fam, n_points=64, seed=1))
        assert len(cloud) == 64
        assert cloud.labels is not None
        assert set(np.unique(cloud.labels)) == set(range(part_count(fam)))


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(family="pyramid", n_points=10).validate()
    with pytest.raises(ValueError):
        SyntheticSpec(family=BARBELL, n_points=10, part_counts=(5, 4)).validate()
    with pytest.raises(ValueError):
        SyntheticSpec(family=BARBELL, n_points=10, part_counts=(10, 0)).validate()
    with pytest.raises(ValueError):
        SyntheticSpec(family=BARBELL, n_points=10, jitter=-0.1).validate()
    with pytest.raises(ValueError):
        SyntheticSpec(family=WINGED_CROSS, n_points=8, part_counts=(4, 4)).validate()


# ----- checkpoints -----------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, rng):
    path = str(tmp_path / "a.pcaps")
    entries = {"alpha": "1", "beta.gamma": "text value"}
    blobs = {
        "w1": rng.normal(size=(3, 4)).astype(np.float32),
        "b1": rng.normal(size=5).astype(np.float32),
    }
    write_checkpoint(path, entries, blobs)
    entries2, blobs2 = read_checkpoint(path)
    assert entries2 == entries
    assert set(blobs2) == set(blobs)
    for name in blobs:
        assert np.array_equal(blobs2[name], blobs[name])
        assert blobs2[name].dtype == np.float32


def test_checkpoint_resave_is_byte_identical(tmp_path, rng):
    p1 = str(tmp_path / "a.pcaps")
    p2 = str(tmp_path / "b.pcaps")
    blobs = {"z": rng.normal(size=(4,)).astype(np.float32),
             "a": rng.normal(size=(2, 2)).astype(np.float32)}
    write_checkpoint(p1, {"k": "v"}, blobs)
    entries, loaded = read_checkpoint(p1)
    write_checkpoint(p2, entries, loaded)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_checkpoint_error_classes(tmp_path, rng):
    path = str(tmp_path / "c.pcaps")
    write_checkpoint(path, {"k": "v"}, {"w": np.ones(4, dtype=np.float32)})
    raw = open(path, "rb").read()

    bad_magic = str(tmp_path / "magic.pcaps")
    open(bad_magic, "wb").write(b"XCAPS" + raw[5:])
    with pytest.raises(CheckpointMagicError):
        read_checkpoint(bad_magic)

    bad_version = str(tmp_path / "version.pcaps")
    open(bad_version, "wb").write(raw.replace(b"PCAPS 1\n", b"PCAPS 2\n", 1))
    with pytest.raises(CheckpointVersionError):
        read_checkpoint(bad_version)

    truncated = str(tmp_path / "trunc.pcaps")
    open(truncated, "wb").write(raw[:-8])
    with pytest.raises(CheckpointTruncatedError):
        read_checkpoint(truncated)

    trailing = str(tmp_path / "trail.pcaps")
    open(trailing, "wb").write(raw + b"\x00\x00")
    with pytest.raises(CheckpointTruncatedError):
        read_checkpoint(trailing)

    no_end = str(tmp_path / "noend.pcaps")
    open(no_end, "wb").write(raw[: raw.find(b"end_header")])
    with pytest.raises(CheckpointTruncatedError):
        read_checkpoint(no_end)


def test_checkpoint_rejects_bad_keys(tmp_path):
    with pytest.raises(ValueError):
        write_checkpoint(str(tmp_path / "x.pcaps"), {"bad key": "1"}, {})
    with pytest.raises(ValueError):
        write_checkpoint(str(tmp_path / "x.pcaps"), {"k": "a\nb"}, {})


def test_model_save_load_round_trip(tmp_path, rng):
    model = tiny_model(seed=6, n_points=16)
    path = str(tmp_path / "model.pcaps")
    save_model(path, model, step=12, epoch=3, run_seed=7)
    loaded, meta = load_model(path)
    assert meta == {"step": 12, "epoch": 3, "run_seed": 7}
    assert loaded.store.step == 12
    assert sorted(loaded.store.names()) == sorted(model.store.names())
    for name in model.store.names():
        assert np.array_equal(loaded.store[name].data, model.store[name].data), name
    pts = rng.uniform(-1, 1, (16, 3)).astype(np.float32)
    model.set_mode("eval")
    loaded.set_mode("eval")
    assert np.array_equal(model.encode_latent(pts), loaded.encode_latent(pts))


def test_model_checkpoint_shape_mismatch(tmp_path):
    model = tiny_model(seed=6, n_points=16)
    path = str(tmp_path / "model.pcaps")
    save_model(path, model)
    entries, blobs = read_checkpoint(path)
    blobs["enc.mlp0.w"] = np.zeros((7, 7), dtype=np.float32)
    bad = str(tmp_path / "bad.pcaps")
    write_checkpoint(bad, entries, blobs)
    with pytest.raises(CheckpointShapeError):
        load_model(bad)


def test_model_checkpoint_kind_check(tmp_path):
    model = tiny_model(seed=6, n_points=16)
    path = str(tmp_path / "model.pcaps")
    save_model(path, model)
    entries, blobs = read_checkpoint(path)
    entries["model.kind"] = "other"
    bad = str(tmp_path / "kind.pcaps")
    write_checkpoint(bad, entries, blobs)
    with pytest.raises(CheckpointError):
        load_model(bad)


# ----- run configuration -----------------------------------------------------


def test_config_parse_comments_and_blanks():
    cfg = parse_config_text("# run\n\n epochs = 10 \nname = demo # inline\n")
    assert cfg == {"epochs": "10", "name": "demo"}


def test_config_parse_errors():
    with pytest.raises(RunConfigError, match=":1"):
        parse_config_text("not a pair")
    with pytest.raises(RunConfigError, match="duplicate"):
        parse_config_text("a = 1\na = 2")
    with pytest.raises(RunConfigError):
        parse_config_text("a =")
    with pytest.raises(RunConfigError):
        parse_config_text(" = 3")


def test_config_file_round_trip(tmp_path):
    path = str(tmp_path / "run.cfg")
    write_config(path, {"b": "2", "a": "1"})
    assert read_config(path) == {"a": "1", "b": "2"}


def test_get_bool():
    cfg = {"yes": "true", "no": "0", "odd": "maybe"}
    assert get_bool(cfg, "yes") is True
    assert get_bool(cfg, "no") is False
    assert get_bool(cfg, "missing", default=True) is True
    with pytest.raises(RunConfigError):
        get_bool(cfg, "odd")
