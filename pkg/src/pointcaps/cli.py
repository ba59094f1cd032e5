"""Command line interface.

One verb per pipeline stage: gen-data, train, eval, reconstruct,
segment, train-partnet, interpolate, replace, classify, gradcheck.
Errors print a single ``error: ...`` line to stderr and exit nonzero;
flags are validated before anything is written.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .autodiff import AdamConfig
from .data.checkpoint import load_model, save_model
from .data.cloud import PointCloud, normalize, resample
from .data.formats import FORMATS, read_cloud, write_cloud
from .data.runconfig import get_bool, read_config
from .data.synthetic import FAMILIES, SyntheticSpec, generate
from .gradsuite import run_gradient_suite
from .latent import (
    CapsuleSelection,
    ClassifierConfig,
    EmptySelectionError,
    LinearClassifier,
    flatten_latent,
    interpolate_part,
    match_part_capsules,
    replace_part,
)
from .metrics import chamfer
from .nn.decoder import DecoderConfig, sample_grid
from .nn.encoder import EncoderConfig
from .nn.model import PointCapsuleAE
from .nn.routing import DYNAMIC_ROUTING, ROUTING_MODES, RoutingConfig
from .partseg import (
    CapsuleLabeling,
    CapsulePartNet,
    PartNetConfig,
    gt_capsule_labels,
    mode_filter,
    nearest_labels,
    segment_points,
    train_partnet,
)
from .training import TrainConfig, eval_ae, train_ae


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _limit_threads(n):
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)
    except Exception:
        pass


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise CliError("expected a comma-separated integer list, got %r" % text)


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise CliError("expected a comma-separated number list, got %r" % text)


def _load_dir(path, points=0, do_normalize=False, seed=0):
    if not os.path.isdir(path):
        raise CliError("data directory %r does not exist" % path)
    files = []
    for root, _, names in os.walk(path):
        for name in sorted(names):
            if os.path.splitext(name)[1].lower().lstrip(".") in FORMATS:
                files.append(os.path.join(root, name))
    files.sort()
    if not files:
        raise CliError("no point cloud files under %r" % path)
    clouds = []
    for i, f in enumerate(files):
        cloud = read_cloud(f)
        if points:
            cloud = resample(cloud, points, seed=seed + i)
        if do_normalize:
            cloud = normalize(cloud)
        clouds.append(cloud)
    return files, clouds


def _class_dirs(path):
    """First-level subdirectories, sorted, as class names."""
    if not os.path.isdir(path):
        raise CliError("data directory %r does not exist" % path)
    subs = sorted(
        d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d))
    )
    if not subs:
        raise CliError("%r has no class subdirectories" % path)
    return subs


def _merged(args, cfg_keys):
    """Flag > config file > default for each (attr, config key) pair."""
    values = {}
    if getattr(args, "config", None):
        values = read_config(args.config)
    out = {}
    for attr, key in cfg_keys.items():
        flag = getattr(args, attr, None)
        out[attr] = flag if flag is not None else values.get(key)
    return out


def _build_model_from_args(args, n_points):
    cfgmap = _merged(args, {
        "mlp_widths": "encoder.mlp_widths",
        "branch_count": "encoder.branch_count",
        "branch_width": "encoder.branch_width",
        "latent_count": "routing.latent_count",
        "latent_dim": "routing.latent_dim",
        "iterations": "routing.iterations",
        "routing": "routing.mode",
        "replicas": "decoder.replicas_per_capsule",
        "decoder_widths": "decoder.mlp_widths",
        "grid_seed": "decoder.grid_seed",
    })
    mlp = _int_list(cfgmap["mlp_widths"]) if cfgmap["mlp_widths"] else [3, 64, 128]
    enc = EncoderConfig(
        n_points=n_points,
        mlp_widths=tuple(mlp),
        branch_count=int(cfgmap["branch_count"] or 16),
        branch_width=int(cfgmap["branch_width"] or 1024),
    )
    rod = RoutingConfig(
        latent_count=int(cfgmap["latent_count"] or 64),
        latent_dim=int(cfgmap["latent_dim"] or 64),
        iterations=int(cfgmap["iterations"] or 3),
        mode=str(cfgmap["routing"] or DYNAMIC_ROUTING),
    )
    dec = DecoderConfig(
        replicas_per_capsule=int(cfgmap["replicas"] or 32),
        mlp_widths=tuple(_int_list(cfgmap["decoder_widths"])) if cfgmap["decoder_widths"] else (),
        grid_seed=int(cfgmap["grid_seed"] or 0),
    )
    return PointCapsuleAE(
        enc, rod, dec,
        dtype=np.float32,
        seed=args.seed,
        deterministic=args.deterministic,
    )


def _add_common(p):
    p.add_argument("--config", help="run configuration file (key = value lines)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded, order-canonical reductions")
    p.add_argument("--threads", type=int, default=0,
                   help="cap math library threads (0 = leave untouched)")


def build_parser():
    parser = _Parser(prog="pointcaps", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic labeled shapes")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--families", default=",".join(FAMILIES))
    p.add_argument("--count", type=int, default=4, help="shapes per family")
    p.add_argument("--points", type=int, default=2048)
    p.add_argument("--jitter", type=float, default=0.01)
    p.add_argument("--format", default="xyz", choices=FORMATS)

    p = sub.add_parser("train", help="train the auto-encoder")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--routing", choices=ROUTING_MODES, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--latent-count", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--branch-count", type=int, default=None)
    p.add_argument("--branch-width", type=int, default=None)
    p.add_argument("--mlp-widths", default=None)
    p.add_argument("--decoder-widths", default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--grid-seed", type=int, default=None)
    p.add_argument("--points", type=int, default=0, help="resample inputs to this count")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--log", help="append per-epoch lines to this file")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--points", type=int, default=0)
    p.add_argument("--normalize", action="store_true")

    p = sub.add_parser("reconstruct", help="encode and decode one cloud")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", default=None, choices=FORMATS)
    p.add_argument("--grid-seed", type=int, default=None)

    p = sub.add_parser("segment", help="part-label a cloud via its capsules")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--partnet", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--category", type=int, default=0)
    p.add_argument("--filter-k", type=int, default=9, help="0 disables smoothing")
    p.add_argument("--decoded", action="store_true",
                   help="write the labeled decoded cloud instead of the input points")

    p = sub.add_parser("train-partnet", help="fit the capsule part network")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="directory of labeled clouds")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--category", type=int, default=0)
    p.add_argument("--category-count", type=int, default=1)

    p = sub.add_parser("interpolate", help="blend selected capsules between two shapes")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--t", default="0,0.25,0.5,0.75,1",
                   help="comma list of blend positions")
    p.add_argument("--capsules", default=None, help="explicit capsule indices")
    p.add_argument("--part", type=int, default=None)
    p.add_argument("--partnet", default=None)
    p.add_argument("--category", type=int, default=0)
    p.add_argument("--format", default="xyz", choices=FORMATS)

    p = sub.add_parser("replace", help="swap selected capsules from another shape")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out", required=True, help="output file")
    p.add_argument("--capsules", default=None)
    p.add_argument("--part", type=int, default=None)
    p.add_argument("--partnet", default=None)
    p.add_argument("--category", type=int, default=0)
    p.add_argument("--format", default=None, choices=FORMATS)

    p = sub.add_parser("classify", help="linear classification on latent features")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train-data", required=True,
                   help="directory with one subdirectory per class")
    p.add_argument("--test-data", default=None)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--out", default=None, help="save the classifier here")
    p.add_argument("--points", type=int, default=0)
    p.add_argument("--normalize", action="store_true")

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    _add_common(p)

    return parser


def _cmd_gen_data(args):
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    for fam in families:
        if fam not in FAMILIES:
            raise CliError("unknown family %r (expected one of %s)" % (fam, ", ".join(FAMILIES)))
    if args.count < 1 or args.points < 1:
        raise CliError("count and points must be positive")
    os.makedirs(args.out, exist_ok=True)
    written = 0
    for fam in families:
        fam_dir = os.path.join(args.out, fam)
        os.makedirs(fam_dir, exist_ok=True)
        for i in range(args.count):
            spec = SyntheticSpec(
                family=fam, n_points=args.points,
                jitter=args.jitter, seed=args.seed + i,
            )
            cloud = generate(spec)
            path = os.path.join(fam_dir, "%s_%03d.%s" % (fam, args.seed + i, args.format))
            write_cloud(path, cloud, fmt=args.format)
            written += 1
    print("wrote %d shapes to %s" % (written, args.out))
    return 0


def _cmd_train(args):
    merged = _merged(args, {
        "epochs": "train.epochs",
        "batch_size": "train.batch_size",
        "lr": "train.learning_rate",
    })
    epochs = int(merged["epochs"] if merged["epochs"] is not None else 100)
    batch_size = int(merged["batch_size"] if merged["batch_size"] is not None else 8)
    lr = float(merged["lr"] if merged["lr"] is not None else 1e-4)
    _, clouds = _load_dir(args.data, points=args.points,
                          do_normalize=args.normalize, seed=args.seed)
    start_epoch = 0
    if args.resume:
        model, meta = load_model(args.resume, deterministic=args.deterministic)
        start_epoch = meta["epoch"]
    else:
        model = _build_model_from_args(args, n_points=len(clouds[0]))
    os.makedirs(args.out, exist_ok=True)
    cfg = TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        adam=AdamConfig(learning_rate=lr),
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        eval_every=args.eval_every,
        out_dir=args.out,
        log_path=args.log,
    )
    report = train_ae(model, clouds, cfg, start_epoch=start_epoch)
    for epoch, loss in enumerate(report.epoch_losses, start=start_epoch):
        print("epoch %d loss %.9g" % (epoch, loss))
    print("final checkpoint %s" % report.final_checkpoint)
    return 0


def _cmd_eval(args):
    model, _ = load_model(args.checkpoint, deterministic=args.deterministic)
    _, clouds = _load_dir(args.data, points=args.points,
                          do_normalize=args.normalize, seed=args.seed)
    report = eval_ae(model, clouds)
    print(
        "chamfer %.9g chamfer_x1000 %.9g spread %.9g shapes %d"
        % (report.chamfer_raw, report.chamfer_x1000, report.spread_mean, len(clouds))
    )
    return 0


def _cmd_reconstruct(args):
    model, _ = load_model(args.checkpoint, deterministic=args.deterministic)
    cloud = read_cloud(args.input)
    model.set_mode("eval")
    grid = None
    if args.grid_seed is not None:
        grid = sample_grid(model.decoder_cfg, model.routing_cfg.latent_count,
                           seed=args.grid_seed, dtype=model.dtype)
    recon = model.reconstruct_cloud(cloud.points, grid=grid)
    out = PointCloud(points=recon.points, labels=recon.attribution)
    write_cloud(args.out, out, fmt=args.format)
    result = chamfer(recon.points, cloud.points)
    print("reconstructed %s chamfer %.9g" % (args.out, result.value))
    return 0


def _cmd_segment(args):
    model, _ = load_model(args.checkpoint, deterministic=args.deterministic)
    net = CapsulePartNet.load(args.partnet)
    cloud = read_cloud(args.input)
    if args.filter_k and (args.filter_k < 0 or args.filter_k % 2 == 0):
        raise CliError("--filter-k must be odd and positive, or 0 to disable")
    model.set_mode("eval")
    latent = model.encode_latent(cloud.points)
    seg = segment_points(model, net, latent, args.category)
    if args.filter_k:
        seg = mode_filter(seg, k=args.filter_k)
    if args.decoded:
        out = seg
    else:
        labels = nearest_labels(cloud.points, seg.points, seg.labels)
        out = PointCloud(points=cloud.points, labels=labels)
    write_cloud(args.out, out)
    print("segmented %s parts %d" % (args.out, int(seg.labels.max()) + 1))
    return 0


def _cmd_train_partnet(args):
    model, _ = load_model(args.checkpoint, deterministic=args.deterministic)
    _, clouds = _load_dir(args.data)
    labeled = [c for c in clouds if c.labels is not None]
    if not labeled:
        raise CliError("no labeled clouds under %r" % args.data)
    model.set_mode("eval")
    grid = model.eval_grid()
    part_total = max(int(c.labels.max()) + 1 for c in labeled)
    cfg = PartNetConfig(
        part_count=part_total,
        latent_dim=model.routing_cfg.latent_dim,
        category_count=args.category_count,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
    )
    net = CapsulePartNet(cfg)
    samples = []
    for cloud in labeled:
        latent = model.encode_latent(cloud.points)
        labeling = gt_capsule_labels(model, latent, cloud, grid)
        samples.append((latent, args.category, labeling))
    report = train_partnet(samples, net)
    net.save(args.out)
    final_loss = report.losses[-1] if report.losses else float("nan")
    print("partnet %s final loss %.9g accuracy %.4f"
          % (args.out, final_loss, report.final_accuracy))
    return 0


def _select_capsules(args, model, src_cloud, tgt_cloud):
    if args.capsules:
        return CapsuleSelection(indices=np.array(_int_list(args.capsules)))
    if args.part is None:
        raise CliError("give either --capsules or --part with --partnet")
    if not args.partnet:
        raise CliError("--part needs --partnet to label the capsules")
    net = CapsulePartNet.load(args.partnet)
    labelings = []
    for cloud in (src_cloud, tgt_cloud):
        latent = model.encode_latent(cloud.points)
        labels = net.predict(latent, args.category)
        labelings.append(
            CapsuleLabeling(labels=labels, part_count=net.cfg.part_count)
        )
    try:
        return match_part_capsules(labelings[0], labelings[1], args.part)
    except (EmptySelectionError, ValueError) as exc:
        raise CliError(str(exc))


def _cmd_interpolate(args):
    positions = _float_list(args.t)
    if not positions:
        raise CliError("--t needs at least one position")
    model, _ = load_model(args.checkpoint, deterministic=args.deterministic)
    src = read_cloud(args.src)
    tgt = read_cloud(args.tgt)
    model.set_mode("eval")
    selection = _select_capsules(args, model, src, tgt)
    latent_src = model.encode_latent(src.points)
    latent_tgt = model.encode_latent(tgt.points)
    os.makedirs(args.out, exist_ok=True)
    grid = model.eval_grid()
    paths = []
    for i, t in enumerate(positions):
        blended = interpolate_part(latent_src, latent_tgt, selection, t)
        recon = model.decode_latent(blended, grid)
        path = os.path.join(args.out, "interp_%03d.%s" % (i, args.format))
        write_cloud(path, PointCloud(points=recon.points, labels=recon.attribution),
                    fmt=args.format)
        paths.append(path)
    print("wrote %d interpolation steps to %s" % (len(paths), args.out))
    return 0


def _cmd_replace(args):
    model, _ = load_model(args.checkpoint, deterministic=args.deterministic)
    src = read_cloud(args.src)
    tgt = read_cloud(args.tgt)
    model.set_mode("eval")
    selection = _select_capsules(args, model, src, tgt)
    latent_src = model.encode_latent(src.points)
    latent_tgt = model.encode_latent(tgt.points)
    blended = replace_part(latent_src, latent_tgt, selection)
    recon = model.decode_latent(blended, model.eval_grid())
    write_cloud(args.out, PointCloud(points=recon.points, labels=recon.attribution),
                fmt=args.format)
    print("replaced %d capsules, wrote %s" % (selection.indices.size, args.out))
    return 0


def _cmd_classify(args):
    model, _ = load_model(args.checkpoint, deterministic=args.deterministic)
    model.set_mode("eval")

    def featurize(root):
        classes = _class_dirs(root)
        feats, labels = [], []
        for ci, cname in enumerate(classes):
            _, clouds = _load_dir(os.path.join(root, cname), points=args.points,
                                  do_normalize=args.normalize, seed=args.seed)
            for cloud in clouds:
                feats.append(flatten_latent(model.encode_latent(cloud.points)))
                labels.append(ci)
        return np.stack(feats), np.array(labels), classes

    x_train, y_train, classes = featurize(args.train_data)
    cfg = ClassifierConfig(epochs=args.epochs, learning_rate=args.lr,
                           l2=args.l2, seed=args.seed)
    clf, _ = LinearClassifier.train(x_train, y_train, cfg)
    train_acc = float(np.mean(clf.predict(x_train) == y_train))
    print("train accuracy %.4f classes %s" % (train_acc, ",".join(classes)))
    if args.test_data:
        x_test, y_test, test_classes = featurize(args.test_data)
        if test_classes != classes:
            raise CliError(
                "test classes %r do not match train classes %r" % (test_classes, classes)
            )
        test_acc = float(np.mean(clf.predict(x_test) == y_test))
        print("test accuracy %.4f" % test_acc)
    if args.out:
        clf.save(args.out)
        print("saved classifier %s" % args.out)
    return 0


def _cmd_gradcheck(args):
    results = run_gradient_suite(seed=args.seed)
    failed = 0
    for r in results:
        print(str(r))
        if not r.ok:
            failed += 1
    print("gradcheck: %d/%d passed" % (len(results) - failed, len(results)))
    return 1 if failed else 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "reconstruct": _cmd_reconstruct,
    "segment": _cmd_segment,
    "train-partnet": _cmd_train_partnet,
    "interpolate": _cmd_interpolate,
    "replace": _cmd_replace,
    "classify": _cmd_classify,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.deterministic:
            _limit_threads(1)
        elif args.threads:
            _limit_threads(args.threads)
        return _COMMANDS[args.verb](args)
    except CliError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
