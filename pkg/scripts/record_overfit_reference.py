"""Regenerate tests/fixtures/overfit_reference.json.

The acceptance gate freezes its training-run settings (shape seeds,
architecture, optimizer budget) plus a measured reference value for the
overfit criterion in one committed fixture.  This script re-runs the
overfit pipeline through the CLI exactly the way the acceptance test
does -- generate shapes, train deterministically, evaluate -- and writes
the fixture with the freshly measured reference.

Run from the repository root:

    python scripts/record_overfit_reference.py

Takes several minutes (one full 300-epoch deterministic training run on
a single core).  The script refuses to write a fixture whose measured
chamfer does not clear the acceptance bar, so a bad architecture change
fails here rather than poisoning the committed reference.
"""
import io
import json
import os
import sys
import tempfile
import time
from contextlib import redirect_stdout

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pointcaps.cli import main

FIXTURE_PATH = os.path.join(
    os.path.dirname(__file__), "..", "tests", "fixtures", "overfit_reference.json"
)

# Architecture for the overfit run.  The decoder oversamples: 32 latent
# capsules x 128 replicas = 4096 reconstructed points against 1024-point
# targets, which tightens the chamfer floor and the optimization gap at
# a modest runtime cost.
OVERFIT_ARCH = {
    "mlp_widths": "3,64,128",
    "branch_count": 8,
    "branch_width": 128,
    "latent_count": 32,
    "latent_dim": 32,
    "iterations": 3,
    "replicas": 128,
    "decoder_widths": "34,256,128,64,3",
    "grid_seed": 0,
}

# Shared by the ablation, part-pipeline, and transfer criteria: same
# encoder and routing, but 32 replicas (one reconstructed point per
# target point) since those criteria measure capsule behaviour rather
# than reconstruction fidelity.
LIGHT_ARCH = dict(OVERFIT_ARCH, replicas=32)

OVERFIT = {
    "family": "two-sphere-barbell",
    "n_points": 1024,
    "seeds": [0, 1, 2, 3],
    # (start seed, count) pairs for gen-data calls covering `seeds`.
    "gen_calls": [[0, 4]],
    "train_seed": 11,
    "arch": OVERFIT_ARCH,
    # The eval chamfer may differ from the final train loss because eval
    # recomputes reconstructions in eval mode; the run is accepted when
    # the relative gap stays inside this bound.
    "train_eval_gap_bound": 0.05,
}

ABLATION = {"arch": LIGHT_ARCH, "epochs": 60}

PARTSEG = {
    "train_seeds": [0, 1, 2, 3, 4, 5],
    "held_out_seeds": [20, 21, 22],
    "n_points": 1024,
    "arch": LIGHT_ARCH,
    "model_seed": 11,
    "ae_epochs": 150,
    "partnet_epochs": 200,
}

TRANSFER = {
    "train_seeds": [0, 1, 2, 3, 4, 5],
    "held_out_seeds": [30, 31, 32, 33],
    "n_points": 512,
    "arch": LIGHT_ARCH,
    "model_seed": 7,
    "ae_epochs": 80,
}


def run_cli(argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


def arch_flags(arch):
    return [
        "--mlp-widths", arch["mlp_widths"],
        "--branch-count", str(arch["branch_count"]),
        "--branch-width", str(arch["branch_width"]),
        "--latent-count", str(arch["latent_count"]),
        "--latent-dim", str(arch["latent_dim"]),
        "--iterations", str(arch["iterations"]),
        "--replicas", str(arch["replicas"]),
        "--decoder-widths", arch["decoder_widths"],
        "--grid-seed", str(arch["grid_seed"]),
    ]


def measure_overfit(workdir):
    data_dir = os.path.join(workdir, "shapes")
    for start, count in OVERFIT["gen_calls"]:
        code, _ = run_cli([
            "gen-data", "--out", data_dir,
            "--families", OVERFIT["family"],
            "--count", str(count), "--points", str(OVERFIT["n_points"]),
            "--seed", str(start),
        ])
        assert code == 0, "gen-data failed"
    run_dir = os.path.join(workdir, "run")
    t0 = time.time()
    code, out = run_cli([
        "train", "--data", data_dir, "--out", run_dir,
        "--epochs", "300", "--batch-size", "4", "--lr", "1e-4",
        "--seed", str(OVERFIT["train_seed"]), "--deterministic",
    ] + arch_flags(OVERFIT_ARCH))
    train_time = time.time() - t0
    assert code == 0, "training failed:\n%s" % out
    losses = [float(l.split()[3]) for l in out.splitlines() if l.startswith("epoch ")]
    code, out = run_cli([
        "eval", "--checkpoint", os.path.join(run_dir, "final.pcaps"),
        "--data", data_dir, "--deterministic",
        "--seed", str(OVERFIT["train_seed"]),
    ])
    assert code == 0, "eval failed:\n%s" % out
    value = float(out.split()[1])
    gap = abs(value - losses[-1]) / max(value, losses[-1])
    print("train %.0fs  final train loss %.6f  eval chamfer %.6f  gap %.4f"
          % (train_time, losses[-1], value, gap))
    assert value < 0.1, (
        "measured eval chamfer %.6f does not clear the 0.1 acceptance bar; "
        "refusing to freeze it" % value
    )
    assert gap <= OVERFIT["train_eval_gap_bound"], (
        "train/eval gap %.4f exceeds the %.2f bound"
        % (gap, OVERFIT["train_eval_gap_bound"])
    )
    return value


def main_record():
    with tempfile.TemporaryDirectory() as workdir:
        reference = measure_overfit(workdir)
    fixture = {
        "overfit": dict(OVERFIT, reference_eval_chamfer=reference),
        "ablation": ABLATION,
        "partseg": PARTSEG,
        "transfer": TRANSFER,
    }
    os.makedirs(os.path.dirname(FIXTURE_PATH), exist_ok=True)
    with open(FIXTURE_PATH, "w") as fh:
        json.dump(fixture, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("wrote %s" % os.path.normpath(FIXTURE_PATH))


if __name__ == "__main__":
    main_record()
