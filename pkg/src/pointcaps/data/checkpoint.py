"""Binary checkpoints: readable header, little-endian float32 payload.

Layout:

    PCAPS 1\\n                      magic and format version
    key = value\\n ...              config and metadata, sorted by key
    tensor name d0[,d1,...]\\n ...  blob directory, sorted by name
    end_header\\n
    <raw float32 little-endian data, concatenated in directory order>

Saving, loading and saving again produces byte-identical files. Blobs
are always stored as float32, so training that intends to resume
exactly must run in float32.
"""
from __future__ import annotations

import numpy as np

MAGIC = "PCAPS"
VERSION = 1


class CheckpointError(Exception):
    """Base class for unreadable or inconsistent checkpoints."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def write_checkpoint(path, entries, blobs):
    """Write key-value entries and named float arrays.

    Keys and blob names must not contain whitespace or newlines; values
    are stringified. Blob order in the payload is sorted by name.
    """
    for key in entries:
        if any(c.isspace() for c in key):
            raise ValueError("checkpoint key %r contains whitespace" % key)
    names = sorted(blobs)
    lines = ["%s %d" % (MAGIC, VERSION)]
    for key in sorted(entries):
        value = str(entries[key])
        if "\n" in value:
            raise ValueError("checkpoint value for %r contains a newline" % key)
        lines.append("%s = %s" % (key, value))
    for name in names:
        arr = np.asarray(blobs[name])
        if arr.ndim < 1:
            raise ValueError("checkpoint blob %r must have ndim >= 1" % name)
        lines.append("tensor %s %s" % (name, ",".join(str(d) for d in arr.shape)))
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        for name in names:
            arr = np.ascontiguousarray(np.asarray(blobs[name]), dtype="<f4")
            fh.write(arr.tobytes())


def read_checkpoint(path):
    """Parse a checkpoint into (entries, blobs)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointTruncatedError("%s: empty or truncated header" % path)
    first = raw[:nl].decode("utf-8", errors="replace").split()
    if not first or first[0] != MAGIC:
        raise CheckpointMagicError(
            "%s: bad magic %r, expected %r" % (path, first[:1], MAGIC)
        )
    if len(first) != 2 or not first[1].isdigit():
        raise CheckpointMagicError("%s: malformed version line" % path)
    if int(first[1]) != VERSION:
        raise CheckpointVersionError(
            "%s: format version %s, this build reads %d" % (path, first[1], VERSION)
        )
    end = raw.find(b"\nend_header\n", nl)
    if end < 0:
        raise CheckpointTruncatedError("%s: no end_header marker" % path)
    header_lines = raw[nl + 1:end].decode("utf-8").split("\n")
    payload = raw[end + len(b"\nend_header\n"):]

    entries = {}
    directory = []
    for line in header_lines:
        if not line.strip():
            continue
        if line.startswith("tensor "):
            parts = line.split()
            if len(parts) != 3:
                raise CheckpointError("%s: malformed tensor line %r" % (path, line))
            shape = tuple(int(d) for d in parts[2].split(","))
            directory.append((parts[1], shape))
        else:
            key, sep, value = line.partition(" = ")
            if not sep:
                raise CheckpointError("%s: malformed header line %r" % (path, line))
            entries[key] = value

    blobs = {}
    offset = 0
    for name, shape in directory:
        count = int(np.prod(shape))
        nbytes = count * 4
        if offset + nbytes > len(payload):
            raise CheckpointTruncatedError(
                "%s: payload ends inside blob %r" % (path, name)
            )
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        blobs[name] = arr.reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise CheckpointTruncatedError(
            "%s: %d trailing bytes after last blob" % (path, len(payload) - offset)
        )
    return entries, blobs


MODEL_KIND = "autoencoder"


def save_model(path, model, step=None, epoch=0, run_seed=0):
    """Checkpoint an auto-encoder: weights, moments, stats and configs."""
    entries = dict(model.config_dict())
    entries["model.kind"] = MODEL_KIND
    entries["train.step"] = model.store.step if step is None else int(step)
    entries["train.epoch"] = int(epoch)
    entries["train.run_seed"] = int(run_seed)
    write_checkpoint(path, entries, model.store.state_blobs())


def load_model(path, deterministic=False):
    """Rebuild the auto-encoder a checkpoint describes and load its state.

    Returns (model, meta) where meta holds train.step, train.epoch and
    train.run_seed as ints.
    """
    from ..nn.model import PointCapsuleAE

    entries, blobs = read_checkpoint(path)
    kind = entries.get("model.kind", MODEL_KIND)
    if kind != MODEL_KIND:
        raise CheckpointError(
            "%s: checkpoint kind %r, expected %r" % (path, kind, MODEL_KIND)
        )
    model = PointCapsuleAE.from_config_dict(entries, deterministic=deterministic)
    try:
        model.store.load_state_blobs(blobs)
    except (KeyError, ValueError) as exc:
        raise CheckpointShapeError("%s: %s" % (path, exc)) from exc
    model.store.step = int(entries.get("train.step", 0))
    meta = {
        "step": int(entries.get("train.step", 0)),
        "epoch": int(entries.get("train.epoch", 0)),
        "run_seed": int(entries.get("train.run_seed", 0)),
    }
    return model, meta
