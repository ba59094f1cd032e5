"""Reading and writing point clouds as xyz text and ascii PLY.

xyz lines are "x y z" with an optional trailing integer label. Floats
are written with nine significant digits, enough for an exact float32
round trip and a 1e-9 float64 one. The PLY writer emits a minimal ascii
header with an optional integer ``label`` property.
"""
from __future__ import annotations

import os

import numpy as np

from .cloud import PointCloud

FORMAT_XYZ = "xyz"
FORMAT_PLY = "ply"
FORMATS = (FORMAT_XYZ, FORMAT_PLY)


class CloudFormatError(ValueError):
    """Malformed point cloud file; the message names file and line."""


def _fmt(x):
    return "%.9g" % x


def guess_format(path):
    ext = os.path.splitext(path)[1].lower().lstrip(".")
    return FORMAT_PLY if ext == "ply" else FORMAT_XYZ


def write_cloud(path, cloud, fmt=None):
    fmt = fmt or guess_format(path)
    if fmt == FORMAT_XYZ:
        _write_xyz(path, cloud)
    elif fmt == FORMAT_PLY:
        _write_ply(path, cloud)
    else:
        raise CloudFormatError("unknown format %r (expected one of %r)" % (fmt, FORMATS))


def read_cloud(path, fmt=None):
    fmt = fmt or guess_format(path)
    if fmt == FORMAT_XYZ:
        return _read_xyz(path)
    if fmt == FORMAT_PLY:
        return _read_ply(path)
    raise CloudFormatError("unknown format %r (expected one of %r)" % (fmt, FORMATS))


def _write_xyz(path, cloud):
    with open(path, "w") as fh:
        if cloud.labels is None:
            for p in cloud.points:
                fh.write("%s %s %s\n" % (_fmt(p[0]), _fmt(p[1]), _fmt(p[2])))
        else:
            for p, lab in zip(cloud.points, cloud.labels):
                fh.write("%s %s %s %d\n" % (_fmt(p[0]), _fmt(p[1]), _fmt(p[2]), lab))


def _read_xyz(path):
    points = []
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) not in (3, 4):
                raise CloudFormatError(
                    "%s:%d: expected 'x y z [label]', got %d fields"
                    % (path, lineno, len(parts))
                )
            try:
                xyz = [float(v) for v in parts[:3]]
            except ValueError:
                raise CloudFormatError(
                    "%s:%d: non-numeric coordinate" % (path, lineno)
                )
            points.append(xyz)
            if len(parts) == 4:
                try:
                    labels.append(int(parts[3]))
                except ValueError:
                    raise CloudFormatError(
                        "%s:%d: non-integer label %r" % (path, lineno, parts[3])
                    )
            elif labels:
                raise CloudFormatError(
                    "%s:%d: label column present on some lines only" % (path, lineno)
                )
    if not points:
        raise CloudFormatError("%s: no points" % path)
    if labels and len(labels) != len(points):
        raise CloudFormatError("%s: label column present on some lines only" % path)
    return PointCloud(
        points=np.array(points, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64) if labels else None,
    )


def _write_ply(path, cloud):
    n = len(cloud)
    with open(path, "w") as fh:
        fh.write("ply\n")
        fh.write("format ascii 1.0\n")
        fh.write("element vertex %d\n" % n)
        fh.write("property float x\n")
        fh.write("property float y\n")
        fh.write("property float z\n")
        if cloud.labels is not None:
            fh.write("property int label\n")
        fh.write("end_header\n")
        if cloud.labels is None:
            for p in cloud.points:
                fh.write("%s %s %s\n" % (_fmt(p[0]), _fmt(p[1]), _fmt(p[2])))
        else:
            for p, lab in zip(cloud.points, cloud.labels):
                fh.write("%s %s %s %d\n" % (_fmt(p[0]), _fmt(p[1]), _fmt(p[2]), lab))


def _read_ply(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudFormatError("%s:1: missing 'ply' magic" % path)
    n_vertex = None
    properties = []
    body_start = None
    in_vertex = False
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise CloudFormatError("%s:%d: only ascii PLY is supported" % (path, i))
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_vertex = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            properties.append((parts[1], parts[2]))
        elif parts[0] == "end_header":
            body_start = i
            break
    if body_start is None or n_vertex is None:
        raise CloudFormatError("%s: truncated PLY header" % path)
    names = [name for _, name in properties]
    if names[:3] != ["x", "y", "z"]:
        raise CloudFormatError(
            "%s: vertex element must start with x y z properties, got %r" % (path, names)
        )
    has_label = "label" in names[3:]
    label_col = names.index("label") if has_label else None
    body = [l for l in lines[body_start:] if l.strip()]
    if len(body) < n_vertex:
        raise CloudFormatError(
            "%s: header declares %d vertices, body has %d" % (path, n_vertex, len(body))
        )
    points = np.empty((n_vertex, 3), dtype=np.float64)
    labels = np.empty(n_vertex, dtype=np.int64) if has_label else None
    for row, line in enumerate(body[:n_vertex]):
        parts = line.split()
        if len(parts) != len(names):
            raise CloudFormatError(
                "%s:%d: expected %d fields, got %d"
                % (path, body_start + 1 + row, len(names), len(parts))
            )
        try:
            points[row] = [float(parts[0]), float(parts[1]), float(parts[2])]
            if has_label:
                labels[row] = int(parts[label_col])
        except ValueError:
            raise CloudFormatError(
                "%s:%d: malformed vertex row" % (path, body_start + 1 + row)
            )
    return PointCloud(points=points, labels=labels)
