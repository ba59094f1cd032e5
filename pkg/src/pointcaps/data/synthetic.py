"""Synthetic labeled shape families for desk-scale experiments.

Four families with distinct part structure: disconnected blobs
(two-sphere-barbell), thin parts on a bulk (winged-cross), a closed
solid with flat ends (capped-cylinder) and a genus change
(torus-on-box). Points are sampled on analytic surfaces, optionally
jittered with Gaussian noise, labeled by part, then normalized to the
unit sphere. Generation is a pure function of the spec, including its
seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cloud import PointCloud, normalize

BARBELL = "two-sphere-barbell"
WINGED_CROSS = "winged-cross"
CAPPED_CYLINDER = "capped-cylinder"
TORUS_ON_BOX = "torus-on-box"
FAMILIES = (BARBELL, WINGED_CROSS, CAPPED_CYLINDER, TORUS_ON_BOX)

_DEFAULT_FRACTIONS = {
    BARBELL: (0.5, 0.5),
    WINGED_CROSS: (0.5, 0.35, 0.15),
    CAPPED_CYLINDER: (0.7, 0.3),
    TORUS_ON_BOX: (0.45, 0.55),
}


def family_index(family):
    return FAMILIES.index(family)


def part_count(family):
    return len(_DEFAULT_FRACTIONS[family])


def default_part_counts(family, n_points):
    """Split n_points over the family's parts by fixed fractions."""
    fracs = _DEFAULT_FRACTIONS[family]
    counts = [int(np.floor(f * n_points)) for f in fracs]
    rest = n_points - sum(counts)
    for i in range(rest):
        counts[i % len(counts)] += 1
    return tuple(counts)


@dataclass
class SyntheticSpec:
    family: str
    n_points: int = 2048
    part_counts: Optional[tuple] = None
    jitter: float = 0.01
    seed: int = 0

    def resolved_counts(self):
        counts = self.part_counts or default_part_counts(self.family, self.n_points)
        return tuple(int(c) for c in counts)

    def validate(self):
        if self.family not in FAMILIES:
            raise ValueError(
                "unknown family %r (expected one of %r)" % (self.family, FAMILIES)
            )
        if self.n_points < 1:
            raise ValueError("n_points must be positive")
        counts = self.resolved_counts()
        if len(counts) != part_count(self.family):
            raise ValueError(
                "family %r has %d parts, got %d counts"
                % (self.family, part_count(self.family), len(counts))
            )
        if any(c < 1 for c in counts):
            raise ValueError("every part needs at least one point, got %r" % (counts,))
        if sum(counts) != self.n_points:
            raise ValueError(
                "part counts %r sum to %d, expected n_points=%d"
                % (counts, sum(counts), self.n_points)
            )
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


def _unit_sphere(rng, n):
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    # a zero draw has measure zero but guard anyway
    norms[norms == 0] = 1.0
    return v / norms


def _box_surface(rng, n, half):
    """Uniform points on the surface of an axis-aligned box."""
    hx, hy, hz = half
    areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
    areas = areas / areas.sum()
    face = rng.choice(6, size=n, p=areas)
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.uniform(-1.0, 1.0, size=n)
    pts = np.empty((n, 3))
    for f in range(6):
        sel = face == f
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        p = np.empty((int(sel.sum()), 3))
        others = [a for a in range(3) if a != axis]
        p[:, axis] = sign * half[axis]
        p[:, others[0]] = u[sel] * half[others[0]]
        p[:, others[1]] = v[sel] * half[others[1]]
        pts[sel] = p
    return pts


def _torus(rng, n, big_r, small_r):
    """Area-uniform torus sampling; tube angle accepted by rejection."""
    out = np.empty(n)
    need = n
    filled = 0
    while need > 0:
        theta = rng.uniform(0.0, 2.0 * np.pi, size=need * 2)
        accept = rng.uniform(0.0, 1.0, size=need * 2) < (
            (big_r + small_r * np.cos(theta)) / (big_r + small_r)
        )
        got = theta[accept][:need]
        out[filled:filled + got.size] = got
        filled += got.size
        need -= got.size
    theta = out
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    ring = big_r + small_r * np.cos(theta)
    return np.stack(
        [ring * np.cos(phi), ring * np.sin(phi), small_r * np.sin(theta)], axis=1
    )


def _sample_family(spec):
    """Raw surface samples before jitter and normalization.

    Returns (points, labels, meta) where meta records the analytic
    primitives actually used, keyed per part.
    """
    spec.validate()
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([spec.seed, family_index(spec.family)]))
    )
    counts = spec.resolved_counts()
    chunks = []
    meta = {"family": spec.family}

    if spec.family == BARBELL:
        r0 = rng.uniform(0.28, 0.42)
        r1 = rng.uniform(0.28, 0.42)
        gap = rng.uniform(1.1, 1.5)
        c0 = np.array([-gap / 2.0, 0.0, 0.0])
        c1 = np.array([gap / 2.0, 0.0, 0.0])
        chunks.append(c0 + r0 * _unit_sphere(rng, counts[0]))
        chunks.append(c1 + r1 * _unit_sphere(rng, counts[1]))
        meta["spheres"] = [(c0, r0), (c1, r1)]

    elif spec.family == WINGED_CROSS:
        body = np.array([rng.uniform(0.55, 0.75), rng.uniform(0.1, 0.14), rng.uniform(0.1, 0.14)])
        wing = np.array([rng.uniform(0.14, 0.2), rng.uniform(0.65, 0.85), 0.03])
        fin = np.array([rng.uniform(0.1, 0.14), 0.03, rng.uniform(0.25, 0.4)])
        fin_offset = np.array([-body[0] * 0.7, 0.0, fin[2]])
        chunks.append(_box_surface(rng, counts[0], body))
        chunks.append(_box_surface(rng, counts[1], wing))
        chunks.append(fin_offset + _box_surface(rng, counts[2], fin))
        meta["boxes"] = [body, wing, fin]

    elif spec.family == CAPPED_CYLINDER:
        radius = rng.uniform(0.3, 0.45)
        height = rng.uniform(0.9, 1.3)
        phi = rng.uniform(0.0, 2.0 * np.pi, size=counts[0])
        z = rng.uniform(-height / 2.0, height / 2.0, size=counts[0])
        side = np.stack([radius * np.cos(phi), radius * np.sin(phi), z], axis=1)
        chunks.append(side)
        n_caps = counts[1]
        cap_r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n_caps))
        cap_phi = rng.uniform(0.0, 2.0 * np.pi, size=n_caps)
        cap_z = np.where(rng.uniform(size=n_caps) < 0.5, height / 2.0, -height / 2.0)
        caps = np.stack(
            [cap_r * np.cos(cap_phi), cap_r * np.sin(cap_phi), cap_z], axis=1
        )
        chunks.append(caps)
        meta["cylinder"] = (radius, height)

    elif spec.family == TORUS_ON_BOX:
        big_r = rng.uniform(0.32, 0.42)
        small_r = rng.uniform(0.09, 0.14)
        box = np.array([rng.uniform(0.35, 0.45), rng.uniform(0.35, 0.45), rng.uniform(0.12, 0.18)])
        lift = box[2] + small_r + 0.02
        torus = _torus(rng, counts[0], big_r, small_r)
        torus[:, 2] += lift
        chunks.append(torus)
        chunks.append(_box_surface(rng, counts[1], box))
        meta["torus"] = (big_r, small_r, lift)
        meta["box"] = box

    points = np.concatenate(chunks, axis=0)
    labels = np.concatenate(
        [np.full(c, i, dtype=np.int64) for i, c in enumerate(counts)]
    )
    return points, labels, meta


def generate(spec):
    """Produce one normalized, labeled cloud for the spec."""
    points, labels, _ = _sample_family(spec)
    if spec.jitter > 0:
        rng = np.random.Generator(
            np.random.PCG64(
                np.random.SeedSequence([spec.seed, family_index(spec.family), 0x71])
            )
        )
        points = points + spec.jitter * rng.normal(size=points.shape)
    cloud = PointCloud(points=points, labels=labels, category=family_index(spec.family))
    return normalize(cloud)
