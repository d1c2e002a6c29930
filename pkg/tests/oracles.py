"""Independent reference implementations used by the tests.

Each one takes a different computational route from the package code it
checks: recursive interpolation instead of Bernstein sums, per-pixel Python
loops instead of vectorised counts, and so on.
"""

from __future__ import annotations

import math

import numpy as np


def de_casteljau(control_points, t: float) -> np.ndarray:
    """Repeated linear interpolation of the control polygon."""
    pts = [np.asarray(p, dtype=np.float64) for p in control_points]
    while len(pts) > 1:
        pts = [(1.0 - t) * a + t * b for a, b in zip(pts[:-1], pts[1:])]
    return pts[0]


def brute_iou(pred, gt, threshold: int = 128) -> float:
    inter = union = 0
    h, w = len(pred), len(pred[0])
    for r in range(h):
        for c in range(w):
            p = int(pred[r][c]) >= threshold
            g = int(gt[r][c]) >= threshold
            inter += p and g
            union += p or g
    return 1.0 if union == 0 else inter / union


def iga_pixel(r: int, g: int, b: int) -> tuple[int, int, int]:
    """Mean-intensity IGA by rational arithmetic with round-half-up."""
    from fractions import Fraction

    def rnd(x: Fraction) -> int:
        return math.floor(x + Fraction(1, 2))

    return rnd(Fraction(r + g + b, 3)), g, rnd(Fraction(r + b, 2))


def ellipsoid_residual(vertices, a: float, b: float, c: float) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    return np.abs((v[:, 0] / a) ** 2 + (v[:, 1] / b) ** 2 + (v[:, 2] / c) ** 2 - 1.0)


def euler_characteristic(triangles) -> int:
    tris = np.asarray(triangles)
    edges = set()
    for a, b, c in tris.tolist():
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    return len(np.unique(tris)) - len(edges) + len(tris)


def rotation_angle_deg(q_a, q_b) -> np.ndarray:
    """Angle of the relative rotation via the trace of ``R_a R_b^T``."""

    def mat(q):
        w, x, y, z = q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    out = []
    for qa, qb in zip(np.asarray(q_a), np.asarray(q_b)):
        r = mat(qa / np.linalg.norm(qa)) @ mat(qb / np.linalg.norm(qb)).T
        out.append(math.degrees(math.acos(max(-1.0, min(1.0, (np.trace(r) - 1.0) / 2.0)))))
    return np.array(out)


def random_scene_config(rng: np.random.Generator, size: int):
    """Small random scene with every semantic class present in view."""
    from olivesynth.scene import BACKGROUNDS, LIGHTINGS, CameraSpec, SceneConfig

    return SceneConfig(
        seed=int(rng.integers(1 << 31)),
        background=BACKGROUNDS[int(rng.integers(len(BACKGROUNDS)))],
        lighting=LIGHTINGS[int(rng.integers(len(LIGHTINGS)))],
        olives_per_session=int(rng.integers(500, 3000)),
        leaves_per_layer=int(rng.integers(200, 1600)),
        camera=CameraSpec(
            position=(float(rng.uniform(-20, 20)), float(rng.uniform(-20, 20)), 100.0),
            look_at=(float(rng.uniform(-20, 20)), float(rng.uniform(-20, 20)), 0.0),
            image_width=size, image_height=size,
        ),
    )
