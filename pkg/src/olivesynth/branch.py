"""Bezier branches, tube meshes, a parametric olive leaf, and curve scattering."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import GeometryError, ParameterError
from .mesh import TriMesh
from .rng import CounterRNG
from .transforms import InstanceTransform, frame_to_quat, quat_multiply, sample_jitter


@dataclass(frozen=True, eq=False)
class BezierCurve:
    """Bezier curve of degree ``len(control_points) - 1`` (default use: 6 points, n = 5)."""

    control_points: np.ndarray

    def __post_init__(self):
        cp = np.array(self.control_points, dtype=np.float64)
        if cp.ndim != 2 or cp.shape[0] < 2:
            raise ParameterError("a Bezier curve needs at least 2 control points")
        cp.setflags(write=False)
        object.__setattr__(self, "control_points", cp)

    @property
    def degree(self) -> int:
        return len(self.control_points) - 1

    def is_degenerate(self) -> bool:
        return bool(np.all(np.ptp(self.control_points, axis=0) == 0.0))


def bernstein_weights(n: int, t) -> np.ndarray:
    """Matrix of ``C(n, i) (1 - t)^(n - i) t^i``, shape ``(len(t), n + 1)``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))[:, None]
    i = np.arange(n + 1)
    coeff = np.array([comb(n, k) for k in range(n + 1)], dtype=np.float64)
    return coeff * (1.0 - t) ** (n - i) * t**i


def bezier_points(control_points, t) -> np.ndarray:
    """Vectorised Bernstein evaluation at every parameter in ``t``."""
    cp = np.asarray(control_points, dtype=np.float64)
    return bernstein_weights(len(cp) - 1, t) @ cp


def bezier_derivative(control_points, t) -> np.ndarray:
    cp = np.asarray(control_points, dtype=np.float64)
    n = len(cp) - 1
    return n * bernstein_weights(n - 1, t) @ np.diff(cp, axis=0)


def bezier_point(curve: BezierCurve, t: float) -> np.ndarray:
    """``B(t) = sum_i C(n, i) (1 - t)^(n - i) t^i P_i`` for ``t`` in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"t must lie in [0, 1], got {t}")
    return bezier_points(curve.control_points, [t])[0]


def _tangents(cp: np.ndarray, ts: np.ndarray) -> np.ndarray:
    d = bezier_derivative(cp, ts)
    norm = np.linalg.norm(d, axis=1)
    bad = norm < 1e-12
    if np.any(bad):
        # stationary points (repeated control points): fall back to a chord
        h = 1e-4
        lo = bezier_points(cp, np.clip(ts[bad] - h, 0, 1))
        hi = bezier_points(cp, np.clip(ts[bad] + h, 0, 1))
        d[bad] = hi - lo
        norm[bad] = np.linalg.norm(d[bad], axis=1)
    if np.any(norm == 0):
        raise GeometryError("curve has no well-defined tangent")
    return d / norm[:, None]


def rotation_minimizing_frames(curve: BezierCurve, ts, substeps: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Tangent and normal vectors at each ``t`` via the double-reflection method.

    The initial normal is world +z made orthogonal to the start tangent
    (world +y if the tangent is vertical), so planar curves in a z-plane keep
    the plane normal as their frame normal.  ``ts`` may be unsorted.
    """
    if curve.is_degenerate():
        raise GeometryError("all control points coincide")
    ts = np.asarray(ts, dtype=np.float64)
    if ts.size == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    grid = np.linspace(0.0, 1.0, max(2, substeps * 16 + 1))
    params, inverse = np.unique(np.concatenate([grid, ts]), return_inverse=True)
    cp = curve.control_points
    pts = bezier_points(cp, params)
    tan = _tangents(cp, params)

    ref = np.array([0.0, 0.0, 1.0])
    if abs(tan[0] @ ref) > 0.99:
        ref = np.array([0.0, 1.0, 0.0])
    normals = np.empty_like(tan)
    r = ref - (ref @ tan[0]) * tan[0]
    normals[0] = r / np.linalg.norm(r)
    for k in range(len(params) - 1):
        v1 = pts[k + 1] - pts[k]
        c1 = v1 @ v1
        if c1 < 1e-24:
            normals[k + 1] = normals[k]
            continue
        r_l = normals[k] - (2.0 / c1) * (v1 @ normals[k]) * v1
        t_l = tan[k] - (2.0 / c1) * (v1 @ tan[k]) * v1
        v2 = tan[k + 1] - t_l
        c2 = v2 @ v2
        r_next = r_l if c2 < 1e-24 else r_l - (2.0 / c2) * (v2 @ r_l) * v2
        r_next = r_next - (r_next @ tan[k + 1]) * tan[k + 1]
        normals[k + 1] = r_next / np.linalg.norm(r_next)
    idx = inverse[len(grid):]
    return tan[idx], normals[idx]


def curve_frame_quats(curve: BezierCurve, ts) -> np.ndarray:
    """Canonical orientation (local +x = tangent, local +y = frame normal) at each ``t``."""
    tan, nor = rotation_minimizing_frames(curve, ts)
    if len(tan) == 0:
        return np.zeros((0, 4))
    return frame_to_quat(tan, nor)


def tessellate_branch(
    curve: BezierCurve,
    radius_base: float,
    radius_tip: float,
    rings: int = 12,
    sides: int = 6,
    prune_t: float = 1.0,
) -> TriMesh:
    """Tapered tube swept along the curve for ``t`` in ``[0, prune_t]``.

    Both ends are closed with a fan over the ring vertices, so the tube is a
    closed surface.  Ring centres lie on the curve.
    """
    if not radius_base >= radius_tip > 0:
        raise ParameterError("need radius_base >= radius_tip > 0")
    if rings < 2 or sides < 3:
        raise ParameterError("need rings >= 2 and sides >= 3")
    if not 0.0 < prune_t <= 1.0:
        raise ParameterError("prune_t must lie in (0, 1]")
    if curve.is_degenerate():
        raise GeometryError("all control points coincide")

    ts = prune_t * np.linspace(0.0, 1.0, rings)
    centres = bezier_points(curve.control_points, ts)
    tan, nor = rotation_minimizing_frames(curve, ts)
    bin_ = np.cross(tan, nor)
    radii = np.linspace(radius_base, radius_tip, rings)
    ang = 2.0 * np.pi * np.arange(sides) / sides
    offsets = np.cos(ang)[None, :, None] * nor[:, None, :] + np.sin(ang)[None, :, None] * bin_[:, None, :]
    vertices = (centres[:, None, :] + radii[:, None, None] * offsets).reshape(-1, 3)

    def vid(i, j):
        return i * sides + (j % sides)

    def tid(i, j):
        return i * (sides + 1) + j

    uu, vv = np.meshgrid(np.arange(sides + 1) / sides, ts / prune_t)
    uvs = np.stack([uu, vv], axis=-1).reshape(-1, 2)
    tris, uvt = [], []
    for i in range(rings - 1):
        for j in range(sides):
            tris.append((vid(i, j), vid(i, j + 1), vid(i + 1, j + 1)))
            uvt.append((tid(i, j), tid(i, j + 1), tid(i + 1, j + 1)))
            tris.append((vid(i, j), vid(i + 1, j + 1), vid(i + 1, j)))
            uvt.append((tid(i, j), tid(i + 1, j + 1), tid(i + 1, j)))
    last = rings - 1
    for j in range(1, sides - 1):
        tris.append((vid(0, 0), vid(0, j + 1), vid(0, j)))
        uvt.append((tid(0, 0), tid(0, j + 1), tid(0, j)))
        tris.append((vid(last, 0), vid(last, j), vid(last, j + 1)))
        uvt.append((tid(last, 0), tid(last, j), tid(last, j + 1)))
    mesh = TriMesh.from_geometry(vertices, tris, uvs, uvt, material_id="branch")
    if mesh.signed_volume() < 0:
        flipped = mesh.triangles[:, ::-1]
        mesh = TriMesh.from_geometry(vertices, flipped, uvs, mesh.uv_indices[:, ::-1], material_id="branch")
    return mesh


@dataclass(frozen=True)
class LeafParams:
    """Olive leaf size in cm; ``segments`` is the number of midrib spans."""

    length: float = 6.0
    width: float = 1.2
    curl: float = 0.12
    segments: int = 6

    def validate(self) -> None:
        if not self.length > self.width > 0:
            raise ParameterError("need length > width > 0")
        if not 2 <= self.segments <= 17:
            raise ParameterError("segments must lie in [2, 17] (at most 64 triangles)")
        if self.curl < 0:
            raise ParameterError("curl must be >= 0")


def leaf_half_width(s, width: float) -> np.ndarray:
    """Lanceolate profile ``(27/4) s (1 - s)^2 * width / 2``: widest at a third of the length."""
    s = np.asarray(s, dtype=np.float64)
    return 0.5 * width * 6.75 * s * (1.0 - s) ** 2


@functools.lru_cache(maxsize=64)
def make_leaf(params: LeafParams = LeafParams(), rng_seed: int = 0) -> TriMesh:
    """Low-poly lanceolate leaf in its local frame.

    The midrib runs along +x from the petiole at the origin, the blade spans
    z, and the leaf normal is +y.  ``curl`` bends the blade out of plane
    (midrib arch plus a lateral cup); the seed perturbs width and curl by up
    to 10%.  The single-sided sheet is meant to be rendered two-sided.
    """
    params.validate()
    rng = CounterRNG.from_seed(rng_seed, "leaf")
    u = rng.random(2)
    width = params.width * (0.9 + 0.2 * u[0])
    curl = params.curl * (0.9 + 0.2 * u[1])
    n = params.segments
    s = np.linspace(0.0, 1.0, n + 1)
    hw = leaf_half_width(s, width)

    # vertex layout: base, then (left, mid, right) per interior station, then tip
    pts, uvs = [[0.0, 0.0, 0.0]], [[0.0, 0.5]]
    for k in range(1, n):
        x = params.length * s[k]
        for side in (-1.0, 0.0, 1.0):
            pts.append([x, 0.0, side * hw[k]])
            uvs.append([s[k], 0.5 + 0.5 * side])
    pts.append([params.length, 0.0, 0.0])
    uvs.append([1.0, 0.5])
    pts = np.array(pts)
    if curl > 0:
        xs, zs = pts[:, 0] / params.length, pts[:, 2] / (0.5 * width)
        pts[:, 1] = curl * params.length * (0.5 * xs * xs + 0.15 * zs * zs)

    def station(k, side):  # side: 0 left, 1 mid, 2 right
        return 1 + 3 * (k - 1) + side

    tip = len(pts) - 1
    tris = [(0, station(1, 1), station(1, 0)), (0, station(1, 2), station(1, 1))]
    for k in range(1, n - 1):
        l0, m0, r0 = station(k, 0), station(k, 1), station(k, 2)
        l1, m1, r1 = station(k + 1, 0), station(k + 1, 1), station(k + 1, 2)
        tris += [(l0, m0, m1), (l0, m1, l1), (m0, r0, r1), (m0, r1, m1)]
    last = n - 1
    tris += [(station(last, 0), station(last, 1), tip), (station(last, 1), station(last, 2), tip)]
    tris = np.array(tris)
    # orient faces so the geometric normal is +y
    v = pts[tris]
    if np.cross(v[0, 1] - v[0, 0], v[0, 2] - v[0, 0])[1] < 0:
        tris = tris[:, ::-1]
    return TriMesh.from_geometry(pts, tris, np.array(uvs), material_id="leaf")


def stratified_t(count: int, rng_seed: int) -> np.ndarray:
    """One uniform sample in each of ``count`` equal strata of [0, 1]."""
    if count < 0:
        raise ParameterError("count must be >= 0")
    u = CounterRNG.from_seed(rng_seed, "scatter", "t").random(count)
    return (np.arange(count) + u) / max(count, 1)


def scatter_on_curve(
    curve: BezierCurve,
    proto: TriMesh,
    count: int,
    orientation_jitter_deg: float,
    size_jitter: float,
    rng_seed: int,
) -> list[InstanceTransform]:
    """Place ``count`` copies of ``proto`` along the curve.

    Instances sit at stratified-random ``t`` with the prototype's local origin
    on the curve, oriented by the rotation-minimising frame there (see
    :func:`curve_frame_quats`) and then jittered by at most
    ``orientation_jitter_deg`` and ``size_jitter``.
    """
    if count < 0:
        raise ParameterError("count must be >= 0")
    if count == 0:
        return []
    if len(proto.vertices) == 0:
        raise GeometryError("prototype mesh is empty")
    ts = stratified_t(count, rng_seed)
    positions = bezier_points(curve.control_points, ts)
    canonical = curve_frame_quats(curve, ts)
    jitter, scales = sample_jitter(
        CounterRNG.from_seed(rng_seed, "scatter", "pose"), np.arange(count), orientation_jitter_deg, size_jitter
    )
    rotations = quat_multiply(jitter, canonical)
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    return [
        InstanceTransform(tuple(map(float, p)), tuple(map(float, q)), float(s))
        for p, q, s in zip(positions, rotations, scales)
    ]
