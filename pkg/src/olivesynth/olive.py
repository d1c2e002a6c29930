"""Parametric olive mesh: ellipsoid baseline, pointed tip, smoothing, scale jitter.

The olive's long axis is local +z; scene assembly reorients each instance.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mesh import TriMesh, vertex_normals
from .rng import CounterRNG


@dataclass(frozen=True)
class OliveShapeParams:
    """Shape parameters; lengths in centimetres.

    ``a``, ``b``, ``c`` are the ellipsoid semi-axes along x, y, z.
    ``target_dimensions`` is the ``(x, y, z)`` extent the finished olive is
    fitted to before scale jitter; ``None`` keeps the raw ellipsoid size.
    """

    a: float = 1.2
    b: float = 1.2
    c: float = 2.3
    tip_fraction: float = 0.25
    tip_extension: float = 0.35
    smoothing_iterations: int = 2
    smoothing_factor: float = 0.5
    lat_segments: int = 24
    lon_segments: int = 24
    scale_jitter: float = 0.0
    target_dimensions: tuple[float, float, float] | None = (1.4, 1.4, 2.5)

    def validate(self) -> None:
        if min(self.a, self.b, self.c) <= 0:
            raise ParameterError("ellipsoid semi-axes must be positive")
        if self.lat_segments < 8 or self.lon_segments < 8:
            raise ParameterError("lat_segments and lon_segments must be >= 8")
        if not 0 < self.tip_fraction < 1:
            raise ParameterError("tip_fraction must lie in (0, 1)")
        if self.tip_extension < 0:
            raise ParameterError("tip_extension must be >= 0")
        if self.smoothing_iterations < 0:
            raise ParameterError("smoothing_iterations must be >= 0")
        if not 0 <= self.smoothing_factor <= 1:
            raise ParameterError("smoothing_factor must lie in [0, 1]")
        if not 0 <= self.scale_jitter < 1:
            raise ParameterError("scale_jitter must lie in [0, 1)")
        if self.target_dimensions is not None and min(self.target_dimensions) <= 0:
            raise ParameterError("target_dimensions must be positive")


def generate_ellipsoid(params: OliveShapeParams) -> TriMesh:
    """Latitude/longitude tessellation of ``x²/a² + y²/b² + z²/c² = 1``.

    Pole caps are triangle fans; normals are the analytic surface gradient.
    UVs wrap once around in ``u`` with a seam column, ``v`` runs pole to pole.
    """
    params.validate()
    a, b, c = params.a, params.b, params.c
    nlat, nlon = params.lat_segments, params.lon_segments

    theta = np.pi * np.arange(1, nlat) / nlat
    phi = 2.0 * np.pi * np.arange(nlon) / nlon
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    ring = np.stack(
        [a * st * np.cos(phi), b * st * np.sin(phi), c * np.broadcast_to(ct, (nlat - 1, nlon))], axis=-1
    ).reshape(-1, 3)
    vertices = np.concatenate([[[0.0, 0.0, c]], ring, [[0.0, 0.0, -c]]])
    north, south = 0, len(vertices) - 1

    def vid(i, j):  # ring i in [0, nlat-2], column j wraps
        return 1 + i * nlon + (j % nlon)

    # uv grid (nlat + 1) x (nlon + 1), row 0 = north pole
    uu, vv = np.meshgrid(np.arange(nlon + 1) / nlon, 1.0 - np.arange(nlat + 1) / nlat)
    uvs = np.stack([uu, vv], axis=-1).reshape(-1, 2)

    def tid(r, j):
        return r * (nlon + 1) + j

    tris, uvt = [], []
    for j in range(nlon):
        tris.append((north, vid(0, j), vid(0, j + 1)))
        uvt.append((tid(0, j), tid(1, j), tid(1, j + 1)))
    for i in range(nlat - 2):
        for j in range(nlon):
            v00, v01, v10, v11 = vid(i, j), vid(i, j + 1), vid(i + 1, j), vid(i + 1, j + 1)
            t00, t01, t10, t11 = tid(i + 1, j), tid(i + 1, j + 1), tid(i + 2, j), tid(i + 2, j + 1)
            tris.append((v00, v10, v11))
            uvt.append((t00, t10, t11))
            tris.append((v00, v11, v01))
            uvt.append((t00, t11, t01))
    last = nlat - 2
    for j in range(nlon):
        tris.append((south, vid(last, j + 1), vid(last, j)))
        uvt.append((tid(nlat, j), tid(nlat - 1, j + 1), tid(nlat - 1, j)))

    grad = vertices / np.array([a * a, b * b, c * c])
    normals = grad / np.linalg.norm(grad, axis=1, keepdims=True)
    return TriMesh(vertices, normals, uvs, np.array(tris), np.array(uvt), material_id="olive")


def extend_tip(mesh: TriMesh, params: OliveShapeParams) -> TriMesh:
    """Pull the +z end of the ellipsoid out into a point.

    Vertices with ``z > (1 - tip_fraction) * c`` move along +z by
    ``tip_extension * s**2`` where ``s`` ramps linearly from 0 at the start
    of the tip region to 1 at the pole.
    """
    params.validate()
    if params.tip_extension == 0.0:
        return mesh
    start = (1.0 - params.tip_fraction) * params.c
    z = mesh.vertices[:, 2]
    s = np.clip((z - start) / (params.c - start), 0.0, 1.0)
    moved = mesh.vertices.copy()
    moved[:, 2] += np.where(z > start, params.tip_extension * s * s, 0.0)
    return mesh.with_vertices(moved)


def _neighbour_mean(vertices: np.ndarray, edges: np.ndarray) -> np.ndarray:
    acc = np.zeros_like(vertices)
    count = np.zeros(len(vertices))
    np.add.at(acc, edges[:, 0], vertices[edges[:, 1]])
    np.add.at(acc, edges[:, 1], vertices[edges[:, 0]])
    np.add.at(count, edges[:, 0], 1.0)
    np.add.at(count, edges[:, 1], 1.0)
    count = np.maximum(count, 1.0)
    return acc / count[:, None]


def smooth(mesh: TriMesh, iterations: int, factor: float = 0.5) -> TriMesh:
    """Uniform Laplacian smoothing: ``v += factor * (mean(neighbours) - v)``."""
    if iterations < 0:
        raise ParameterError("iterations must be >= 0")
    if iterations == 0:
        return mesh
    edges = mesh.edges()
    v = np.array(mesh.vertices)
    for _ in range(iterations):
        v = v + factor * (_neighbour_mean(v, edges) - v)
    return TriMesh(v, vertex_normals(v, mesh.triangles), mesh.uvs, mesh.triangles, mesh.uv_indices, mesh.material_id)


def fit_dimensions(mesh: TriMesh, dimensions) -> TriMesh:
    """Per-axis rescale so the bounding box has the given extent, centred on the origin."""
    lo, hi = mesh.bounds()
    centre = 0.5 * (lo + hi)
    scale = np.asarray(dimensions, dtype=np.float64) / (hi - lo)
    return mesh.with_vertices((mesh.vertices - centre) * scale)


@functools.lru_cache(maxsize=64)
def make_olive(params: OliveShapeParams = OliveShapeParams(), rng_seed: int = 0) -> TriMesh:
    """Full olive pipeline; a pure function of ``(params, rng_seed)``.

    ellipsoid -> tip extension -> smoothing -> fit to ``target_dimensions``
    -> uniform scale jitter in ``[1 - scale_jitter, 1 + scale_jitter]``.
    """
    params.validate()
    mesh = generate_ellipsoid(params)
    mesh = extend_tip(mesh, params)
    mesh = smooth(mesh, params.smoothing_iterations, params.smoothing_factor)
    if params.target_dimensions is not None:
        mesh = fit_dimensions(mesh, params.target_dimensions)
    if params.scale_jitter > 0:
        u = CounterRNG.from_seed(rng_seed, "olive-scale").uniform(np.zeros(1, dtype=np.uint64))[0]
        factor = 1.0 + params.scale_jitter * (2.0 * u - 1.0)
        mesh = TriMesh(mesh.vertices * factor, mesh.normals, mesh.uvs, mesh.triangles, mesh.uv_indices, mesh.material_id)
    return mesh
