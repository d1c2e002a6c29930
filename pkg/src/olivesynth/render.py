"""Deterministic CPU rasteriser producing an RGB image and a binary olive mask.

Pipeline: frustum-cull instances by bounding sphere, expand the survivors
to world-space triangles, clip against the near plane, project through an
ideal pinhole, then rasterise tile by tile with a z-buffer at
``samples_per_pixel`` stratified sub-pixel positions.  Every sample is
computed independently of every other, so the output does not depend on
tile size or on the order tiles run in.

:class:`Raycaster` is a brute-force ray/triangle reference used to check the
rasteriser's visibility and labels; it shares no projection or coverage code
with it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError
from .scene import (
    BACKGROUND,
    BRANCH_MATERIAL,
    LEAF_MATERIAL,
    N_OLIVE_VARIANTS,
    OLIVE,
    SEMANTIC_CLASSES,
    SceneGraph,
)
from .texturing import (
    baked_branch,
    baked_leaf,
    baked_olive,
    ground_texture,
    leaf_plane_texture,
    overcast_background,
    sample_atlas,
    sky_background,
)
from .transforms import quat_rotate, quat_to_matrix

try:
    from . import _kernels
except ImportError:  # numba missing: numpy path only
    _kernels = None

GAMMA = 2.2
BACKENDS = ("auto", "numpy", "numba")


def _use_kernels(backend: str) -> bool:
    return backend == "numba" or (backend == "auto" and _kernels is not None)


@dataclass(frozen=True)
class RenderConfig:
    width: int = 256
    height: int = 256
    samples_per_pixel: int = 4
    tile_size: int = 64
    mask_coverage_threshold: float = 0.5
    shadows: bool = False
    near: float = 0.5
    workers: int = 1
    backend: str = "auto"  # "auto" | "numpy" | "numba"; identical output

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError("raster dimensions must be positive")
        if self.samples_per_pixel < 1:
            raise ConfigError("samples_per_pixel must be >= 1")
        if self.tile_size < 1:
            raise ConfigError("tile_size must be >= 1")
        if not 0.0 < self.mask_coverage_threshold <= 1.0:
            raise ConfigError("mask_coverage_threshold must lie in (0, 1]")
        if self.near <= 0:
            raise ConfigError("near must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.backend == "numba" and _kernels is None:
            raise ConfigError("backend 'numba' requested but numba is not installed")


@dataclass
class ImageMaskPair:
    image: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray  # (H, W) uint8, values in {0, 255}
    meta: dict = field(default_factory=dict)


def sample_offsets(spp: int) -> np.ndarray:
    """Stratified sub-pixel positions in [0, 1)², shape ``(spp, 2)``.

    A single sample sits at the pixel centre; perfect squares use a regular
    grid; other counts use a half-cell-shifted Hammersley set (one sample per
    row and column stratum).
    """
    if spp < 1:
        raise ParameterError("spp must be >= 1")
    k = int(round(np.sqrt(spp)))
    if k * k == spp:
        g = (np.arange(k) + 0.5) / k
        xs, ys = np.meshgrid(g, g)
        return np.stack([xs.ravel(), ys.ravel()], axis=-1)
    i = np.arange(spp)
    radical = np.zeros(spp)
    base, n = 0.5, i.copy()
    while np.any(n):
        radical += base * (n & 1)
        n >>= 1
        base *= 0.5
    return np.stack([(i + 0.5) / spp, (radical + 0.5 / spp) % 1.0], axis=-1)


# --- camera ----------------------------------------------------------------------

@dataclass(frozen=True)
class _Projection:
    position: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    up: np.ndarray
    focal: float
    width: int
    height: int

    @classmethod
    def from_scene(cls, scene: SceneGraph, width: int, height: int) -> "_Projection":
        scene.camera.validate()
        forward, right, up = scene.camera.basis()
        focal = 0.5 * height / np.tan(np.deg2rad(scene.camera.vertical_fov) / 2.0)
        return cls(np.asarray(scene.camera.position, dtype=np.float64), forward, right, up, focal, width, height)

    def ray_directions(self, px, py) -> np.ndarray:
        """Unnormalised directions whose forward component is 1 (so t = eye depth)."""
        a = (np.asarray(px) - 0.5 * self.width) / self.focal
        b = (np.asarray(py) - 0.5 * self.height) / self.focal
        return self.forward + a[..., None] * self.right - b[..., None] * self.up


# --- geometry ------------------------------------------------------------------------------

@dataclass
class _RasterTriangles:
    """Screen-space triangles; surface attributes are fetched from the source mesh later."""

    sx: np.ndarray  # (T, 3) raster x
    sy: np.ndarray  # (T, 3) raster y
    iz: np.ndarray  # (T, 3) inverse eye depth
    instance: np.ndarray  # (T,) row in scene.instances
    local: np.ndarray  # (T,) triangle index within that instance's mesh
    corner_map: np.ndarray | None = None  # (T, 3, 3) raster corner -> weights on source corners


def _cull_instances(scene: SceneGraph, proj: _Projection, near: float, margin_px: float = 1.0) -> np.ndarray:
    """Rows of instances whose bounding sphere can reach the view frustum."""
    inst = scene.instances
    if len(inst) == 0:
        return np.zeros(0, np.int64)
    radii = np.array([m.bounding_radius for m in scene.meshes])[inst.mesh] * inst.scale
    rel = inst.translation - proj.position
    d = rel @ proj.forward
    x = rel @ proj.right
    y = rel @ proj.up
    keep = d + radii >= near
    tan_h = (0.5 * proj.width + margin_px) / proj.focal
    tan_v = (0.5 * proj.height + margin_px) / proj.focal
    sh, sv = np.sqrt(1.0 + tan_h**2), np.sqrt(1.0 + tan_v**2)
    keep &= x - tan_h * d <= radii * sh
    keep &= -x - tan_h * d <= radii * sh
    keep &= y - tan_v * d <= radii * sv
    keep &= -y - tan_v * d <= radii * sv
    return np.flatnonzero(keep)


def _instance_vertices(scene: SceneGraph, rows: np.ndarray, mesh) -> np.ndarray:
    """World-space vertices of ``mesh`` for each instance row, shape ``(k, V, 3)``."""
    inst = scene.instances
    rot = quat_to_matrix(inst.rotation[rows]) * inst.scale[rows, None, None]
    return np.matmul(mesh.vertices, rot.transpose(0, 2, 1)) + inst.translation[rows, None, :]


def _world_triangles(scene: SceneGraph, rows: np.ndarray) -> np.ndarray:
    parts = [np.zeros((0, 3, 3))]
    mesh_ids = scene.instances.mesh[rows]
    for mesh_index in np.unique(mesh_ids):
        mesh = scene.meshes[mesh_index]
        verts = _instance_vertices(scene, rows[mesh_ids == mesh_index], mesh)
        parts.append(verts[:, mesh.triangles].reshape(-1, 3, 3))
    return np.concatenate(parts)


def _min3(a: np.ndarray) -> np.ndarray:
    return np.minimum(np.minimum(a[..., 0], a[..., 1]), a[..., 2])


def _max3(a: np.ndarray) -> np.ndarray:
    return np.maximum(np.maximum(a[..., 0], a[..., 1]), a[..., 2])


def _has_sample(lo, hi, offsets_1d, limit) -> np.ndarray:
    """True where ``[lo, hi]`` contains ``k + o`` for an integer ``k`` in ``[0, limit)``."""
    ok = np.zeros(lo.shape, dtype=bool)
    for o in offsets_1d:
        ok |= np.maximum(np.ceil(lo - o), 0) <= np.minimum(np.floor(hi - o), limit - 1)
    return ok


def _clip_triangle(eye: np.ndarray, near: float):
    """Clip one triangle (eye coords ``(3, 3)`` as right, up, depth) to ``depth >= near``.

    Yields ``(eye_corners, weights)`` per output triangle, where ``weights``
    expresses each new corner in the source triangle's corners.
    """
    corners = [(eye[c], np.eye(3)[c]) for c in range(3)]
    poly = []
    for c in range(3):
        (p, w), (q, u) = corners[c], corners[(c + 1) % 3]
        if p[2] >= near:
            poly.append((p, w))
        if (p[2] >= near) != (q[2] >= near):
            s = (near - p[2]) / (q[2] - p[2])
            pt = p + s * (q - p)
            pt[2] = near
            poly.append((pt, w + s * (u - w)))
    for j in range(1, len(poly) - 1):
        tri = (poly[0], poly[j], poly[j + 1])
        yield np.array([t[0] for t in tri]), np.array([t[1] for t in tri])


def _project(scene: SceneGraph, proj: _Projection, near: float, offsets: np.ndarray,
             use_kernels: bool = False) -> _RasterTriangles:
    """Project every potentially visible triangle, dropping those that cover no sample."""
    W, H, f = proj.width, proj.height, proj.focal
    xs, ys = np.unique(offsets[:, 0]), np.unique(offsets[:, 1])
    rows = _cull_instances(scene, proj, near)
    mesh_ids = scene.instances.mesh[rows]
    parts, clipped = [], []
    for mesh_index in np.unique(mesh_ids):
        sel = rows[mesh_ids == mesh_index]
        mesh = scene.meshes[mesh_index]
        rel = _instance_vertices(scene, sel, mesh) - proj.position
        d = rel @ proj.forward
        xe, ye = rel @ proj.right, rel @ proj.up
        dv = np.maximum(d, near)
        sxv = 0.5 * W + f * xe / dv
        syv = 0.5 * H - f * ye / dv
        if use_kernels:
            size = d.shape[0] * len(mesh.triangles)
            k_idx, t_idx = np.empty(size, np.int64), np.empty(size, np.int64)
            pk, pt = np.empty(size, np.int64), np.empty(size, np.int64)
            n, m = _kernels.cull_triangles(sxv, syv, d, mesh.triangles, near, W, H, xs, ys, k_idx, t_idx, pk, pt)
            k_idx, t_idx, straddling = k_idx[:n], t_idx[:n], zip(pk[:m], pt[:m])
        else:
            dt = d[:, mesh.triangles]
            whole = _min3(dt) >= near
            k_idx, t_idx = np.nonzero(whole)
            vi = mesh.triangles[t_idx]
            sx, sy = sxv[k_idx[:, None], vi], syv[k_idx[:, None], vi]
            keep = _has_sample(_min3(sx), _max3(sx), xs, W) & _has_sample(_min3(sy), _max3(sy), ys, H)
            k_idx, t_idx = k_idx[keep], t_idx[keep]
            straddling = zip(*np.nonzero(~whole & (_max3(dt) >= near)))
        vi = mesh.triangles[t_idx]
        kk = k_idx[:, None]
        parts.append((sxv[kk, vi], syv[kk, vi], 1.0 / d[kk, vi], sel[k_idx], t_idx))
        for k, t in straddling:
            v = mesh.triangles[t]
            eye = np.stack([xe[k, v], ye[k, v], d[k, v]], axis=-1)
            for ce, cw in _clip_triangle(eye, near):
                clipped.append((0.5 * W + f * ce[:, 0] / ce[:, 2], 0.5 * H - f * ce[:, 1] / ce[:, 2],
                                1.0 / ce[:, 2], sel[k], t, cw))
    if not parts:
        empty = np.zeros((0, 3))
        return _RasterTriangles(empty, empty, empty, np.zeros(0, np.int64), np.zeros(0, np.int64))
    sx, sy, iz, inst, local = (np.concatenate([p[i] for p in parts]) for i in range(5))
    if not clipped:
        return _RasterTriangles(sx, sy, iz, inst, local)
    n = len(sx)
    return _RasterTriangles(
        np.concatenate([sx, [c[0] for c in clipped]]),
        np.concatenate([sy, [c[1] for c in clipped]]),
        np.concatenate([iz, [c[2] for c in clipped]]),
        np.concatenate([inst, [c[3] for c in clipped]]).astype(np.int64),
        np.concatenate([local, [c[4] for c in clipped]]).astype(np.int64),
        np.concatenate([np.broadcast_to(np.eye(3), (n, 3, 3)), [c[5] for c in clipped]]),
    )


# --- rasterisation -------------------------------------------------------------------------

@dataclass
class _Fragments:
    """Nearest triangle per sample (-1 where nothing was hit) with barycentrics."""

    tri: np.ndarray  # (S, H, W) int64
    bary: np.ndarray  # (S, H, W, 3) screen-space
    inv_depth: np.ndarray  # (S, H, W)


def _raster_tile(sx, sy, iz, bbox, x0, x1, y0, y1, ox, oy, width):
    """Nearest triangle at each sample of one tile for sub-pixel offset ``(ox, oy)``.

    Coverage uses inclusive edge tests on both windings (no culling); depth
    ties go to the lowest triangle index.  Returns flat pixel keys, triangle
    ids, screen-space barycentrics and interpolated inverse depth.
    """
    xmin, xmax, ymin, ymax = bbox
    cand = np.flatnonzero((xmax >= x0 + ox) & (xmin <= x1 - 1 + ox) & (ymax >= y0 + oy) & (ymin <= y1 - 1 + oy))
    if len(cand) == 0:
        return None
    c_lo = np.maximum(np.ceil(xmin[cand] - ox), x0).astype(np.int64)
    c_hi = np.minimum(np.floor(xmax[cand] - ox), x1 - 1).astype(np.int64)
    r_lo = np.maximum(np.ceil(ymin[cand] - oy), y0).astype(np.int64)
    r_hi = np.minimum(np.floor(ymax[cand] - oy), y1 - 1).astype(np.int64)
    nx = np.maximum(c_hi - c_lo + 1, 0)
    ny = np.maximum(r_hi - r_lo + 1, 0)
    counts = nx * ny
    total = int(counts.sum())
    if total == 0:
        return None
    starts = np.cumsum(counts) - counts
    tri = np.repeat(cand, counts)
    local = np.arange(total) - np.repeat(starts, counts)
    nx_r = np.repeat(nx, counts)
    col = np.repeat(c_lo, counts) + local % nx_r
    row = np.repeat(r_lo, counts) + local // nx_r
    px = col + ox
    py = row + oy

    ax, bx, cx = sx[tri, 0], sx[tri, 1], sx[tri, 2]
    ay, by, cy = sy[tri, 0], sy[tri, 1], sy[tri, 2]
    w0 = (bx - px) * (cy - py) - (by - py) * (cx - px)
    w1 = (cx - px) * (ay - py) - (cy - py) * (ax - px)
    w2 = (ax - px) * (by - py) - (ay - py) * (bx - px)
    area = w0 + w1 + w2
    inside = (((w0 >= 0) & (w1 >= 0) & (w2 >= 0)) | ((w0 <= 0) & (w1 <= 0) & (w2 <= 0))) & (area != 0)
    if not inside.any():
        return None
    tri, col, row = tri[inside], col[inside], row[inside]
    b = np.stack([w0[inside], w1[inside], w2[inside]], axis=-1) / area[inside, None]
    # explicit left-to-right sum, matching the compiled kernel bit for bit
    inv_d = b[:, 0] * iz[tri, 0] + b[:, 1] * iz[tri, 1] + b[:, 2] * iz[tri, 2]
    key = row * width + col
    order = np.lexsort((tri, -inv_d, key))
    key, tri, b, inv_d = key[order], tri[order], b[order], inv_d[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    return key[first], tri[first], b[first], inv_d[first]


def _rasterize(sx, sy, iz, width, height, offsets, tile_size, workers, use_kernels=False) -> _Fragments:
    spp = len(offsets)
    if use_kernels:
        tri_map, bary, inv_depth = _kernels.empty_buffers(spp, height, width)
        if len(sx):
            _kernels.rasterize(np.ascontiguousarray(sx), np.ascontiguousarray(sy), np.ascontiguousarray(iz),
                               width, height, np.ascontiguousarray(offsets), tri_map, bary, inv_depth)
        inv_depth[tri_map < 0] = 0.0
        return _Fragments(tri_map, bary, inv_depth)
    tri_map = np.full((spp, height * width), -1, dtype=np.int64)
    bary = np.zeros((spp, height * width, 3))
    inv_depth = np.zeros((spp, height * width))
    if len(sx):
        bbox = (_min3(sx), _max3(sx), _min3(sy), _max3(sy))
        jobs = [
            (s, x0, min(x0 + tile_size, width), y0, min(y0 + tile_size, height))
            for s in range(spp)
            for y0 in range(0, height, tile_size)
            for x0 in range(0, width, tile_size)
        ]

        def run(job):
            s, x0, x1, y0, y1 = job
            return s, _raster_tile(sx, sy, iz, bbox, x0, x1, y0, y1, offsets[s, 0], offsets[s, 1], width)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(run, jobs))
        else:
            results = [run(j) for j in jobs]
        # tiles own disjoint pixels, so write order is irrelevant
        for s, res in results:
            if res is None:
                continue
            key, tri, b, inv_d = res
            tri_map[s, key] = tri
            bary[s, key] = b
            inv_depth[s, key] = inv_d
    return _Fragments(
        tri_map.reshape(spp, height, width), bary.reshape(spp, height, width, 3), inv_depth.reshape(spp, height, width)
    )


# --- shading -------------------------------------------------------------------------------

@dataclass
class _Surface:
    position: np.ndarray
    normal: np.ndarray  # interpolated shading normal, unit
    geometric: np.ndarray  # unnormalised face normal
    uv: np.ndarray


def _surface_attributes(scene: SceneGraph, rows: np.ndarray, local: np.ndarray, weights: np.ndarray) -> _Surface:
    """Interpolate mesh attributes at source-triangle ``weights`` and move them to world space."""
    inst = scene.instances
    n = len(rows)
    out = _Surface(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, 2)))
    mesh_ids = inst.mesh[rows]
    for mesh_index in np.unique(mesh_ids):
        r = np.flatnonzero(mesh_ids == mesh_index)
        mesh = scene.meshes[mesh_index]
        tri = mesh.triangles[local[r]]
        w = weights[r]
        rot = quat_to_matrix(inst.rotation[rows[r]])
        corners = mesh.vertices[tri]
        p = np.matmul(w[:, None, :], corners)[:, 0]
        world = np.matmul(rot, p[:, :, None])[:, :, 0]
        out.position[r] = world * inst.scale[rows[r], None] + inst.translation[rows[r]]
        nl = np.matmul(w[:, None, :], mesh.normals[tri])[:, 0]
        out.normal[r] = np.matmul(rot, nl[:, :, None])[:, :, 0]
        face = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        out.geometric[r] = np.matmul(rot, face[:, :, None])[:, :, 0]
        out.uv[r] = np.matmul(w[:, None, :], mesh.uvs[mesh.uv_indices[local[r]]])[:, 0]
    out.normal /= np.maximum(np.linalg.norm(out.normal, axis=1, keepdims=True), 1e-12)
    return out


def _light_terms(scene: SceneGraph):
    ambient = np.zeros(3)
    sun_dir, sun = None, np.zeros(3)
    for light in scene.lights:
        if light.kind == "ambient":
            ambient = ambient + np.asarray(light.color) * light.intensity
        elif light.kind == "directional":
            sun_dir = np.asarray(light.direction, dtype=np.float64)
            sun_dir = sun_dir / np.linalg.norm(sun_dir)
            sun = sun + np.asarray(light.color) * light.intensity
    return ambient, sun_dir, sun


def _instance_tint(rows: np.ndarray, spread: float) -> np.ndarray:
    """Deterministic per-instance brightness factor in ``[1 - spread, 1 + spread)``."""
    return 1.0 - spread + 2.0 * spread * ((rows * 0.7548776662) % 1.0)


def _shade_surfaces(scene, surf: _Surface, rows: np.ndarray, proj, shadow_fn):
    view = proj.position - surf.position
    backface = np.einsum("ij,ij->i", surf.geometric, view) < 0
    nrm = np.where(backface[:, None], -surf.normal, surf.normal)
    material = scene.instances.material[rows]
    albedo = np.zeros((len(rows), 3))

    for variant in np.unique(material[material < N_OLIVE_VARIANTS]):
        r = np.flatnonzero(material == variant)
        texel = sample_atlas(baked_olive(int(variant)), surf.uv[r])
        albedo[r] = texel[:, :3]
        rot = quat_to_matrix(scene.instances.rotation[rows[r]])
        bump = np.matmul(rot, texel[:, 3:, None])[:, :, 0]
        bumped = nrm[r] + np.where(backface[r, None], -bump, bump)
        nrm[r] = bumped / np.maximum(np.linalg.norm(bumped, axis=1, keepdims=True), 1e-12)
    r = np.flatnonzero(material == LEAF_MATERIAL)
    if len(r):
        for side in (False, True):
            rs = r[backface[r] == side]
            tint = _instance_tint(rows[rs], 0.15)[:, None]
            albedo[rs] = sample_atlas(baked_leaf(side), surf.uv[rs], wrap_u=False) * tint
    r = np.flatnonzero(material == BRANCH_MATERIAL)
    if len(r):
        albedo[r] = sample_atlas(baked_branch(), surf.uv[r], wrap_u=False) * _instance_tint(rows[r], 0.1)[:, None]

    # keep the shading normal on the viewer's side
    away = np.einsum("ij,ij->i", nrm, view) < 0
    nrm = np.where(away[:, None], -nrm, nrm)
    return _lit(scene, np.clip(albedo, 0.0, 1.0), nrm, surf.position, shadow_fn)


def _lit(scene, albedo, normal, pos, shadow_fn):
    ambient, sun_dir, sun = _light_terms(scene)
    light = np.broadcast_to(ambient, albedo.shape).copy()
    if sun_dir is not None:
        lambert = np.maximum(0.0, normal @ sun_dir)
        if shadow_fn is not None:
            lambert = lambert * shadow_fn(pos)
        light += lambert[:, None] * sun
    return np.clip(albedo * light, 0.0, 1.0)


def _background_colors(scene, proj, px, py, plane_t, shadow_fn):
    bg = scene.background
    xy = np.stack([px / proj.width, py / proj.height], axis=-1)
    out = np.zeros((len(px), 3))
    if bg.has_plane:
        hit = np.isfinite(plane_t)
        if hit.any():
            pts = proj.position + plane_t[hit, None] * proj.ray_directions(px[hit], py[hit])
            rel = pts - np.asarray(bg.plane_point)
            uvp = np.stack([rel @ np.asarray(bg.plane_axes[0]), rel @ np.asarray(bg.plane_axes[1])], axis=-1)
            tex = ground_texture if bg.kind == "ground_plane" else leaf_plane_texture
            normal = np.broadcast_to(np.asarray(bg.plane_normal, dtype=np.float64), pts.shape)
            out[hit] = _lit(scene, tex(uvp, bg.seed), normal, pts, shadow_fn)
        if (~hit).any():
            out[~hit] = overcast_background(xy[~hit], bg.seed)
    elif bg.kind == "sunny_sky":
        out[:] = sky_background(xy, bg.seed)
    else:
        out[:] = overcast_background(xy, bg.seed)
    return out


def _plane_depth(scene, proj, px, py, near) -> np.ndarray:
    """Eye depth of the background plane along each sample ray (inf if none)."""
    bg = scene.background
    t = np.full(np.shape(px), np.inf)
    if not bg.has_plane:
        return t
    n = np.asarray(bg.plane_normal, dtype=np.float64)
    denom = proj.ray_directions(px, py) @ n
    num = (np.asarray(bg.plane_point) - proj.position) @ n
    safe = np.where(denom != 0, denom, 1.0)
    cand = num / safe
    ok = (denom != 0) & (cand >= near)
    t[ok] = cand[ok]
    return t


def encode_srgb8(linear: np.ndarray) -> np.ndarray:
    """Gamma-2.2 encode, then round half up to 8 bits."""
    v = np.clip(linear, 0.0, 1.0) ** (1.0 / GAMMA) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


# --- shadows -------------------------------------------------------------------------------

def _light_axes(sun_dir: np.ndarray):
    w = -sun_dir  # direction light travels
    hint = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    a = np.cross(w, hint)
    a /= np.linalg.norm(a)
    return a, np.cross(a, w), w


class _ShadowMap:
    """Orthographic depth map seen from the sun, framed around the receiver points."""

    def __init__(self, tris: np.ndarray, sun_dir: np.ndarray, receivers: np.ndarray, resolution: int,
                 use_kernels: bool = False):
        a, b, w = self.axes = _light_axes(sun_dir)
        ru, rv = receivers @ a, receivers @ b
        self.u0, self.v0 = ru.min() - 1.0, rv.min() - 1.0
        span = max(ru.max() - self.u0, rv.max() - self.v0) + 1.0
        self.res = resolution
        self.scale = resolution / span
        tu = (tris @ a - self.u0) * self.scale
        tv = (tris @ b - self.v0) * self.scale
        # depth along the light is affine in (u, v); the nearest blocker has the largest -depth
        frags = _rasterize(tu, tv, -(tris @ w), resolution, resolution, np.array([[0.5, 0.5]]), 64, 1,
                           use_kernels)
        self.depth = np.where(frags.tri[0] >= 0, -frags.inv_depth[0], np.inf)
        self.bias = 2.0 / self.scale + 0.05

    def __call__(self, points: np.ndarray) -> np.ndarray:
        a, b, w = self.axes
        u = np.floor((points @ a - self.u0) * self.scale).astype(np.int64)
        v = np.floor((points @ b - self.v0) * self.scale).astype(np.int64)
        inside = (u >= 0) & (u < self.res) & (v >= 0) & (v < self.res)
        out = np.ones(len(points))
        blocker = self.depth[v[inside], u[inside]]
        out[inside] = np.where(blocker < points[inside] @ w - self.bias, 0.0, 1.0)
        return out


def _shadow_casters(scene: SceneGraph, sun_dir: np.ndarray, receivers: np.ndarray) -> np.ndarray:
    """Instances whose bounding sphere overlaps the receivers' footprint seen from the sun."""
    inst = scene.instances
    if len(inst) == 0:
        return np.zeros(0, np.int64)
    a, b, _ = _light_axes(sun_dir)
    radii = np.array([m.bounding_radius for m in scene.meshes])[inst.mesh] * inst.scale
    cu, cv = inst.translation @ a, inst.translation @ b
    ru, rv = receivers @ a, receivers @ b
    keep = (cu + radii >= ru.min()) & (cu - radii <= ru.max()) & (cv + radii >= rv.min()) & (cv - radii <= rv.max())
    return np.flatnonzero(keep)


# --- entry points --------------------------------------------------------------------------

@dataclass
class _Visibility:
    proj: _Projection
    tris: _RasterTriangles
    frags: _Fragments
    hit: np.ndarray  # (S, H, W) geometry in front of any background plane
    px: np.ndarray
    py: np.ndarray
    plane_t: np.ndarray
    classes: np.ndarray  # (S, H, W) semantic class ids


def _visibility(scene: SceneGraph, config: RenderConfig) -> _Visibility:
    config.validate()
    proj = _Projection.from_scene(scene, config.width, config.height)
    offsets = sample_offsets(config.samples_per_pixel)
    fast = _use_kernels(config.backend)
    tris = _project(scene, proj, config.near, offsets, fast)
    frags = _rasterize(tris.sx, tris.sy, tris.iz, config.width, config.height, offsets,
                       config.tile_size, config.workers, fast)
    shape = frags.tri.shape
    px = np.broadcast_to(np.arange(config.width)[None, None, :] + offsets[:, 0, None, None], shape)
    py = np.broadcast_to(np.arange(config.height)[None, :, None] + offsets[:, 1, None, None], shape)
    plane_t = _plane_depth(scene, proj, px, py, config.near)
    hit = frags.tri >= 0
    finite = np.isfinite(plane_t)
    behind = np.zeros_like(hit)
    behind[finite] = frags.inv_depth[finite] * plane_t[finite] < 1.0
    hit &= ~behind
    classes = np.full(shape, BACKGROUND, dtype=np.int64)
    classes[hit] = scene.instances.semantic_class[tris.instance[frags.tri[hit]]]
    return _Visibility(proj, tris, frags, hit, px, py, plane_t, classes)


def rasterize_classes(scene: SceneGraph, config: RenderConfig = RenderConfig()) -> np.ndarray:
    """Semantic class id of the nearest surface at every sample, shape ``(spp, H, W)``."""
    return _visibility(scene, config).classes


def render(scene: SceneGraph, config: RenderConfig = RenderConfig()) -> ImageMaskPair:
    """Rasterise ``scene`` into an 8-bit RGB image and an olive mask.

    A mask pixel is 255 iff the fraction of its samples whose nearest
    visible surface is an olive reaches ``mask_coverage_threshold``.
    """
    vis = _visibility(scene, config)
    proj, tris, frags = vis.proj, vis.tris, vis.frags
    hit_flat = np.flatnonzero(vis.hit.ravel())
    miss_flat = np.flatnonzero(~vis.hit.ravel())
    tri_idx = frags.tri.ravel()[hit_flat]
    # screen-space -> perspective-correct weights on the raster triangle, then on its source triangle
    weights = frags.bary.reshape(-1, 3)[hit_flat] * tris.iz[tri_idx] / frags.inv_depth.ravel()[hit_flat, None]
    if tris.corner_map is not None:
        weights = np.einsum("nc,ncj->nj", weights, tris.corner_map[tri_idx])
    rows = tris.instance[tri_idx]
    surf = _surface_attributes(scene, rows, tris.local[tri_idx], weights)
    px, py, plane_t = vis.px.ravel()[miss_flat], vis.py.ravel()[miss_flat], vis.plane_t.ravel()[miss_flat]

    shadow_fn = None
    _, sun_dir, _ = _light_terms(scene)
    if config.shadows and sun_dir is not None:
        ok = np.isfinite(plane_t)
        receivers = np.concatenate(
            [surf.position, proj.position + plane_t[ok, None] * proj.ray_directions(px[ok], py[ok])]
        )
        if len(receivers):
            casters = _world_triangles(scene, _shadow_casters(scene, sun_dir, receivers))
            shadow_fn = _ShadowMap(casters, sun_dir, receivers, 4 * max(config.width, config.height),
                                   _use_kernels(config.backend))

    colors = np.zeros((vis.hit.size, 3))
    if len(hit_flat):
        colors[hit_flat] = _shade_surfaces(scene, surf, rows, proj, shadow_fn)
    if len(miss_flat):
        colors[miss_flat] = _background_colors(scene, proj, px, py, plane_t, shadow_fn)
    linear = colors.reshape(vis.hit.shape + (3,)).mean(axis=0)
    coverage = (vis.classes == OLIVE).sum(axis=0) / config.samples_per_pixel
    mask = np.where(coverage >= config.mask_coverage_threshold, 255, 0).astype(np.uint8)
    return ImageMaskPair(encode_srgb8(linear), mask, {"scene_seed": int(scene.seed)})


# --- reference raycaster -----------------------------------------------------------------

class Raycaster:
    """Brute-force nearest-hit classifier used as a test oracle.

    Instance vertices are placed with quaternion rotation (not matrices), and
    every triangle of every instance whose bounding sphere the ray touches is
    intersected with the Moller-Trumbore test.  A hit counts if its eye
    depth is at least ``near``, matching the rasteriser's near plane.
    """

    def __init__(self, scene: SceneGraph, width: int, height: int, near: float = RenderConfig.near):
        self.scene = scene
        self.width, self.height, self.near = width, height, near
        cam = scene.camera
        cam.validate()
        self.origin = np.asarray(cam.position, dtype=np.float64)
        self.forward, self.right, self.up = cam.basis()
        self.focal = 0.5 * height / np.tan(np.deg2rad(cam.vertical_fov) / 2.0)
        inst = scene.instances
        self.centres = inst.translation
        self.radii = np.array([m.bounding_radius for m in scene.meshes])[inst.mesh] * inst.scale
        self._cache: dict[int, np.ndarray] = {}

    def _world_tris(self, i: int) -> np.ndarray:
        if i not in self._cache:
            inst = self.scene.instances
            mesh = self.scene.meshes[inst.mesh[i]]
            verts = inst.translation[i] + inst.scale[i] * quat_rotate(inst.rotation[i], mesh.vertices)
            self._cache[i] = verts[mesh.triangles]
        return self._cache[i]

    def ray(self, col: float, row: float) -> tuple[np.ndarray, np.ndarray]:
        """Ray through continuous raster position ``(col, row)``; ``dir . forward == 1``."""
        a = (col - 0.5 * self.width) / self.focal
        b = (row - 0.5 * self.height) / self.focal
        return self.origin, self.forward + a * self.right - b * self.up

    def nearest(self, col: float, row: float) -> tuple[int, float]:
        """(semantic class id, eye depth) of the nearest surface on the ray."""
        o, d = self.ray(col, row)
        best_t, best_cls = np.inf, BACKGROUND
        if len(self.radii):
            oc = self.centres - o
            dd = d @ d
            tc = (oc @ d) / dd
            dist2 = np.einsum("ij,ij->i", oc, oc) - tc * tc * dd
            touched = np.flatnonzero(dist2 <= self.radii**2)
            if len(touched):
                parts = [self._world_tris(int(i)) for i in touched]
                tri = np.concatenate(parts)
                owner = np.repeat(touched, [len(p) for p in parts])
                e1 = tri[:, 1] - tri[:, 0]
                e2 = tri[:, 2] - tri[:, 0]
                pv = np.cross(d, e2)
                det = np.einsum("ij,ij->i", e1, pv)
                ok = det != 0
                inv = 1.0 / np.where(ok, det, 1.0)
                tv = o - tri[:, 0]
                u = np.einsum("ij,ij->i", tv, pv) * inv
                qv = np.cross(tv, e1)
                v = (qv @ d) * inv
                t = np.einsum("ij,ij->i", e2, qv) * inv
                hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= self.near)
                if hit.any():
                    k = np.flatnonzero(hit)[np.argmin(t[hit])]
                    best_t, best_cls = float(t[k]), int(self.scene.instances.semantic_class[owner[k]])
        bg = self.scene.background
        if bg.has_plane:
            n = np.asarray(bg.plane_normal)
            denom = d @ n
            if denom != 0:
                tp = ((np.asarray(bg.plane_point) - o) @ n) / denom
                if self.near <= tp < best_t:
                    best_t, best_cls = tp, BACKGROUND
        return best_cls, best_t

    def classify(self, pixel) -> str:
        col, row = pixel
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise ParameterError(f"pixel {pixel} outside the {self.width}x{self.height} raster")
        return SEMANTIC_CLASSES[self.nearest(col + 0.5, row + 0.5)[0]]

    def class_map(self) -> np.ndarray:
        out = np.empty((self.height, self.width), dtype=object)
        for r in range(self.height):
            for c in range(self.width):
                out[r, c] = self.classify((c, r))
        return out


def raycast_reference(scene: SceneGraph, pixel, width: int | None = None, height: int | None = None) -> str:
    """Semantic class of the nearest surface through the centre of ``pixel = (col, row)``.

    The raster defaults to the camera's image size.
    """
    width = scene.camera.image_width if width is None else width
    height = scene.camera.image_height if height is None else height
    return Raycaster(scene, width, height).classify(pixel)
