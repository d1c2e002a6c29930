"""Procedural materials evaluated as pure functions of UV (or world) coordinates.

Everything here is vectorised: ``uv`` is any array whose last axis has
length 2, and outputs carry the same leading shape.
"""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass

import numpy as np

from .rng import CounterRNG, combine_array

BRANCH_BASE_COLOR = (0.23, 0.14, 0.08)


# --- noise -------------------------------------------------------------------

@functools.lru_cache(maxsize=4096)
def _octave_key(seed: int, octave: int) -> int:
    return CounterRNG.from_seed(seed, "value-noise", octave).key


def lattice_value(seed: int, ix, iy, octave: int = 0) -> np.ndarray:
    """Hash of integer lattice coordinates mapped to ``[0, 1)`` (53-bit)."""
    ix = np.asarray(ix).astype(np.int64).astype(np.uint64)
    iy = np.asarray(iy).astype(np.int64).astype(np.uint64)
    h = combine_array(combine_array(_octave_key(seed, octave), ix), iy)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def _value_noise_octave(seed: int, p: np.ndarray, octave: int) -> np.ndarray:
    x, y = p[..., 0], p[..., 1]
    x0, y0 = np.floor(x), np.floor(y)
    fx, fy = _smoothstep(x - x0), _smoothstep(y - y0)
    ix, iy = x0.astype(np.int64), y0.astype(np.int64)
    # all four corners in one hash call
    v00, v10, v01, v11 = lattice_value(
        seed, np.stack([ix, ix + 1, ix, ix + 1]), np.stack([iy, iy, iy + 1, iy + 1]), octave
    )
    top = v00 + fx * (v10 - v00)
    bottom = v01 + fx * (v11 - v01)
    return top + fy * (bottom - top)


def value_noise_2d(seed: int, p, octaves: int = 1) -> np.ndarray:
    """Fractal value noise in ``[0, 1]``.

    Each octave bilinearly interpolates hashed lattice values with
    smoothstep-eased weights (C0 and in fact C1 continuous); octave ``k`` has
    frequency ``2**k``, weight ``2**-k`` and its own hash key.  The weighted
    sum is normalised by the total weight, so lattice points of the first
    octave reproduce :func:`lattice_value` exactly when ``octaves == 1``.
    """
    if octaves < 1:
        raise ValueError("octaves must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    total = np.zeros(p.shape[:-1])
    norm = 0.0
    for k in range(octaves):
        amp = 0.5**k
        total = total + amp * _value_noise_octave(seed, p * (2.0**k), k)
        norm += amp
    return np.clip(total / norm, 0.0, 1.0)


# --- olive textures ------------------------------------------------------------

@dataclass(frozen=True)
class OliveTextureSpec:
    variant_id: int
    base_color: tuple[float, float, float]
    secondary_color: tuple[float, float, float]
    color_mix_noise_scale: float
    roughness: float
    bump_amplitude: float
    bump_frequency: float
    dust_intensity: float
    spot_count: int
    spot_radius: float
    distortion: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SurfaceSample:
    albedo: np.ndarray
    roughness: np.ndarray
    normal_perturbation: np.ndarray


DUST_COLOR = np.array([0.74, 0.71, 0.63])
SPOT_COLOR = np.array([0.05, 0.04, 0.04])

_PRESETS = (
    # id, base, secondary, mix scale, rough, bump amp, bump freq, dust, spots, radius, distortion
    (0, (0.36, 0.50, 0.14), (0.42, 0.56, 0.18), 3.0, 0.35, 0.010, 18.0, 0.00, 0, 0.035, 0.00),
    (1, (0.30, 0.45, 0.12), (0.46, 0.54, 0.20), 5.0, 0.45, 0.020, 24.0, 0.00, 0, 0.035, 0.05),
    (2, (0.45, 0.52, 0.20), (0.55, 0.56, 0.26), 4.0, 0.50, 0.015, 20.0, 0.35, 0, 0.035, 0.03),
    (3, (0.34, 0.48, 0.13), (0.30, 0.18, 0.22), 3.5, 0.40, 0.015, 22.0, 0.00, 0, 0.035, 0.08),
    (4, (0.38, 0.46, 0.16), (0.42, 0.22, 0.30), 6.0, 0.55, 0.025, 30.0, 0.15, 1, 0.040, 0.10),
    (5, (0.33, 0.22, 0.24), (0.22, 0.10, 0.16), 4.0, 0.30, 0.010, 16.0, 0.00, 0, 0.035, 0.04),
    (6, (0.24, 0.10, 0.16), (0.16, 0.07, 0.12), 2.5, 0.25, 0.012, 26.0, 0.00, 2, 0.030, 0.02),
    (7, (0.12, 0.06, 0.09), (0.08, 0.05, 0.07), 2.0, 0.20, 0.008, 14.0, 0.00, 0, 0.035, 0.00),
    (8, (0.10, 0.06, 0.08), (0.20, 0.12, 0.16), 5.0, 0.60, 0.030, 34.0, 0.45, 0, 0.035, 0.06),
    (9, (0.40, 0.50, 0.17), (0.35, 0.44, 0.14), 7.0, 0.50, 0.035, 40.0, 0.20, 3, 0.030, 0.12),
    (10, (0.28, 0.16, 0.20), (0.38, 0.44, 0.16), 4.5, 0.45, 0.020, 28.0, 0.25, 1, 0.045, 0.07),
)


def builtin_presets() -> list[OliveTextureSpec]:
    """Eleven olive looks: green, green/purple mixes, near-black, dusty and spotted."""
    return [
        OliveTextureSpec(
            variant_id=i, base_color=base, secondary_color=sec, color_mix_noise_scale=mix,
            roughness=rough, bump_amplitude=bamp, bump_frequency=bfreq, dust_intensity=dust,
            spot_count=spots, spot_radius=radius, distortion=dist, seed=1000 + i,
        )
        for i, base, sec, mix, rough, bamp, bfreq, dust, spots, radius, dist in _PRESETS
    ]


def spot_centers(spec: OliveTextureSpec) -> np.ndarray:
    """UV centres of the spot disks, kept away from the poles (v in [0.2, 0.8])."""
    rng = CounterRNG.from_seed(spec.seed, "spots")
    k = np.arange(spec.spot_count)
    return np.stack([rng.uniform(k, 0), rng.uniform(k, 1, 0.2, 0.8)], axis=-1)


def _smoothstep_edge(e0, e1, x):
    t = np.clip((x - e0) / (e1 - e0), 0.0, 1.0)
    return _smoothstep(t)


def _height(spec: OliveTextureSpec, uv: np.ndarray) -> np.ndarray:
    return spec.bump_amplitude * value_noise_2d(spec.seed + 3, uv * spec.bump_frequency, 2)


def sample_olive_texture(spec: OliveTextureSpec, uv) -> SurfaceSample:
    """Albedo, roughness and bump perturbation of an olive texture at ``uv``.

    Layering, in order: UV-domain warp by ``distortion``; noise-weighted mix
    of base and secondary colour (weight 0 when ``color_mix_noise_scale`` is
    0); dust lightening; spot disks (``u`` wraps around the olive).
    """
    uv = np.asarray(uv, dtype=np.float64)
    warped = uv
    if spec.distortion > 0:
        off = np.stack(
            [value_noise_2d(spec.seed + 1, uv * 6.0, 2), value_noise_2d(spec.seed + 2, uv * 6.0, 2)], axis=-1
        )
        warped = uv + spec.distortion * (off - 0.5)

    base = np.asarray(spec.base_color, dtype=np.float64)
    sec = np.asarray(spec.secondary_color, dtype=np.float64)
    if spec.color_mix_noise_scale > 0:
        w = value_noise_2d(spec.seed, warped * spec.color_mix_noise_scale, 3)
        w = _smoothstep_edge(0.25, 0.75, w)
        albedo = base + w[..., None] * (sec - base)
    else:
        albedo = np.broadcast_to(base, uv.shape[:-1] + (3,)).copy()

    if spec.dust_intensity > 0:
        d = _smoothstep_edge(0.45, 0.8, value_noise_2d(spec.seed + 4, warped * 9.0, 2))
        albedo = albedo + (spec.dust_intensity * d)[..., None] * (DUST_COLOR - albedo)

    if spec.spot_count > 0:
        dark = np.zeros(uv.shape[:-1])
        r = spec.spot_radius
        for cu, cv in spot_centers(spec):
            du = np.abs(uv[..., 0] - cu)
            du = np.minimum(du, 1.0 - du)
            dist = np.hypot(du, uv[..., 1] - cv)
            dark = np.maximum(dark, 1.0 - _smoothstep_edge(0.6 * r, r, dist))
        albedo = albedo + dark[..., None] * (SPOT_COLOR - albedo)

    rough = np.full(uv.shape[:-1], spec.roughness)
    if spec.bump_amplitude > 0:
        eps = 1e-3
        ex, ey = np.array([eps, 0.0]), np.array([0.0, eps])
        h = _height(spec, np.stack([uv + ex, uv - ex, uv + ey, uv - ey]))
        dhdu = (h[0] - h[1]) / (2 * eps)
        dhdv = (h[2] - h[3]) / (2 * eps)
        bump = np.stack([-dhdu, -dhdv, np.zeros_like(dhdu)], axis=-1) / max(spec.bump_frequency, 1.0)
    else:
        bump = np.zeros(uv.shape[:-1] + (3,))
    return SurfaceSample(np.clip(albedo, 0.0, 1.0), np.clip(rough, 0.0, 1.0), bump)


# --- other materials -----------------------------------------------------------

LEAF_DARK = np.array([0.16, 0.24, 0.09])
LEAF_LIGHT = np.array([0.33, 0.41, 0.19])
LEAF_UNDERSIDE = np.array([0.50, 0.55, 0.42])


def sample_leaf_material(uv, seed: int = 0, underside=None) -> np.ndarray:
    """Leaf albedo: mottled dark green, a paler midrib, silvery underside."""
    uv = np.asarray(uv, dtype=np.float64)
    w = value_noise_2d(seed + 11, uv * np.array([6.0, 2.0]), 2)
    albedo = LEAF_DARK + w[..., None] * (LEAF_LIGHT - LEAF_DARK)
    rib = np.clip(1.0 - np.abs(uv[..., 1] - 0.5) / 0.06, 0.0, 1.0) * 0.35
    albedo = albedo + rib[..., None] * (LEAF_LIGHT * 1.4 - albedo)
    if underside is not None:
        under = np.asarray(underside, dtype=bool)[..., None]
        albedo = np.where(under, 0.5 * albedo + 0.5 * LEAF_UNDERSIDE, albedo)
    return np.clip(albedo, 0.0, 1.0)


def sample_branch_material(uv, seed: int = 0) -> np.ndarray:
    """Dark brown base colour modulated by dark noise."""
    uv = np.asarray(uv, dtype=np.float64)
    n = value_noise_2d(seed + 21, uv * np.array([4.0, 24.0]), 3)
    return np.clip(np.asarray(BRANCH_BASE_COLOR) * (1.0 - 0.55 * n)[..., None], 0.0, 1.0)


def sky_background(xy, seed: int = 0) -> np.ndarray:
    """Sunny sky over normalised screen coords ``xy`` in [0, 1]² (y down)."""
    xy = np.asarray(xy, dtype=np.float64)
    top = np.array([0.26, 0.48, 0.86])
    horizon = np.array([0.66, 0.80, 0.95])
    col = top + xy[..., 1:2] * (horizon - top)
    cloud = _smoothstep_edge(0.62, 0.85, value_noise_2d(seed + 31, xy * np.array([3.0, 6.0]), 4))
    return np.clip(col + (0.45 * cloud)[..., None] * (1.0 - col), 0.0, 1.0)


def overcast_background(xy, seed: int = 0) -> np.ndarray:
    """Flat grey ramp, slightly brighter at the top."""
    xy = np.asarray(xy, dtype=np.float64)
    g = 0.74 - 0.10 * xy[..., 1]
    return np.stack([g, g * 1.01, g * 1.04], axis=-1).clip(0.0, 1.0)


def ground_texture(p, seed: int = 0) -> np.ndarray:
    """Soil with dry grass patches at planar world coords ``p`` (cm)."""
    p = np.asarray(p, dtype=np.float64)
    soil = np.array([0.42, 0.33, 0.22])
    dark = np.array([0.27, 0.20, 0.13])
    grass = np.array([0.50, 0.47, 0.26])
    n = value_noise_2d(seed + 41, p / 6.0, 4)
    col = dark + n[..., None] * (soil - dark)
    g = _smoothstep_edge(0.55, 0.75, value_noise_2d(seed + 42, p / 25.0, 3))
    return np.clip(col + g[..., None] * (grass - col), 0.0, 1.0)


def leaf_plane_texture(p, seed: int = 0) -> np.ndarray:
    """Dense far-canopy leaves at planar world coords ``p`` (cm)."""
    p = np.asarray(p, dtype=np.float64)
    n = value_noise_2d(seed + 51, p / 2.5, 4)
    s = value_noise_2d(seed + 52, p / 12.0, 2)
    col = 0.6 * LEAF_DARK + n[..., None] * (LEAF_LIGHT - 0.6 * LEAF_DARK)
    return np.clip(col * (0.7 + 0.5 * s)[..., None], 0.0, 1.0)


# --- baked atlases -------------------------------------------------------------

def texel_centers(width: int, height: int) -> np.ndarray:
    """UV coordinates of texel centres, shape ``(height, width, 2)``."""
    uu, vv = np.meshgrid((np.arange(width) + 0.5) / width, (np.arange(height) + 0.5) / height)
    return np.stack([uu, vv], axis=-1)


def bake(fn, width: int, height: int) -> np.ndarray:
    """Evaluate ``fn(uv)`` at every texel centre."""
    return np.asarray(fn(texel_centers(width, height)), dtype=np.float64)


def sample_atlas(atlas: np.ndarray, uv, wrap_u: bool = True) -> np.ndarray:
    """Bilinear lookup in a baked atlas; ``u`` wraps or clamps, ``v`` clamps.

    Exact at texel centres.
    """
    uv = np.asarray(uv, dtype=np.float64)
    h, w = atlas.shape[:2]
    x = uv[..., 0] * w - 0.5
    y = np.clip(uv[..., 1] * h - 0.5, 0.0, h - 1)
    if not wrap_u:
        x = np.clip(x, 0.0, w - 1)
    x0, y0 = np.floor(x), np.floor(y)
    fx, fy = (x - x0)[..., None], (y - y0)[..., None]
    x0, y0 = x0.astype(np.int64), y0.astype(np.int64)
    if wrap_u:
        x0, x1 = x0 % w, (x0 + 1) % w
    else:
        x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = atlas[y0, x0] + fx * (atlas[y0, x1] - atlas[y0, x0])
    bottom = atlas[y1, x0] + fx * (atlas[y1, x1] - atlas[y1, x0])
    return top + fy * (bottom - top)


@functools.lru_cache(maxsize=None)
def baked_olive(preset: int, resolution: int = 256) -> np.ndarray:
    """Six-channel atlas (albedo RGB, bump xyz) of a builtin olive preset; read-only."""
    sample = sample_olive_texture(builtin_presets()[preset], texel_centers(resolution, resolution))
    atlas = np.concatenate([sample.albedo, sample.normal_perturbation], axis=-1)
    atlas.flags.writeable = False
    return atlas


@functools.lru_cache(maxsize=None)
def baked_leaf(underside: bool, resolution: int = 128) -> np.ndarray:
    atlas = bake(lambda uv: sample_leaf_material(uv, 0, np.full(uv.shape[:-1], underside)), 2 * resolution, resolution)
    atlas.flags.writeable = False
    return atlas


@functools.lru_cache(maxsize=None)
def baked_branch(resolution: int = 128) -> np.ndarray:
    atlas = bake(sample_branch_material, resolution, 2 * resolution)
    atlas.flags.writeable = False
    return atlas
