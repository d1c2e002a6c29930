"""Scene configuration and assembly of stacked scatter layers.

Layers are parallel planes perpendicular to the camera axis.  Geometry is
built in a *layer frame* anchored at the camera's look-at point: local +x is
camera right, +y camera up, +z points back toward the camera.  Layer slots
are stacked away from the camera in this order::

    occluder leaf layer, olive layer, branch 0, leaf, branch 1, leaf, ...

followed by the background plane one spacing behind the last layer.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .branch import BezierCurve, LeafParams, bernstein_weights, make_leaf, tessellate_branch
from .errors import ConfigError
from .mesh import TriMesh
from .olive import OliveShapeParams, make_olive
from .rng import CounterRNG
from .transforms import (
    InstanceTransform,
    frame_to_quat,
    matrix_to_quat,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    sample_jitter,
)

BACKGROUNDS = ("sunny_sky", "overcast", "ground_plane", "leaf_plane")
LIGHTINGS = ("day", "evening")
SEMANTIC_CLASSES = ("background", "olive", "leaf", "branch")
BACKGROUND, OLIVE, LEAF, BRANCH = range(4)

N_OLIVE_VARIANTS = 11
N_LEAF_PROTOTYPES = 4
N_BRANCH_PROTOTYPES = 6
MATERIALS = tuple(f"olive/{k}" for k in range(N_OLIVE_VARIANTS)) + ("leaf", "branch")
LEAF_MATERIAL = MATERIALS.index("leaf")
BRANCH_MATERIAL = MATERIALS.index("branch")


@dataclass(frozen=True)
class CameraSpec:
    """Ideal pinhole camera; lengths in cm, field of view in degrees."""

    position: tuple[float, float, float] = (0.0, 0.0, 100.0)
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    vertical_fov: float = 20.0
    image_width: int = 256
    image_height: int = 256

    def validate(self) -> None:
        if not 0.0 < self.vertical_fov < 180.0:
            raise ConfigError("vertical_fov must lie in (0, 180) degrees")
        if self.image_width < 1 or self.image_height < 1:
            raise ConfigError("image dimensions must be positive")
        if np.allclose(self.position, self.look_at):
            raise ConfigError("camera position and look_at coincide")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit ``(forward, right, up)`` vectors; world +y is the up hint."""
        forward = np.asarray(self.look_at, dtype=np.float64) - np.asarray(self.position, dtype=np.float64)
        forward /= np.linalg.norm(forward)
        hint = np.array([0.0, 1.0, 0.0])
        if abs(forward @ hint) > 0.999:
            hint = np.array([0.0, 0.0, -1.0])
        right = np.cross(forward, hint)
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return forward, right, up

    def panned(self, dx: float, dy: float) -> "CameraSpec":
        """Translate position and look-at together along camera right/up."""
        _, right, up = self.basis()
        d = dx * right + dy * up
        return dataclasses.replace(
            self,
            position=tuple(float(v) for v in np.asarray(self.position) + d),
            look_at=tuple(float(v) for v in np.asarray(self.look_at) + d),
        )

    def footprint(self, distance: float) -> tuple[float, float]:
        """Visible (width, height) in cm on a plane ``distance`` in front of the camera."""
        h = 2.0 * distance * np.tan(np.deg2rad(self.vertical_fov) / 2.0)
        return h * self.image_width / self.image_height, h


@dataclass(frozen=True)
class SceneConfig:
    """One rendering session.  Serialised as JSON with these snake_case keys.

    Leaf, twig and branch counts per layer are tunable defaults; the olive
    count is exact.  ``occluder_layer`` picks the leaf layer that sits in
    front of the olives.
    """

    seed: int = 0
    leaf_layers: int = 4
    branch_layers: int = 2
    olives_per_session: int = 2600
    leaf_orientation_jitter: float = 9.0
    leaf_size_jitter: float = 0.10
    olive_orientation_jitter: float = 45.0
    olive_size_jitter: float = 0.05
    background: str = "sunny_sky"
    lighting: str = "day"
    camera: CameraSpec = field(default_factory=CameraSpec)
    layer_spacing: float = 12.0
    plane_extent: float = 160.0
    leaves_per_layer: int = 1600
    leaves_per_twig: int = 10
    branches_per_layer: int = 40
    branch_orientation_jitter: float = 9.0
    branch_size_jitter: float = 0.10
    occluder_layer: int = 0
    olive_segments: int = 24

    def validate(self) -> None:
        counts = (self.leaf_layers, self.branch_layers, self.olives_per_session, self.leaves_per_layer,
                  self.branches_per_layer)
        if min(counts) < 0:
            raise ConfigError("counts must be non-negative")
        if self.leaves_per_twig < 1:
            raise ConfigError("leaves_per_twig must be >= 1")
        jitters = (self.leaf_orientation_jitter, self.leaf_size_jitter, self.olive_orientation_jitter,
                   self.olive_size_jitter, self.branch_orientation_jitter, self.branch_size_jitter)
        if min(jitters) < 0:
            raise ConfigError("jitters must be non-negative")
        if max(self.leaf_size_jitter, self.olive_size_jitter, self.branch_size_jitter) >= 1:
            raise ConfigError("size jitters must be < 1")
        if self.background not in BACKGROUNDS:
            raise ConfigError(f"background must be one of {BACKGROUNDS}")
        if self.lighting not in LIGHTINGS:
            raise ConfigError(f"lighting must be one of {LIGHTINGS}")
        if self.layer_spacing <= 0:
            raise ConfigError("layer_spacing must be positive")
        has_content = self.olives_per_session > 0 or (
            self.leaf_layers * self.leaves_per_layer + self.branch_layers * self.branches_per_layer > 0
        )
        if self.plane_extent <= 0 and has_content:
            raise ConfigError("plane_extent must be positive when anything is scattered")
        if self.plane_extent < 0:
            raise ConfigError("plane_extent must be non-negative")
        if self.leaf_layers > 0 and not 0 <= self.occluder_layer < self.leaf_layers:
            raise ConfigError("occluder_layer must index an existing leaf layer")
        if self.olive_segments < 8:
            raise ConfigError("olive_segments must be >= 8")
        try:
            self.camera.validate()
        except ConfigError:
            raise
        except Exception as exc:  # malformed camera tuples
            raise ConfigError(f"bad camera: {exc}") from None

    # --- serialisation ---

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        if not isinstance(data, dict):
            raise ConfigError("scene config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown scene config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "camera" in kwargs:
            cam = kwargs["camera"]
            if not isinstance(cam, dict):
                raise ConfigError("camera must be a JSON object")
            cam_names = {f.name for f in dataclasses.fields(CameraSpec)}
            if set(cam) - cam_names:
                raise ConfigError(f"unknown camera keys: {sorted(set(cam) - cam_names)}")
            cam = dict(cam)
            for key in ("position", "look_at"):
                if key in cam:
                    cam[key] = tuple(float(v) for v in cam[key])
            kwargs["camera"] = CameraSpec(**cam)
        config = cls(**kwargs)
        config.validate()
        return config

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


# --- scene graph ---------------------------------------------------------------

@dataclass(frozen=True)
class Layer:
    kind: str  # "leaf" | "olive" | "branch"
    index: int  # index among layers of the same kind
    slot: int  # 0 = nearest the camera
    depth: float  # distance behind the look-at plane, cm
    occluder: bool = False


@dataclass(frozen=True)
class Light:
    kind: str  # "directional" | "ambient"
    color: tuple[float, float, float]
    intensity: float
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)  # toward the light


@dataclass(frozen=True)
class BackgroundSpec:
    kind: str
    seed: int
    plane_point: tuple[float, float, float] | None = None
    plane_normal: tuple[float, float, float] | None = None
    plane_axes: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None

    @property
    def has_plane(self) -> bool:
        return self.plane_point is not None


class Instance(NamedTuple):
    mesh: int
    transform: InstanceTransform
    material: str
    semantic_class: str
    layer: int
    canonical_rotation: tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class InstanceTable:
    """Structure-of-arrays instance list (one row per placed mesh)."""

    mesh: np.ndarray
    translation: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    material: np.ndarray
    semantic_class: np.ndarray
    layer: np.ndarray
    canonical_rotation: np.ndarray

    @classmethod
    def empty(cls) -> "InstanceTable":
        return cls(np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros(0, np.int64),
                   np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 4)))

    @classmethod
    def concat(cls, tables: list["InstanceTable"]) -> "InstanceTable":
        if not tables:
            return cls.empty()
        return cls(*(np.concatenate([getattr(t, f.name) for t in tables]) for f in dataclasses.fields(cls)))

    def __len__(self) -> int:
        return len(self.mesh)

    def __getitem__(self, i: int) -> Instance:
        return Instance(
            int(self.mesh[i]),
            InstanceTransform(tuple(map(float, self.translation[i])), tuple(map(float, self.rotation[i])),
                              float(self.scale[i])),
            MATERIALS[self.material[i]],
            SEMANTIC_CLASSES[self.semantic_class[i]],
            int(self.layer[i]),
            tuple(map(float, self.canonical_rotation[i])),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def select(self, mask) -> "InstanceTable":
        return InstanceTable(*(getattr(self, f.name)[mask] for f in dataclasses.fields(self)))

    def count(self, semantic_class: int) -> int:
        return int(np.count_nonzero(self.semantic_class == semantic_class))


@dataclass(frozen=True, eq=False)
class SceneGraph:
    meshes: tuple[TriMesh, ...]
    instances: InstanceTable
    lights: tuple[Light, ...]
    background: BackgroundSpec
    camera: CameraSpec
    layers: tuple[Layer, ...]
    seed: int

    def with_camera(self, camera: CameraSpec) -> "SceneGraph":
        return dataclasses.replace(self, camera=camera)


# --- prototype library -----------------------------------------------------------

def olive_prototype(segments: int = 24) -> TriMesh:
    return make_olive(OliveShapeParams(lat_segments=segments, lon_segments=segments), 0)


def leaf_prototypes() -> tuple[TriMesh, ...]:
    return tuple(make_leaf(LeafParams(), k) for k in range(N_LEAF_PROTOTYPES))


_BRANCH_CACHE: dict[int, TriMesh] = {}


def branch_prototype(k: int) -> TriMesh:
    """Fixed library of pruned 5th-degree branches, about 30 cm long, along +x."""
    if k not in _BRANCH_CACHE:
        rng = CounterRNG.from_seed(k, "branch-prototype")
        i = np.arange(6)
        length = 26.0 + 8.0 * rng.uniform(0, 0)
        bend = rng.uniform(i, 1, -2.5, 2.5)
        lift = rng.uniform(i, 2, -0.6, 0.6)
        bend[0] = lift[0] = 0.0
        cp = np.stack([length * i / 5.0, bend, lift], axis=-1)
        prune = float(rng.uniform(0, 3, 0.75, 1.0))
        _BRANCH_CACHE[k] = tessellate_branch(BezierCurve(cp), 0.45, 0.12, rings=10, sides=6, prune_t=prune)
    return _BRANCH_CACHE[k]


# --- assembly ----------------------------------------------------------------------

def layer_layout(config: SceneConfig) -> tuple[Layer, ...]:
    """Slot order: occluder leaf layer, olive layer, then branches/leaves interleaved."""
    slots: list[tuple[str, int, bool]] = []
    if config.leaf_layers > 0:
        slots.append(("leaf", config.occluder_layer, True))
    slots.append(("olive", 0, False))
    rest_leaves = [k for k in range(config.leaf_layers) if k != config.occluder_layer]
    branches = list(range(config.branch_layers))
    while rest_leaves or branches:
        if branches:
            slots.append(("branch", branches.pop(0), False))
        if rest_leaves:
            slots.append(("leaf", rest_leaves.pop(0), False))
    return tuple(
        Layer(kind, index, slot, slot * config.layer_spacing, occ) for slot, (kind, index, occ) in enumerate(slots)
    )


def _layer_frame(camera: CameraSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(origin, rotation matrix local->world, quaternion) of the layer frame."""
    forward, right, up = camera.basis()
    rot = np.stack([right, up, -forward], axis=-1)
    return np.asarray(camera.look_at, dtype=np.float64), rot, matrix_to_quat(rot)


def _to_world(origin, rot, q_layer, local_pos, local_rot):
    pos = origin + local_pos @ rot.T
    quat = quat_normalize(quat_multiply(q_layer, local_rot)) if len(local_rot) else local_rot
    return pos, quat


def _scatter_plane_xy(rng: CounterRNG, idx: np.ndarray, extent: float, draw: int) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * extent
    return rng.uniform(idx, draw, -half, half), rng.uniform(idx, draw + 1, -half, half)


def _olive_layer(config, layer, frame, rng) -> InstanceTable:
    n = config.olives_per_session
    idx = np.arange(n)
    x, y = _scatter_plane_xy(rng, idx, config.plane_extent, 0)
    z = -layer.depth + rng.uniform(idx, 2, -1.0, 1.0)
    # canonical pose: long axis (local +z) lies along layer +x
    canon_local = np.broadcast_to(quat_from_axis_angle([0.0, 1.0, 0.0], np.pi / 2), (n, 4))
    origin, rot, q_layer = frame
    pos, canon = _to_world(origin, rot, q_layer, np.stack([x, y, z], axis=-1), canon_local)
    jit, scale = sample_jitter(rng, idx, config.olive_orientation_jitter, config.olive_size_jitter, first_draw=3)
    rotation = quat_normalize(quat_multiply(jit, canon)) if n else canon
    variant = rng.integers(idx, 7, N_OLIVE_VARIANTS)
    return InstanceTable(
        np.zeros(n, np.int64), pos, rotation, scale, variant, np.full(n, OLIVE), np.full(n, layer.slot), canon
    )


def _twig_curves(rng: CounterRNG, n_twigs: int, extent: float, z: float) -> np.ndarray:
    j = np.arange(n_twigs)
    sx, sy = _scatter_plane_xy(rng, j, extent, 0)
    heading = rng.uniform(j, 2, 0.0, 2.0 * np.pi)
    length = rng.uniform(j, 3, 14.0, 22.0)
    d = np.stack([np.cos(heading), np.sin(heading)], axis=-1)
    perp = np.stack([-d[:, 1], d[:, 0]], axis=-1)
    k = np.arange(6)
    wiggle = np.stack([rng.uniform(j, 4 + i, -1.5, 1.5) for i in k], axis=-1)
    wiggle[:, 0] = 0.0
    along = length[:, None] * k[None, :] / 5.0
    xy = (np.stack([sx, sy], -1)[:, None, :] + along[..., None] * d[:, None, :]
          + wiggle[..., None] * perp[:, None, :])
    return np.concatenate([xy, np.full((n_twigs, 6, 1), z)], axis=-1)


def _leaf_layer(config, layer, frame, rng, mesh_offset: int) -> InstanceTable:
    n = config.leaves_per_layer
    per = config.leaves_per_twig
    n_twigs = -(-n // per)
    cps = _twig_curves(rng.child("twig"), n_twigs, config.plane_extent, -layer.depth)
    g = np.arange(n)
    twig, m = g // per, g % per
    leaf_rng = rng.child("leaf")
    t = (m + leaf_rng.uniform(g, 0)) / per
    w5 = bernstein_weights(5, t)
    pos = np.einsum("gi,gij->gj", w5, cps[twig])
    deriv = 5.0 * np.einsum("gi,gij->gj", bernstein_weights(4, t), np.diff(cps[twig], axis=1))
    deriv[:, 2] = 0.0
    tangent = deriv / np.linalg.norm(deriv, axis=1, keepdims=True)
    normal = np.broadcast_to([0.0, 0.0, 1.0], tangent.shape)
    frame_q = frame_to_quat(tangent, normal) if n else np.zeros((0, 4))
    side = np.where(m % 2 == 0, 1.0, -1.0)
    spread = quat_from_axis_angle(np.broadcast_to([0.0, 1.0, 0.0], (n, 3)), side * np.deg2rad(40.0))
    canon_local = quat_multiply(frame_q, spread) if n else frame_q
    origin, rot, q_layer = frame
    pos_w, canon = _to_world(origin, rot, q_layer, pos, canon_local)
    jit, scale = sample_jitter(leaf_rng, g, config.leaf_orientation_jitter, config.leaf_size_jitter, first_draw=1)
    rotation = quat_normalize(quat_multiply(jit, canon)) if n else canon
    proto = mesh_offset + leaf_rng.integers(g, 5, N_LEAF_PROTOTYPES)
    return InstanceTable(
        proto, pos_w, rotation, scale, np.full(n, LEAF_MATERIAL), np.full(n, LEAF), np.full(n, layer.slot), canon
    )


def _branch_layer(config, layer, frame, rng, mesh_offset: int) -> InstanceTable:
    n = config.branches_per_layer
    idx = np.arange(n)
    x, y = _scatter_plane_xy(rng, idx, config.plane_extent, 0)
    z = np.full(n, -layer.depth)
    yaw = rng.uniform(idx, 2, 0.0, 2.0 * np.pi)
    canon_local = quat_from_axis_angle(np.broadcast_to([0.0, 0.0, 1.0], (n, 3)), yaw)
    origin, rot, q_layer = frame
    pos, canon = _to_world(origin, rot, q_layer, np.stack([x, y, z], axis=-1), canon_local)
    jit, scale = sample_jitter(rng, idx, config.branch_orientation_jitter, config.branch_size_jitter, first_draw=3)
    rotation = quat_normalize(quat_multiply(jit, canon)) if n else canon
    proto = mesh_offset + rng.integers(idx, 7, N_BRANCH_PROTOTYPES)
    return InstanceTable(
        proto, pos, rotation, scale, np.full(n, BRANCH_MATERIAL), np.full(n, BRANCH), np.full(n, layer.slot), canon
    )


def lighting_preset(name: str, frame) -> tuple[Light, ...]:
    """Sun + ambient; directions are given in the layer frame and rotated to world."""
    _, rot, _ = frame
    if name == "day":
        sun_local, sun_col, sun_int = (0.35, 0.45, 1.0), (1.0, 0.95, 0.86), 1.05
        amb_col, amb_int = (0.46, 0.50, 0.56), 0.85
    elif name == "evening":
        sun_local, sun_col, sun_int = (0.85, 0.25, 0.45), (0.80, 0.85, 1.0), 0.55
        amb_col, amb_int = (0.36, 0.40, 0.52), 0.60
    else:
        raise ConfigError(f"unknown lighting preset {name!r}")
    d = rot @ (np.asarray(sun_local) / np.linalg.norm(sun_local))
    return (
        Light("directional", sun_col, sun_int, tuple(float(v) for v in d)),
        Light("ambient", amb_col, amb_int),
    )


def assemble_scene(config: SceneConfig) -> SceneGraph:
    """Instantiate every layer of ``config``; a pure function of the config.

    Each layer draws from its own child stream keyed by (layer kind, layer
    index), and every instance from counter-indexed draws within it, so
    changing one layer's count never moves another layer's instances.
    """
    config.validate()
    layers = layer_layout(config)
    frame = _layer_frame(config.camera)
    root = CounterRNG.from_seed(config.seed, "scene")

    meshes: list[TriMesh] = [olive_prototype(config.olive_segments)]
    leaf_offset = len(meshes)
    meshes += leaf_prototypes()
    branch_offset = len(meshes)
    meshes += [branch_prototype(k) for k in range(N_BRANCH_PROTOTYPES)]

    tables = []
    for layer in layers:
        rng = root.child(layer.kind, layer.index)
        if layer.kind == "olive" and config.olives_per_session:
            tables.append(_olive_layer(config, layer, frame, rng))
        elif layer.kind == "leaf" and config.leaves_per_layer:
            tables.append(_leaf_layer(config, layer, frame, rng, leaf_offset))
        elif layer.kind == "branch" and config.branches_per_layer:
            tables.append(_branch_layer(config, layer, frame, rng, branch_offset))

    origin, rot, _ = frame
    back_depth = (len(layers)) * config.layer_spacing
    bg_seed = root.child_seed("background")
    if config.background in ("ground_plane", "leaf_plane"):
        normal = rot @ np.array([0.0, 0.0, 1.0])
        background = BackgroundSpec(
            config.background, bg_seed,
            plane_point=tuple(float(v) for v in origin - back_depth * normal),
            plane_normal=tuple(float(v) for v in normal),
            plane_axes=(tuple(float(v) for v in rot[:, 0]), tuple(float(v) for v in rot[:, 1])),
        )
    else:
        background = BackgroundSpec(config.background, bg_seed)

    return SceneGraph(
        meshes=tuple(meshes),
        instances=InstanceTable.concat(tables),
        lights=lighting_preset(config.lighting, frame),
        background=background,
        camera=config.camera,
        layers=layers,
        seed=config.seed,
    )


def session_plan(config: SceneConfig, sessions: int, pairs_per_session: int) -> list[SceneConfig]:
    """Derive one config per rendering session.

    Session ``i`` gets a distinct child seed.  Backgrounds cycle through
    :data:`BACKGROUNDS` starting at the input config's background, and the
    lighting preset advances once per full background cycle, so session 0
    differs from ``config`` only in its seed.  The plan covers
    ``sessions * pairs_per_session`` image/mask pairs.
    """
    if sessions < 1:
        raise ConfigError("sessions must be >= 1")
    if pairs_per_session < 0:
        raise ConfigError("pairs_per_session must be >= 0")
    config.validate()
    rng = CounterRNG.from_seed(config.seed, "session")
    b0 = BACKGROUNDS.index(config.background)
    l0 = LIGHTINGS.index(config.lighting)
    return [
        dataclasses.replace(
            config,
            seed=rng.child_seed(i),
            background=BACKGROUNDS[(b0 + i) % len(BACKGROUNDS)],
            lighting=LIGHTINGS[(l0 + i // len(BACKGROUNDS)) % len(LIGHTINGS)],
        )
        for i in range(sessions)
    ]
