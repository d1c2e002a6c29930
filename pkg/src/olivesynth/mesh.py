"""Indexed triangle meshes and Wavefront OBJ serialisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GeometryError


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable indexed triangle mesh.

    ``uvs`` may be indexed separately from positions (``uv_indices``), the way
    OBJ ``f v/vt/vn`` records do.  This lets a closed surface keep shared
    vertices (and sphere topology) while its texture atlas has a seam.
    When ``uv_indices`` is omitted, ``uvs`` is per-vertex.
    """

    vertices: np.ndarray
    normals: np.ndarray
    uvs: np.ndarray
    triangles: np.ndarray
    uv_indices: np.ndarray | None = None
    material_id: str = ""
    _radius: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "vertices", _frozen(self.vertices, np.float64).reshape(-1, 3))
        set_(self, "normals", _frozen(self.normals, np.float64).reshape(-1, 3))
        set_(self, "uvs", _frozen(self.uvs, np.float64).reshape(-1, 2))
        set_(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        if self.uv_indices is None:
            set_(self, "uv_indices", self.triangles)
        else:
            set_(self, "uv_indices", _frozen(self.uv_indices, np.int64).reshape(-1, 3))
        if len(self.normals) != len(self.vertices):
            raise GeometryError("one normal per vertex is required")
        if self.uv_indices.shape != self.triangles.shape:
            raise GeometryError("uv_indices must match triangles in shape")
        radius = float(np.sqrt((self.vertices**2).sum(axis=1).max())) if len(self.vertices) else 0.0
        set_(self, "_radius", radius)

    @classmethod
    def from_geometry(cls, vertices, triangles, uvs=None, uv_indices=None, material_id: str = "") -> "TriMesh":
        """Build a mesh, computing area-weighted vertex normals."""
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        if uvs is None:
            uvs = np.zeros((len(vertices), 2))
        return cls(vertices, vertex_normals(vertices, triangles), uvs, triangles, uv_indices, material_id)

    def with_vertices(self, vertices, recompute_normals: bool = True) -> "TriMesh":
        normals = vertex_normals(vertices, self.triangles) if recompute_normals else self.normals
        return TriMesh(vertices, normals, self.uvs, self.triangles, self.uv_indices, self.material_id)

    @property
    def bounding_radius(self) -> float:
        """Radius of the origin-centred sphere enclosing every vertex."""
        return self._radius

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extent(self) -> np.ndarray:
        lo, hi = self.bounds()
        return hi - lo

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) array."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges()) + len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def surface_area(self) -> float:
        return float(self.triangle_areas().sum())

    def signed_volume(self) -> float:
        v = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def validate(self, normal_tol: float = 1e-6) -> None:
        """Raise :class:`GeometryError` if a structural invariant is violated."""
        nv = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise GeometryError("triangle index out of range")
        if self.uv_indices.size and (self.uv_indices.min() < 0 or self.uv_indices.max() >= len(self.uvs)):
            raise GeometryError("uv index out of range")
        if np.any(self.triangle_areas() <= 1e-14):
            raise GeometryError("degenerate (zero-area) triangle")
        lengths = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(lengths - 1.0) > normal_tol):
            raise GeometryError("normals are not unit length")


def vertex_normals(vertices, triangles) -> np.ndarray:
    """Area-weighted vertex normals; isolated vertices get +z."""
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    v = vertices[triangles]
    face = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, triangles[:, k], face)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    out = np.where(norm > 0, acc / np.where(norm > 0, norm, 1.0), np.array([0.0, 0.0, 1.0]))
    return out


def merge_meshes(meshes: list[TriMesh], material_id: str = "") -> TriMesh:
    verts, norms, uvs, tris, uvi = [], [], [], [], []
    vo = uo = 0
    for m in meshes:
        verts.append(m.vertices)
        norms.append(m.normals)
        uvs.append(m.uvs)
        tris.append(m.triangles + vo)
        uvi.append(m.uv_indices + uo)
        vo += len(m.vertices)
        uo += len(m.uvs)
    return TriMesh(
        np.concatenate(verts), np.concatenate(norms), np.concatenate(uvs),
        np.concatenate(tris), np.concatenate(uvi), material_id,
    )


# --- Wavefront OBJ -----------------------------------------------------------

def to_obj(mesh: TriMesh, name: str | None = None) -> str:
    """Serialise as OBJ text with ``v``/``vn``/``vt``/``f`` records, 6 decimals.

    Normals are per vertex, so ``vn`` indices equal ``v`` indices.
    """
    lines = ["# olivesynth mesh"]
    if name:
        lines.append(f"o {name}")
    # round first, then add 0.0 so "-0.000000" never appears
    v, n, t = (np.round(a, 6) + 0.0 for a in (mesh.vertices, mesh.normals, mesh.uvs))
    lines.extend(f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in v)
    lines.extend(f"vn {x:.6f} {y:.6f} {z:.6f}" for x, y, z in n)
    lines.extend(f"vt {a:.6f} {b:.6f}" for a, b in t)
    for (a, b, c), (ta, tb, tc) in zip(mesh.triangles + 1, mesh.uv_indices + 1):
        lines.append(f"f {a}/{ta}/{a} {b}/{tb}/{b} {c}/{tc}/{c}")
    return "\n".join(lines) + "\n"


def parse_obj(text: str) -> dict[str, np.ndarray]:
    """Minimal OBJ reader for triangle meshes (``v``, ``vn``, ``vt``, ``f``).

    Returns 0-based index arrays and raises :class:`FormatError` on bad or
    out-of-range indices.
    """
    v, vn, vt, f_v, f_t, f_n = [], [], [], [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag, args = parts[0], parts[1:]
        try:
            if tag == "v":
                v.append([float(x) for x in args[:3]])
            elif tag == "vn":
                vn.append([float(x) for x in args[:3]])
            elif tag == "vt":
                vt.append([float(x) for x in args[:2]])
            elif tag == "f":
                if len(args) != 3:
                    raise FormatError(f"line {lineno}: only triangles are supported")
                corners = [a.split("/") for a in args]
                f_v.append([int(c[0]) for c in corners])
                f_t.append([int(c[1]) if len(c) > 1 and c[1] else 0 for c in corners])
                f_n.append([int(c[2]) if len(c) > 2 and c[2] else 0 for c in corners])
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    out = {
        "vertices": np.array(v, dtype=np.float64).reshape(-1, 3),
        "normals": np.array(vn, dtype=np.float64).reshape(-1, 3),
        "uvs": np.array(vt, dtype=np.float64).reshape(-1, 2),
        "triangles": np.array(f_v, dtype=np.int64).reshape(-1, 3) - 1,
        "uv_indices": np.array(f_t, dtype=np.int64).reshape(-1, 3) - 1,
        "normal_indices": np.array(f_n, dtype=np.int64).reshape(-1, 3) - 1,
    }
    for key, pool in (("triangles", "vertices"), ("uv_indices", "uvs"), ("normal_indices", "normals")):
        idx = out[key]
        if idx.size and (idx.min() < 0 or idx.max() >= len(out[pool])):
            raise FormatError(f"{key} reference missing {pool}")
    return out
