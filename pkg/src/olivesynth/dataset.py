"""Dataset generation: session plan -> per-pair scenes -> rendered PNG pairs -> manifest.

Layout::

    out/images/s00_0000.png
    out/masks/s00_0000_mask.png
    out/manifest.json

Each PNG carries a ``pair_hash`` text chunk identifying the exact content
configuration it was rendered from; a rerun skips pairs whose files already
carry the expected hash, so interrupted runs resume where they stopped.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .colorspace import INTENSITY_STRATEGIES, convert_image_iga
from .errors import ConfigError
from .pngio import read_png_text, write_png
from .render import RenderConfig, render
from .rng import CounterRNG
from .scene import SceneConfig, assemble_scene, session_plan

MANIFEST_VERSION = "1.0"
COLORSPACES = ("rgb", "iga")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


@dataclass(frozen=True)
class DatasetConfig:
    """Everything that determines the bytes of a generated dataset.

    ``camera_jitter`` is the half-width (cm) of the uniform pan applied to the
    camera for each pair.  The camera's image size is taken from ``render``.
    """

    scene: SceneConfig = field(default_factory=SceneConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    sessions: int = 1
    pairs_per_session: int = 1
    camera_jitter: float = 40.0
    colorspace: str = "rgb"
    intensity: str = "mean"

    def validate(self) -> None:
        self.scene.validate()
        self.render.validate()
        if self.sessions < 1:
            raise ConfigError("sessions must be >= 1")
        if self.pairs_per_session < 0:
            raise ConfigError("pairs_per_session must be >= 0")
        if self.camera_jitter < 0:
            raise ConfigError("camera_jitter must be >= 0")
        if self.colorspace not in COLORSPACES:
            raise ConfigError(f"colorspace must be one of {COLORSPACES}")
        if self.intensity not in INTENSITY_STRATEGIES:
            raise ConfigError(f"intensity must be one of {INTENSITY_STRATEGIES}")

    def content_dict(self) -> dict:
        """Fields that influence individual pairs (not the plan size, tiling, backend or parallelism)."""
        r = dataclasses.asdict(self.render)
        r.pop("workers")
        r.pop("tile_size")  # output is tile-invariant
        r.pop("backend")  # and backend-invariant
        return {
            "scene": self.scene.to_dict(),
            "render": r,
            "camera_jitter": self.camera_jitter,
            "colorspace": self.colorspace,
            "intensity": self.intensity if self.colorspace == "iga" else None,
        }

    def to_dict(self) -> dict:
        return {**self.content_dict(), "sessions": self.sessions, "pairs_per_session": self.pairs_per_session}

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of :meth:`to_dict`."""
        return _sha256({"version": MANIFEST_VERSION, **self.to_dict()})


@dataclass(frozen=True)
class SessionRecord:
    seed: int
    background: str
    lighting: str
    pair_count: int
    olive_instance_count: int


@dataclass
class DatasetManifest:
    version: str
    created: str
    sessions: list[SessionRecord]
    total_pairs: int
    image_size: tuple[int, int]
    colorspace: str
    config_hash: str
    config: dict = field(default_factory=dict)
    complete: bool = True
    fresh_pairs: int = field(default=0, compare=False)  # rendered this run; not persisted

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("fresh_pairs")
        d["image_size"] = list(self.image_size)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            version=d["version"],
            created=d["created"],
            sessions=[SessionRecord(**s) for s in d["sessions"]],
            total_pairs=int(d["total_pairs"]),
            image_size=tuple(d["image_size"]),
            colorspace=d["colorspace"],
            config_hash=d["config_hash"],
            config=d.get("config", {}),
            complete=bool(d.get("complete", True)),
        )

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def pair_stem(session: int, index: int) -> str:
    return f"s{session:02d}_{index:04d}"


def pair_scene_config(session_config: SceneConfig, index: int, config: DatasetConfig) -> SceneConfig:
    """Per-pair variation: a fresh scatter seed plus a uniform camera pan."""
    rng = CounterRNG.from_seed(session_config.seed, "pair")
    pan = rng.uniform(np.uint64(index), np.arange(2, dtype=np.uint64))
    dx, dy = (2.0 * pan - 1.0) * config.camera_jitter
    camera = dataclasses.replace(
        session_config.camera, image_width=config.render.width, image_height=config.render.height
    ).panned(float(dx), float(dy))
    return dataclasses.replace(session_config, seed=rng.child_seed(index), camera=camera)


def pair_hash(config: DatasetConfig, session: int, index: int) -> str:
    return _sha256({"version": MANIFEST_VERSION, "content": config.content_dict(), "session": session, "index": index})


@dataclass(frozen=True)
class _PairJob:
    config: DatasetConfig
    session_config: SceneConfig
    session: int
    index: int
    image_path: str
    mask_path: str


def _pair_done(job: _PairJob, expected: str) -> bool:
    for p in (job.image_path, job.mask_path):
        if not os.path.exists(p) or read_png_text(p).get("pair_hash") != expected:
            return False
    return True


def _run_pair(job: _PairJob) -> bool:
    """Render and write one pair unless it already exists. Returns True if rendered."""
    expected = pair_hash(job.config, job.session, job.index)
    if _pair_done(job, expected):
        return False
    scene_config = pair_scene_config(job.session_config, job.index, job.config)
    pair = render(assemble_scene(scene_config), job.config.render)
    image = pair.image
    if job.config.colorspace == "iga":
        image = convert_image_iga(image, job.config.intensity)
    text = {
        "pair_hash": expected,
        "scene_seed": str(scene_config.seed),
        "scene_config_hash": scene_config.config_hash(),
        "colorspace": job.config.colorspace,
    }
    write_png(job.image_path, image, text)
    write_png(job.mask_path, pair.mask, text)
    return True


def _write_manifest(path: Path, manifest: DatasetManifest) -> None:
    fd, tmp = tempfile.mkstemp(prefix=".manifest.", suffix=".tmp", dir=path.parent)
    with os.fdopen(fd, "w") as fh:
        fh.write(manifest.to_json())
    os.replace(tmp, path)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


def generate_dataset(
    config: SceneConfig,
    sessions: int,
    pairs_per_session: int,
    out_dir,
    *,
    render_config: RenderConfig = RenderConfig(),
    camera_jitter: float = 40.0,
    colorspace: str = "rgb",
    intensity: str = "mean",
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> DatasetManifest:
    """Render ``sessions * pairs_per_session`` image/mask pairs into ``out_dir``.

    ``workers > 1`` renders pairs in that many processes; the output bytes do
    not depend on it.  On an I/O failure the manifest is flushed with
    ``complete = False`` before the error propagates.
    """
    ds = DatasetConfig(config, render_config, sessions, pairs_per_session, camera_jitter, colorspace, intensity)
    ds.validate()
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    digest = ds.config_hash()

    created = _now()
    if manifest_path.exists():
        try:
            old = DatasetManifest.load(manifest_path)
            if old.config_hash == digest:
                created = old.created
        except (ValueError, KeyError, TypeError):
            pass

    plan = session_plan(config, sessions, pairs_per_session)
    records = [
        SessionRecord(int(s.seed), s.background, s.lighting, pairs_per_session, int(s.olives_per_session))
        for s in plan
    ]
    manifest = DatasetManifest(
        version=MANIFEST_VERSION,
        created=created,
        sessions=records,
        total_pairs=sessions * pairs_per_session,
        image_size=(render_config.width, render_config.height),
        colorspace=colorspace,
        config_hash=digest,
        config=json.loads(_canonical(ds.to_dict())),
        complete=False,
    )
    jobs = [
        _PairJob(ds, s, si, i, str(out / "images" / f"{pair_stem(si, i)}.png"),
                 str(out / "masks" / f"{pair_stem(si, i)}_mask.png"))
        for si, s in enumerate(plan)
        for i in range(pairs_per_session)
    ]
    fresh = 0
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = pool.map(_run_pair, jobs, chunksize=max(1, len(jobs) // (workers * 16)))
                for n, rendered in enumerate(results, 1):
                    fresh += rendered
                    if progress:
                        progress(n, len(jobs))
        else:
            for n, job in enumerate(jobs, 1):
                fresh += _run_pair(job)
                if progress:
                    progress(n, len(jobs))
    except OSError:
        _write_manifest(manifest_path, manifest)
        raise
    manifest.complete = True
    manifest.fresh_pairs = fresh
    _write_manifest(manifest_path, manifest)
    return manifest


def reconcile(out_dir) -> dict:
    """Compare a manifest's bookkeeping with the files on disk."""
    out = Path(out_dir)
    manifest = DatasetManifest.load(out / "manifest.json")
    images = sorted(p.stem for p in (out / "images").glob("*.png"))
    masks = sorted(p.stem[: -len("_mask")] for p in (out / "masks").glob("*_mask.png"))
    return {
        "total_pairs": manifest.total_pairs,
        "session_sum": sum(s.pair_count for s in manifest.sessions),
        "images": len(images),
        "masks": len(masks),
        "stems_match": images == masks,
    }
