"""RGB -> IGA input-space transform on 8-bit data.

IGA stores (intensity, green, mean of red and blue) in channels 0, 1, 2.
All arithmetic is exact integer arithmetic with round-half-away-from-zero,
so results never depend on floating point.
"""

from __future__ import annotations

import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError
from .pngio import read_png, write_png

INTENSITY_STRATEGIES = ("mean", "max", "luma709")


def _intensity(r: np.ndarray, g: np.ndarray, b: np.ndarray, strategy: str) -> np.ndarray:
    if strategy == "mean":
        # round((r+g+b)/3) == floor((2s + 3) / 6) for s >= 0
        return (2 * (r + g + b) + 3) // 6
    if strategy == "max":
        return np.maximum(np.maximum(r, g), b)
    if strategy == "luma709":
        return (2126 * r + 7152 * g + 722 * b + 5000) // 10000
    raise ParameterError(f"unknown intensity strategy {strategy!r}; expected one of {INTENSITY_STRATEGIES}")


def rgb_array_to_iga(rgb: np.ndarray, intensity: str = "mean") -> np.ndarray:
    """Vectorised transform over any array whose last axis is (R, G, B)."""
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise FormatError(f"expected 3 channels in the last axis, got shape {rgb.shape}")
    if rgb.size and (rgb.min() < 0 or rgb.max() > 255):
        raise FormatError("channel values must lie in [0, 255]")
    c = rgb.astype(np.int64)
    r, g, b = c[..., 0], c[..., 1], c[..., 2]
    out = np.stack([_intensity(r, g, b, intensity), g, (r + b + 1) // 2], axis=-1)
    return out.astype(np.uint8)


def rgb_to_iga(pixel, intensity: str = "mean") -> tuple[int, int, int]:
    """Single pixel: ``(R, G, B) -> (I, G, round((R + B) / 2))``.

    >>> rgb_to_iga((100, 150, 200))
    (150, 150, 150)
    >>> rgb_to_iga((255, 0, 0))
    (85, 0, 128)
    """
    out = rgb_array_to_iga(np.asarray(pixel, dtype=np.int64).reshape(1, 3), intensity)[0]
    return int(out[0]), int(out[1]), int(out[2])


def convert_image_iga(image: np.ndarray, intensity: str = "mean") -> np.ndarray:
    """Per-pixel IGA transform of an ``(H, W, 3)`` uint8 image; shape preserved."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise FormatError(f"expected an (H, W, 3) RGB image, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise FormatError(f"expected uint8 pixels, got {image.dtype}")
    return rgb_array_to_iga(image, intensity)


def is_mask_file(path: Path) -> bool:
    return path.stem.endswith("_mask")


def convert_directory(src, dst, intensity: str = "mean", workers: int = 1) -> list[Path]:
    """Convert every ``*.png`` under ``src`` into ``dst`` with mirrored relative paths.

    Mask files (``*_mask.png``) are copied byte-for-byte, never converted.
    Returns the written paths in sorted order.
    """
    src, dst = Path(src), Path(dst)
    if not src.is_dir():
        raise FormatError(f"input directory {src} does not exist")
    if intensity not in INTENSITY_STRATEGIES:
        raise ParameterError(f"unknown intensity strategy {intensity!r}")
    files = sorted(p for p in src.rglob("*.png") if p.is_file())

    def one(path: Path) -> Path:
        out = dst / path.relative_to(src)
        out.parent.mkdir(parents=True, exist_ok=True)
        if is_mask_file(path):
            shutil.copyfile(path, out)
            return out
        image, text = read_png(path)
        if image.ndim != 3 or image.shape[-1] != 3:
            raise FormatError(f"{path}: expected an RGB image")
        write_png(out, convert_image_iga(image, intensity), {**text, "colorspace": "iga", "intensity": intensity})
        return out

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, files))
    return [one(p) for p in files]


def sweep_all_rgb(intensity: str = "mean", chunk_bits: int = 20):
    """Yield ``(rgb, iga)`` chunks covering all 2**24 8-bit RGB triples in order."""
    total = 1 << 24
    step = 1 << chunk_bits
    for start in range(0, total, step):
        code = np.arange(start, min(start + step, total), dtype=np.int64)
        rgb = np.stack([code >> 16, (code >> 8) & 255, code & 255], axis=-1)
        yield rgb, rgb_array_to_iga(rgb, intensity)

