"""8-bit PNG read/write with text metadata and atomic replacement."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import FormatError


def write_png(path, array: np.ndarray, text: dict | None = None) -> Path:
    """Write an ``(H, W)`` grayscale or ``(H, W, 3)`` RGB uint8 array.

    The file is written to a temporary sibling and renamed into place, so a
    reader never sees a partial PNG.  ``text`` entries become tEXt chunks.
    """
    path = Path(path)
    array = np.asarray(array)
    if array.dtype != np.uint8 or array.ndim not in (2, 3) or (array.ndim == 3 and array.shape[2] != 3):
        raise FormatError(f"expected uint8 (H, W) or (H, W, 3), got {array.dtype} {array.shape}")
    info = PngImagePlugin.PngInfo()
    for k, v in sorted((text or {}).items()):
        info.add_text(str(k), str(v))
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            Image.fromarray(array, mode="L" if array.ndim == 2 else "RGB").save(fh, format="PNG", pnginfo=info)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_png(path) -> tuple[np.ndarray, dict]:
    """Return ``(array, text_chunks)``; grayscale as ``(H, W)``, colour as ``(H, W, 3)``."""
    try:
        with Image.open(path) as im:
            im.load()
            text = dict(getattr(im, "text", {}) or {})
            if im.mode in ("L", "1", "P", "I", "I;16"):
                arr = np.asarray(im.convert("L"))
            else:
                arr = np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise FormatError(f"cannot read PNG {path}: {exc}") from exc
    return arr, text


def read_png_text(path) -> dict:
    """Text chunks only, without decoding pixels."""
    try:
        with Image.open(path) as im:
            return dict(getattr(im, "text", {}) or {})
    except OSError:
        return {}
