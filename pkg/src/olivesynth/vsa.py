"""Hypervector loss mathematics built on MAP binding and cosine distance.

None of the translation networks exist here.  A
:class:`BatchContext` carries the hypervectors they would have produced,
plus the discriminator as a plain callable, so every loss is a pure
function that can be checked against closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, FormatError, ShapeError

DEFAULT_DIMENSION = 4096


def _vec(u) -> np.ndarray:
    a = np.asarray(u, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"hypervector must be 1-D, got shape {a.shape}")
    return a


def bind(u, v) -> np.ndarray:
    """MAP binding: element-wise product. Self-inverse on bipolar vectors."""
    u, v = _vec(u), _vec(v)
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    return u * v


def cosine_distance(u, v) -> float:
    """``1 - u.v / (|u| |v|)``, clipped to ``[0, 2]``."""
    u, v = _vec(u), _vec(v)
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu, nv = math.sqrt(math.fsum(u * u)), math.sqrt(math.fsum(v * v))
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine distance of a zero vector is undefined")
    cos = math.fsum(u * v) / (nu * nv)
    return min(2.0, max(0.0, 1.0 - cos))


@dataclass
class BatchContext:
    """Everything one batch of the loss needs.

    Attributes
    ----------
    v_x, v_y, v_gx : list of hypervectors
        Source, real target and translated source vectors.
    f_vx : list of hypervectors
        Mapper outputs for ``v_x``; bound element-wise with ``v_x``.
    v_cycle : list of ``(n, d)`` arrays
        Per-sample round-trip vectors, aligned with ``v_x`` reshaped to ``(n, d)``.
    d_y : callable
        Discriminator, hypervector -> probability in ``(0, 1)``.
    """

    v_x: Sequence = field(default_factory=list)
    v_y: Sequence = field(default_factory=list)
    v_gx: Sequence = field(default_factory=list)
    f_vx: Sequence = field(default_factory=list)
    v_cycle: Sequence = field(default_factory=list)
    d_y: Callable[[np.ndarray], float] = lambda v: 0.5


def _log_prob(p: float, what: str) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"{what} probability {p!r} outside the open interval (0, 1)")
    return math.log(p)


def _batch_mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def adversarial_loss(ctx: BatchContext) -> float:
    """Sum of three batch means: log D(v_y), log(1 - D(v_gx)), log(1 - D(v_x bound with F(v_x))).

    A term whose input list is empty is left out, which lets tests isolate
    single terms.
    """
    total = []
    if len(ctx.v_y):
        total.append(_batch_mean([_log_prob(ctx.d_y(_vec(v)), "D(v_y)") for v in ctx.v_y]))
    if len(ctx.v_gx):
        total.append(_batch_mean([_log_prob(1.0 - ctx.d_y(_vec(v)), "1 - D(v_gx)") for v in ctx.v_gx]))
    if len(ctx.f_vx):
        if len(ctx.f_vx) != len(ctx.v_x):
            raise ShapeError(f"f_vx has {len(ctx.f_vx)} entries but v_x has {len(ctx.v_x)}")
        bound = [bind(x, f) for x, f in zip(ctx.v_x, ctx.f_vx)]
        total.append(_batch_mean([_log_prob(1.0 - ctx.d_y(b), "1 - D(v_x * F(v_x))") for b in bound]))
    return math.fsum(total)


def _as_rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] < 1:
        raise ShapeError(f"expected (n, d) feature vectors with n >= 1, got shape {a.shape}")
    return a


def cyclic_loss(v_x: Sequence, v_cycle: Sequence) -> float:
    """Batch mean of per-sample mean cosine distances between source and round-trip vectors."""
    if len(v_x) != len(v_cycle):
        raise ShapeError(f"v_x has {len(v_x)} samples but v_cycle has {len(v_cycle)}")
    if len(v_x) == 0:
        raise ShapeError("cyclic loss needs at least one sample")
    per_sample = []
    for x, c in zip(v_x, v_cycle):
        x, c = _as_rows(x), _as_rows(c)
        if x.shape != c.shape:
            raise ShapeError(f"sample shapes differ: {x.shape} vs {c.shape}")
        per_sample.append(_batch_mean([cosine_distance(a, b) for a, b in zip(x, c)]))
    return _batch_mean(per_sample)


def total_loss(ctx: BatchContext) -> float:
    """Unweighted sum of the adversarial and cyclic losses.

    The cyclic term is skipped when ``v_cycle`` is empty.
    """
    adv = adversarial_loss(ctx)
    if len(ctx.v_cycle) == 0:
        return adv
    return adv + cyclic_loss(ctx.v_x, ctx.v_cycle)


def random_codebook(seed: int, count: int, d: int = DEFAULT_DIMENSION) -> np.ndarray:
    """``count`` seeded bipolar hypervectors of dimension ``d``, shape ``(count, d)``."""
    if d < 1:
        raise ShapeError("dimension must be >= 1")
    if count < 0:
        raise ShapeError("count must be >= 0")
    rng = np.random.default_rng(seed)
    return np.where(rng.integers(0, 2, size=(count, d)) == 1, 1.0, -1.0)


def write_matrix(path, rows) -> None:
    """Plain-text matrix: one vector per line, space-separated, ``repr`` precision."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ShapeError("expected a 2-D matrix")
    lines = [" ".join(repr(float(x)) for x in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    """Inverse of :func:`write_matrix`; blank lines and ``#`` comments are ignored."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        return np.zeros((0, 0))
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: rows have differing lengths")
    return np.array(rows)
