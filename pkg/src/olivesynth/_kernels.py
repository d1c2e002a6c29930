"""Compiled loops for triangle culling and z-buffer rasterisation.

Each kernel evaluates the same expressions in the same order as the numpy
path in :mod:`olivesynth.render`, so both produce bit-identical buffers.
Import fails cleanly when numba is unavailable.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _has_sample(lo, hi, offsets_1d, limit):
    for o in offsets_1d:
        a = max(math.ceil(lo - o), 0.0)
        b = min(math.floor(hi - o), limit - 1.0)
        if a <= b:
            return True
    return False


@njit(cache=True)
def cull_triangles(sxv, syv, d, tris, near, width, height, xs, ys, keep_k, keep_t, part_k, part_t):
    """Split instance triangles into kept (in front of ``near`` and covering a sample) and straddling.

    Writes row-major ``(instance, triangle)`` indices into the output arrays and
    returns the two counts.
    """
    n = 0
    m = 0
    for k in range(sxv.shape[0]):
        for t in range(tris.shape[0]):
            a, b, c = tris[t, 0], tris[t, 1], tris[t, 2]
            da, db, dc = d[k, a], d[k, b], d[k, c]
            if min(min(da, db), dc) >= near:
                xa, xb, xc = sxv[k, a], sxv[k, b], sxv[k, c]
                ya, yb, yc = syv[k, a], syv[k, b], syv[k, c]
                x0, x1 = min(min(xa, xb), xc), max(max(xa, xb), xc)
                y0, y1 = min(min(ya, yb), yc), max(max(ya, yb), yc)
                if _has_sample(x0, x1, xs, width) and _has_sample(y0, y1, ys, height):
                    keep_k[n] = k
                    keep_t[n] = t
                    n += 1
            elif max(max(da, db), dc) >= near:
                part_k[m] = k
                part_t[m] = t
                m += 1
    return n, m


@njit(cache=True)
def rasterize(sx, sy, iz, width, height, offsets, tri_map, bary, inv_depth):
    """Nearest-triangle z-buffer over all samples; strict ``>`` keeps the lowest index on ties."""
    for s in range(offsets.shape[0]):
        ox, oy = offsets[s, 0], offsets[s, 1]
        for t in range(sx.shape[0]):
            ax, bx, cx = sx[t, 0], sx[t, 1], sx[t, 2]
            ay, by, cy = sy[t, 0], sy[t, 1], sy[t, 2]
            xmin, xmax = min(min(ax, bx), cx), max(max(ax, bx), cx)
            ymin, ymax = min(min(ay, by), cy), max(max(ay, by), cy)
            # clamp to [-1, size] before the int conversion so huge coordinates stay defined
            c_lo = int(min(max(math.ceil(xmin - ox), 0.0), width))
            c_hi = int(max(min(math.floor(xmax - ox), width - 1.0), -1.0))
            r_lo = int(min(max(math.ceil(ymin - oy), 0.0), height))
            r_hi = int(max(min(math.floor(ymax - oy), height - 1.0), -1.0))
            for row in range(r_lo, r_hi + 1):
                py = row + oy
                for col in range(c_lo, c_hi + 1):
                    px = col + ox
                    w0 = (bx - px) * (cy - py) - (by - py) * (cx - px)
                    w1 = (cx - px) * (ay - py) - (cy - py) * (ax - px)
                    w2 = (ax - px) * (by - py) - (ay - py) * (bx - px)
                    area = w0 + w1 + w2
                    if area == 0.0:
                        continue
                    if not ((w0 >= 0 and w1 >= 0 and w2 >= 0) or (w0 <= 0 and w1 <= 0 and w2 <= 0)):
                        continue
                    b0, b1, b2 = w0 / area, w1 / area, w2 / area
                    inv_d = b0 * iz[t, 0] + b1 * iz[t, 1] + b2 * iz[t, 2]
                    if inv_d > inv_depth[s, row, col]:
                        inv_depth[s, row, col] = inv_d
                        tri_map[s, row, col] = t
                        bary[s, row, col, 0] = b0
                        bary[s, row, col, 1] = b1
                        bary[s, row, col, 2] = b2


def empty_buffers(spp: int, height: int, width: int):
    return (
        np.full((spp, height, width), -1, dtype=np.int64),
        np.zeros((spp, height, width, 3)),
        np.full((spp, height, width), -np.inf),
    )
