"""Render the 16-session x 998-pair dataset at desk resolution and time it.

    python scripts/generate_full_scale.py --out runs/full64 --workers 4
"""

import argparse
import os
import sys
import time

from olivesynth.dataset import generate_dataset, reconcile
from olivesynth.render import RenderConfig
from olivesynth.scene import SceneConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--sessions", type=int, default=16)
    ap.add_argument("--pairs", type=int, default=998)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--spp", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--colorspace", choices=("rgb", "iga"), default="rgb")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    rc = RenderConfig(width=args.size, height=args.size, samples_per_pixel=args.spp)
    t0 = time.perf_counter()

    def progress(n, total):
        if n % 500 == 0 or n == total:
            rate = n / (time.perf_counter() - t0)
            print(f"{n}/{total} pairs, {rate:.1f} pairs/s", file=sys.stderr, flush=True)

    m = generate_dataset(SceneConfig(seed=args.seed), args.sessions, args.pairs, args.out, render_config=rc,
                         colorspace=args.colorspace, workers=args.workers, progress=progress)
    elapsed = time.perf_counter() - t0
    print(f"{m.total_pairs} pairs ({m.fresh_pairs} rendered) in {elapsed:.1f} s with {args.workers} worker(s)")
    print(f"config_hash {m.config_hash}")
    print(reconcile(args.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
