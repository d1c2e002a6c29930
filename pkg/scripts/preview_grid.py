"""Render one preview per background x lighting preset into a contact sheet.

    python scripts/preview_grid.py --out previews/ --size 256
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from olivesynth.pngio import write_png
from olivesynth.render import RenderConfig, render
from olivesynth.scene import BACKGROUNDS, LIGHTINGS, SceneConfig, assemble_scene


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--spp", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--shadows", action="store_true")
    args = ap.parse_args()

    base = SceneConfig(seed=args.seed)
    base = dataclasses.replace(base, camera=dataclasses.replace(base.camera, image_width=args.size,
                                                                  image_height=args.size))
    rc = RenderConfig(width=args.size, height=args.size, samples_per_pixel=args.spp, shadows=args.shadows)
    rows = []
    for light in LIGHTINGS:
        tiles = []
        for bg in BACKGROUNDS:
            pair = render(assemble_scene(dataclasses.replace(base, background=bg, lighting=light)), rc)
            write_png(args.out / f"{bg}_{light}.png", pair.image)
            write_png(args.out / f"{bg}_{light}_mask.png", pair.mask)
            overlay = pair.image.copy()
            overlay[pair.mask == 255] = (0.5 * overlay[pair.mask == 255] + [128, 0, 64]).astype(np.uint8)
            tiles.append(np.concatenate([pair.image, overlay], axis=0))
        rows.append(np.concatenate(tiles, axis=1))
    sheet = np.concatenate(rows, axis=0)
    write_png(args.out / "contact_sheet.png", sheet)
    print(f"wrote {len(BACKGROUNDS) * len(LIGHTINGS)} previews and contact_sheet.png to {args.out}")


if __name__ == "__main__":
    main()
