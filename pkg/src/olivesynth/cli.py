"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .errors import OliveSynthError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are 1 here
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the scene/mesh seed")
    p.add_argument("--config", type=Path, default=None, help="scene config JSON file")
    p.add_argument("--out", type=Path, required=out_required, default=None, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="olivesynth", description="Synthetic olive-canopy image/mask generator and tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    g = sub.add_parser("generate", help="render a dataset of image/mask pairs")
    _common(g, out_required=True)
    g.add_argument("--sessions", type=int, default=1)
    g.add_argument("--pairs", type=int, default=1, help="pairs per session")
    g.add_argument("--size", type=int, default=256, help="square image size in pixels")
    g.add_argument("--spp", type=int, default=4, help="samples per pixel")
    g.add_argument("--colorspace", choices=("rgb", "iga"), default="rgb")
    g.add_argument("--intensity", choices=("mean", "max", "luma709"), default="mean")
    g.add_argument("--camera-jitter", type=float, default=40.0, help="per-pair camera pan half-width, cm")
    g.add_argument("--workers", type=int, default=1, help="render processes")
    g.add_argument("--backend", choices=("auto", "numpy", "numba"), default="auto")
    g.add_argument("--quiet", action="store_true")

    e = sub.add_parser("export-mesh", help="write a procedural mesh as Wavefront OBJ")
    _common(e)
    e.add_argument("kind", choices=("olive", "leaf", "branch"))

    sub.add_parser("list-textures", help="print the builtin olive texture presets as JSON")

    c = sub.add_parser("convert-iga", help="convert a directory of RGB PNGs to IGA space")
    c.add_argument("--in", dest="src", type=Path, required=True)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--intensity", choices=("mean", "max", "luma709"), default="mean")
    c.add_argument("--workers", type=int, default=1)

    v = sub.add_parser("eval-iou", help="score predicted masks against ground truth")
    v.add_argument("--pred", type=Path, required=True)
    v.add_argument("--gt", type=Path, required=True)
    v.add_argument("--threshold", type=int, default=128)
    v.add_argument("--report", type=Path, default=None, help="write the JSON report here")

    pv = sub.add_parser("preview", help="render one scene to <out>.png and <out>_mask.png")
    _common(pv, out_required=True)
    pv.add_argument("--size", type=int, default=256)
    pv.add_argument("--spp", type=int, default=4)
    pv.add_argument("--shadows", action="store_true")
    return parser


def _scene_config(args):
    from .scene import SceneConfig

    config = SceneConfig.from_json(args.config.read_text()) if args.config else SceneConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _cmd_generate(args) -> int:
    from .dataset import generate_dataset
    from .render import RenderConfig

    config = _scene_config(args)
    rc = RenderConfig(width=args.size, height=args.size, samples_per_pixel=args.spp, backend=args.backend)

    def progress(n, total):
        if not args.quiet and (n == total or n % 100 == 0):
            print(f"\r{n}/{total} pairs", end="\n" if n == total else "", file=sys.stderr, flush=True)

    manifest = generate_dataset(
        config, args.sessions, args.pairs, args.out,
        render_config=rc, camera_jitter=args.camera_jitter, colorspace=args.colorspace,
        intensity=args.intensity, workers=args.workers, progress=progress,
    )
    print(f"{manifest.total_pairs} pairs ({manifest.fresh_pairs} rendered) in {args.out}; "
          f"config_hash {manifest.config_hash}")
    return EXIT_OK


def _cmd_export_mesh(args) -> int:
    from .branch import LeafParams, make_leaf
    from .mesh import to_obj
    from .olive import OliveShapeParams, make_olive
    from .scene import branch_prototype

    seed = 0 if args.seed is None else args.seed
    if args.kind == "olive":
        mesh = make_olive(OliveShapeParams(), seed)
    elif args.kind == "leaf":
        mesh = make_leaf(LeafParams(), seed)
    else:
        mesh = branch_prototype(seed)
    text = to_obj(mesh, f"{args.kind}_{seed}")
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        print(f"wrote {args.out} ({len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles)")
    return EXIT_OK


def _cmd_list_textures(args) -> int:
    from .texturing import builtin_presets

    print(json.dumps([p.to_dict() for p in builtin_presets()], indent=2))
    return EXIT_OK


def _cmd_convert_iga(args) -> int:
    from .colorspace import convert_directory

    written = convert_directory(args.src, args.out, args.intensity, args.workers)
    print(f"wrote {len(written)} files to {args.out}")
    return EXIT_OK


def _cmd_eval_iou(args) -> int:
    from .evaluation import evaluate_dirs

    if not 0 <= args.threshold <= 255:
        raise UsageError("--threshold must lie in [0, 255]")
    report = evaluate_dirs(args.pred, args.gt, args.threshold)
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(report.to_json() + "\n")
    for name in report.skipped:
        print(f"warning: unmatched {name}", file=sys.stderr)
    if not report.ok:
        print(f"error: {report.error}", file=sys.stderr)
        return EXIT_RUNTIME
    tp, fp, fn = report.counts
    print(f"micro IoU {report.aggregate_iou:.6f}")
    print(f"macro IoU {report.mean_iou:.6f}")
    print(f"images {len(report.per_image)}  TP {tp}  FP {fp}  FN {fn}  warnings {report.warnings}")
    return EXIT_OK


def _cmd_preview(args) -> int:
    from .pngio import write_png
    from .render import RenderConfig, render
    from .scene import assemble_scene

    config = _scene_config(args)
    config = dataclasses.replace(
        config, camera=dataclasses.replace(config.camera, image_width=args.size, image_height=args.size)
    )
    pair = render(assemble_scene(config),
                  RenderConfig(width=args.size, height=args.size, samples_per_pixel=args.spp, shadows=args.shadows))
    out = args.out.with_suffix("")
    image_path = out.parent / f"{out.name}.png"
    mask_path = out.parent / f"{out.name}_mask.png"
    text = {"scene_seed": str(config.seed), "scene_config_hash": config.config_hash()}
    write_png(image_path, pair.image, text)
    write_png(mask_path, pair.mask, text)
    print(f"wrote {image_path} and {mask_path}")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "export-mesh": _cmd_export_mesh,
    "list-textures": _cmd_list_textures,
    "convert-iga": _cmd_convert_iga,
    "eval-iou": _cmd_eval_iou,
    "preview": _cmd_preview,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OliveSynthError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
