"""Acceptance criteria, one test each, each printing a single PASS/FAIL line.

The full-scale generation criterion renders 2 x 15,968 pairs and takes
roughly 40 minutes on one core.
"""

import hashlib
import json
import math
import os
import time

import numpy as np
import pytest

from olivesynth.branch import bezier_points
from olivesynth.cli import main as cli_main
from olivesynth.colorspace import rgb_to_iga, sweep_all_rgb
from olivesynth.dataset import generate_dataset
from olivesynth.evaluation import MaskPair, evaluate_dirs, iou
from olivesynth.olive import OliveShapeParams, generate_ellipsoid, make_olive
from olivesynth.pngio import read_png
from olivesynth.render import Raycaster, RenderConfig, render
from olivesynth.scene import LEAF, OLIVE, SceneConfig, assemble_scene
from olivesynth.vsa import BatchContext, adversarial_loss, cyclic_loss, random_codebook, total_loss

from oracles import (
    brute_iou, de_casteljau, ellipsoid_residual, euler_characteristic, random_scene_config, rotation_angle_deg,
)


@pytest.fixture
def verdict(request):
    reporter = request.config.pluginmanager.getplugin("terminalreporter")
    start = time.perf_counter()

    def emit(name: str, ok: bool, detail: str, budget_s: float | None = None):
        elapsed = time.perf_counter() - start
        within = budget_s is None or elapsed < budget_s
        status = "PASS" if ok and within else "FAIL"
        budget = f" (budget {budget_s:g} s)" if budget_s is not None else ""
        line = f"[ACCEPTANCE] {status} {name}: {detail}; {elapsed:.2f} s{budget}"
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)
        assert ok, line
        assert within, line

    return emit


def test_geometry_fidelity(verdict):
    start = time.perf_counter()
    ext = make_olive.__wrapped__(OliveShapeParams(), 0).extent()
    rel = np.abs(ext / np.array([1.4, 1.4, 2.5]) - 1.0)
    p = OliveShapeParams()
    residual = ellipsoid_residual(generate_ellipsoid(p).vertices, p.a, p.b, p.c).max()
    chi = euler_characteristic(make_olive(p).triangles)
    ok = rel.max() <= 0.02 and residual < 1e-6 and chi == 2
    verdict("geometry fidelity", ok and time.perf_counter() - start < 1.0,
            f"extent {np.round(ext, 4).tolist()} max rel err {rel.max():.2e}, residual {residual:.1e}, chi {chi}", 1.0)


def test_bezier_oracle(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        degree = int(rng.integers(1, 9))
        cp = rng.uniform(-50, 50, (degree + 1, 3))
        ts = np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 6)])
        got = bezier_points(cp, ts)
        ref = np.array([de_casteljau(cp, t) for t in ts])
        worst = max(worst, float(np.abs(got - ref).max()))
    verdict("Bezier oracle", worst <= 1e-9, f"1000 curves deg<=8, max |diff| {worst:.2e}", 5.0)


def test_scattering_bounds(verdict):
    cfg = SceneConfig(seed=99, olives_per_session=10_000, leaf_layers=4, leaves_per_layer=2_500, branches_per_layer=0)
    inst = assemble_scene(cfg).instances
    violations = 0
    counts = {}
    for cls, max_deg, max_size in ((OLIVE, 45.0, 0.05), (LEAF, 9.0, 0.10)):
        sel = inst.semantic_class == cls
        ang = rotation_angle_deg(inst.rotation[sel], inst.canonical_rotation[sel])
        violations += int(np.count_nonzero(ang > max_deg + 1e-6))
        violations += int(np.count_nonzero(np.abs(inst.scale[sel] - 1.0) > max_size + 1e-12))
        counts[cls] = int(sel.sum())
    ok = violations == 0 and counts[OLIVE] >= 10_000 and counts[LEAF] >= 10_000
    verdict("scattering bounds", ok, f"{counts[OLIVE]} olives + {counts[LEAF]} leaves, {violations} violations", 10.0)


def test_mask_geometry_consistency(verdict):
    rng = np.random.default_rng(7)
    total = agree = 0
    for _ in range(20):
        scene = assemble_scene(random_scene_config(rng, 32))
        mask = render(scene, RenderConfig(width=32, height=32, samples_per_pixel=1)).mask
        ray = Raycaster(scene, 32, 32)
        ref = np.array([[ray.classify((c, r)) == "olive" for c in range(32)] for r in range(32)])
        agree += int(np.count_nonzero((mask == 255) == ref))
        total += ref.size
    verdict("mask-geometry consistency", agree == total, f"{agree}/{total} pixels agree over 20 scenes", 120.0)


def _digest_tree(root) -> dict:
    out = {}
    for dirpath, _, names in os.walk(root):
        for n in names:
            if n.endswith(".png"):
                p = os.path.join(dirpath, n)
                with open(p, "rb") as fh:
                    out[os.path.relpath(p, root)] = hashlib.sha256(fh.read()).hexdigest()
    return out


@pytest.mark.slow
def test_full_scale_generation(verdict, tmp_path):
    rc = RenderConfig(width=64, height=64, workers=1)
    workers = os.cpu_count() or 1
    times, digests, manifests = [], [], []
    for run in ("a", "b"):
        t0 = time.perf_counter()
        m = generate_dataset(SceneConfig(), 16, 998, tmp_path / run, render_config=rc, workers=workers)
        times.append(time.perf_counter() - t0)
        digests.append(_digest_tree(tmp_path / run))
        manifests.append(m)
    identical = digests[0] == digests[1]
    n_files = len(digests[0])
    ok = (identical and n_files == 2 * 15_968 and manifests[0].total_pairs == 15_968
          and manifests[0].config_hash == manifests[1].config_hash and max(times) < 1800)
    verdict("full-scale generation", ok,
            f"16x998 at 64x64 on {workers} core(s), runs {times[0]:.0f} s / {times[1]:.0f} s (< 1800 s each), "
            f"{n_files} PNGs, byte-identical {identical}")


def test_iga_correctness(verdict):
    green = rng_safe = fixed = True
    for rgb, iga in sweep_all_rgb("mean"):
        rgb = rgb.astype(np.int64)
        out = iga.astype(np.int64)
        green &= bool(np.array_equal(out[:, 1], rgb[:, 1]))
        rng_safe &= bool((out[:, 0] >= rgb.min(axis=1)).all() and (out[:, 0] <= rgb.max(axis=1)).all()
                         and (out[:, 2] >= np.minimum(rgb[:, 0], rgb[:, 2])).all()
                         and (out[:, 2] <= np.maximum(rgb[:, 0], rgb[:, 2])).all())
        gray = (rgb[:, 0] == rgb[:, 1]) & (rgb[:, 1] == rgb[:, 2])
        fixed &= bool(np.array_equal(out[gray], rgb[gray]))
        # float route: I = floor(s/3 + 1/2), A = floor((r+b)/2 + 1/2), exact since s/3 never ends in .5
        s = rgb.sum(axis=1)
        green &= bool(np.array_equal(out[:, 0], np.floor(s / 3.0 + 0.5).astype(np.int64)))
        green &= bool(np.array_equal(out[:, 2], np.floor((rgb[:, 0] + rgb[:, 2]) / 2.0 + 0.5).astype(np.int64)))
    example = rgb_to_iga((100, 150, 200)) == (150, 150, 150)
    ok = green and rng_safe and fixed and example
    verdict("IGA correctness", ok, f"2^24 sweep: G kept/float-route {green}, range {rng_safe}, gray fixed {fixed}, "
            f"(100,150,200)->{rgb_to_iga((100, 150, 200))}", 60.0)


def test_vsa_closed_forms(verdict):
    x = list(random_codebook(5, 8, 4096))
    gan = adversarial_loss(BatchContext(v_x=x, v_y=x, v_gx=x, f_vx=x, d_y=lambda v: 0.5))
    cyc = cyclic_loss(x, x)
    rng = np.random.default_rng(3)
    w = rng.normal(size=4096)
    ctx = BatchContext(
        v_x=list(rng.normal(size=(8, 4096))), v_y=list(rng.normal(size=(8, 4096))),
        v_gx=list(rng.normal(size=(8, 4096))), f_vx=list(rng.normal(size=(8, 4096))),
        v_cycle=list(rng.normal(size=(8, 4096))),
        d_y=lambda v: 1.0 / (1.0 + math.exp(-float(v @ w) / 4096.0)),
    )
    add = abs(total_loss(ctx) - (adversarial_loss(ctx) + cyclic_loss(ctx.v_x, ctx.v_cycle)))
    e_gan = abs(gan - 3 * math.log(0.5))
    ok = e_gan <= 1e-12 and cyc == 0.0 and add <= 1e-12
    verdict("VSA loss closed forms", ok, f"|L_GAN - 3 ln 0.5| {e_gan:.1e}, L_VSA(identity) {cyc}, additivity {add:.1e}",
            1.0)


def test_iou_oracle(verdict, tmp_path):
    from olivesynth.pngio import write_png

    rng = np.random.default_rng(11)
    exact = 0
    for _ in range(1000):
        density_p, density_g = rng.random(2)
        p = np.where(rng.random((16, 16)) < density_p, rng.integers(128, 256, (16, 16)),
                     rng.integers(0, 128, (16, 16))).astype(np.uint8)
        g = np.where(rng.random((16, 16)) < density_g, 255, 0).astype(np.uint8)
        exact += iou(MaskPair(p, g)) == brute_iou(p.tolist(), g.tolist())
    for i in range(5):
        write_png(tmp_path / f"m{i}_mask.png", np.where(rng.random((16, 16)) < 0.4, 255, 0).astype(np.uint8))
    report = evaluate_dirs(tmp_path, tmp_path)
    ok = exact == 1000 and report.aggregate_iou == 1.0 and report.mean_iou == 1.0
    verdict("IoU oracle", ok, f"{exact}/1000 exact matches, identical-dir micro {report.aggregate_iou} "
            f"macro {report.mean_iou}", 10.0)


def test_published_iou_not_reproducible(verdict, tmp_path, capsys):
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps({"seed": 3}))
    out = tmp_path / "ds"
    code = cli_main(["generate", "--config", str(scene), "--sessions", "1", "--pairs", "2", "--size", "256",
                     "--out", str(out), "--quiet"])
    images = sorted((out / "images").glob("*.png"))
    masks = sorted((out / "masks").glob("*_mask.png"))
    shapes_ok = len(images) == len(masks) == 2
    for ip, mp in zip(images, masks):
        img, _ = read_png(ip)
        mask, _ = read_png(mp)
        shapes_ok &= img.shape == (256, 256, 3) and mask.shape == (256, 256)
        shapes_ok &= set(np.unique(mask)) <= {0, 255}
    report_path = tmp_path / "report.json"
    code2 = cli_main(["eval-iou", "--pred", str(out / "masks"), "--gt", str(out / "masks"),
                      "--report", str(report_path)])
    report = json.loads(report_path.read_text())
    report_ok = (report["aggregate_iou"] == 1.0 and report["mean_iou"] == 1.0
                 and set(report["counts"]) == {"tp", "fp", "fn"} and len(report["per_image"]) == 2)
    ok = code == 0 and code2 == 0 and shapes_ok and report_ok
    verdict("published IoU figures not reproducible at desk scale", ok,
            "segmentation-model IoU figures need trained networks on private imagery (substituted by the suites "
            f"above); generate -> eval-iou smoke at 256x256: exit codes {code}/{code2}, shapes {shapes_ok}, "
            f"report {report_ok}")
