"""Command-line interface.

Subcommands: fit, render, vsg-trace, bench-order, reproject, metrics.
Every command exits 0 on success; failures print one line of the form
"error: <message>" to stderr and exit nonzero (2 for usage problems).
Outputs are byte-identical across reruns for a fixed seed, except the
measured seconds column of bench-order.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .brdf import render_diffuse, render_specular
from .envmap import EnvironmentMap
from .metrics import METRICS, g1_angular, g6_entropy
from .multiview import (
    MultiViewSet,
    depth_projection_error,
    multiview_mask,
    multiview_weight,
)
from .pfm import read_pfm, write_pfm
from .scene import Scene, parse_scene
from .sgfit import FitConfig, fit_sg
from .vsg import bench_orders, composite_sg_after, composite_sg_before, sample_ray


class CliError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with single-line machine-parseable usage errors."""

    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sglight", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit SG lobes to an equirectangular PFM")
    p.add_argument("target", help="environment map, 3-channel PFM")
    p.add_argument("--lobes", type=int, default=3)
    p.add_argument("--out", required=True, help="output lobe text file")
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("render", help="render a scene's gbuffer under SG lighting")
    p.add_argument("scene")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("vsg-trace", help="ray march a volume in one operation order")
    p.add_argument("scene")
    p.add_argument("--order", choices=("before", "after"), required=True)
    p.add_argument("--nr", type=int, default=128, help="samples per ray")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("bench-order", help="time both compositing orders")
    p.add_argument("scene")
    p.add_argument("--rays", type=int, default=100000)
    p.add_argument("--nr-sweep", default="8,32,128", help="comma-separated n_r values")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("reproject", help="cross-view consistency maps for a target view")
    p.add_argument("scene")
    p.add_argument("--target", type=int, required=True, help="target view index")
    p.add_argument("--out", nargs=3, required=True,
                   metavar=("E_PFM", "W_PFM", "M_TXT"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("metrics", help="compare two PFM images")
    p.add_argument("a", help="prediction image")
    p.add_argument("b", help="reference image (read but unused for g6)")
    p.add_argument("--mask", default=None, help="grayscale PFM, nonzero keeps")
    p.add_argument("--metric", choices=sorted(METRICS), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    return parser


def _require(scene: Scene, what: str):
    value = {
        "camera": scene.cameras[0] if scene.cameras else None,
        "gbuffer": scene.gbuffer,
        "lighting": scene.lighting,
        "volume": scene.volume,
    }[what]
    if value is None:
        raise CliError(f"scene lacks a {what} section required by this command")
    return value


def _cmd_fit(args) -> int:
    data = read_pfm(args.target)
    if data.ndim != 3:
        raise CliError("fit target must be a 3-channel PFM")
    result = fit_sg(
        EnvironmentMap(np.asarray(data, dtype=np.float64)),
        FitConfig(num_lobes=args.lobes, max_iterations=args.max_iterations,
                  seed=args.seed),
    )
    lines = []
    for lobe in result.environment.lobes:
        a = lobe.axis
        i = lobe.intensity
        lines.append(
            f"{a[0]:.17g} {a[1]:.17g} {a[2]:.17g} {lobe.sharpness:.17g} "
            f"{i[0]:.17g} {i[1]:.17g} {i[2]:.17g}"
        )
    lines.append(
        f"# loss={result.final_loss:.17g} iterations={result.iterations} "
        f"converged={int(result.converged)}"
    )
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def _cmd_render(args) -> int:
    scene = parse_scene(args.scene)
    cam = _require(scene, "camera")
    g = _require(scene, "gbuffer")
    env = _require(scene, "lighting")
    res = scene.render.quadrature
    diffuse = render_diffuse(g, env, resolution=res).data
    h = g.shape[0]
    threads = max(1, args.threads)
    if threads == 1:
        specular = render_specular(g, env, cam, resolution=res).data
    else:
        bands = [
            slice(start, min(start + max(1, h // threads), h))
            for start in range(0, h, max(1, h // threads))
        ]
        specular = np.zeros_like(diffuse)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(
                lambda band: (band, render_specular(g, env, cam, resolution=res,
                                                    rows=band).data[band]),
                bands,
            )
            for band, part in parts:
                specular[band] = part
    write_pfm(f"{args.out_prefix}_diffuse.pfm", diffuse.astype(np.float32))
    write_pfm(f"{args.out_prefix}_specular.pfm", specular.astype(np.float32))
    write_pfm(f"{args.out_prefix}_full.pfm", (diffuse + specular).astype(np.float32))
    return 0


def _cmd_vsg_trace(args) -> int:
    scene = parse_scene(args.scene)
    cam = _require(scene, "camera")
    vol = _require(scene, "volume")
    width, height = scene.render.width, scene.render.height
    composite = composite_sg_before if args.order == "before" else composite_sg_after
    img = np.zeros((height, width, 3))
    origin = cam.center
    for i in range(height):
        for j in range(width):
            ray = np.array(
                [(j + 0.5 - cam.cx) / cam.fx, (i + 0.5 - cam.cy) / cam.fy, 1.0]
            )
            ray /= np.linalg.norm(ray)
            direction = cam.rotation.T @ ray
            samples = sample_ray(vol, origin, direction, args.nr)
            if len(samples):
                img[i, j] = composite(samples, direction)
    write_pfm(args.out, img.astype(np.float32))
    return 0


def _cmd_bench_order(args) -> int:
    scene = parse_scene(args.scene)
    vol = _require(scene, "volume")
    try:
        sweep = [int(v) for v in args.nr_sweep.split(",") if v.strip()]
    except ValueError:
        raise CliError("--nr-sweep must be comma-separated integers") from None
    if not sweep:
        raise CliError("--nr-sweep is empty")
    with open(args.out, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["order", "n_r", "rays", "g_evals", "seconds"])
        for n_r in sweep:
            result = bench_orders(vol, rays=args.rays, n_r=n_r, seed=args.seed)
            writer.writerow(["before", n_r, args.rays,
                             result["g_evals_before"],
                             f"{result['seconds_before']:.6f}"])
            writer.writerow(["after", n_r, args.rays,
                             result["g_evals_after"],
                             f"{result['seconds_after']:.6f}"])
    return 0


def _cmd_reproject(args) -> int:
    scene = parse_scene(args.scene)
    if len(scene.cameras) < 2:
        raise CliError("reproject needs at least two cameras")
    mvs = MultiViewSet(tuple(scene.cameras), target=args.target)
    tview = mvs.views[args.target]
    if tview.depth is None:
        raise CliError(f"camera {args.target} has no depth map")
    h, w = tview.depth.shape
    k = len(mvs)
    emap = np.zeros((h, w, k))
    wmap = np.zeros((h, w, k))
    mask_lines = []
    for i in range(h):
        for j in range(w):
            e = depth_projection_error(mvs, (i, j))
            emap[i, j] = e
            wmap[i, j] = multiview_weight(e)
            m = multiview_mask(e)
            mask_lines.append(f"{i} {j} " + " ".join(str(v) for v in m))
    # K views tiled horizontally into grayscale maps
    write_pfm(args.out[0], emap.transpose(0, 2, 1).reshape(h, w * k).astype(np.float32))
    write_pfm(args.out[1], wmap.transpose(0, 2, 1).reshape(h, w * k).astype(np.float32))
    with open(args.out[2], "w", encoding="ascii") as fh:
        fh.write("\n".join(mask_lines) + "\n")
    return 0


def _cmd_metrics(args) -> int:
    a = np.asarray(read_pfm(args.a), dtype=np.float64)
    if args.metric == "g6":
        value = g6_entropy(a)
        print(f"{value:.17g}")
        return 0
    b = np.asarray(read_pfm(args.b), dtype=np.float64)
    if a.shape != b.shape:
        raise CliError("images must share a shape")
    if args.mask is not None:
        mask = np.asarray(read_pfm(args.mask), dtype=np.float64)
        if mask.ndim != 2:
            raise CliError("mask must be a grayscale PFM")
    else:
        mask = np.ones(a.shape[:2] if a.ndim == 3 else a.shape)
    if args.metric == "g1":
        value = g1_angular(a, b, mask)
    else:
        value = METRICS[args.metric](a, b, mask)
    print(f"{value:.17g}")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "render": _cmd_render,
    "vsg-trace": _cmd_vsg_trace,
    "bench-order": _cmd_bench_order,
    "reproject": _cmd_reproject,
    "metrics": _cmd_metrics,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CliError, ValueError, OSError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
