"""Command line interface.

Subcommands:
  render    render a scene config to an image file
  bench     sweep sample budgets, print a CSV report (optionally with a plot)
  validate  run the built-in correctness checks

Diagnostics always go to stderr; stdout carries only machine-readable output
(the bench CSV), so reports can be piped cleanly.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from . import __version__
from .assets import load_ply
from .config import (
    DEPTH_MODES,
    ConfigError,
    RenderSettings,
    load_scene_config,
    parse_vec3,
)
from .render import image_metrics, render, scene_bvh, set_threads, write_image
from .validate import run_all


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load_scene(args):
    asset_path, camera, settings = load_scene_config(args.scene)
    if asset_path is None:
        raise ConfigError(f"{args.scene}: config does not name an asset")
    asset = load_ply(asset_path)
    overrides = {}
    if getattr(args, "spp", None) is not None:
        overrides["spp"] = args.spp
    if getattr(args, "depth_mode", None) is not None:
        overrides["depth_mode"] = args.depth_mode
    if getattr(args, "multisample", None) is not None:
        overrides["multisample"] = args.multisample
    if getattr(args, "background", None) is not None:
        overrides["background"] = parse_vec3(args.background)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "reference", False):
        overrides["reference_mode"] = True
    if getattr(args, "width", None) is not None:
        overrides["width"] = args.width
    if getattr(args, "height", None) is not None:
        overrides["height"] = args.height
    if overrides:
        fields = {
            "width": settings.width,
            "height": settings.height,
            "spp": settings.spp,
            "depth_mode": settings.depth_mode,
            "cutoff_s": settings.cutoff_s,
            "multisample": settings.multisample,
            "background": settings.background,
            "seed": settings.seed,
            "reference_mode": settings.reference_mode,
        }
        fields.update(overrides)
        settings = RenderSettings(**fields)
    return asset, camera, settings


def cmd_render(args) -> int:
    asset, camera, settings = _load_scene(args)
    threads = set_threads(args.threads)
    start = time.perf_counter()
    buffer = render(asset, camera, settings)
    elapsed = time.perf_counter() - start
    write_image(buffer, args.out, args.format)
    rays = settings.width * settings.height * settings.passes
    _log(
        f"rendered {settings.width}x{settings.height} spp={buffer.spp} "
        f"multisample={settings.multisample} depth_mode={settings.depth_mode} "
        f"primitives={len(asset)} threads={threads} "
        f"time={elapsed:.2f}s rays_per_s={rays / max(elapsed, 1e-9):.0f}"
    )
    _log(f"wrote {args.out}")
    return 0


def _parse_grid(text: str) -> list[tuple[int, int]]:
    grid = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "x" not in item:
            raise ConfigError(f"bad grid entry {item!r}, expected SPPxN")
        spp_s, n_s = item.split("x", 1)
        grid.append((int(spp_s), int(n_s)))
    if not grid:
        raise ConfigError("empty benchmark grid")
    return grid


def cmd_bench(args) -> int:
    asset, camera, settings = _load_scene(args)
    threads = set_threads(args.threads)
    grid = _parse_grid(args.grid)
    bvh = scene_bvh(asset, settings.cutoff_s)
    _log(
        f"bench: {settings.width}x{settings.height} primitives={len(asset)} "
        f"depth_mode={settings.depth_mode} seed={settings.seed} threads={threads}"
    )

    header = ["spp", "multisample", "passes", "time_s", "rays_per_s", "mse", "psnr"]
    if args.compare_biased:
        header += ["mse_biased", "psnr_biased"]
    print(",".join(header))

    rows = []
    for spp, n in grid:
        run = RenderSettings(
            width=settings.width, height=settings.height, spp=spp,
            depth_mode=settings.depth_mode, cutoff_s=settings.cutoff_s,
            multisample=n, background=settings.background, seed=settings.seed,
        )
        ref = RenderSettings(
            width=run.width, height=run.height, spp=run.passes,
            depth_mode=run.depth_mode, cutoff_s=run.cutoff_s,
            background=run.background, seed=run.seed, reference_mode=True,
        )
        reference = render(asset, camera, ref)
        start = time.perf_counter()
        buffer = render(asset, camera, run, bvh=bvh)
        elapsed = time.perf_counter() - start
        metrics = image_metrics(buffer, reference)
        rays = run.width * run.height * run.passes
        row = [
            str(spp), str(n), str(run.passes), f"{elapsed:.4f}",
            f"{rays / max(elapsed, 1e-9):.0f}",
            f"{metrics['mse']:.6e}", f"{metrics['psnr']:.3f}",
        ]
        if args.compare_biased:
            biased = _biased_frame(asset, camera, run, args.compare_biased)
            diff = biased - reference.rgb
            mseb = float(np.mean(diff * diff))
            peak = max(1.0, float(reference.rgb.max()))
            psnrb = float("inf") if mseb == 0 else 10.0 * math.log10(peak * peak / mseb)
            row += [f"{mseb:.6e}", f"{psnrb:.3f}"]
        print(",".join(row))
        rows.append((spp, n, metrics["mse"]))

    if args.plot:
        _write_plot(rows, args.plot)
        _log(f"wrote {args.plot}")
    return 0


def _biased_frame(asset, camera, settings, k: int) -> np.ndarray:
    """Biased k-nearest render over the same jitter stream, pixel averaged."""
    from . import kernels
    from .render import camera_basis
    from .sampling import pixel_jitter

    fwd, right, up = camera_basis(camera)
    half_h = math.tan(math.radians(camera.fov_deg) / 2.0)
    half_w = half_h * (settings.width / settings.height)
    h, w = settings.height, settings.width
    pack = asset.packed
    pxs, pys = np.meshgrid(np.arange(w), np.arange(h))
    out = np.zeros((h, w, 3))
    mode = 0 if settings.depth_mode == "mean" else 1
    s2 = settings.cutoff_s**2
    tmax = float(np.finfo(np.float64).max)
    for f in range(settings.passes):
        jit = np.array(
            [pixel_jitter((x, y), f, settings.seed) for x, y in zip(pxs.ravel(), pys.ravel())]
        )
        u = 2.0 * (pxs.ravel() + jit[:, 0]) / w - 1.0
        v = 1.0 - 2.0 * (pys.ravel() + jit[:, 1]) / h
        dirs = (
            fwd[None, :]
            + u[:, None] * half_w * right[None, :]
            + v[:, None] * half_h * up[None, :]
        )
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.tile(camera.position, (dirs.shape[0], 1))
        rgb = np.zeros((dirs.shape[0], 3))
        kernels.biased_batch(
            pack.means, pack.cov_inv6, pack.opacities, pack.sh, pack.sh_degree,
            origins, dirs, 0.0, tmax, mode, s2, k,
            settings.background[0], settings.background[1], settings.background[2],
            rgb,
        )
        out += rgb.reshape(h, w, 3)
    return out / settings.passes


def _write_plot(rows, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    spp = [r[0] for r in rows]
    mse = [r[2] for r in rows]
    ax.loglog(spp, mse, "o-", label="measured MSE")
    if mse[0] > 0:
        ax.loglog(spp, [mse[0] * spp[0] / s for s in spp], "--", label="1/spp")
    ax.set_xlabel("samples per pixel")
    ax.set_ylabel("MSE vs exact reference")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_validate(args) -> int:
    set_threads(args.threads)
    results = run_all(seed=args.seed)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        _log(f"[{status}] {r.name:<{width}}  {r.detail}")
        failed += 0 if r.passed else 1
    _log(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatray",
        description="Stochastic CPU ray tracer for 3D Gaussian splat assets",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render a scene config to an image")
    p_render.add_argument("--scene", required=True, help="scene config file")
    p_render.add_argument("--out", required=True, help="output image path")
    p_render.add_argument("--spp", type=int, help="samples per pixel (overrides config)")
    p_render.add_argument("--depth-mode", choices=DEPTH_MODES, dest="depth_mode")
    p_render.add_argument("--multisample", type=int, help="samples per BVH walk")
    p_render.add_argument("--reference", action="store_true",
                          help="exact sorted compositing instead of stochastic sampling")
    p_render.add_argument("--background", help="background color r,g,b")
    p_render.add_argument("--seed", type=int)
    p_render.add_argument("--threads", type=int)
    p_render.add_argument("--width", type=int)
    p_render.add_argument("--height", type=int)
    p_render.add_argument("--format", choices=("png", "pfm"),
                          help="output format (default: from file extension)")
    p_render.set_defaults(func=cmd_render)

    p_bench = sub.add_parser("bench", help="benchmark sample budgets, CSV to stdout")
    p_bench.add_argument("--scene", required=True)
    p_bench.add_argument("--grid", default="1024x1,256x4,64x16",
                         help="comma list of SPPxMULTISAMPLE cells (default %(default)s)")
    p_bench.add_argument("--depth-mode", choices=DEPTH_MODES, dest="depth_mode")
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--threads", type=int)
    p_bench.add_argument("--width", type=int)
    p_bench.add_argument("--height", type=int)
    p_bench.add_argument("--compare-biased", type=int, metavar="K", default=0,
                         help="also report a biased K-nearest-composite baseline")
    p_bench.add_argument("--plot", help="write an MSE-vs-spp matplotlib figure here")
    p_bench.set_defaults(func=cmd_bench)

    p_val = sub.add_parser("validate", help="run built-in correctness checks")
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--threads", type=int)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
