"""Command-line entry point: ``tacmode <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from tacmode.core import load_png, save_png
from tacmode.inpaint import InpaintRequest, inpaint
from tacmode.markers import (
    ExtractConfig,
    MarkerSet,
    default_offset,
    extract_markers,
    motion_field,
    offset_mask,
    read_field,
    read_markers,
    write_markers,
)
from tacmode.metrics import motion_errors, mse, psnr, ssim
from tacmode.patches import merge_patches, plan_patches, slice_patches
from tacmode.slip import FrameStream, SlipConfig, calibrate_epsilon, load_frame_dir, process_stream
from tacmode.synth import Dome, SceneSpec, gen_scene, gen_slip_sequence
from tacmode.tacdiff import (
    ClassicalDenoiser,
    ExternalDenoiser,
    OracleDenoiser,
    make_offset_pairs,
    schedule_linear,
)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TACMODE_SEED")
    return int(env) if env else 0


def _floats(text: str, n: int) -> tuple[float, ...]:
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _extract_cfg(args) -> ExtractConfig:
    return ExtractConfig(
        spacing=args.spacing, radius=args.radius, k=args.k, min_contrast=args.min_contrast, dilate=args.dilate
    )


def _add_extract_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("marker extraction")
    g.add_argument("--spacing", type=float, default=36.0, help="nominal marker spacing, px")
    g.add_argument("--radius", type=float, default=4.0, help="nominal marker radius, px")
    g.add_argument("--k", type=float, default=2.0, help="threshold in local standard deviations")
    g.add_argument("--min-contrast", type=float, default=0.05)
    g.add_argument("--dilate", type=int, default=1, help="mask dilation, px")


def _markers_from(path: str, args) -> MarkerSet:
    p = Path(path)
    if p.suffix == ".png":
        return extract_markers(load_png(p), _extract_cfg(args))[1]
    return read_markers(p)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_synth(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dome = None
    if args.dome:
        cx, cy, r, depth = _floats(args.dome, 4)
        dome = Dome(cx, cy, r, depth)
    spec = SceneSpec(
        w=args.width,
        h=args.height,
        spacing=args.spacing,
        radius=args.radius,
        dome=dome,
        shear_amp=args.shear_amp,
        shear_sigma=args.shear_sigma,
        shear_dir=_floats(args.shear_dir, 2),
        texture_amp=args.texture,
        seed=_seed(args),
    )
    manifest = {"spec": spec.to_dict()}
    if args.frames:
        seq = gen_slip_sequence(
            spec, args.frames, args.slip_start, args.slip_rate, jitter=args.jitter, direction=_floats(args.slip_dir, 2)
        )
        (out / "frames").mkdir(exist_ok=True)
        (out / "markers").mkdir(exist_ok=True)
        for k, (img, ms) in enumerate(seq):
            save_png(img, out / "frames" / f"frame_{k:04d}.png")
            write_markers(out / "markers" / f"frame_{k:04d}.csv", ms)
        manifest["sequence"] = {
            "n_frames": args.frames,
            "slip_start": args.slip_start,
            "slip_rate": args.slip_rate,
            "jitter": args.jitter,
            "direction": list(seq.direction),
            "displacement": [round(float(d), 6) for d in seq.displacement],
        }
        scene = seq.scene
    else:
        scene = gen_scene(spec)
    save_png(scene.markerless, out / "markerless.png")
    save_png(scene.with_markers, out / "with_markers.png")
    save_png(scene.mask, out / "mask.png")
    write_markers(out / "markers.csv", scene.markers)
    write_markers(out / "field.csv", scene.field)
    _write_json(out / "manifest.json", manifest)
    print(f"wrote scene bundle to {out} ({len(scene.markers)} markers)")


def cmd_extract(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mask, ms = extract_markers(load_png(args.image), _extract_cfg(args))
    save_png(mask, out / "mask.png")
    write_markers(out / "markers.csv", ms)
    print(f"markers={len(ms)}")


def cmd_offset_mask(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mask = load_png(args.mask)
    ms = read_markers(args.markers)
    if (args.dx is None) != (args.dy is None):
        raise ValueError("give both --dx and --dy or neither")
    dx, dy = (args.dx, args.dy) if args.dx is not None else default_offset(ms)
    mask2, ms2 = offset_mask(mask, ms, dx, dy)
    save_png(mask2, out / "mask.png")
    write_markers(out / "markers.csv", ms2)
    print(f"dx={dx}\ndy={dy}\nmarkers={len(ms2)}")


def _denoiser(args):
    if args.oracle:
        return OracleDenoiser(load_png(args.oracle))
    if args.denoiser_cmd:
        return ExternalDenoiser(args.denoiser_cmd, patch_size=args.patch_size or 256)
    return ClassicalDenoiser()


def cmd_inpaint(args) -> None:
    if args.bundle:
        image_path = args.image or str(Path(args.bundle) / "with_markers.png")
        mask_path = args.mask or str(Path(args.bundle) / "mask.png")
    else:
        if not (args.image and args.mask):
            raise ValueError("--image and --mask are required without --bundle")
        image_path, mask_path = args.image, args.mask
    req = InpaintRequest(load_png(image_path), load_png(mask_path), args.method)
    if args.method == "fmm":
        out = inpaint(req, radius=args.fmm_radius)
    elif args.method == "harmonic":
        out = inpaint(req, tol=args.tol, max_iters=args.max_iters)
    else:
        sched = schedule_linear(args.steps, args.beta_start, args.beta_end)
        out = inpaint(
            req,
            denoiser=_denoiser(args),
            schedule=sched,
            rng=np.random.default_rng(_seed(args)),
            patch_size=args.patch_size,
            jobs=args.jobs,
        )
    save_png(out, args.out)
    print(f"wrote {args.out}")


def cmd_merge_demo(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img = load_png(args.image)
    h, w = img.shape[:2]
    layout = plan_patches(w, h, args.patch)
    patches = slice_patches(img, layout)
    for k, p in enumerate(patches):
        save_png(p, out / f"patch_{k:02d}.png")
    merged = merge_patches(layout, patches)
    save_png(merged, out / "merged.png")
    _write_json(out / "layout.json", {"image_w": w, "image_h": h, "patch": layout.patch, "origins": [list(o) for o in layout.origins]})
    print(f"patches={len(layout)}\nmax_error={float(np.abs(merged - img).max()):.3g}")


def cmd_make_pairs(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs = make_offset_pairs(
        load_png(args.image), np.random.default_rng(_seed(args)), args.count, args.patch_size, _extract_cfg(args)
    )
    index = []
    for k, p in enumerate(pairs):
        save_png(p.input_patch, out / f"pair_{k:04d}_input.png")
        save_png(p.target_patch, out / f"pair_{k:04d}_target.png")
        save_png(p.mask_patch, out / f"pair_{k:04d}_mask.png")
        index.append({"index": k, "x0": p.rect.x0, "y0": p.rect.y0, "size": p.rect.w, "dx": p.offset[0], "dy": p.offset[1]})
    _write_json(out / "pairs.json", index)
    print(f"pairs={len(pairs)}\ndx={pairs[0].offset[0]}\ndy={pairs[0].offset[1]}")


def cmd_track(args) -> None:
    ref = _markers_from(args.ref, args)
    cur = _markers_from(args.cur, args)
    field = motion_field(ref, cur, args.gate)
    write_markers(args.out, field)
    print(f"matched={len(field)}\nmatched_fraction={field.matched_fraction:.6f}")


def cmd_metrics(args) -> None:
    lines = []
    if args.a or args.b:
        if not (args.a and args.b):
            raise ValueError("--a and --b go together")
        a, b = load_png(args.a), load_png(args.b)
        lines += [f"mse={mse(a, b):.6f}", f"psnr={psnr(a, b):.6f}", f"ssim={ssim(a, b):.6f}"]
    if args.pred or args.truth:
        if not (args.pred and args.truth):
            raise ValueError("--pred and --truth go together")
        pred, truth = read_field(args.pred), read_field(args.truth)
        rep = motion_errors(pred, truth, args.gate)
        lines += [
            f"e_rmse={rep.e_rmse:.6f}",
            f"e_mag={rep.e_mag:.6f}",
            f"n_matched={rep.n_matched}",
            f"failed={int(rep.failed)}",
        ]
    if not lines:
        raise ValueError("give --a/--b images and/or --pred/--truth motion fields")
    print("\n".join(lines))


def _slip_cfg(args) -> SlipConfig:
    return SlipConfig(epsilon_v=args.epsilon, gate=args.gate, min_markers=args.min_markers)


def cmd_slip(args) -> None:
    frames = load_frame_dir(args.frames)
    t0 = time.perf_counter()
    events = process_stream(FrameStream(frames, args.rate), _slip_cfg(args), _extract_cfg(args))
    elapsed = time.perf_counter() - t0
    text = "frame,max_disp,marker_index\n" + "".join(
        f"{e.frame_index},{e.max_disp:.3f},{e.marker_index}\n" for e in events
    )
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"events={len(events)} elapsed={elapsed:.3f}s", file=sys.stderr)


def cmd_calibrate_slip(args) -> None:
    cfg = SlipConfig(epsilon_v=1e9, gate=args.gate, min_markers=args.min_markers)
    peak, eps = calibrate_epsilon(load_frame_dir(args.frames), cfg, _extract_cfg(args), args.factor)
    print(f"max_disp={peak:.6f}\nepsilon={eps:.6f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tacmode", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("synth", help="write a synthetic scene or slip-sequence bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--spacing", type=float, default=36.0)
    p.add_argument("--radius", type=float, default=4.0)
    p.add_argument("--shear-amp", type=float, default=0.0)
    p.add_argument("--shear-sigma", type=float, default=120.0)
    p.add_argument("--shear-dir", default="1,0")
    p.add_argument("--dome", help="cx,cy,radius,depth")
    p.add_argument("--texture", type=float, default=0.01)
    p.add_argument("--frames", type=int, default=0, help="write a slip sequence of this many frames")
    p.add_argument("--slip-start", type=int, default=0)
    p.add_argument("--slip-rate", type=float, default=0.0)
    p.add_argument("--slip-dir", default="1,0")
    p.add_argument("--jitter", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract the marker mask and centers from an image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    _add_extract_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("offset-mask", help="translate a marker mask (default: half spacing)")
    p.add_argument("--mask", required=True)
    p.add_argument("--markers", required=True)
    p.add_argument("--dx", type=int)
    p.add_argument("--dy", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_offset_mask)

    p = sub.add_parser("inpaint", help="remove markers by inpainting")
    p.add_argument("--bundle", help="scene bundle providing with_markers.png and mask.png")
    p.add_argument("--image")
    p.add_argument("--mask")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("fmm", "harmonic", "tacdiff"), default="fmm")
    p.add_argument("--fmm-radius", type=float, default=5.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=0.02)
    p.add_argument("--seed", type=int)
    p.add_argument("--denoiser-cmd", help="external TACT denoiser program")
    p.add_argument("--oracle", help="clean image used as a perfect denoiser")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("merge-demo", help="slice an image into patches and merge them back")
    p.add_argument("--image", required=True)
    p.add_argument("--patch", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge_demo)

    p = sub.add_parser("make-pairs", help="marker-offset training pairs from a marker image")
    p.add_argument("--image", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--patch-size", type=int, default=256)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    _add_extract_flags(p)
    p.set_defaults(func=cmd_make_pairs)

    p = sub.add_parser("track", help="motion field between a reference and a current frame")
    p.add_argument("--ref", required=True, help="PNG image or marker file")
    p.add_argument("--cur", required=True, help="PNG image or marker file")
    p.add_argument("--gate", type=float)
    p.add_argument("--out", required=True)
    _add_extract_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("metrics", help="image-quality and motion-field metrics")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.add_argument("--gate", type=float, default=16.0)
    p.set_defaults(func=cmd_metrics)

    for name, func, helptext in (
        ("slip", cmd_slip, "detect slip events in a frame sequence"),
        ("calibrate-slip", cmd_calibrate_slip, "suggest epsilon from a static hold"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--frames", required=True, help="directory of numbered PNGs or marker files")
        p.add_argument("--gate", type=float)
        p.add_argument("--min-markers", type=int, default=4)
        if name == "slip":
            p.add_argument("--epsilon", type=float, default=1.5)
            p.add_argument("--rate", type=float, default=30.0, help="nominal frame rate, frames/s")
            p.add_argument("--out")
        else:
            p.add_argument("--factor", type=float, default=3.0)
        _add_extract_flags(p)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # reported as one machine-parsable line
        if args.verbose:
            raise
        msg = " ".join(str(exc).split())
        print(f"error: {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
