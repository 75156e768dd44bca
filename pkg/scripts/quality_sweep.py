"""Compare the inpainting methods on synthetic scenes.

    python scripts/quality_sweep.py --scenes 5 --steps 50
"""

import argparse
import time

import numpy as np

from tacmode.inpaint import inpaint_fmm, inpaint_harmonic
from tacmode.metrics import psnr, ssim
from tacmode.synth import Dome, SceneSpec, gen_scene
from tacmode.tacdiff import inpaint_tacdiff, schedule_linear


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=5)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--skip-tacdiff", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    methods = {
        "fmm": lambda s, k: inpaint_fmm(s.with_markers, s.mask),
        "harmonic": lambda s, k: inpaint_harmonic(s.with_markers, s.mask),
    }
    if not args.skip_tacdiff:
        sched = schedule_linear(args.steps)
        methods["tacdiff"] = lambda s, k: inpaint_tacdiff(s.with_markers, s.mask, schedule=sched, rng=k, jobs=args.jobs)
    rows = {m: [] for m in methods}
    for k in range(args.scenes):
        dome = Dome(rng.uniform(200, 440), rng.uniform(150, 330), rng.uniform(60, 180)) if k % 2 == 0 else None
        spec = SceneSpec(seed=args.seed * 1000 + k, shear_amp=rng.uniform(0, 10), dome=dome)
        scene = gen_scene(spec)
        for name, fn in methods.items():
            t0 = time.perf_counter()
            out = fn(scene, k)
            dt = time.perf_counter() - t0
            rows[name].append((psnr(out, scene.markerless), ssim(out, scene.markerless), dt))

    print(f"{'method':<10} {'PSNR dB':>9} {'SSIM':>8} {'s/frame':>8}")
    for name, vals in rows.items():
        p, s, t = np.array(vals).mean(axis=0)
        print(f"{name:<10} {p:9.2f} {s:8.4f} {t:8.2f}")


if __name__ == "__main__":
    main()
