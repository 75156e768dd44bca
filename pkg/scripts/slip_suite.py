"""Synthetic slip-detection suite with a calibrated threshold.

    python scripts/slip_suite.py --sequences 200 --image-subset 10
"""

import argparse
import math
import time

import numpy as np

from tacmode.slip import SlipConfig, SlipDetector, calibrate_epsilon, process_stream
from tacmode.synth import SceneSpec, gen_slip_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sequences", type=int, default=200)
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--min-rate", type=float, default=1.0)
    ap.add_argument("--max-rate", type=float, default=3.0)
    ap.add_argument("--jitter", type=float, default=0.2)
    ap.add_argument("--image-subset", type=int, default=5, help="sequences also run through rendered images")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    hold = gen_slip_sequence(SceneSpec(seed=args.seed + 99), 30, 0, 0.0, jitter=args.jitter, render=False)
    peak, eps = calibrate_epsilon(hold.markers)
    cfg = SlipConfig(epsilon_v=eps)
    print(f"static peak {peak:.3f}px -> epsilon {eps:.3f}px")

    rng = np.random.default_rng(args.seed)
    tally = {"tp": 0, "fn": 0, "tn": 0, "fp": 0}
    offsets = []
    latencies = []
    for i in range(args.sequences):
        slip = i % 2 == 0
        rate = rng.uniform(args.min_rate, args.max_rate) if slip else 0.0
        start = int(rng.integers(3, args.frames // 2))
        ang = rng.uniform(0, 2 * math.pi)
        spec = SceneSpec(seed=args.seed * 10_000 + i, shear_amp=rng.uniform(0, 8))
        render = i < args.image_subset
        seq = gen_slip_sequence(
            spec, args.frames, start, rate, direction=(math.cos(ang), math.sin(ang)), jitter=args.jitter, render=render
        )
        if render:
            det = SlipDetector(cfg)
            events = []
            for img in seq.images:
                t0 = time.perf_counter()
                ev = det.feed(img)
                latencies.append(time.perf_counter() - t0)
                if ev is not None:
                    events.append(ev)
        else:
            events = process_stream(seq.markers, cfg)
        if slip:
            tally["tp" if events else "fn"] += 1
            if events:
                offsets.append(events[0].frame_index - int(np.flatnonzero(seq.displacement > eps)[0]))
        else:
            tally["fp" if events else "tn"] += 1

    acc = (tally["tp"] + tally["tn"]) / args.sequences
    print(f"accuracy {acc:.1%}  {tally}")
    if offsets:
        vals, counts = np.unique(offsets, return_counts=True)
        print("first-event offset from analytic crossing:", dict(zip(vals.tolist(), counts.tolist())))
    if latencies:
        ms = np.array(latencies) * 1e3
        print(f"image path: median {np.median(ms):.1f}ms, p95 {np.percentile(ms, 95):.1f}ms per frame")


if __name__ == "__main__":
    main()
