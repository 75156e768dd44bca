"""Template for an out-of-process denoiser speaking the TACT file protocol.

A request carries only the step index, so the program must be told the
schedule the sampler uses. Swap ``estimate`` for a learned model. Use it with

    tacmode inpaint --bundle scene --method tacdiff --steps 20 \
        --denoiser-cmd "python scripts/example_denoiser.py --steps 20" --patch-size 256 --out out.png
"""

import argparse
import sys

from tacmode import tact
from tacmode.tacdiff import classical_denoiser, schedule_linear


def main(argv=None):
    ap = argparse.ArgumentParser(description="TACT denoiser")
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--beta-start", type=float, default=1e-4)
    ap.add_argument("--beta-end", type=float, default=0.02)
    ap.add_argument("request")
    ap.add_argument("reply")
    args = ap.parse_args(argv)
    sched = schedule_linear(args.steps, args.beta_start, args.beta_end)
    return tact.serve(lambda noisy, mask, t: classical_denoiser(noisy, t, sched, mask), [args.request, args.reply])


if __name__ == "__main__":
    sys.exit(main())
