"""Sweep the classical denoiser's parameters on three probes.

Probes: the full loop on a constant hole (worst error), one estimate on a
noisy constant patch, and one estimate on a clean smooth patch.

    python scripts/denoiser_sweep.py --taus 0.05 0.02 0.01 --sigma-mins 1.0 1.5
"""

import argparse
import itertools

import numpy as np

from tacmode.tacdiff import ClassicalDenoiser, add_noise, classical_denoiser, sample, schedule_linear


def probes(params, seeds, steps):
    sched = schedule_linear(steps)
    img = np.full((32, 32, 3), 0.6)
    mask = np.zeros((32, 32), bool)
    mask[10:20, 12:22] = True
    loop = max(np.abs(sample(img, mask, ClassicalDenoiser(**params), sched, s) - 0.6).max() for s in range(seeds))

    noisy = add_noise(np.full((32, 32, 3), 0.6), steps, sched, 0)
    est = classical_denoiser(noisy, steps, sched, None, **params)
    noisy_err = float(np.abs(est - 0.6)[4:-4, 4:-4].max())

    y, x = np.mgrid[:32, :32] / 31.0
    smooth = np.stack([0.3 + 0.4 * x, 0.5 + 0.2 * y, 0.4 + 0.1 * x * y], axis=2)
    est = classical_denoiser(smooth, 1, sched, np.zeros((32, 32), bool), **params)
    ident = float(np.abs(est - smooth)[4:-4, 4:-4].max())
    return loop, noisy_err, ident


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--taus", type=float, nargs="+", default=[0.05, 0.02, 0.01, 0.005])
    ap.add_argument("--sigma-mins", type=float, nargs="+", default=[1.0, 1.5])
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--steps", type=int, default=10)
    args = ap.parse_args()
    print(f"{'tau':>7} {'sigma_min':>9} {'loop max':>9} {'noisy':>7} {'clean':>7}")
    for tau, smin in itertools.product(args.taus, args.sigma_mins):
        loop, noisy, ident = probes({"tau": tau, "sigma_min": smin}, args.seeds, args.steps)
        print(f"{tau:7.3f} {smin:9.2f} {loop:9.4f} {noisy:7.3f} {ident:7.4f}")


if __name__ == "__main__":
    main()
