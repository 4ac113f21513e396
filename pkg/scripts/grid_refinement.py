#!/usr/bin/env python3
"""Quadrature refinement study for the functional network.

Fixes smooth closed-form kernels, samples them at increasing grid
resolutions, and reports how fast the forward output converges: the
trapezoid rule plus linear interpolation should give roughly second order
(log-log slope near -2).

Usage: python scripts/grid_refinement.py [--seeds 2 5 9]
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from windwatch import fnn
from test_fnn import smooth_params


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, nargs="+", default=[2, 5, 9])
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    args = parser.parse_args()

    print(f"{'seed':>5} {'sizes':>20} {'rms change':>40} {'slope':>7}")
    for seed in args.seeds:
        x = np.random.default_rng(100 + seed).normal(size=(4, 24, 2))
        outs = [fnn.fnn_forward(x, smooth_params(grid_size=s, seed=seed)).value
                for s in args.sizes]
        diffs = [float(np.sqrt(np.mean((a - b) ** 2)))
                 for a, b in zip(outs, outs[1:])]
        slope = float(np.polyfit(np.log(args.sizes[:-1]), np.log(diffs), 1)[0])
        print(f"{seed:>5} {str(args.sizes):>20} "
              f"{' '.join(f'{d:9.3e}' for d in diffs):>40} {slope:7.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
