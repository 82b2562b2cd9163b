"""Diagonalization and unitarity residuals against eps on the periodic grid.

Usage: python scripts/residual_scaling.py [--n 16] [--eps 0.4 0.2 0.1] [--oversample 2]
"""
import argparse

import numpy as np

from wavetrace.profiles import make_profile
from wavetrace.quantize import loglog_slope, residual_family


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    ap.add_argument("--oversample", type=int, default=2)
    args = ap.parse_args()
    prof = make_profile("shifted-sine")
    pts = residual_family(prof, args.eps, n=args.n, L=2 * np.pi, oversample=args.oversample)
    print(f"{'eps':>6} {'r_diag':>11} {'r_unit':>11} {'r2':>11} {'r_unit/eps':>11}")
    for p in pts:
        print(f"{p.eps:6.3f} {p.r_diag:11.4e} {p.r_unit:11.4e} {p.r2:11.4e} {p.I1_norm:11.4e}")
    eps = [p.eps for p in pts]
    print("slopes:",
          f"r_diag {loglog_slope(eps, [p.r_diag for p in pts]):.3f}",
          f"r_unit {loglog_slope(eps, [p.r_unit for p in pts]):.3f}",
          f"r2 {loglog_slope(eps, [p.r2 for p in pts]):.3f}")


if __name__ == "__main__":
    main()
