"""Decay of |Op(chi) u| for a Gaussian packet against cutoff distance and radius."""
import numpy as np

from wavetrace.quantize import Grid, gaussian_packet, loglog_slope, microloc_test, phase_bump

EPS = (0.4, 0.2, 0.1)


def scan(distance, radius, L=5.0, n=16, axis=0):
    c = L / 2.0
    center = [c, c, 0.0, 0.0]
    center[axis] += distance
    vals = []
    for e in EPS:
        g = Grid(n, L, e)
        vals.append(microloc_test(gaussian_packet(g, (c, c), (0.0, 0.0)), phase_bump(center, radius), g))
    return vals, loglog_slope(EPS, vals)


def main():
    print(f"{'dist':>5} {'radius':>6} {'slope':>7}   values at eps = {EPS}")
    for distance in (1.0, 1.5, 2.0, 2.5):
        for radius in (0.5, 1.0):
            if radius >= distance:
                continue
            vals, s = scan(distance, radius)
            print(f"{distance:5.2f} {radius:6.2f} {s:7.2f}   " + "  ".join(f"{v:.2e}" for v in vals))


if __name__ == "__main__":
    main()
