"""Seeded low-discrepancy samplers over phase-space boxes and their checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .symbols import COORDS


@dataclass(frozen=True)
class PhaseBox:
    """Axis-aligned box; each coordinate is a closed interval (lo, hi), lo <= hi."""

    x1: tuple
    x2: tuple
    xi1: tuple
    xi2: tuple

    def __post_init__(self):
        for name in COORDS:
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"box interval {name} = {(lo, hi)} is not a finite closed interval")

    @classmethod
    def from_mapping(cls, m):
        return cls(**{k: tuple(float(v) for v in m[k]) for k in COORDS})

    @property
    def lower(self):
        return np.array([getattr(self, k)[0] for k in COORDS])

    @property
    def upper(self):
        return np.array([getattr(self, k)[1] for k in COORDS])


def box_sampler(box, seed):
    """``n -> (n, 4)`` points from a scrambled Halton sequence scaled to ``box``.

    Each call restarts the sequence, so ``sampler(n)`` is a pure function of
    ``(box, seed, n)``.
    """
    lo, hi = box.lower, box.upper

    def sample(n):
        unit = qmc.Halton(d=4, scramble=True, seed=seed).random(int(n))
        return lo + unit * (hi - lo)

    return sample


def grid_sampler(box, per_axis):
    """Dense tensor grid over ``box``: ``per_axis**4`` points (the scan oracle)."""
    axes = [np.linspace(getattr(box, k)[0], getattr(box, k)[1], per_axis) for k in COORDS]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def min_xi_b_on_box(profile, box, n_scan=4001):
    """Lower bound of <xi>_b over the box (xi part in closed form, b by dense scan)."""
    def min_sq(lo, hi):
        return 0.0 if lo <= 0.0 <= hi else min(lo * lo, hi * hi)

    x2 = np.linspace(box.x2[0], box.x2[1], n_scan)
    b2 = float(np.min(profile.b(x2) ** 2))
    return float(np.sqrt(min_sq(*box.xi1) + min_sq(*box.xi2) + b2))


def check_gap_margin(profile, box, gap_tol):
    """Return None if the box keeps <xi>_b >= gap_tol, else a message."""
    m = min_xi_b_on_box(profile, box)
    if m < gap_tol:
        return (f"box meets the degenerate set: min <xi>_b = {m:.3e} < gap_tol = {gap_tol:.1e}; "
                "shrink the box away from xi = 0, b(x2) = 0")
    return None


def check_xi1_sign(box):
    lo, hi = box.xi1
    if lo <= 0.0 <= hi:
        return f"xi1 interval {box.xi1} contains 0; Poincare escape analysis needs xi1 bounded away from 0"
    return None
