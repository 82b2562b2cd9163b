"""Coriolis amplitude b(x2) and stationary flow u(x) catalogue.

Every catalogue entry ships exact first and second derivatives of ``b`` and
the exact Jacobian of ``u``; nothing here is differentiated numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

REF_NAMES = ("b", "db", "d2b", "u1", "u2", "du1_dx1", "du1_dx2", "du2_dx1", "du2_dx2")


@dataclass(frozen=True, eq=False)
class CoriolisAmplitude:
    kind: str
    params: dict
    b: Callable
    db: Callable
    d2b: Callable
    periodic_length: float | None = None  # smallest period, None if aperiodic


@dataclass(frozen=True, eq=False)
class StationaryFlow:
    kind: str
    params: dict
    velocity: Callable | None  # (x1, x2) -> (u1, u2); None for the zero flow
    jacobian: Callable | None  # (x1, x2) -> ((du1/dx1, du1/dx2), (du2/dx1, du2/dx2))
    support: tuple | None  # ((x1_lo, x1_hi), (x2_lo, x2_hi)); None when u == 0
    inf_norm: float = 0.0

    @property
    def is_zero(self):
        return self.velocity is None


@dataclass(frozen=True, eq=False)
class Profile:
    """A Coriolis amplitude together with a stationary flow.

    ``ref(name, x1, x2)`` evaluates one of the named primitives in
    ``REF_NAMES``; the flow and its Jacobian vanish identically outside
    ``u_support``.
    """

    coriolis: CoriolisAmplitude
    flow: StationaryFlow
    label: str = field(default="")

    @property
    def u_support(self):
        return self.flow.support

    @property
    def u_inf_norm(self):
        return self.flow.inf_norm

    @property
    def u_is_zero(self):
        return self.flow.is_zero

    @property
    def profile_id(self):
        if self.label:
            return self.label
        return f"{self.coriolis.kind}+{self.flow.kind}"

    def b(self, x2):
        return self.coriolis.b(np.asarray(x2, dtype=float))

    def db(self, x2):
        return self.coriolis.db(np.asarray(x2, dtype=float))

    def d2b(self, x2):
        return self.coriolis.d2b(np.asarray(x2, dtype=float))

    def u(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        if self.flow.is_zero:
            return np.zeros_like(x1), np.zeros_like(x1)
        u1, u2 = self.flow.velocity(x1, x2)
        return u1, u2

    def du(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        if self.flow.is_zero:
            z = np.zeros_like(x1)
            return (z, z), (z, z)
        return self.flow.jacobian(x1, x2)

    def ref(self, name, x1, x2):
        if name == "b":
            return self.b(x2) + np.zeros(np.shape(x1))
        if name == "db":
            return self.db(x2) + np.zeros(np.shape(x1))
        if name == "d2b":
            return self.d2b(x2) + np.zeros(np.shape(x1))
        if name in ("u1", "u2"):
            return self.u(x1, x2)[int(name[1]) - 1]
        if name.startswith("du"):
            i, j = int(name[2]) - 1, int(name[-1]) - 1
            return self.du(x1, x2)[i][j]
        raise KeyError(name)


# --------------------------------------------------------------------------
# Coriolis amplitudes


def linear_b(beta=1.0):
    beta = float(beta)
    return CoriolisAmplitude(
        kind="linear",
        params={"beta": beta},
        b=lambda x2: beta * x2,
        db=lambda x2: np.full_like(x2, beta, dtype=float),
        d2b=lambda x2: np.zeros_like(x2, dtype=float),
    )


def shifted_sine_b(c=2.0, a=1.0, k=1.0):
    c, a, k = float(c), float(a), float(k)
    return CoriolisAmplitude(
        kind="shifted-sine",
        params={"c": c, "a": a, "k": k},
        b=lambda x2: c + a * np.sin(k * x2),
        db=lambda x2: a * k * np.cos(k * x2),
        d2b=lambda x2: -a * k * k * np.sin(k * x2),
        periodic_length=2.0 * np.pi / abs(k) if k != 0 and a != 0 else 0.0,
    )


def tanh_b():
    def db(x2):
        return 1.0 / np.cosh(x2) ** 2

    return CoriolisAmplitude(
        kind="tanh",
        params={},
        b=np.tanh,
        db=db,
        d2b=lambda x2: -2.0 * np.tanh(x2) * db(x2),
    )


def exp_square_b():
    """b(x2) = exp(x2^2); violates the symbol-class bound, used to exercise the checker."""
    return CoriolisAmplitude(
        kind="exp-square",
        params={},
        b=lambda x2: np.exp(x2 * x2),
        db=lambda x2: 2.0 * x2 * np.exp(x2 * x2),
        d2b=lambda x2: (2.0 + 4.0 * x2 * x2) * np.exp(x2 * x2),
    )


# --------------------------------------------------------------------------
# Stationary flows


def zero_flow():
    return StationaryFlow(kind="zero", params={}, velocity=None, jacobian=None, support=None)


def _cutoff(s):
    # exp(1 - 1/(1 - s)) on s < 1, zero beyond; equals 1 at s = 0
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    safe = np.where(inside, s, 0.0)
    g = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)
    dg = np.where(inside, -g / (1.0 - safe) ** 2, 0.0)
    return g, dg


def bump_flow(center=(0.0, 0.0), radius=1.0, amplitude=0.5):
    """Divergence-free vortex ``amplitude/R * g(r^2/R^2) * (-(x2-c2), x1-c1)``.

    ``g`` is the smooth cutoff ``exp(1 - 1/(1-s))``, so the flow is C^infinity
    and vanishes identically outside the disc of radius ``radius``.
    """
    c1, c2 = (float(v) for v in center)
    R = float(radius)
    A = float(amplitude)
    if R <= 0:
        raise ValueError("radius must be positive")

    def velocity(x1, x2):
        y1, y2 = x1 - c1, x2 - c2
        g, _ = _cutoff((y1 * y1 + y2 * y2) / (R * R))
        return -A / R * g * y2, A / R * g * y1

    def jacobian(x1, x2):
        y1, y2 = x1 - c1, x2 - c2
        g, dg = _cutoff((y1 * y1 + y2 * y2) / (R * R))
        k = A / R
        ds1, ds2 = 2.0 * y1 / (R * R), 2.0 * y2 / (R * R)
        du1_dx1 = -k * y2 * dg * ds1
        du1_dx2 = -k * (g + y2 * dg * ds2)
        du2_dx1 = k * (g + y1 * dg * ds1)
        du2_dx2 = k * y1 * dg * ds2
        return (du1_dx1, du1_dx2), (du2_dx1, du2_dx2)

    # |u| = A * sqrt(s) * g(s); maximise over s in (0, 1)
    res = minimize_scalar(
        lambda s: -np.sqrt(s) * _cutoff(s)[0], bounds=(0.0, 1.0), method="bounded",
        options={"xatol": 1e-14},
    )
    inf_norm = A * float(-res.fun)
    return StationaryFlow(
        kind="bump",
        params={"center": [c1, c2], "radius": R, "amplitude": A},
        velocity=velocity,
        jacobian=jacobian,
        support=((c1 - R, c1 + R), (c2 - R, c2 + R)),
        inf_norm=abs(inf_norm),
    )


B_CATALOGUE = {"linear": linear_b, "shifted-sine": shifted_sine_b, "tanh": tanh_b}
U_CATALOGUE = {"zero": zero_flow, "bump": bump_flow}


def make_profile(b="linear", b_params=None, u="zero", u_params=None, label=""):
    """Build a profile from catalogue ids, e.g. ``make_profile("shifted-sine", {"c": 2})``."""
    if b not in B_CATALOGUE:
        raise KeyError(f"unknown b profile {b!r}; choose from {sorted(B_CATALOGUE)}")
    if u not in U_CATALOGUE:
        raise KeyError(f"unknown flow {u!r}; choose from {sorted(U_CATALOGUE)}")
    coriolis = B_CATALOGUE[b](**(b_params or {}))
    flow = U_CATALOGUE[u](**(u_params or {}))
    return Profile(coriolis=coriolis, flow=flow, label=label)


@dataclass(frozen=True)
class SymbolClassReport:
    box: tuple
    constants: tuple  # empirical sup of |b^(alpha)| / sqrt(1 + b^2), alpha = 0..alpha_max
    argmax: tuple
    violations: tuple  # alpha values whose configured constant was exceeded


def symbol_class_check(profile, alpha_max=2, box=(-10.0, 10.0), n_samples=20001, bounds=None):
    """Empirical constants C_alpha in ``|b^(alpha)| <= C_alpha (1 + b^2)^(1/2)``.

    ``bounds`` optionally maps alpha -> configured constant; any alpha whose
    empirical sup exceeds it is listed in ``violations``.
    """
    if not 0 <= alpha_max <= 2:
        raise ValueError("only b, b' and b'' are stored (alpha_max <= 2)")
    x2 = np.linspace(box[0], box[1], int(n_samples))
    weight = np.sqrt(1.0 + profile.b(x2) ** 2)
    derivs = (profile.b, profile.db, profile.d2b)
    consts, where, bad = [], [], []
    for alpha in range(alpha_max + 1):
        ratio = np.abs(derivs[alpha](x2)) / weight
        i = int(np.argmax(ratio))
        consts.append(float(ratio[i]))
        where.append(float(x2[i]))
        if bounds is not None and alpha in bounds and ratio[i] > bounds[alpha]:
            bad.append(alpha)
    return SymbolClassReport(tuple(box), tuple(consts), tuple(where), tuple(bad))
