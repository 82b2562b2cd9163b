"""Reference implementations used only by the tests.

Each oracle is written without touching the code path it checks: the tree
walker below never uses the package evaluator, the finite differences never
see a derivative tree, the eigen checks call LAPACK, the quantizer is an
explicit quadruple loop over the kernel sum, and reference rays come from
scipy's integrators.
"""
from __future__ import annotations

import cmath
import math

import numpy as np

from wavetrace import symbols as S

FD_H = np.finfo(float).eps ** 0.2


# --------------------------------------------------------------------------
# Symbols


def tree_eval(node, x1, x2, xi1, xi2):
    """Recursive scalar evaluation by isinstance dispatch, no memo, no numpy."""
    coords = {"x1": x1, "x2": x2, "xi1": xi1, "xi2": xi2}

    def walk(n):
        if isinstance(n, S.Const):
            return complex(n.value)
        if isinstance(n, S.Var):
            return complex(coords[n.name])
        if isinstance(n, S.Ref):
            return complex(float(np.asarray(n.profile.ref(n.name, x1, x2))))
        if isinstance(n, S.Add):
            return walk(n.a) + walk(n.b)
        if isinstance(n, S.Sub):
            return walk(n.a) - walk(n.b)
        if isinstance(n, S.Neg):
            return -walk(n.a)
        if isinstance(n, S.Mul):
            return walk(n.a) * walk(n.b)
        if isinstance(n, S.Div):
            return walk(n.a) / walk(n.b)
        if isinstance(n, S.Sqrt):
            return cmath.sqrt(walk(n.a))
        if isinstance(n, S.Pow):
            return walk(n.a) ** n.n
        if isinstance(n, S.Conj):
            return walk(n.a).conjugate()
        raise TypeError(type(n))

    return walk(node)


def fd_gradient(fun, p):
    """4th-order central differences of ``fun(array4) -> complex`` at ``p``.

    Step ``eps_mach**(1/5) * max(1, |coordinate|)`` per coordinate.
    """
    p = np.asarray(p, dtype=float)
    g = np.zeros(4, dtype=complex)
    for k in range(4):
        h = FD_H * max(1.0, abs(p[k]))
        e = np.zeros(4)
        e[k] = h
        g[k] = (-fun(p + 2 * e) + 8 * fun(p + e) - 8 * fun(p - e) + fun(p - 2 * e)) / (12 * h)
    return g


def fd_bracket(f, g, p):
    """{f, g} at ``p`` from finite-difference gradients of tree-walked values."""
    ff = fd_gradient(lambda q: tree_eval(f, *q), p)
    gg = fd_gradient(lambda q: tree_eval(g, *q), p)
    return ff[2] * gg[0] + ff[3] * gg[1] - ff[0] * gg[2] - ff[1] * gg[3]


def random_tree(rng, profile, depth=4, complex_consts=True, refs=("b", "db", "u1", "u2")):
    """A random smooth symbol that is finite on all of phase space.

    Divisions and square roots only see arguments of the form
    ``c + |s|^2`` with ``c >= 1``, so the domain is never left.  ``refs``
    selects the profile primitives allowed as leaves.
    """
    leaves = [S.X1, S.X2, S.XI1, S.XI2]
    leaves += [S.ref(r, profile) for r in refs if not (r.startswith("u") and profile.u_is_zero)]

    def const():
        re = float(rng.uniform(-2, 2))
        if complex_consts and rng.random() < 0.3:
            return S.Const(complex(re, float(rng.uniform(-2, 2))))
        return S.Const(re)

    def grow(d):
        if d == 0 or rng.random() < 0.25:
            return leaves[rng.integers(len(leaves))] if rng.random() < 0.8 else const()
        op = rng.integers(8)
        a = grow(d - 1)
        if op == 0:
            return S.Add(a, grow(d - 1))
        if op == 1:
            return S.Sub(a, grow(d - 1))
        if op == 2:
            return S.Mul(a, grow(d - 1))
        if op == 3:
            return S.Div(a, S.Add(S.Const(1.0 + float(rng.random())), S.Mul(a, S.Conj(a))))
        if op == 4:
            return S.Sqrt(S.Add(S.Const(1.0), S.Mul(a, S.Conj(a))))
        if op == 5:
            return S.Pow(a, float(rng.integers(2, 4)))
        if op == 6:
            return S.Neg(a)
        return S.Conj(a)

    return grow(depth)


# --------------------------------------------------------------------------
# Spectral


def A0_direct(b, xi1, xi2):
    """The 3x3 principal symbol written out entry by entry."""
    return np.array([
        [0, xi1, xi2],
        [xi1, 0, -1j * b],
        [xi2, 1j * b, 0],
    ], dtype=complex)


def eigvalsh_sorted(M):
    return np.linalg.eigvalsh(M)


# --------------------------------------------------------------------------
# Quantization


def weyl_loop(symbol_fn, n, L, eps):
    """Midpoint Weyl kernel by explicit sums over grid points and frequencies.

    ``symbol_fn(x1, x2, xi1, xi2)`` is scalar; the kernel is
    ``K(x, y) = n^-2 * sum_k exp(i k.(x - y)) a(mid(x, y), eps k)`` on the
    torus with period L.  ``mid`` is the midpoint of the shortest periodic
    segment; antipodal pairs average both candidates.  Cost O(n^6), so only
    for n <= 8.
    """
    h = L / n
    ks = 2 * np.pi / L * np.fft.fftfreq(n, d=1.0 / n)
    N = n * n

    def mids(i, j):
        d = (i - j + n // 2) % n - n // 2
        m = ((j + 0.5 * d) * h) % L
        if d == -(n // 2):
            return d, [m, (m + L / 2) % L]
        return d, [m]

    K = np.zeros((N, N), dtype=complex)
    for i1 in range(n):
        for i2 in range(n):
            for j1 in range(n):
                for j2 in range(n):
                    d1, ms1 = mids(i1, j1)
                    d2, ms2 = mids(i2, j2)
                    acc = 0j
                    for k1 in ks:
                        for k2 in ks:
                            a = sum(symbol_fn(m1, m2, eps * k1, eps * k2) for m1 in ms1 for m2 in ms2)
                            acc += cmath.exp(1j * (k1 * d1 * h + k2 * d2 * h)) * a / (len(ms1) * len(ms2))
                    K[i1 * n + i2, j1 * n + j2] = acc / N
    return K


def plane_wave(n, L, k):
    x = np.arange(n) * L / n
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return np.exp(1j * (k[0] * X1 + k[1] * X2)).ravel()


def wigner_overlap_mc(x0, xi0, eps, chi, n_samples=200_000, seed=0):
    """Monte Carlo estimate of <chi^2>_W for a Gaussian coherent state.

    The Wigner function of the packet ``(pi eps)^-1/2 exp(i xi0.x/eps - |x-x0|^2/(2 eps))``
    is the phase-space Gaussian with variance eps/2 per coordinate, so to
    leading order ``||Op(chi) u||^2`` is the mean of ``chi^2`` under it.
    """
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n_samples, 4)) * math.sqrt(eps / 2)
    pts = z + np.array([x0[0], x0[1], xi0[0], xi0[1]])
    vals = chi(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3])
    return float(np.mean(np.abs(vals) ** 2))


# --------------------------------------------------------------------------
# Rays


def rossby_period(L2, xi1):
    """Period of the (x2, xi2) circle for b = x2 and zero flow."""
    return math.pi * L2 * L2 / abs(xi1)


def rossby_mean_dx1(L2, xi1):
    return (L2 - 2 * xi1 * xi1) / (L2 * L2)


def solve_ivp_ray(rhs, p0, t_end, rtol=1e-12, atol=1e-14, t_eval=None):
    from scipy.integrate import solve_ivp

    sol = solve_ivp(lambda t, y: rhs(y), (0.0, t_end), np.asarray(p0, float), method="DOP853",
                    rtol=rtol, atol=atol, t_eval=t_eval, dense_output=True)
    assert sol.success, sol.message
    return sol


def rk4_fixed(rhs, p0, t_end, h):
    y = np.asarray(p0, dtype=float).copy()
    steps = int(round(t_end / h))
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y
