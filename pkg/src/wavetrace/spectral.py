"""Rossby-Poincare matrix symbols and their pointwise eigendecomposition.

Principal symbol::

    A0(x, xi) = [[0,   xi1,   xi2 ],
                 [xi1, 0,    -i b ],
                 [xi2, i b,   0   ]]

with spectrum (0, +<xi>_b, -<xi>_b), always listed in the mode order
(Rossby, Poincare+, Poincare-).

Gauges
------
The Rossby vector is the closed form ``(b, i xi2, -i xi1) / <xi>_b`` and is
smooth wherever ``<xi>_b > 0``.

The Poincare vectors are rows-cross-products of ``A0 - lambda I`` made unique
by the rule "the component of largest modulus is real and positive, lowest
index on ties".  This gauge jumps where the index of the largest component
changes (the gauge cut: ``|v_i| = |v_j|`` for the two leading components);
continuity is only claimed away from it.

A second, globally smooth Poincare gauge ("smooth") keeps the third
component ``sqrt((xi2^2 + b^2) / (2 <xi>_b^2))`` real and positive; it is
regular wherever ``xi2^2 + b^2 > 0`` and is what the grid quantizer uses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, NotHermitian
from .symbols import XI1, XI2, PhasePoint, conj, ref, sqrt, xi_b_array

DEFAULT_GAP_TOL = 1e-6
MODE_ORDER = ("R", "+", "-")


@dataclass(frozen=True)
class MatrixSymbolValue:
    entries: np.ndarray  # (3, 3) complex
    point: PhasePoint


@dataclass(frozen=True)
class EigenFrame:
    deltas: np.ndarray  # (delta_R, delta_+, delta_-)
    vectors: np.ndarray  # columns u_R, u_+, u_-
    gap: float
    point: PhasePoint | None = None


def _a0_batch(b, xi1, xi2):
    shape = np.broadcast(b, xi1, xi2).shape
    M = np.zeros(shape + (3, 3), dtype=complex)
    M[..., 0, 1] = M[..., 1, 0] = xi1
    M[..., 0, 2] = M[..., 2, 0] = xi2
    M[..., 1, 2] = -1j * b
    M[..., 2, 1] = 1j * b
    return M


def eval_A0(profile, p):
    b = float(profile.b(p.x2))
    return MatrixSymbolValue(_a0_batch(b, p.xi1, p.xi2), p)


def eval_A1(profile, p):
    u1, u2 = profile.u(p.x1, p.x2)
    return MatrixSymbolValue((float(u1) * p.xi1 + float(u2) * p.xi2) * np.eye(3, dtype=complex), p)


def A0_batch(profile, x2, xi1, xi2):
    return _a0_batch(profile.b(x2), np.asarray(xi1, float), np.asarray(xi2, float))


# --------------------------------------------------------------------------
# Closed-form eigenvectors


def _kernel_vectors(b, xi1, xi2, lam):
    """Two candidate kernel vectors of A0 - lam I (rows 1x2 and rows 2x3)."""
    v12 = np.stack(
        [lam * xi2 - 1j * b * xi1, xi1 * xi2 - 1j * lam * b, (lam * lam - xi1 * xi1) + 0j], axis=-1
    )
    v23 = np.stack(
        [(lam * lam - b * b) + 0j, lam * xi1 - 1j * b * xi2, lam * xi2 + 1j * b * xi1], axis=-1
    )
    return v12, v23


TIE_RTOL = 1e-12


def lead_index(v):
    """Index of the largest-modulus entry; entries within TIE_RTOL of the max tie, lowest index wins."""
    mod = np.abs(v)
    top = np.max(mod, axis=-1, keepdims=True)
    return np.argmax(mod >= top * (1.0 - TIE_RTOL), axis=-1)


def _fix_gauge(v):
    """Unit-normalise and rotate so the largest-modulus entry is real positive."""
    m = lead_index(v)
    lead = np.take_along_axis(v, m[..., None], axis=-1)
    phase = np.conj(lead) / np.abs(lead)
    v = v * phase
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    # the lead entry is real positive up to rounding; make it exactly so
    np.put_along_axis(v, m[..., None], np.abs(np.take_along_axis(v, m[..., None], axis=-1)), axis=-1)
    return v


def poincare_vectors(b, xi1, xi2, sign, gauge="max"):
    """Unit eigenvectors of A0 for eigenvalue ``sign * <xi>_b`` (batched)."""
    b, xi1, xi2 = np.broadcast_arrays(*(np.asarray(v, float) for v in (b, xi1, xi2)))
    L2 = xi1 * xi1 + xi2 * xi2 + b * b
    lam = sign * np.sqrt(L2)
    v12, v23 = _kernel_vectors(b, xi1, xi2, lam)
    if gauge == "smooth":
        s = xi2 * xi2 + b * b
        return v12 / np.sqrt(2.0 * L2 * s)[..., None]
    if gauge != "max":
        raise ValueError(f"unknown gauge {gauge!r}")
    # |v12|^2 = 2 L^2 (xi2^2 + b^2), |v23|^2 = 2 L^2 (xi1^2 + xi2^2): pick the better conditioned
    use12 = (xi2 * xi2 + b * b) >= (xi1 * xi1 + xi2 * xi2)
    v = np.where(use12[..., None], v12, v23)
    return _fix_gauge(v)


def rossby_vector(b, xi1, xi2):
    b, xi1, xi2 = np.broadcast_arrays(*(np.asarray(v, float) for v in (b, xi1, xi2)))
    L = np.sqrt(xi1 * xi1 + xi2 * xi2 + b * b)
    return np.stack([b + 0j, 1j * xi2, -1j * xi1], axis=-1) / L[..., None]


def eigendecompose_batch(profile, x2, xi1, xi2, gap_tol=DEFAULT_GAP_TOL, gauge="max"):
    """Vectorized eigendecomposition; returns (deltas (..., 3), vectors (..., 3, 3))."""
    x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(v, float) for v in (x2, xi1, xi2)))
    b = profile.b(x2)
    L = xi_b_array(profile, x2, xi1, xi2)
    if np.any(L < gap_tol):
        raise DegenerateError(
            f"<xi>_b = {float(np.min(L)):.3e} below gap_tol = {gap_tol:.1e}: eigenvalues cross"
        )
    deltas = np.stack([np.zeros_like(L), L, -L], axis=-1)
    vecs = np.stack(
        [rossby_vector(b, xi1, xi2), poincare_vectors(b, xi1, xi2, +1, gauge),
         poincare_vectors(b, xi1, xi2, -1, gauge)],
        axis=-1,
    )
    return deltas, vecs


def eigendecompose(profile, p, gap_tol=DEFAULT_GAP_TOL, gauge="max"):
    deltas, vecs = eigendecompose_batch(profile, p.x2, p.xi1, p.xi2, gap_tol=gap_tol, gauge=gauge)
    return EigenFrame(deltas=deltas, vectors=vecs, gap=float(deltas[1]), point=p)


# --------------------------------------------------------------------------
# Symbolic frames (needed by the subprincipal formula and the quantizer)


def A0_symbols(profile):
    b = ref("b", profile)
    zero = 0 * XI1
    return [
        [zero, XI1, XI2],
        [XI1, zero, -1j * b],
        [XI2, 1j * b, zero],
    ]


def rossby_vector_symbols(profile):
    b = ref("b", profile)
    L = sqrt(XI1 * XI1 + XI2 * XI2 + b * b)
    return [b / L, 1j * XI2 / L, -1j * XI1 / L]


def poincare_vector_symbols(profile, sign, gauge="smooth", at=None):
    """Eigenvector trees for eigenvalue ``sign * <xi>_b``.

    ``gauge="smooth"`` returns the globally smooth frame.  ``gauge="max"``
    needs a reference point ``at``: the kernel vector and leading index are
    frozen from that point, giving a tree valid (and smooth) on the open set
    where the same index stays strictly largest.
    """
    b = ref("b", profile)
    L2 = XI1 * XI1 + XI2 * XI2 + b * b
    lam = sign * sqrt(L2)
    v12 = [lam * XI2 - 1j * b * XI1, XI1 * XI2 - 1j * lam * b, lam * lam - XI1 * XI1]
    v23 = [lam * lam - b * b, lam * XI1 - 1j * b * XI2, lam * XI2 + 1j * b * XI1]
    if gauge == "smooth":
        norm = sqrt(2 * L2 * (XI2 * XI2 + b * b))
        return [c / norm for c in v12]
    if gauge != "max":
        raise ValueError(f"unknown gauge {gauge!r}")
    if at is None:
        raise ValueError("the max-modulus gauge needs a reference point")
    bb = float(profile.b(at.x2))
    use12 = (at.xi2**2 + bb * bb) >= (at.xi1**2 + at.xi2**2)
    v = v12 if use12 else v23
    num = _kernel_vectors(bb, at.xi1, at.xi2, sign * np.sqrt(at.xi1**2 + at.xi2**2 + bb * bb))
    m = int(lead_index(num[0] if use12 else num[1]))
    lead = v[m]
    lead_abs = sqrt(lead * conj(lead))
    norm = sqrt(sum((c * conj(c) for c in v[1:]), v[0] * conj(v[0])))
    phase = conj(lead) / lead_abs
    return [c * phase / norm for c in v]


def frame_symbols(profile, gauge="smooth", at=None):
    """3x3 nested list U[j][n] of trees: row j = component, column n = mode (R, +, -)."""
    cols = [
        rossby_vector_symbols(profile),
        poincare_vector_symbols(profile, +1, gauge, at),
        poincare_vector_symbols(profile, -1, gauge, at),
    ]
    return [[cols[n][j] for n in range(3)] for j in range(3)]


# --------------------------------------------------------------------------
# Independent oracle: cyclic complex Jacobi


def hermitian_eig_oracle(M, tol=1e-10, max_sweeps=30):
    """Eigenpairs of Hermitian 3x3 matrices by cyclic complex Jacobi rotations.

    Accepts shape (3, 3) or (N, 3, 3).  Eigenvalues are returned in ascending
    order with matching orthonormal eigenvector columns.
    """
    A = np.array(M, dtype=complex)
    single = A.ndim == 2
    if single:
        A = A[None]
    scale = np.maximum(np.max(np.abs(A), axis=(1, 2)), 1.0)
    if np.any(np.max(np.abs(A - np.conj(np.swapaxes(A, 1, 2))), axis=(1, 2)) > tol * scale):
        raise NotHermitian("matrix fails the conjugate-symmetry check")
    A = 0.5 * (A + np.conj(np.swapaxes(A, 1, 2)))
    n = A.shape[1]
    V = np.broadcast_to(np.eye(n, dtype=complex), A.shape).copy()
    idx = np.arange(A.shape[0])
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(A * offmask) ** 2, axis=(1, 2)))
        if np.all(off <= 1e-15 * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                r = np.abs(apq)
                act = r > 1e-300
                if not np.any(act):
                    continue
                phase = np.where(act, apq / np.where(act, r, 1.0), 1.0)
                app, aqq = A[:, p, p].real, A[:, q, q].real
                rr = np.where(act, r, 1.0)
                tau = (aqq - app) / (2.0 * rr)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
                t = np.where(act, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # G = diag(1, conj(phase)) in the (p, q) plane followed by a real rotation
                G = np.broadcast_to(np.eye(n, dtype=complex), A.shape).copy()
                G[idx, p, p] = c
                G[idx, p, q] = s
                G[idx, q, p] = -s * np.conj(phase)
                G[idx, q, q] = c * np.conj(phase)
                A = np.conj(np.swapaxes(G, 1, 2)) @ A @ G
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
                V = V @ G
    w = np.diagonal(A, axis1=1, axis2=2).real
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    if single:
        return w[0], V[0]
    return w, V


# --------------------------------------------------------------------------
# Gap monitoring


def gap_on_set(profile, sampler, n):
    """Minimum of <xi>_b over ``n`` sampled points and where it is attained."""
    pts = np.asarray(sampler(n), dtype=float).reshape(-1, 4)
    L = xi_b_array(profile, pts[:, 1], pts[:, 2], pts[:, 3])
    i = int(np.argmin(L))
    return float(L[i]), PhasePoint.from_array(pts[i])
