"""First-order diagonalization: mode Hamiltonians, subprincipal diagonal,
homological solve and the first unitarity correction.

The diagonal subprincipal symbol of mode ``n`` is evaluated from the
eigenvector trees by::

    (D1)_nn = sum_jk Im(conj(u_jn) {a_jk, u_kn}) + a_jk {conj(u_jn), u_kn} / 2i
              + (U* A1 U)_nn

with ``a_jk`` the entries of A0 and ``A1 = (u . xi) I``.  For the Rossby
mode this reproduces the closed form ``xi1 b' / <xi>_b^2 + u . xi``.

This is the diagonal of the first-order symbol of ``Op(U)* A Op(U)``.  The
frame ``Op(U)`` is unitary only up to ``eps I1`` with
``(I1)_nn = sum_j {conj(u_jn), u_jn} / 2i``; renormalizing it subtracts
``delta_n (I1)_nn`` from the diagonal (:func:`first_order_diagonal`), which
vanishes for the Rossby mode only.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .spectral import DEFAULT_GAP_TOL, A0_symbols, poincare_vector_symbols, rossby_vector_symbols
from .symbols import (
    COORDS,
    XI1,
    XI2,
    PhasePoint,
    evaluate_many,
    gradient_symbols,
    ref,
    sqrt,
    xi_b_array,
)


class ModeId(enum.Enum):
    ROSSBY = "rossby"
    POINCARE_PLUS = "poincare+"
    POINCARE_MINUS = "poincare-"

    @property
    def index(self):
        return {"rossby": 0, "poincare+": 1, "poincare-": 2}[self.value]

    @property
    def sign(self):
        return {"rossby": 0, "poincare+": 1, "poincare-": -1}[self.value]

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "")
        aliases = {
            "rossby": cls.ROSSBY, "r": cls.ROSSBY,
            "poincare+": cls.POINCARE_PLUS, "poincareplus": cls.POINCARE_PLUS, "+": cls.POINCARE_PLUS,
            "poincare-": cls.POINCARE_MINUS, "poincareminus": cls.POINCARE_MINUS, "-": cls.POINCARE_MINUS,
        }
        if key not in aliases:
            raise ValueError(f"unknown mode {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class SubprincipalReport:
    point: PhasePoint
    mode: ModeId
    bracket_part: complex
    flow_part: complex
    total: complex
    closed_form_oracle: bool  # False for the Poincare modes: no closed form to compare with


# --------------------------------------------------------------------------
# Hamiltonians


def tau_pm_symbol(profile, sign):
    b = ref("b", profile)
    root = sqrt(XI1 * XI1 + XI2 * XI2 + b * b)
    return root if sign > 0 else -root


def tau_R_symbol(profile):
    b, db = ref("b", profile), ref("db", profile)
    flow = ref("u1", profile) * XI1 + ref("u2", profile) * XI2
    return XI1 * db / (XI1 * XI1 + XI2 * XI2 + b * b) + flow


def hamiltonian_symbol(profile, mode):
    mode = ModeId.parse(mode)
    if mode is ModeId.ROSSBY:
        return tau_R_symbol(profile)
    return tau_pm_symbol(profile, mode.sign)


def tau_pm(profile, p, sign):
    L = float(xi_b_array(profile, p.x2, p.xi1, p.xi2))
    return L if sign > 0 else -L


def tau_R_array(profile, x1, x2, xi1, xi2):
    L2 = xi_b_array(profile, x2, xi1, xi2) ** 2
    u1, u2 = profile.u(x1, x2)
    return xi1 * profile.db(x2) / L2 + u1 * xi1 + u2 * xi2


def tau_R(profile, p):
    L2 = float(xi_b_array(profile, p.x2, p.xi1, p.xi2)) ** 2
    if L2 == 0.0:
        raise DegenerateError("tau_R is undefined where <xi>_b = 0")
    return float(tau_R_array(profile, p.x1, p.x2, p.xi1, p.xi2))


# --------------------------------------------------------------------------
# Subprincipal diagonal


def _mode_vector_symbols(profile, mode, at, gauge="max"):
    if mode is ModeId.ROSSBY:
        return rossby_vector_symbols(profile)
    return poincare_vector_symbols(profile, mode.sign, gauge=gauge, at=at)


def _values_and_grads(trees, x1, x2, xi1, xi2):
    """Values and 4-gradients of a list of trees, evaluated in one pass."""
    flat = []
    for t in trees:
        flat.append(t)
        flat.extend(gradient_symbols(t))
    vals = evaluate_many(flat, x1, x2, xi1, xi2)
    out = []
    for i in range(len(trees)):
        block = vals[5 * i: 5 * i + 5]
        out.append((np.asarray(block[0], complex), [np.asarray(g, complex) for g in block[1:]]))
    return out


def _bracket(gf, gg):
    return gf[2] * gg[0] + gf[3] * gg[1] - gf[0] * gg[2] - gf[1] * gg[3]


def _subprincipal_from_vectors(profile, u_trees, x1, x2, xi1, xi2, phase=1.0):
    a = A0_symbols(profile)
    a_flat = [a[j][k] for j in range(3) for k in range(3)]
    vg_u = _values_and_grads(u_trees, x1, x2, xi1, xi2)
    vg_a = _values_and_grads(a_flat, x1, x2, xi1, xi2)
    # a constant gauge phase multiplies u and its derivatives alike
    u = [(phase * v, [phase * g for g in gs]) for v, gs in vg_u]
    ubar = [(np.conj(v), [np.conj(g) for g in gs]) for v, gs in u]
    first = 0.0
    second = 0.0
    for j in range(3):
        for k in range(3):
            a_val, a_grad = vg_a[3 * j + k]
            first = first + np.imag(ubar[j][0] * _bracket(a_grad, u[k][1]))
            second = second + a_val * _bracket(ubar[j][1], u[k][1]) / 2j
    bracket_part = first + second
    u1, u2 = profile.u(x1, x2)
    norm2 = sum(np.abs(c[0]) ** 2 for c in u)
    flow_part = (u1 * xi1 + u2 * xi2) * norm2
    return bracket_part, flow_part + 0j


def subprincipal_diagonal_batch(profile, x1, x2, xi1, xi2, mode, gap_tol=DEFAULT_GAP_TOL):
    """Vectorized (bracket_part, flow_part, total) arrays for one mode."""
    mode = ModeId.parse(mode)
    x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, float)) for v in (x1, x2, xi1, xi2)))
    L = xi_b_array(profile, x2, xi1, xi2)
    if np.any(L < gap_tol):
        raise DegenerateError(f"<xi>_b = {float(np.min(L)):.3e} below gap_tol = {gap_tol:.1e}")
    if mode is ModeId.ROSSBY:
        br, fl = _subprincipal_from_vectors(profile, rossby_vector_symbols(profile), x1, x2, xi1, xi2)
        return br, fl, br + fl
    # the max-modulus gauge is piecewise: group points sharing a kernel choice and lead index
    from .spectral import _kernel_vectors, lead_index

    b = profile.b(x2)
    lam = mode.sign * L
    v12, v23 = _kernel_vectors(b, xi1, xi2, lam)
    use12 = (xi2 * xi2 + b * b) >= (xi1 * xi1 + xi2 * xi2)
    lead = lead_index(np.where(use12[..., None], v12, v23))
    br = np.empty(x1.shape, complex)
    fl = np.empty(x1.shape, complex)
    for flag in (True, False):
        for m in range(3):
            sel = (use12 == flag) & (lead == m)
            if not np.any(sel):
                continue
            i0 = np.argmax(sel.ravel())
            at = PhasePoint(float(x1.ravel()[i0]), float(x2.ravel()[i0]), float(xi1.ravel()[i0]), float(xi2.ravel()[i0]))
            trees = poincare_vector_symbols(profile, mode.sign, gauge="max", at=at)
            b_, f_ = _subprincipal_from_vectors(profile, trees, x1[sel], x2[sel], xi1[sel], xi2[sel])
            br[sel], fl[sel] = b_, f_
    return br, fl, br + fl


def subprincipal_diagonal(profile, p, mode, gap_tol=DEFAULT_GAP_TOL, phase=1.0, gauge="max"):
    """Report of the diagonal subprincipal symbol of ``mode`` at ``p``.

    ``phase`` multiplies every eigenvector by a constant unit complex number
    (the diagonal entry must not change).  ``gauge`` selects the Poincare
    eigenvector phase convention (``"max"`` or ``"smooth"``); for these modes
    the value depends on it.
    """
    mode = ModeId.parse(mode)
    L = float(xi_b_array(profile, p.x2, p.xi1, p.xi2))
    if L < gap_tol:
        raise DegenerateError(f"<xi>_b = {L:.3e} below gap_tol = {gap_tol:.1e}")
    trees = _mode_vector_symbols(profile, mode, p, gauge)
    br, fl = _subprincipal_from_vectors(profile, trees, p.x1, p.x2, p.xi1, p.xi2, phase=phase)
    br, fl = complex(np.ravel(br)[0]), complex(np.ravel(fl)[0])
    return SubprincipalReport(p, mode, br, fl, br + fl, closed_form_oracle=mode is ModeId.ROSSBY)


def frame_defect_diagonal(profile, p, mode, gauge="max"):
    """``(I1)_nn = sum_j {conj(u_jn), u_jn} / 2i``: the first-order defect of ``Op(u_n)* Op(u_n)``."""
    mode = ModeId.parse(mode)
    trees = _mode_vector_symbols(profile, mode, p, gauge)
    acc = 0j
    for _, g in _values_and_grads(trees, p.x1, p.x2, p.xi1, p.xi2):
        acc += complex(np.ravel(_bracket([np.conj(c) for c in g], g))[0])
    return float((acc / 2j).real)


def first_order_diagonal(profile, p, mode, gauge="max", gap_tol=DEFAULT_GAP_TOL):
    """Diagonal first-order symbol after renormalizing the quantized frame.

    ``subprincipal - delta_n (I1)_nn`` with ``delta_n`` the mode eigenvalue.
    Equal to the subprincipal entry for the Rossby mode; for the Poincare
    modes the correction is O(1) and the sum is what the grid operator
    ``U0* A U0 - Op(D0) - (Op(D0) G + G Op(D0)) / 2``, ``G = U0* U0 - I``,
    shows in wave-packet expectations.
    """
    mode = ModeId.parse(mode)
    sub = subprincipal_diagonal(profile, p, mode, gap_tol=gap_tol, gauge=gauge).total.real
    if mode is ModeId.ROSSBY:
        return sub
    delta = mode.sign * float(xi_b_array(profile, p.x2, p.xi1, p.xi2))
    return sub - delta * frame_defect_diagonal(profile, p, mode, gauge)


def verify_tau_R(profile, sampler, n, gap_tol=DEFAULT_GAP_TOL):
    """Max |generic Rossby diagonal - closed-form tau_R| over ``n`` sampled points."""
    pts = np.asarray(sampler(n), dtype=float).reshape(-1, 4)
    _, _, total = subprincipal_diagonal_batch(profile, *pts.T, ModeId.ROSSBY, gap_tol=gap_tol)
    closed = tau_R_array(profile, *pts.T)
    return float(np.max(np.abs(total - closed)))


# --------------------------------------------------------------------------
# Homological equation and unitarity correction


def homological_solve(deltas, Delta1, gap_tol=DEFAULT_GAP_TOL):
    """Solve ``[diag(deltas), W0] + Delta1 = diag(D1)`` entrywise.

    ``[diag(d), W]_ij = (d_i - d_j) W_ij``, so the off-diagonal entries are
    ``W0_ij = Delta1_ij / (d_j - d_i)`` and ``D1`` is the diagonal of Delta1.
    For Hermitian Delta1 the solution W0 is anti-Hermitian.
    """
    d = np.asarray(deltas, dtype=float)
    D = np.asarray(Delta1, dtype=complex)
    diff = d[None, :] - d[:, None]  # d_j - d_i
    off = ~np.eye(len(d), dtype=bool)
    if np.any(np.abs(diff[off]) < gap_tol):
        raise DegenerateError("eigenvalue separation below gap_tol in the homological equation")
    W0 = np.zeros_like(D)
    W0[off] = D[off] / diff[off]
    return W0, np.real_if_close(np.diag(D).copy())


def unitarity_correction(I1, U):
    """First correction ``V0 = -U I1 / 2`` making ``(U + eps V0)*(U + eps V0) = I + O(eps^2)``.

    ``I1`` is the defect ``(U*U - I)/eps``; it lives on the domain side of U,
    so it multiplies from the right.
    """
    return -0.5 * np.asarray(U) @ np.asarray(I1)
