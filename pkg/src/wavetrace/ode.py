"""Batched Dormand-Prince 5(4) integrator with PI step control.

Every row of the state array is an independent autonomous system with its
own step size; one call of the right-hand side evaluates all active rows,
so a ray gives the same numbers whether it is integrated alone or inside a
batch.  Dense output is the standard 4th-order continuous extension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Butcher tableau (Hairer, Norsett & Wanner, Solving ODEs I, table 5.2)
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
    701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423,
])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
BETA = 0.04  # PI stabilisation
ALPHA = 0.2 - 0.75 * BETA


@dataclass
class BatchResult:
    """Accepted steps of every row.

    ``t[i]``/``y[i]`` are the step endpoints of row ``i`` (first entry is the
    initial state) and ``dense[i]`` the (steps, 5, dim) coefficients of the
    continuous extension on each step.  ``status[i]`` is one of
    ``"done"``, ``"max_steps"``, ``"event"``, ``"step_failure"``.
    """

    t: list
    y: list
    dense: list
    status: list


def dense_eval(coeffs, theta):
    """Evaluate one step's continuous extension at ``theta`` in [0, 1]."""
    r1, r2, r3, r4, r5 = coeffs
    th1 = 1.0 - theta
    return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))


def _initial_step(f, y0, f0, rtol, atol, t_span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2, axis=1))
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.where(d1 > 0, d1, 1.0))
    h0 = np.minimum(h0, t_span)
    y1 = y0 + h0[:, None] * f0
    f1 = f(y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2, axis=1)) / h0
    dm = np.maximum(d1, d2)
    h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.where(dm > 0, dm, 1.0)) ** (1 / 5))
    return np.minimum(np.minimum(100 * h0, h1), t_span)


def dopri5_batch(f, y0, t_end, rtol=1e-10, atol=1e-12, max_steps=1_000_000, event=None, h_min_rel=1e-14,
                 row_aware=False):
    """Integrate ``y' = f(y)`` row-wise from 0 to ``t_end``.

    ``f`` maps an (m, dim) array to an (m, dim) array; with ``row_aware`` it is
    called as ``f(y, rows)`` where ``rows`` are the original row indices.
    ``event(y)`` (``event(y, rows)`` when row-aware) returns a boolean mask of
    rows that must stop after the current accepted step.  ``t_end``, ``rtol``, ``atol`` and ``max_steps``
    may be scalars or per-row arrays.
    """
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    n, dim = y0.shape
    t_end = _per_row(t_end, n)
    rtol_r = _per_row(rtol, n)
    atol_r = _per_row(atol, n)
    max_steps = _per_row(max_steps, n)
    status = np.zeros(n, dtype=np.int8)  # index into STATUS
    log = _StepLog()

    if not row_aware:
        g, ev = f, event

        def f(yy, rows):
            return g(yy)

        if ev is not None:
            def event(yy, rows):
                return ev(yy)

    t = np.zeros(n)
    y = y0.copy()
    active = np.arange(n)
    k1 = f(y, active)
    h = _initial_step(lambda yy: f(yy, active), y, k1, rtol_r[:, None], atol_r[:, None], t_end)
    err_prev = np.full(n, 1e-4)
    steps = np.zeros(n, dtype=np.int64)

    if event is not None:
        stop = np.asarray(event(y, active), bool)
        status[stop] = _EVENT
        active = active[~stop]

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        while active.size:
            full = active.size == n
            if full:
                ya, ta, ha, k1a = y.copy(), t.copy(), h.copy(), k1.copy()
                te, rt, at = t_end, rtol_r, atol_r
            else:
                ya, ta, ha, k1a = y[active], t[active], h[active], k1[active]
                te, rt, at = t_end[active], rtol_r[active], atol_r[active]
            last = ta + ha >= te
            if last.any():
                ha = np.where(last, te - ta, ha)
            hc = ha[:, None]
            K = [k1a]
            for s in range(1, 7):
                acc = _A_NZ[s][0][1] * K[_A_NZ[s][0][0]]
                for j, a in _A_NZ[s][1:]:
                    acc = acc + a * K[j]
                K.append(f(ya + hc * acc, active))
            y_new = ya + hc * (B5[0] * K[0] + B5[2] * K[2] + B5[3] * K[3] + B5[4] * K[4] + B5[5] * K[5])
            err_vec = hc * (E[0] * K[0] + E[2] * K[2] + E[3] * K[3] + E[4] * K[4] + E[5] * K[5] + E[6] * K[6])
            scale = at[:, None] + rt[:, None] * np.maximum(np.abs(ya), np.abs(y_new))
            q = err_vec / scale
            err = np.sqrt(np.einsum("ij,ij->i", q, q) / dim)
            err[~np.isfinite(err)] = np.inf

            ok = err <= 1.0
            # PI controller on accepted steps, elementary controller after a rejection
            base = SAFETY * np.maximum(err, 1e-10) ** (-ALPHA)
            fac_acc = np.minimum(np.maximum(base * err_prev[active] ** BETA, FAC_MIN), FAC_MAX)
            fac_rej = np.minimum(np.maximum(base, FAC_MIN), 1.0)
            h[active] = ha * np.where(ok, fac_acc, fac_rej)

            all_ok = bool(ok.all())
            if all_ok or ok.any():
                if all_ok:
                    acc_idx, hk, r1, yn, lst = active, hc, ya, y_new, last
                    k0, k2, k3, k4, k5, k6 = K[0], K[2], K[3], K[4], K[5], K[6]
                    e_ok = err
                else:
                    acc_idx, hk, r1, yn, lst = active[ok], hc[ok], ya[ok], y_new[ok], last[ok]
                    k0, k2, k3, k4, k5, k6 = (K[j][ok] for j in (0, 2, 3, 4, 5, 6))
                    e_ok = err[ok]
                if all_ok:
                    t_acc = ta + ha
                    t_acc[lst] = te[lst]
                else:
                    t_acc = ta[ok] + ha[ok]
                    t_acc[lst] = te[ok][lst]
                dk = D[0] * k0 + D[2] * k2 + D[3] * k3 + D[4] * k4 + D[5] * k5 + D[6] * k6
                log.add(acc_idx, t_acc, r1, yn, hk, k0, k6, dk)
                if full and all_ok:
                    # first-same-as-last; copies because the log keeps these arrays
                    t, y, k1 = t_acc.copy(), yn.copy(), k6.copy()
                else:
                    t[acc_idx] = t_acc
                    y[acc_idx] = yn
                    k1[acc_idx] = k6
                err_prev[acc_idx] = np.maximum(e_ok, 1e-4)
                steps[acc_idx] += 1
                status[acc_idx[lst]] = _DONE
                if event is not None:
                    hit = acc_idx[np.asarray(event(yn, acc_idx), bool)]
                    status[hit[status[hit] == _RUNNING]] = _EVENT

            run = status[active] == _RUNNING
            over = run & (steps[active] >= max_steps[active])
            status[active[over]] = _MAX_STEPS
            run &= ~over
            tiny = run & (h[active] <= h_min_rel * np.maximum(1.0, np.abs(t[active])))
            status[active[tiny]] = _STEP_FAILURE
            run &= ~tiny
            if not run.all():
                active = active[run]

    return log.regroup(y0, [STATUS[c] for c in status])


def _per_row(v, n):
    return np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()


STATUS = ("running", "done", "event", "max_steps", "step_failure")
_RUNNING, _DONE, _EVENT, _MAX_STEPS, _STEP_FAILURE = range(5)

_A_NZ = [[(j, a) for j, a in enumerate(row) if a != 0.0] for row in A]


class _StepLog:
    """Accepted steps of all rows, appended per iteration, regrouped once."""

    def __init__(self):
        self.parts = []

    def add(self, rows, t, y0, y1, h, k0, k6, dk):
        self.parts.append((rows, t, y0, y1, h, k0, k6, dk))

    def regroup(self, y_init, status):
        n, dim = y_init.shape
        if self.parts:
            cols = [np.concatenate(c) for c in zip(*self.parts)]
            order = np.argsort(cols[0], kind="stable")  # stable: keeps step order within a row
            rows, ts, r1, yn, hk, k0, k6, dk = (c[order] for c in cols)
            r2 = yn - r1
            r3 = hk * k0 - r2
            r4 = r2 - hk * k6 - r3
            dense = np.stack([r1, r2, r3, r4, hk * dk], axis=1)
            bounds = np.searchsorted(rows, np.arange(n + 1))
        else:
            ts, yn, dense = np.zeros(0), np.zeros((0, dim)), np.zeros((0, 5, dim))
            bounds = np.zeros(n + 1, dtype=int)
        t_out, y_out, d_out = [], [], []
        for i in range(n):
            a, b = bounds[i], bounds[i + 1]
            t_out.append(np.concatenate([[0.0], ts[a:b]]))
            y_out.append(np.vstack([y_init[i][None], yn[a:b]]))
            d_out.append(dense[a:b])
        return BatchResult(t=t_out, y=y_out, dense=d_out, status=status)
