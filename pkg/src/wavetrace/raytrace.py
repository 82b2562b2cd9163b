"""Bicharacteristics of the mode Hamiltonians and their diagnostics."""
from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import Xi1SignViolation, DegenerateError, DegenerateEvent, ProfileAssumptionError, StepFailure
from .normal_form import ModeId, hamiltonian_symbol, tau_pm_symbol
from .ode import dense_eval, dopri5_batch
from .spectral import DEFAULT_GAP_TOL
from .symbols import COORDS, X1, PhasePoint, bracket, compile_symbols, evaluate, gradient_symbols, xi_b_array


@dataclass(frozen=True)
class RayConfig:
    t_max: float = 100.0
    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 1_000_000
    hamiltonian: ModeId = ModeId.ROSSBY
    gap_tol: float = DEFAULT_GAP_TOL

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        object.__setattr__(self, "hamiltonian", ModeId.parse(self.hamiltonian))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    points: np.ndarray  # (steps + 1, 4)
    tau: np.ndarray
    xi1: np.ndarray
    xi_b: np.ndarray
    poincare_inv: np.ndarray
    dense: np.ndarray  # (steps, 5, 4)
    mode: ModeId
    status: str = "done"

    def __len__(self):
        return len(self.times)

    def at(self, t):
        """Dense-output state at time ``t`` within the integrated range."""
        t = float(t)
        if t <= self.times[0]:
            return self.points[0].copy()
        if t >= self.times[-1]:
            return self.points[-1].copy()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        h = self.times[i + 1] - self.times[i]
        return dense_eval(self.dense[i], (t - self.times[i]) / h)


class Hamiltonian:
    """A mode Hamiltonian with its exact gradient trees, evaluated batch-wise."""

    def __init__(self, profile, mode):
        self.profile = profile
        self.mode = ModeId.parse(mode)
        self.symbol = hamiltonian_symbol(profile, self.mode)
        self.grad = gradient_symbols(self.symbol)
        self._value = compile_symbols([self.symbol])
        self._grad = compile_symbols(self.grad)

    def value(self, Y):
        Y = np.atleast_2d(Y)
        return np.real(self._value(*Y.T)[0])

    def rhs(self, Y):
        """(dx/dt, dxi/dt) = (grad_xi tau, -grad_x tau) for each row of ``Y``."""
        Y = np.atleast_2d(Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self._grad.raw(Y[:, 0], Y[:, 1], Y[:, 2], Y[:, 3])
        out = np.empty(Y.shape)
        out[:, 0] = np.real(g[2])
        out[:, 1] = np.real(g[3])
        out[:, 2] = np.negative(np.real(g[0]))
        out[:, 3] = np.negative(np.real(g[1]))
        return out


def hamiltonian_rhs(profile, p, mode, gap_tol=DEFAULT_GAP_TOL):
    L = float(xi_b_array(profile, p.x2, p.xi1, p.xi2))
    if L < gap_tol:
        raise DegenerateError(f"<xi>_b = {L:.3e} below gap_tol = {gap_tol:.1e}")
    return Hamiltonian(profile, mode).rhs(p.as_array())[0]


def rossby_rhs_printed(profile, p):
    """The Rossby ray equations exactly as printed in the source derivation.

    The first three lines agree with the gradient of tau_R; the printed
    ``dxi2/dt`` uses ``b'' <xi>_b`` where differentiation gives
    ``b'' <xi>_b^2``, so the last entry differs whenever ``xi1 b'' != 0``.
    """
    x1, x2, xi1, xi2 = p.x1, p.x2, p.xi1, p.xi2
    b, db, d2b = (float(f(x2)) for f in (profile.b, profile.db, profile.d2b))
    L2 = xi1 * xi1 + xi2 * xi2 + b * b
    L = np.sqrt(L2)
    u1, u2 = (float(v) for v in profile.u(x1, x2))
    (a11, a12), (a21, a22) = ((float(v) for v in row) for row in profile.du(x1, x2))
    return np.array([
        db * (L2 - 2.0 * xi1 * xi1) / L2**2 + u1,
        -2.0 * db * xi1 * xi2 / L2**2 + u2,
        -a11 * xi1 - a21 * xi2,
        xi1 * (2.0 * b * db * db - d2b * L) / L2**2 - a12 * xi1 - a22 * xi2,
    ])


# --------------------------------------------------------------------------
# Integration


def _logs(profile, ham, Y):
    L = xi_b_array(profile, Y[:, 1], Y[:, 2], Y[:, 3])
    return ham.value(Y), Y[:, 2].copy(), L, Y[:, 3] ** 2 + profile.b(Y[:, 1]) ** 2


class _BatchRHS:
    """Right-hand side for a batch whose rows may follow different Hamiltonians.

    All gradients are compiled into one function; each row then picks the
    components of its own mode.
    """

    def __init__(self, hams, row_modes, sign):
        self.modes = list(hams)
        trees = [g for m in self.modes for g in hams[m].grad]
        self.grad = compile_symbols(trees)
        self.codes = np.array([self.modes.index(m) for m in row_modes])
        self.sign = sign
        self._rows = None
        self._masks = None

    def __call__(self, Y, rows):
        g = self.grad.raw(Y[:, 0], Y[:, 1], Y[:, 2], Y[:, 3])
        out = np.empty(Y.shape)
        if len(self.modes) == 1:
            parts = g
        else:
            if self._rows is not rows:
                c = self.codes[rows]
                self._masks = [c == k for k in range(len(self.modes))]
                self._rows = rows
            parts = list(g[:4])
            for k in range(1, len(self.modes)):
                m = self._masks[k]
                parts = [np.where(m, g[4 * k + j], parts[j]) for j in range(4)]
        # Hamiltonians are real symbols; assignment keeps the real dtype
        out[:, 0] = parts[2]
        out[:, 1] = parts[3]
        out[:, 2] = parts[0]
        out[:, 3] = parts[1]
        out[:, 2:] *= -self.sign
        if self.sign < 0:
            out[:, :2] *= -1.0
        return out


def integrate_many(profile, P0, cfg, reverse=False):
    """Integrate each row of ``P0`` independently; returns a list of trajectories.

    ``cfg`` is one RayConfig for all rows or a sequence with one per row, so
    rays of different modes and tolerances can share one stepping loop.  Rays
    that stop early keep their partial trajectory and carry the reason in
    ``status`` (``"event"`` for the <xi>_b floor, ``"step_failure"``,
    ``"max_steps"``).
    """
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    n = P0.shape[0]
    cfgs = [cfg] * n if isinstance(cfg, RayConfig) else list(cfg)
    if len(cfgs) != n:
        raise ValueError("need one RayConfig per initial point")
    row_modes = [c.hamiltonian for c in cfgs]
    hams = {m: Hamiltonian(profile, m) for m in dict.fromkeys(row_modes)}
    f = _BatchRHS(hams, row_modes, -1.0 if reverse else 1.0)
    gap = np.array([c.gap_tol for c in cfgs])

    def floor_hit(Y, rows):
        return xi_b_array(profile, Y[:, 1], Y[:, 2], Y[:, 3]) < gap[rows]

    with np.errstate(divide="ignore", invalid="ignore"):
        res = dopri5_batch(
            f, P0,
            t_end=[c.t_max for c in cfgs],
            rtol=[c.rtol for c in cfgs],
            atol=[c.atol for c in cfgs],
            max_steps=[c.max_steps for c in cfgs],
            event=floor_hit, row_aware=True,
        )
    out = []
    for i in range(n):
        Y = res.y[i]
        tau, xi1, L, pinv = _logs(profile, hams[row_modes[i]], Y)
        out.append(Trajectory(res.t[i], Y, tau, xi1, L, pinv, res.dense[i], row_modes[i], res.status[i]))
    return out


def integrate(profile, p0, cfg, reverse=False):
    """Integrate one ray; raises on numerical failure.

    Raises
    ------
    DegenerateEvent
        <xi>_b dropped below ``cfg.gap_tol``; the partial trajectory is attached.
    StepFailure
        The step size underflowed.
    """
    p0 = p0.as_array() if isinstance(p0, PhasePoint) else np.asarray(p0, float)
    if cfg.hamiltonian is ModeId.ROSSBY and xi_b_array(profile, p0[1], p0[2], p0[3]) < cfg.gap_tol:
        raise DegenerateError("initial point violates the <xi>_b floor")
    traj = integrate_many(profile, p0[None], cfg, reverse=reverse)[0]
    if traj.status == "event":
        raise DegenerateEvent(f"<xi>_b fell below {cfg.gap_tol:.1e} at t = {traj.times[-1]:.6g}", traj)
    if traj.status == "step_failure":
        raise StepFailure(f"step size underflow at t = {traj.times[-1]:.6g}")
    return traj


# --------------------------------------------------------------------------
# Diagnostics


@dataclass(frozen=True)
class InvariantReport:
    tau_drift: float
    xi1_drift: float
    poincare_inv_drift: float
    min_xi_b: float


def invariant_report(traj, profile=None):
    return InvariantReport(
        tau_drift=float(np.max(np.abs(traj.tau - traj.tau[0]))),
        xi1_drift=float(np.max(np.abs(traj.xi1 - traj.xi1[0]))),
        poincare_inv_drift=float(np.max(np.abs(traj.poincare_inv - traj.poincare_inv[0]))),
        min_xi_b=float(np.min(traj.xi_b)),
    )


def find_beta(profile, eta, scan=(-50.0, 50.0), n_scan=200_001):
    """min |b'| over {|b| < eta}: dense scan, then a local refinement.

    Returns +inf if the set is empty.  The refinement keeps the scan from
    stepping over an isolated zero of b'.
    """
    x2 = np.linspace(scan[0], scan[1], n_scan)
    near_zero = np.abs(profile.b(x2)) < eta
    if not np.any(near_zero):
        return float("inf")
    idx = np.flatnonzero(near_zero)
    db = np.abs(profile.db(x2[idx]))
    k = idx[int(np.argmin(db))]
    best = float(db.min())
    lo, hi = x2[max(k - 1, 0)], x2[min(k + 1, n_scan - 1)]
    # squared so the objective is smooth at a zero of b'
    res = minimize_scalar(lambda s: float(profile.db(s)) ** 2, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    if abs(float(profile.b(res.x))) < eta:
        best = min(best, abs(float(profile.db(res.x))))
    return best


BETA_MIN = 1e-6


def xi_b_lower_bound(profile, tau_max, eta, scan=(-50.0, 50.0)):
    """``eta * min(1, eta / (tau_max + |u|_inf eta))``, after checking the profile.

    Raises ProfileAssumptionError unless ``|b| < eta`` implies ``|b'| >= beta > 0``
    on the scanned interval.
    """
    if eta <= 0:
        raise ProfileAssumptionError("eta must be positive")
    beta = find_beta(profile, eta, scan)
    if not beta > BETA_MIN:
        raise ProfileAssumptionError(f"b and b' vanish together near |b| < {eta}: beta = {beta:.3e}")
    den = abs(tau_max) + profile.u_inf_norm * eta
    return float(eta * min(1.0, eta / den)) if den > 0 else float(eta)


def _bisect(g, lo, hi, tol):
    glo = g(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def exit_time(traj, interval, tol=1e-9, probes=8):
    """First time ``x1`` leaves the open interval ``(u_minus, u_plus)``; None if never."""
    u_minus, u_plus = (float(v) for v in interval)

    def inside(x1):
        return min(x1 - u_minus, u_plus - x1)

    if inside(traj.points[0, 0]) <= 0.0:
        return 0.0
    thetas = np.linspace(0.0, 1.0, probes + 1)[1:]
    for i in range(len(traj.times) - 1):
        t0, t1 = traj.times[i], traj.times[i + 1]
        coeffs = traj.dense[i]
        prev = 0.0
        for th in thetas:
            if inside(dense_eval(coeffs, th)[0]) <= 0.0:
                def g(t):
                    return inside(dense_eval(coeffs, (t - t0) / (t1 - t0))[0])
                return _bisect(g, t0 + prev * (t1 - t0), t0 + th * (t1 - t0), tol)
            prev = th
    return None


class TrapKind(enum.Enum):
    TRAPPED = "trapped"
    DRIFT_RIGHT = "drift_right"
    DRIFT_LEFT = "drift_left"
    FIXED_POINT = "fixed_point"
    NO_PERIOD = "no_period_found"


@dataclass(frozen=True)
class TrappingVerdict:
    kind: TrapKind
    period: float | None = None
    mean_dx1: float | None = None

    def __post_init__(self):
        if (self.period is None) != (self.mean_dx1 is None):
            raise ValueError("mean_dx1 is present exactly when period is")


def trapping_classify(profile, p0, cfg, tol_trap=1e-6, delta=1e-6, still_tol=1e-12):
    """Classify a Rossby ray of a zonal-free profile (u == 0) by its x1 drift.

    The (x2, xi2) motion is one-dimensional and periodic; the period is the
    first upward crossing of the section through the start point normal to the
    initial (x2, xi2) velocity that lands within ``delta`` of the start.  The
    ray is trapped when the x1 displacement over one period averages to zero.
    """
    if not profile.u_is_zero:
        raise ValueError("trapping_classify needs a profile with u == 0")
    p0 = p0.as_array() if isinstance(p0, PhasePoint) else np.asarray(p0, float)
    ham = Hamiltonian(profile, ModeId.ROSSBY)
    v = ham.rhs(p0)[0]
    if np.linalg.norm(v) < still_tol:
        return TrappingVerdict(TrapKind.FIXED_POINT)
    v_plane = np.array([v[1], v[3]])
    if np.linalg.norm(v_plane) < still_tol:
        return TrappingVerdict(TrapKind.DRIFT_RIGHT if v[0] > 0 else TrapKind.DRIFT_LEFT)

    ray_cfg = RayConfig(t_max=cfg.t_max, rtol=cfg.rtol, atol=cfg.atol, max_steps=cfg.max_steps,
                        hamiltonian=ModeId.ROSSBY, gap_tol=cfg.gap_tol)
    traj = integrate_many(profile, p0[None], ray_cfg)[0]
    z0 = np.array([p0[1], p0[3]])

    def section(y):
        return (y[1] - z0[0]) * v_plane[0] + (y[3] - z0[1]) * v_plane[1]

    seen_negative = False
    thetas = np.linspace(0.0, 1.0, 9)
    for i in range(len(traj.times) - 1):
        t0, t1 = traj.times[i], traj.times[i + 1]
        c = traj.dense[i]
        vals = [section(dense_eval(c, th)) for th in thetas]
        for j in range(len(thetas) - 1):
            a, b = vals[j], vals[j + 1]
            if a < 0:
                seen_negative = True
            if seen_negative and a < 0 <= b:
                ta = t0 + thetas[j] * (t1 - t0)
                tb = t0 + thetas[j + 1] * (t1 - t0)
                T = _bisect(lambda t: section(traj.at(t)), ta, tb, 1e-12 * max(1.0, tb))
                yT = traj.at(T)
                if np.hypot(yT[1] - z0[0], yT[3] - z0[1]) < delta:
                    mean = (yT[0] - p0[0]) / T
                    if abs(mean) < tol_trap:
                        kind = TrapKind.TRAPPED
                    else:
                        kind = TrapKind.DRIFT_RIGHT if mean > 0 else TrapKind.DRIFT_LEFT
                    return TrappingVerdict(kind, period=float(T), mean_dx1=float(mean))
                seen_negative = False
    return TrappingVerdict(TrapKind.NO_PERIOD)


@dataclass(frozen=True)
class MourreReport:
    inf_bracket: float
    d0: float
    D0: float
    D1: float
    theoretical: float  # d0 / D1, the derivable constant
    stated: float  # d0 / D0, the constant quoted alongside the Mourre estimate
    holds: bool
    argmin: PhasePoint


def mourre_bound(profile, sampler, n):
    """Sampled lower bound of the bracket {tau_+, x1} = xi1 / <xi>_b on a compact set."""
    pts = np.asarray(sampler(n), dtype=float).reshape(-1, 4)
    if np.any(pts[:, 2] <= 0.0):
        raise Xi1SignViolation("sampled set meets xi1 <= 0")
    br = np.real(evaluate(bracket(tau_pm_symbol(profile, +1), X1), *pts.T))
    L = xi_b_array(profile, pts[:, 1], pts[:, 2], pts[:, 3])
    i = int(np.argmin(br))
    d0, D0, D1 = float(np.min(pts[:, 2])), float(np.min(L)), float(np.max(L))
    theo = d0 / D1
    return MourreReport(
        inf_bracket=float(br[i]), d0=d0, D0=D0, D1=D1, theoretical=theo, stated=d0 / D0,
        holds=bool(br[i] >= theo - 1e-12), argmin=PhasePoint.from_array(pts[i]),
    )


@dataclass
class EnsembleResult:
    final: np.ndarray  # (n, 4) last state of each ray
    bbox: dict  # coordinate -> (min, max) over all rays and stored times
    min_xi_b: float
    status: list
    trajectories: list = field(repr=False, default_factory=list)

    @property
    def failures(self):
        return [i for i, s in enumerate(self.status) if s != "done"]


def worker_count():
    try:
        return max(1, int(os.environ.get("WAVETRACE_THREADS", "1")))
    except ValueError:
        return 1


def ensemble_evolve(profile, sampler, n, cfg, workers=None):
    """Integrate ``n`` sampled rays; failing rays are reported, not raised."""
    P0 = np.asarray(sampler(n), dtype=float).reshape(-1, 4)
    workers = worker_count() if workers is None else max(1, int(workers))
    chunks = [c for c in np.array_split(np.arange(len(P0)), workers) if c.size]
    if len(chunks) == 1:
        trajs = integrate_many(profile, P0, cfg)
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: integrate_many(profile, P0[c], cfg), chunks))
        trajs = [t for part in parts for t in part]  # chunks are contiguous: ray order kept
    allpts = np.concatenate([t.points for t in trajs])
    bbox = {k: (float(allpts[:, j].min()), float(allpts[:, j].max())) for j, k in enumerate(COORDS)}
    return EnsembleResult(
        final=np.array([t.points[-1] for t in trajs]),
        bbox=bbox,
        min_xi_b=float(min(t.xi_b.min() for t in trajs)),
        status=[t.status for t in trajs],
        trajectories=trajs,
    )
