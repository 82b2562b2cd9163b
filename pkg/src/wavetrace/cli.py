"""Scenario-driven command line front end.

A scenario is a TOML file; see ``scenarios/`` for one commented example per
subcommand.  Every output starts with a header (tool version, scenario hash,
seed, eps, profile id).  CSV numbers use 17 significant digits; JSON numbers
use the shortest repr that round-trips the double exactly.

Exit codes: 0 success, 2 invalid scenario, 3 numerical failure, 4 a checked
criterion failed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import quantize as Q
from .errors import (
    Xi1SignViolation,
    DegenerateError,
    DegenerateEvent,
    MarginError,
    ProfileAssumptionError,
    ProfileBoxMismatch,
    ScenarioError,
    StepFailure,
)
from .normal_form import ModeId, subprincipal_diagonal_batch, tau_R_array
from .profiles import B_CATALOGUE, U_CATALOGUE, make_profile
from .raytrace import (
    RayConfig,
    TrapKind,
    ensemble_evolve,
    exit_time,
    integrate_many,
    invariant_report,
    mourre_bound,
    trapping_classify,
    xi_b_lower_bound,
)
from .sampling import PhaseBox, box_sampler, check_gap_margin, check_xi1_sign
from .spectral import DEFAULT_GAP_TOL, eigendecompose_batch
from .symbols import COORDS, xi_b_array

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_CRITERION = 0, 2, 3, 4
UNDER_RESOLVED_N = 16
TRAJ_COLUMNS = ("t", "x1", "x2", "xi1", "xi2", "tau", "xi_b", "poincare_inv")


# --------------------------------------------------------------------------
# Scenario


@dataclass
class GridSpec:
    n: int = 16
    L: float = 2.0 * math.pi
    eps: float = 0.1
    eps_list: tuple = (0.4, 0.2, 0.1)
    oversample: int = 2


@dataclass
class Scenario:
    """Validated scenario; ``raw`` is the resolved mapping used for the hash."""

    profile_spec: dict
    mode: ModeId
    seed: int | None
    points: np.ndarray | None
    box: PhaseBox | None
    count: int | None
    ray: RayConfig
    interval: tuple | None = None
    eta: float | None = None
    classify: bool = False
    grid: GridSpec | None = None
    quantize: dict = field(default_factory=dict)
    out_dir: str = "out"
    write_rays: bool = True
    raw: dict = field(default_factory=dict)

    @property
    def profile(self):
        return make_profile(**self.profile_spec)

    @property
    def sha256(self):
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def initial_points(self):
        if self.points is not None:
            return self.points
        return np.asarray(box_sampler(self.box, self.seed)(self.count))


def _get(d, key, kind, where, default=None, required=False):
    if key not in d:
        if required:
            raise ScenarioError("missing required key", f"{where}.{key}".lstrip("."))
        return default
    v = d[key]
    ok = isinstance(v, kind) and not (kind in (int, float, (int, float)) and isinstance(v, bool))
    if not ok:
        raise ScenarioError(f"expected {getattr(kind, '__name__', 'number')}, got {v!r}", f"{where}.{key}".lstrip("."))
    return v


def _interval(v, where):
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(a, (int, float)) for a in v)):
        raise ScenarioError("expected [lo, hi]", where)
    lo, hi = float(v[0]), float(v[1])
    if not lo <= hi:
        raise ScenarioError(f"empty interval {v}", where)
    return lo, hi


def _points(v, where):
    arr = np.asarray(v, dtype=float) if isinstance(v, list) else None
    if arr is None or arr.ndim not in (1, 2) or arr.shape[-1] != 4 or not np.all(np.isfinite(arr)):
        raise ScenarioError("expected [x1, x2, xi1, xi2] or a list of such points", where)
    return np.atleast_2d(arr)


def parse_scenario(data, seed=None, eps=None):
    """Build a Scenario from a parsed TOML mapping; overrides win over the file."""
    num = (int, float)
    prof = _get(data, "profile", dict, "", required=True)
    b = _get(prof, "b", str, "profile", "linear")
    u = _get(prof, "u", str, "profile", "zero")
    if b not in B_CATALOGUE:
        raise ScenarioError(f"unknown b {b!r}; choose from {sorted(B_CATALOGUE)}", "profile.b")
    if u not in U_CATALOGUE:
        raise ScenarioError(f"unknown u {u!r}; choose from {sorted(U_CATALOGUE)}", "profile.u")
    profile_spec = {
        "b": b, "b_params": dict(_get(prof, "b_params", dict, "profile", {})),
        "u": u, "u_params": dict(_get(prof, "u_params", dict, "profile", {})),
        "label": _get(prof, "label", str, "profile", ""),
    }
    try:
        make_profile(**profile_spec)
    except TypeError as exc:
        raise ScenarioError(f"bad profile parameters ({exc})", "profile") from None

    try:
        mode = ModeId.parse(_get(data, "mode", str, "", "rossby"))
    except ValueError as exc:
        raise ScenarioError(str(exc), "mode") from None
    if seed is None:
        seed = _get(data, "seed", int, "", None)

    ray_d = _get(data, "ray", dict, "", {})
    try:
        ray = RayConfig(
            t_max=float(_get(ray_d, "t_max", num, "ray", 100.0)),
            rtol=float(_get(ray_d, "rtol", num, "ray", 1e-10)),
            atol=float(_get(ray_d, "atol", num, "ray", 1e-12)),
            max_steps=int(_get(ray_d, "max_steps", int, "ray", 1_000_000)),
            hamiltonian=mode,
            gap_tol=float(_get(ray_d, "gap_tol", num, "ray", DEFAULT_GAP_TOL)),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), "ray") from None
    interval = _interval(ray_d["interval"], "ray.interval") if "interval" in ray_d else None
    eta = _get(ray_d, "eta", num, "ray", None)
    if eta is not None and not eta > 0:
        raise ScenarioError("must be positive", "ray.eta")

    init = _get(data, "initial", dict, "", {})
    points = box = count = None
    given = [k for k in ("point", "points", "box") if k in init]
    if len(given) > 1:
        raise ScenarioError(f"give exactly one of point, points, box (got {given})", "initial")
    if "point" in init:
        points = _points(init["point"], "initial.point")
    elif "points" in init:
        points = _points(init["points"], "initial.points")
    elif "box" in init:
        bd = _get(init, "box", dict, "initial")
        try:
            box = PhaseBox(**{k: _interval(bd.get(k), f"initial.box.{k}") for k in COORDS})
        except ValueError as exc:
            raise ScenarioError(str(exc), "initial.box") from None
        count = _get(init, "count", int, "initial", required=True)
        if count < 1:
            raise ScenarioError("must be >= 1", "initial.count")
        if seed is None:
            raise ScenarioError("a sampler box needs a seed (top-level 'seed' or --seed)", "seed")

    grid = None
    if "grid" in data:
        gd = _get(data, "grid", dict, "")
        grid = GridSpec(
            n=_get(gd, "n", int, "grid", 16),
            L=float(_get(gd, "L", num, "grid", 2.0 * math.pi)),
            eps=float(_get(gd, "eps", num, "grid", 0.1)),
            eps_list=tuple(float(e) for e in _get(gd, "eps_list", list, "grid", [0.4, 0.2, 0.1])),
            oversample=_get(gd, "oversample", int, "grid", 2),
        )
        if grid.n < 4 or grid.n % 2:
            raise ScenarioError("n must be an even integer >= 4", "grid.n")
        if eps is not None:
            grid.eps = float(eps)
        if not (grid.L > 0 and grid.eps > 0 and all(e > 0 for e in grid.eps_list)):
            raise ScenarioError("L, eps and eps_list entries must be positive", "grid")

    out = _get(data, "output", dict, "", {})
    scen = Scenario(
        profile_spec=profile_spec, mode=mode, seed=seed, points=points, box=box, count=count, ray=ray,
        interval=interval, eta=None if eta is None else float(eta),
        classify=bool(_get(ray_d, "classify", bool, "ray", False)),
        grid=grid, quantize=dict(_get(data, "quantize", dict, "", {})),
        out_dir=_get(out, "dir", str, "output", "out"),
        write_rays=bool(_get(out, "write_rays", bool, "output", True)),
    )
    raw = dict(data)
    raw["seed"] = seed
    if grid is not None:
        raw["grid"] = dict(raw["grid"], eps=grid.eps)
    scen.raw = raw
    return scen


def load_scenario(path, seed=None, eps=None):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"TOML syntax error: {exc}", str(path)) from None
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario ({exc.strerror})", str(path)) from None
    return parse_scenario(data, seed=seed, eps=eps)


# --------------------------------------------------------------------------
# Output


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def header(scen, eps=None):
    return {
        "tool": "wavetrace",
        "version": __version__,
        "scenario_sha256": scen.sha256,
        "seed": scen.seed,
        "eps": eps,
        "profile": scen.profile.profile_id,
    }


def write_csv(path, head, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in head.items():
            fh.write(f"# {k}: {'' if v is None else v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, TrapKind):
        return o.value
    return o


def write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# Commands


def _validate_box(scen, need_xi1_sign=False):
    if scen.box is None:
        return
    msg = check_gap_margin(scen.profile, scen.box, scen.ray.gap_tol)
    if msg:
        raise ScenarioError(msg, "initial.box")
    if need_xi1_sign:
        msg = check_xi1_sign(scen.box)
        if msg:
            raise ScenarioError(msg, "initial.box.xi1")


def _require_points(scen):
    if scen.points is None and scen.box is None:
        raise ScenarioError("this command needs initial data (point, points or box)", "initial")


def cmd_eig(scen, out):
    """Per-point spectrum, eigenvectors and gap; degenerate points are flagged, not fatal."""
    _require_points(scen)
    _validate_box(scen)
    P = scen.initial_points()
    pr = scen.profile
    cols = list(COORDS) + ["delta_R", "delta_plus", "delta_minus", "gap"]
    cols += [f"{part}_{v}{c}" for v in ("uR", "uplus", "uminus") for c in (1, 2, 3) for part in ("re", "im")]
    cols += ["status"]
    rows, degenerate = [], 0
    for p in P:
        try:
            d, V = eigendecompose_batch(pr, p[1], p[2], p[3], gap_tol=scen.ray.gap_tol)
        except DegenerateError:
            degenerate += 1
            rows.append(list(p) + [math.nan] * (len(cols) - 5) + ["degenerate"])
            continue
        vec = []
        for j in range(3):
            for c in range(3):
                vec += [V[c, j].real, V[c, j].imag]
        rows.append(list(p) + [d[0], d[1], d[2], d[1]] + vec + ["ok"])
    write_csv(out / "eig.csv", header(scen), cols, rows)
    return EXIT_NUMERIC if degenerate else EXIT_OK


def cmd_hamiltonians(scen, out):
    """Closed-form tau_R against the generic subprincipal formula, plus tau_+-."""
    _require_points(scen)
    _validate_box(scen)
    P = scen.initial_points()
    pr = scen.profile
    L = xi_b_array(pr, P[:, 1], P[:, 2], P[:, 3])
    if np.any(L < scen.ray.gap_tol):
        raise DegenerateError(f"{int(np.sum(L < scen.ray.gap_tol))} point(s) below gap_tol")
    closed = tau_R_array(pr, *P.T)
    br, fl, total = subprincipal_diagonal_batch(pr, *P.T, ModeId.ROSSBY, gap_tol=scen.ray.gap_tol)
    cols = list(COORDS) + ["tau_R_closed", "tau_R_generic", "bracket_part", "flow_part", "abs_error",
                           "tau_plus", "tau_minus"]
    rows = [
        list(P[i]) + [closed[i], total[i].real, br[i].real, fl[i].real, abs(total[i] - closed[i]), L[i], -L[i]]
        for i in range(len(P))
    ]
    write_csv(out / "hamiltonians.csv", header(scen), cols, rows)
    return EXIT_OK


def _ray_rows(traj):
    return np.column_stack([traj.times, traj.points, traj.tau, traj.xi_b, traj.poincare_inv])


def _ray_summary(scen, traj, p0):
    inv = invariant_report(traj)
    s = {
        "status": traj.status,
        "t_end": float(traj.times[-1]),
        "steps": len(traj.times) - 1,
        "tau0": float(traj.tau[0]),
        "tau_drift": inv.tau_drift,
        "xi1_drift": inv.xi1_drift,
        "poincare_inv_drift": inv.poincare_inv_drift,
        "min_xi_b": inv.min_xi_b,
    }
    if scen.interval is not None:
        s["exit_time"] = exit_time(traj, scen.interval)
    if scen.classify and scen.mode is ModeId.ROSSBY:
        v = trapping_classify(scen.profile, p0, scen.ray)
        s["trapping"] = {"kind": v.kind, "period": v.period, "mean_dx1": v.mean_dx1}
    return s


def _floor(scen, trajs):
    if scen.eta is None or scen.mode is not ModeId.ROSSBY:
        return None
    tau_max = max(float(np.max(np.abs(t.tau))) for t in trajs)
    bound = xi_b_lower_bound(scen.profile, tau_max, scen.eta)
    m = min(float(t.xi_b.min()) for t in trajs)
    return {"eta": scen.eta, "tau_max": tau_max, "bound": bound, "min_xi_b": m, "holds": m >= bound - 1e-9}


def cmd_trace(scen, out):
    """Integrate each initial point; per-ray CSV plus a JSON summary."""
    _require_points(scen)
    _validate_box(scen, need_xi1_sign=scen.mode is not ModeId.ROSSBY and scen.interval is not None)
    P = scen.initial_points()
    trajs = integrate_many(scen.profile, P, scen.ray)
    head = header(scen)
    if scen.write_rays:
        for i, t in enumerate(trajs):
            write_csv(out / f"ray_{i:04d}.csv", head, TRAJ_COLUMNS, _ray_rows(t))
    summary = {"header": head, "mode": scen.mode.value,
               "rays": [_ray_summary(scen, t, P[i]) for i, t in enumerate(trajs)]}
    fl = _floor(scen, trajs)
    if fl is not None:
        summary["floor"] = fl
    write_json(out / "trace.json", summary)
    return EXIT_NUMERIC if any(t.status in ("event", "step_failure") for t in trajs) else EXIT_OK


def cmd_ensemble(scen, out):
    """Sampled ensemble: bounding boxes, floor bound, exit times; ray order preserved."""
    if scen.box is None:
        raise ScenarioError("ensemble needs a sampler box", "initial.box")
    _validate_box(scen, need_xi1_sign=scen.mode is not ModeId.ROSSBY)
    res = ensemble_evolve(scen.profile, box_sampler(scen.box, scen.seed), scen.count, scen.ray)
    head = header(scen)
    if scen.write_rays:
        for i, t in enumerate(res.trajectories):
            write_csv(out / f"ray_{i:04d}.csv", head, TRAJ_COLUMNS, _ray_rows(t))
    summary = {
        "header": head,
        "mode": scen.mode.value,
        "count": scen.count,
        "bbox": res.bbox,
        "initial_xi1": [scen.box.xi1[0], scen.box.xi1[1]],
        "min_xi_b": res.min_xi_b,
        "failures": res.failures,
        "status": res.status,
    }
    if scen.mode is not ModeId.ROSSBY:
        P = np.array([t.points[0] for t in res.trajectories])
        lo, hi = res.bbox["xi1"]
        summary["xi1_bbox_change"] = max(abs(lo - P[:, 2].min()), abs(hi - P[:, 2].max()))
        if scen.interval is not None:
            summary["exit_times"] = [exit_time(t, scen.interval) for t in res.trajectories]
    fl = _floor(scen, res.trajectories)
    if fl is not None:
        summary["floor"] = fl
    write_json(out / "ensemble.json", summary)
    return EXIT_NUMERIC if any(s in ("event", "step_failure") for s in res.status) else EXIT_OK


def cmd_mourre(scen, out):
    """Sampled infimum of {tau_+, x1} on the box against d0 / D1."""
    if scen.box is None:
        raise ScenarioError("mourre needs a sampler box", "initial.box")
    _validate_box(scen, need_xi1_sign=True)
    try:
        rep = mourre_bound(scen.profile, box_sampler(scen.box, scen.seed), scen.count)
    except Xi1SignViolation as exc:
        raise ScenarioError(str(exc), "initial.box.xi1") from None
    write_json(out / "mourre.json", {
        "header": header(scen),
        "inf_bracket": rep.inf_bracket, "d0": rep.d0, "D0": rep.D0, "D1": rep.D1,
        "theoretical": rep.theoretical, "stated": rep.stated, "holds": rep.holds,
        "argmin": [rep.argmin.x1, rep.argmin.x2, rep.argmin.xi1, rep.argmin.xi2],
    })
    return EXIT_OK if rep.holds else EXIT_CRITERION


QUANTIZE_DEFAULTS = {
    "slope_window": [0.8, 1.2],
    "corrected_window": [1.7, 2.3],
    "microloc": {"L": 5.0, "distance": 2.5, "radius": 1.0, "min_slope": 2.0},
    "stability": {"eps": 0.2, "t_max": 10.0, "n_times": 101, "seed": 0},
}


def _merged(user):
    cfg = json.loads(json.dumps(QUANTIZE_DEFAULTS))
    for k, v in user.items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict):
            cfg[k].update(v)
        else:
            cfg[k] = v
    return cfg


def quantize_suite(profile, grid, qcfg):
    """Run the residual, microlocalization and stability checks; returns a report dict."""
    qcfg = _merged(qcfg)
    eps_list = list(grid.eps_list)
    lo1, hi1 = qcfg["slope_window"]
    lo2, hi2 = qcfg["corrected_window"]
    Q.check_profile_box(profile, Q.Grid(grid.n, grid.L, grid.eps))
    pts = Q.residual_family(profile, eps_list, grid.n, grid.L, grid.oversample)
    rd = Q.residual_diag(profile, points=pts)
    uc = Q.unitarity_corrected_residual(profile, points=pts)
    checks = {
        "r_diag_slope": {"value": rd.slope_diag, "window": [lo1, hi1], "pass": lo1 <= rd.slope_diag <= hi1},
        "r_unit_slope": {"value": rd.slope_unit, "window": [lo1, hi1], "pass": lo1 <= rd.slope_unit <= hi1},
        "r2_slope": {"value": uc.slope, "window": [lo2, hi2], "pass": lo2 <= uc.slope <= hi2},
    }

    m = qcfg["microloc"]
    Lm = float(m["L"])
    c = Lm / 2.0
    far = (c + float(m["distance"]), c, 0.0, 0.0)
    vals = []
    for e in eps_list:
        g = Q.Grid(grid.n, Lm, e)
        vals.append(Q.microloc_test(Q.gaussian_packet(g, (c, c), (0.0, 0.0)), Q.phase_bump(far, m["radius"]), g))
    ms = Q.loglog_slope(eps_list, vals)
    checks["microloc_slope"] = {"value": ms, "min": m["min_slope"], "pass": ms >= m["min_slope"]}

    s = qcfg["stability"]
    es = float(s["eps"])
    g = Q.Grid(grid.n, grid.L, es)
    A = Q.build_A_exact(profile, g)
    phi0 = Q.gaussian_packet(g, (grid.L / 2, grid.L / 2), (0.0, 0.0)).embed(0)
    P = Q.random_hermitian(3 * g.size, np.random.default_rng(int(s["seed"])))
    t = np.linspace(0.0, float(s["t_max"]), int(s["n_times"]))
    full = Q.compare_propagators(A, Q.GridOperator(A.matrix + es**4 * P, g), phi0, t)
    half = Q.compare_propagators(A, Q.GridOperator(A.matrix + 0.5 * es**4 * P, g), phi0, t)
    limit = es**4 * float(s["t_max"]) * (1 + 1e-6)
    ratio = half.max_diff / full.max_diff if full.max_diff > 0 else float("nan")
    checks["stability_bound"] = {"value": full.max_diff, "max": limit,
                                 "pass": full.max_diff <= limit and full.bound_check}
    checks["stability_halving"] = {"value": ratio, "window": [0.45, 0.55], "pass": 0.45 <= ratio <= 0.55}

    return {
        "eps_list": eps_list,
        "n": grid.n,
        "L": grid.L,
        "oversample": grid.oversample,
        "under_resolved": grid.n < UNDER_RESOLVED_N,
        "residuals": {"r_diag": rd.r_diag, "r_unit": rd.r_unit, "r2": uc.r2},
        "microloc": {"L": Lm, "values": vals},
        "stability": {"eps": es, "max_diff": full.max_diff, "half_max_diff": half.max_diff,
                      "norm_drift": full.norm_drift},
        "checks": checks,
        "pass": all(v["pass"] for v in checks.values()),
    }


def cmd_quantize_check(scen, out):
    if scen.grid is None:
        raise ScenarioError("quantize-check needs a [grid] table", "grid")
    rep = quantize_suite(scen.profile, scen.grid, scen.quantize)
    write_json(out / "quantize_check.json", {"header": header(scen, scen.grid.eps), **rep})
    if rep["pass"] or rep["under_resolved"]:
        return EXIT_OK
    return EXIT_CRITERION


COMMANDS = {
    "eig": cmd_eig,
    "hamiltonians": cmd_hamiltonians,
    "trace": cmd_trace,
    "ensemble": cmd_ensemble,
    "quantize-check": cmd_quantize_check,
    "mourre": cmd_mourre,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="wavetrace", description="Rossby/Poincare ray and symbol analyses.")
    ap.add_argument("--version", action="version", version=f"wavetrace {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, metavar="PATH", help="scenario TOML file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="sampler seed override")
        p.add_argument("--eps", type=float, help="semiclassical parameter override")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        scen = load_scenario(args.config, seed=args.seed, eps=args.eps)
        out = Path(args.out if args.out else scen.out_dir)
        return COMMANDS[args.command](scen, out)
    except (ScenarioError, ProfileBoxMismatch, ProfileAssumptionError, MarginError) as exc:
        print(f"wavetrace: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StepFailure, DegenerateEvent, DegenerateError) as exc:
        print(f"wavetrace: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
