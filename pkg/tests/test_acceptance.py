"""Acceptance suite: ten criteria at their stated tolerances and runtime limits.

Each test appends one summary line to ``RESULTS``; conftest prints them at the
end of the session, so ``pytest tests/test_acceptance.py`` ends with one
PASS/FAIL line per criterion.
"""
import time

import numpy as np
import pytest

from wavetrace.normal_form import ModeId, homological_solve, verify_tau_R
from wavetrace.profiles import Profile, StationaryFlow, bump_flow, linear_b, shifted_sine_b, zero_flow
from wavetrace.quantize import (
    Grid,
    GridOperator,
    build_A_exact,
    compare_propagators,
    gaussian_packet,
    loglog_slope,
    microloc_test,
    phase_bump,
    random_hermitian,
    residual_diag,
    residual_family,
    unitarity_corrected_residual,
)
from wavetrace.raytrace import (
    Hamiltonian,
    RayConfig,
    ensemble_evolve,
    exit_time,
    integrate_many,
    mourre_bound,
    xi_b_lower_bound,
)
from wavetrace.sampling import PhaseBox, box_sampler
from wavetrace.spectral import eigendecompose_batch, hermitian_eig_oracle
from wavetrace.symbols import xi_b_array

pytestmark = pytest.mark.slow

RESULTS = {}

LINEAR = Profile(linear_b(), zero_flow())
SINE = Profile(shifted_sine_b(), zero_flow())


def zonal_shear(amplitude=0.4):
    """u = (A sech^2 x2, 0): depends on x2 only."""

    def velocity(x1, x2):
        s = 1.0 / np.cosh(x2)
        return amplitude * s * s, np.zeros_like(x1)

    def jacobian(x1, x2):
        z = np.zeros_like(x1)
        return (z, -2.0 * amplitude * np.tanh(x2) / np.cosh(x2) ** 2), (z, z)

    return StationaryFlow("zonal-shear", {"amplitude": amplitude}, velocity, jacobian,
                          support=((-np.inf, np.inf), (-np.inf, np.inf)), inf_norm=amplitude)


def record(num, name, ok, detail, elapsed, limit):
    ok = bool(ok) and elapsed < limit
    RESULTS[num] = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}  ({elapsed:.1f} s, limit {limit:g} s)"
    return ok


# --------------------------------------------------------------------------


def test_criterion_01_spectral_exactness():
    t0 = time.perf_counter()
    box = PhaseBox((-3, 3), (-3, 3), (-3, 3), (-3, 3))
    profiles = [
        Profile(linear_b(), zero_flow()),
        Profile(linear_b(), bump_flow()),
        Profile(shifted_sine_b(), zero_flow()),
        Profile(shifted_sine_b(), bump_flow()),
    ]
    res = unit = eig = 0.0
    count = 0
    for k, prof in enumerate(profiles):
        pts = box_sampler(box, k)(12_000)
        L = xi_b_array(prof, pts[:, 1], pts[:, 2], pts[:, 3])
        pts = pts[L >= 0.1][:10_000]
        count += len(pts)
        x2, xi1, xi2 = pts[:, 1], pts[:, 2], pts[:, 3]
        d, V = eigendecompose_batch(prof, x2, xi1, xi2)
        b = prof.b(x2)
        A = np.zeros((len(pts), 3, 3), complex)
        A[:, 0, 1] = A[:, 1, 0] = xi1
        A[:, 0, 2] = A[:, 2, 0] = xi2
        A[:, 1, 2], A[:, 2, 1] = -1j * b, 1j * b
        res = max(res, float(np.max(np.linalg.norm(A @ V - V * d[:, None, :], axis=1))))
        G = np.conj(np.swapaxes(V, 1, 2)) @ V - np.eye(3)
        unit = max(unit, float(np.max(np.linalg.norm(G, 2, axis=(1, 2)))))
        w, _ = hermitian_eig_oracle(A)
        eig = max(eig, float(np.max(np.abs(np.sort(d, axis=1) - w))))
    dt = time.perf_counter() - t0
    ok = record(1, "spectral exactness", res <= 1e-12 and unit <= 1e-12 and eig <= 1e-12,
                f"{count} points, residual {res:.1e}, |U*U-I| {unit:.1e}, eig vs oracle {eig:.1e}", dt, 5)
    assert ok, RESULTS[1]


def test_criterion_02_subprincipal_matches_tau_R():
    t0 = time.perf_counter()
    box = PhaseBox((-2, 2), (-2, 2), (-2, 2), (-2, 2))
    errs = {}
    for name, prof in [("zonal", Profile(shifted_sine_b(), zonal_shear())),
                       ("x1-dependent", Profile(shifted_sine_b(), bump_flow(radius=1.5, amplitude=0.5)))]:
        errs[name] = verify_tau_R(prof, box_sampler(box, 0), 1000)
    dt = time.perf_counter() - t0
    worst = max(errs.values())
    ok = record(2, "subprincipal formula vs tau_R", worst <= 1e-8,
                ", ".join(f"{k} {v:.1e}" for k, v in errs.items()), dt, 5)
    assert ok, RESULTS[2]


def _commutator_residual(d, W0, Delta1, D1):
    # [diag(d), W]_ij = (d_i - d_j) W_ij, formed entrywise
    return np.subtract.outer(d, d) * W0 + Delta1 - np.diag(D1)


def test_criterion_03_homological_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    cases = []
    while len(cases) < 1000:
        d = rng.uniform(-3, 3, 3)
        gaps = np.abs(np.subtract.outer(d, d))[np.triu_indices(3, 1)]
        if gaps.min() >= 1e-3:
            cases.append(d)
    # the structured spectra (0, L, -L) of the principal symbol, down to the smallest admissible gap
    cases += [np.array([0.0, L, -L]) for L in np.geomspace(1e-3, 10, 50)]
    worst = worst_matmul = 0.0
    for d in cases:
        X = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        Delta1 = X + X.conj().T
        W0, D1 = homological_solve(d, Delta1, gap_tol=1e-3)
        worst = max(worst, float(np.abs(_commutator_residual(d, W0, Delta1, D1)).max()))
        R = np.diag(d) @ W0 - W0 @ np.diag(d) + Delta1 - np.diag(D1)
        worst_matmul = max(worst_matmul, float(np.abs(R).max()))
    dt = time.perf_counter() - t0
    ok = record(3, "homological identity", worst <= 1e-13,
                f"{len(cases)} instances, max entry {worst:.1e} (via two matrix products {worst_matmul:.1e})", dt, 1)
    assert ok, RESULTS[3]


def test_criterion_04_ray_invariants():
    t0 = time.perf_counter()
    box = PhaseBox((-1, 1), (-2, 2), (1, 2), (-1, 1))
    pts = box_sampler(box, 0)(100)
    P0 = np.vstack([pts, pts])
    ross = RayConfig(t_max=1000.0, rtol=2e-11, atol=2e-13, hamiltonian=ModeId.ROSSBY)
    poin = RayConfig(t_max=1000.0, rtol=6e-13, atol=6e-15, hamiltonian=ModeId.POINCARE_PLUS)
    trajs = integrate_many(LINEAR, P0, [ross] * 100 + [poin] * 100)
    status_ok = all(t.status == "done" and t.times[-1] == 1000.0 for t in trajs)
    tau_rel = max(float(np.max(np.abs(t.tau - t.tau[0])) / abs(t.tau[0])) for t in trajs)
    ham = Hamiltonian(LINEAR, ModeId.POINCARE_PLUS)
    xi1_d = pinv_d = spread = 0.0
    for t in trajs[100:]:
        xi1_d = max(xi1_d, float(np.max(np.abs(t.xi1 - t.xi1[0]))))
        pinv_d = max(pinv_d, float(np.max(np.abs(t.poincare_inv - t.poincare_inv[0]))))
        dx1 = ham.rhs(t.points)[:, 0]
        spread = max(spread, float(dx1.max() - dx1.min()))
    dt = time.perf_counter() - t0
    ok = record(4, "ray invariants", status_ok and max(tau_rel, xi1_d, pinv_d, spread) <= 1e-8,
                f"tau rel {tau_rel:.1e}, xi1 {xi1_d:.1e}, xi2^2+b^2 {pinv_d:.1e}, dx1/dt spread {spread:.1e}",
                dt, 60)
    assert ok, RESULTS[4]


def test_criterion_05_poincare_escape():
    t0 = time.perf_counter()
    box = PhaseBox((-0.9, 0.9), (-2, 2), (1, 2), (-1, 1))
    cfg = RayConfig(t_max=10.0, hamiltonian=ModeId.POINCARE_PLUS)
    ens = ensemble_evolve(LINEAR, box_sampler(box, 0), 100, cfg)
    P = np.array([t.points[0] for t in ens.trajectories])
    L0 = xi_b_array(LINEAR, P[:, 1], P[:, 2], P[:, 3])
    predicted = (1.0 - P[:, 0]) * L0 / P[:, 2]
    measured = np.array([exit_time(t, (-1.0, 1.0)) for t in ens.trajectories], dtype=float)
    err = float(np.max(np.abs(measured - predicted)))
    lo, hi = ens.bbox["xi1"]
    bbox = max(abs(lo - P[:, 2].min()), abs(hi - P[:, 2].max()))
    dt = time.perf_counter() - t0
    ok = record(5, "Poincare escape", err <= 1e-6 and bbox <= 1e-10,
                f"exit time error {err:.1e}, xi1 bbox change {bbox:.1e}", dt, 30)
    assert ok, RESULTS[5]


def test_criterion_06_rossby_floor_and_trapping():
    t0 = time.perf_counter()
    box = PhaseBox((-1, 1), (-2, 2), (1, 2), (-1, 1))
    eta = 1.0
    boxes, slack = [], np.inf
    for t_max in (1000.0, 2000.0):
        ens = ensemble_evolve(LINEAR, box_sampler(box, 0), 100, RayConfig(t_max=t_max))
        assert all(s == "done" for s in ens.status)
        tau_max = max(float(np.max(np.abs(t.tau))) for t in ens.trajectories)
        bound = xi_b_lower_bound(LINEAR, tau_max, eta)
        slack = min(slack, ens.min_xi_b - (bound - 1e-9))
        boxes.append(ens.bbox["x2"])
    (a0, a1), (b0, b1) = boxes
    change = max(abs(b0 - a0), abs(b1 - a1)) / (a1 - a0)
    dt = time.perf_counter() - t0
    ok = record(6, "Rossby floor and x2 trapping", slack >= 0 and change < 0.01,
                f"floor slack {slack:.3f}, x2 bbox {boxes[0][0]:.4f}..{boxes[0][1]:.4f}, relative change {change:.1e}",
                dt, 120)
    assert ok, RESULTS[6]


def test_criterion_07_mourre_bracket():
    t0 = time.perf_counter()
    box = PhaseBox((-1, 1), (-3, 3), (1, 2), (-1, 1))
    rep = mourre_bound(SINE, box_sampler(box, 0), 4096)
    dt = time.perf_counter() - t0
    ok = record(7, "Mourre bracket", rep.inf_bracket >= rep.theoretical - 1e-12,
                f"inf {rep.inf_bracket:.6f} >= d0/D1 = {rep.theoretical:.6f}", dt, 1)
    assert ok, RESULTS[7]


def test_criterion_08_diagonalization_scaling():
    t0 = time.perf_counter()
    pts = residual_family(SINE, (0.4, 0.2, 0.1), n=16, L=2 * np.pi, oversample=2)
    rd = residual_diag(SINE, points=pts)
    uc = unitarity_corrected_residual(SINE, points=pts)
    dt = time.perf_counter() - t0
    ok = record(8, "diagonalization scaling",
                0.8 <= rd.slope_diag <= 1.2 and 0.8 <= rd.slope_unit <= 1.2 and 1.7 <= uc.slope <= 2.3,
                f"slopes r_diag {rd.slope_diag:.3f}, r_unit {rd.slope_unit:.3f}, r2 {uc.slope:.3f}", dt, 180)
    assert ok, RESULTS[8]


def test_criterion_09_microlocalization_decay():
    t0 = time.perf_counter()
    eps_list = (0.4, 0.2, 0.1)
    chi = phase_bump((5.0, 2.5, 0.0, 0.0), 1.0)  # phase-space distance 2.5 from the packet
    vals = []
    for eps in eps_list:
        g = Grid(16, 5.0, eps)
        vals.append(microloc_test(gaussian_packet(g, (2.5, 2.5), (0.0, 0.0)), chi, g))
    slope = loglog_slope(eps_list, vals)
    dt = time.perf_counter() - t0
    ok = record(9, "microlocalization decay", slope >= 2.0,
                f"slope {slope:.2f}, values " + ", ".join(f"{v:.2e}" for v in vals), dt, 120)
    assert ok, RESULTS[9]


def test_criterion_10_propagator_stability():
    t0 = time.perf_counter()
    eps = 0.2
    g = Grid(16, 2 * np.pi, eps)
    A = build_A_exact(SINE, g)
    phi0 = gaussian_packet(g, (np.pi, np.pi), (0.0, 0.0)).embed(0)
    P = random_hermitian(3 * g.size, np.random.default_rng(0))
    t = np.linspace(0.0, 10.0, 101)
    full = compare_propagators(A, GridOperator(A.matrix + eps**4 * P, g), phi0, t)
    half = compare_propagators(A, GridOperator(A.matrix + 0.5 * eps**4 * P, g), phi0, t)
    limit = eps**4 * 10 * (1 + 1e-6)
    ratio = half.max_diff / full.max_diff
    dt = time.perf_counter() - t0
    ok = record(10, "propagator stability", full.max_diff <= limit and abs(ratio - 0.5) <= 0.05,
                f"max diff {full.max_diff:.2e} <= {limit:.2e}, halving ratio {ratio:.4f}", dt, 60)
    assert ok, RESULTS[10]
