"""Weyl quantization on the periodic grid and the operator-level checks.

The torus ``[0, L)^2`` carries ``n x n`` samples ``x_j = j L / n`` and the
frequencies ``k = (2 pi / L) m`` with ``m`` in ``{-n/2, ..., n/2 - 1}``;
the semiclassical frequency is ``xi = eps k``.  The discrete Weyl kernel is

    (Op(a) u)(x_i) = n^-2 sum_j sum_k exp(i k.(x_i - x_j)) a(mid_ij, eps k) u(x_j)

where ``mid_ij`` is the midpoint of the shortest periodic segment from
``x_j`` to ``x_i``.  It lives on the doubled grid; for antipodal pairs (no
shortest segment) the two candidate midpoints are averaged, which keeps
``Op(a)`` Hermitian for real ``a``.  The construction is exact for functions
of ``x`` alone (diagonal matrices) and of ``xi`` alone (Fourier multipliers).

Vector fields are stored component-major: entry ``c * n^2 + i1 * n + i2``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import MarginError, NotHermitian, ProfileBoxMismatch
from .normal_form import ModeId, first_order_diagonal, tau_R_array
from .spectral import frame_symbols
from .symbols import Const, PhasePoint, Symbol, evaluate, sqrt, XI1, XI2, ref


class OpKind(enum.Enum):
    MULTIPLICATION = "multiplication"
    FOURIER_MULTIPLIER = "fourier_multiplier"
    WEYL_GENERIC = "weyl_generic"
    ASSEMBLED = "assembled"


@dataclass(frozen=True)
class Grid:
    n: int = 16
    L: float = 2.0 * np.pi
    eps: float = 0.1

    def __post_init__(self):
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise ValueError(f"n = {self.n} must be a power of two >= 8")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        object.__setattr__(self, "n", n)

    @property
    def h(self):
        return self.L / self.n

    @property
    def size(self):
        return self.n * self.n

    @property
    def coords(self):
        """1-D sample positions."""
        return np.arange(self.n) * self.h

    @property
    def mesh(self):
        """(x1, x2) arrays of shape (n, n), index [i1, i2]."""
        return np.meshgrid(self.coords, self.coords, indexing="ij")

    @property
    def wavenumbers(self):
        """1-D wavenumbers ``k`` in FFT order."""
        return 2.0 * np.pi / self.L * np.fft.fftfreq(self.n, d=1.0 / self.n)

    def with_eps(self, eps):
        return Grid(self.n, self.L, eps)


@dataclass(eq=False)
class GridFunction:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).ravel()
        if self.values.size % self.grid.size or self.values.size // self.grid.size not in (1, 3):
            raise ValueError("values must hold n^2 or 3 n^2 samples")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite entries")

    @property
    def ncomp(self):
        return self.values.size // self.grid.size

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)) * self.grid.h)

    def normalized(self):
        return GridFunction(self.values / self.norm(), self.grid)

    def inner(self, other):
        return complex(np.vdot(self.values, other.values) * self.grid.h**2)

    def component(self, c):
        m = self.grid.size
        return GridFunction(self.values[c * m:(c + 1) * m], self.grid)

    def embed(self, c, ncomp=3):
        """Place a scalar function into component ``c`` of a vector field."""
        out = np.zeros(ncomp * self.grid.size, complex)
        out[c * self.grid.size:(c + 1) * self.grid.size] = self.values
        return GridFunction(out, self.grid)


@dataclass(eq=False)
class GridOperator:
    matrix: np.ndarray
    grid: Grid
    kind: OpKind = OpKind.WEYL_GENERIC

    def __matmul__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.matrix @ other.values, self.grid)
        if isinstance(other, GridOperator):
            return GridOperator(self.matrix @ other.matrix, self.grid, OpKind.ASSEMBLED)
        return NotImplemented

    def __add__(self, other):
        return GridOperator(self.matrix + other.matrix, self.grid, OpKind.ASSEMBLED)

    def __sub__(self, other):
        return GridOperator(self.matrix - other.matrix, self.grid, OpKind.ASSEMBLED)

    def __mul__(self, c):
        return GridOperator(c * self.matrix, self.grid, self.kind)

    __rmul__ = __mul__

    @property
    def H(self):
        return GridOperator(self.matrix.conj().T, self.grid, self.kind)

    def norm(self):
        """Operator norm (largest singular value)."""
        return op_norm(self.matrix)

    def hermitian_residual(self):
        return op_norm(self.matrix - self.matrix.conj().T)


def op_norm(M):
    return float(np.linalg.norm(M, 2))


# --------------------------------------------------------------------------
# Quantization


def _symbol_values(a, x1, x2, xi1, xi2):
    if isinstance(a, Symbol):
        return evaluate(a, x1, x2, xi1, xi2)
    if callable(a):
        return np.asarray(a(x1, x2, xi1, xi2))
    return np.full(np.broadcast_shapes(*(np.shape(v) for v in (x1, x2, xi1, xi2))), complex(a))


def _midpoint_tables(n):
    """Per-axis (delta, midA, midB) index tables over (i, j).

    ``delta = (i - j) mod n``; the midpoints are doubled-grid indices, equal
    except for antipodal pairs where they are the two candidates.
    """
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    d = (i - j + n // 2) % n - n // 2
    mid_a = (2 * j + d) % (2 * n)
    mid_b = np.where(d == -(n // 2), (mid_a + n) % (2 * n), mid_a)
    return (i - j) % n, mid_a, mid_b


def _is_constant(a):
    return isinstance(a, Const) or (not isinstance(a, Symbol) and not callable(a))


def weyl_quantize_scalar(a, grid):
    """Dense n^2 x n^2 matrix of the discrete Weyl quantization of ``a``.

    ``a`` is a symbol tree, a vectorized callable ``a(x1, x2, xi1, xi2)`` or a
    constant.
    """
    n = grid.n
    if _is_constant(a):
        c = complex(a.value) if isinstance(a, Const) else complex(a)
        return GridOperator(c * np.eye(n * n, dtype=complex), grid, OpKind.MULTIPLICATION)
    mid = np.arange(2 * n) * (grid.h / 2.0)
    xi = grid.eps * grid.wavenumbers
    vals = _symbol_values(
        a, mid[:, None, None, None], mid[None, :, None, None], xi[None, None, :, None], xi[None, None, None, :]
    )
    vals = np.broadcast_to(vals, (2 * n, 2 * n, n, n))
    # F[M1, M2, d1, d2] = n^-2 sum_m exp(2 pi i m.d / n) a(M, eps k_m)
    F = np.fft.ifft2(vals, axes=(2, 3))
    delta, mid_a, mid_b = _midpoint_tables(n)
    d1 = delta[:, None, :, None]
    d2 = delta[None, :, None, :]
    K = 0.0
    for m1 in (mid_a, mid_b):
        for m2 in (mid_a, mid_b):
            K = K + F[m1[:, None, :, None], m2[None, :, None, :], d1, d2]
    K = 0.25 * K  # index order (i1, i2, j1, j2)
    return GridOperator(K.reshape(n * n, n * n), grid, OpKind.WEYL_GENERIC)


def weyl_quantize_matrix(entries, grid):
    """Blockwise quantization of a 3x3 nested list of symbols."""
    m = grid.size
    k = len(entries)
    out = np.zeros((k * m, k * m), complex)
    cache = {}
    for r in range(k):
        for c in range(k):
            a = entries[r][c]
            if isinstance(a, Const) and a.value == 0:
                continue
            key = id(a)
            if key not in cache:
                cache[key] = (a, weyl_quantize_scalar(a, grid).matrix)
            out[r * m:(r + 1) * m, c * m:(c + 1) * m] = cache[key][1]
    return GridOperator(out, grid, OpKind.WEYL_GENERIC)


def multiplication(values, grid):
    return GridOperator(np.diag(np.asarray(values, complex).ravel()), grid, OpKind.MULTIPLICATION)


def _dft_matrix(grid):
    n = grid.n
    j = np.arange(n)
    m = np.fft.fftfreq(n, d=1.0 / n)
    F1 = np.exp(-2j * np.pi * np.outer(m, j) / n) / np.sqrt(n)
    return np.kron(F1, F1)


def fourier_multiplier(values, grid, F=None):
    """Operator acting by ``values[m1, m2]`` (FFT order) on each Fourier mode."""
    F = _dft_matrix(grid) if F is None else F
    v = np.asarray(values, complex).ravel()
    return GridOperator(F.conj().T @ (v[:, None] * F), grid, OpKind.FOURIER_MULTIPLIER)


def check_profile_box(profile, grid, n_check=257):
    """Raise ProfileBoxMismatch unless the profile lives on the torus ``[0, L)^2``.

    ``b`` must be L-periodic in x2 (checked with its derivatives on sample
    points) and the flow support must sit inside the box.
    """
    L = grid.L
    s = np.linspace(0.0, L, n_check)
    for name in ("b", "db", "d2b"):
        f = getattr(profile, name)
        if not np.allclose(f(s + L), f(s), rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(f(s)))))):
            raise ProfileBoxMismatch(
                f"b is not {L:.6g}-periodic ({profile.coriolis.kind}); the grid needs a box-periodic profile"
            )
    if not profile.u_is_zero:
        (a1, b1), (a2, b2) = profile.u_support
        if a1 < 0.0 or a2 < 0.0 or b1 > L or b2 > L:
            raise ProfileBoxMismatch(f"flow support {profile.u_support} leaves the box [0, {L:.6g}]^2")


def build_A_exact(profile, grid, F=None):
    """Assemble the 3x3 block operator A(x, eps D, eps) from exact primitives.

    Off-diagonal derivatives are the Fourier multipliers ``eps k_j``, ``b`` is
    a multiplication, the transport term ``u.xi`` is the symmetrized product
    ``(M_u eps D + eps D M_u) / 2`` on the diagonal, and the eps^2 Jacobian
    entries enter through their Hermitian part.
    """
    check_profile_box(profile, grid)
    n, m, eps = grid.n, grid.size, grid.eps
    F = _dft_matrix(grid) if F is None else F
    k = grid.wavenumbers
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    D1 = fourier_multiplier(eps * K1, grid, F).matrix
    D2 = fourier_multiplier(eps * K2, grid, F).matrix
    X1, X2 = grid.mesh
    B = np.diag(profile.b(X2).ravel().astype(complex))

    A = np.zeros((3 * m, 3 * m), complex)

    def put(r, c, M):
        A[r * m:(r + 1) * m, c * m:(c + 1) * m] += M

    put(0, 1, D1)
    put(1, 0, D1)
    put(0, 2, D2)
    put(2, 0, D2)
    put(1, 2, -1j * B)
    put(2, 1, 1j * B)
    if not profile.u_is_zero:
        u1, u2 = profile.u(X1, X2)
        U1, U2 = np.diag(u1.ravel()), np.diag(u2.ravel())
        transport = 0.5 * (U1 @ D1 + D1 @ U1 + U2 @ D2 + D2 @ U2)
        for c in range(3):
            put(c, c, eps * transport)
        (j11, j12), (j21, j22) = profile.du(X1, X2)
        # i * [[d1u1, d2u1], [d1u2, d2u2]] on components (1, 2); keep its Hermitian part
        Z = [[j11.ravel(), j12.ravel()], [j21.ravel(), j22.ravel()]]
        for r in range(2):
            for c in range(2):
                herm = 0.5j * (Z[r][c] - Z[c][r])
                if np.any(herm != 0):
                    put(1 + r, 1 + c, eps * eps * np.diag(herm))
    return GridOperator(A, grid, OpKind.ASSEMBLED)


def quantized_frame(profile, grid):
    """U0 = Op(U) blockwise with the smooth eigenvector gauge; columns (R, +, -)."""
    check_profile_box(profile, grid)
    return weyl_quantize_matrix(frame_symbols(profile, gauge="smooth"), grid)


def quantized_D0(profile, grid):
    L = sqrt(XI1 * XI1 + XI2 * XI2 + ref("b", profile) ** 2)
    zero = Const(0.0)
    return weyl_quantize_matrix([[zero, zero, zero], [zero, L, zero], [zero, zero, -L]], grid)


# --------------------------------------------------------------------------
# Residual scaling


def _block_offdiag(M, m, k=3):
    out = M.copy()
    for c in range(k):
        out[c * m:(c + 1) * m, c * m:(c + 1) * m] = 0.0
    return out


def loglog_slope(eps, r):
    """Least-squares slope of log r against log eps."""
    eps, r = np.asarray(eps, float), np.asarray(r, float)
    if np.any(r <= 0):
        return float("nan")
    return float(np.polyfit(np.log(eps), np.log(r), 1)[0])


def band_embedding(coarse, fine, ncomp=1):
    """Isometry from coarse-grid samples to their trigonometric interpolant on ``fine``.

    Columns are orthonormal in the plain Euclidean inner product, so operator
    norms of ``E* M E`` are norms of ``M`` restricted to band-limited functions.
    """
    if fine.L != coarse.L or fine.n % coarse.n:
        raise ValueError("fine grid must refine the coarse grid on the same box")
    nc, nf = coarse.n, fine.n
    m = np.fft.fftfreq(nc, d=1.0 / nc).astype(int)
    idx = ((m[:, None] % nf) * nf + (m[None, :] % nf)).ravel()
    E = _dft_matrix(fine).conj().T[:, idx] @ _dft_matrix(coarse)
    return np.kron(np.eye(ncomp), E) if ncomp > 1 else E


@dataclass
class ResidualPoint:
    eps: float
    r_diag: float
    r_unit: float
    r2: float
    I1_norm: float


def operator_residuals(profile, grid, oversample=2):
    """First-order residuals at one eps, measured on the band of ``grid``.

    The operators and their products are formed on a grid refined by
    ``oversample`` and then restricted to functions band-limited to ``grid``.
    Forming products inside the band alone drops the out-of-band intermediate
    modes that the x-dependence of the symbols couples to, which leaves an
    eps-independent error on the edge modes.

    ``r2`` uses ``V0 = -U0 I1 / 2``; since ``U0* U0 = I + eps I1`` it equals
    ``max |g^3 / 4 - 3 g^2 / 4|`` over the eigenvalues ``g`` of ``U0* U0 - I``.
    """
    fine = Grid(grid.n * int(oversample), grid.L, grid.eps)
    A = build_A_exact(profile, fine).matrix
    U = quantized_frame(profile, fine).matrix
    E = band_embedding(grid, fine, ncomp=3)
    UE = U @ E
    # Op(D0) is block diagonal, so it drops out of the off-diagonal blocks
    r_diag = op_norm(_block_offdiag(UE.conj().T @ (A @ UE), grid.size))
    G = UE.conj().T @ UE - np.eye(E.shape[1])
    g = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    r_unit = float(np.max(np.abs(g)))
    r2 = float(np.max(np.abs(0.25 * g**3 - 0.75 * g**2)))
    return ResidualPoint(grid.eps, float(r_diag), r_unit, r2, r_unit / grid.eps)


@dataclass
class ResidualReport:
    eps: list
    r_diag: list
    r_unit: list
    slope_diag: float
    slope_unit: float
    points: list = field(repr=False, default_factory=list)


@dataclass
class CorrectedReport:
    eps: list
    r2: list
    r_unit: list
    slope: float


def residual_family(profile, eps_list=(0.4, 0.2, 0.1), n=16, L=2.0 * np.pi, oversample=2):
    if len(eps_list) < 3:
        raise ValueError("need at least three eps values for a slope fit")
    return [operator_residuals(profile, Grid(n, L, e), oversample) for e in eps_list]


def residual_diag(profile, eps_list=(0.4, 0.2, 0.1), n=16, L=2.0 * np.pi, oversample=2, points=None):
    """Off-diagonal block residual of U0* A U0 - Op(D0) and the unitarity defect."""
    pts = points if points is not None else residual_family(profile, eps_list, n, L, oversample)
    eps = [p.eps for p in pts]
    rd, ru = [p.r_diag for p in pts], [p.r_unit for p in pts]
    return ResidualReport(eps, rd, ru, loglog_slope(eps, rd), loglog_slope(eps, ru), pts)


def unitarity_corrected_residual(profile, eps_list=(0.4, 0.2, 0.1), n=16, L=2.0 * np.pi, oversample=2,
                                 points=None):
    """``|(U0 + eps V0)*(U0 + eps V0) - I|`` with ``V0 = -U0 I1 / 2``."""
    pts = points if points is not None else residual_family(profile, eps_list, n, L, oversample)
    eps = [p.eps for p in pts]
    r2 = [p.r2 for p in pts]
    return CorrectedReport(eps, r2, [p.r_unit for p in pts], loglog_slope(eps, r2))


# --------------------------------------------------------------------------
# Wave packets and microlocalization


def gaussian_packet(grid, x0, xi0, normalize=True):
    """Coherent state ``(pi eps)^-1/2 exp(i xi0.x / eps) exp(-|x - x0|^2 / (2 eps))``.

    The Gaussian is periodized over neighbouring cells; ``xi0 / eps`` is rounded
    to the nearest admissible wavenumber so the packet is periodic.
    """
    eps = grid.eps
    x0 = np.asarray(x0, float)
    xi0 = np.asarray(xi0, float)
    margin = 3.0 * np.sqrt(eps)
    if np.any(x0 < margin) or np.any(x0 > grid.L - margin):
        raise MarginError(f"x0 = {x0.tolist()} is closer than 3 sqrt(eps) = {margin:.3g} to the box edge")
    X1, X2 = grid.mesh
    k0 = effective_xi0(grid, xi0) / eps
    g = np.zeros(X1.shape)
    for s1 in (-1, 0, 1):
        for s2 in (-1, 0, 1):
            r2 = (X1 - x0[0] + s1 * grid.L) ** 2 + (X2 - x0[1] + s2 * grid.L) ** 2
            g = g + np.exp(-r2 / (2.0 * eps))
    u = (np.pi * eps) ** -0.5 * np.exp(1j * (k0[0] * X1 + k0[1] * X2)) * g
    out = GridFunction(u.ravel(), grid)
    return out.normalized() if normalize else out


def effective_xi0(grid, xi0):
    """Frequency actually carried by :func:`gaussian_packet` (``eps`` times an admissible wavenumber)."""
    dk = 2.0 * np.pi / grid.L
    return grid.eps * dk * np.round(np.asarray(xi0, float) / grid.eps / dk)


def phase_bump(center, radius):
    """Compactly supported phase-space cutoff ``exp(1 - 1/(1 - s^2))``, s = |z - center| / radius."""
    c = np.asarray(center, float)
    R = float(radius)

    def chi(x1, x2, xi1, xi2):
        s2 = ((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2 + (xi1 - c[2]) ** 2 + (xi2 - c[3]) ** 2) / (R * R)
        inside = s2 < 1.0
        safe = np.where(inside, s2, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)

    return chi


def microloc_test(u, chi0, grid=None):
    """``|Op(chi0) u|`` in the discrete L^2 norm."""
    grid = u.grid if grid is None else grid
    return (weyl_quantize_scalar(chi0, grid) @ u).norm()


def packet_mass_near(u, xi0, radius):
    """Fraction of the squared norm carried by modes with ``|eps k - xi0| <= radius``."""
    grid = u.grid
    n = grid.n
    c = np.fft.fft2(u.values.reshape(n, n))
    k = grid.wavenumbers
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    near = np.hypot(grid.eps * K1 - xi0[0], grid.eps * K2 - xi0[1]) <= radius
    w = np.abs(c) ** 2
    return float(w[near].sum() / w.sum())


@dataclass
class PacketCheck:
    eps: float
    expectation: complex
    symbol_value: float
    error: float


def rossby_packet_check(profile, grid, x0, xi0, oversample=2):
    """Packet expectation of the (R, R) block of (U0* A U0 - Op(D0)) / eps.

    For the Rossby mode the diagonal of the first-order symbol reduces to
    ``tau_R``, so the expectation should approach ``tau_R(x0, xi0)`` as eps -> 0.
    Products are formed on a grid refined by ``oversample``, as in
    :func:`operator_residuals`.
    """
    fine = Grid(grid.n * int(oversample), grid.L, grid.eps)
    A = build_A_exact(profile, fine).matrix
    U = quantized_frame(profile, fine).matrix
    u = gaussian_packet(grid, x0, xi0).values
    v = np.zeros(3 * fine.size, complex)
    v[:fine.size] = band_embedding(grid, fine) @ u
    w = U @ v
    # the Rossby eigenvalue of A0 is zero, so Op(D0) has a vanishing (R, R) block
    expv = complex(np.vdot(w, A @ w) / np.vdot(v, v)) / grid.eps
    k = effective_xi0(grid, xi0)
    tau = float(tau_R_array(profile, x0[0], x0[1], k[0], k[1]))
    return PacketCheck(grid.eps, expv, tau, abs(expv - tau))


def mode_packet_check(profile, grid, x0, xi0, mode, oversample=2):
    """Packet expectation of one diagonal block of the renormalized first-order operator.

    The operator is ``(U0* A U0 - Op(D0) - (Op(D0) G + G Op(D0)) / 2) / eps``
    with ``G = U0* U0 - I``, i.e. the conjugation by ``U0 (I + G)^(-1/2)`` to
    first order.  Its ``(n, n)`` block in a packet at ``(x0, xi0)`` should
    approach :func:`first_order_diagonal` in the smooth gauge used by
    :func:`quantized_frame`.
    """
    mode = ModeId.parse(mode)
    fine = Grid(grid.n * int(oversample), grid.L, grid.eps)
    m = fine.size
    A = build_A_exact(profile, fine).matrix
    U = quantized_frame(profile, fine).matrix
    D = quantized_D0(profile, fine).matrix
    c = mode.index
    v = np.zeros(3 * m, complex)
    v[c * m:(c + 1) * m] = band_embedding(grid, fine) @ gaussian_packet(grid, x0, xi0).values
    Uv = U @ v
    GDv = U.conj().T @ (U @ (D @ v)) - D @ v
    Mv = U.conj().T @ (A @ Uv) - D @ v - 0.5 * (D @ (U.conj().T @ Uv - v) + GDv)
    expv = complex(np.vdot(v, Mv) / np.vdot(v, v)) / grid.eps
    k = effective_xi0(grid, xi0)
    ref_value = first_order_diagonal(profile, PhasePoint(x0[0], x0[1], k[0], k[1]), mode, gauge="smooth")
    return PacketCheck(grid.eps, expv, ref_value, abs(expv - ref_value))


# --------------------------------------------------------------------------
# Propagator comparison


@dataclass
class PropagatorComparison:
    times: np.ndarray
    diffs: np.ndarray
    max_diff: float
    bound: np.ndarray
    bound_check: bool
    norm_drift: float


def _hermitian_or_raise(M, name, tol):
    res = op_norm(M - M.conj().T)
    if res > tol * max(1.0, op_norm(M)):
        raise NotHermitian(f"{name} is not Hermitian: |M - M*| = {res:.3e}")


def compare_propagators(A, A_tilde, phi0, t_grid, time_scale=1.0, herm_tol=1e-8):
    """Evolve ``i d/dt phi + s A phi = 0`` for A and A_tilde and compare.

    Both flows are ``exp(i t s A) phi0`` computed from a Hermitian
    eigendecomposition.  The check is the integrated energy inequality
    ``|phi(t) - phi~(t)| <= t s sup_{r <= t} |(A - A~) phi~(r)| + 1e-9``, with the
    sup taken over the sampled times.
    """
    Am = A.matrix if isinstance(A, GridOperator) else np.asarray(A)
    Bm = A_tilde.matrix if isinstance(A_tilde, GridOperator) else np.asarray(A_tilde)
    _hermitian_or_raise(Am, "A", herm_tol)
    _hermitian_or_raise(Bm, "A_tilde", herm_tol)
    v0 = phi0.values if isinstance(phi0, GridFunction) else np.asarray(phi0, complex)
    h = phi0.grid.h if isinstance(phi0, GridFunction) else 1.0
    t = np.asarray(t_grid, float)
    s = float(time_scale)

    def evolve(M):
        w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
        c = V.conj().T @ v0
        return (V @ (np.exp(1j * s * np.outer(w, t)) * c[:, None])).T  # (len(t), dim)

    phi, phit = evolve(Am), evolve(Bm)
    diffs = np.linalg.norm(phi - phit, axis=1) * h
    forcing = np.linalg.norm(((Am - Bm) @ phit.T).T, axis=1) * h
    bound = np.abs(t) * s * np.maximum.accumulate(forcing) + 1e-9
    n0 = np.linalg.norm(v0) * h
    drift = float(np.max(np.abs(np.linalg.norm(phi, axis=1) * h - n0)))
    return PropagatorComparison(t, diffs, float(diffs.max()), bound, bool(np.all(diffs <= bound)), drift)


def random_hermitian(dim, rng, norm=1.0):
    """Random Hermitian matrix with operator norm exactly ``norm``."""
    Z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    P = 0.5 * (Z + Z.conj().T)
    return P * (norm / op_norm(P))
