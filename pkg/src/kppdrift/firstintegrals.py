"""Discrete first integrals of an advection and the large-drift speed limit.

A first integral is a grid field w with q . grad w = 0: constant along
streamlines, periodic with the cell.  The discrete stand-in is the span of
singular vectors of the centered-stencil operator D = q1*Dx + q2*Dy whose
singular values fall below kernel_tol * sigma_max(D).

The large-drift limit of the minimal front speed is the constrained
Rayleigh maximum

    v* = max { I[(q.e) w^2] / I[w^2] :  w in kernel span,
               I[zeta w^2] >= I[grad w . A grad w] },

computed by reducing all four quadratic forms to the kernel basis and
solving the single-multiplier dual: if the unconstrained top eigenvector is
feasible it wins; otherwise bisection on mu >= 0 drives the feasibility of
the top eigenvector of N + mu (Z - S) to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import (
    TORUS,
    Direction,
    PeriodicCell,
    ScalarField,
    TensorField,
    VectorField,
    diff_x,
    diff_y,
    dx_values,
    dy_values,
)
from .errors import BracketingError, InputError

# columns of D whose norm is below this (relative) are trivially in the kernel:
# the flow is numerically dead at every node their stencil touches
DEAD_COLUMN_REL = 1e-14


def _forward_diff(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    idx = np.arange(n) + 1
    idx = idx % n if periodic else np.clip(idx, 0, n - 1)
    S = sp.csr_matrix((np.ones(n), (np.arange(n), idx)), shape=(n, n))
    return ((S - sp.identity(n)) / h).tocsr()


def _compact_gradient_form(cell: PeriodicCell) -> sp.csr_matrix:
    """Forward-difference Dirichlet form used for the kernel resolution cut.

    Unlike the centered form it sees grid-frequency oscillation (energy
    4/h^2), so it separates resolvable fields from checkerboard artifacts.
    """
    w = cell.weights().ravel()
    Fx = sp.kron(_forward_diff(cell.n1, cell.h1, True), sp.identity(cell.ny))
    Fy = sp.kron(sp.identity(cell.n1), _forward_diff(cell.ny, cell.h2, cell.kind == "torus"))
    W = sp.diags(w)
    return (Fx.T @ W @ Fx + Fy.T @ W @ Fy).tocsr()


def advection_constraint_operator(q: VectorField) -> sp.csr_matrix:
    """Sparse centered-difference operator w -> q . grad w on flat node vectors.

    Constants are annihilated exactly (each difference row sums to zero).
    """
    cell = q.cell
    Dx = diff_x(cell)
    Dy = diff_y(cell)
    q1 = sp.diags(q.vx.ravel())
    q2 = sp.diags(q.vy.ravel())
    return (q1 @ Dx + q2 @ Dy).tocsr()


@dataclass(frozen=True)
class KernelBasis:
    """Orthonormal (in the quadrature inner product) basis of the discrete kernel.

    vectors            : (n_nodes, dim) columns, unit quadrature mass,
                         ordered by increasing gradient energy
    singular_values    : per-column residual ||D w||_2
    sigma_max          : largest singular value of D
    first_rejected     : smallest singular value above threshold seen, if any
    """

    cell: PeriodicCell
    vectors: np.ndarray
    singular_values: np.ndarray
    sigma_max: float
    first_rejected: float | None
    kernel_tol: float

    def __post_init__(self):
        self.vectors.setflags(write=False)
        self.singular_values.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def spectral_gap(self) -> float | None:
        """first rejected / largest retained singular value (large = clean kernel)."""
        if self.first_rejected is None:
            return None
        kept = float(self.singular_values.max()) if len(self.singular_values) else 0.0
        return float(self.first_rejected / max(kept, 1e-300))

    @property
    def fields(self):
        return [
            ScalarField(self.cell, self.vectors[:, j].reshape(self.cell.shape))
            for j in range(self.dim)
        ]


def _weighted_qr(cols: np.ndarray, w: np.ndarray, drop_tol: float = 1e-10):
    """Orthonormalize columns in the diag(w) inner product, dropping dependents.

    Column order is preserved, so whatever is placed first (the constant)
    is guaranteed to stay in the span.
    """
    sw = np.sqrt(w)
    B = cols * sw[:, None]
    Q, R = np.linalg.qr(B)
    diag = np.abs(np.diag(R))
    keep = diag > drop_tol * (diag.max() if diag.size else 1.0)
    return (Q[:, keep] / sw[:, None]), keep


def _identity_columns(cell: PeriodicCell, count: int) -> np.ndarray:
    """Constant plus node indicators: an arbitrary independent slice of the
    whole space for the vacuous-constraint case (q = 0)."""
    n = cell.n_nodes
    count = min(count, n)
    cols = np.zeros((n, count))
    cols[:, 0] = 1.0
    for j in range(1, count):
        cols[j - 1, j] = 1.0
    return cols


def _trial_modes(cell: PeriodicCell, count: int) -> np.ndarray:
    """Smooth tensor trial modes ordered by total wavenumber.

    Wavenumbers are capped at a quarter of the grid Nyquist per direction
    (matching the resolution cut); the strip uses a Neumann cosine basis in
    y.  The constant mode is excluded (it is prepended separately).
    """
    X, Y = cell.mesh()
    tx = 2.0 * np.pi * X / cell.L1
    ty = (2.0 * np.pi if cell.kind == TORUS else np.pi) * Y / cell.L2
    kx_max = max(1, cell.n1 // 4)
    ky_max = max(1, cell.ny // 4)
    pairs = sorted(
        ((kx, ky) for kx in range(kx_max + 1) for ky in range(ky_max + 1)),
        key=lambda p: (p[0] / cell.L1) ** 2 + (p[1] / cell.L2) ** 2,
    )
    cols = []
    for kx, ky in pairs:
        if kx == 0 and ky == 0:
            continue
        fx = [np.cos(kx * tx)] + ([np.sin(kx * tx)] if kx else [])
        fy = [np.cos(ky * ty)] + (
            [np.sin(ky * ty)] if ky and cell.kind == TORUS else []
        )
        for a in fx:
            for b in fy:
                cols.append((a * b).ravel())
                if len(cols) >= count:
                    return np.stack(cols, axis=1)
    if not cols:
        return np.zeros((cell.n_nodes, 0))
    return np.stack(cols, axis=1)


def kernel_basis(
    D: sp.spmatrix,
    cell: PeriodicCell,
    kernel_tol: float = 1e-10,
    max_dim: int = None,
    resolution_cut: float = None,
) -> KernelBasis:
    """Orthonormal basis of the resolvable near-kernel of D.

    Near-kernel = singular values <= kernel_tol * sigma_max(D).  Dead columns
    (nodes whose whole stencil sits where the flow vanishes) are deflated
    analytically; the rest comes from restricting D to a smooth trial space
    (tensor modes up to a quarter of the grid Nyquist) and keeping the exact
    singular directions of that restriction below threshold.  This is a
    dense, deterministic computation with true residuals, so the threshold
    can sit at rounding level.  The constant field is always in the span.

    Two selection rules keep the discrete kernel faithful to its continuum
    counterpart.  First, the default kernel_tol (1e-10) admits only fields
    conserved to rounding level: fields conserved merely to truncation order
    carry honest O(h^2)-scale drift-moment errors that would masquerade as
    positive large-drift limits.  Second, centered stencils annihilate
    grid-frequency oscillation, so directions whose forward-difference
    Dirichlet energy per unit mass exceeds `resolution_cut` (default
    1/h1^2 + 1/h2^2, a quarter of the grid-frequency energy) are dropped as
    checkerboard artifacts.  Both thresholds are configurable.
    """
    if kernel_tol <= 0:
        raise InputError(f"kernel_tol must be positive, got {kernel_tol}")
    if max_dim is None:
        max_dim = 4 * max(cell.n1, cell.n2)
    if max_dim < 1:
        raise InputError(f"max_dim must be >= 1, got {max_dim}")
    if resolution_cut is None:
        resolution_cut = 1.0 / cell.h1**2 + 1.0 / cell.h2**2
    n = cell.n_nodes
    max_dim = min(max_dim, n)
    w = cell.weights().ravel()

    col_norms = np.sqrt(np.asarray(D.multiply(D).sum(axis=0)).ravel())
    cmax = col_norms.max() if col_norms.size else 0.0

    if cmax == 0.0:
        # q = 0: every field is a first integral; return an arbitrary
        # orthonormal slice of the whole space containing the constant
        cols = _identity_columns(cell, max_dim)
        V, _ = _weighted_qr(cols, w)
        V = V[:, :max_dim]
        sigmas = np.zeros(V.shape[1])
        return KernelBasis(cell, V, sigmas, 0.0, None, kernel_tol)

    K = (D.T @ D).tocsc()
    # constants sit exactly in ker(K), so the start vector must not be flat
    rng = np.random.default_rng(0x5EED)
    v0 = rng.standard_normal(n)
    sigma_max = math.sqrt(
        float(spla.eigsh(K, k=1, which="LA", v0=v0, return_eigenvectors=False)[0])
    )
    thresh = kernel_tol * sigma_max

    dead = np.flatnonzero(col_norms <= DEAD_COLUMN_REL * cmax)

    first_rejected = None
    smooth = np.zeros((n, 0))
    budget = max_dim + 1 - len(dead)
    if budget > 0:
        T = min(max(2 * budget, 256), 1200, n - 1)
        B = _trial_modes(cell, T)
        if B.shape[1]:
            Bo, _ = _weighted_qr(B, w)
            # thin SVD of D restricted to the trial space: singular values
            # carry absolute accuracy ~eps_mach * sigma_max, so rounding-level
            # kernel membership is decidable (the Gram route would square the
            # conditioning and bury the zero tier)
            _, svals, Vh = np.linalg.svd(D @ Bo, full_matrices=False)
            retained = svals <= thresh
            rej = svals[~retained]
            if rej.size:
                first_rejected = float(rej.min())
            smooth = Bo @ Vh[retained].T

    cols = [np.ones((n, 1)), smooth]
    for node in dead:
        e = np.zeros((n, 1))
        e[node, 0] = 1.0
        cols.append(e)
    V, _ = _weighted_qr(np.concatenate(cols, axis=1), w)

    # resolution cut: diagonalize the forward-difference Dirichlet form on
    # the span and drop grid-frequency directions the grid cannot represent
    Sc = _compact_gradient_form(cell)
    H = V.T @ (Sc @ V)
    theta, rot = np.linalg.eigh((H + H.T) / 2.0)
    V = V @ rot[:, theta <= resolution_cut]
    V = V[:, :max_dim]
    if V.shape[1] == 0:
        V = np.full((n, 1), 1.0 / math.sqrt(cell.area))

    Dv = D @ V
    sigmas = np.sqrt(np.einsum("ij,ij->j", Dv, Dv))
    return KernelBasis(cell, V, sigmas, sigma_max, first_rejected, kernel_tol)


# ---------------------------------------------------------------------------
# quadratic forms
# ---------------------------------------------------------------------------

def drift_moment(q: VectorField, w: ScalarField) -> np.ndarray:
    """Quadrature vector (I[q1 w^2], I[q2 w^2])."""
    if q.cell != w.cell:
        raise InputError("drift moment needs q and w on the same cell")
    wt = q.cell.weights() * w.values**2
    return np.array([float(np.sum(wt * q.vx)), float(np.sum(wt * q.vy))])


def gradient_energy(A: TensorField, w_values: np.ndarray) -> float:
    """I[grad w . A grad w] with the package's centered stencils."""
    cell = A.cell
    gx = dx_values(cell, w_values)
    gy = dy_values(cell, w_values)
    dens = A.a11 * gx**2 + 2.0 * A.a12 * gx * gy + A.a22 * gy**2
    return float(np.sum(cell.weights() * dens))


def feasibility_check(A: TensorField, zeta: ScalarField, w: ScalarField) -> float:
    """g(w) = I[zeta w^2] - I[grad w . A grad w]; w is feasible iff g(w) >= 0."""
    if not (A.cell == zeta.cell == w.cell):
        raise InputError("feasibility check needs all fields on one cell")
    mass = float(np.sum(w.cell.weights() * zeta.values * w.values**2))
    return mass - gradient_energy(A, w.values)


def stiffness_matrix(A: TensorField) -> sp.csr_matrix:
    """Sparse SPSD form of the gradient energy (same centered stencils)."""
    cell = A.cell
    Dx = diff_x(cell)
    Dy = diff_y(cell)
    w = cell.weights().ravel()
    w11 = sp.diags(w * A.a11.ravel())
    w12 = sp.diags(w * A.a12.ravel())
    w22 = sp.diags(w * A.a22.ravel())
    S = Dx.T @ w11 @ Dx + Dx.T @ w12 @ Dy + Dy.T @ w12 @ Dx + Dy.T @ w22 @ Dy
    return S.tocsr()


@dataclass(frozen=True)
class LimitSpeedResult:
    """Large-drift limit value with its maximizing first integral."""

    value: float
    maximizer: ScalarField
    constraint_active: bool
    multiplier: float
    feasibility_residual: float
    optimality_residual: float
    kernel_dim: int


def _top_eigvec(H: np.ndarray, G: np.ndarray, tie_tol: float):
    """Top eigenpair of symmetric H; ties resolved toward larger g = v'Gv."""
    vals, vecs = np.linalg.eigh(H)
    top = vals[-1]
    sel = vals >= top - tie_tol * max(1.0, abs(top))
    if sel.sum() > 1:
        U = vecs[:, sel]
        sub = U.T @ G @ U
        svals, svecs = np.linalg.eigh((sub + sub.T) / 2.0)
        v = U @ svecs[:, -1]
    else:
        v = vecs[:, -1]
    v = v / np.linalg.norm(v)
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return top, v


def limit_speed(
    A: TensorField,
    q: VectorField,
    zeta: ScalarField,
    e: Direction,
    kernel: KernelBasis,
    feas_tol: float = 1e-9,
) -> LimitSpeedResult:
    """Constrained maximum of I[(q.e) w^2] / I[w^2] over the kernel span.

    Exact-zero shortcut: when q.e vanishes identically, or every reduced
    numerator entry is at quadrature-noise level, the limit is reported as
    exactly 0 with the constant maximizer (solver noise must not masquerade
    as a positive limit).
    """
    cell = kernel.cell
    if not (A.cell == q.cell == zeta.cell == cell):
        raise InputError("limit_speed needs all fields on the kernel's cell")
    if kernel.dim < 1:
        raise InputError("kernel basis is empty")

    W = kernel.vectors
    m = kernel.dim
    wq = cell.weights().ravel()
    qe = (q.vx * e.e_tilde[0] + q.vy * e.e_tilde[1]).ravel()
    qe_inf = float(np.abs(qe).max())

    const = ScalarField(cell, np.full(cell.shape, 1.0 / math.sqrt(cell.area)))

    Nh = W.T @ (W * (wq * qe)[:, None])
    Nh = (Nh + Nh.T) / 2.0
    if qe_inf == 0.0 or np.abs(Nh).max() <= 1e-14 * max(1.0, qe_inf):
        return LimitSpeedResult(0.0, const, False, 0.0, 0.0, 0.0, m)

    Zh = W.T @ (W * (wq * zeta.values.ravel())[:, None])
    Zh = (Zh + Zh.T) / 2.0
    S = stiffness_matrix(A)
    SW = S @ W
    Sh = W.T @ SW
    Sh = (Sh + Sh.T) / 2.0
    Gh = Zh - Sh

    gscale = float(np.abs(Gh).sum(axis=1).max())
    gscale = gscale if gscale > 0 else 1.0
    tie_tol = 1e-10

    def g_of(v):
        return float(v @ Gh @ v)

    nu0, v0 = _top_eigvec(Nh, Gh, tie_tol)
    if g_of(v0) >= -feas_tol * gscale:
        w_star = W @ v0
        opt = float(np.linalg.norm(Nh @ v0 - nu0 * v0))
        return LimitSpeedResult(
            float(v0 @ Nh @ v0),
            ScalarField(cell, w_star.reshape(cell.shape)),
            False,
            0.0,
            g_of(v0),
            opt,
            m,
        )

    gmax = float(np.linalg.eigvalsh(Gh)[-1])
    if gmax <= 0:
        raise BracketingError(
            "feasible set has empty interior in the kernel span (top of Z - S <= 0)"
        )

    nscale = float(np.abs(Nh).max())
    mu_lo, v_lo = 0.0, v0
    mu = max(nscale, 1e-30) / gmax
    trace = []
    v_hi = None
    for _ in range(200):
        _, v = _top_eigvec(Nh + mu * Gh, Gh, tie_tol)
        trace.append((mu, g_of(v)))
        if g_of(v) >= 0:
            mu_hi, v_hi = mu, v
            break
        mu_lo, v_lo = mu, v
        mu *= 2.0
    if v_hi is None:
        raise BracketingError(
            "could not bracket the feasibility root in mu", trace=trace
        )

    best = None
    for _ in range(200):
        mid = 0.5 * (mu_lo + mu_hi)
        _, v = _top_eigvec(Nh + mid * Gh, Gh, tie_tol)
        gv = g_of(v)
        trace.append((mid, gv))
        if abs(gv) <= feas_tol * gscale:
            best = (mid, v)
            break
        if gv >= 0:
            mu_hi, v_hi = mid, v
        else:
            mu_lo, v_lo = mid, v
        if mu_hi - mu_lo <= 1e-14 * max(mu_hi, 1.0):
            break

    if best is None:
        # top eigenvalue crossed at mu*: find the feasibility root inside the
        # 2-plane spanned by the two limiting eigenvectors
        b1 = v_hi / np.linalg.norm(v_hi)
        b2 = v_lo - (v_lo @ b1) * b1
        nb2 = np.linalg.norm(b2)
        if nb2 < 1e-12:
            best = (mu_hi, v_hi)
        else:
            b2 = b2 / nb2
            G11, G22 = g_of(b1), g_of(b2)
            G12 = float(b1 @ Gh @ b2)
            roots = []
            if abs(G22) > 0:
                disc = G12**2 - G11 * G22
                if disc >= 0:
                    for sgn in (+1.0, -1.0):
                        t = (-G12 + sgn * math.sqrt(disc)) / G22
                        v = b1 + t * b2
                        roots.append(v / np.linalg.norm(v))
            if not roots:
                best = (mu_hi, v_hi)
            else:
                vals = [float(v @ Nh @ v) for v in roots]
                best = (0.5 * (mu_lo + mu_hi), roots[int(np.argmax(vals))])

    mu_star, v = best
    value = float(v @ Nh @ v)
    H = Nh + mu_star * Gh
    theta = float(v @ H @ v)
    opt = float(np.linalg.norm(H @ v - theta * v))
    w_star = W @ v
    if w_star[np.argmax(np.abs(w_star))] < 0:
        w_star = -w_star
    return LimitSpeedResult(
        value,
        ScalarField(cell, w_star.reshape(cell.shape)),
        True,
        float(mu_star),
        g_of(v),
        opt,
        m,
    )
