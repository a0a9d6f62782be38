"""Periodicity cell, grid fields, derivatives, quadrature, and the flow catalog.

Grid convention: node (i, j) sits at (i*h1, j*h2) with h1 = L1/n1, h2 = L2/n2.
On a torus both directions wrap and the duplicate wrap nodes are omitted
(arrays have shape (n1, n2)).  On a strip only x wraps; y runs over the closed
interval [0, L2] including both boundary rows (arrays have shape (n1, n2+1)).

All field types are immutable after construction; every operation here is a
pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import InputError

TORUS = "torus"
STRIP = "strip"

# exp(-1/s) underflow guard for the flattened channel flow stream function
_FLAT_GUARD = 1e-300


@dataclass(frozen=True)
class PeriodicCell:
    """Geometry of the periodicity cell: a flat torus or a periodic strip.

    kind   : "torus" (both directions periodic, d = 2) or "strip"
             (x periodic, y in [0, L2] with rigid walls, d = 1)
    L1, L2 : cell extents, > 0
    n1, n2 : grid intervals per direction, >= 8
    """

    kind: str
    L1: float
    L2: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.kind not in (TORUS, STRIP):
            raise InputError(f"cell kind must be 'torus' or 'strip', got {self.kind!r}")
        if not (self.L1 > 0 and self.L2 > 0):
            raise InputError(f"cell extents must be positive, got L1={self.L1}, L2={self.L2}")
        if int(self.n1) != self.n1 or int(self.n2) != self.n2:
            raise InputError("grid counts n1, n2 must be integers")
        if self.n1 < 8 or self.n2 < 8:
            raise InputError(f"grid counts must be >= 8, got n1={self.n1}, n2={self.n2}")
        object.__setattr__(self, "L1", float(self.L1))
        object.__setattr__(self, "L2", float(self.L2))
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))

    @property
    def d(self) -> int:
        """Number of periodic directions (2 on the torus, 1 on the strip)."""
        return 2 if self.kind == TORUS else 1

    @property
    def h1(self) -> float:
        return self.L1 / self.n1

    @property
    def h2(self) -> float:
        return self.L2 / self.n2

    @property
    def ny(self) -> int:
        """Number of node rows in y (torus omits the wrap row, strip keeps both walls)."""
        return self.n2 if self.kind == TORUS else self.n2 + 1

    @property
    def shape(self) -> tuple:
        return (self.n1, self.ny)

    @property
    def n_nodes(self) -> int:
        return self.n1 * self.ny

    @property
    def area(self) -> float:
        return self.L1 * self.L2

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n1) * self.h1

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.h2

    def mesh(self):
        """Node coordinate arrays X, Y of shape (n1, ny)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def weights(self) -> np.ndarray:
        """Quadrature weights per node (trapezoid; exact for constants)."""
        w = np.full(self.shape, self.h1 * self.h2)
        if self.kind == STRIP:
            w[:, 0] *= 0.5
            w[:, -1] *= 0.5
        return w


def _as_grid(cell: PeriodicCell, values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != cell.shape:
        raise InputError(
            f"{name} shape {arr.shape} does not match cell grid {cell.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """One real value per grid node."""

    cell: PeriodicCell
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_grid(self.cell, self.values, "scalar field"))

    @classmethod
    def constant(cls, cell: PeriodicCell, value: float) -> "ScalarField":
        return cls(cell, np.full(cell.shape, float(value)))

    @classmethod
    def from_function(cls, cell: PeriodicCell, fn) -> "ScalarField":
        X, Y = cell.mesh()
        return cls(cell, fn(X, Y))


@dataclass(frozen=True)
class VectorField:
    """A pair of real values per grid node (vx, vy)."""

    cell: PeriodicCell
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vx", _as_grid(self.cell, self.vx, "vector field vx"))
        object.__setattr__(self, "vy", _as_grid(self.cell, self.vy, "vector field vy"))

    @classmethod
    def from_functions(cls, cell: PeriodicCell, fx, fy) -> "VectorField":
        X, Y = cell.mesh()
        return cls(cell, fx(X, Y), fy(X, Y))

    def max_norm(self) -> float:
        """Max Euclidean magnitude over nodes."""
        return float(np.sqrt(self.vx**2 + self.vy**2).max())

    def scaled(self, c: float) -> "VectorField":
        return VectorField(self.cell, c * self.vx, c * self.vy)


@dataclass(frozen=True)
class TensorField:
    """Symmetric 2x2 diffusion tensor per node, uniformly elliptic.

    Construction rejects any node where the symmetric matrix has an
    eigenvalue <= 0.  alpha1/alpha2 hold the global eigenvalue bounds.
    """

    cell: PeriodicCell
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    alpha1: float = field(init=False)
    alpha2: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "a11", _as_grid(self.cell, self.a11, "tensor a11"))
        object.__setattr__(self, "a12", _as_grid(self.cell, self.a12, "tensor a12"))
        object.__setattr__(self, "a22", _as_grid(self.cell, self.a22, "tensor a22"))
        half_tr = 0.5 * (self.a11 + self.a22)
        disc = np.sqrt((0.5 * (self.a11 - self.a22)) ** 2 + self.a12**2)
        lam_min = half_tr - disc
        lam_max = half_tr + disc
        if np.any(lam_min <= 0):
            i, j = np.unravel_index(int(np.argmin(lam_min)), lam_min.shape)
            raise InputError(
                f"diffusion tensor not positive definite at node ({i}, {j}): "
                f"min eigenvalue {lam_min[i, j]:.3e}"
            )
        object.__setattr__(self, "alpha1", float(lam_min.min()))
        object.__setattr__(self, "alpha2", float(lam_max.max()))

    @classmethod
    def constant(cls, cell: PeriodicCell, a11: float, a12: float = 0.0, a22: float = None) -> "TensorField":
        if a22 is None:
            a22 = a11
        ones = np.ones(cell.shape)
        return cls(cell, a11 * ones, a12 * ones, a22 * ones)

    @classmethod
    def isotropic(cls, cell: PeriodicCell, values) -> "TensorField":
        vals = np.asarray(values, dtype=float)
        return cls(cell, vals, np.zeros(cell.shape), vals.copy())


@dataclass(frozen=True)
class ReactionSpec:
    """Growth rate at the unstable state plus the monotonicity threshold.

    zeta must be strictly positive everywhere; rho in (0, 1) is carried as
    metadata only (the speed formulas depend on the reaction through zeta).
    """

    zeta: ScalarField
    rho: float = 0.5

    def __post_init__(self):
        if np.any(self.zeta.values <= 0):
            raise InputError("zeta must be strictly positive everywhere")
        if not (0.0 < self.rho < 1.0):
            raise InputError(f"rho must lie in (0, 1), got {self.rho}")


@dataclass(frozen=True)
class Direction:
    """Unit propagation direction.

    On the torus any unit 2-vector; on the strip only +-e1 is admissible,
    encoded as (+-1, 0).
    """

    e: np.ndarray
    kind: str = TORUS

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float).reshape(2)
        if abs(float(np.hypot(e[0], e[1])) - 1.0) > 1e-12:
            raise InputError(f"direction must be a unit vector, |e| = {np.hypot(e[0], e[1])!r}")
        if self.kind == STRIP and e[1] != 0.0:
            raise InputError("strip directions must be (+-1, 0)")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "e", e)

    @classmethod
    def of(cls, ex: float, ey: float = 0.0, kind: str = TORUS) -> "Direction":
        """Build from a nearly unit vector, normalizing small rounding error."""
        n = math.hypot(ex, ey)
        if not (0.999999 < n < 1.000001):
            raise InputError(f"direction ({ex}, {ey}) is not within 1e-6 of unit length")
        return cls(np.array([ex / n, ey / n]), kind=kind)

    @property
    def e_tilde(self) -> np.ndarray:
        """The direction embedded in the plane (identical in 2D)."""
        return self.e


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def dx_values(cell: PeriodicCell, a: np.ndarray) -> np.ndarray:
    """Centered x-derivative with periodic wrap, O(h^2)."""
    return (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * cell.h1)


def dy_values(cell: PeriodicCell, a: np.ndarray) -> np.ndarray:
    """Centered y-derivative: periodic on the torus, one-sided 2nd order at strip walls."""
    h = cell.h2
    if cell.kind == TORUS:
        return (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * h)
    out = np.empty_like(a)
    out[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / (2.0 * h)
    out[:, 0] = (-3.0 * a[:, 0] + 4.0 * a[:, 1] - a[:, 2]) / (2.0 * h)
    out[:, -1] = (3.0 * a[:, -1] - 4.0 * a[:, -2] + a[:, -3]) / (2.0 * h)
    return out


def _d1_periodic(n: int, h: float) -> sp.csr_matrix:
    main = np.zeros(n)
    upper = np.full(n - 1, 1.0)
    lower = np.full(n - 1, -1.0)
    D = sp.diags([main, upper, lower], [0, 1, -1], format="lil")
    D[0, n - 1] = -1.0
    D[n - 1, 0] = 1.0
    return (D / (2.0 * h)).tocsr()


def _d1_strip(n: int, h: float) -> sp.csr_matrix:
    D = sp.diags(
        [np.zeros(n), np.full(n - 1, 1.0), np.full(n - 1, -1.0)], [0, 1, -1], format="lil"
    )
    D[0, 0], D[0, 1], D[0, 2] = -3.0, 4.0, -1.0
    D[n - 1, n - 1], D[n - 1, n - 2], D[n - 1, n - 3] = 3.0, -4.0, 1.0
    return (D / (2.0 * h)).tocsr()


@lru_cache(maxsize=64)
def diff_x(cell: PeriodicCell) -> sp.csr_matrix:
    """Sparse centered d/dx on flattened (i*ny + j) node vectors."""
    return sp.kron(_d1_periodic(cell.n1, cell.h1), sp.identity(cell.ny), format="csr")


@lru_cache(maxsize=64)
def diff_y(cell: PeriodicCell) -> sp.csr_matrix:
    """Sparse centered d/dy on flattened node vectors (one-sided at strip walls)."""
    if cell.kind == TORUS:
        d1 = _d1_periodic(cell.ny, cell.h2)
    else:
        d1 = _d1_strip(cell.ny, cell.h2)
    return sp.kron(sp.identity(cell.n1), d1, format="csr")


def grad_perp(phi: np.ndarray, cell: PeriodicCell):
    """Rotated gradient of a grid scalar: (d phi/dy, -d phi/dx).

    The orientation convention is fixed package-wide: a stream function phi
    generates the velocity q = (dphi/dy, -dphi/dx).
    """
    return dy_values(cell, phi), -dx_values(cell, phi)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def cell_integral(f: ScalarField) -> float:
    """Trapezoid quadrature of f over the cell; exact for constants."""
    return float(np.sum(f.cell.weights() * f.values))


def integrate_values(cell: PeriodicCell, values: np.ndarray) -> float:
    """Quadrature of a raw grid array (same rule as cell_integral)."""
    return float(np.sum(cell.weights() * values))


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the incompressibility / mean-zero / wall-tangency checks."""

    max_divergence: float
    mean_vx: float
    mean_vy: float
    max_boundary_normal: float | None
    field_inf: float
    tol: float
    passed: bool
    failures: tuple

    def __str__(self):
        status = "admissible" if self.passed else "NOT admissible"
        lines = [
            f"{status} (tol = {self.tol:g} relative)",
            f"  max |div q|        = {self.max_divergence:.3e}",
            f"  |mean q_x| / |C|   = {self.mean_vx:.3e}",
            f"  |mean q_y| / |C|   = {self.mean_vy:.3e}",
        ]
        if self.max_boundary_normal is not None:
            lines.append(f"  max |q . nu| walls = {self.max_boundary_normal:.3e}")
        for f in self.failures:
            lines.append(f"  violated: {f}")
        return "\n".join(lines)


def check_admissibility(q: VectorField, cell: PeriodicCell, tol: float = 1e-8) -> AdmissibilityReport:
    """Check that q is a valid advection: divergence-free, mean-zero, tangent to walls.

    All three metrics must come in below tol * max|q| (absolute tol for the
    zero field).  Divergence uses the package's centered stencils, so flows
    synthesized from a stream function with the same stencils pass exactly.
    """
    if tol <= 0:
        raise InputError(f"tolerance must be positive, got {tol}")
    if q.cell != cell:
        raise InputError("velocity field and cell use different grids")

    qinf = q.max_norm()
    scale = qinf if qinf > 0 else 1.0

    div = dx_values(cell, q.vx) + dy_values(cell, q.vy)
    max_div = float(np.abs(div).max())

    mean_vx = abs(integrate_values(cell, q.vx)) / cell.area
    mean_vy = abs(integrate_values(cell, q.vy)) / cell.area

    max_bn = None
    if cell.kind == STRIP:
        max_bn = float(max(np.abs(q.vy[:, 0]).max(), np.abs(q.vy[:, -1]).max()))

    limit = tol * scale
    failures = []
    if max_div > limit:
        failures.append(f"divergence-free: max |div q| = {max_div:.3e} > {limit:.3e}")
    if mean_vx > limit:
        failures.append(f"mean-zero (x): |integral of q_x|/|C| = {mean_vx:.3e} > {limit:.3e}")
    if mean_vy > limit:
        failures.append(f"mean-zero (y): |integral of q_y|/|C| = {mean_vy:.3e} > {limit:.3e}")
    if max_bn is not None and max_bn > limit:
        failures.append(f"wall tangency: max |q . nu| = {max_bn:.3e} > {limit:.3e}")

    return AdmissibilityReport(
        max_divergence=max_div,
        mean_vx=mean_vx,
        mean_vy=mean_vy,
        max_boundary_normal=max_bn,
        field_inf=qinf,
        tol=tol,
        passed=not failures,
        failures=tuple(failures),
    )


# ---------------------------------------------------------------------------
# flow catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowSpec:
    """Named velocity field from the catalog.

    name         : zero | constant | shear | cellular | diagonal | remark | fourier
    amplitude    : overall scale (all flows)
    mode         : integer wavenumber (shear, diagonal)
    mode_x/mode_y: integer wavenumbers (cellular)
    ux, uy       : components of the constant flow (fails the mean-zero
                   admissibility check unless zero; kept for exercising the
                   validation path)
    coefficients : fourier only; tuples (kx, ky, cos_coeff, sin_coeff) of a
                   stream function, so the resulting flow is automatically
                   divergence-free.
    """

    name: str
    amplitude: float = 1.0
    mode: int = 1
    mode_x: int = 1
    mode_y: int = 1
    ux: float = 1.0
    uy: float = 0.0
    coefficients: tuple = ()

    def __post_init__(self):
        if self.name not in _CATALOG:
            raise InputError(
                f"unknown flow {self.name!r}; catalog: {sorted(_CATALOG)}"
            )
        if not np.isfinite(self.amplitude):
            raise InputError("flow amplitude must be finite")
        for nm in ("mode", "mode_x", "mode_y"):
            v = getattr(self, nm)
            if int(v) != v or v < 1:
                raise InputError(f"flow {nm} must be a positive integer, got {v}")
        if not (np.isfinite(self.ux) and np.isfinite(self.uy)):
            raise InputError("constant flow components must be finite")
        coeffs = []
        for c in self.coefficients:
            c = tuple(c)
            if len(c) != 4:
                raise InputError("fourier coefficients must be (kx, ky, cos, sin) tuples")
            kx, ky = c[0], c[1]
            if int(kx) != kx or int(ky) != ky:
                raise InputError("fourier wavenumbers must be integers")
            coeffs.append((int(kx), int(ky), float(c[2]), float(c[3])))
        object.__setattr__(self, "coefficients", tuple(coeffs))
        if self.name == "fourier" and not coeffs:
            raise InputError("fourier flow needs at least one coefficient tuple")


def _flat_channel_stream(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Stream function of the flattened channel flow on unit-period coordinates.

    exp(-1/sin^2(pi v)) * sin(2 pi (u + ln(v - floor(v)))) away from integer v,
    0 on the (C-infinity flat) integer rows.  Guarded so 1/sin^2 never
    overflows.
    """
    s2 = np.sin(np.pi * v) ** 2
    out = np.zeros(np.broadcast(u, v).shape)
    sel = s2 >= _FLAT_GUARD
    if np.any(sel):
        us = np.broadcast_to(u, out.shape)[sel]
        vs = np.broadcast_to(v, out.shape)[sel]
        frac = vs - np.floor(vs)
        out[sel] = np.exp(-1.0 / s2[sel]) * np.sin(2.0 * np.pi * (us + np.log(frac)))
    return out


def _stream_zero(spec, cell, X, Y):
    return np.zeros(cell.shape)


def _stream_constant(spec, cell, X, Y):
    # stream function of a uniform drift (ux, uy): ux*y - uy*x, not periodic
    return spec.amplitude * (spec.ux * Y - spec.uy * X)


def _stream_shear(spec, cell, X, Y):
    k = 2.0 * np.pi * spec.mode / cell.L2
    return -spec.amplitude / k * np.cos(k * Y)


def _stream_cellular(spec, cell, X, Y):
    kx = 2.0 * np.pi * spec.mode_x / cell.L1
    ky = 2.0 * np.pi * spec.mode_y / cell.L2
    return spec.amplitude * np.sin(kx * X) * np.sin(ky * Y)


def _stream_diagonal(spec, cell, X, Y):
    return spec.amplitude * np.sin(2.0 * np.pi * spec.mode * (X / cell.L1 - Y / cell.L2))


def _stream_remark(spec, cell, X, Y):
    return spec.amplitude * _flat_channel_stream(X / cell.L1, Y / cell.L2)


def _stream_fourier(spec, cell, X, Y):
    phi = np.zeros(cell.shape)
    for kx, ky, c, s in spec.coefficients:
        theta = 2.0 * np.pi * (kx * X / cell.L1 + ky * Y / cell.L2)
        phi += c * np.cos(theta) + s * np.sin(theta)
    return spec.amplitude * phi


_STREAMS = {
    "zero": _stream_zero,
    "constant": _stream_constant,
    "shear": _stream_shear,
    "cellular": _stream_cellular,
    "diagonal": _stream_diagonal,
    "remark": _stream_remark,
    "fourier": _stream_fourier,
}

# Flows with simple closed forms are sampled analytically; "remark" and
# "fourier" are differentiated with the package stencils so they are exactly
# divergence-free on the grid.
_ANALYTIC = {"zero", "constant", "shear", "cellular", "diagonal"}
_CATALOG = frozenset(_STREAMS)


def flow_stream_function(spec: FlowSpec, cell: PeriodicCell) -> ScalarField:
    """Sample the stream function associated with a catalog flow."""
    X, Y = cell.mesh()
    return ScalarField(cell, _STREAMS[spec.name](spec, cell, X, Y))


def sample_flow(spec: FlowSpec, cell: PeriodicCell) -> VectorField:
    """Sample a catalog flow on the cell grid.

    zero/shear/cellular/diagonal use their analytic component formulas;
    remark/fourier apply the discrete rotated gradient to the sampled stream
    function (same code path as velocity reconstruction from a stream
    function).
    """
    X, Y = cell.mesh()
    a = spec.amplitude
    if spec.name == "zero":
        z = np.zeros(cell.shape)
        return VectorField(cell, z, z.copy())
    if spec.name == "constant":
        return VectorField(
            cell,
            np.full(cell.shape, a * spec.ux),
            np.full(cell.shape, a * spec.uy),
        )
    if spec.name == "shear":
        k = 2.0 * np.pi * spec.mode / cell.L2
        return VectorField(cell, a * np.sin(k * Y), np.zeros(cell.shape))
    if spec.name == "cellular":
        kx = 2.0 * np.pi * spec.mode_x / cell.L1
        ky = 2.0 * np.pi * spec.mode_y / cell.L2
        vx = a * ky * np.sin(kx * X) * np.cos(ky * Y)
        vy = -a * kx * np.cos(kx * X) * np.sin(ky * Y)
        return VectorField(cell, vx, vy)
    if spec.name == "diagonal":
        k = 2.0 * np.pi * spec.mode
        c = np.cos(k * (X / cell.L1 - Y / cell.L2))
        return VectorField(cell, -a * k / cell.L2 * c, -a * k / cell.L1 * c)
    phi = flow_stream_function(spec, cell)
    vx, vy = grad_perp(phi.values, cell)
    return VectorField(cell, vx, vy)
