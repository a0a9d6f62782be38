"""Stream function reconstruction for admissible 2D flows.

Orientation convention (package-wide): q = (dphi/dy, -dphi/dx).

Reconstruction solves the compact-stencil Poisson problem

    Lap phi = D_y q_x - D_x q_y

by FFT diagonalization in x and, on the strip, tridiagonal-with-Neumann
solves in y.  This is the least-squares fit of the staggered (forward
difference) rotated gradient to edge-averaged velocity data; it avoids the
O(h) drift of path integration and is globally O(h^2).  The additive gauge
is fixed by phi(0, 0) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    STRIP,
    TORUS,
    PeriodicCell,
    ScalarField,
    VectorField,
    check_admissibility,
    dx_values,
    dy_values,
    grad_perp,
)
from .errors import AdmissibilityError, InputError


@dataclass(frozen=True)
class StreamFunction:
    """A reconstructed stream function with its gauge and fit residual."""

    phi: ScalarField
    gauge: float
    residual: float


@dataclass(frozen=True)
class HodgeReport:
    """Consistency report for a (velocity, stream function) pair."""

    rel_residual: float
    boundary_oscillation: float | None
    tol: float
    passed: bool


def velocity_from_stream(phi: ScalarField) -> VectorField:
    """Velocity generated by a stream function, q = (D_y phi, -D_x phi)."""
    vx, vy = grad_perp(phi.values, phi.cell)
    return VectorField(phi.cell, vx, vy)


def _poisson_torus(cell: PeriodicCell, src: np.ndarray) -> np.ndarray:
    k1 = np.arange(cell.n1)
    k2 = np.arange(cell.ny)
    sig_x = -4.0 * np.sin(np.pi * k1 / cell.n1) ** 2 / cell.h1**2
    sig_y = -4.0 * np.sin(np.pi * k2 / cell.ny) ** 2 / cell.h2**2
    denom = sig_x[:, None] + sig_y[None, :]
    denom[0, 0] = 1.0
    phi_hat = np.fft.fft2(src) / denom
    phi_hat[0, 0] = 0.0
    return np.real(np.fft.ifft2(phi_hat))


def _poisson_strip(cell: PeriodicCell, src: np.ndarray, q: VectorField) -> np.ndarray:
    ny, h2 = cell.ny, cell.h2
    # compact 3-point d2/dy2 with 2nd-order Neumann rows (ghost elimination);
    # the Neumann data dphi/dy = q_x moves to the right-hand side
    T = np.zeros((ny, ny))
    for j in range(1, ny - 1):
        T[j, j - 1] = T[j, j + 1] = 1.0 / h2**2
        T[j, j] = -2.0 / h2**2
    T[0, 0], T[0, 1] = -2.0 / h2**2, 2.0 / h2**2
    T[-1, -1], T[-1, -2] = -2.0 / h2**2, 2.0 / h2**2

    rhs = np.fft.fft(src, axis=0).astype(complex)
    g0 = np.fft.fft(q.vx[:, 0])
    g1 = np.fft.fft(q.vx[:, -1])
    rhs[:, 0] += 2.0 * g0 / h2
    rhs[:, -1] += -2.0 * g1 / h2

    sig_x = -4.0 * np.sin(np.pi * np.arange(cell.n1) / cell.n1) ** 2 / cell.h1**2
    phi_hat = np.empty((cell.n1, ny), dtype=complex)
    eye = np.eye(ny)
    for k in range(cell.n1):
        A = T + sig_x[k] * eye
        if k == 0:
            # pure Neumann mode is singular up to constants; minimum-norm fit
            phi_hat[k] = np.linalg.lstsq(A, rhs[k], rcond=None)[0]
        else:
            phi_hat[k] = np.linalg.solve(A, rhs[k])
    return np.real(np.fft.ifft(phi_hat, axis=0))


def stream_from_velocity(q: VectorField, tol: float = 1e-8) -> StreamFunction:
    """Reconstruct phi with q = (D_y phi, -D_x phi) from an admissible flow.

    Raises AdmissibilityError when q fails the divergence/mean/wall checks;
    the fit residual max|q - grad_perp(phi)| is reported on the result.
    """
    cell = q.cell
    report = check_admissibility(q, cell, tol=tol)
    if not report.passed:
        raise AdmissibilityError(
            "velocity field rejected for stream reconstruction:\n" + str(report)
        )

    src = dy_values(cell, q.vx) - dx_values(cell, q.vy)
    if cell.kind == TORUS:
        phi = _poisson_torus(cell, src)
    else:
        phi = _poisson_strip(cell, src, q)

    gauge = float(phi[0, 0])
    phi = phi - gauge
    rx, ry = grad_perp(phi, cell)
    residual = float(max(np.abs(rx - q.vx).max(), np.abs(ry - q.vy).max()))
    return StreamFunction(phi=ScalarField(cell, phi), gauge=gauge, residual=residual)


def verify_hodge(q: VectorField, phi: StreamFunction | ScalarField, tol: float) -> HodgeReport:
    """Check q against grad_perp(phi): relative sup residual and, on the strip,
    the oscillation of phi along each wall row."""
    if tol <= 0:
        raise InputError(f"tolerance must be positive, got {tol}")
    sf = phi.phi if isinstance(phi, StreamFunction) else phi
    if sf.cell != q.cell:
        raise InputError("velocity and stream function use different grids")
    cell = q.cell

    rx, ry = grad_perp(sf.values, cell)
    resid = float(max(np.abs(rx - q.vx).max(), np.abs(ry - q.vy).max()))
    qinf = q.max_norm()
    rel = resid / qinf if qinf > 0 else resid

    osc = None
    if cell.kind == STRIP:
        osc = float(
            max(np.ptp(sf.values[:, 0]), np.ptp(sf.values[:, -1]))
        )
    ok = rel <= tol and (osc is None or osc <= tol)
    return HodgeReport(rel_residual=rel, boundary_oscillation=osc, tol=tol, passed=ok)
