"""Discrete radial Laplacian in conservative (self-adjoint) form.

The Laplacian of a radial function, Lap u = (1/r^{N-1}) d/dr (r^{N-1} du/dr),
is discretized by finite volumes: L = M^{-1} K with K the symmetric
tridiagonal stiffness built from half-node fluxes and M the diagonal of
cell-averaged r^{N-1}.  Because K is symmetric and M matches the grid
quadrature weights, Crank-Nicolson steps built from (M -+ i dt/2 K) are exact
isometries of the discrete mass, and the ground-state solvers and the time
stepper share one operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .field import RadialGrid, sphere_area


@dataclass(frozen=True)
class RadialLaplacian:
    """Stiffness/mass pair for a grid, with Dirichlet condition at r_max.

    Arrays cover the n = J interior unknowns j = 0..J-1 (u_J = 0 is
    eliminated).  K acts as (K u)_j = [b_{j+1/2}(u_{j+1}-u_j)
    - b_{j-1/2}(u_j-u_{j-1})] / h^2 with b_{-1/2} = 0.
    """

    grid: RadialGrid
    mass_diag: np.ndarray       # M_j, cell-average of r^{N-1}
    off: np.ndarray             # b_{j+1/2}/h^2 for j = 0..J-1 (last couples to u_J=0)
    diag: np.ndarray            # diagonal of K

    @property
    def n(self) -> int:
        return self.grid.J


def build_laplacian(grid: RadialGrid) -> RadialLaplacian:
    J, h, N = grid.J, grid.h, grid.N
    r = grid.r
    r_half = r[:-1] + h / 2.0                      # r_{j+1/2}, j=0..J-1
    b = r_half ** (N - 1) / h**2
    lo = np.clip(r[:J] - h / 2.0, 0.0, None)
    hi = r[:J] + h / 2.0
    mass_diag = (hi**N - lo**N) / (N * h)
    diag = -b.copy()
    diag[1:] -= b[:-1]
    return RadialLaplacian(grid=grid, mass_diag=mass_diag, off=b, diag=diag)


def stiffness_matvec(op: RadialLaplacian, u: np.ndarray) -> np.ndarray:
    """K u on the interior unknowns (u_J = 0 implied)."""
    out = op.diag * u
    out[:-1] += op.off[:-1] * u[1:]
    out[1:] += op.off[:-1] * u[:-1]
    return out


def laplacian_apply(op: RadialLaplacian, u: np.ndarray) -> np.ndarray:
    return stiffness_matvec(op, u) / op.mass_diag


def _banded(op: RadialLaplacian, diag: np.ndarray, off_scale) -> np.ndarray:
    n = op.n
    ab = np.zeros((3, n), dtype=np.result_type(diag.dtype, type(off_scale)))
    ab[0, 1:] = off_scale * op.off[:-1]
    ab[1, :] = diag
    ab[2, :-1] = off_scale * op.off[:-1]
    return ab


def helmholtz_solve(op: RadialLaplacian, c: float, f: np.ndarray) -> np.ndarray:
    """Solve (c - Lap) u = f, i.e. (c M - K) u = M f, with Dirichlet tail."""
    ab = _banded(op, c * op.mass_diag - op.diag, -1.0)
    return solve_banded((1, 1), ab, op.mass_diag * f)


@dataclass
class CrankNicolson:
    """Prebuilt banded system for (M - i dt/2 K) u' = (M + i dt/2 K) u."""

    op: RadialLaplacian
    dt: float
    ab_minus: np.ndarray

    @classmethod
    def make(cls, op: RadialLaplacian, dt: float) -> "CrankNicolson":
        diag = op.mass_diag.astype(complex) - 0.5j * dt * op.diag
        return cls(op=op, dt=dt, ab_minus=_banded(op, diag, -0.5j * dt))

    def step(self, u: np.ndarray) -> np.ndarray:
        rhs = self.op.mass_diag * u + 0.5j * self.dt * stiffness_matvec(self.op, u)
        return solve_banded((1, 1), self.ab_minus, rhs)
