"""Radial Riesz convolution |x|^{-(N-gamma)} * f and the convolution potential
functional P(v) for the generalized Hartree nonlinearity.

Two evaluation paths:
  * gamma = 2 (Newton/Coulomb): exact shell-theorem reduction via two
    cumulative integrals, O(J) per application;
  * general gamma in (1, N): dense kernel matrix whose entries are angular
    quadratures of the reduced two-radius kernel, with refined quadrature near
    the diagonal where the integrand peaks.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson

from .eqspec import EquationKind, EquationSpec
from .field import RadialGrid, RadialProfile, quad, sphere_area

_KERNEL_MAGIC = b"RKRN"

# geometric panels toward theta=0 used for the near-diagonal refinement
_REFINE_PANELS = (0.0, np.pi / 64, np.pi / 8, np.pi / 2, np.pi)
_REFINE_BANDS = 5


@dataclass(frozen=True)
class RieszKernel:
    """Dense convolution matrix: (|x|^{-(N-gamma)} * f)(r_i) = (K f)_i.

    K already includes the radial quadrature weights, K[i,j] =
    k_ang(r_i, r_j) w_j / omega_N with k_ang the sphere-averaged kernel.
    """

    grid: RadialGrid
    gamma: float
    K: np.ndarray

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.K @ np.asarray(f)


def _gauss_legendre(a: float, b: float, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _check_gamma(spec: EquationSpec) -> float:
    if spec.kind != EquationKind.GHARTREE:
        raise ValueError("Riesz kernels require a GHARTREE spec")
    gamma = float(spec.gamma)
    if gamma <= 1.0:
        raise ValueError(
            f"gamma={gamma} <= 1: diagonal singularity too strong for the "
            "angular quadrature; only gamma in (1, N) is supported"
        )
    return gamma


def _angular_matrices(
    r: np.ndarray, alpha: float, N: int, order: int, with_dot_moment: bool
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Sphere-reduced kernel matrices for exponent alpha:

      A[i,j] = |S^{N-2}| int_0^pi sin^{N-2}t (r_i^2+r_j^2-2 r_i r_j cos t)^{-alpha/2} dt
      B[i,j] = same integrand times (r_i r_j cos t)     [if requested]

    The (0,0) entry is left as 0; callers treat the origin pair analytically.
    """
    n = len(r)
    area = 2.0 * np.pi ** ((N - 1) / 2)
    from math import gamma as _g

    area /= _g((N - 1) / 2)

    R2 = r[:, None] ** 2 + r[None, :] ** 2
    P = np.outer(r, r)
    A = np.zeros((n, n))
    B = np.zeros((n, n)) if with_dot_moment else None

    def accumulate(theta, wq, rows=slice(None), cols=slice(None)):
        # returns (a, b) partial sums for the selected submatrix
        R2s = R2[rows, cols]
        Ps = P[rows, cols]
        a = np.zeros_like(R2s)
        b = np.zeros_like(R2s) if with_dot_moment else None
        for t, wt in zip(theta, wq):
            ct = np.cos(t)
            dist2 = np.maximum(R2s - 2.0 * Ps * ct, 1e-30)
            val = wt * np.sin(t) ** (N - 2) * dist2 ** (-alpha / 2.0)
            a += val
            if with_dot_moment:
                b += val * (Ps * ct)
        return a, b

    theta0, w0 = _gauss_legendre(0.0, np.pi, order)
    a, b = accumulate(theta0, w0)
    A[:, :] = a
    if with_dot_moment:
        B[:, :] = b

    # refined panels on the bands nearest the diagonal
    theta_r = []
    w_r = []
    for lo, hi in zip(_REFINE_PANELS[:-1], _REFINE_PANELS[1:]):
        t, wt = _gauss_legendre(lo, hi, order)
        theta_r.append(t)
        w_r.append(wt)
    theta_r = np.concatenate(theta_r)
    w_r = np.concatenate(w_r)
    for d in range(_REFINE_BANDS + 1):
        i = np.arange(d, n)
        j = i - d
        a, b = accumulate(theta_r, w_r, rows=i, cols=j)
        A[i, j] = np.diagonal(a) if a.ndim == 2 else a
        if with_dot_moment:
            B[i, j] = np.diagonal(b) if b.ndim == 2 else b
        if d > 0:
            A[j, i] = A[i, j]
            if with_dot_moment:
                B[j, i] = B[i, j]

    A *= area
    A[0, 0] = 0.0
    if with_dot_moment:
        B *= area
        B[0, 0] = 0.0
    return A, B


def _product_kernel_n3(grid: RadialGrid, alpha: float) -> np.ndarray:
    """Exact product-integration convolution matrix for N = 3.

    The sphere-reduced kernel is elementary in three dimensions,
      k(r, s) = 2 pi ((r+s)^{2-a} - |r-s|^{2-a}) / (r s (2-a)),
    and so is its cell integral against the volume element:
      K[i,j] = int_{cell_j} k(r_i, s) s^2 ds.
    The only approximation left in K f is treating f as constant per cell, so
    the quadrature has no large constant near the diagonal kink or the steep
    small-s region.
    """
    r = grid.r
    lo = np.clip(r - grid.h / 2, 0.0, None)
    hi = np.minimum(r + grid.h / 2, grid.r_max)
    ri = r[:, None]

    def antider(s):
        # antiderivative in s of  s ((r+s)^{2-a} - |r-s|^{2-a})
        t_plus = ri + s
        g_plus = t_plus ** (4 - alpha) / (4 - alpha) - ri * t_plus ** (3 - alpha) / (3 - alpha)
        t = np.abs(s - ri)
        h_mixed = t ** (4 - alpha) / (4 - alpha) + np.sign(s - ri) * ri * t ** (
            3 - alpha
        ) / (3 - alpha)
        return g_plus - h_mixed

    with np.errstate(divide="ignore", invalid="ignore"):
        K = 2.0 * np.pi / (ri * (2 - alpha)) * (antider(hi[None, :]) - antider(lo[None, :]))
    # origin row: k(0, s) = 4 pi s^{-alpha}, cell integral 4 pi s^{3-alpha}/(3-alpha)
    K[0, :] = 4.0 * np.pi * (hi ** (3 - alpha) - lo ** (3 - alpha)) / (3 - alpha)
    return K


def _closed_kernels_n3(
    r: np.ndarray, alpha: float, with_dot_moment: bool
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Exact N = 3 counterparts of _angular_matrices (same conventions).

    For alpha > 2 the |r_i - r_j|^{2-alpha} terms diverge on the diagonal but
    cancel in the symmetrized combinations used downstream, so there they are
    dropped — the symmetric average of the two one-sided limits.
    """
    r1 = r[:, None]
    r2 = r[None, :]
    dlo = np.abs(r1 - r2)
    dhi = r1 + r2
    prod = r1 * r2
    diag = dlo == 0.0
    corner = prod == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        plo2 = dlo ** (2 - alpha)
        if alpha > 2:
            plo2[diag] = 0.0
        phi2 = dhi ** (2 - alpha)
        A = 2.0 * np.pi * (phi2 - plo2) / (prod * (2 - alpha))
        A = np.where(corner, 4.0 * np.pi * np.maximum(r1, r2) ** -alpha, A)
    A[0, 0] = 0.0
    if not with_dot_moment:
        return A, None
    with np.errstate(divide="ignore", invalid="ignore"):
        plo4 = dlo ** (4 - alpha)
        phi4 = dhi ** (4 - alpha)
        B = (np.pi / prod) * (
            (r1**2 + r2**2) * (phi2 - plo2) / (2 - alpha) - (phi4 - plo4) / (4 - alpha)
        )
    B[corner] = 0.0
    return A, B


def _reduced_kernels(
    r: np.ndarray, alpha: float, N: int, order: int, with_dot_moment: bool
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if N == 3:
        return _closed_kernels_n3(r, alpha, with_dot_moment)
    return _angular_matrices(r, alpha, N, order, with_dot_moment)


def _cache_path(cache_dir, tag: str, N: int, gamma: float, J: int, h: float, order: int):
    key = hashlib.sha256(
        f"{tag}:{N}:{gamma!r}:{J}:{h!r}:{order}".encode()
    ).hexdigest()[:24]
    return Path(cache_dir) / f"{tag}_{key}.bin"


def _save_matrix(path: Path, N: int, gamma: float, J: int, h: float, order: int, K: np.ndarray):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_KERNEL_MAGIC)
        fh.write(struct.pack("<idid i", N, gamma, J, h, order))
        K.astype(np.float64).tofile(fh)


def _load_matrix(path: Path, N: int, gamma: float, J: int, h: float, order: int):
    if not path.exists():
        return None
    with open(path, "rb") as fh:
        if fh.read(4) != _KERNEL_MAGIC:
            return None
        hdr = struct.unpack("<idid i", fh.read(struct.calcsize("<idid i")))
        if hdr != (N, gamma, J, h, order):
            return None
        K = np.fromfile(fh, dtype=np.float64, count=(J + 1) ** 2)
    return K.reshape(J + 1, J + 1)


def build_kernel(
    grid: RadialGrid,
    spec: EquationSpec,
    order: int = 64,
    cache_dir=None,
) -> RieszKernel:
    """Dense Riesz convolution matrix for the grid, optionally disk-cached."""
    gamma = _check_gamma(spec)
    N = grid.N
    if cache_dir is not None:
        p = _cache_path(cache_dir, "riesz", N, gamma, grid.J, grid.h, order)
        K = _load_matrix(p, N, gamma, grid.J, grid.h, order)
        if K is not None:
            return RieszKernel(grid=grid, gamma=gamma, K=K)

    alpha = N - gamma
    if N == 3:
        K = _product_kernel_n3(grid, alpha)
    else:
        k_ang, _ = _angular_matrices(grid.r, alpha, N, order, with_dot_moment=False)
        K = k_ang * (grid.w[None, :] / sphere_area(N))
        # origin cell: int_{|y|<h/2} |y|^{-(N-gamma)} dy = |S^{N-1}| (h/2)^gamma / gamma
        K[0, 0] = sphere_area(N) * (grid.h / 2) ** gamma / gamma

    if cache_dir is not None:
        _save_matrix(p, N, gamma, grid.J, grid.h, order, K)
    return RieszKernel(grid=grid, gamma=gamma, K=K)


def newton_potential(f: RadialProfile, grid: Optional[RadialGrid] = None) -> RadialProfile:
    """(|x|^{-(N-2)} * f)(r) by the shell theorem:

    |S^{N-1}| [ r^{-(N-2)} int_0^r f s^{N-1} ds + int_r^inf f s ds ].
    """
    grid = grid or f.grid
    vals = np.real_if_close(f.values)
    if np.iscomplexobj(vals) and np.max(np.abs(vals.imag)) > 1e-12 * np.max(
        np.abs(vals.real) + 1e-300
    ):
        raise ValueError("newton_potential expects a real profile")
    g = vals.real
    r = grid.r
    inner = cumulative_simpson(g * r ** (grid.N - 1), x=r, initial=0.0)
    outer_rev = cumulative_simpson((g * r)[::-1], dx=grid.h, initial=0.0)[::-1]
    out = np.empty_like(g, dtype=float)
    out[1:] = r[1:] ** (-(grid.N - 2)) * inner[1:] + outer_rev[1:]
    out[0] = outer_rev[0]
    return RadialProfile(grid, sphere_area(grid.N) * out)


def riesz_convolution(
    g: np.ndarray, grid: RadialGrid, spec: EquationSpec, kernel: Optional[RieszKernel] = None
) -> np.ndarray:
    """|x|^{-(N-gamma)} * g on the grid, Newton path when gamma=2."""
    if float(spec.gamma) == 2.0:
        return newton_potential(RadialProfile(grid, g), grid).values.real
    if kernel is None:
        raise ValueError("kernel required for gamma != 2")
    return kernel.apply(g)


def potential_functional_P(
    v: RadialProfile,
    spec: EquationSpec,
    kernel: Optional[RieszKernel] = None,
) -> float:
    """P(v) = int (|x|^{-(N-gamma)} * |v|^p) |v|^p dx, nonnegative."""
    _ = _check_gamma(spec)
    g = np.abs(v.values) ** float(spec.p)
    conv = riesz_convolution(g, v.grid, spec, kernel)
    return quad(v.grid, conv * g)


def morawetz_kernels(
    grid: RadialGrid,
    spec: EquationSpec,
    order: int = 64,
    cache_dir=None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Angular matrices for the nonlocal Morawetz term with exponent N-gamma+2:

      A[i,j] = sphere integral of |x-y|^{-(N-gamma+2)}
      B[i,j] = sphere integral of (x.y) |x-y|^{-(N-gamma+2)}

    at |x| = r_i, |y| = r_j.  Individually the diagonal entries are nearly
    singular; only the combination r_i^2 A - B (and its pair-symmetrized sum)
    is used, where the shared quadrature nodes make the large parts cancel
    exactly.
    """
    gamma = _check_gamma(spec)
    N = grid.N
    loaded = None
    if cache_dir is not None:
        pa = _cache_path(cache_dir, "morA", N, gamma, grid.J, grid.h, order)
        pb = _cache_path(cache_dir, "morB", N, gamma, grid.J, grid.h, order)
        A = _load_matrix(pa, N, gamma, grid.J, grid.h, order)
        B = _load_matrix(pb, N, gamma, grid.J, grid.h, order)
        if A is not None and B is not None:
            loaded = (A, B)
    if loaded is None:
        alpha = N - gamma + 2
        A, B = _reduced_kernels(grid.r, alpha, N, order, with_dot_moment=True)
        if cache_dir is not None:
            _save_matrix(pa, N, gamma, grid.J, grid.h, order, A)
            _save_matrix(pb, N, gamma, grid.J, grid.h, order, B)
    else:
        A, B = loaded
    return A, B
