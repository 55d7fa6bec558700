"""Morawetz weight construction, Morawetz functionals and identities,
evacuation detectors, and the scattering-threshold classifier.

The Morawetz functional is the weighted momentum  M(t) = 2 Im int ubar u_r a',
whose time derivative (evaluated independently as a spatial quadrature each
sample) is the coercive quantity driving the decay estimates.  The weight a is
r^2 near the origin and linear (slope R) far out, with a closed-form C^2
transition.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .eqspec import EquationKind, EquationSpec, criticality
from .field import RadialGrid, RadialProfile, quad, radial_derivative, sphere_area
from .groundstate import GroundState
from .hartree import riesz_convolution


# ---------------------------------------------------------------------------
# Morawetz weight


@dataclass(frozen=True)
class MorawetzWeight:
    """Radial weight a(r) with tabulated derivatives on the grid.

    a = r^2 on r <= r1 and a' = R (a linear up to an additive constant) on
    r >= r2, where [r1, r2] = [R/4, 3R/4] is the transition band.  On the
    band a'' is a raised cosine dropping from 2 to 0; its integral matches the
    slope R at r2 exactly, so a, a', a'' (and a''') are globally continuous.

    A strictly wider inner region (a = r^2 up to R/2 with a'' >= 0 and a''
    continuous) is impossible: convexity plus the matched slopes at R/2 and R
    would force a' == R on the band, contradicting a''(R/2) = 2.  Likewise the
    outer branch carries the additive constant forced by continuity; every
    quantity entering the identities (a', a'', Delta a, Delta^2 a) still takes
    its exact r^2 / linear branch values outside the band.
    """

    grid: RadialGrid
    R: float
    a: np.ndarray
    da: np.ndarray
    d2a: np.ndarray
    lap: np.ndarray
    lap2: np.ndarray

    @property
    def r1(self) -> float:
        return self.R / 4.0

    @property
    def r2(self) -> float:
        return 3.0 * self.R / 4.0


def build_weight(grid: RadialGrid, R: float) -> MorawetzWeight:
    """Tabulate the weight and its derivatives; validates its invariants."""
    if not (0 < R <= grid.r_max):
        raise ValueError(f"weight radius R={R} outside grid extent {grid.r_max}")
    N = grid.N
    r = grid.r
    r1 = R / 4.0
    w = R / 4.0  # half-width of the transition band [r1, r1 + 2w]
    theta = np.clip((r - r1) * np.pi / (2.0 * w), 0.0, np.pi)
    inner = r <= r1
    outer = r >= r1 + 2.0 * w
    mid = ~inner & ~outer

    d2a = np.where(inner, 2.0, np.where(outer, 0.0, 1.0 + np.cos(theta)))
    dr = r - r1
    da_mid = 2.0 * r1 + dr + (2.0 * w / np.pi) * np.sin(theta)
    da = np.where(inner, 2.0 * r, np.where(outer, R, da_mid))
    a_mid = r1**2 + 2.0 * r1 * dr + dr**2 / 2.0 + (2.0 * w / np.pi) ** 2 * (
        1.0 - np.cos(theta)
    )
    a_r2 = r1**2 + 2.0 * r1 * w + 2.0 * w**2 / 2.0 + 2.0 * (2.0 * w / np.pi) ** 2
    a = np.where(inner, r**2, np.where(outer, a_r2 + R * (r - r1 - 2.0 * w), a_mid))

    d3a = np.where(mid, -(np.pi / (2.0 * w)) * np.sin(theta), 0.0)
    d4a = np.where(mid, -((np.pi / (2.0 * w)) ** 2) * np.cos(theta), 0.0)

    # radial Laplacian and bi-Laplacian of a radial function:
    #   Lap a  = a'' + (N-1) a'/r
    #   Lap^2 a = a'''' + 2(N-1) a'''/r + (N-1)(N-3)(a''/r^2 - a'/r^3)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = d2a + (N - 1) * da / r
        lap2 = (
            d4a
            + 2.0 * (N - 1) * d3a / r
            + (N - 1) * (N - 3) * (d2a / r**2 - da / r**3)
        )
    lap[0] = 2.0 * N  # a = r^2 near the origin
    lap2[0] = 0.0

    if np.any(d2a < 0):
        raise AssertionError("transition a'' went negative")
    if np.any(da[1:] <= 0):
        raise AssertionError("a' must be positive away from the origin")
    return MorawetzWeight(grid=grid, R=R, a=a, da=da, d2a=d2a, lap=lap, lap2=lap2)


def weight_junction_residuals(weight: MorawetzWeight) -> Dict[str, float]:
    """Mismatch of (a, a', a'') branch formulas evaluated at both junctions."""
    R = weight.R
    r1, r2 = weight.r1, weight.r2
    w = R / 4.0

    def mid_vals(r):
        theta = (r - r1) * np.pi / (2.0 * w)
        dr = r - r1
        a = r1**2 + 2 * r1 * dr + dr**2 / 2 + (2 * w / np.pi) ** 2 * (1 - np.cos(theta))
        da = 2 * r1 + dr + (2 * w / np.pi) * np.sin(theta)
        d2a = 1 + np.cos(theta)
        return a, da, d2a

    a_i, da_i, d2a_i = r1**2, 2 * r1, 2.0
    a_m1, da_m1, d2a_m1 = mid_vals(r1)
    a_m2, da_m2, d2a_m2 = mid_vals(r2)
    a_o = a_m2  # outer branch anchored at r2 by construction
    return {
        "a_inner": abs(a_i - a_m1),
        "da_inner": abs(da_i - da_m1),
        "d2a_inner": abs(d2a_i - d2a_m1),
        "a_outer": abs(a_o - a_m2),
        "da_outer": abs(weight.R - da_m2),
        "d2a_outer": abs(0.0 - d2a_m2),
    }


# ---------------------------------------------------------------------------
# Morawetz functional and identity right-hand sides


def morawetz_functional(u: RadialProfile, weight: MorawetzWeight) -> float:
    """M = 2 Im int ubar (d_r u) a'  over the volume weights."""
    du = radial_derivative(u.grid, u.values)
    integrand = 2.0 * np.imag(np.conj(u.values) * du) * weight.da
    return quad(u.grid, integrand)


def morawetz_rhs_nls(
    u: RadialProfile, weight: MorawetzWeight, spec: EquationSpec
) -> float:
    """dM/dt for the power equation:
    int -(2(p-1)/(p+1)) |u|^{p+1} Lap a + |u|^2 (-Lap^2 a) + 4 a'' |d_r u|^2."""
    if spec.kind != EquationKind.NLS:
        raise ValueError("morawetz_rhs_nls needs an NLS spec")
    p = float(spec.p)
    du = radial_derivative(u.grid, u.values)
    au = np.abs(u.values)
    integrand = (
        -(2.0 * (p - 1.0) / (p + 1.0)) * au ** (p + 1) * weight.lap
        - au**2 * weight.lap2
        + 4.0 * weight.d2a * np.abs(du) ** 2
    )
    return quad(u.grid, integrand)


def nonlocal_double_term(
    f: np.ndarray,
    weight_da_over_r: np.ndarray,
    grid: RadialGrid,
    kernels: Tuple[np.ndarray, np.ndarray],
) -> float:
    """Sphere-reduced double integral
    int int (a'(|x|)/|x|) x.(x-y) f(x) f(y) |x-y|^{-(N-gamma+2)} dx dy
    evaluated as (1/omega_N) sum_i w_i f_i (a'_i/r_i) (r_i^2 (A wf)_i - (B wf)_i).
    The divergent parts of the diagonal entries of A and B cancel in exactly
    this combination (their symmetrized regularization is built into the
    kernels)."""
    A, B = kernels
    wf = grid.w * f
    tA = A @ wf
    tB = B @ wf
    total = np.dot(grid.w * f * weight_da_over_r, grid.r**2 * tA - tB)
    return float(total / sphere_area(grid.N))


def _da_over_r(weight: MorawetzWeight) -> np.ndarray:
    out = np.empty_like(weight.da)
    r = weight.grid.r
    out[1:] = weight.da[1:] / r[1:]
    out[0] = 2.0  # a = r^2 near the origin
    return out


def morawetz_rhs_gh(
    v: RadialProfile,
    weight: MorawetzWeight,
    spec: EquationSpec,
    kernels: Tuple[np.ndarray, np.ndarray],
    conv_kernel=None,
) -> float:
    """dM/dt for the convolution equation: the local terms with the
    (1/2 - 1/p) potential coefficient plus the nonlocal double integral with
    exponent N - gamma + 2."""
    if spec.kind != EquationKind.GHARTREE:
        raise ValueError("morawetz_rhs_gh needs a GHARTREE spec")
    if kernels is None:
        raise ValueError("morawetz kernels required for the nonlocal term")
    N, p, gamma = spec.N, float(spec.p), float(spec.gamma)
    grid = v.grid
    du = radial_derivative(grid, v.values)
    av = np.abs(v.values)
    f = av**p
    conv = riesz_convolution(f, grid, spec, conv_kernel)
    local = (
        -4.0 * (0.5 - 1.0 / p) * conv * f * weight.lap
        - av**2 * weight.lap2
        + 4.0 * weight.d2a * np.abs(du) ** 2
    )
    double = nonlocal_double_term(f, _da_over_r(weight), grid, kernels)
    return quad(grid, local) - (4.0 * (N - gamma) / p) * double


def morawetz_bound(u: RadialProfile, weight: MorawetzWeight) -> float:
    """Cauchy-Schwarz bound 2 max(a') ||u|| ||grad u|| on |M|."""
    from .field import grad_norm_sq, mass

    return 2.0 * float(np.max(weight.da)) * math.sqrt(mass(u) * grad_norm_sq(u))


# ---------------------------------------------------------------------------
# diagnostics series


@dataclass
class DiagnosticsSeries:
    """Per-sample records of the conserved and monitored quantities."""

    spec_config: dict
    radii: List[float]
    t: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    grad_sq: List[float] = field(default_factory=list)
    potential: List[float] = field(default_factory=list)
    morawetz: Dict[float, List[float]] = field(default_factory=dict)
    morawetz_rhs: Dict[float, List[float]] = field(default_factory=dict)
    locmass: Dict[float, List[float]] = field(default_factory=dict)
    locpot: Dict[float, List[float]] = field(default_factory=dict)
    decay_product: List[float] = field(default_factory=list)
    boundary_flag_time: Optional[float] = None
    profiles: List[Tuple[float, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        for R in self.radii:
            for d in (self.morawetz, self.morawetz_rhs, self.locmass, self.locpot):
                d.setdefault(R, [])

    def append_scalars(self, t, mass, energy, grad_sq, potential):
        if self.t and t <= self.t[-1]:
            raise ValueError("sample times must be strictly increasing")
        self.t.append(t)
        self.mass.append(mass)
        self.energy.append(energy)
        self.grad_sq.append(grad_sq)
        self.potential.append(potential)

    def to_csv(self, path, header_lines: Sequence[str] = ()) -> None:
        cols = ["t", "mass", "energy", "grad_sq", "potential"]
        for R in self.radii:
            cols += [f"M_R{R:g}", f"rhs_R{R:g}", f"locmass_R{R:g}", f"locpot_R{R:g}"]
        if self.decay_product:
            cols.append("decay_product")
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            wr = csv.writer(fh)
            wr.writerow(cols)
            for k in range(len(self.t)):
                row = [
                    self.t[k],
                    self.mass[k],
                    self.energy[k],
                    self.grad_sq[k],
                    self.potential[k],
                ]
                for R in self.radii:
                    row += [
                        self.morawetz[R][k],
                        self.morawetz_rhs[R][k],
                        self.locmass[R][k],
                        self.locpot[R][k],
                    ]
                if self.decay_product:
                    row.append(self.decay_product[k])
                wr.writerow([f"{x:.17g}" for x in row])


def identity_residual(series: DiagnosticsSeries, R: float) -> float:
    """Relative L^1-in-time mismatch between the centered finite difference of
    M(t) and the independently recorded right-hand side."""
    if R not in series.morawetz:
        raise KeyError(f"radius {R} not recorded in series")
    t = np.asarray(series.t)
    if len(t) < 3:
        raise ValueError("need at least 3 samples for a centered difference")
    M = np.asarray(series.morawetz[R])
    rhs = np.asarray(series.morawetz_rhs[R])
    dM = (M[2:] - M[:-2]) / (t[2:] - t[:-2])
    mid = rhs[1:-1]
    denom = float(np.sum(np.abs(mid)))
    if denom == 0.0:
        return float(np.sum(np.abs(dM)))
    return float(np.sum(np.abs(dM - mid)) / denom)


def local_potential_norm(u: RadialProfile, R: float, spec: EquationSpec) -> float:
    """Localized potential norm on the ball of radius R: the p+1 power integral
    for the power equation, the ball L^{2Np/(N+gamma)} integral raised to the
    (N+gamma)/(Np) power for the convolution equation."""
    inside = u.grid.r <= R
    au2 = np.where(inside, np.abs(u.values), 0.0)
    if spec.kind == EquationKind.NLS:
        p = float(spec.p)
        return quad(u.grid, au2 ** (p + 1))
    N, p, gamma = spec.N, float(spec.p), float(spec.gamma)
    q = 2.0 * N * p / (N + gamma)
    return quad(u.grid, au2**q) ** ((N + gamma) / (N * p))


def time_avg_local_potential(series: DiagnosticsSeries, R: float, T: float) -> float:
    """(1/T) int_0^T of the recorded localized potential norm at radius R."""
    if R not in series.locpot:
        raise KeyError(f"radius {R} not recorded in series")
    t = np.asarray(series.t)
    if T > t[-1] + 1e-12:
        raise ValueError(f"T={T} beyond recorded window [0, {t[-1]}]")
    vals = np.asarray(series.locpot[R])
    keep = t <= T + 1e-12
    tt, vv = t[keep], vals[keep]
    if len(tt) < 2:
        raise ValueError("window too short")
    return float(np.trapezoid(vv, tt) / T)


@dataclass
class EvacuationEvent:
    R: float
    mass_event_time: Optional[float]
    minima_times: List[float]
    minima_values: List[float]


def detect_evacuation(
    series: DiagnosticsSeries, R_list: Sequence[float], eps: float
) -> List[EvacuationEvent]:
    """Mass- and potential-evacuation evidence per radius.

    mass_event_time: first sample time after which the localized mass stays
    below eps for the rest of the window (None if never).  minima_times /
    minima_values: the strictly decreasing running-minimum subsequence of the
    localized potential norm.
    """
    events = []
    t = np.asarray(series.t)
    for R in R_list:
        if R not in series.locmass:
            raise KeyError(f"radius {R} not recorded in series")
        lm = np.asarray(series.locmass[R])
        below = lm < eps
        event_time = None
        # last index where the mass is >= eps; event starts after it
        above_idx = np.nonzero(~below)[0]
        if len(above_idx) == 0:
            event_time = float(t[0])
        elif above_idx[-1] + 1 < len(t):
            event_time = float(t[above_idx[-1] + 1])
        lp = np.asarray(series.locpot[R])
        times, vals = [], []
        best = math.inf
        for k in range(len(t)):
            if lp[k] < best:
                best = lp[k]
                times.append(float(t[k]))
                vals.append(float(lp[k]))
        events.append(
            EvacuationEvent(
                R=R, mass_event_time=event_time, minima_times=times, minima_values=vals
            )
        )
    return events


# ---------------------------------------------------------------------------
# threshold classification


class Verdict(str, Enum):
    SCATTER_PREDICTED = "SCATTER_PREDICTED"
    OUTSIDE_THEOREM = "OUTSIDE_THEOREM"
    ENERGY_NEGATIVE_NOTE = "ENERGY_NEGATIVE_NOTE"


@dataclass
class ThresholdReport:
    ME_product: Optional[float]
    ME_ratio: Optional[float]
    grad_product: float
    grad_ratio: float
    verdict: Verdict
    energy: float
    mass_value: float

    def to_json_dict(self) -> dict:
        return {
            "ME_product": self.ME_product,
            "ME_ratio": self.ME_ratio,
            "grad_product": self.grad_product,
            "grad_ratio": self.grad_ratio,
            "verdict": self.verdict.value,
            "energy": self.energy,
            "mass": self.mass_value,
        }


def classify(
    u0: RadialProfile,
    spec: EquationSpec,
    gs: GroundState,
    kernel=None,
) -> ThresholdReport:
    """Compare the scale-invariant quantities of u0 against the ground-state
    thresholds; the sub-threshold dichotomy predicts scattering when both the
    mass-energy and mass-gradient products sit strictly below threshold."""
    if spec != gs.spec:
        raise ValueError(f"spec mismatch: data {spec} vs ground state {gs.spec}")
    from .field import grad_norm_sq, mass
    from .groundstate import energy as energy_fn

    s = float(criticality(spec).s)
    m = mass(u0)
    e = energy_fn(u0, spec, kernel)
    g = grad_norm_sq(u0)
    grad_product = m ** ((1 - s) / 2) * g ** (s / 2)
    grad_ratio = grad_product / gs.threshold_grad
    if e < 0.0:
        # fractional powers of a negative energy are undefined; flagged, never
        # silently powered
        return ThresholdReport(
            ME_product=None,
            ME_ratio=None,
            grad_product=grad_product,
            grad_ratio=grad_ratio,
            verdict=Verdict.ENERGY_NEGATIVE_NOTE,
            energy=e,
            mass_value=m,
        )
    ME_product = m ** (1 - s) * e**s
    ME_ratio = ME_product / gs.threshold_ME
    verdict = (
        Verdict.SCATTER_PREDICTED
        if (ME_ratio < 1.0 and grad_ratio < 1.0)
        else Verdict.OUTSIDE_THEOREM
    )
    return ThresholdReport(
        ME_product=ME_product,
        ME_ratio=ME_ratio,
        grad_product=grad_product,
        grad_ratio=grad_ratio,
        verdict=verdict,
        energy=e,
        mass_value=m,
    )


def save_report(report: ThresholdReport, path, extra: Optional[dict] = None) -> None:
    d = report.to_json_dict()
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")
