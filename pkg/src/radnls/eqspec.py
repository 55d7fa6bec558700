"""Equation parameterization, criticality classification, and the scalar
threshold function governing the below-threshold dichotomy.

Covers the focusing power NLS  i u_t + Δu + |u|^{p-1}u = 0  and the
generalized Hartree equation  i v_t + Δv + (|x|^{-(N-γ)} * |v|^p)|v|^{p-2}v = 0
in the radial setting.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

Rational = Union[int, float, Fraction]


class EquationKind(str, Enum):
    NLS = "NLS"
    GHARTREE = "GHARTREE"


class Classification(str, Enum):
    MASS_SUBCRITICAL = "MASS_SUBCRITICAL"
    MASS_CRITICAL = "MASS_CRITICAL"
    INTERCRITICAL = "INTERCRITICAL"
    ENERGY_CRITICAL = "ENERGY_CRITICAL"
    ENERGY_SUPERCRITICAL = "ENERGY_SUPERCRITICAL"


@dataclass(frozen=True)
class EquationSpec:
    """Which equation, dimension N, power p, and (gHartree only) Riesz exponent gamma."""

    kind: EquationKind
    N: int
    p: Rational
    gamma: Optional[Rational] = None

    def __post_init__(self):
        if self.N < 3:
            raise ValueError(f"dimension N={self.N} not supported; need N >= 3")
        if self.kind == EquationKind.NLS:
            if self.p <= 1:
                raise ValueError(f"NLS requires p > 1, got p={self.p}")
            if self.gamma is not None:
                raise ValueError("gamma is only meaningful for GHARTREE")
        elif self.kind == EquationKind.GHARTREE:
            if self.p < 2:
                raise ValueError(f"GHARTREE requires p >= 2, got p={self.p}")
            if self.gamma is None:
                raise ValueError("GHARTREE requires gamma")
            if not (0 < self.gamma < self.N):
                raise ValueError(
                    f"GHARTREE requires 0 < gamma < N, got gamma={self.gamma}"
                )
        else:  # pragma: no cover
            raise ValueError(f"unknown kind {self.kind!r}")

    def to_config(self) -> dict:
        d = {"kind": self.kind.value, "N": self.N, "p": float(self.p)}
        if self.gamma is not None:
            d["gamma"] = float(self.gamma)
        return d

    @classmethod
    def from_config(cls, d: dict) -> "EquationSpec":
        kind = EquationKind(str(d["kind"]).upper())
        gamma = d.get("gamma")
        return cls(kind=kind, N=int(d["N"]), p=d["p"], gamma=gamma)


@dataclass(frozen=True)
class CriticalityReport:
    s: Fraction
    lower_p: Fraction
    upper_p: Fraction
    classification: Classification
    admissible: bool


def _as_fraction(x: Rational) -> Fraction:
    # Fraction(float) is exact (binary expansion), so boundary classification
    # such as p=5.0, N=3 -> s=1 never flips from rounding.
    return Fraction(x)


def criticality(spec: EquationSpec) -> CriticalityReport:
    """Scaling-critical Sobolev index s and the intercritical window for p.

    s = N/2 - 2/(p-1) for NLS and s = N/2 - (gamma+2)/(2(p-1)) for gHartree,
    computed in exact rational arithmetic.
    """
    N = Fraction(spec.N)
    p = _as_fraction(spec.p)
    if spec.kind == EquationKind.NLS:
        s = N / 2 - Fraction(2) / (p - 1)
        lower_p = 1 + Fraction(4, spec.N)
        upper_p = 1 + Fraction(4, spec.N - 2)
    else:
        g = _as_fraction(spec.gamma)
        s = N / 2 - (g + 2) / (2 * (p - 1))
        lower_p = 1 + (g + 2) / N
        upper_p = 1 + (g + 2) / (N - 2)

    if s < 0:
        cls = Classification.MASS_SUBCRITICAL
    elif s == 0:
        cls = Classification.MASS_CRITICAL
    elif s < 1:
        cls = Classification.INTERCRITICAL
    elif s == 1:
        cls = Classification.ENERGY_CRITICAL
    else:
        cls = Classification.ENERGY_SUPERCRITICAL

    admissible = cls == Classification.INTERCRITICAL
    if spec.kind == EquationKind.GHARTREE:
        admissible = admissible and p >= 2
    return CriticalityReport(
        s=s, lower_p=lower_p, upper_p=upper_p, classification=cls, admissible=admissible
    )


def _require_admissible(spec: EquationSpec) -> float:
    rep = criticality(spec)
    if not rep.admissible:
        raise ValueError(
            f"spec {spec} is not admissible (s={float(rep.s):g}, "
            f"classification={rep.classification.value})"
        )
    return float(rep.s)


def threshold_function_f(spec: EquationSpec, x: float) -> float:
    """Scalar function whose strict maximum f(1)=1 encodes the dichotomy.

    NLS:      f(x) = N/(2s) x^2 - 2/(s(p-1)) x^{s(p-1)+2}
    gHartree: f(x) = (s(p-1)+1)/(s(p-1)) x^2 - 1/(s(p-1)) x^{2s(p-1)+2}
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    s = _require_admissible(spec)
    p = float(spec.p)
    if spec.kind == EquationKind.NLS:
        return spec.N / (2 * s) * x**2 - 2 / (s * (p - 1)) * x ** (s * (p - 1) + 2)
    a = s * (p - 1)
    return (a + 1) / a * x**2 - 1 / a * x ** (2 * a + 2)


def threshold_function_df(spec: EquationSpec, x: float) -> float:
    """Derivative of threshold_function_f, in the factorized form that makes
    the critical points x=0 and x=1 explicit."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    s = _require_admissible(spec)
    p = float(spec.p)
    if spec.kind == EquationKind.NLS:
        return spec.N / s * (1 - x ** (s * (p - 1))) * x
    a = s * (p - 1)
    return (2 * a + 2) / a * (1 - x ** (2 * a)) * x


def coercivity_delta1(spec: EquationSpec, delta: float) -> float:
    """Coercivity gain delta_1 = N(p-1)/(2(p+1)) * delta/(1-delta) for NLS."""
    if spec.kind != EquationKind.NLS:
        raise ValueError("coercivity_delta1 is defined for the NLS branch only")
    _require_admissible(spec)
    if not (0 < delta < 1):
        raise ValueError(f"delta must lie in (0,1), got {delta}")
    p = float(spec.p)
    return spec.N * (p - 1) / (2 * (p + 1)) * delta / (1 - delta)
