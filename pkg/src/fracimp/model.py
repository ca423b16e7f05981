"""Randles equivalent circuit, Warburg element, and the half-power rational impedance.

The Randles cell (series resistance, double-layer capacitance in parallel with
charge-transfer resistance plus a Warburg diffusion element) has an impedance
that is rational in q = sqrt(s).  This module holds the circuit, the rational
form, the exact coefficient map between them, and Coulomb counting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import NumericsError
from .excitation import TimeRecord

SQRT2 = float(np.sqrt(2.0))
# principal branch of sqrt(j): exp(j*pi/4)
_ROOT_J = np.exp(1j * np.pi / 4)


@dataclass(frozen=True)
class RandlesParams:
    """Physical circuit values: ohms, farads, ohm/sqrt(second), volts."""

    r_s: float
    r_ct: float
    c_dl: float
    sigma_w: float
    ocv: float = 0.0

    def __post_init__(self):
        for name in ("r_s", "r_ct", "c_dl", "sigma_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def to_dict(self) -> dict:
        return {
            "r_s_ohm": self.r_s,
            "r_ct_ohm": self.r_ct,
            "c_dl_f": self.c_dl,
            "sigma_w_ohm_per_sqrt_s": self.sigma_w,
            "ocv_v": self.ocv,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandlesParams":
        return cls(
            r_s=float(d["r_s_ohm"]),
            r_ct=float(d["r_ct_ohm"]),
            c_dl=float(d["c_dl_f"]),
            sigma_w=float(d["sigma_w_ohm_per_sqrt_s"]),
            ocv=float(d.get("ocv_v", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class HalfOrderRational:
    """Rational function in q = sqrt(s): numerator b_0..b_Nb over denominator a_1..a_Na.

    The denominator has no constant term (a_0 = 0); `a[0]` stores a_1 and is 1
    after normalization.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if self.a.ndim != 1 or self.a.size < 1:
            raise ValueError("need at least denominator coefficient a_1")
        if self.b.ndim != 1 or self.b.size < 2:
            raise ValueError("need numerator coefficients b_0..b_Nb with Nb >= 1")
        if not (np.isfinite(self.a).all() and np.isfinite(self.b).all()):
            raise ValueError("coefficients must be finite")
        if self.a[0] == 0.0:
            raise ValueError("a_1 must be nonzero")

    @property
    def n_a(self) -> int:
        return self.a.size

    @property
    def n_b(self) -> int:
        return self.b.size - 1

    def normalized(self) -> "HalfOrderRational":
        """Scale numerator and denominator so a_1 = 1 (the impedance is unchanged)."""
        return HalfOrderRational(a=self.a / self.a[0], b=self.b / self.a[0])

    def to_dict(self) -> dict:
        return {"a_denominator": self.a.tolist(), "b_numerator": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "HalfOrderRational":
        return cls(a=np.asarray(d["a_denominator"], dtype=float),
                   b=np.asarray(d["b_numerator"], dtype=float))


@dataclass(frozen=True, eq=False)
class SocTrace:
    """State-of-charge (percent) at every sample instant of a current record."""

    soc_percent: np.ndarray
    initial_soc: float
    capacity_ah: float

    def __post_init__(self):
        object.__setattr__(self, "soc_percent", np.asarray(self.soc_percent, dtype=float))

    @property
    def within_bounds(self) -> bool:
        return bool(np.all((self.soc_percent >= 0.0) & (self.soc_percent <= 100.0)))


@dataclass(frozen=True, eq=False)
class ImpedanceCurve:
    """Complex impedance sampled on a frequency grid."""

    freq_hz: np.ndarray
    z_ohm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "freq_hz", np.asarray(self.freq_hz, dtype=float))
        object.__setattr__(self, "z_ohm", np.asarray(self.z_ohm, dtype=complex))
        if self.freq_hz.shape != self.z_ohm.shape:
            raise ValueError("freq_hz and z_ohm must have the same shape")

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * np.pi * self.freq_hz


def _sqrt_j_omega(omega) -> np.ndarray:
    """Principal branch of sqrt(j*omega) for omega > 0."""
    om = np.asarray(omega, dtype=float)
    if np.any(om <= 0):
        raise ValueError("omega must be strictly positive (Warburg diverges at DC)")
    return np.sqrt(om) * _ROOT_J


def warburg_impedance(sigma_w: float, omega):
    """Warburg diffusion impedance sigma_w*sqrt(2)/sqrt(j*omega); phase is -45 deg."""
    if sigma_w < 0:
        raise ValueError("sigma_w must be nonnegative")
    return sigma_w * SQRT2 / _sqrt_j_omega(omega)


def randles_impedance(p: RandlesParams, omega):
    """Randles-cell impedance at angular frequency omega (rad/s), s = j*omega."""
    q = _sqrt_j_omega(omega)
    z_branch = p.r_ct + p.sigma_w * SQRT2 / q
    return p.r_s + 1.0 / (1.0 / z_branch + q * q * p.c_dl)


def resonance_frequency(p: RandlesParams) -> float:
    """Angular frequency of the semicircle apex, 1/(r_ct*c_dl)."""
    return 1.0 / (p.r_ct * p.c_dl)


def randles_to_rational(p: RandlesParams) -> HalfOrderRational:
    """Exact coefficient map from circuit values to the (3, 3) rational in sqrt(s)."""
    sw2 = p.sigma_w * SQRT2
    a = np.array([1.0, sw2 * p.c_dl, p.r_ct * p.c_dl])
    b = np.array([sw2, p.r_s + p.r_ct, p.r_s * sw2 * p.c_dl, p.r_s * p.r_ct * p.c_dl])
    return HalfOrderRational(a=a, b=b)


def eval_rational(r: HalfOrderRational, omega):
    """Evaluate the half-power rational at s = j*omega via q = sqrt(j*omega)."""
    q = _sqrt_j_omega(omega)
    num = np.zeros_like(q)
    for n in range(r.b.size - 1, -1, -1):  # Horner in q
        num = num * q + r.b[n]
    den = np.zeros_like(q)
    for n in range(r.a.size - 1, -1, -1):
        den = den * q + r.a[n]
    den = den * q  # denominator starts at q^1
    if np.any(np.abs(den) < 1e-30):
        raise NumericsError("denominator vanishes at an evaluation frequency (pole)")
    return num / den


def coulomb_count(current: TimeRecord, initial_soc: float, capacity_ah: float) -> SocTrace:
    """Track SOC by trapezoidal integration of the current.

    SOC(t_n) = initial_soc + 100/(3600*capacity_ah) * integral of i up to t_n.
    Values outside [0, 100] are reported (with a warning), never clamped.
    """
    if capacity_ah <= 0:
        raise ValueError("capacity_ah must be positive")
    if current.kind != "current":
        raise ValueError("coulomb_count expects a current record")
    dt = 1.0 / current.sample_rate_hz
    charge = cumulative_trapezoid(current.samples, dx=dt, initial=0.0)
    soc = initial_soc + charge * (100.0 / (3600.0 * capacity_ah))
    trace = SocTrace(soc_percent=soc, initial_soc=initial_soc, capacity_ah=capacity_ah)
    if not trace.within_bounds:
        warnings.warn("SOC trace leaves the [0, 100] %% range", stacklevel=2)
    return trace
