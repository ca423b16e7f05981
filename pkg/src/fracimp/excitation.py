"""Excitation design and synthesis: odd random-phase multisines and periodic noise.

All excitations are built to be exactly periodic over an integer number of
periods so that downstream period-averaged spectra are leakage free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

TWO_PI = 2.0 * np.pi

SignalKind = Literal["current", "voltage"]


@dataclass(frozen=True, eq=False)
class MultisineSpec:
    """Blueprint of a multisine: which harmonics of 1/period_s are excited and how.

    ``harmonics`` are strictly increasing positive integers; the excited
    frequencies are ``harmonics / period_s``.  Amplitudes are per-harmonic sine
    amplitudes and phases live in [0, 2*pi).
    """

    period_s: float
    harmonics: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "harmonics", np.asarray(self.harmonics, dtype=int))
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=float))
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=float))
        if self.period_s <= 0:
            raise ValueError("period_s must be positive")
        if self.harmonics.ndim != 1 or self.harmonics.size == 0:
            raise ValueError("harmonics must be a nonempty 1-D integer array")
        if np.any(self.harmonics < 1):
            raise ValueError("harmonics must be >= 1 (DC is never excited)")
        if np.any(np.diff(self.harmonics) <= 0):
            raise ValueError("harmonics must be strictly increasing without duplicates")
        if self.amplitudes.shape != self.harmonics.shape or self.phases.shape != self.harmonics.shape:
            raise ValueError("amplitudes and phases must match harmonics in shape")
        if np.any(self.amplitudes <= 0):
            raise ValueError("amplitudes must be strictly positive")
        if np.any((self.phases < 0) | (self.phases >= TWO_PI)):
            raise ValueError("phases must lie in [0, 2*pi)")

    @property
    def freqs_hz(self) -> np.ndarray:
        return self.harmonics / self.period_s

    @property
    def f_max_hz(self) -> float:
        return float(self.harmonics[-1] / self.period_s)

    def to_dict(self) -> dict:
        return {
            "period_s": self.period_s,
            "harmonics": self.harmonics.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "phases": self.phases.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultisineSpec":
        return cls(
            period_s=float(d["period_s"]),
            harmonics=np.asarray(d["harmonics"], dtype=int),
            amplitudes=np.asarray(d["amplitudes"], dtype=float),
            phases=np.asarray(d["phases"], dtype=float),
        )


@dataclass(frozen=True, eq=False)
class TimeRecord:
    """Uniformly sampled current or voltage record spanning `periods` periods."""

    samples: np.ndarray
    sample_rate_hz: float
    periods: int
    period_s: float
    kind: SignalKind

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.periods < 1:
            raise ValueError("periods must be a positive integer")
        if self.period_s <= 0:
            raise ValueError("period_s must be positive")
        if self.kind not in ("current", "voltage"):
            raise ValueError(f"kind must be 'current' or 'voltage', got {self.kind!r}")
        if self.samples.ndim != 1:
            raise ValueError("samples must be 1-D")
        expected = int(round(self.periods * self.period_s * self.sample_rate_hz))
        if self.samples.size != expected:
            raise ValueError(
                f"record length {self.samples.size} != periods*period_s*sample_rate_hz "
                f"= {expected}"
            )

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def samples_per_period(self) -> int:
        """Samples in one period; requires period_s*sample_rate_hz to be an integer."""
        m = self.period_s * self.sample_rate_hz
        if abs(m - round(m)) > 1e-9:
            raise ValueError("period_s*sample_rate_hz is not an integer; record cannot "
                             "be split into whole periods")
        return int(round(m))

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2)))

    def with_samples(self, samples: np.ndarray, kind: SignalKind | None = None) -> "TimeRecord":
        """Copy of this record with new samples (and optionally a new kind)."""
        return TimeRecord(
            samples=samples,
            sample_rate_hz=self.sample_rate_hz,
            periods=self.periods,
            period_s=self.period_s,
            kind=self.kind if kind is None else kind,
        )


def _nearest_odd(x: np.ndarray) -> np.ndarray:
    # nearest odd integer, ties (even x) rounding up
    return (2 * np.floor(np.asarray(x, dtype=float) / 2.0) + 1).astype(np.int64)


def design_odd_quasilog(
    period_s: float,
    f_min_hz: float,
    f_max_hz: float,
    points_per_decade: int,
    seed: int | None = None,
) -> MultisineSpec:
    """Design an odd random-phase multisine on a quasi-logarithmic grid.

    An ideal log-spaced frequency grid with `points_per_decade` points per
    decade is laid over [f_min_hz, f_max_hz]; each grid point is rounded to
    the nearest odd harmonic of 1/period_s (ties up), clamped to the odd
    harmonics available inside the band, and duplicates are dropped.  Phases
    are drawn uniformly on [0, 2*pi); amplitudes are all 1 (scale the
    synthesized record afterwards).
    """
    if period_s <= 0:
        raise ValueError("period_s must be positive")
    if f_min_hz < 1.0 / period_s * (1 - 1e-12):
        raise ValueError("f_min_hz must be at least the fundamental 1/period_s")
    if f_max_hz < f_min_hz:
        raise ValueError("f_max_hz must be >= f_min_hz")
    if points_per_decade < 1:
        raise ValueError("points_per_decade must be >= 1")

    # band edges in harmonic units, with slack against float dirt at exact edges
    x_lo = f_min_hz * period_s
    x_hi = f_max_hz * period_s
    slack_lo = 1e-9 * max(1.0, abs(x_lo))
    slack_hi = 1e-9 * max(1.0, abs(x_hi))
    k_lo = int(np.ceil(x_lo - slack_lo))
    if k_lo % 2 == 0:
        k_lo += 1
    k_hi = int(np.floor(x_hi + slack_hi))
    if k_hi % 2 == 0:
        k_hi -= 1
    if k_lo > k_hi or k_lo < 1:
        raise ValueError("no excitable odd harmonic in band")

    decades = np.log10(f_max_hz / f_min_hz) if f_max_hz > f_min_hz else 0.0
    n_grid = max(1, int(round(points_per_decade * decades)) + 1)
    grid = np.logspace(np.log10(f_min_hz), np.log10(f_max_hz), n_grid)
    harmonics = np.unique(np.clip(_nearest_odd(grid * period_s), k_lo, k_hi))

    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, TWO_PI, size=harmonics.size)
    return MultisineSpec(
        period_s=period_s,
        harmonics=harmonics,
        amplitudes=np.ones(harmonics.size),
        phases=phases,
    )


def synthesize_multisine(spec: MultisineSpec, sample_rate_hz: float, periods: int) -> TimeRecord:
    """Sample the multisine sum of sines at sample_rate_hz over `periods` periods.

    The record is exactly periodic by construction (period_s*sample_rate_hz
    must be an integer number of samples).
    """
    f_nyq_limit = 2.0 * spec.harmonics[-1] / spec.period_s
    if sample_rate_hz <= f_nyq_limit * (1 - 1e-12):
        raise ValueError(
            f"sample_rate_hz={sample_rate_hz} violates the Nyquist bound for harmonic "
            f"{int(spec.harmonics[-1])} ({spec.f_max_hz} Hz)"
        )
    m = spec.period_s * sample_rate_hz
    if abs(m - round(m)) > 1e-9:
        raise ValueError("period_s*sample_rate_hz must be an integer for exact periodicity")
    if periods < 1:
        raise ValueError("periods must be >= 1")

    n_total = int(round(m)) * periods
    t = np.arange(n_total) / sample_rate_hz
    x = np.zeros(n_total)
    for k, alpha, phi in zip(spec.harmonics, spec.amplitudes, spec.phases):
        x += alpha * np.sin(TWO_PI * k / spec.period_s * t + phi)
    return TimeRecord(
        samples=x,
        sample_rate_hz=sample_rate_hz,
        periods=periods,
        period_s=spec.period_s,
        kind="current",
    )


def generate_periodic_noise(
    period_s: float,
    sample_rate_hz: float,
    periods: int,
    seed: int | None = None,
) -> TimeRecord:
    """One period of zero-mean Gaussian white noise, tiled `periods` times.

    The per-period sample mean is subtracted before tiling, so every period is
    exactly zero mean and the record is exactly periodic.
    """
    m = period_s * sample_rate_hz
    if m <= 0 or abs(m - round(m)) > 1e-9:
        raise ValueError("period_s*sample_rate_hz must be a positive integer")
    if periods < 1:
        raise ValueError("periods must be >= 1")
    rng = np.random.default_rng(seed)
    one_period = rng.standard_normal(int(round(m)))
    one_period -= one_period.mean()
    return TimeRecord(
        samples=np.tile(one_period, periods),
        sample_rate_hz=sample_rate_hz,
        periods=periods,
        period_s=period_s,
        kind="current",
    )


def scale_to_rms(record: TimeRecord, rms_target: float) -> TimeRecord:
    """Rescale a record so its RMS equals rms_target exactly."""
    if rms_target <= 0:
        raise ValueError("rms_target must be positive")
    rms = record.rms()
    if rms == 0.0:
        raise ValueError("cannot scale an identically zero record")
    return record.with_samples(record.samples * (rms_target / rms))
