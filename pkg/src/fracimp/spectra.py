"""Normalized DFT spectra, per-period averaging, and errors-in-variables covariances.

The DFT convention is X(k) = (1/N) sum_n x(n) exp(-j*2*pi*k*n/N) throughout;
all downstream estimation formulas assume it.  After splitting a record into P
periods, segment bin k corresponds to frequency k/period_s (full-record bin
P*k), and only bins 0..M/2 are kept (real signals).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .excitation import TimeRecord
from .model import ImpedanceCurve


def dft(samples) -> np.ndarray:
    """DFT with 1/N normalization, bins k = 0..N-1."""
    x = np.asarray(samples)
    if x.size == 0:
        raise ValueError("dft needs a nonempty input")
    return np.fft.fft(x) / x.size


@dataclass(frozen=True, eq=False)
class SpectralSet:
    """Per-period and averaged spectra of a current/voltage pair, with noise covariances.

    Arrays are indexed by segment bin k = 0..M/2 (M samples per period);
    freq_hz[k] = k/period_s.  Covariance fields are None when only one period
    was measured.
    """

    freq_hz: np.ndarray
    mean_current: np.ndarray
    mean_voltage: np.ndarray
    per_period_current: np.ndarray
    per_period_voltage: np.ndarray
    var_current: np.ndarray | None
    var_voltage: np.ndarray | None
    covar_vi: np.ndarray | None
    periods: int

    def __post_init__(self):
        n = self.freq_hz.size
        for name in ("mean_current", "mean_voltage"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per bin")
        for name in ("per_period_current", "per_period_voltage"):
            if getattr(self, name).shape != (self.periods, n):
                raise ValueError(f"{name} must be (periods, bins)")
        if not np.allclose(self.per_period_current.mean(axis=0), self.mean_current,
                           rtol=1e-12, atol=1e-300):
            raise ValueError("mean_current must equal the mean of per-period spectra")
        if not np.allclose(self.per_period_voltage.mean(axis=0), self.mean_voltage,
                           rtol=1e-12, atol=1e-300):
            raise ValueError("mean_voltage must equal the mean of per-period spectra")
        if self.var_current is not None:
            if np.any(self.var_current < 0) or np.any(self.var_voltage < 0):
                raise ValueError("variances must be nonnegative")
            cs = self.var_current * self.var_voltage - np.abs(self.covar_vi) ** 2
            if np.any(cs < -1e-12 * np.maximum(self.var_current * self.var_voltage, 1e-300)):
                raise ValueError("covariance violates the Cauchy-Schwarz bound")

    @property
    def has_covariances(self) -> bool:
        return self.var_current is not None

    @property
    def n_bins(self) -> int:
        return self.freq_hz.size

    def to_dict(self) -> dict:
        d = {
            "mean_current": [
                {"freq_hz": float(f), "re": float(z.real), "im": float(z.imag)}
                for f, z in zip(self.freq_hz, self.mean_current)
            ],
            "mean_voltage": [
                {"freq_hz": float(f), "re": float(z.real), "im": float(z.imag)}
                for f, z in zip(self.freq_hz, self.mean_voltage)
            ],
            "periods": self.periods,
        }
        if self.has_covariances:
            d["var_current"] = self.var_current.tolist()
            d["var_voltage"] = self.var_voltage.tolist()
            d["covar_vi_re"] = self.covar_vi.real.tolist()
            d["covar_vi_im"] = self.covar_vi.imag.tolist()
        return d


def per_period_spectra(current: TimeRecord, voltage: TimeRecord) -> SpectralSet:
    """Split both records into periods, DFT each, and estimate noise covariances.

    The sample covariances use the 1/(P-1) convention over the per-period
    spectra; with P = 1 the covariance fields are left unavailable and only
    uniform-weight estimation is possible downstream.
    """
    if current.kind != "current" or voltage.kind != "voltage":
        raise ValueError("per_period_spectra expects (current, voltage) records")
    for attr in ("sample_rate_hz", "periods", "period_s"):
        if not np.isclose(getattr(current, attr), getattr(voltage, attr), rtol=1e-12):
            raise ValueError(f"current/voltage records disagree on {attr}")
    p = current.periods
    m = current.samples_per_period
    if m < 2:
        raise ValueError("need at least 2 samples per period")
    if current.n_samples != p * m:
        raise ValueError("record length is not periods * samples_per_period")

    cur = np.fft.rfft(current.samples.reshape(p, m), axis=1) / m
    vol = np.fft.rfft(voltage.samples.reshape(p, m), axis=1) / m
    mean_cur = cur.mean(axis=0)
    mean_vol = vol.mean(axis=0)
    freq_hz = np.arange(mean_cur.size) / current.period_s

    if p >= 2:
        d_cur = cur - mean_cur
        d_vol = vol - mean_vol
        var_cur = np.sum(np.abs(d_cur) ** 2, axis=0) / (p - 1)
        var_vol = np.sum(np.abs(d_vol) ** 2, axis=0) / (p - 1)
        covar_vi = np.sum(d_vol * np.conj(d_cur), axis=0) / (p - 1)
    else:
        var_cur = var_vol = covar_vi = None

    return SpectralSet(
        freq_hz=freq_hz,
        mean_current=mean_cur,
        mean_voltage=mean_vol,
        per_period_current=cur,
        per_period_voltage=vol,
        var_current=var_cur,
        var_voltage=var_vol,
        covar_vi=covar_vi,
        periods=p,
    )


def nonparametric_impedance(spectra: SpectralSet, excited_bins) -> ImpedanceCurve:
    """Classical EIS estimate: averaged voltage over averaged current per excited bin.

    `excited_bins` are segment-bin indices (harmonic numbers of 1/period_s);
    the DC bin is always excluded, and bins whose current magnitude is below
    1e-12 of the strongest bin are skipped with a warning.
    """
    bins = np.unique(np.asarray(excited_bins, dtype=int))
    if bins.size == 0:
        raise ValueError("excited_bins must be nonempty")
    if bins[0] < 1:
        raise ValueError("excited bins must exclude DC (bin 0)")
    if bins[-1] >= spectra.n_bins:
        raise ValueError(f"excited bin {bins[-1]} outside spectrum (max {spectra.n_bins - 1})")

    mag = np.abs(spectra.mean_current[bins])
    floor = 1e-12 * np.abs(spectra.mean_current).max()
    weak = mag <= floor
    if np.any(weak):
        warnings.warn(
            f"skipping {int(weak.sum())} excited bin(s) with vanishing current spectrum",
            stacklevel=2,
        )
        bins = bins[~weak]
        if bins.size == 0:
            raise ValueError("all excited bins have vanishing current spectrum")

    z = spectra.mean_voltage[bins] / spectra.mean_current[bins]
    return ImpedanceCurve(freq_hz=spectra.freq_hz[bins], z_ohm=z)
