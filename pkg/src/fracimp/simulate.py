"""Steady-state voltage response of a battery impedance, plus SNR-controlled noise.

Simulation happens in the frequency domain: the current record is assumed
exactly periodic, so multiplying its spectrum by the impedance gives the
periodic steady-state voltage with no transient.  The impedance is never
evaluated at DC (it diverges there); the DC voltage bin is the OCV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .excitation import TimeRecord
from .model import RandlesParams, randles_impedance


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-noise level as signal-RMS over noise standard deviation."""

    snr: float
    seed: int | None = None

    def __post_init__(self):
        if self.snr <= 0:
            raise ValueError("snr must be positive")


def simulate_response(p: RandlesParams, current: TimeRecord) -> TimeRecord:
    """Voltage record OCV + Z{i} for an exactly periodic current.

    Works circularly on the full record, which is exact for the periodic
    steady state.  The Nyquist bin (if present) is scaled by Re(Z) so that the
    sampled response of a real sinusoid at Nyquist comes out correctly real.
    """
    if current.kind != "current":
        raise ValueError("simulate_response expects a current record")
    m = current.period_s * current.sample_rate_hz
    if abs(m - round(m)) > 1e-9:
        raise ValueError(
            "current record is not exactly periodic (period_s*sample_rate_hz is "
            "not an integer); this simulator is steady-state only"
        )

    n = current.n_samples
    spec = np.fft.rfft(current.samples)
    k = np.arange(1, spec.size)
    omega = 2.0 * np.pi * k * current.sample_rate_hz / n
    z = randles_impedance(p, omega)
    if n % 2 == 0:
        z[-1] = z[-1].real
    out = np.empty_like(spec)
    out[0] = p.ocv * n  # unnormalized rfft convention: DC bin = N * mean
    out[1:] = spec[1:] * z
    return current.with_samples(np.fft.irfft(out, n=n), kind="voltage")


def add_noise(record: TimeRecord, spec: NoiseSpec) -> TimeRecord:
    """Add white Gaussian noise with sigma = RMS(record - mean)/snr.

    The SNR is referenced to the AC part so a large DC level (OCV on the
    voltage channel) does not inflate the noise.
    """
    ac = record.samples - record.samples.mean()
    rms_ac = float(np.sqrt(np.mean(ac**2)))
    if rms_ac == 0.0:
        raise ValueError("record has no AC content; SNR is undefined")
    sigma = rms_ac / spec.snr
    rng = np.random.default_rng(spec.seed)
    return record.with_samples(record.samples + rng.normal(0.0, sigma, record.n_samples))
