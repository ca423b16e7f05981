"""Frequency-domain equation-error regression and (weighted) total least squares.

The equation error at segment bin k,

    E(k) = sum_{n=1..Na} a_n (j*w_k)^{n/2} V(k)
         - sum_{n=0..Nb} b_n (j*w_k)^{n/2} I(k)
         + sum_{r=0..Nr} c_r (j*w_k)^{r/2},

is linear in theta = [a_1..a_Na, b_0..b_Nb, c_0..c_Nr].  The homogeneous
least-squares problem min ||K theta|| s.t. ||theta|| = 1 is solved on the
real/imaginary-stacked regressor via the SVD; weighting rows by the inverse
equation-error standard deviation and iterating yields the consistent
weighted estimate.  All half powers use the principal branch of sqrt(j*w).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError
from .model import HalfOrderRational, ImpedanceCurve, eval_rational
from .spectra import SpectralSet

# per-bin current SNR above which sample covariances are treated as float
# rounding debris (noiseless data) rather than measurement noise
_NOISELESS_SNR_GUARD = 1e8


@dataclass(frozen=True, eq=False)
class EstimationConfig:
    """Model orders, bin selection, and iteration policy for the estimator.

    ``bin_window`` is an inclusive (k_min, k_max) interval of segment bins;
    None means all bins except DC and Nyquist.  ``bin_mask`` restricts the
    window to an explicit bin set (use the excited harmonics for multisine
    data; leave None for noise excitation).  ``noise_whitening`` additionally
    whitens the a/b regressor columns by the Cholesky factor of the weighted
    noise covariance in the iterated solves, which removes the quadratic
    noise bias of the plain row-weighted solution; disable it to reproduce
    the plain row-scaled iteration.
    """

    n_a: int = 3
    n_b: int = 3
    n_r: int = 1
    bin_window: tuple[int, int] | None = None
    bin_mask: np.ndarray | None = None
    iterations: int = 10
    column_scaling: bool = True
    noise_whitening: bool = True

    def __post_init__(self):
        if self.n_a < 1:
            raise ValueError("n_a must be >= 1")
        if self.n_b < 0:
            raise ValueError("n_b must be >= 0")
        if self.n_r < 0:
            raise ValueError("n_r must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.bin_window is not None:
            k_min, k_max = self.bin_window
            if not (1 <= k_min <= k_max):
                raise ValueError("bin_window must satisfy 1 <= k_min <= k_max")
        if self.bin_mask is not None:
            object.__setattr__(self, "bin_mask", np.unique(np.asarray(self.bin_mask, dtype=int)))

    @property
    def n_columns(self) -> int:
        return self.n_a + (self.n_b + 1) + (self.n_r + 1)

    def selected_bins(self, spectra: SpectralSet) -> np.ndarray:
        """Bins entering the regression: window intersected with the mask."""
        top = spectra.n_bins - 2  # exclude DC and the segment Nyquist bin
        if self.bin_window is None:
            k_min, k_max = 1, top
        else:
            k_min, k_max = self.bin_window
            if k_max > top:
                raise ValueError(f"bin_window exceeds available bins (max {top})")
        bins = np.arange(k_min, k_max + 1)
        if self.bin_mask is not None:
            bins = bins[np.isin(bins, self.bin_mask)]
        if bins.size == 0:
            raise ValueError("bin selection is empty")
        return bins


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Estimated half-order rational plus transient coefficients and diagnostics.

    ``weighted_cost`` is sum_k |E(k)|^2 / sigma_E(k)^2 at the returned
    (a_1 = 1 normalized) parameters under the final weights; ``cost_history``
    records the same quantity after every solve so weight stabilization can
    be checked.  ``sigma_e`` is None for unweighted solves.
    """

    rational: HalfOrderRational
    transient: np.ndarray
    weighted_cost: float
    iterations_run: int
    sigma_e: np.ndarray | None
    bins: np.ndarray | None = None
    cost_history: list = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "transient", np.asarray(self.transient, dtype=float))

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.rational.a, self.rational.b, self.transient])

    def to_dict(self) -> dict:
        return {
            "a": self.rational.a.tolist(),
            "b": self.rational.b.tolist(),
            "c": self.transient.tolist(),
            "weighted_cost": self.weighted_cost,
            "iterations_run": self.iterations_run,
            "sigma_e": None if self.sigma_e is None else self.sigma_e.tolist(),
        }


def _half_powers(omega: np.ndarray, orders) -> np.ndarray:
    """(j*omega)^{n/2} for each n in orders, shape (len(orders), len(omega))."""
    q = np.sqrt(omega) * np.exp(1j * np.pi / 4)
    return np.stack([q**n for n in orders])


def _regression_frequencies(spectra: SpectralSet, bins: np.ndarray) -> np.ndarray:
    return 2.0 * np.pi * spectra.freq_hz[bins]


def build_regressor(spectra: SpectralSet, cfg: EstimationConfig) -> np.ndarray:
    """Complex regressor matrix, one row per selected bin.

    Columns: [(jw)^{n/2} V(k)]_{n=1..Na} | [-(jw)^{n/2} I(k)]_{n=0..Nb} |
    [(jw)^{r/2}]_{r=0..Nr}.
    """
    bins = cfg.selected_bins(spectra)
    omega = _regression_frequencies(spectra, bins)
    qv = _half_powers(omega, range(1, cfg.n_a + 1))
    qi = _half_powers(omega, range(0, cfg.n_b + 1))
    qt = _half_powers(omega, range(0, cfg.n_r + 1))
    cols = np.concatenate([
        qv * spectra.mean_voltage[bins],
        -qi * spectra.mean_current[bins],
        qt,
    ])
    return cols.T.copy()


def _stacked_real(regressor: np.ndarray, row_weights: np.ndarray | None) -> np.ndarray:
    k = regressor if row_weights is None else regressor * row_weights[:, None]
    return np.vstack([k.real, k.imag])


def _smallest_right_singular_vector(matrix: np.ndarray) -> np.ndarray:
    _, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s[-2] - s[-1] <= 1e-8 * max(s[0], np.finfo(float).tiny):
        warnings.warn(
            "two smallest singular values nearly coincide; the solution "
            "direction is ambiguous",
            stacklevel=3,
        )
    return vt[-1]


def _normalize_a1(theta: np.ndarray) -> np.ndarray:
    if abs(theta[0]) < 1e-10 * np.linalg.norm(theta):
        raise NumericsError("estimated a_1 is numerically zero; cannot normalize")
    return theta / theta[0]


def _solve_tls(regressor: np.ndarray, cfg: EstimationConfig,
               row_weights: np.ndarray | None = None) -> np.ndarray:
    """Plain (row-weighted) TLS direction via SVD, a_1-normalized."""
    stacked = _stacked_real(regressor, row_weights)
    if stacked.shape[0] < stacked.shape[1]:
        raise ValueError(
            f"{stacked.shape[0]} stacked rows < {stacked.shape[1]} columns; "
            "select more bins or reduce model orders"
        )
    if cfg.column_scaling:
        scale = np.linalg.norm(stacked, axis=0)
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(stacked.shape[1])
    theta = _smallest_right_singular_vector(stacked / scale) / scale
    return _normalize_a1(theta)


def _theta_cost(regressor: np.ndarray, theta: np.ndarray,
                row_weights: np.ndarray | None) -> float:
    resid = regressor @ theta
    if row_weights is not None:
        resid = resid * row_weights
    return float(np.sum(np.abs(resid) ** 2))


def _split_theta(theta: np.ndarray, cfg: EstimationConfig):
    a = theta[: cfg.n_a]
    b = theta[cfg.n_a: cfg.n_a + cfg.n_b + 1]
    c = theta[cfg.n_a + cfg.n_b + 1:]
    return a, b, c


def tls_solve(regressor: np.ndarray, cfg: EstimationConfig) -> EstimateResult:
    """Unweighted total-least-squares estimate from a (possibly pre-weighted) regressor.

    Stacks real and imaginary parts, optionally normalizes columns to unit
    Euclidean norm (undone afterwards), and takes the right singular vector
    of the smallest singular value, rescaled so a_1 = 1.
    """
    if regressor.shape[1] != cfg.n_columns:
        raise ValueError(
            f"regressor has {regressor.shape[1]} columns, config implies {cfg.n_columns}"
        )
    theta = _solve_tls(regressor, cfg)
    a, b, c = _split_theta(theta, cfg)
    cost = _theta_cost(regressor, theta, None)
    return EstimateResult(
        rational=HalfOrderRational(a=a, b=b),
        transient=c,
        weighted_cost=cost,
        iterations_run=0,
        sigma_e=None,
        cost_history=[cost],
    )


def _response_polynomials(theta: np.ndarray, omega: np.ndarray, cfg: EstimationConfig):
    a, b, _ = _split_theta(theta, cfg)
    qv = _half_powers(omega, range(1, cfg.n_a + 1))
    qi = _half_powers(omega, range(0, cfg.n_b + 1))
    return a @ qv, b @ qi


def _floor_sigma(sigma: np.ndarray) -> np.ndarray:
    med = float(np.median(sigma))
    if med > 0.0:
        return np.maximum(sigma, 1e-8 * med)
    return np.ones_like(sigma)


def equation_error_sigma(spectra: SpectralSet, theta: EstimateResult,
                         cfg: EstimationConfig) -> np.ndarray:
    """Per-bin standard deviation of the equation error at the given parameters.

    With A(k) and B(k) the denominator/numerator polynomials evaluated at
    sqrt(j*w_k), sigma_E^2 = |A|^2 var_V + |B|^2 var_I - 2 Re{A covar_VI B*};
    round-off negatives are clamped to zero and the result floored so weights
    stay finite on noiseless bins.
    """
    if not spectra.has_covariances:
        raise ValueError(
            "noise covariances unavailable (single period); use unweighted tls_solve"
        )
    bins = cfg.selected_bins(spectra)
    omega = _regression_frequencies(spectra, bins)
    pol_a, pol_b = _response_polynomials(theta.theta, omega, cfg)
    var = (
        np.abs(pol_a) ** 2 * spectra.var_voltage[bins]
        + np.abs(pol_b) ** 2 * spectra.var_current[bins]
        - 2.0 * np.real(pol_a * spectra.covar_vi[bins] * np.conj(pol_b))
    )
    return _floor_sigma(np.sqrt(np.maximum(var, 0.0)))


def _noise_gram(spectra: SpectralSet, bins: np.ndarray, omega: np.ndarray,
                weights: np.ndarray, cfg: EstimationConfig) -> np.ndarray:
    """Column-space covariance of the row-weighted regressor noise (a/b block)."""
    qv = _half_powers(omega, range(1, cfg.n_a + 1))
    qi = _half_powers(omega, range(0, cfg.n_b + 1))
    w2 = weights**2
    sv = spectra.var_voltage[bins] * w2
    si = spectra.var_current[bins] * w2
    svi = spectra.covar_vi[bins] * w2
    n_ab = cfg.n_a + cfg.n_b + 1
    gram = np.zeros((n_ab, n_ab))
    gram[: cfg.n_a, : cfg.n_a] = np.einsum("mk,nk,k->mn", qv, qv.conj(), sv).real
    gram[cfg.n_a:, cfg.n_a:] = np.einsum("mk,nk,k->mn", qi, qi.conj(), si).real
    cross = -np.einsum("mk,nk,k->mn", qv, qi.conj(), svi).real
    gram[: cfg.n_a, cfg.n_a:] = cross
    gram[cfg.n_a:, : cfg.n_a] = cross.T
    return gram


def _solve_whitened(regressor: np.ndarray, spectra: SpectralSet, bins: np.ndarray,
                    omega: np.ndarray, weights: np.ndarray,
                    cfg: EstimationConfig) -> np.ndarray:
    """Row-weighted solve whitened by the noise covariance of the a/b columns.

    The transient columns carry no noise, so they are projected out first and
    back-substituted afterwards.  The a/b block is scaled to unit noise
    diagonal, whitened by the Cholesky factor of the (ridged) noise
    correlation, and the smallest right singular vector taken in the whitened
    coordinates.
    """
    n_ab = cfg.n_a + cfg.n_b + 1
    stacked = _stacked_real(regressor, weights)
    k_ab, k_t = stacked[:, :n_ab], stacked[:, n_ab:]
    q_t, _ = np.linalg.qr(k_t)
    k_ab_proj = k_ab - q_t @ (q_t.T @ k_ab)

    gram = _noise_gram(spectra, bins, omega, weights, cfg)
    diag = np.sqrt(np.diag(gram))
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise np.linalg.LinAlgError("noise gram not positive")
    corr = gram / np.outer(diag, diag) + 1e-10 * np.eye(n_ab)
    chol = np.linalg.cholesky(corr)

    whitened = np.linalg.solve(chol, (k_ab_proj / diag).T).T
    phi = _smallest_right_singular_vector(whitened)
    theta_ab = np.linalg.solve(chol.T, phi) / diag
    theta_t = -np.linalg.lstsq(k_t, k_ab @ theta_ab, rcond=None)[0]
    return _normalize_a1(np.concatenate([theta_ab, theta_t]))


def _covariances_are_rounding_noise(spectra: SpectralSet, bins: np.ndarray) -> bool:
    mag = np.abs(spectra.mean_current[bins])
    noise = np.sqrt(np.maximum(spectra.var_current[bins], 0.0)) + np.finfo(float).tiny
    with np.errstate(over="ignore", divide="ignore"):
        return float(np.median(mag / noise)) > _NOISELESS_SNR_GUARD


def wtls_estimate(spectra: SpectralSet, cfg: EstimationConfig) -> EstimateResult:
    """Iteratively reweighted total least squares over the selected bins.

    Iteration 0 is the unweighted TLS; each of the cfg.iterations weighted
    passes recomputes sigma_E from the previous parameters, scales rows by
    1/sigma_E, and re-solves (whitened by the noise covariance when
    cfg.noise_whitening is set and the data carries real measurement noise).
    Falls back to the unweighted estimate with a warning when only one period
    is available.
    """
    bins = cfg.selected_bins(spectra)
    regressor = build_regressor(spectra, cfg)
    omega = _regression_frequencies(spectra, bins)

    theta = _solve_tls(regressor, cfg)
    history = [_theta_cost(regressor, theta, None)]
    sigma = None
    iterations_run = 0

    if cfg.iterations > 0 and not spectra.has_covariances:
        warnings.warn(
            "noise covariances unavailable (single period); falling back to "
            "unweighted total least squares",
            stacklevel=2,
        )
    elif cfg.iterations > 0:
        whiten = cfg.noise_whitening and not _covariances_are_rounding_noise(spectra, bins)
        for _ in range(cfg.iterations):
            a_i, b_i, c_i = _split_theta(theta, cfg)
            partial = EstimateResult(
                rational=HalfOrderRational(a=a_i, b=b_i),
                transient=c_i,
                weighted_cost=np.nan,
                iterations_run=iterations_run,
                sigma_e=None,
            )
            sigma = equation_error_sigma(spectra, partial, cfg)
            weights = 1.0 / sigma
            if whiten:
                try:
                    theta = _solve_whitened(regressor, spectra, bins, omega, weights, cfg)
                except np.linalg.LinAlgError:
                    theta = _solve_tls(regressor, cfg, row_weights=weights)
            else:
                theta = _solve_tls(regressor, cfg, row_weights=weights)
            iterations_run += 1
            history.append(_theta_cost(regressor, theta, weights))

    a, b, c = _split_theta(theta, cfg)
    return EstimateResult(
        rational=HalfOrderRational(a=a, b=b),
        transient=c,
        weighted_cost=history[-1],
        iterations_run=iterations_run,
        sigma_e=sigma,
        bins=bins,
        cost_history=history,
    )


def parametric_impedance(result: EstimateResult, omegas) -> ImpedanceCurve:
    """Evaluate the estimated rational (transient excluded) on an angular-frequency grid."""
    omega = np.asarray(omegas, dtype=float)
    return ImpedanceCurve(
        freq_hz=omega / (2.0 * np.pi),
        z_ohm=eval_rational(result.rational, omega),
    )


def relative_error_curve(reference: ImpedanceCurve, estimate: ImpedanceCurve) -> np.ndarray:
    """Pointwise |Z_ref - Z_est| / |Z_ref| on a shared frequency grid.

    Points where the reference magnitude vanishes are returned as NaN with a
    warning.
    """
    if reference.freq_hz.shape != estimate.freq_hz.shape or not np.allclose(
        reference.freq_hz, estimate.freq_hz, rtol=1e-9, atol=0.0
    ):
        raise ValueError("reference and estimate are on different frequency grids")
    ref_mag = np.abs(reference.z_ohm)
    out = np.full(ref_mag.shape, np.nan)
    ok = ref_mag > 0.0
    if not np.all(ok):
        warnings.warn(
            f"skipping {int((~ok).sum())} point(s) with zero reference impedance",
            stacklevel=2,
        )
    out[ok] = np.abs(reference.z_ohm[ok] - estimate.z_ohm[ok]) / ref_mag[ok]
    return out
