"""Detector resolution, Poisson coincidence scans and Gaussian peak fitting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.interpolate import CubicSpline
from scipy.ndimage import gaussian_filter1d
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_positive, check_strictly_increasing
from .biphoton import CoincidenceMap, ConditionalSlice, conditional_slice

#: Recorded in every scan so results can be regenerated on another platform.
RNG_ALGORITHM = "numpy.random.Generator(PCG64)"
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True)
class DetectorSpec:
    """Gaussian collection profile of width ``aperture_sigma`` [m] and quantum efficiency."""

    aperture_sigma: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self):
        check_positive(self.aperture_sigma, "aperture_sigma", allow_zero=True)
        check_positive(self.efficiency, "efficiency")
        if self.efficiency > 1:
            raise ValueError("efficiency must be <= 1")


@dataclass(frozen=True)
class ScanSpec:
    positions: tuple
    fixed_position: float = 0.0
    integration_time: float = 10.0
    mean_rate_at_peak: float = 100.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(float(p) for p in check_strictly_increasing(self.positions, "positions")))
        check_positive(self.integration_time, "integration_time")
        check_positive(self.mean_rate_at_peak, "mean_rate_at_peak")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ValueError("rng_seed must be a non-negative integer")


@dataclass
class GaussianFit:
    """``amplitude * exp(-(x - center)^2 / (2 sigma^2)) + offset`` with 1-sigma errors."""

    amplitude: float = np.nan
    center: float = np.nan
    sigma: float = np.nan
    offset: float = np.nan
    amplitude_err: float = np.nan
    center_err: float = np.nan
    sigma_err: float = np.nan
    offset_err: float = np.nan
    chi2_reduced: float = np.nan
    converged: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScanResult:
    positions: np.ndarray
    counts: np.ndarray
    count_errors: np.ndarray
    fit: GaussianFit
    expected: np.ndarray = field(repr=False, default=None)
    metadata: dict = field(default_factory=dict)


def _blur_axis(values: np.ndarray, sigma: float, step: float, axis: int) -> np.ndarray:
    if sigma == 0:
        return values
    if sigma < 2.0 * step:
        raise ValueError(
            f"aperture sigma {sigma:.3g} m is under-resolved by the grid pitch {step:.3g} m (need >= 2 samples)"
        )
    # wrap keeps the total probability exactly, consistent with the periodic grid
    return gaussian_filter1d(values, sigma / step, axis=axis, mode="wrap", truncate=8.0)


def blur(obj, detector1: DetectorSpec, detector2: DetectorSpec | None = None):
    """Convolve intensities with the detectors' Gaussian collection profiles.

    For a :class:`CoincidenceMap`, ``detector1`` acts on the signal axis and
    ``detector2`` on the idler axis.  For a :class:`ConditionalSlice` only
    ``detector1`` is used (the scanned detector).
    """
    if isinstance(obj, CoincidenceMap):
        det2 = detector1 if detector2 is None else detector2
        v = _blur_axis(obj.values, detector1.aperture_sigma, obj.grid1.step(obj.domains[0]), 0)
        v = _blur_axis(v, det2.aperture_sigma, obj.grid2.step(obj.domains[1]), 1)
        return obj.with_values(v)
    if isinstance(obj, ConditionalSlice):
        v = _blur_axis(obj.values, detector1.aperture_sigma, obj.grid.step(obj.domain), 0)
        return ConditionalSlice(obj.grid, obj.domain, v, obj.fixed_arm, obj.fixed_coordinate, obj.fixed_index, obj.off_grid)
    raise TypeError(f"cannot blur {type(obj).__name__}")


def expected_profile(cmap: CoincidenceMap, spec: ScanSpec, detectors=(DetectorSpec(), DetectorSpec())):
    """Blurred conditional idler distribution with the signal fixed; returns (slice, rates at positions)."""
    signal_det, idler_det = detectors
    blurred = blur(cmap, signal_det, idler_det)
    sl = conditional_slice(blurred, "signal", spec.fixed_position)
    x = sl.coords
    pos = np.asarray(spec.positions)
    if pos[0] < x[0] or pos[-1] > x[-1]:
        raise ValueError("scan positions leave the detection grid")
    shape = np.clip(CubicSpline(x, sl.values)(pos), 0.0, None) / sl.values.max()
    rates = spec.mean_rate_at_peak * signal_det.efficiency * idler_det.efficiency * shape
    return sl, rates


def simulate_scan(
    cmap: CoincidenceMap,
    spec: ScanSpec,
    detectors=(DetectorSpec(), DetectorSpec()),
    metadata: dict | None = None,
) -> ScanResult:
    """Poisson coincidence counts of the idler scan with the signal detector fixed.

    The expected rate is ``mean_rate_at_peak`` times the blurred conditional
    profile relative to its maximum (and the detector efficiencies).  Counts
    are drawn from a PCG64 generator seeded with ``spec.rng_seed``.
    """
    _, rates = expected_profile(cmap, spec, detectors)
    expected = rates * spec.integration_time
    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    counts = rng.poisson(expected).astype(np.int64)
    errors = np.sqrt(np.maximum(counts, 1))
    positions = np.asarray(spec.positions)
    fit = fit_gaussian(positions, counts, errors)
    meta = {
        "seed": int(spec.rng_seed),
        "rng": RNG_ALGORITHM,
        "integration_time_s": spec.integration_time,
        "fixed_position_m": spec.fixed_position,
    }
    meta.update(metadata or {})
    return ScanResult(positions, counts, errors, fit, expected, meta)


def peak_location(coords, values) -> float:
    """Sub-sample position of the maximum of a sampled profile (cubic-spline refinement)."""
    x = np.asarray(coords, dtype=float)
    y = np.asarray(values, dtype=float)
    j = int(np.argmax(y))
    if j == 0 or j == y.size - 1:
        return float(x[j])
    lo, hi = max(j - 4, 0), min(j + 5, y.size)
    spline = CubicSpline(x[lo:hi], y[lo:hi])
    res = optimize.minimize_scalar(lambda t: -spline(t), bounds=(x[j - 1], x[j + 1]), method="bounded",
                                   options={"xatol": 1e-6 * abs(x[1] - x[0])})
    return float(res.x)


def half_max_width(coords, values) -> float:
    """Full width at half maximum with linear interpolation of the crossings."""
    x = np.asarray(coords, dtype=float)
    y = np.asarray(values, dtype=float)
    j = int(np.argmax(y))
    half = 0.5 * y[j]
    left, right = x[0], x[-1]
    for i in range(j, 0, -1):
        if y[i - 1] < half <= y[i]:
            left = x[i - 1] + (half - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
            break
    for i in range(j, y.size - 1):
        if y[i + 1] < half <= y[i]:
            right = x[i] + (y[i] - half) * (x[i + 1] - x[i]) / (y[i] - y[i + 1])
            break
    return float(right - left)


def _gauss(x, amplitude, center, sigma, offset):
    return amplitude * np.exp(-((x - center) ** 2) / (2.0 * sigma**2)) + offset


def initial_guess(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Amplitude max-min, center at the maximum, sigma from the half-maximum crossings, offset min."""
    lo, hi = float(y.min()), float(y.max())
    j = int(np.argmax(y))
    half = lo + 0.5 * (hi - lo)
    left = right = None
    for i in range(j, 0, -1):
        if y[i - 1] < half <= y[i]:
            left = x[i - 1] + (half - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
            break
    for i in range(j, len(y) - 1):
        if y[i + 1] < half <= y[i]:
            right = x[i] + (y[i] - half) * (x[i + 1] - x[i]) / (y[i] - y[i + 1])
            break
    if left is not None and right is not None:
        fwhm = right - left
    elif left is not None:
        fwhm = 2.0 * (x[j] - left)
    elif right is not None:
        fwhm = 2.0 * (right - x[j])
    else:
        fwhm = 0.5 * (x[-1] - x[0])
    sigma = max(fwhm, np.min(np.diff(x))) / FWHM_PER_SIGMA
    return np.array([hi - lo, x[j], sigma, lo])


class GaussianPeakRegressor(RegressorMixin, BaseEstimator):
    """Weighted least-squares fit of a Gaussian peak on a constant background.

    Parameters
    ----------
    p0 : array-like of shape (4,), optional
        Starting ``(amplitude, center, sigma, offset)``; by default taken from
        :func:`initial_guess`.
    max_nfev : int
        Evaluation budget; running out leaves ``converged_`` False.
    tol : float
        ``xtol``, ``ftol`` and ``gtol`` passed to the Levenberg-Marquardt solver.

    Attributes
    ----------
    params_ : ndarray of shape (4,)
    covariance_ : ndarray of shape (4, 4)
        Inverse of ``J^T W J`` at the optimum (absolute weights, not rescaled by chi2).
    perr_ : ndarray of shape (4,)
    chi2_reduced_ : float
    converged_ : bool
    """

    def __init__(self, p0=None, max_nfev=2000, tol=1e-15):
        self.p0 = p0
        self.max_nfev = max_nfev
        self.tol = tol

    def fit(self, X, y, y_err=None):
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1)).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError("X and y have different lengths")
        if x.size < 5:
            raise ValueError("a Gaussian fit needs at least 5 points")
        err = np.ones_like(y) if y_err is None else np.asarray(y_err, dtype=float).ravel()
        if err.shape != y.shape or np.any(err <= 0):
            raise ValueError("y_err must be positive and match y")

        self.n_features_in_ = 1
        self.params_ = np.full(4, np.nan)
        self.covariance_ = np.full((4, 4), np.nan)
        self.perr_ = np.full(4, np.nan)
        self.chi2_reduced_ = np.nan
        self.converged_ = False
        self.message_ = ""

        if np.ptp(y) == 0:
            self.message_ = "flat data: no peak to fit"
            return self

        p0 = initial_guess(x, y) if self.p0 is None else np.asarray(self.p0, dtype=float)
        # solve in standardized units so conditioning does not depend on the physical scale
        xs = max(float(np.ptp(x)), np.finfo(float).tiny)
        ys = float(np.max(np.abs(y))) or 1.0
        xm = float(np.mean(x))
        u = (x - xm) / xs
        v = y / ys
        w = ys / err
        scale = np.array([ys, xs, xs, ys])
        shift = np.array([0.0, xm, 0.0, 0.0])
        p0u = (p0 - shift) / scale

        def residuals(p):
            return (_gauss(u, *p) - v) * w

        def jac(p):
            a, c, s, _ = p
            e = np.exp(-((u - c) ** 2) / (2.0 * s**2))
            cols = [e, a * e * (u - c) / s**2, a * e * (u - c) ** 2 / s**3, np.ones_like(u)]
            return np.column_stack(cols) * w[:, None]

        try:
            res = optimize.least_squares(
                residuals, p0u, jac=jac, method="lm", xtol=self.tol, ftol=self.tol, gtol=self.tol, max_nfev=self.max_nfev
            )
        except (ValueError, np.linalg.LinAlgError) as exc:
            self.message_ = f"solver failed: {exc}"
            return self

        pu = res.x.copy()
        pu[2] = abs(pu[2])
        self.params_ = pu * scale + shift
        self.n_iter_ = res.nfev
        self.message_ = res.message
        dof = max(x.size - 4, 1)
        self.chi2_reduced_ = float(np.sum(res.fun**2) / dof)
        jtj = res.jac.T @ res.jac
        try:
            cov_u = np.linalg.inv(jtj)
        except np.linalg.LinAlgError:
            self.message_ = "singular normal matrix"
            return self
        if np.linalg.cond(jtj) > 1e14 or not np.all(np.isfinite(cov_u)) or np.any(np.diag(cov_u) < 0):
            self.message_ = "ill-conditioned covariance"
            return self
        self.covariance_ = cov_u * np.outer(scale, scale)
        self.perr_ = np.sqrt(np.diag(self.covariance_))
        self.converged_ = bool(res.status > 0 and np.all(np.isfinite(self.params_)) and self.params_[2] > 0)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1)).ravel()
        return _gauss(x, *self.params_)

    def to_fit(self) -> GaussianFit:
        check_is_fitted(self, "params_")
        p, e = self.params_, self.perr_
        return GaussianFit(
            amplitude=float(p[0]), center=float(p[1]), sigma=float(p[2]), offset=float(p[3]),
            amplitude_err=float(e[0]), center_err=float(e[1]), sigma_err=float(e[2]), offset_err=float(e[3]),
            chi2_reduced=float(self.chi2_reduced_), converged=bool(self.converged_), message=str(self.message_),
        )


def fit_gaussian(positions, counts, errors=None, p0=None) -> GaussianFit:
    """Fit a Gaussian peak to a scan; degenerate data yields ``converged=False``."""
    return GaussianPeakRegressor(p0=p0).fit(positions, counts, errors).to_fit()


def variance_from_fit(fit: GaussianFit) -> tuple[float, float]:
    """``(sigma^2, 2 sigma delta_sigma)`` from a converged fit."""
    if not fit.converged:
        raise ValueError("cannot take a variance from an unconverged fit")
    return fit.sigma**2, 2.0 * fit.sigma * fit.sigma_err


def moment_variance(positions: Sequence[float], weights: Sequence[float]) -> float:
    """Plain second central moment of a sampled profile, for comparison with the fit."""
    x = np.asarray(positions, dtype=float)
    w = np.clip(np.asarray(weights, dtype=float), 0, None)
    w = w / w.sum()
    m = np.dot(w, x)
    return float(np.dot(w, (x - m) ** 2))
