"""Continuous-variable separability witnesses from coincidence data.

Separable states obey ``Var(x1 - x2) * Var(p1 + p2) >= 1`` (product form) and
``Var(x1 - x2) + Var(p1 + p2) >= 2`` (sum form) in dimensionless units where
``x = X / x_scale`` and ``p = q * x_scale``, so ``|[x, p]|^2 = 1``.  Every
"Var" here is a variance, not a standard deviation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_positive
from .biphoton import CoincidenceMap
from .measurement import ScanResult, variance_from_fit

MGVT_BOUND = 1.0
DUAN_BOUND = 2.0
#: Correlation coefficient beyond which a wrong-signed correlation is an error.
SIGN_TOLERANCE = 0.5


@dataclass(frozen=True)
class UnitConvention:
    x_scale: float

    def __post_init__(self):
        check_positive(self.x_scale, "x_scale")

    @property
    def p_scale(self) -> float:
        return 1.0 / self.x_scale


@dataclass
class WitnessResult:
    var_x_minus: float
    var_p_plus: float
    value: float
    uncertainty: float
    violated: bool
    bound: float
    form: str = "mgvt"
    var_x_err: float = 0.0
    var_p_err: float = 0.0
    correlation_signs: tuple = (1, -1)
    convention: str = "variance"

    @property
    def product(self) -> float:
        return self.var_x_minus * self.var_p_plus

    @property
    def significance(self) -> float | None:
        """``(bound - value) / uncertainty``; ``None`` for exact (map-level) results."""
        if self.uncertainty <= 0:
            return None
        return (self.bound - self.value) / self.uncertainty

    def to_dict(self) -> dict:
        d = asdict(self)
        d["correlation_signs"] = {"position": int(self.correlation_signs[0]), "momentum": int(self.correlation_signs[1])}
        d["significance"] = self.significance
        return d


def _pair_moments(cmap: CoincidenceMap, scale) -> tuple[float, float, float, float]:
    """Variance of the difference, variance of the sum and the correlation coefficient."""
    p = cmap.values
    total = p.sum()
    if not np.isclose(total, 1.0, rtol=0, atol=1e-9):
        raise ValueError(f"coincidence map is not normalized (sum = {total:.12g})")
    if np.any(p < 0):
        raise ValueError("coincidence map has negative entries")
    x1 = cmap.x1 * scale[0]
    x2 = cmap.x2 * scale[1]
    m1, m2 = p.sum(axis=1), p.sum(axis=0)
    e1, e2 = m1 @ x1, m2 @ x2
    v1 = m1 @ (x1 - e1) ** 2
    v2 = m2 @ (x2 - e2) ** 2
    cov = (x1 - e1) @ p @ (x2 - e2)
    corr = cov / np.sqrt(v1 * v2) if v1 > 0 and v2 > 0 else 0.0
    return v1 + v2 - 2 * cov, v1 + v2 + 2 * cov, float(corr), float(cov)


def _map_variances(position_map, momentum_map, units, position_scale, momentum_scale, check_signs):
    var_xm, _, corr_x, _ = _pair_moments(position_map, position_scale)
    _, var_pp, corr_p, _ = _pair_moments(momentum_map, momentum_scale)
    if check_signs:
        if corr_x < -SIGN_TOLERANCE:
            raise ValueError(
                f"positions are anti-correlated (r = {corr_x:.2f}); x1 - x2 is the wrong combination, "
                "check image inversion of the arms"
            )
        if corr_p > SIGN_TOLERANCE:
            raise ValueError(
                f"momenta are correlated (r = {corr_p:.2f}); p1 + p2 is the wrong combination, "
                "check image inversion of the arms"
            )
    signs = (int(np.sign(corr_x)) or 1, int(np.sign(corr_p)) or -1)
    return var_xm / units.x_scale**2, var_pp * units.x_scale**2, signs


def witness_from_map(
    position_map: CoincidenceMap,
    momentum_map: CoincidenceMap,
    units: UnitConvention,
    position_scale=(1.0, 1.0),
    momentum_scale=(1.0, 1.0),
    check_signs: bool = True,
) -> WitnessResult:
    """Product-form witness from exact coincidence maps.

    Parameters
    ----------
    position_map, momentum_map : CoincidenceMap
        Normalized maps.  Their coordinates are multiplied by
        ``position_scale`` (per arm) to give source-plane positions [m] and by
        ``momentum_scale`` to give source-plane wavenumbers [1/m]; use
        :meth:`OpticalSystem.coordinate_scale` for detector-plane maps.
    units : UnitConvention
    check_signs : bool
        Raise if the positions are clearly anti-correlated or the momenta
        clearly correlated, i.e. the data calls for the other combination.
    """
    vx, vp, signs = _map_variances(position_map, momentum_map, units, position_scale, momentum_scale, check_signs)
    value = vx * vp
    return WitnessResult(vx, vp, value, 0.0, bool(value < MGVT_BOUND), MGVT_BOUND, "mgvt", correlation_signs=signs)


def duan_witness(
    position_map: CoincidenceMap,
    momentum_map: CoincidenceMap,
    units: UnitConvention,
    position_scale=(1.0, 1.0),
    momentum_scale=(1.0, 1.0),
    check_signs: bool = True,
) -> WitnessResult:
    """Sum-form witness ``Var(x1 - x2) + Var(p1 + p2) >= 2``; not scale-free."""
    vx, vp, signs = _map_variances(position_map, momentum_map, units, position_scale, momentum_scale, check_signs)
    value = vx + vp
    return WitnessResult(vx, vp, value, 0.0, bool(value < DUAN_BOUND), DUAN_BOUND, "duan", correlation_signs=signs)


REQUIRED_OPTICS = ("magnification", "focal", "wavelength")


def witness_from_scans(
    position_scan: ScanResult,
    momentum_scan: ScanResult,
    units: UnitConvention,
    optics: dict | None,
) -> WitnessResult:
    """Product-form witness from fitted conditional scans.

    The fitted conditional variances stand in for ``Var(x1 - x2)`` and
    ``Var(p1 + p2)``, as in a scan with one detector fixed.  Detector
    coordinates are converted with ``x = x_det / M`` and ``q = k x_det / f``.
    """
    if not optics or any(optics.get(key) is None for key in REQUIRED_OPTICS):
        raise ValueError(f"optics metadata must provide {REQUIRED_OPTICS}")
    m = float(optics["magnification"])
    f = check_positive(float(optics["focal"]), "focal")
    k = 2.0 * np.pi / check_positive(float(optics["wavelength"]), "wavelength")
    if m == 0:
        raise ValueError("magnification must be non-zero")
    for name, scan in (("position", position_scan), ("momentum", momentum_scan)):
        if not scan.fit.converged:
            raise ValueError(f"{name} scan fit did not converge")

    vx_det, dvx_det = variance_from_fit(position_scan.fit)
    vp_det, dvp_det = variance_from_fit(momentum_scan.fit)
    cx = 1.0 / (m**2 * units.x_scale**2)
    cp = (k / f) ** 2 * units.x_scale**2
    vx, dvx = vx_det * cx, dvx_det * cx
    vp, dvp = vp_det * cp, dvp_det * cp
    value = vx * vp
    unc = value * np.hypot(dvx / vx, dvp / vp)
    return WitnessResult(vx, vp, value, float(unc), bool(value < MGVT_BOUND), MGVT_BOUND, "mgvt", dvx, dvp)


class SeparabilityWitness(BaseEstimator):
    """Estimator wrapper around :func:`witness_from_map` / :func:`duan_witness`.

    Parameters
    ----------
    x_scale : float
        Position nondimensionalization length [m].
    form : {"mgvt", "duan"}
    check_signs : bool

    Attributes
    ----------
    result_ : WitnessResult
    value_ : float
    violated_ : bool
    """

    def __init__(self, x_scale=1.0, form="mgvt", check_signs=True):
        self.x_scale = x_scale
        self.form = form
        self.check_signs = check_signs

    def fit(self, position_map, momentum_map, position_scale=(1.0, 1.0), momentum_scale=(1.0, 1.0)):
        if self.form not in ("mgvt", "duan"):
            raise ValueError(f"form must be 'mgvt' or 'duan', got {self.form!r}")
        func = witness_from_map if self.form == "mgvt" else duan_witness
        self.result_ = func(
            position_map, momentum_map, UnitConvention(self.x_scale), position_scale, momentum_scale, self.check_signs
        )
        self.value_ = self.result_.value
        self.violated_ = self.result_.violated
        return self
