"""Two-photon transverse amplitude on a pair of grids.

The source amplitude is the double Gaussian

    c(q1, q2) = N exp(-(q1 + q2)^2 / (4 s+^2)) exp(-(q1 - q2)^2 / (4 s-^2)),

which is a product state when ``s+ == s-``.  Row index is the signal photon,
column index the idler.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import linalg

from ._validation import check_finite_array, check_positive
from .grid import DOMAINS, Domain, TransverseGrid, to_position_array, to_wavenumber_array
from .propagation import OpticalSystem

logger = logging.getLogger(__name__)

Arm = Literal["signal", "idler"]
ARMS = {"signal": 0, "idler": 1}


@dataclass(frozen=True)
class SourceSpec:
    """Source model.

    ``kind`` is ``"gaussian"`` (finite correlation widths) or ``"ideal_epr"``,
    the narrowest momentum anti-correlation the grid can represent
    (``sigma_plus`` is replaced by ``2*dq``).
    """

    kind: Literal["gaussian", "ideal_epr"] = "gaussian"
    sigma_plus: float | None = None
    sigma_minus: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "ideal_epr"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        check_positive(self.sigma_minus, "sigma_minus")
        if self.kind == "gaussian":
            if self.sigma_plus is None:
                raise ValueError("a Gaussian source needs sigma_plus")
            check_positive(self.sigma_plus, "sigma_plus")

    @property
    def ratio(self) -> float:
        return self.sigma_minus / self.sigma_plus


@dataclass(frozen=True)
class BiphotonAmplitude:
    grid1: TransverseGrid
    grid2: TransverseGrid
    amp: np.ndarray = field(repr=False)
    domains: tuple = ("position", "position")

    def __post_init__(self):
        amp = check_finite_array(self.amp, "amp", ndim=2)
        if amp.shape != (self.grid1.n, self.grid2.n):
            raise ValueError(f"amp shape {amp.shape} does not match grids ({self.grid1.n}, {self.grid2.n})")
        if any(d not in DOMAINS for d in self.domains):
            raise ValueError(f"bad domains {self.domains}")
        if not np.any(amp):
            raise ValueError("biphoton amplitude is identically zero")
        amp.setflags(write=False)
        object.__setattr__(self, "amp", amp)
        object.__setattr__(self, "domains", tuple(self.domains))

    def grid(self, axis: int) -> TransverseGrid:
        return self.grid1 if axis == 0 else self.grid2

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2) * self.grid1.step(self.domains[0]) * self.grid2.step(self.domains[1]))

    def normalized(self) -> "BiphotonAmplitude":
        return BiphotonAmplitude(self.grid1, self.grid2, self.amp / np.sqrt(self.norm()), self.domains)

    def in_domain(self, axis: int, domain: Domain) -> "BiphotonAmplitude":
        if self.domains[axis] == domain:
            return self
        g = self.grid(axis)
        if domain == "position":
            amp = to_position_array(self.amp, g, axis=axis)
        else:
            amp = to_wavenumber_array(self.amp, g, axis=axis)
        domains = list(self.domains)
        domains[axis] = domain
        return BiphotonAmplitude(self.grid1, self.grid2, amp, tuple(domains))

    def to_position(self) -> "BiphotonAmplitude":
        return self.in_domain(0, "position").in_domain(1, "position")

    def to_wavenumber(self) -> "BiphotonAmplitude":
        return self.in_domain(0, "wavenumber").in_domain(1, "wavenumber")


def _check_resolved(sigma: float, grid: TransverseGrid, name: str) -> None:
    # full width 2*sigma must span >= 8 samples in q, and the conjugate width 2/sigma >= 8 samples in x
    if 2.0 * sigma < 8.0 * grid.dq:
        raise ValueError(f"{name} = {sigma:.4g} 1/m is under-resolved: need >= {4 * grid.dq:.4g} (4 dq)")
    if 2.0 / sigma < 8.0 * grid.dx:
        raise ValueError(f"{name} = {sigma:.4g} 1/m is too wide for the grid: need <= {1 / (4 * grid.dx):.4g} (1/(4 dx))")


def make_source(spec: SourceSpec, grid1: TransverseGrid, grid2: TransverseGrid) -> BiphotonAmplitude:
    """Normalized source amplitude in the wavenumber domain on both arms."""
    for g in (grid1, grid2):
        _check_resolved(spec.sigma_minus, g, "sigma_minus")
    if spec.kind == "ideal_epr":
        sigma_plus = 2.0 * max(grid1.dq, grid2.dq)
    else:
        sigma_plus = spec.sigma_plus
        for g in (grid1, grid2):
            _check_resolved(sigma_plus, g, "sigma_plus")
    q1 = grid1.q[:, None]
    q2 = grid2.q[None, :]
    amp = np.exp(-((q1 + q2) ** 2) / (4.0 * sigma_plus**2) - (q1 - q2) ** 2 / (4.0 * spec.sigma_minus**2))
    return BiphotonAmplitude(grid1, grid2, amp, ("wavenumber", "wavenumber")).normalized()


def apply_arm(state: BiphotonAmplitude, arm: Arm, system: OpticalSystem, check_sampling: bool = True) -> BiphotonAmplitude:
    """Apply a single-arm optical system to the signal (rows) or idler (columns)."""
    if arm not in ARMS:
        raise ValueError(f"arm must be 'signal' or 'idler', got {arm!r}")
    axis = ARMS[arm]
    s = state.in_domain(axis, "position")
    values, grid = system.apply_array(s.amp, s.grid(axis), axis=axis, check_sampling=check_sampling)
    grids = [s.grid1, s.grid2]
    grids[axis] = grid
    domains = list(s.domains)
    domains[axis] = "position"
    return BiphotonAmplitude(grids[0], grids[1], values, tuple(domains))


@dataclass(frozen=True)
class CoincidenceMap:
    """Coincidence probabilities ``|c|^2`` normalized to unit sum."""

    grid1: TransverseGrid
    grid2: TransverseGrid
    values: np.ndarray = field(repr=False)
    domains: tuple = ("position", "position")

    def __post_init__(self):
        v = check_finite_array(self.values, "values", dtype=float, ndim=2)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def x1(self) -> np.ndarray:
        return self.grid1.coords(self.domains[0])

    @property
    def x2(self) -> np.ndarray:
        return self.grid2.coords(self.domains[1])

    def with_values(self, values) -> "CoincidenceMap":
        return CoincidenceMap(self.grid1, self.grid2, values, self.domains)


def coincidence_map(state: BiphotonAmplitude) -> CoincidenceMap:
    p = np.abs(state.amp) ** 2
    total = p.sum()
    if total <= 0:
        raise ValueError("zero coincidence probability")
    return CoincidenceMap(state.grid1, state.grid2, p / total, state.domains)


@dataclass(frozen=True)
class ConditionalSlice:
    """Distribution of one photon with the partner detector held fixed."""

    grid: TransverseGrid
    domain: Domain
    values: np.ndarray = field(repr=False)
    fixed_arm: str = "signal"
    fixed_coordinate: float = 0.0
    fixed_index: int = 0
    off_grid: bool = False

    @property
    def coords(self) -> np.ndarray:
        return self.grid.coords(self.domain)


def conditional_slice(cmap: CoincidenceMap, fixed_arm: Arm, fixed_coordinate: float) -> ConditionalSlice:
    """Row/column of ``cmap`` at the nearest sample to ``fixed_coordinate``, normalized to unit sum."""
    if fixed_arm not in ARMS:
        raise ValueError(f"fixed_arm must be 'signal' or 'idler', got {fixed_arm!r}")
    axis = ARMS[fixed_arm]
    fixed_grid = cmap.grid1 if axis == 0 else cmap.grid2
    domain = cmap.domains[axis]
    coords = fixed_grid.coords(domain)
    step = fixed_grid.step(domain)
    if not coords[0] - 0.5 * step <= fixed_coordinate <= coords[-1] + 0.5 * step:
        raise ValueError(f"fixed coordinate {fixed_coordinate} outside the grid [{coords[0]}, {coords[-1]}]")
    j = fixed_grid.nearest_index(fixed_coordinate, domain)
    off = abs(coords[j] - fixed_coordinate) > 1e-9 * step
    if off:
        logger.warning("fixed coordinate %g is off-grid; using nearest sample %g", fixed_coordinate, coords[j])
    row = cmap.values[j, :] if axis == 0 else cmap.values[:, j]
    total = row.sum()
    if total <= 0:
        raise ValueError("conditional slice carries no probability")
    other = 1 - axis
    return ConditionalSlice(
        grid=cmap.grid2 if other == 1 else cmap.grid1,
        domain=cmap.domains[other],
        values=row / total,
        fixed_arm=fixed_arm,
        fixed_coordinate=float(coords[j]),
        fixed_index=j,
        off_grid=bool(off),
    )


def schmidt_spectrum(state: BiphotonAmplitude) -> np.ndarray:
    """Singular values of the amplitude matrix, descending, with ``sum(s**2) == 1``."""
    s = linalg.svdvals(state.amp)
    return s / np.sqrt(np.sum(s**2))


def schmidt_number(spectrum: np.ndarray) -> float:
    """``K = 1 / sum(lambda^4)`` for singular values ``lambda``."""
    return float(1.0 / np.sum(np.asarray(spectrum) ** 4))


def gaussian_schmidt_spectrum(ratio: float, count: int) -> np.ndarray:
    """Closed-form Schmidt singular values of the double Gaussian with ``ratio = s-/s+``."""
    mu = abs(ratio - 1.0) / (ratio + 1.0)
    probs = (1.0 - mu**2) * mu ** (2 * np.arange(count))
    return np.sqrt(probs)
