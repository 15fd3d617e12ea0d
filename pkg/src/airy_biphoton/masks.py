"""Complex transmittance masks for the spatial light modulator.

The Airy mask is the spectrum of a finite-energy Airy beam,

    t(q) = exp(i (x0 q)^3 / 3) * exp(-a (x0 q)^2) * exp(-i q^2 Z / (2 k)),

optionally multiplied by a super-Gaussian aperture in ``x0*q``.  With
``a = 0``, ``Z = 0`` and no aperture this is exactly the Fourier transform of
``Ai(x / x0)`` (divided by ``x0``).  The last factor is the free-space transfer
phase, so a mask with parameter ``Z`` behaves like the ``Z = 0`` mask followed
by an extra propagation distance ``Z``.

A mask lives either in the wavenumber domain (multiplies the spectrum) or in
the position domain.  A position-domain Airy mask is meant to sit in the front
focal plane of a Fourier lens of focal length ``focal``: sample ``xi`` carries
``t(-k xi / focal)`` so the lens output is the Airy beam itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import GridMismatchError, SamplingError, check_finite_array, check_positive
from .grid import ComplexField, Domain, TransverseGrid, to_position_array, to_wavenumber_array

#: Fraction of the peak spectral intensity below which samples do not count
#: as occupied when checking phase sampling.
BAND_THRESHOLD = 1e-10
APERTURE_ORDER = 12


@dataclass(frozen=True)
class AiryMaskSpec:
    """Parameters of the cubic-phase (Fourier-of-Airy) mask.

    Parameters
    ----------
    x0 : float
        Transverse Airy scale [m].
    wavenumber : float
        Optical wavenumber ``2*pi/lambda`` [1/m].
    a : float
        Finite-energy apodization (dimensionless, >= 0).
    Z : float
        Virtual propagation distance folded into the mask [m].
    aperture : float or None
        Half-width of the active area in the normalized spectral coordinate
        ``x0*q``; super-Gaussian edge.  ``None`` means unlimited.
    """

    x0: float
    wavenumber: float
    a: float = 0.05
    Z: float = 0.0
    aperture: float | None = None

    def __post_init__(self):
        check_positive(self.x0, "x0")
        check_positive(self.wavenumber, "wavenumber")
        check_positive(self.a, "a", allow_zero=True)
        check_positive(self.Z, "Z", allow_zero=True)
        if self.aperture is not None:
            check_positive(self.aperture, "aperture")

    def transmittance(self, q) -> np.ndarray:
        t = self.x0 * np.asarray(q, dtype=float)
        out = np.exp(1j * t**3 / 3.0 - self.a * t**2 - 1j * np.asarray(q) ** 2 * self.Z / (2.0 * self.wavenumber))
        if self.aperture is not None:
            out = out * np.exp(-((t / self.aperture) ** APERTURE_ORDER))
        return out

    def phase_slope(self, q) -> np.ndarray:
        """Derivative of the mask phase with respect to ``q`` [m]."""
        q = np.asarray(q, dtype=float)
        return self.x0**3 * q**2 - q * self.Z / self.wavenumber

    def peak_shift(self, distance: float = 0.0) -> float:
        """Ballistic displacement of the main lobe after ``Z + distance`` of propagation."""
        zeff = self.Z + distance
        return zeff**2 / (4.0 * self.wavenumber**2 * self.x0**3)


@dataclass(frozen=True)
class Mask:
    """Passive complex transmittance sampled on a grid.

    ``phase_step`` optionally holds the analytic per-sample phase increment,
    used to detect unresolved phases where the illuminating field lives.
    """

    grid: TransverseGrid
    transmittance: np.ndarray = field(repr=False)
    domain: Domain = "position"
    phase_step: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        t = check_finite_array(self.transmittance, "transmittance", ndim=1)
        if t.shape[0] != self.grid.n:
            raise ValueError("transmittance length does not match grid")
        if np.max(np.abs(t)) > 1.0 + 1e-12:
            raise ValueError("mask is not passive: |t| > 1")
        t.setflags(write=False)
        object.__setattr__(self, "transmittance", t)
        if self.phase_step is not None:
            step = np.asarray(self.phase_step, dtype=float)
            step.setflags(write=False)
            object.__setattr__(self, "phase_step", step)

    @property
    def coords(self) -> np.ndarray:
        return self.grid.coords(self.domain)


def airy_mask(
    spec: AiryMaskSpec,
    grid: TransverseGrid,
    domain: Domain = "wavenumber",
    focal: float | None = None,
    band: float | None = None,
) -> Mask:
    """Sample an Airy mask on ``grid``.

    Parameters
    ----------
    spec : AiryMaskSpec
    grid : TransverseGrid
    domain : {"wavenumber", "position"}
        Where the mask multiplies the field.
    focal : float, optional
        Focal length of the Fourier lens behind a position-domain mask [m].
    band : float, optional
        If given, require the cubic phase to be resolved (per-sample step
        below pi) for all ``|q| <= band`` [1/m]; raises :class:`SamplingError`.
    """
    if domain == "wavenumber":
        qv = grid.q
        dq_sample = grid.dq
    elif domain == "position":
        if focal is None:
            raise ValueError("a position-domain Airy mask needs the lens focal length")
        check_positive(focal, "focal")
        qv = -spec.wavenumber * grid.x / focal
        dq_sample = spec.wavenumber * grid.dx / focal
    else:
        raise ValueError(f"unknown domain {domain!r}")

    step = np.abs(spec.phase_slope(qv)) * dq_sample
    if band is not None:
        inside = np.abs(qv) <= band
        if np.any(step[inside] >= np.pi):
            worst = float(step[inside].max())
            raise SamplingError(
                f"Airy mask phase step {worst:.3g} rad per sample within |q| <= {band:.3g} exceeds pi"
            )
    return Mask(grid, spec.transmittance(qv), domain, phase_step=step)


def ones_mask(grid: TransverseGrid, domain: Domain = "position") -> Mask:
    return Mask(grid, np.ones(grid.n, dtype=complex), domain)


def slit_mask(grid: TransverseGrid, lo: float, hi: float, domain: Domain = "position") -> Mask:
    """Binary aperture transmitting ``lo <= coordinate <= hi``."""
    c = grid.coords(domain)
    return Mask(grid, ((c >= lo) & (c <= hi)).astype(complex), domain)


def _same_grid(a: TransverseGrid, b: TransverseGrid) -> bool:
    return a.n == b.n and np.isclose(a.dx, b.dx, rtol=1e-12, atol=0) and np.isclose(a.center, b.center, rtol=0, atol=1e-12 * a.dx)


def check_mask_sampling(spec_intensity: np.ndarray, mask: Mask) -> None:
    """Raise :class:`SamplingError` if the mask phase aliases where light is present.

    ``spec_intensity`` is the illuminating intensity in the mask's domain,
    already reduced to 1D.
    """
    if mask.phase_step is None:
        return
    weight = spec_intensity * np.abs(mask.transmittance) ** 2
    peak = weight.max()
    if peak <= 0:
        return
    occupied = weight > BAND_THRESHOLD * peak
    worst = float(mask.phase_step[occupied].max())
    if worst >= np.pi:
        raise SamplingError(f"mask phase step reaches {worst:.3g} rad per sample on the illuminated band")


def apply_mask_array(
    values: np.ndarray,
    grid: TransverseGrid,
    mask: Mask,
    axis: int = -1,
    check_sampling: bool = True,
) -> np.ndarray:
    """Multiply position-domain samples ``values`` by ``mask`` along ``axis``."""
    if not _same_grid(grid, mask.grid):
        raise GridMismatchError(f"mask grid {mask.grid} does not match field grid {grid}")
    shape = [1] * values.ndim
    shape[axis] = grid.n
    t = mask.transmittance.reshape(shape)
    other = tuple(i for i in range(values.ndim) if i != axis % values.ndim)
    if mask.domain == "position":
        if check_sampling:
            check_mask_sampling(np.sum(np.abs(values) ** 2, axis=other), mask)
        return values * t
    spec = to_wavenumber_array(values, grid, axis=axis)
    if check_sampling:
        check_mask_sampling(np.sum(np.abs(spec) ** 2, axis=other), mask)
    return to_position_array(spec * t, grid, axis=axis)


def apply_mask(field: ComplexField, mask: Mask, check_sampling: bool = True) -> ComplexField:
    """Pointwise product with ``mask`` in the mask's own domain; returns the field's domain."""
    domain = field.domain
    out = apply_mask_array(field.to_position().values, field.grid, mask, check_sampling=check_sampling)
    result = ComplexField(field.grid, out, "position")
    return result if domain == "position" else result.to_wavenumber()
