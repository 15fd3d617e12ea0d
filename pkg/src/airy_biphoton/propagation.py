"""Paraxial single-arm optics: Fresnel propagation, Fourier lens, imaging.

The main path multiplies the spectrum by the Fresnel transfer function
``exp(-i q^2 z / (2 k))``.  :func:`propagate_quadrature` sums the Fresnel
convolution kernel directly and is only meant as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ._validation import SamplingError, check_positive
from .grid import ComplexField, TransverseGrid, make_grid, to_position_array, to_wavenumber_array
from .masks import BAND_THRESHOLD, Mask, apply_mask_array


def _reshape_along(vec: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vec.shape[0]
    return vec.reshape(shape)


def occupied_band(spec_intensity: np.ndarray, q: np.ndarray) -> float:
    """Largest ``|q|`` whose spectral intensity exceeds ``BAND_THRESHOLD`` of the peak."""
    peak = spec_intensity.max()
    if peak <= 0:
        return 0.0
    return float(np.max(np.abs(q[spec_intensity > BAND_THRESHOLD * peak])))


def check_fresnel_sampling(spec: np.ndarray, grid: TransverseGrid, distance: float, wavenumber: float, axis: int = -1) -> None:
    """Raise :class:`SamplingError` when the transfer phase aliases on the occupied band.

    The per-sample increment of ``q^2 z / (2k)`` at the band edge is
    ``|q| dq |z| / k``; above pi the highest frequencies wrap around the window.
    """
    other = tuple(i for i in range(spec.ndim) if i != axis % spec.ndim)
    intensity = np.sum(np.abs(spec) ** 2, axis=other) if other else np.abs(spec) ** 2
    band = occupied_band(intensity, grid.q)
    step = band * grid.dq * abs(distance) / wavenumber
    if step >= np.pi:
        raise SamplingError(
            f"Fresnel transfer phase step {step:.3g} rad per sample at |q| = {band:.3g} 1/m "
            f"exceeds pi for z = {distance:.3g} m; enlarge the window or refine dq"
        )


def fresnel_array(values, grid, distance, wavenumber, axis=-1, check_sampling=False):
    """Propagate position samples along ``axis`` by ``distance`` (any sign)."""
    spec = to_wavenumber_array(values, grid, axis=axis)
    if check_sampling:
        check_fresnel_sampling(spec, grid, distance, wavenumber, axis=axis)
    h = np.exp(-1j * grid.q**2 * distance / (2.0 * wavenumber))
    return to_position_array(spec * _reshape_along(h, spec.ndim, axis), grid, axis=axis)


def propagate_free(field: ComplexField, distance: float, wavenumber: float) -> ComplexField:
    """Free-space Fresnel propagation by ``distance`` >= 0 (unitary)."""
    check_positive(distance, "distance", allow_zero=True)
    check_positive(wavenumber, "wavenumber")
    f = field.to_position()
    if distance == 0:
        return f
    return f.with_values(fresnel_array(f.values, f.grid, distance, wavenumber))


def propagate_quadrature(field: ComplexField, distance: float, wavenumber: float) -> ComplexField:
    """Direct summation of the Fresnel kernel ``sqrt(k/(2 pi i z)) exp(i k (x-x')^2 / (2z))``.

    O(n^2); intended for n <= 512 as a cross-check of :func:`propagate_free`.
    """
    check_positive(distance, "distance")
    check_positive(wavenumber, "wavenumber")
    f = field.to_position()
    x = f.grid.x
    diff = x[:, None] - x[None, :]
    kernel = np.sqrt(wavenumber / (2j * np.pi * distance)) * np.exp(1j * wavenumber * diff**2 / (2.0 * distance))
    return f.with_values(kernel @ f.values * f.grid.dx)


def fourier_lens_grid(grid: TransverseGrid, focal: float, wavenumber: float) -> TransverseGrid:
    return make_grid(grid.n, grid.dq * focal / wavenumber, 0.0)


def fourier_lens_array(values, grid, focal, wavenumber, axis=-1):
    """Spectrum mapped to the back focal plane, ``x_out = f q / k``; returns (values, grid)."""
    spec = to_wavenumber_array(values, grid, axis=axis)
    return spec * np.sqrt(wavenumber / focal), fourier_lens_grid(grid, focal, wavenumber)


def fourier_lens(field: ComplexField, focal: float, wavenumber: float) -> ComplexField:
    """Optical Fourier transform with a lens of focal length ``focal``.

    The output grid has pitch ``dq * focal / k`` and is centred on the axis;
    the constant ``-i`` of a physical lens is dropped.
    """
    check_positive(focal, "focal")
    check_positive(wavenumber, "wavenumber")
    f = field.to_position()
    values, grid = fourier_lens_array(f.values, f.grid, focal, wavenumber)
    return ComplexField(grid, values, "position")


def imaging_array(values, grid, magnification, invert=True, axis=-1):
    m = float(magnification)
    sign = np.sign(m) * (-1.0 if invert else 1.0)
    new_grid = make_grid(grid.n, grid.dx * abs(m), sign * grid.center * abs(m))
    out = values / np.sqrt(abs(m))
    if sign < 0:
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out, new_grid


def imaging(field: ComplexField, magnification: float, invert: bool = True) -> ComplexField:
    """Ideal imaging ``f(x) -> f(s x / M) / sqrt(|M|)`` with ``s = -1`` when inverting."""
    if magnification == 0 or not np.isfinite(magnification):
        raise ValueError("magnification must be finite and non-zero")
    f = field.to_position()
    values, grid = imaging_array(f.values, f.grid, magnification, invert)
    return ComplexField(grid, values, "position")


@dataclass(frozen=True)
class FreeSpace:
    distance: float

    def __post_init__(self):
        check_positive(self.distance, "distance", allow_zero=True)

    def apply_array(self, values, grid, wavenumber, axis=-1, check_sampling=True):
        if self.distance == 0:
            return values, grid
        return fresnel_array(values, grid, self.distance, wavenumber, axis, check_sampling), grid


@dataclass(frozen=True)
class FourierLens:
    focal: float

    def __post_init__(self):
        check_positive(self.focal, "focal")

    def apply_array(self, values, grid, wavenumber, axis=-1, check_sampling=True):
        return fourier_lens_array(values, grid, self.focal, wavenumber, axis)


@dataclass(frozen=True)
class Imaging:
    magnification: float
    invert: bool = True

    def __post_init__(self):
        if self.magnification == 0 or not np.isfinite(self.magnification):
            raise ValueError("magnification must be finite and non-zero")

    def apply_array(self, values, grid, wavenumber, axis=-1, check_sampling=True):
        return imaging_array(values, grid, self.magnification, self.invert, axis)


@dataclass(frozen=True)
class MaskElement:
    mask: Mask = field(repr=False)

    def apply_array(self, values, grid, wavenumber, axis=-1, check_sampling=True):
        return apply_mask_array(values, grid, self.mask, axis, check_sampling), grid


OpticalElement = Union[FreeSpace, FourierLens, Imaging, MaskElement]


@dataclass(frozen=True)
class OpticalSystem:
    """Ordered optical elements acting on one arm at a fixed wavelength."""

    wavelength: float
    elements: tuple = ()

    def __post_init__(self):
        check_positive(self.wavelength, "wavelength")
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    def then(self, *elements: OpticalElement) -> "OpticalSystem":
        return OpticalSystem(self.wavelength, self.elements + tuple(elements))

    def apply_array(self, values, grid, axis=-1, check_sampling=True):
        for element in self.elements:
            values, grid = element.apply_array(values, grid, self.wavenumber, axis, check_sampling)
        return values, grid

    def coordinate_scale(self) -> float:
        """Factor converting detector coordinates back to the input plane.

        Position-like systems return ``x_in = scale * x_det``; systems whose
        last lens is a Fourier lens return ``q_in = scale * x_det``.
        Free space and masks are ignored.
        """
        scale = 1.0
        lenses = 0
        for element in self.elements:
            if isinstance(element, Imaging):
                sign = np.sign(element.magnification) * (-1.0 if element.invert else 1.0)
                scale *= sign / abs(element.magnification)
            elif isinstance(element, FourierLens):
                lenses += 1
                if lenses > 1:
                    raise ValueError("coordinate mapping supports at most one Fourier lens")
                # x_in = s x_mid  =>  q_in = q_mid / s, and q_mid = k x_det / f
                scale = self.wavenumber / (element.focal * scale)
        return float(scale)

    def has_fourier_lens(self) -> bool:
        return any(isinstance(e, FourierLens) for e in self.elements)


def apply_system(field: ComplexField, system: OpticalSystem, check_sampling: bool = True) -> ComplexField:
    """Apply ``system.elements`` in order; free-space steps are checked for aliasing."""
    f = field.to_position()
    values, grid = system.apply_array(f.values, f.grid, check_sampling=check_sampling)
    return ComplexField(grid, values, "position")


def compose(*systems: OpticalSystem) -> OpticalSystem:
    """Concatenate systems sharing one wavelength."""
    if not systems:
        raise ValueError("nothing to compose")
    wl = systems[0].wavelength
    if any(not np.isclose(s.wavelength, wl) for s in systems):
        raise ValueError("systems have different wavelengths")
    elements: Sequence = sum((s.elements for s in systems), ())
    return OpticalSystem(wl, elements)
