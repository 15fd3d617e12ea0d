"""Uniform 1D transverse grids, sampled complex fields and the unitary DFT.

Positions are ``x_j = center + (j - n/2) * dx`` and wavenumbers
``q_j = (j - n/2) * dq`` with ``dq = 2*pi / (n*dx)``.  The transform pair is

    F(q) = dx / sqrt(2 pi) * sum_j f(x_j) exp(-i q x_j)
    f(x) = dq / sqrt(2 pi) * sum_k F(q_k) exp(+i q_k x)

so that ``sum |f|^2 dx == sum |F|^2 dq`` holds without extra factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ._validation import check_finite_array, check_positive, check_power_of_two

Domain = Literal["position", "wavenumber"]
DOMAINS = ("position", "wavenumber")


@dataclass(frozen=True)
class TransverseGrid:
    """Uniform sampling of one transverse axis.

    Parameters
    ----------
    n : int
        Sample count, a power of two >= 8.
    dx : float
        Sample pitch [m].
    center : float
        Coordinate of sample ``n // 2`` [m].
    """

    n: int
    dx: float
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "n", check_power_of_two(self.n))
        object.__setattr__(self, "dx", check_positive(self.dx, "dx"))
        center = float(self.center)
        if not np.isfinite(center):
            raise ValueError("center must be finite")
        object.__setattr__(self, "center", center)

    @property
    def dq(self) -> float:
        return 2.0 * np.pi / (self.n * self.dx)

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.n) - self.n // 2

    @property
    def x(self) -> np.ndarray:
        return self.center + self.index * self.dx

    @property
    def q(self) -> np.ndarray:
        return self.index * self.dq

    def coords(self, domain: Domain) -> np.ndarray:
        return self.x if domain == "position" else self.q

    def step(self, domain: Domain) -> float:
        return self.dx if domain == "position" else self.dq

    def nearest_index(self, coordinate: float, domain: Domain = "position") -> int:
        start = self.center if domain == "position" else 0.0
        j = int(np.rint((coordinate - start) / self.step(domain))) + self.n // 2
        return int(np.clip(j, 0, self.n - 1))


def make_grid(n: int, dx: float, center: float = 0.0) -> TransverseGrid:
    """Build a :class:`TransverseGrid`; rejects non power-of-two ``n`` and ``dx <= 0``."""
    return TransverseGrid(n, dx, center)


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude sampled on a grid, in position or wavenumber representation."""

    grid: TransverseGrid
    values: np.ndarray = field(repr=False)
    domain: Domain = "position"

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        values = check_finite_array(self.values, "values", ndim=1)
        if values.shape[0] != self.grid.n:
            raise ValueError(f"values has {values.shape[0]} samples, grid has {self.grid.n}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def coords(self) -> np.ndarray:
        return self.grid.coords(self.domain)

    @property
    def step(self) -> float:
        return self.grid.step(self.domain)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def to_position(self) -> "ComplexField":
        return self if self.domain == "position" else ifft_unitary(self)

    def to_wavenumber(self) -> "ComplexField":
        return self if self.domain == "wavenumber" else fft_unitary(self)

    def with_values(self, values) -> "ComplexField":
        return ComplexField(self.grid, values, self.domain)


def _centered_phase(grid: TransverseGrid) -> np.ndarray:
    return np.exp(-1j * grid.q * grid.center)


def to_wavenumber_array(values: np.ndarray, grid: TransverseGrid, axis: int = -1) -> np.ndarray:
    """Unitary forward transform of position samples along ``axis``."""
    spec = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(values, axes=axis), axis=axis), axes=axis)
    spec = spec * (grid.dx / np.sqrt(2.0 * np.pi))
    if grid.center != 0.0:
        shape = [1] * spec.ndim
        shape[axis] = grid.n
        spec = spec * _centered_phase(grid).reshape(shape)
    return spec


def to_position_array(spec: np.ndarray, grid: TransverseGrid, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`to_wavenumber_array`."""
    if grid.center != 0.0:
        shape = [1] * spec.ndim
        shape[axis] = grid.n
        spec = spec * np.conj(_centered_phase(grid)).reshape(shape)
    values = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(spec, axes=axis), axis=axis), axes=axis)
    # ifft carries 1/n; dq * n / sqrt(2 pi) == sqrt(2 pi) / dx
    return values * (grid.n * grid.dq / np.sqrt(2.0 * np.pi))


def fft_unitary(field: ComplexField) -> ComplexField:
    """Return ``field`` in the wavenumber representation (norm preserving)."""
    if field.domain == "wavenumber":
        raise ValueError("field is already in the wavenumber domain")
    return ComplexField(field.grid, to_wavenumber_array(field.values, field.grid), "wavenumber")


def ifft_unitary(field: ComplexField) -> ComplexField:
    """Return ``field`` in the position representation (inverse of :func:`fft_unitary`)."""
    if field.domain == "position":
        raise ValueError("field is already in the position domain")
    return ComplexField(field.grid, to_position_array(field.values, field.grid), "position")


def norm_l2(field: ComplexField) -> float:
    """Squared L2 norm ``sum |f|^2 * step`` in the field's own measure."""
    return float(np.sum(field.intensity) * field.step)


def _weights(field: ComplexField) -> np.ndarray:
    w = field.intensity
    total = w.sum()
    if total <= 0:
        raise ValueError("field has zero norm; moments are undefined")
    return w / total


def centroid(field: ComplexField) -> float:
    """Intensity-weighted mean coordinate."""
    return float(np.dot(_weights(field), field.coords))


def variance(field: ComplexField) -> float:
    """Second central moment of ``|f|^2`` (a variance, not a standard deviation)."""
    w = _weights(field)
    c = field.coords
    mean = np.dot(w, c)
    return float(np.dot(w, (c - mean) ** 2))
