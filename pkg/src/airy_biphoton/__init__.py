"""Simulation of transverse biphoton entanglement under Airy (cubic-phase) modulation."""

__version__ = "0.1.0"

from ._validation import GridMismatchError, SamplingError
from .biphoton import (
    BiphotonAmplitude,
    CoincidenceMap,
    ConditionalSlice,
    SourceSpec,
    apply_arm,
    coincidence_map,
    conditional_slice,
    gaussian_schmidt_spectrum,
    make_source,
    schmidt_number,
    schmidt_spectrum,
)
from .grid import ComplexField, TransverseGrid, centroid, fft_unitary, ifft_unitary, make_grid, norm_l2, variance
from .masks import AiryMaskSpec, Mask, airy_mask, apply_mask, ones_mask, slit_mask
from .measurement import (
    DetectorSpec,
    GaussianFit,
    GaussianPeakRegressor,
    ScanResult,
    ScanSpec,
    blur,
    fit_gaussian,
    moment_variance,
    simulate_scan,
    variance_from_fit,
)
from .propagation import (
    FourierLens,
    FreeSpace,
    Imaging,
    MaskElement,
    OpticalSystem,
    apply_system,
    compose,
    fourier_lens,
    imaging,
    propagate_free,
    propagate_quadrature,
)
from .witness import (
    SeparabilityWitness,
    UnitConvention,
    WitnessResult,
    duan_witness,
    witness_from_map,
    witness_from_scans,
)
