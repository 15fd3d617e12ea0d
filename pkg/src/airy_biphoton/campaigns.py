"""The three measurement campaigns and the witness calibration.

Layout of one run (``out/<campaign>/``)::

    <Z>/position.csv  <Z>/position.json
    <Z>/momentum.csv  <Z>/momentum.json
    <Z>/fit.json      <Z>/witness.json
    table.csv

The SLM sits in an image plane of the crystal and carries a position-domain
cubic phase on the idler.  Position is measured by imaging both arms with
magnification ``M``; momentum with a Fourier lens of focal length ``f``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .biphoton import BiphotonAmplitude, SourceSpec, apply_arm, coincidence_map, conditional_slice, make_source
from .config import CAMPAIGNS, ExperimentConfig
from .grid import make_grid
from .masks import AiryMaskSpec, airy_mask
from .measurement import (
    FWHM_PER_SIGMA,
    DetectorSpec,
    ScanResult,
    ScanSpec,
    blur,
    expected_profile,
    fit_gaussian,
    half_max_width,
    peak_location,
    simulate_scan,
)
from .propagation import FourierLens, FreeSpace, Imaging, MaskElement, OpticalSystem
from .witness import UnitConvention, WitnessResult, witness_from_map, witness_from_scans
from . import io as aio

logger = logging.getLogger(__name__)

BASES = ("position", "momentum")
FIT_WIDTH_FLOOR = 2.0  # minimal half-span of a scan, in detector samples


class ConvergenceError(RuntimeError):
    """A Gaussian fit inside a campaign did not converge."""


@dataclass
class ZResult:
    campaign: str
    z_index: int
    Z: float
    position: ScanResult
    momentum: ScanResult
    witness: WitnessResult | None
    map_witness: WitnessResult
    idler_peak_shift: float

    @property
    def converged(self) -> bool:
        return self.position.fit.converged and self.momentum.fit.converged


@dataclass
class CampaignResult:
    campaign: str
    rows: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.rows)

    def products(self) -> np.ndarray:
        return np.array([r.witness.product if r.witness else np.nan for r in self.rows])

    def uncertainties(self) -> np.ndarray:
        return np.array([r.witness.uncertainty if r.witness else np.nan for r in self.rows])


def source_spec(config: ExperimentConfig) -> SourceSpec:
    s = config.source
    return SourceSpec(s.kind, s.sigma_plus, s.sigma_minus)


def source_state(config: ExperimentConfig) -> BiphotonAmplitude:
    g = make_grid(config.grid.n, config.grid.dx)
    return make_source(source_spec(config), g, g)


def arm_systems(config: ExperimentConfig, campaign: str, basis: str, Z: float) -> tuple[OpticalSystem, OpticalSystem]:
    """Signal and idler systems, from the crystal plane to the detectors.

    ``Z`` is in units of ``mask.z_unit``.
    """
    if campaign not in CAMPAIGNS:
        raise ValueError(f"unknown campaign {campaign!r}; expected one of {CAMPAIGNS}")
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}")
    o = config.optics
    detector = Imaging(o.magnification, o.invert) if basis == "position" else FourierLens(o.focal)
    signal, idler = [], []
    if campaign != "free":
        grid = make_grid(config.grid.n, config.grid.dx)
        idler.append(MaskElement(airy_mask(mask_spec(config, Z), grid, "position", focal=o.focal)))
    if campaign == "propagated_plane_airy" and o.propagated_distance > 0:
        signal.append(FreeSpace(o.propagated_distance))
        idler.append(FreeSpace(o.propagated_distance))
    signal.append(detector)
    idler.append(detector)
    return OpticalSystem(config.wavelength, signal), OpticalSystem(config.wavelength, idler)


def mask_spec(config: ExperimentConfig, Z: float) -> AiryMaskSpec:
    m = config.mask
    return AiryMaskSpec(m.x0, config.wavenumber, m.a, Z * m.z_unit, m.aperture)


def detector_specs(config: ExperimentConfig, basis: str) -> tuple[DetectorSpec, DetectorSpec]:
    d = config.detectors
    sigma = d.position_aperture if basis == "position" else d.momentum_aperture
    det = DetectorSpec(sigma, d.efficiency)
    return det, det


def detection_map(config: ExperimentConfig, campaign: str, basis: str, Z: float, state: BiphotonAmplitude | None = None):
    """Coincidence map in the detector planes (unblurred) and the systems used."""
    state = source_state(config) if state is None else state
    sig, idl = arm_systems(config, campaign, basis, Z)
    out = apply_arm(apply_arm(state, "signal", sig), "idler", idl)
    return coincidence_map(out), (sig, idl)


def scan_positions(profile: np.ndarray, coords: np.ndarray, points: int, span_sigmas: float) -> tuple:
    """Scan grid centred on the (sub-sample) peak, ``span_sigmas`` FWHM-equivalent widths each side."""
    step = coords[1] - coords[0]
    centre = peak_location(coords, profile)
    sigma = half_max_width(coords, profile) / FWHM_PER_SIGMA
    half_span = max(span_sigmas * sigma, FIT_WIDTH_FLOOR * step)
    lo_x = max(centre - half_span, coords[0])
    hi_x = min(centre + half_span, coords[-1])
    return tuple(np.linspace(lo_x, hi_x, points))


def _scan(config, cmap, basis, seed, meta):
    dets = detector_specs(config, basis)
    blurred = blur(cmap, *dets)
    sl = conditional_slice(blurred, "signal", config.scan.fixed_position)
    positions = scan_positions(sl.values, sl.coords, config.scan.points, config.scan.span_sigmas)
    spec = ScanSpec(
        positions,
        config.scan.fixed_position,
        config.scan.integration_time,
        config.scan.peak_rate,
        int(seed),
    )
    return simulate_scan(cmap, spec, dets, metadata=meta)


def z_seeds(config: ExperimentConfig, campaign: str, z_index: int) -> tuple[int, int]:
    """Independent per-entry seeds for the position and momentum scans."""
    ss = np.random.SeedSequence([config.seed, CAMPAIGNS.index(campaign), z_index])
    a, b = ss.generate_state(2, dtype=np.uint32)
    return int(a), int(b)


def optics_metadata(config: ExperimentConfig) -> dict:
    return {
        "magnification": config.optics.magnification,
        "focal": config.optics.focal,
        "wavelength": config.wavelength,
    }


def run_z(config: ExperimentConfig, campaign: str, z_index: int, Z: float, state=None) -> ZResult:
    seeds = z_seeds(config, campaign, z_index)
    scans, maps, scales = {}, {}, {}
    for basis, seed in zip(BASES, seeds):
        cmap, (sig, idl) = detection_map(config, campaign, basis, Z, state)
        maps[basis] = cmap
        scales[basis] = (sig.coordinate_scale(), idl.coordinate_scale())
        meta = {"basis": basis, "Z": Z, "campaign": campaign}
        scans[basis] = _scan(config, cmap, basis, seed, meta)

    units = UnitConvention(config.x_scale)
    try:
        witness = witness_from_scans(scans["position"], scans["momentum"], units, optics_metadata(config))
    except ValueError as exc:
        logger.warning("%s Z=%g: no witness (%s)", campaign, Z, exc)
        witness = None
    mw = witness_from_map(
        blur(maps["position"], *detector_specs(config, "position")),
        blur(maps["momentum"], *detector_specs(config, "momentum")),
        units,
        scales["position"],
        scales["momentum"],
        check_signs=False,
    )
    shift = mask_spec(config, Z).peak_shift() if campaign != "free" else 0.0
    return ZResult(campaign, z_index, Z, scans["position"], scans["momentum"], witness, mw, shift)


def run_campaign(
    config: ExperimentConfig,
    campaign: str,
    out_dir: str | Path | None = None,
    workers: int | None = None,
) -> CampaignResult:
    """Run every ``Z`` of ``campaign`` concurrently and optionally write artifacts.

    Raises :class:`ConvergenceError` after writing artifacts if any fit failed.
    """
    if campaign not in CAMPAIGNS:
        raise ValueError(f"unknown campaign {campaign!r}; expected one of {CAMPAIGNS}")
    zs = config.campaigns.get(campaign, (0.0,))
    state = source_state(config)
    workers = config.workers if workers is None else workers
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(run_z, config, campaign, i, z, state) for i, z in enumerate(zs)]
        rows = [f.result() for f in futures]
    result = CampaignResult(campaign, rows)
    if out_dir is not None:
        write_campaign(result, config, Path(out_dir))
    if not result.converged:
        bad = [r.Z for r in rows if not r.converged]
        raise ConvergenceError(f"{campaign}: fits did not converge for Z = {bad}")
    return result


def write_campaign(result: CampaignResult, config: ExperimentConfig, out_dir: Path) -> Path:
    base = out_dir / result.campaign
    for row in result.rows:
        d = base / aio.z_label(row.Z)
        d.mkdir(parents=True, exist_ok=True)
        for basis in BASES:
            scan = getattr(row, basis)
            aio.write_scan(scan, d / f"{basis}.csv", basis=basis)
        aio.write_json(
            {"position": row.position.fit.to_dict(), "momentum": row.momentum.fit.to_dict()},
            d / "fit.json",
        )
        aio.write_witness(row.witness, d / "witness.json", Z=row.Z, basis_config=basis_config(config, result.campaign),
                          map_witness=row.map_witness)
    aio.write_table([(r.Z, r.witness) for r in result.rows], base / "table.csv")
    return base


def basis_config(config: ExperimentConfig, campaign: str) -> dict:
    o = config.optics
    return {
        "campaign": campaign,
        "position": {"magnification": o.magnification, "invert": o.invert},
        "momentum": {"focal_m": o.focal},
        "propagated_distance_m": o.propagated_distance if campaign == "propagated_plane_airy" else 0.0,
        "wavelength_m": config.wavelength,
        "x_scale_m": config.x_scale,
    }


# calibration ---------------------------------------------------------------

def _noiseless_variance(config, campaign, basis, Z=0.0, state=None) -> float:
    cmap, _ = detection_map(config, campaign, basis, Z, state)
    dets = detector_specs(config, basis)
    sl = conditional_slice(blur(cmap, *dets), "signal", config.scan.fixed_position)
    positions = np.asarray(scan_positions(sl.values, sl.coords, config.scan.points, config.scan.span_sigmas))
    spec = ScanSpec(tuple(positions), config.scan.fixed_position, config.scan.integration_time, config.scan.peak_rate)
    _, rates = expected_profile(cmap, spec, dets)
    counts = rates * spec.integration_time
    fit = fit_gaussian(positions, counts, np.sqrt(np.maximum(counts, 1.0)))
    if not fit.converged:
        raise ConvergenceError(f"noiseless {basis} fit did not converge")
    return fit.sigma**2


def expected_product(config: ExperimentConfig, campaign: str = "free", Z: float = 0.0) -> float:
    """Witness product from noise-free scans (expected counts fitted directly)."""
    vx = _noiseless_variance(config, campaign, "position", Z)
    vp = _noiseless_variance(config, campaign, "momentum", Z)
    m, f, k = config.optics.magnification, config.optics.focal, config.wavenumber
    return vx / m**2 * vp * (k / f) ** 2


def calibrate_ratio(
    config: ExperimentConfig,
    target: float = 0.090,
    bracket: tuple[float, float] = (2.0, 3.3),
    tol: float = 1e-4,
    max_iter: int = 60,
) -> tuple[float, ExperimentConfig]:
    """Bisect ``sigma_minus / sigma_plus`` (``sigma_plus`` fixed) so the free product hits ``target``.

    The product decreases monotonically with the ratio.  Returns the ratio and
    the updated configuration.
    """
    lo, hi = bracket
    f_lo = expected_product(config.with_ratio(lo)) - target
    f_hi = expected_product(config.with_ratio(hi)) - target
    if f_lo * f_hi > 0:
        raise ValueError(
            f"target product {target} not bracketed by ratios {bracket} "
            f"(products {f_lo + target:.4g}, {f_hi + target:.4g})"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = expected_product(config.with_ratio(mid)) - target
        if abs(f_mid) < tol or hi - lo < 1e-9:
            break
        if f_mid * f_lo > 0:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return mid, config.with_ratio(mid)
