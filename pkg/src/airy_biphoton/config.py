"""Experiment configuration: a sectioned ``key = value`` text file.

Example::

    [experiment]
    pump_wavelength = 405e-9
    wavelength = 810e-9
    seed = 2024

    [campaign.crystal_face_airy]
    z = 0, 2, 4, 6, 8

Values are plain numbers, booleans, comma-separated lists or ``none``.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

CAMPAIGNS = ("free", "crystal_face_airy", "propagated_plane_airy")
ORACLE_CHECKS = ("quadrature", "gaussian_beam", "airy_ballistics", "witness_saturation")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points at the offending entry when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        super().__init__(message)

    def __str__(self):
        where = self.path or "<config>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.args[0]}"


@dataclass(frozen=True)
class GridConfig:
    n: int = 1024
    dx: float = 25e-6


@dataclass(frozen=True)
class SourceConfig:
    kind: str = "gaussian"
    sigma_plus: float = 3000.0
    sigma_minus: float = 9306.0


@dataclass(frozen=True)
class OpticsConfig:
    magnification: float = 3.0
    invert: bool = True
    focal: float = 0.3
    propagated_distance: float = 0.1


@dataclass(frozen=True)
class MaskConfig:
    x0: float = 165e-6
    a: float = 0.05
    aperture: float | None = 3.9
    z_unit: float = 0.007


@dataclass(frozen=True)
class DetectorConfig:
    position_aperture: float = 0.0
    momentum_aperture: float = 20e-6
    efficiency: float = 1.0


@dataclass(frozen=True)
class ScanConfig:
    points: int = 61
    span_sigmas: float = 3.0
    integration_time: float = 10.0
    peak_rate: float = 100.0
    fixed_position: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    pump_wavelength: float = 405e-9
    wavelength: float = 810e-9
    seed: int = 2024
    x_scale: float = 1e-4
    workers: int = 4
    grid: GridConfig = field(default_factory=GridConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    detectors: DetectorConfig = field(default_factory=DetectorConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    campaigns: dict = field(
        default_factory=lambda: {
            "free": (0.0,),
            "crystal_face_airy": (0.0, 2.0, 4.0, 6.0, 8.0),
            "propagated_plane_airy": (0.0, 6.0, 12.0),
        }
    )
    oracle_checks: tuple = ORACLE_CHECKS

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))

    def with_ratio(self, ratio: float) -> "ExperimentConfig":
        return replace(self, source=replace(self.source, sigma_minus=ratio * self.source.sigma_plus))


_SECTIONS = {
    "grid": GridConfig,
    "source": SourceConfig,
    "optics": OpticsConfig,
    "mask": MaskConfig,
    "detectors": DetectorConfig,
    "scan": ScanConfig,
}
_EXPERIMENT_KEYS = ("pump_wavelength", "wavelength", "seed", "x_scale", "workers")


def _locate(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or of the section header)."""
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None:
            km = re.match(r"^([^=:#;]+?)\s*[=:]", line)
            if km and km.group(1).strip().lower() == key.lower():
                return lineno
    return None


def _convert(raw: str, typ, name: str):
    raw = raw.strip()
    if typ in ("float | None", float | None) or str(typ) == "float | None":
        return None if raw.lower() in ("none", "") else float(raw)
    if typ in (bool, "bool"):
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if typ in (int, "int"):
        val = float(raw)
        if val != int(val):
            raise ValueError(f"{name}: expected an integer, got {raw!r}")
        return int(val)
    if typ in (float, "float"):
        return float(raw)
    return raw


def _parse_list(raw: str) -> tuple:
    raw = raw.strip()
    if not raw or raw.lower() == "none":
        return ()
    return tuple(item.strip() for item in raw.split(",") if item.strip())


def parse_config(text: str, path: str | None = None) -> ExperimentConfig:
    """Parse and validate configuration text; raises :class:`ConfigError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(f"malformed config: {str(exc).splitlines()[0]}", line, path) from exc

    def fail(msg, section, key=None):
        raise ConfigError(msg, _locate(text, section, key), path)

    kwargs = {}
    for section in parser.sections():
        if section == "experiment" or section in _SECTIONS or section.startswith("campaign.") or section == "oracle":
            continue
        fail(f"unknown section [{section}]", section)

    if parser.has_section("experiment"):
        types = {f.name: f.type for f in fields(ExperimentConfig)}
        for key, raw in parser.items("experiment"):
            if key not in _EXPERIMENT_KEYS:
                fail(f"unknown key {key!r} in [experiment]", "experiment", key)
            try:
                kwargs[key] = _convert(raw, types[key], key)
            except ValueError as exc:
                fail(str(exc), "experiment", key)

    for section, cls in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            if key not in types:
                fail(f"unknown key {key!r} in [{section}]", section, key)
            try:
                values[key] = _convert(raw, types[key], key)
            except ValueError as exc:
                fail(f"{section}.{key}: {exc}", section, key)
        kwargs[section] = cls(**values)

    campaigns = {}
    for section in parser.sections():
        if not section.startswith("campaign."):
            continue
        name = section.split(".", 1)[1]
        if name not in CAMPAIGNS:
            fail(f"unknown campaign {name!r}; expected one of {CAMPAIGNS}", section)
        for key in parser.options(section):
            if key != "z":
                fail(f"unknown key {key!r} in [{section}]", section, key)
        try:
            zs = tuple(float(v) for v in _parse_list(parser.get(section, "z", fallback="0")))
        except ValueError as exc:
            fail(f"{section}.z: {exc}", section, "z")
        campaigns[name] = zs
    if campaigns:
        kwargs["campaigns"] = campaigns

    if parser.has_section("oracle"):
        for key in parser.options("oracle"):
            if key != "checks":
                fail(f"unknown key {key!r} in [oracle]", "oracle", key)
        checks = _parse_list(parser.get("oracle", "checks", fallback=""))
        for c in checks:
            if c not in ORACLE_CHECKS:
                fail(f"unknown oracle check {c!r}; expected any of {ORACLE_CHECKS}", "oracle", "checks")
        kwargs["oracle_checks"] = checks

    config = ExperimentConfig(**kwargs)
    validate_config(config, text, path)
    return config


def validate_config(config: ExperimentConfig, text: str = "", path: str | None = None) -> None:
    """Check cross-field invariants; raises :class:`ConfigError` with a line when possible."""

    def fail(msg, section, key=None):
        raise ConfigError(msg, _locate(text, section, key) if text else None, path)

    def positive(value, section, key, allow_zero=False):
        if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
            fail(f"{section}.{key} must be {'>= 0' if allow_zero else '> 0'}, got {value}", section, key)

    positive(config.pump_wavelength, "experiment", "pump_wavelength")
    positive(config.wavelength, "experiment", "wavelength")
    if not np.isclose(config.wavelength, 2.0 * config.pump_wavelength, rtol=1e-9, atol=0):
        fail(
            f"degenerate down-conversion needs wavelength = 2 x pump_wavelength "
            f"({2 * config.pump_wavelength:g}), got {config.wavelength:g}",
            "experiment",
            "wavelength",
        )
    positive(config.x_scale, "experiment", "x_scale")
    if not 0 <= config.seed < 2**64:
        fail("experiment.seed must be an unsigned 64-bit integer", "experiment", "seed")
    if config.workers < 1:
        fail("experiment.workers must be >= 1", "experiment", "workers")

    n = config.grid.n
    if n < 8 or n & (n - 1):
        fail(f"grid.n must be a power of two >= 8, got {n}", "grid", "n")
    positive(config.grid.dx, "grid", "dx")

    if config.source.kind not in ("gaussian", "ideal_epr"):
        fail(f"source.kind must be 'gaussian' or 'ideal_epr', got {config.source.kind!r}", "source", "kind")
    positive(config.source.sigma_plus, "source", "sigma_plus")
    positive(config.source.sigma_minus, "source", "sigma_minus")
    dq = 2.0 * np.pi / (n * config.grid.dx)
    lo, hi = 4.0 * dq, 1.0 / (4.0 * config.grid.dx)
    names = ("sigma_minus",) if config.source.kind == "ideal_epr" else ("sigma_plus", "sigma_minus")
    for key in names:
        value = getattr(config.source, key)
        if not lo <= value <= hi:
            fail(f"source.{key} = {value:g} 1/m is not resolved by the grid: need {lo:.4g} <= value <= {hi:.4g}",
                 "source", key)

    if config.optics.magnification == 0:
        fail("optics.magnification must be non-zero", "optics", "magnification")
    positive(config.optics.focal, "optics", "focal")
    positive(config.optics.propagated_distance, "optics", "propagated_distance", allow_zero=True)

    positive(config.mask.x0, "mask", "x0")
    positive(config.mask.a, "mask", "a", allow_zero=True)
    positive(config.mask.z_unit, "mask", "z_unit", allow_zero=True)
    if config.mask.aperture is not None:
        positive(config.mask.aperture, "mask", "aperture")

    positive(config.detectors.position_aperture, "detectors", "position_aperture", allow_zero=True)
    positive(config.detectors.momentum_aperture, "detectors", "momentum_aperture", allow_zero=True)
    if not 0 < config.detectors.efficiency <= 1:
        fail("detectors.efficiency must be in (0, 1]", "detectors", "efficiency")

    if config.scan.points < 5:
        fail("scan.points must be >= 5", "scan", "points")
    positive(config.scan.span_sigmas, "scan", "span_sigmas")
    positive(config.scan.integration_time, "scan", "integration_time")
    positive(config.scan.peak_rate, "scan", "peak_rate")

    for name, zs in config.campaigns.items():
        if name not in CAMPAIGNS:
            fail(f"unknown campaign {name!r}", f"campaign.{name}")
        if any(z < 0 for z in zs):
            fail(f"campaign.{name}.z values must be >= 0", f"campaign.{name}", "z")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` (comments are not preserved)."""
    out = io.StringIO()
    out.write("[experiment]\n")
    for key in _EXPERIMENT_KEYS:
        out.write(f"{key} = {_fmt(getattr(config, key))}\n")
    for section in _SECTIONS:
        out.write(f"\n[{section}]\n")
        obj = getattr(config, section)
        for f in fields(obj):
            out.write(f"{f.name} = {_fmt(getattr(obj, f.name))}\n")
    for name, zs in config.campaigns.items():
        out.write(f"\n[campaign.{name}]\nz = {', '.join(_fmt(float(z)) for z in zs)}\n")
    out.write(f"\n[oracle]\nchecks = {', '.join(config.oracle_checks) if config.oracle_checks else 'none'}\n")
    return out.getvalue()


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from exc
    return parse_config(text, str(p))
