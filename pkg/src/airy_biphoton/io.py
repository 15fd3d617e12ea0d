"""Artifact formats: CSV tables, JSON reports and the ``BIPH`` binary matrix dump.

``BIPH`` layout: 4-byte magic ``b"BIPH"``, then little-endian uint32
``version``, ``n1``, ``n2`` (16 bytes in all), followed by ``n1*n2``
little-endian float64 values in row-major order.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .biphoton import CoincidenceMap
from .grid import make_grid
from .masks import Mask
from .measurement import GaussianFit, ScanResult

BIPH_MAGIC = b"BIPH"
BIPH_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(data: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def _fmt(value: float) -> str:
    return repr(float(value))


def z_label(Z: float) -> str:
    """Directory name for a ``Z`` value: ``0``, ``2``, ``2.5``."""
    return f"{float(Z):g}"


# masks ---------------------------------------------------------------------

def write_mask_csv(mask: Mask, path: str | Path) -> Path:
    """Columns: coordinate, Re t, Im t (coordinate is ``x`` or ``q`` by domain)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coord = "x_m" if mask.domain == "position" else "q_per_m"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([coord, "re_t", "im_t"])
        for c, t in zip(mask.coords, mask.transmittance):
            w.writerow([_fmt(c), _fmt(t.real), _fmt(t.imag)])
    return path


def read_mask_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


# coincidence maps ----------------------------------------------------------

def write_map_csv(cmap: CoincidenceMap, path: str | Path) -> Path:
    """Long format with header ``x1,x2,C``; one row per grid pair, signal index outermost."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "C"])
        x2 = [_fmt(v) for v in cmap.x2]
        for x1, row in zip(cmap.x1, cmap.values):
            s1 = _fmt(x1)
            for s2, c in zip(x2, row):
                w.writerow([s1, s2, _fmt(c)])
    return path


def read_map_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(x1, x2, C)`` with ``C`` of shape ``(len(x1), len(x2))``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x1 = np.unique(data[:, 0])
    x2 = np.unique(data[:, 1])
    if x1.size * x2.size != data.shape[0]:
        raise ValueError("map CSV is not a full grid")
    return x1, x2, data[:, 2].reshape(x1.size, x2.size)


def write_biph(values, path: str | Path) -> Path:
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    if arr.ndim != 2:
        raise ValueError("BIPH dumps hold 2-D matrices")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(BIPH_MAGIC, BIPH_VERSION, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))
    return path


def read_biph(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a BIPH header")
    magic, version, n1, n2 = _HEADER.unpack_from(raw)
    if magic != BIPH_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != BIPH_VERSION:
        raise ValueError(f"unsupported BIPH version {version}")
    expected = _HEADER.size + 8 * n1 * n2
    if len(raw) != expected:
        raise ValueError(f"BIPH payload size {len(raw) - _HEADER.size} does not match {n1}x{n2}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n1, n2).copy()


def map_from_arrays(x1, x2, values, domains=("position", "position")) -> CoincidenceMap:
    """Rebuild a :class:`CoincidenceMap` from uniformly spaced axes."""
    x1, x2 = np.asarray(x1), np.asarray(x2)
    grids = []
    for x in (x1, x2):
        n = x.size
        dx = float(x[1] - x[0])
        grids.append(make_grid(n, dx, float(x[n // 2])))
    return CoincidenceMap(grids[0], grids[1], values, domains)


# scans ---------------------------------------------------------------------

SCAN_HEADER = ("position_m", "counts", "count_error")


def write_scan(scan: ScanResult, path: str | Path, basis: str | None = None) -> Path:
    """CSV ``position_m,counts,count_error`` plus a ``.json`` sidecar with fit and metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_HEADER)
        for x, c, e in zip(scan.positions, scan.counts, scan.count_errors):
            w.writerow([_fmt(x), int(c), _fmt(e)])
    meta = dict(scan.metadata)
    if basis is not None:
        meta["basis"] = basis
    write_json({"fit": scan.fit.to_dict(), "metadata": meta}, path.with_suffix(".json"))
    return path


def read_scan(path: str | Path) -> ScanResult:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != SCAN_HEADER:
        raise ValueError(f"unexpected scan header {rows[0]}")
    body = np.array(rows[1:], dtype=float).reshape(-1, 3)
    side = path.with_suffix(".json")
    fit, meta = GaussianFit(), {}
    if side.exists():
        d = read_json(side)
        fit = GaussianFit(**{k: (np.nan if v is None else v) for k, v in d["fit"].items()})
        meta = d.get("metadata", {})
    return ScanResult(body[:, 0], body[:, 1].astype(np.int64), body[:, 2], fit, None, meta)


# witness -------------------------------------------------------------------

def witness_report(result, Z: float, basis_config: dict, map_witness=None) -> dict:
    """Report with keys Z, basis_config, var_x, var_p, product, uncertainty, violated, significance."""
    if result is None:
        report = {
            "Z": Z, "basis_config": basis_config, "var_x": None, "var_p": None, "product": None,
            "uncertainty": None, "violated": None, "significance": None, "convention": "variance",
        }
    else:
        report = {
            "Z": Z,
            "basis_config": basis_config,
            "var_x": result.var_x_minus,
            "var_x_err": result.var_x_err,
            "var_p": result.var_p_plus,
            "var_p_err": result.var_p_err,
            "product": result.value,
            "uncertainty": result.uncertainty,
            "violated": result.violated,
            "significance": result.significance,
            "bound": result.bound,
            "convention": result.convention,
        }
    if map_witness is not None:
        report["map"] = {
            "var_x_minus": map_witness.var_x_minus,
            "var_p_plus": map_witness.var_p_plus,
            "product": map_witness.value,
            "correlation_signs": map_witness.to_dict()["correlation_signs"],
        }
    return report


def write_witness(result, path, Z: float, basis_config: dict, map_witness=None) -> Path:
    return write_json(witness_report(result, Z, basis_config, map_witness), path)


def write_table(rows, path: str | Path) -> Path:
    """Rows of ``(Z, WitnessResult | None)`` as CSV ``Z,product,uncertainty``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Z", "product", "uncertainty"])
        for Z, res in rows:
            if res is None:
                w.writerow([z_label(Z), "nan", "nan"])
            else:
                w.writerow([z_label(Z), _fmt(res.value), _fmt(res.uncertainty)])
    return path


def read_table(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
