"""Catalog ingestion and run manifests."""

from __future__ import annotations

import csv
import platform
from dataclasses import dataclass
from importlib import metadata

import numpy as np

from .geometry import BandWindow, FullSphere, to_cartesian
from .processes import PointPattern


class CatalogError(ValueError):
    """Malformed catalog content; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class Catalog:
    pattern: PointPattern
    omitted: int = 0

    def report(self):
        return f"{len(self.pattern)} points read, {self.omitted} omitted"


def parse_band(text):
    """``"lo,hi"`` colatitudes in radians to the complement of that band."""
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"band must be lo,hi in radians; got {text!r}") from None
    return BandWindow(lo, hi, complement=True)


def ingest_catalog(path, window=None):
    """Read ``theta,phi`` rows into a pattern observed in ``window``.

    A leading ``# units=degrees`` comment switches the input to degrees; other
    ``#`` lines are ignored. Points outside ``window`` (inside the excluded
    band) are dropped and counted in :attr:`Catalog.omitted`.
    """
    window = FullSphere() if window is None else window
    degrees = False
    header = None
    thetas, phis = [], []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key = text[1:].replace(" ", "").lower()
                if key == "units=degrees":
                    degrees = True
                elif key == "units=radians":
                    degrees = False
                continue
            fields = next(csv.reader([text]))
            if header is None:
                header = [f.strip().lower() for f in fields]
                if header != ["theta", "phi"]:
                    raise CatalogError(f"line {lineno}: header must be 'theta,phi', got {text!r}")
                continue
            if len(fields) != 2:
                raise CatalogError(f"line {lineno}: expected 2 fields, got {len(fields)}")
            try:
                t, p = float(fields[0]), float(fields[1])
            except ValueError:
                raise CatalogError(f"line {lineno}: non-numeric value in {text!r}") from None
            if degrees:
                t, p = np.radians(t), np.radians(p)
            if not (0.0 <= t <= np.pi):
                raise CatalogError(f"line {lineno}: theta {fields[0]} outside [0, pi]")
            if not (0.0 <= p < 2.0 * np.pi):
                raise CatalogError(f"line {lineno}: phi {fields[1]} outside [0, 2 pi)")
            thetas.append(t)
            phis.append(p)
    if header is None:
        raise CatalogError("line 1: missing 'theta,phi' header")
    pts = to_cartesian(np.array(thetas), np.array(phis)).reshape(-1, 3)
    keep = window.contains(pts) if len(pts) else np.zeros(0, bool)
    return Catalog(PointPattern(pts[keep], window), int((~keep).sum()))


def library_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def write_manifest(path, config):
    """``key=value`` lines echoing the run configuration plus versions."""
    items = dict(config)
    items.setdefault("library_version", library_version())
    items.setdefault("numpy_version", np.__version__)
    items.setdefault("python_version", platform.python_version())
    with open(path, "w") as fh:
        for key in sorted(items):
            fh.write(f"{key}={items[key]}\n")


def read_manifest(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and not line.startswith("#"):
                key, _, value = line.partition("=")
                out[key] = value
    return out
