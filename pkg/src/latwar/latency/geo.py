"""Regions and great-circle distance."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class Region:
    name: str
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"{self.name}: latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"{self.name}: longitude {self.lon} out of range")


def haversine_km(a: Region, b: Region) -> float:
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def parse_regions(rows: Iterable[dict]) -> list[Region]:
    regions = [Region(r["name"].strip(), float(r["lat"]), float(r["lon"])) for r in rows]
    names = [r.name for r in regions]
    if len(set(names)) != len(names):
        raise ValueError("duplicate region names")
    return regions


def load_regions(path: str | Path) -> list[Region]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_regions(csv.DictReader(fh))


def shipped_regions() -> list[Region]:
    """The 24 cloud regions of the measurement experiment, at their datacenter cities."""
    text = resources.files("latwar").joinpath("data/regions.csv").read_text(encoding="utf-8")
    return parse_regions(csv.DictReader(text.splitlines()))


def write_regions(path: str | Path, regions: Iterable[Region]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "lat", "lon"])
        for r in regions:
            w.writerow([r.name, repr(r.lat), repr(r.lon)])
