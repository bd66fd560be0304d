"""Arrival-log analysis and latency-war simulation."""

from latwar.latency.geo import EARTH_RADIUS_KM, Region, haversine_km, load_regions, shipped_regions

__all__ = ["EARTH_RADIUS_KM", "Region", "haversine_km", "load_regions", "shipped_regions"]
