"""Hexagonal tessellation of the service region.

Pointy-top hexes on axial coordinates, laid out in a local equirectangular
projection around the world center.  With the default circumradius of 300 m
(600 m corner-to-corner diagonal) and 9 rings the world has 271 cells of
~260 m apothem, adjacent centers sqrt(3)*300 ~ 519.6 m apart.
"""

import math
from dataclasses import dataclass, field

EARTH_RADIUS_M = 6_371_000.0

SQRT3 = math.sqrt(3.0)


class WorldError(ValueError):
    """Invalid region id or malformed world parameters."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError("coordinates must be finite")
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinates out of bounds: ({self.lat}, {self.lon})")


def distance_m(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine great-circle distance in meters."""
    la1, lo1 = math.radians(a.lat), math.radians(a.lon)
    la2, lo2 = math.radians(b.lat), math.radians(b.lon)
    dlat = la2 - la1
    dlon = lo2 - lo1
    h = math.sin(dlat / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _hex_dist(q: int, r: int) -> int:
    # cube distance from origin; s = -q - r
    return (abs(q) + abs(r) + abs(q + r)) // 2


def _cube_round(qf: float, rf: float) -> tuple[int, int]:
    sf = -qf - rf
    q, r, s = round(qf), round(rf), round(sf)
    dq, dr, ds = abs(q - qf), abs(r - rf), abs(s - sf)
    if dq > dr and dq > ds:
        q = -r - s
    elif dr > ds:
        r = -q - s
    return int(q), int(r)


@dataclass
class HexWorld:
    """Immutable after construction; safe for shared reads."""

    center: GeoPoint
    circumradius_m: float = 300.0
    rings: int = 9
    # filled in __post_init__
    axial: list = field(default_factory=list, repr=False)     # region_id -> (q, r)
    centers: list = field(default_factory=list, repr=False)   # region_id -> GeoPoint
    _by_axial: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.circumradius_m <= 0 or self.rings < 0:
            raise WorldError("circumradius_m must be > 0 and rings >= 0")
        n = self.rings
        coords = [
            (q, r)
            for r in range(-n, n + 1)
            for q in range(-n, n + 1)
            if _hex_dist(q, r) <= n
        ]
        coords.sort(key=lambda qr: (qr[1], qr[0]))
        self.axial = coords
        self._by_axial = {qr: i for i, qr in enumerate(coords)}
        self.centers = [self._to_geo(*self._axial_to_xy(q, r)) for q, r in coords]

    @property
    def region_count(self) -> int:
        return len(self.axial)

    def _check(self, region: int) -> None:
        if not (isinstance(region, int) and 0 <= region < self.region_count):
            raise WorldError(f"invalid region id: {region!r}")

    # --- local projection (meters east/north of the world center) ---

    def _to_xy(self, p: GeoPoint) -> tuple[float, float]:
        kx = math.cos(math.radians(self.center.lat)) * EARTH_RADIUS_M * math.pi / 180.0
        ky = EARTH_RADIUS_M * math.pi / 180.0
        return (p.lon - self.center.lon) * kx, (p.lat - self.center.lat) * ky

    def _to_geo(self, x: float, y: float) -> GeoPoint:
        kx = math.cos(math.radians(self.center.lat)) * EARTH_RADIUS_M * math.pi / 180.0
        ky = EARTH_RADIUS_M * math.pi / 180.0
        return GeoPoint(self.center.lat + y / ky, self.center.lon + x / kx)

    def _axial_to_xy(self, q: int, r: int) -> tuple[float, float]:
        R = self.circumradius_m
        return R * SQRT3 * (q + r / 2.0), R * 1.5 * r

    # --- queries ---

    def region_center(self, region: int) -> GeoPoint:
        self._check(region)
        return self.centers[region]

    def neighbors(self, region: int, radius: int) -> list[int]:
        """All in-world regions within hex distance `radius`, including
        `region` itself, ascending by region id."""
        self._check(region)
        if radius < 0:
            raise WorldError(f"radius must be >= 0, got {radius}")
        q0, r0 = self.axial[region]
        out = []
        for dq in range(-radius, radius + 1):
            for dr in range(-radius, radius + 1):
                if _hex_dist(dq, dr) <= radius:
                    rid = self._by_axial.get((q0 + dq, r0 + dr))
                    if rid is not None:
                        out.append(rid)
        out.sort()
        return out

    def locate(self, p: GeoPoint) -> int | None:
        """Region containing p, or None when p is outside the outer ring.

        Cube-rounds to the nearest cell, then settles edge points by nearest
        center with ties going to the lower region id.
        """
        x, y = self._to_xy(p)
        R = self.circumradius_m
        qf = (SQRT3 / 3.0 * x - y / 3.0) / R
        rf = (2.0 / 3.0 * y) / R
        q, r = _cube_round(qf, rf)

        # nearest-center rule over the rounded cell and its 6 neighbors
        best = None  # (dist, region_or_None)
        for dq, dr in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)):
            cq, cr = q + dq, r + dr
            cx, cy = self._axial_to_xy(cq, cr)
            d = math.hypot(x - cx, y - cy)
            rid = self._by_axial.get((cq, cr))
            key = (d, rid if rid is not None else math.inf)
            if best is None or key[0] < best[0] - 1e-9 or (abs(key[0] - best[0]) <= 1e-9 and key[1] < best[1]):
                best = key
        rid = best[1]
        return None if rid is math.inf else rid

    def interior_regions(self) -> list[int]:
        """Regions whose full two-neighborhood lies in-world."""
        n = self.rings
        return [i for i, (q, r) in enumerate(self.axial) if _hex_dist(q, r) <= n - 2]
