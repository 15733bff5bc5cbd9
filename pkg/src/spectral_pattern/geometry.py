"""Shape measurements for individual building footprints.

Five indices are computed per footprint: area, main direction, length-width
ratio, area ratio (footprint area over its smallest bounding rectangle), and
compactness (isoperimetric quotient, 1 for a circle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DegeneratePolygon, SelfIntersectingPolygon

#: Feature order used everywhere a feature matrix appears.
FEATURE_NAMES = (
    "area",
    "main_direction",
    "length_width_ratio",
    "area_ratio",
    "compactness",
)

_MIN_AREA = 1e-9
_MERGE_EPS = 1e-12


@dataclass(frozen=True)
class Point2:
    """A planar point in projected meters."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinate ({self.x}, {self.y})")


@dataclass(frozen=True)
class OrientedRect:
    """Smallest bounding rectangle; `angle` is the long-side direction."""

    center: Point2
    length: float
    width: float
    angle: float  # degrees in [0, 180)

    @property
    def area(self) -> float:
        return self.length * self.width


@dataclass(frozen=True)
class BuildingFeatures:
    area: float
    main_direction: float
    length_width_ratio: float
    area_ratio: float
    compactness: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (
            self.area,
            self.main_direction,
            self.length_width_ratio,
            self.area_ratio,
            self.compactness,
        )


def _as_point(p) -> Point2:
    if isinstance(p, Point2):
        return p
    x, y = p
    return Point2(x, y)


class Polygon:
    """A simple closed ring, stored counter-clockwise without a closing
    duplicate.  Clockwise or explicitly closed input is normalized on
    construction; degenerate or self-intersecting rings are rejected.
    """

    __slots__ = ("ring",)

    def __init__(self, ring: Iterable):
        pts = [_as_point(p) for p in ring]
        pts = _drop_duplicate_vertices(pts)
        if len(pts) < 3:
            raise DegeneratePolygon(f"ring has {len(pts)} distinct vertices, need 3")
        if _all_collinear(pts):
            raise DegeneratePolygon("all vertices collinear")
        _check_simple(pts)
        signed2 = _twice_signed_area(pts)
        if abs(signed2) / 2.0 < _MIN_AREA:
            raise DegeneratePolygon(f"|area| {abs(signed2) / 2.0:g} below {_MIN_AREA:g}")
        if signed2 < 0:
            pts.reverse()
        self.ring = tuple(pts)

    def __len__(self) -> int:
        return len(self.ring)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polygon) and self.ring == other.ring

    __hash__ = None

    def __repr__(self) -> str:
        return f"Polygon({len(self.ring)} vertices, area={polygon_area(self):.3f})"


def _drop_duplicate_vertices(pts: list[Point2]) -> list[Point2]:
    if not pts:
        return pts
    out = [pts[0]]
    for p in pts[1:]:
        q = out[-1]
        if math.hypot(p.x - q.x, p.y - q.y) > _MERGE_EPS:
            out.append(p)
    # drop explicit closing vertex
    if len(out) > 1 and math.hypot(out[-1].x - out[0].x, out[-1].y - out[0].y) <= _MERGE_EPS:
        out.pop()
    return out


def _all_collinear(pts: Sequence[Point2]) -> bool:
    o = pts[0]
    scale = max(max(abs(p.x - o.x), abs(p.y - o.y)) for p in pts) or 1.0
    tol = 1e-12 * scale * scale
    a = pts[1]
    return all(
        abs(_cross(o.x, o.y, a.x, a.y, p.x, p.y)) <= tol for p in pts[2:]
    )


def _twice_signed_area(pts: Sequence[Point2]) -> float:
    total = 0.0
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        total += a.x * b.y - b.x * a.y
    return total


def _cross(ox, oy, ax, ay, bx, by) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _on_segment(px, py, qx, qy, rx, ry) -> bool:
    # assumes r collinear with p-q
    return min(px, qx) <= rx <= max(px, qx) and min(py, qy) <= ry <= max(py, qy)


def _segments_touch(p1: Point2, p2: Point2, p3: Point2, p4: Point2) -> bool:
    """Whether closed segments p1p2 and p3p4 share any point."""
    d1 = _cross(p3.x, p3.y, p4.x, p4.y, p1.x, p1.y)
    d2 = _cross(p3.x, p3.y, p4.x, p4.y, p2.x, p2.y)
    d3 = _cross(p1.x, p1.y, p2.x, p2.y, p3.x, p3.y)
    d4 = _cross(p1.x, p1.y, p2.x, p2.y, p4.x, p4.y)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(p3.x, p3.y, p4.x, p4.y, p1.x, p1.y):
        return True
    if d2 == 0 and _on_segment(p3.x, p3.y, p4.x, p4.y, p2.x, p2.y):
        return True
    if d3 == 0 and _on_segment(p1.x, p1.y, p2.x, p2.y, p3.x, p3.y):
        return True
    if d4 == 0 and _on_segment(p1.x, p1.y, p2.x, p2.y, p4.x, p4.y):
        return True
    return False


def _check_simple(pts: Sequence[Point2]) -> None:
    """O(n^2) pairwise segment test; footprints are small so this is fine."""
    n = len(pts)
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        # spike: the next edge folds straight back over this one
        b = pts[(i + 2) % n]
        cr = _cross(a1.x, a1.y, a2.x, a2.y, b.x, b.y)
        dot = (a2.x - a1.x) * (b.x - a2.x) + (a2.y - a1.y) * (b.y - a2.y)
        if cr == 0 and dot < 0:
            raise SelfIntersectingPolygon(f"spike at vertex {(i + 1) % n}")
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex by construction
            b1, b2 = pts[j], pts[(j + 1) % n]
            if _segments_touch(a1, a2, b1, b2):
                raise SelfIntersectingPolygon(f"edges {i} and {j} intersect")


def polygon_area(p: Polygon) -> float:
    """Shoelace area; positive because rings are stored counter-clockwise."""
    return _twice_signed_area(p.ring) / 2.0


def polygon_perimeter(p: Polygon) -> float:
    total = 0.0
    n = len(p.ring)
    for i in range(n):
        a, b = p.ring[i], p.ring[(i + 1) % n]
        total += math.hypot(b.x - a.x, b.y - a.y)
    return total


def polygon_centroid(p: Polygon) -> Point2:
    """Area centroid of the footprint."""
    a2 = _twice_signed_area(p.ring)
    cx = cy = 0.0
    n = len(p.ring)
    for i in range(n):
        a, b = p.ring[i], p.ring[(i + 1) % n]
        w = a.x * b.y - b.x * a.y
        cx += (a.x + b.x) * w
        cy += (a.y + b.y) * w
    return Point2(cx / (3.0 * a2), cy / (3.0 * a2))


def convex_hull(points: Iterable) -> list[Point2]:
    """Monotone-chain hull in counter-clockwise order.

    Collinear points are not retained; fully collinear input yields the two
    extreme points, a single repeated point yields one point.
    """
    pts = sorted({(p.x, p.y) for p in map(_as_point, points)})
    if not pts:
        raise ValueError("convex_hull needs at least one point")
    if len(pts) == 1:
        return [Point2(*pts[0])]

    def half(seq):
        chain: list[tuple[float, float]] = []
        for q in seq:
            while len(chain) >= 2 and _cross(*chain[-2], *chain[-1], *q) <= 0:
                chain.pop()
            chain.append(q)
        return chain

    lower = half(pts)
    upper = half(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    return [Point2(x, y) for x, y in hull]


def min_bounding_rect(p: Polygon) -> OrientedRect:
    """Smallest-area bounding rectangle by rotating calipers.

    One side of the optimum is collinear with a hull edge, so only hull-edge
    directions are examined.  Area ties are broken by the smaller long-side
    angle; for a square the smaller of the two side angles is reported.
    """
    hull = convex_hull(p.ring)
    if len(hull) < 3:
        raise DegeneratePolygon("hull collapsed to a segment")

    best = None  # (area, angle, length, width, cx, cy)
    m = len(hull)
    for i in range(m):
        a, b = hull[i], hull[(i + 1) % m]
        ex, ey = b.x - a.x, b.y - a.y
        elen = math.hypot(ex, ey)
        if elen <= _MERGE_EPS:
            continue
        ux, uy = ex / elen, ey / elen
        smin = smax = hull[0].x * ux + hull[0].y * uy
        tmin = tmax = -hull[0].x * uy + hull[0].y * ux
        for q in hull[1:]:
            s = q.x * ux + q.y * uy
            t = -q.x * uy + q.y * ux
            smin, smax = min(smin, s), max(smax, s)
            tmin, tmax = min(tmin, t), max(tmax, t)
        eu, ev = smax - smin, tmax - tmin
        area = eu * ev
        ang_u = math.degrees(math.atan2(uy, ux)) % 180.0
        ang_v = (ang_u + 90.0) % 180.0
        if abs(eu - ev) <= 1e-12 * max(eu, ev):
            angle = min(ang_u, ang_v)
            length, width = max(eu, ev), min(eu, ev)
        elif eu > ev:
            angle, length, width = ang_u, eu, ev
        else:
            angle, length, width = ang_v, ev, eu
        sc, tc = (smin + smax) / 2.0, (tmin + tmax) / 2.0
        cx, cy = sc * ux - tc * uy, sc * uy + tc * ux
        cand = (area, angle, length, width, cx, cy)
        if best is None:
            best = cand
        elif area < best[0] * (1.0 - 1e-12):
            best = cand
        elif area <= best[0] * (1.0 + 1e-12) and angle < best[1] - 1e-9:
            best = cand

    area, angle, length, width, cx, cy = best
    return OrientedRect(center=Point2(cx, cy), length=length, width=width, angle=angle)


def extract_features(p: Polygon) -> BuildingFeatures:
    """The five per-building indices, in FEATURE_NAMES order."""
    area = polygon_area(p)
    perim = polygon_perimeter(p)
    rect = min_bounding_rect(p)
    ratio_lw = rect.length / rect.width
    ratio_area = min(1.0, area / (rect.length * rect.width))
    compact = min(1.0, 4.0 * math.pi * area / (perim * perim))
    return BuildingFeatures(
        area=area,
        main_direction=rect.angle,
        length_width_ratio=ratio_lw,
        area_ratio=ratio_area,
        compactness=compact,
    )
