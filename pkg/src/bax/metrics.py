"""Error metrics between estimated and true algorithm outputs."""

from __future__ import annotations

import math

import numpy as np

from .algorithms import GraphPathOutput

# Tolerance for the segment-intersection geometry.
_EPS = 1e-12


def jaccard_distance(a, b) -> float:
    """1 - |a & b| / |a | b| over two sets; two empty sets are at distance 0."""
    a, b = set(a), set(b)
    if not a and not b:
        return 0.0
    return 1.0 - len(a & b) / len(a | b)


def simple_regret(value_at_estimate: float, optimum_value: float, minimize: bool = True) -> float:
    """Gap between the estimate's true value and the optimum, oriented so
    that smaller is better regardless of the optimization sense."""
    gap = value_at_estimate - optimum_value
    return gap if minimize else -gap


def _as_polyline(path) -> np.ndarray:
    if isinstance(path, GraphPathOutput):
        pts = np.stack(path.vertex_points)
    else:
        pts = np.atleast_2d(np.asarray(path, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("a path must be a sequence of at least two planar points")
    return pts


def _segment_cuts(p0, p1, q0, q1):
    """Intersection parameters (s, t) in [0, 1]^2 of two segments.

    Proper crossings yield one pair; collinear overlap yields the overlap's
    two endpoints. Touching at endpoints counts.
    """
    u, v, w = p1 - p0, q1 - q0, q0 - p0
    lu, lv = math.hypot(*u), math.hypot(*v)
    if lu == 0.0 or lv == 0.0:
        return []
    cross = lambda a, b: float(a[0] * b[1] - a[1] * b[0])
    denom = cross(u, v)
    if abs(denom) > _EPS * lu * lv:
        s = cross(w, v) / denom
        t = cross(w, u) / denom
        margin = _EPS * max(1.0, lu, lv)
        if -margin <= s <= 1 + margin and -margin <= t <= 1 + margin:
            return [(min(max(s, 0.0), 1.0), min(max(t, 0.0), 1.0))]
        return []
    # parallel: collinear only if q0 sits on the p line
    if abs(cross(w, u)) > _EPS * lu * max(lu, math.hypot(*w), 1.0):
        return []
    uu = float(u @ u)
    s0, s1 = float(w @ u) / uu, float((q1 - p0) @ u) / uu
    lo, hi = max(0.0, min(s0, s1)), min(1.0, max(s0, s1))
    if hi < lo:
        return []
    vv = float(v @ v)
    cuts = []
    for s in dict.fromkeys((lo, hi)):
        t = float((p0 + s * u - q0) @ v) / vv
        cuts.append((s, min(max(t, 0.0), 1.0)))
    return cuts


def _point_at(poly: np.ndarray, g: float) -> np.ndarray:
    i = min(int(math.floor(g)), len(poly) - 2)
    return poly[i] + (g - i) * (poly[i + 1] - poly[i])


def _slice(poly: np.ndarray, g0: float, g1: float) -> list[np.ndarray]:
    if g1 < g0:
        return _slice(poly, g1, g0)[::-1]
    pts = [_point_at(poly, g0)]
    for i in range(int(math.ceil(g0)), int(math.floor(g1)) + 1):
        if g0 + 1e-9 < i < g1 - 1e-9:
            pts.append(poly[i])
    pts.append(_point_at(poly, g1))
    return pts


def _shoelace(points: list[np.ndarray]) -> float:
    total = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return abs(total) / 2.0


def path_area_error(inferred, truth, normalizer: float) -> float:
    """Area enclosed between two paths sharing endpoints, over ``normalizer``.

    Both paths are treated as piecewise-linear planar curves. All
    intersection points of the two curves are found; between consecutive
    ones (walking the first curve) the two sub-curves close into a polygon
    whose absolute shoelace area is accumulated. Coincident stretches
    contribute zero, so the result is 0 exactly when the curves coincide.
    """
    if not normalizer > 0:
        raise ValueError("normalizer must be positive")
    A, B = _as_polyline(inferred), _as_polyline(truth)
    if not (np.allclose(A[0], B[0], atol=_EPS) and np.allclose(A[-1], B[-1], atol=_EPS)):
        raise ValueError("paths must share their endpoints")
    cuts: dict[tuple[int, int], tuple[float, float]] = {}
    for i in range(len(A) - 1):
        for j in range(len(B) - 1):
            for s, t in _segment_cuts(A[i], A[i + 1], B[j], B[j + 1]):
                gA, gB = i + s, j + t
                key = (round(gA * 1e9), round(gB * 1e9))
                cuts.setdefault(key, (gA, gB))
    ordered = sorted(cuts.values())
    area = 0.0
    for (a0, b0), (a1, b1) in zip(ordered, ordered[1:]):
        polygon = _slice(A, a0, a1) + _slice(B, b0, b1)[::-1]
        area += _shoelace(polygon)
    return area / normalizer
