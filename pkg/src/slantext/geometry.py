"""Curved-region decomposition: boundary fitting, baseline splitting, and
flattening of mask segments into axis-aligned rectangles.

Coordinates are image-pixel (x, y) with y growing downward. Polygons are
stored with positive shoelace area and angles follow atan2(dy, dx).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InputError, LayoutError
from .grid import RegionMask

# split candidates whose tangent stays within this of the segment entry
# direction are discarded: the curve has not actually turned
PARALLEL_FILTER_RAD = math.radians(5.0)

PACK_GUTTER = 4.0


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise GeometryError(f"expected (N, 2) points, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise GeometryError("points must be finite")
    return pts


def polygon_area(points) -> float:
    """Signed shoelace area; positive for our canonical vertex order."""
    pts = _as_points(points)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@dataclass(frozen=True)
class PolygonMask:
    """Simple polygon with >= 4 vertices and positive signed area."""

    vertices: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.vertices)
        if pts.shape[0] < 4:
            raise GeometryError(f"polygon needs >= 4 vertices, got {pts.shape[0]}")
        if polygon_area(pts) <= 0.0:
            raise GeometryError("polygon must have positive signed area (wrong winding?)")
        n = pts.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                if abs(i - j) in (1, n - 1):
                    continue  # adjacent edges share a vertex
                if _segments_properly_intersect(
                    pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]
                ):
                    raise GeometryError("polygon is self-intersecting")
        arr = pts.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "vertices", arr)

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        pts = self.vertices
        x, y = pts[:, 0], pts[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = 0.5 * cross.sum()
        cx = float(((x + xn) * cross).sum() / (6.0 * a))
        cy = float(((y + yn) * cross).sum() / (6.0 * a))
        return np.array([cx, cy])

    def translated(self, dx: float, dy: float) -> "PolygonMask":
        return PolygonMask(self.vertices + np.array([dx, dy]))

    def rotated(self, angle: float, about=None) -> "PolygonMask":
        """Rotate vertices by `angle` radians (positive turns +x toward +y)."""
        c = self.centroid if about is None else np.asarray(about, dtype=np.float64)
        rot = np.array(
            [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
        )
        return PolygonMask((self.vertices - c) @ rot.T + c)

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return _points_in_polygon(self.vertices, xs, ys)


@dataclass(frozen=True)
class BezierCurve:
    """Cubic Bezier defined by 4 control points."""

    control: np.ndarray

    def __post_init__(self):
        pts = _as_points(self.control)
        if pts.shape[0] != 4:
            raise GeometryError(f"cubic curve needs 4 control points, got {pts.shape[0]}")
        arr = pts.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "control", arr)

    def point(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        s = 1.0 - t
        w = np.stack([s**3, 3 * s**2 * t, 3 * s * t**2, t**3], axis=-1)
        return w @ self.control

    def tangent(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        s = 1.0 - t
        d = np.diff(self.control, axis=0)  # (3, 2)
        w = np.stack([s**2, 2 * s * t, t**2], axis=-1)
        return 3.0 * (w @ d)

    def arc_lengths(self, n: int = 257) -> tuple[np.ndarray, np.ndarray]:
        """(params, cumulative length) along a dense polyline."""
        ts = np.linspace(0.0, 1.0, n)
        pts = self.point(ts)
        steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        return ts, np.concatenate([[0.0], np.cumsum(steps)])


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle given by center, (length-along-angle, length-across) and
    angle in [0, pi)."""

    center: np.ndarray
    size: tuple[float, float]
    angle: float

    @property
    def area(self) -> float:
        return self.size[0] * self.size[1]

    @property
    def long_axis_angle(self) -> float:
        if self.size[0] >= self.size[1]:
            return self.angle
        return (self.angle + math.pi / 2.0) % math.pi

    def corners(self) -> np.ndarray:
        d = np.array([math.cos(self.angle), math.sin(self.angle)])
        n = np.array([-d[1], d[0]])
        hu, hv = self.size[0] / 2.0, self.size[1] / 2.0
        c = self.center
        return np.array([c - d * hu - n * hv, c + d * hu - n * hv,
                         c + d * hu + n * hv, c - d * hu + n * hv])


@dataclass(frozen=True)
class QuadSegment:
    """One near-straight piece of a divided mask.

    Corners run UL, UR, LR, LL in the segment's own reading frame; `angle`
    is the baseline chord direction and `text_slice` the half-open index
    range of the characters this piece carries.
    """

    corners: np.ndarray
    angle: float
    index: int
    text_slice: tuple[int, int]

    def __post_init__(self):
        pts = _as_points(self.corners)
        if pts.shape[0] != 4:
            raise GeometryError("segment quad needs exactly 4 corners")
        if not (-math.pi < self.angle <= math.pi):
            raise GeometryError(f"segment angle {self.angle} outside (-pi, pi]")
        # convexity and consistent turning direction
        signs = []
        for i in range(4):
            a, b, c = pts[i], pts[(i + 1) % 4], pts[(i + 2) % 4]
            signs.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
        if abs(polygon_area(pts)) < 1e-12:
            raise GeometryError("segment quad has ~zero area")
        if not (all(s > 0 for s in signs) or all(s < 0 for s in signs)):
            raise GeometryError("segment quad must be convex")
        start, stop = self.text_slice
        if stop <= start:
            raise GeometryError(f"empty text slice {self.text_slice}")
        arr = pts.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "corners", arr)

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.corners[1] - self.corners[0]))

    @property
    def height(self) -> float:
        return float(np.linalg.norm(self.corners[3] - self.corners[0]))

    @property
    def char_count(self) -> int:
        return self.text_slice[1] - self.text_slice[0]


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * R(angle) @ p + (tx, ty); flat frame into segment frame."""

    scale: float
    angle: float
    tx: float
    ty: float

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix().T + np.array([self.tx, self.ty])

    def invert(self) -> "SimilarityTransform":
        if self.scale <= 0:
            raise GeometryError("transform scale must be positive to invert")
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.angle), math.sin(-self.angle)
        rot = inv_scale * np.array([[c, -s], [s, c]])
        t = -rot @ np.array([self.tx, self.ty])
        return SimilarityTransform(inv_scale, -self.angle, float(t[0]), float(t[1]))


@dataclass(frozen=True)
class FlatLayout:
    """Axis-aligned rectangles for each segment plus the transforms that
    carry flat content back onto the segment quads."""

    rects: tuple          # of (x, y, w, h)
    transforms: tuple     # of SimilarityTransform
    canvas: tuple[int, int]  # (h, w)
    text_slices: tuple    # of (start, stop), matching rects

    def __post_init__(self):
        if not (len(self.rects) == len(self.transforms) == len(self.text_slices)):
            raise GeometryError("layout fields must have equal lengths")
        for x, y, w, h in self.rects:
            if w <= 0 or h <= 0:
                raise GeometryError(f"flat rect has non-positive size {(w, h)}")


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise in (x, y) math orientation."""
    pts = np.unique(_as_points(points), axis=0)
    if pts.shape[0] < 3:
        raise GeometryError("hull needs at least 3 distinct points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise GeometryError("points are collinear, no hull area")
    return hull


def min_area_rect(points) -> OrientedRect:
    """Smallest-area enclosing rectangle via rotating calipers: the optimum
    is aligned with some hull edge, so each edge direction is tried."""
    pts = _as_points(points)
    hull = convex_hull(pts)
    best = None
    n = hull.shape[0]
    for i in range(n):
        edge = hull[(i + 1) % n] - hull[i]
        norm = np.linalg.norm(edge)
        if norm < 1e-12:
            continue
        d = edge / norm
        nvec = np.array([-d[1], d[0]])
        pu = hull @ d
        pv = hull @ nvec
        su = pu.max() - pu.min()
        sv = pv.max() - pv.min()
        area = su * sv
        if best is None or area < best[0] - 1e-12:
            cu = (pu.max() + pu.min()) / 2.0
            cv = (pv.max() + pv.min()) / 2.0
            center = d * cu + nvec * cv
            best = (area, center, su, sv, math.atan2(d[1], d[0]))
    if best is None:
        raise GeometryError("degenerate point set for min-area rect")
    _, center, su, sv, angle = best
    angle = angle % math.pi
    return OrientedRect(center=center, size=(float(su), float(sv)), angle=float(angle))


def _cyclic_slice(n: int, i: int, j: int) -> list[int]:
    if j >= i:
        return list(range(i, j + 1))
    return list(range(i, n)) + list(range(0, j + 1))


def _trim_cap_edges(chain: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Drop end vertices whose edge runs closer to the cross axis than the
    long axis; those edges are the band's end caps, not boundary."""

    def cap_like(a, b):
        e = b - a
        n = np.linalg.norm(e)
        if n < 1e-12:
            return True
        e = e / n
        along = abs(float(e @ axis))
        return along < math.cos(math.pi / 4.0)

    pts = chain
    while pts.shape[0] > 2 and cap_like(pts[0], pts[1]):
        pts = pts[1:]
    while pts.shape[0] > 2 and cap_like(pts[-2], pts[-1]):
        pts = pts[:-1]
    return pts


def _boundary_chains(poly: PolygonMask) -> tuple[np.ndarray, np.ndarray, OrientedRect]:
    rect = min_area_rect(poly.vertices)
    a = rect.long_axis_angle
    axis = np.array([math.cos(a), math.sin(a)])
    perp = np.array([-axis[1], axis[0]])
    verts = poly.vertices
    proj = verts @ axis
    i_lo = int(np.argmin(proj))
    i_hi = int(np.argmax(proj))
    if i_lo == i_hi:
        raise GeometryError("polygon has no spread along its long axis")
    n = verts.shape[0]
    chain_a = verts[_cyclic_slice(n, i_lo, i_hi)]
    chain_b = verts[_cyclic_slice(n, i_hi, i_lo)]
    chains = []
    for chain in (chain_a, chain_b):
        chain = _trim_cap_edges(chain, axis)
        if chain.shape[0] < 2:
            raise GeometryError("boundary chain degenerated while trimming caps")
        if chain[-1] @ axis < chain[0] @ axis:
            chain = chain[::-1]
        chains.append(chain)
    # the chain sitting at smaller cross-axis coordinate is "upper"
    means = [float(np.mean(c @ perp)) for c in chains]
    if means[0] <= means[1]:
        return chains[0], chains[1], rect
    return chains[1], chains[0], rect


def _fit_cubic_chain(pts: np.ndarray) -> BezierCurve:
    """Least-squares cubic through the chain, end points interpolated."""
    p0, p3 = pts[0], pts[-1]
    chord = p3 - p0

    def thirds():
        return BezierCurve(np.array([p0, p0 + chord / 3.0, p0 + 2.0 * chord / 3.0, p3]))

    if pts.shape[0] == 2:
        return thirds()
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = steps.sum()
    if total < 1e-12:
        raise GeometryError("chain has no length")
    t = np.concatenate([[0.0], np.cumsum(steps)]) / total
    s = 1.0 - t
    b0 = s**3
    b1 = 3 * s**2 * t
    b2 = 3 * s * t**2
    b3 = t**3
    a11 = float((b1 * b1).sum())
    a12 = float((b1 * b2).sum())
    a22 = float((b2 * b2).sum())
    det = a11 * a22 - a12 * a12
    if abs(det) < 1e-12:
        return thirds()
    rest = pts - np.outer(b0, p0) - np.outer(b3, p3)
    r1 = b1 @ rest
    r2 = b2 @ rest
    p1 = (a22 * r1 - a12 * r2) / det
    p2 = (a11 * r2 - a12 * r1) / det
    if not (np.isfinite(p1).all() and np.isfinite(p2).all()):
        return thirds()
    return BezierCurve(np.array([p0, p1, p2, p3]))


def fit_boundary_beziers(poly: PolygonMask) -> tuple[BezierCurve, BezierCurve]:
    """Fit one cubic to each boundary chain of a band-shaped polygon.

    The polygon splits at its two extreme vertices along the min-area-rect
    long axis; cap-like end edges are trimmed from both chains first.
    Returns (upper, lower), both parameterized low-u to high-u.
    """
    upper_pts, lower_pts, _ = _boundary_chains(poly)
    return _fit_cubic_chain(upper_pts), _fit_cubic_chain(lower_pts)


def baseline(upper: BezierCurve, lower: BezierCurve) -> BezierCurve:
    """Center curve: the control-point average of the two boundaries."""
    return BezierCurve((upper.control + lower.control) / 2.0)


def _angle_diff_mod_pi(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def _tangent_parallel_params(
    curve: BezierCurve, rect: OrientedRect, samples: int = 512
) -> list[float]:
    """Interior parameters where the curve tangent runs parallel to either
    rect axis. Sign changes on a dense grid are refined by bisection."""
    dirs = []
    for a in (rect.angle, rect.angle + math.pi / 2.0):
        dirs.append(np.array([math.cos(a), math.sin(a)]))
    ts = np.linspace(0.0, 1.0, samples + 1)
    tang = curve.tangent(ts)

    roots: list[float] = []
    for d in dirs:
        f = tang[:, 0] * d[1] - tang[:, 1] * d[0]
        for i in range(samples):
            if f[i] == 0.0:
                if 0 < i < samples:
                    roots.append(float(ts[i]))
                continue
            if f[i] * f[i + 1] < 0.0:
                lo, hi = float(ts[i]), float(ts[i + 1])
                flo = float(f[i])
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    tm = curve.tangent(mid)
                    fm = float(tm[0] * d[1] - tm[1] * d[0])
                    if fm == 0.0:
                        lo = hi = mid
                        break
                    if (fm > 0) == (flo > 0):
                        lo, flo = mid, fm
                    else:
                        hi = mid
                roots.append(0.5 * (lo + hi))

    eps = 1e-4
    roots = sorted(r for r in roots if eps < r < 1.0 - eps)
    deduped: list[float] = []
    for r in roots:
        if not deduped or r - deduped[-1] > eps:
            deduped.append(r)
    return deduped


def split_points(curve: BezierCurve, rect: OrientedRect, samples: int = 512) -> list[float]:
    """Cut parameters for a center curve: tangent-parallel points, filtered
    so a cut only lands once the tangent has turned at least
    PARALLEL_FILTER_RAD away from the running entry direction."""
    entry = curve.tangent(0.0)
    entry_angle = math.atan2(entry[1], entry[0])
    kept: list[float] = []
    for r in _tangent_parallel_params(curve, rect, samples):
        tng = curve.tangent(r)
        ang = math.atan2(tng[1], tng[0])
        if _angle_diff_mod_pi(ang, entry_angle) < PARALLEL_FILTER_RAD:
            continue
        kept.append(r)
        entry_angle = ang
    return kept


def _apportion(lengths: list[float], total_chars: int) -> list[int]:
    """Whole characters per piece, proportional to arc length, each >= 1.
    Largest-remainder rounding with deterministic ties."""
    n = len(lengths)
    if total_chars < n:
        raise GeometryError(f"cannot place {total_chars} chars into {n} segments")
    total_len = sum(lengths)
    if total_len <= 0:
        counts = [total_chars // n] * n
        for i in range(total_chars - sum(counts)):
            counts[i] += 1
        return counts
    quotas = [total_chars * (l / total_len) for l in lengths]
    counts = [int(math.floor(q)) for q in quotas]
    left = total_chars - sum(counts)
    order = sorted(range(n), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in range(left):
        counts[order[i]] += 1
    # a sliver can round to zero; pull one char from the largest piece
    while any(c == 0 for c in counts):
        zi = counts.index(0)
        donor = max(range(n), key=lambda i: (counts[i], quotas[i], -i))
        counts[donor] -= 1
        counts[zi] += 1
    return counts


def divide_mask(poly: PolygonMask, text: str) -> list[QuadSegment]:
    """Cut a band-shaped mask into near-straight quads and hand each a
    contiguous run of the text, proportional to baseline arc length.

    Cuts happen where the center curve's tangent turns parallel to a
    min-area-rect axis; pieces merge (smallest first) until every piece
    can hold at least one character.
    """
    if len(text) == 0:
        raise InputError("cannot divide a mask for empty text")
    upper_pts, lower_pts, rect = _boundary_chains(poly)
    upper_c = _fit_cubic_chain(upper_pts)
    lower_c = _fit_cubic_chain(lower_pts)
    base = baseline(upper_c, lower_c)
    cuts = [0.0] + split_points(base, rect) + [1.0]

    ts, cum = base.arc_lengths()

    def arc(u: float) -> float:
        return float(np.interp(u, ts, cum))

    pieces = [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)]
    lengths = [arc(b) - arc(a) for a, b in pieces]

    # merge smallest pieces until the text can cover every piece
    while len(pieces) > len(text):
        k = min(range(len(pieces)), key=lambda i: (lengths[i], i))
        if k == 0:
            j = 1
        elif k == len(pieces) - 1:
            j = k - 1
        else:
            j = k - 1 if lengths[k - 1] <= lengths[k + 1] else k + 1
        lo, hi = min(k, j), max(k, j)
        pieces[lo] = (pieces[lo][0], pieces[hi][1])
        lengths[lo] = lengths[lo] + lengths[hi]
        del pieces[hi]
        del lengths[hi]

    counts = _apportion(lengths, len(text))

    segments: list[QuadSegment] = []
    start = 0
    for idx, ((ua, ub), cnt) in enumerate(zip(pieces, counts)):
        a = base.point(ua)
        b = base.point(ub)
        chord = b - a
        norm = np.linalg.norm(chord)
        if norm < 1e-9:
            raise GeometryError(f"segment {idx} has a degenerate baseline chord")
        angle = math.atan2(chord[1], chord[0])
        us = np.linspace(ua, ub, 9)
        gap = np.linalg.norm(upper_c.point(us) - lower_c.point(us), axis=1)
        half_h = float(gap.mean()) / 2.0
        if half_h < 1e-9:
            raise GeometryError(f"segment {idx} has no height between boundaries")
        down = np.array([-math.sin(angle), math.cos(angle)]) * half_h
        corners = np.array([a - down, b - down, b + down, a + down])
        segments.append(
            QuadSegment(
                corners=corners,
                angle=angle,
                index=idx,
                text_slice=(start, start + cnt),
            )
        )
        start += cnt
    return segments


def flatten_segments(
    segments: list[QuadSegment], canvas: tuple[int, int]
) -> FlatLayout:
    """Lay segments out flat: rotate each to angle 0, scale uniformly to a
    shared text height, and pack left-to-right, top-to-bottom with a
    fixed gutter. Transforms map flat content back onto the quads."""
    if not segments:
        raise GeometryError("no segments to flatten")
    ch, cw = canvas
    heights = [seg.height for seg in segments]
    flat_h = float(np.mean(heights))
    if flat_h <= 0:
        raise GeometryError("segments have no height")

    rects = []
    transforms = []
    slices = []
    x = 0.0
    y = 0.0
    row_used = False
    for seg in segments:
        scale_to_flat = flat_h / seg.height
        w = seg.width * scale_to_flat
        if w > cw:
            need_w = int(math.ceil(w))
            raise LayoutError(
                f"segment {seg.index} needs a canvas at least {need_w} wide, have {cw}"
            )
        if row_used and x + w > cw:
            x = 0.0
            y += flat_h + PACK_GUTTER
            row_used = False
        if y + flat_h > ch:
            need_h = int(math.ceil(y + flat_h))
            raise LayoutError(
                f"layout needs a canvas at least {need_h} tall, have {ch}"
            )
        rect = (x, y, w, flat_h)
        # flat rect corner -> segment UL, with the segment's angle and the
        # inverse of the flat scaling
        back_scale = 1.0 / scale_to_flat
        c, s = math.cos(seg.angle), math.sin(seg.angle)
        rot = back_scale * np.array([[c, -s], [s, c]])
        t = seg.corners[0] - rot @ np.array([x, y])
        transforms.append(
            SimilarityTransform(back_scale, seg.angle, float(t[0]), float(t[1]))
        )
        rects.append(rect)
        slices.append(seg.text_slice)
        x += w + PACK_GUTTER
        row_used = True
    return FlatLayout(
        rects=tuple(rects),
        transforms=tuple(transforms),
        canvas=(int(ch), int(cw)),
        text_slices=tuple(slices),
    )


def _points_in_polygon(verts: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd crossing test, vectorized over query points."""
    inside = np.zeros(xs.shape, dtype=bool)
    n = verts.shape[0]
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = (y1 > ys) != (y2 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < np.where(crosses, xint, np.inf))
    return inside


def rasterize_mask(region, h: int, w: int, downscale: int = 1) -> RegionMask:
    """Binary (h/d, w/d) mask: a cell is 1 when its image-space center falls
    inside the region. Region is a PolygonMask or a list of QuadSegments
    (union). Pixel (i, j) has its center at (x, y) = (j, i); a coarse cell
    centers on the mean of the fine pixels it covers."""
    if downscale < 1 or h % downscale or w % downscale:
        raise GeometryError(f"downscale {downscale} must divide canvas {(h, w)}")
    gh, gw = h // downscale, w // downscale
    js, is_ = np.meshgrid(np.arange(gw), np.arange(gh))
    xs = js * downscale + (downscale - 1) / 2.0
    ys = is_ * downscale + (downscale - 1) / 2.0
    if isinstance(region, PolygonMask):
        inside = _points_in_polygon(region.vertices, xs, ys)
    else:
        segments = list(region)
        if not segments:
            raise GeometryError("no quads to rasterize")
        inside = np.zeros((gh, gw), dtype=bool)
        for seg in segments:
            inside |= _points_in_polygon(seg.corners, xs, ys)
    return RegionMask(inside.astype(np.float64))
