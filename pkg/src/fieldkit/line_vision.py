"""Field-line and corner detection.

Pipeline: a three-rectangle sliding window scores every (decimated) image
site in a horizontal and a vertical pass, producing two heatmaps; 1-D
non-maximum suppression along each pass's scan direction keeps line-center
candidates; a seeded progressive probabilistic Hough transform turns the
candidates into segments; near-collinear segments are merged; pairs of
merged lines meeting near 90 degrees become corner observations (1 for an
L junction, 2 for a T, 4 for an X).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import axial_diff, line_intersection
from .raster import Raster

Point = tuple[float, float]

HORIZONTAL = "horizontal"
VERTICAL = "vertical"


@dataclass(frozen=True)
class Heatmap:
    """Sliding-window line response sampled on a decimated site grid."""

    values: np.ndarray
    decimation: int
    direction: str

    def __post_init__(self):
        if self.decimation < 1:
            raise InputError("decimation must be >= 1")
        if self.direction not in (HORIZONTAL, VERTICAL):
            raise InputError(f"unknown pass direction {self.direction!r}")
        if np.any(self.values < 0):
            raise InputError("heatmap scores must be non-negative")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LineSegment:
    p0: Point
    p1: Point

    def __post_init__(self):
        object.__setattr__(self, "p0", (float(self.p0[0]), float(self.p0[1])))
        object.__setattr__(self, "p1", (float(self.p1[0]), float(self.p1[1])))
        if self.length <= 0:
            raise InputError("segment endpoints must differ")

    @property
    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    @property
    def direction(self) -> float:
        """Undirected angle in [0, pi)."""
        a = math.atan2(self.p1[1] - self.p0[1], self.p1[0] - self.p0[0]) % math.pi
        return a if a < math.pi else 0.0

    @property
    def unit(self) -> Point:
        d = self.length
        return ((self.p1[0] - self.p0[0]) / d, (self.p1[1] - self.p0[1]) / d)

    @property
    def midpoint(self) -> Point:
        return ((self.p0[0] + self.p1[0]) / 2.0, (self.p0[1] + self.p1[1]) / 2.0)

    def point_line_distance(self, p) -> float:
        """Distance from p to this segment's infinite line."""
        ux, uy = self.unit
        dx = p[0] - self.p0[0]
        dy = p[1] - self.p0[1]
        return abs(dx * uy - dy * ux)


@dataclass(frozen=True)
class CornerObservation:
    """A right-angle meeting of two lines; dir_a/dir_b point along the arms."""

    position: Point
    dir_a: Point
    dir_b: Point


@dataclass(frozen=True)
class VisionConfig:
    decimation: int = 4
    luma_weight: float = 1.0
    green_weight: float = 1.0
    nms_radius: int = 2
    nms_threshold: float = 25.0
    hough_rho: float = 2.0
    hough_theta: float = math.pi / 180.0
    hough_votes: int = 10
    min_length: float = 40.0
    max_gap: float = 12.0
    join_dist: float = 3.0
    merge_angle_tol: float = math.radians(3.0)
    merge_dist_tol: float = 4.0
    corner_angle_tol: float = math.radians(10.0)
    corner_extend_tol: float = 6.0
    corner_end_slack: float = 6.0
    seed: int = 0


def integral_image(channel: np.ndarray) -> np.ndarray:
    """Summed-area table with a zero border: table[y, x] = sum over [0,y) x [0,x)."""
    c = np.asarray(channel, dtype=np.int64)
    out = np.zeros((c.shape[0] + 1, c.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(c, axis=0), axis=1, out=out[1:, 1:])
    return out


def rect_sum(table: np.ndarray, y0, y1, x0, x1):
    """Sum of pixels in rows [y0, y1), cols [x0, x1); bounds may be arrays."""
    return table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]


def _width_map_as_array(width_map, height: int) -> np.ndarray:
    wm = np.broadcast_to(np.asarray(width_map, dtype=float), (height,))
    wm = np.maximum(np.rint(wm), 1).astype(np.int64)
    return wm


def line_response_pass(r: Raster, direction: str, width_map, decimation: int,
                       luma_weight: float = 1.0, green_weight: float = 1.0) -> Heatmap:
    """Three-rectangle sliding-window score: bright middle, dark green sides.

    The middle rectangle width follows the expected line width for the image
    row; the side rectangles are the same size and adjacent. Scores clip at 0.
    """
    if direction not in (HORIZONTAL, VERTICAL):
        raise InputError(f"unknown pass direction {direction!r}")
    h, w = r.luma.shape
    wm = _width_map_as_array(width_map, h)
    it_l = integral_image(r.luma)
    it_g = integral_image(r.green)
    rows = np.arange(0, h, decimation)
    cols = np.arange(0, w, decimation)
    values = np.zeros((len(rows), len(cols)))
    for i, row in enumerate(rows):
        lw = int(wm[row])
        half = lw // 2
        if direction == HORIZONTAL:
            # window slides along x: [left][mid][right], each lw wide, lw tall
            y0, y1 = row - half, row - half + lw
            if y0 < 0 or y1 > h:
                continue
            x_mid0 = cols - half
            x_mid1 = x_mid0 + lw
            x_l0 = x_mid0 - lw
            x_r1 = x_mid1 + lw
            ok = (x_l0 >= 0) & (x_r1 <= w)
            if not ok.any():
                continue
            area = lw * lw
            mid_l = rect_sum(it_l, y0, y1, np.where(ok, x_mid0, 0), np.where(ok, x_mid1, 0))
            side_l = (rect_sum(it_l, y0, y1, np.where(ok, x_l0, 0), np.where(ok, x_mid0, 0))
                      + rect_sum(it_l, y0, y1, np.where(ok, x_mid1, 0), np.where(ok, x_r1, 0)))
            mid_g = rect_sum(it_g, y0, y1, np.where(ok, x_mid0, 0), np.where(ok, x_mid1, 0))
            side_g = (rect_sum(it_g, y0, y1, np.where(ok, x_l0, 0), np.where(ok, x_mid0, 0))
                      + rect_sum(it_g, y0, y1, np.where(ok, x_mid1, 0), np.where(ok, x_r1, 0)))
        else:
            # window slides along y: [above][mid][below] stacked, lw tall, lw wide
            y_mid0 = row - half
            y_mid1 = y_mid0 + lw
            y_a0 = y_mid0 - lw
            y_b1 = y_mid1 + lw
            if y_a0 < 0 or y_b1 > h:
                continue
            x0 = cols - half
            x1 = x0 + lw
            ok = (x0 >= 0) & (x1 <= w)
            if not ok.any():
                continue
            area = lw * lw
            xs0 = np.where(ok, x0, 0)
            xs1 = np.where(ok, x1, 0)
            mid_l = rect_sum(it_l, y_mid0, y_mid1, xs0, xs1)
            side_l = (rect_sum(it_l, y_a0, y_mid0, xs0, xs1)
                      + rect_sum(it_l, y_mid1, y_b1, xs0, xs1))
            mid_g = rect_sum(it_g, y_mid0, y_mid1, xs0, xs1)
            side_g = (rect_sum(it_g, y_a0, y_mid0, xs0, xs1)
                      + rect_sum(it_g, y_mid1, y_b1, xs0, xs1))
        score = (luma_weight * (mid_l / area - side_l / (2 * area))
                 + green_weight * (side_g / (2 * area) - mid_g / area))
        values[i] = np.where(ok, np.maximum(score, 0.0), 0.0)
    return Heatmap(values=values, decimation=decimation, direction=direction)


def nms(h: Heatmap, radius: int, threshold: float) -> np.ndarray:
    """1-D non-maximum suppression along the pass's scan direction.

    Keeps sites at or above the threshold that beat every neighbor within
    the radius; on plateaus the first site in scan order wins. Returns
    (N, 2) full-resolution pixel coordinates (x, y).
    """
    if radius < 1:
        raise InputError("radius must be >= 1")
    v = h.values
    if h.direction == HORIZONTAL:
        rows, cols = np.nonzero(_nms_1d(v, radius, threshold))
    else:
        keep = _nms_1d(v.T, radius, threshold).T
        rows, cols = np.nonzero(keep)
    return np.column_stack([cols * h.decimation, rows * h.decimation]).astype(float)


def _nms_1d(v: np.ndarray, radius: int, threshold: float) -> np.ndarray:
    """Row-wise local maxima: strictly greater than earlier neighbors' scores
    is not required, but later ties are claimed by the earlier site."""
    keep = v >= threshold
    for off in range(1, radius + 1):
        left = np.zeros_like(v)
        left[:, off:] = v[:, :-off]
        right = np.zeros_like(v)
        right[:, :-off] = v[:, off:]
        keep &= v > left          # strictly beat earlier sites
        keep &= v >= right        # allow ties with later sites (first wins)
    return keep


def hough_segments(points, *, rho: float = 2.0, theta: float = math.pi / 180.0,
                   votes: int = 10, min_length: float = 40.0, max_gap: float = 12.0,
                   join_dist: float = 3.0, rng=None) -> list[LineSegment]:
    """Progressive probabilistic Hough transform over candidate points.

    Points are visited in a seeded random order; each visited point votes one
    (rho, theta) sinusoid into the accumulator. When a bin on the voted curve
    reaches the vote threshold, the points near that line are walked along it
    (bridging gaps up to max_gap); a long enough run is emitted as a segment
    and the consumed points are removed and un-voted.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return []
    if rng is None:
        rng = np.random.default_rng(0)
    thetas = np.arange(0.0, math.pi, theta)
    cos_t = np.cos(thetas)
    sin_t = np.sin(thetas)
    # rho = x cos t + y sin t is bounded by the largest point radius
    max_rho = float(np.hypot(pts[:, 0], pts[:, 1]).max()) + 1.0
    n_rho = int(2 * max_rho / rho) + 3
    acc = np.zeros((n_rho, len(thetas)), dtype=np.int32)

    def rho_bins(p):
        return np.rint((p[0] * cos_t + p[1] * sin_t + max_rho) / rho).astype(np.int64)

    alive = np.ones(len(pts), dtype=bool)
    voted = np.zeros(len(pts), dtype=bool)
    order = rng.permutation(len(pts))
    segments: list[LineSegment] = []
    for k in order:
        if not alive[k]:
            continue
        bins = rho_bins(pts[k])
        acc[bins, np.arange(len(thetas))] += 1
        voted[k] = True
        curve = acc[bins, np.arange(len(thetas))]
        best_t = int(np.argmax(curve))
        if curve[best_t] < votes:
            continue
        # walk the winning line: direction (-sin, cos), normal (cos, sin)
        n = np.array([cos_t[best_t], sin_t[best_t]])
        d = np.array([-sin_t[best_t], cos_t[best_t]])
        line_rho = float(pts[k] @ n)
        near = alive & (np.abs(pts @ n - line_rho) <= join_dist)
        idx = np.flatnonzero(near)
        s = pts[idx] @ d
        order_s = np.argsort(s, kind="stable")
        idx = idx[order_s]
        s = s[order_s]
        anchor = int(np.searchsorted(s, float(pts[k] @ d)))
        anchor = min(anchor, len(s) - 1)
        lo = anchor
        while lo > 0 and s[lo] - s[lo - 1] <= max_gap:
            lo -= 1
        hi = anchor
        while hi < len(s) - 1 and s[hi + 1] - s[hi] <= max_gap:
            hi += 1
        run = idx[lo:hi + 1]
        p_start = pts[run[0]]
        p_end = pts[run[-1]]
        length = math.hypot(*(p_end - p_start))
        if length >= min_length:
            segments.append(LineSegment(tuple(p_start), tuple(p_end)))
        # consume the walked run either way so it is not revisited
        was_voted = run[voted[run]]
        for j in was_voted:
            acc[rho_bins(pts[j]), np.arange(len(thetas))] -= 1
            voted[j] = False
        alive[run] = False
    return segments


def _segments_mergeable(a: LineSegment, b: LineSegment, angle_tol: float,
                        dist_tol: float) -> bool:
    if axial_diff(a.direction, b.direction) > angle_tol:
        return False
    d = max(a.point_line_distance(b.p0), a.point_line_distance(b.p1),
            b.point_line_distance(a.p0), b.point_line_distance(a.p1))
    return d <= dist_tol


def _merge_group(group: list[LineSegment]) -> LineSegment:
    """Length-weighted line fit through a group, spanning all endpoints."""
    weights = np.array([s.length for s in group])
    # axial mean direction via angle doubling
    angles = np.array([s.direction for s in group])
    vx = float(np.sum(weights * np.cos(2 * angles)))
    vy = float(np.sum(weights * np.sin(2 * angles)))
    ang = 0.5 * math.atan2(vy, vx) % math.pi
    ux, uy = math.cos(ang), math.sin(ang)
    mids = np.array([s.midpoint for s in group])
    cx, cy = np.average(mids, axis=0, weights=weights)
    ends = np.array([p for s in group for p in (s.p0, s.p1)])
    t = (ends[:, 0] - cx) * ux + (ends[:, 1] - cy) * uy
    t0, t1 = float(t.min()), float(t.max())
    return LineSegment((cx + t0 * ux, cy + t0 * uy), (cx + t1 * ux, cy + t1 * uy))


def merge_segments(segs, angle_tol: float, dist_tol: float) -> list[LineSegment]:
    """Join near-collinear segments into covering lines; repeats to a fixpoint."""
    current = list(segs)
    while True:
        n = len(current)
        if n <= 1:
            return current
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(n):
            for j in range(i + 1, n):
                if _segments_mergeable(current[i], current[j], angle_tol, dist_tol):
                    parent[find(i)] = find(j)
        groups: dict[int, list[LineSegment]] = {}
        for i, s in enumerate(current):
            groups.setdefault(find(i), []).append(s)
        merged = [_merge_group(g) if len(g) > 1 else g[0] for g in groups.values()]
        if len(merged) == n:
            return merged
        current = merged


def detect_corners(lines, angle_tol: float, *, extend_tol: float = 6.0,
                   end_slack: float = 6.0) -> list[CornerObservation]:
    """Right-angle junctions between line pairs.

    Each line contributes an arm per side extending at least extend_tol past
    the intersection; a junction emits one observation per arm pair, which
    yields the 1/2/4 multiplicity for L, T and X junctions.
    """
    out: list[CornerObservation] = []
    lines = list(lines)
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            a, b = lines[i], lines[j]
            if abs(axial_diff(a.direction, b.direction) - math.pi / 2) > angle_tol:
                continue
            x = line_intersection(a.p0, a.unit, b.p0, b.unit)
            if x is None:
                continue
            arms_a = _arms(a, x, extend_tol, end_slack)
            arms_b = _arms(b, x, extend_tol, end_slack)
            if arms_a is None or arms_b is None:
                continue
            for ua in arms_a:
                for ub in arms_b:
                    out.append(CornerObservation(position=x, dir_a=ua, dir_b=ub))
    return out


def _arms(seg: LineSegment, x, extend_tol: float, end_slack: float):
    """Arm directions of seg at intersection x, or None if x misses the segment."""
    ux, uy = seg.unit
    t0 = (seg.p0[0] - x[0]) * ux + (seg.p0[1] - x[1]) * uy
    t1 = (seg.p1[0] - x[0]) * ux + (seg.p1[1] - x[1]) * uy
    lo, hi = min(t0, t1), max(t0, t1)
    if lo > end_slack or hi < -end_slack:
        return None  # intersection beyond the segment span
    arms = []
    if hi >= extend_tol:
        arms.append((ux, uy))
    if lo <= -extend_tol:
        arms.append((-ux, -uy))
    if not arms:
        return None
    return arms


def detect_lines(r: Raster, width_map, cfg: VisionConfig = VisionConfig()):
    """Full pipeline: both passes, NMS, Hough, merge, corners.

    Returns (lines, corners); each physical line appears once in the line
    list and additionally contributes corner observations where it crosses
    another near 90 degrees.
    """
    rng = np.random.default_rng(cfg.seed)
    segments: list[LineSegment] = []
    for direction in (HORIZONTAL, VERTICAL):
        heat = line_response_pass(r, direction, width_map, cfg.decimation,
                                  cfg.luma_weight, cfg.green_weight)
        pts = nms(heat, cfg.nms_radius, cfg.nms_threshold)
        segments.extend(hough_segments(
            pts, rho=cfg.hough_rho, theta=cfg.hough_theta, votes=cfg.hough_votes,
            min_length=cfg.min_length, max_gap=cfg.max_gap,
            join_dist=cfg.join_dist, rng=rng))
    lines = merge_segments(segments, cfg.merge_angle_tol, cfg.merge_dist_tol)
    lines = [s for s in lines if s.length >= cfg.min_length]
    corners = detect_corners(lines, cfg.corner_angle_tol,
                             extend_tol=cfg.corner_extend_tol,
                             end_slack=cfg.corner_end_slack)
    return lines, corners
