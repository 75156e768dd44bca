"""Marker extraction, marker-offset masks, correspondence and motion fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from tacmode.core import TactileError, as_image, as_mask


class OffsetCollisionError(TactileError, ValueError):
    pass


class TrackingError(TactileError):
    """No marker correspondence could be established."""


@dataclass
class MarkerSet:
    """Marker centers as an ``(N, 2)`` array of ``(x, y)`` with a shared nominal radius."""

    centers: np.ndarray
    radius: float = 4.0

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.size == 0:
            c = np.zeros((0, 2))
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError(f"centers must have shape (N, 2), got {c.shape}")
        self.centers = c

    def __len__(self) -> int:
        return len(self.centers)

    def translated(self, dx: float, dy: float) -> "MarkerSet":
        return MarkerSet(self.centers + np.array([dx, dy]), self.radius)


@dataclass
class MarkerMatch:
    pairs: list[tuple[int, int, float]]
    unmatched_a: list[int]
    unmatched_b: list[int]

    @property
    def a_idx(self) -> np.ndarray:
        return np.array([p[0] for p in self.pairs], dtype=np.intp)

    @property
    def b_idx(self) -> np.ndarray:
        return np.array([p[1] for p in self.pairs], dtype=np.intp)

    @property
    def distances(self) -> np.ndarray:
        return np.array([p[2] for p in self.pairs], dtype=np.float64)


@dataclass
class MotionField:
    """Per-marker displacement vectors anchored at reference marker centers."""

    anchors: MarkerSet
    vectors: np.ndarray
    matched_fraction: float = 1.0
    ref_index: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64).reshape(-1, 2)
        if len(v) != len(self.anchors):
            raise ValueError(f"{len(v)} vectors for {len(self.anchors)} anchors")
        self.vectors = v

    def __len__(self) -> int:
        return len(self.vectors)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.hypot(self.vectors[:, 0], self.vectors[:, 1])


@dataclass
class ExtractConfig:
    """Parameters of the thresholding marker extractor.

    ``spacing`` and ``radius`` are the nominal grid pitch and marker radius in
    pixels. A pixel is a marker candidate when its gray level is below the
    local mean (window ``2 * spacing``) by more than ``max(k * local_std,
    min_contrast)``. The returned mask is dilated by ``dilate`` pixels so it
    also covers the anti-aliased marker rims.
    """

    spacing: float = 36.0
    radius: float = 4.0
    k: float = 2.0
    min_contrast: float = 0.05
    dilate: int = 1
    min_area: float | None = None
    max_area: float | None = None

    def area_range(self) -> tuple[float, float]:
        r = self.radius
        lo = self.min_area if self.min_area is not None else math.pi * max(r - 1.0, 0.0) ** 2
        hi = self.max_area if self.max_area is not None else math.pi * (r + 2.0) ** 2
        return lo, hi


def _points(s) -> np.ndarray:
    if isinstance(s, MarkerSet):
        return s.centers
    return np.asarray(s, dtype=np.float64).reshape(-1, 2)


def extract_markers(img: np.ndarray, cfg: ExtractConfig | None = None) -> tuple[np.ndarray, MarkerSet]:
    """Find dark circular markers; return the marker mask and component centroids."""
    cfg = cfg or ExtractConfig()
    img = as_image(img)
    gray = ((img[..., 0] + img[..., 1] + img[..., 2]) / 3.0).astype(np.float32)
    win = max(3, int(round(2 * cfg.spacing)) | 1)
    mean = ndimage.uniform_filter(gray, win, mode="reflect")
    sq = ndimage.uniform_filter(gray * gray, win, mode="reflect")
    std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
    dark = gray < mean - np.maximum(cfg.k * std, cfg.min_contrast)

    labels, n = ndimage.label(dark)
    if n == 0:
        return np.zeros(gray.shape, bool), MarkerSet(np.zeros((0, 2)), cfg.radius)
    ys, xs = np.nonzero(dark)
    lab = labels[ys, xs]
    area = np.bincount(lab, minlength=n + 1).astype(np.float64)
    lo, hi = cfg.area_range()
    keep = (area >= lo) & (area <= hi)
    keep[0] = False

    with np.errstate(invalid="ignore", divide="ignore"):
        cx = np.bincount(lab, weights=xs, minlength=n + 1) / area
        cy = np.bincount(lab, weights=ys, minlength=n + 1) / area
    ids = np.flatnonzero(keep)
    centers = np.column_stack([cx[ids], cy[ids]])
    # row-major order of centroids keeps the output independent of label numbering
    order = np.lexsort((centers[:, 0], np.round(centers[:, 1], 6)))
    centers = centers[order]

    mask = keep[labels]
    for _ in range(cfg.dilate):
        mask = _grow4(mask)
    return mask, MarkerSet(centers, cfg.radius)


def _grow4(m: np.ndarray) -> np.ndarray:
    # one step of 4-connected dilation
    g = m.copy()
    g[1:] |= m[:-1]
    g[:-1] |= m[1:]
    g[:, 1:] |= m[:, :-1]
    g[:, :-1] |= m[:, 1:]
    return g


def marker_spacing(s) -> float:
    """Median nearest-neighbour distance of a marker set."""
    pts = _points(s)
    if len(pts) < 2:
        raise ValueError("need at least two markers to estimate spacing")
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(d[:, 1]))


def grid_spacing(s) -> tuple[float, float]:
    """Median horizontal and vertical inter-marker spacing.

    Each marker's nearest neighbour lying mostly left/right contributes to the
    horizontal estimate, mostly above/below to the vertical one. Falls back to
    the overall median spacing when a direction has no samples.
    """
    pts = _points(s)
    overall = marker_spacing(pts)
    k = min(len(pts), 9)
    d, idx = cKDTree(pts).query(pts, k=k)
    horiz, vert = [], []
    for i in range(len(pts)):
        h_found = v_found = False
        for dist, j in zip(d[i, 1:], idx[i, 1:]):
            dx, dy = np.abs(pts[j] - pts[i])
            if dx > dy and not h_found:
                horiz.append(dx)
                h_found = True
            elif dy > dx and not v_found:
                vert.append(dy)
                v_found = True
            if h_found and v_found:
                break
    sx = float(np.median(horiz)) if horiz else overall
    sy = float(np.median(vert)) if vert else overall
    return sx, sy


def default_offset(s) -> tuple[int, int]:
    """Half the horizontal and vertical marker spacing, rounded to whole pixels."""
    sx, sy = grid_spacing(s)
    return int(round(sx / 2)), int(round(sy / 2))


def offset_mask(
    mask: np.ndarray, markers: MarkerSet, dx: int, dy: int, *, strict: bool = True
) -> tuple[np.ndarray, MarkerSet]:
    """Translate every marker pixel by ``(dx, dy)`` and clear the original pixels.

    Pixels shifted outside the image are dropped, as are markers whose center
    leaves the image. With ``strict`` an offset under which shifted and
    original markers overlap is rejected instead of silently clipped.
    """
    mask = as_mask(mask)
    dx, dy = int(dx), int(dy)
    if dx == 0 and dy == 0:
        raise ValueError("offset must be non-zero")
    h, w = mask.shape
    out = np.zeros_like(mask)
    ys, xs = np.nonzero(mask)
    nx, ny = xs + dx, ys + dy
    inb = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
    out[ny[inb], nx[inb]] = True

    overlap = int(np.count_nonzero(out & mask))
    if overlap and strict:
        raise OffsetCollisionError(
            f"offset ({dx}, {dy}) makes {overlap} shifted marker pixels overlap the "
            "original markers; use an offset larger than the marker diameter"
        )
    out &= ~mask

    moved = markers.centers + np.array([dx, dy], dtype=np.float64)
    keep = (moved[:, 0] >= 0) & (moved[:, 0] < w) & (moved[:, 1] >= 0) & (moved[:, 1] < h)
    return out, MarkerSet(moved[keep], markers.radius)


def match_nearest(a, b, gate: float) -> MarkerMatch:
    """Greedy global-closest injective matching of two point sets.

    Candidate pairs within ``gate`` are visited in order of increasing
    distance (ties by lowest a-index, then b-index); a pair is accepted when
    neither side is already taken.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    pa, pb = _points(a), _points(b)
    if len(pa) == 0 or len(pb) == 0:
        return MarkerMatch([], list(range(len(pa))), list(range(len(pb))))

    ta, tb = cKDTree(pa), cKDTree(pb)
    cand = ta.sparse_distance_matrix(tb, gate * (1 + 1e-9) + 1e-12, output_type="ndarray")
    ia = cand["i"].astype(np.intp)
    ib = cand["j"].astype(np.intp)
    diff = pa[ia] - pb[ib]
    dist = np.hypot(diff[:, 0], diff[:, 1])
    ok = dist <= gate
    ia, ib, dist = ia[ok], ib[ok], dist[ok]
    order = np.lexsort((ib, ia, dist))

    used_a = np.zeros(len(pa), bool)
    used_b = np.zeros(len(pb), bool)
    pairs = []
    for k in order:
        i, j = ia[k], ib[k]
        if used_a[i] or used_b[j]:
            continue
        used_a[i] = used_b[j] = True
        pairs.append((int(i), int(j), float(dist[k])))
    pairs.sort()
    return MarkerMatch(
        pairs,
        np.flatnonzero(~used_a).tolist(),
        np.flatnonzero(~used_b).tolist(),
    )


def default_gate(s) -> float:
    return 0.45 * marker_spacing(s)


def motion_field(ref: MarkerSet, cur: MarkerSet, gate: float | None = None) -> MotionField:
    """Displacement ``cur - ref`` for every matched reference marker."""
    if gate is None:
        gate = default_gate(ref)
    m = match_nearest(ref, cur, gate)
    if not m.pairs:
        raise TrackingError(f"no markers matched within gate {gate:.3f}px")
    ia, ib = m.a_idx, m.b_idx
    vectors = cur.centers[ib] - ref.centers[ia]
    return MotionField(
        MarkerSet(ref.centers[ia], ref.radius),
        vectors,
        matched_fraction=len(ia) / len(ref),
        ref_index=ia,
    )


def _fmt(v: float) -> str:
    return f"{round(float(v), 3) + 0.0:.3f}"


def write_markers(path, data: MarkerSet | MotionField) -> None:
    """Write a marker set or motion field as ``x,y,dx,dy`` text rows."""
    if isinstance(data, MotionField):
        pts, vec, radius = data.anchors.centers, data.vectors, data.anchors.radius
    else:
        pts, vec, radius = data.centers, np.zeros_like(data.centers), data.radius
    lines = [f"# radius={_fmt(radius)}", "x,y,dx,dy"]
    lines += [",".join(_fmt(v) for v in (p[0], p[1], q[0], q[1])) for p, q in zip(pts, vec)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path, radius: float | None = None) -> MotionField:
    header_seen = False
    rows = []
    file_radius = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "radius":
                file_radius = float(val)
            continue
        if not header_seen:
            if line.replace(" ", "") != "x,y,dx,dy":
                raise ValueError(f"{path}: expected header 'x,y,dx,dy', got {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}: malformed row {line!r}")
        rows.append([float(p) for p in parts])
    if not header_seen:
        raise ValueError(f"{path}: missing header")
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    r = radius if radius is not None else (file_radius if file_radius is not None else 4.0)
    return MotionField(MarkerSet(arr[:, :2], r), arr[:, 2:])


def read_markers(path, radius: float | None = None) -> MarkerSet:
    """Read a marker text file; positions are taken as ``x + dx, y + dy``."""
    f = read_field(path, radius)
    return MarkerSet(f.anchors.centers + f.vectors, f.anchors.radius)
