"""Deterministic synthetic tactile scenes with analytic ground truth."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from tacmode.markers import MarkerSet, MotionField

# unit vectors of the three coloured LEDs (R, G, B), 120 degrees apart
_LIGHTS = np.array([[math.cos(a), math.sin(a)] for a in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)])


@dataclass
class Dome:
    cx: float
    cy: float
    radius: float
    depth: float = 0.15  # peak shading change, intensity units


@dataclass
class SceneSpec:
    w: int = 640
    h: int = 480
    spacing: float = 36.0
    radius: float = 4.0
    dome: Dome | None = None
    shear_amp: float = 0.0
    shear_center: tuple[float, float] | None = None
    shear_sigma: float = 120.0
    shear_dir: tuple[float, float] = (1.0, 0.0)
    texture_amp: float = 0.01
    marker_color: tuple[float, float, float] = (0.08, 0.08, 0.1)
    seed: int = 0

    def validate(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError("image size must be positive")
        if not self.spacing > 2 * self.radius + 2:
            raise ValueError(
                f"infeasible spec: spacing {self.spacing} must exceed 2*radius+2 = {2 * self.radius + 2}"
            )
        if self.radius <= 0:
            raise ValueError("marker radius must be positive")
        if self.dome is not None and not self.dome.radius < min(self.w, self.h) / 2:
            raise ValueError("infeasible spec: dome radius must be below min(w, h)/2")
        if self.shear_sigma <= 0:
            raise ValueError("shear spread must be positive")
        if np.hypot(*self.shear_dir) == 0:
            raise ValueError("shear direction must be non-zero")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if d.get("dome") is not None:
            d["dome"] = Dome(**d["dome"])
        for key in ("shear_center", "shear_dir", "marker_color"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class Scene:
    markerless: np.ndarray
    with_markers: np.ndarray
    mask: np.ndarray
    markers: MarkerSet
    field: MotionField
    spec: SceneSpec


@dataclass
class SlipSequence:
    images: list
    markers: list[MarkerSet]
    displacement: np.ndarray  # analytic slip displacement per frame, pixels
    direction: tuple[float, float] = (1.0, 0.0)
    scene: Scene | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.markers)

    def __iter__(self):
        return iter(zip(self.images, self.markers))

    def __getitem__(self, k):
        return self.images[k], self.markers[k]


def grid_centers(spec: SceneSpec) -> np.ndarray:
    """Undisplaced marker grid, centred in the image with margin ``spacing/2 + radius``."""
    s, margin = spec.spacing, spec.spacing / 2 + spec.radius
    nx = int(math.floor((spec.w - 2 * margin) / s)) + 1
    ny = int(math.floor((spec.h - 2 * margin) / s)) + 1
    if nx < 1 or ny < 1:
        raise ValueError("infeasible spec: image too small for a single marker")
    x0 = (spec.w - 1 - (nx - 1) * s) / 2
    y0 = (spec.h - 1 - (ny - 1) * s) / 2
    gy, gx = np.meshgrid(y0 + s * np.arange(ny), x0 + s * np.arange(nx), indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def shear_field(spec: SceneSpec, pts: np.ndarray) -> np.ndarray:
    """Gaussian shear ``a * exp(-|x - c|^2 / (2 sigma^2)) * u`` evaluated at ``pts``."""
    c = spec.shear_center if spec.shear_center is not None else ((spec.w - 1) / 2, (spec.h - 1) / 2)
    u = np.asarray(spec.shear_dir, dtype=np.float64)
    u = u / np.hypot(*u)
    d2 = (pts[:, 0] - c[0]) ** 2 + (pts[:, 1] - c[1]) ** 2
    mag = spec.shear_amp * np.exp(-d2 / (2 * spec.shear_sigma**2))
    return mag[:, None] * u[None, :]


def markerless_image(spec: SceneSpec) -> np.ndarray:
    h, w = spec.h, spec.w
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = xs / max(w - 1, 1), ys / max(h - 1, 1)
    img = np.stack(
        [
            0.55 + 0.12 * u - 0.05 * v + 0.04 * np.cos(math.pi * v),
            0.50 + 0.10 * v + 0.03 * np.sin(math.pi * u),
            0.58 - 0.08 * u + 0.04 * v,
        ],
        axis=-1,
    )
    if spec.dome is not None:
        d = spec.dome
        qx, qy = (xs - d.cx) / d.radius, (ys - d.cy) / d.radius
        q2 = qx * qx + qy * qy
        inside = q2 < 1.0
        # height (1 - q^2)^2 has gradient -4 (1 - q^2) q; peak |grad| = 8 / (3 sqrt 3)
        g = np.where(inside, -4.0 * (1.0 - q2), 0.0)
        gx, gy = g * qx, g * qy
        gmax = 8 / (3 * math.sqrt(3))
        for c in range(3):
            img[..., c] += d.depth * (gx * _LIGHTS[c, 0] + gy * _LIGHTS[c, 1]) / gmax
        img += 0.3 * d.depth * np.where(inside, (1.0 - q2) ** 2, 0.0)[..., None]
    if spec.texture_amp > 0:
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
        tex = ndimage.gaussian_filter(rng.standard_normal((h, w)), 2.0)
        tex /= tex.std() or 1.0
        img += spec.texture_amp * tex[..., None]
    return np.clip(img, 0.0, 1.0)


def stamp_markers(
    base: np.ndarray, centers: np.ndarray, radius: float, color
) -> tuple[np.ndarray, np.ndarray]:
    """Composite anti-aliased dark disks; return the image and the coverage > 0 mask."""
    h, w = base.shape[:2]
    cov = np.zeros((h, w))
    reach = radius + 1.0
    for cx, cy in centers:
        x0, x1 = max(int(math.floor(cx - reach)), 0), min(int(math.ceil(cx + reach)) + 1, w)
        y0, y1 = max(int(math.floor(cy - reach)), 0), min(int(math.ceil(cy + reach)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        a = np.clip(radius + 0.5 - np.hypot(xx - cx, yy - cy), 0.0, 1.0)
        np.maximum(cov[y0:y1, x0:x1], a, out=cov[y0:y1, x0:x1])
    col = np.asarray(color, dtype=np.float64)
    out = base * (1.0 - cov[..., None]) + col * cov[..., None]
    return np.clip(out, 0.0, 1.0), cov > 0


def gen_scene(spec: SceneSpec) -> Scene:
    spec.validate()
    grid = grid_centers(spec)
    vec = shear_field(spec, grid)
    stamped = grid + vec
    r = spec.radius
    if (
        (stamped[:, 0] - r - 0.5 < 0).any()
        or (stamped[:, 0] + r + 0.5 > spec.w - 1).any()
        or (stamped[:, 1] - r - 0.5 < 0).any()
        or (stamped[:, 1] + r + 0.5 > spec.h - 1).any()
    ):
        raise ValueError("infeasible spec: shear pushes markers out of the image")
    base = markerless_image(spec)
    with_markers, mask = stamp_markers(base, stamped, r, spec.marker_color)
    return Scene(
        markerless=base,
        with_markers=with_markers,
        mask=mask,
        markers=MarkerSet(stamped, r),
        field=MotionField(MarkerSet(grid, r), vec),
        spec=spec,
    )


def gen_slip_sequence(
    spec: SceneSpec,
    n_frames: int,
    slip_start: int,
    slip_rate: float,
    *,
    direction: tuple[float, float] = (1.0, 0.0),
    jitter: float = 0.2,
    render: bool = True,
) -> SlipSequence:
    """Static hold followed by a rigid translation of ``slip_rate`` px per frame.

    Each frame's marker centers carry independent jitter of norm at most
    ``jitter`` px. Markers whose disk leaves the image are omitted from that
    frame. With ``render=False`` only marker sets are produced (images are None).
    """
    if not 0 <= slip_start < n_frames:
        raise ValueError("slip_start must lie in [0, n_frames)")
    if slip_rate < 0:
        raise ValueError("slip_rate must be non-negative")
    scene = gen_scene(spec)
    u = np.asarray(direction, dtype=np.float64)
    u = u / np.hypot(*u)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    disp = np.maximum(np.arange(n_frames) - slip_start, 0) * float(slip_rate)
    r = spec.radius
    images, sets = [], []
    for k in range(n_frames):
        n = len(scene.markers)
        ang = rng.uniform(0, 2 * math.pi, n)
        rad = jitter * np.sqrt(rng.uniform(0, 1, n))
        noise = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        pts = scene.markers.centers + disp[k] * u + noise
        inside = (
            (pts[:, 0] - r - 0.5 >= 0)
            & (pts[:, 0] + r + 0.5 <= spec.w - 1)
            & (pts[:, 1] - r - 0.5 >= 0)
            & (pts[:, 1] + r + 0.5 <= spec.h - 1)
        )
        pts = pts[inside]
        sets.append(MarkerSet(pts, r))
        if render:
            images.append(stamp_markers(scene.markerless, pts, r, spec.marker_color)[0])
        else:
            images.append(None)
    return SlipSequence(images, sets, disp, (float(u[0]), float(u[1])), scene)
