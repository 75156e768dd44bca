"""Overlapping square patch layouts and overlap-averaged merging."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from tacmode.core import DimensionError, Rect, crop


@dataclass(frozen=True)
class PatchLayout:
    image_w: int
    image_h: int
    patch: int
    origins: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.origins)

    def rects(self) -> list[Rect]:
        return [Rect(x0, y0, self.patch, self.patch) for x0, y0 in self.origins]

    def coverage(self) -> np.ndarray:
        cnt = np.zeros((self.image_h, self.image_w), dtype=np.int64)
        for r in self.rects():
            cnt[r.slices] += 1
        return cnt


def _axis_origins(size: int, patch: int) -> list[int]:
    if size == patch:
        return [0]
    n = math.ceil((size - patch) / patch) + 1
    step, rem = divmod(size - patch, n - 1)
    # the last ``rem`` strides are one pixel longer, so no stride exceeds the patch
    return [k * step + max(0, k - (n - 1 - rem)) for k in range(n)]


def plan_patches(w: int, h: int, patch: int) -> PatchLayout:
    """Fewest ``patch``-sized squares covering a ``w x h`` image with uniform strides."""
    if patch <= 0:
        raise ValueError("patch size must be positive")
    if patch > w or patch > h:
        raise ValueError(f"patch {patch} larger than image {w}x{h}")
    xs, ys = _axis_origins(w, patch), _axis_origins(h, patch)
    return PatchLayout(w, h, patch, tuple((x, y) for y in ys for x in xs))


def slice_patches(img: np.ndarray, layout: PatchLayout) -> list[np.ndarray]:
    img = np.asarray(img)
    if img.shape[:2] != (layout.image_h, layout.image_w):
        raise DimensionError(f"image {img.shape[:2]} does not match layout")
    return [crop(img, r) for r in layout.rects()]


def merge_patches(layout: PatchLayout, patches) -> np.ndarray:
    """Average overlapping patches; singly covered pixels copy their patch value."""
    patches = [np.asarray(p, dtype=np.float64) for p in patches]
    if len(patches) != len(layout.origins):
        raise DimensionError(f"{len(patches)} patches for {len(layout.origins)} origins")
    for p in patches:
        if p.shape[:2] != (layout.patch, layout.patch):
            raise DimensionError(f"patch shape {p.shape[:2]} != {layout.patch}")
    if len({p.shape[2:] for p in patches}) != 1:
        raise DimensionError("patches disagree in channel count")
    tail = patches[0].shape[2:]
    acc = np.zeros((layout.image_h, layout.image_w) + tail)
    cnt = np.zeros((layout.image_h, layout.image_w))
    # fixed accumulation order (by origin) makes the float sum order-independent
    for k in sorted(range(len(patches)), key=lambda i: (layout.origins[i][1], layout.origins[i][0])):
        r = Rect(*layout.origins[k], layout.patch, layout.patch)
        acc[r.slices] += patches[k]
        cnt[r.slices] += 1
    if (cnt == 0).any():
        raise ValueError("layout leaves pixels uncovered")
    return acc / (cnt[..., None] if acc.ndim == 3 else cnt)
