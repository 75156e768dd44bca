"""Image and mask containers, PNG IO and cropping.

Images are ``float64`` arrays of shape ``(H, W, 3)`` with values in [0, 1];
masks are ``bool`` arrays of shape ``(H, W)``. Pixel ``(x, y)`` is column
``x``, row ``y``, origin top-left, so it lives at ``arr[y, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class TactileError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(TactileError, ValueError):
    pass


class PngFormatError(TactileError, ValueError):
    pass


def as_image(arr, *, name: str = "image") -> np.ndarray:
    """Validate and return ``arr`` as an ``(H, W, 3)`` float64 image in [0, 1]."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if img.size and (not np.isfinite(img).all() or img.min() < 0.0 or img.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return img


def as_mask(arr, *, name: str = "mask") -> np.ndarray:
    m = np.asarray(arr)
    if m.ndim != 2:
        raise DimensionError(f"{name} must have shape (H, W), got {m.shape}")
    if m.dtype != np.bool_:
        if not np.isin(m, (0, 1)).all():
            raise ValueError(f"{name} values must be exactly 0 or 1")
        m = m.astype(bool)
    return m


def check_same_size(*arrays: np.ndarray) -> None:
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(shapes)}")


def to_bytes(img: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] values to uint8 with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_png(path) -> np.ndarray:
    """Load an 8-bit RGB PNG as an image or an 8-bit grayscale PNG as a mask."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise PngFormatError(f"{path}: not a PNG file (format {im.format})")
            mode = im.mode
            if mode not in ("RGB", "L"):
                raise PngFormatError(
                    f"{path}: unsupported PNG mode {mode!r}; expected 8-bit RGB or grayscale"
                )
            data = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise PngFormatError(f"{path}: malformed PNG") from exc
    except OSError as exc:
        raise PngFormatError(f"{path}: malformed PNG ({exc})") from exc
    if mode == "L":
        return data > 127
    return data.astype(np.float64) / 255.0


def save_png(img: np.ndarray, path) -> None:
    """Write an image (``round(v*255)``) or a mask (0/255) as an 8-bit PNG."""
    arr = np.asarray(img)
    if arr.ndim == 2:
        data = as_mask(arr).astype(np.uint8) * 255
        mode = "L"
    else:
        data = to_bytes(as_image(arr))
        mode = "RGB"
    path = Path(path)
    try:
        Image.fromarray(data, mode=mode).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    w: int
    h: int

    def within(self, width: int, height: int) -> bool:
        return (
            self.x0 >= 0
            and self.y0 >= 0
            and self.w >= 0
            and self.h >= 0
            and self.x0 + self.w <= width
            and self.y0 + self.h <= height
        )

    def compose(self, inner: "Rect") -> "Rect":
        """Rect equivalent to cropping by ``self`` then by ``inner``."""
        return Rect(self.x0 + inner.x0, self.y0 + inner.y0, inner.w, inner.h)

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.h), slice(self.x0, self.x0 + self.w)


def crop(img: np.ndarray, r: Rect) -> np.ndarray:
    arr = np.asarray(img)
    height, width = arr.shape[:2]
    if not r.within(width, height):
        raise ValueError(f"{r} out of bounds for {width}x{height} image")
    return arr[r.slices].copy()
