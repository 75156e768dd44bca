"""Mask rectification and the classical inpainting baselines.

``inpaint_fmm`` is a Telea-style fast-marching fill; ``inpaint_harmonic``
solves the Laplace equation inside the hole (the smooth-continuation limit of
Navier-Stokes style inpainting).
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from tacmode.core import DimensionError, as_image, as_mask, check_same_size

METHODS = ("fmm", "harmonic", "tacdiff")


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class InpaintRequest:
    image: np.ndarray
    mask: np.ndarray
    method: str = "fmm"

    def __post_init__(self):
        self.image = as_image(self.image)
        self.mask = as_mask(self.mask)
        check_same_size(self.image, self.mask)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.mask.size and self.mask.all():
            raise ValueError("mask covers the whole image; nothing to inpaint from")


def rectify(raw: np.ndarray, known: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Take ``raw`` inside the mask and ``known`` outside it."""
    raw = np.asarray(raw, dtype=np.float64)
    known = np.asarray(known, dtype=np.float64)
    mask = as_mask(mask)
    if raw.shape != known.shape or raw.shape[:2] != mask.shape:
        raise DimensionError(
            f"dimension mismatch: raw {raw.shape}, known {known.shape}, mask {mask.shape}"
        )
    m = mask[..., None] if raw.ndim == 3 else mask
    return np.where(m, raw, known)


def _eikonal(T: np.ndarray, accepted: np.ndarray, y: int, x: int) -> float:
    h, w = T.shape
    a = b = math.inf
    if x > 0 and accepted[y, x - 1]:
        a = T[y, x - 1]
    if x < w - 1 and accepted[y, x + 1]:
        a = min(a, T[y, x + 1])
    if y > 0 and accepted[y - 1, x]:
        b = T[y - 1, x]
    if y < h - 1 and accepted[y + 1, x]:
        b = min(b, T[y + 1, x])
    if math.isinf(a) and math.isinf(b):
        return math.inf
    if math.isinf(a) or math.isinf(b) or abs(a - b) >= 1.0:
        return min(a, b) + 1.0
    return 0.5 * (a + b + math.sqrt(2.0 - (a - b) ** 2))


def fmm_distance(mask: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Fast-marching distance from the hole boundary.

    Returns the arrival-time field ``T`` (0 on known pixels) and the order in
    which hole pixels were accepted as ``(y, x)`` tuples. Accepted times are
    non-decreasing along that order.
    """
    mask = as_mask(mask)
    h, w = mask.shape
    T = np.where(mask, math.inf, 0.0)
    accepted = ~mask
    heap: list[tuple[float, int, int]] = []
    ys, xs = np.nonzero(mask & ndimage.binary_dilation(~mask))
    for y, x in zip(ys.tolist(), xs.tolist()):
        t = _eikonal(T, accepted, y, x)
        T[y, x] = t
        heap.append((t, y, x))
    heapq.heapify(heap)

    order = []
    while heap:
        t, y, x = heapq.heappop(heap)
        if accepted[y, x] or t > T[y, x]:
            continue
        accepted[y, x] = True
        order.append((y, x))
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < h and 0 <= nx < w and not accepted[ny, nx]:
                nt = _eikonal(T, accepted, ny, nx)
                if nt < T[ny, nx]:
                    T[ny, nx] = nt
                    heapq.heappush(heap, (nt, ny, nx))
    return T, order


def _unit_gradient(T: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # central differences of the finite arrival times, one-sided at the image edge
    Tf = np.where(np.isfinite(T), T, 0.0)
    gy, gx = np.gradient(Tf)
    n = np.hypot(gx, gy)
    n[n == 0] = 1.0
    return np.where(mask, gx / n, 0.0), np.where(mask, gy / n, 0.0)


def _known_gradient(img: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Per-pixel intensity gradient ``(h, w, 2, 3)`` from known neighbours only.

    Central differences where both neighbours are known, one-sided where only
    one is, zero otherwise.
    """
    h, w = known.shape
    grad = np.zeros((h, w, 2, 3))
    for axis in (0, 1):
        fwd = np.zeros_like(known)
        bwd = np.zeros_like(known)
        d_fwd = np.zeros_like(img)
        d_bwd = np.zeros_like(img)
        if axis == 1:
            fwd[:, :-1] = known[:, 1:]
            bwd[:, 1:] = known[:, :-1]
            d_fwd[:, :-1] = img[:, 1:] - img[:, :-1]
            d_bwd[:, 1:] = img[:, 1:] - img[:, :-1]
        else:
            fwd[:-1] = known[1:]
            bwd[1:] = known[:-1]
            d_fwd[:-1] = img[1:] - img[:-1]
            d_bwd[1:] = img[1:] - img[:-1]
        both = (fwd & bwd)[..., None]
        g = np.where(both, 0.5 * (d_fwd + d_bwd), np.where(fwd[..., None], d_fwd, np.where(bwd[..., None], d_bwd, 0.0)))
        # index 0 holds d/dx, index 1 d/dy
        grad[:, :, 1 - axis] = np.where(known[..., None], g, 0.0)
    return grad


def _gradients_at(img, known, ys, xs) -> np.ndarray:
    """Known-neighbour gradients ``(n, 2, 3)`` at the given pixels, as in :func:`_known_gradient`."""
    h, w = known.shape
    g = np.zeros((len(ys), 2, img.shape[2]))
    for k, (dy, dx) in enumerate(((0, 1), (1, 0))):
        fy, fx, by, bx = ys + dy, xs + dx, ys - dy, xs - dx
        f = (fy < h) & (fx < w)
        f[f] = known[fy[f], fx[f]]
        b = (by >= 0) & (bx >= 0)
        b[b] = known[by[b], bx[b]]
        c = img[ys, xs]
        vf = img[np.minimum(fy, h - 1), np.minimum(fx, w - 1)]
        vb = img[np.maximum(by, 0), np.maximum(bx, 0)]
        g[:, k] = np.where(
            (f & b)[:, None], 0.5 * (vf - vb), np.where(f[:, None], vf - c, np.where(b[:, None], c - vb, 0.0))
        )
    return g


def _independent_batches(mask: np.ndarray, order, reach: int) -> list[np.ndarray]:
    """Split the fill order into batches of mutually independent pixels.

    Hole components closer than ``reach`` pixels form one group. The k-th
    batch holds the k-th pixel (in fill order) of every group, so each group
    keeps its own order while far-apart groups advance together.
    """
    d = (reach + 1) // 2
    grown = ndimage.binary_dilation(mask, structure=np.ones((3, 3), bool), iterations=d) if d else mask
    labels, _ = ndimage.label(grown, structure=np.ones((3, 3), int))
    pts = np.array(order, dtype=np.intp).reshape(-1, 2)
    g = labels[pts[:, 0], pts[:, 1]]
    rank = np.zeros(len(pts), dtype=np.intp)
    seen: dict[int, int] = {}
    for i, gi in enumerate(g.tolist()):
        rank[i] = seen.get(gi, 0)
        seen[gi] = rank[i] + 1
    by_rank = np.argsort(rank, kind="stable")
    bounds = np.flatnonzero(np.diff(rank[by_rank])) + 1
    return [pts[b] for b in np.split(by_rank, bounds)]


def inpaint_fmm(
    image: np.ndarray,
    mask: np.ndarray,
    radius: float = 5.0,
    *,
    return_order: bool = False,
):
    """Fill the masked pixels in fast-marching order.

    Each pixel ``p`` becomes a weighted mean over already-known pixels ``q``
    within ``radius`` of the first-order estimates ``I(q) + grad I(q) . (p - q)``.
    The weight is ``dir * dst * lev`` with ``dir = |cos|`` of the angle between
    ``p - q`` and the level-set normal at ``p``, ``dst = 1/|p - q|^2`` and
    ``lev = 1/(1 + |T(q) - T(p)|)``. Holes too far apart to see each other
    are filled simultaneously.
    """
    if not radius >= 1:
        raise ValueError("radius must be at least 1")
    req = InpaintRequest(image, mask, "fmm")
    img, mask = req.image, req.mask
    out = img.copy()
    if not mask.any():
        return (out, []) if return_order else out

    h, w = mask.shape
    T, order = fmm_distance(mask)
    nx_, ny_ = _unit_gradient(T, mask)
    known = ~mask
    grad = _known_gradient(out, known)
    R = int(math.floor(radius))
    oy, ox = np.mgrid[-R : R + 1, -R : R + 1]
    r2 = (ox * ox + oy * oy).astype(np.float64)
    sel = (r2 > 0) & (r2 <= radius * radius)
    oy, ox, r2 = oy[sel], ox[sel], r2[sel]
    inv_r2 = 1.0 / r2
    inv_r = np.sqrt(inv_r2)
    # q -> p offsets, used by the first-order term
    to_px, to_py = -ox.astype(np.float64), -oy.astype(np.float64)
    # the filled pixel and its 4-neighbours get fresh gradients
    sy, sx = np.array([0, -1, 1, 0, 0]), np.array([0, 0, 0, -1, 1])

    # a fill reads pixels within R and rewrites gradients one pixel around itself
    for batch in _independent_batches(mask, order, R + 2):
        y, x = batch[:, 0], batch[:, 1]
        qy, qx = y[:, None] + oy, x[:, None] + ox
        ok = (qy >= 0) & (qy < h) & (qx >= 0) & (qx < w)
        qy, qx = np.where(ok, qy, 0), np.where(ok, qx, 0)
        ok &= known[qy, qx]
        cos = np.abs(ox * nx_[y, x][:, None] + oy * ny_[y, x][:, None]) * inv_r
        wgt = np.maximum(cos, 1e-6) * inv_r2 / (1.0 + np.abs(T[qy, qx] - T[y, x][:, None]))
        wgt = np.where(ok, wgt, 0.0)
        gq = grad[qy, qx]
        est = out[qy, qx] + to_px[:, None] * gq[:, :, 0] + to_py[:, None] * gq[:, :, 1]
        out[y, x] = np.einsum("bk,bkc->bc", wgt, est) / wgt.sum(axis=1)[:, None]
        known[y, x] = True
        yy, xx = (y[:, None] + sy).ravel(), (x[:, None] + sx).ravel()
        keep = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yy, xx = yy[keep], xx[keep]
        keep = known[yy, xx]
        yy, xx = yy[keep], xx[keep]
        grad[yy, xx] = _gradients_at(out, known, yy, xx)

    np.clip(out, 0.0, 1.0, out=out)
    return (out, order) if return_order else out


@dataclass
class HarmonicInfo:
    iterations: int
    converged: bool
    max_change: float


def inpaint_harmonic(
    image: np.ndarray,
    mask: np.ndarray,
    tol: float = 1e-6,
    max_iters: int | None = None,
    *,
    return_info: bool = False,
):
    """Solve the discrete Laplace equation inside the hole.

    Known pixels are Dirichlet data; the image border is treated as a
    reflecting (Neumann) boundary. Red-black SOR sweeps run until the largest
    per-sweep update is below ``tol``. Hitting ``max_iters`` (default 10 x hole
    size) emits a ``ConvergenceWarning`` and returns the current iterate.
    """
    req = InpaintRequest(image, mask, "harmonic")
    img, mask = req.image, req.mask
    out = img.copy()
    n_hole = int(mask.sum())
    if n_hole == 0:
        info = HarmonicInfo(0, True, 0.0)
        return (out, info) if return_info else out
    if max_iters is None:
        max_iters = 10 * n_hole

    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    flat = out.reshape(-1, 3)
    idx = ys * w + xs
    nbrs = np.stack(
        [
            np.where(ys > 0, idx - w, -1),
            np.where(ys < h - 1, idx + w, -1),
            np.where(xs > 0, idx - 1, -1),
            np.where(xs < w - 1, idx + 1, -1),
        ],
        axis=1,
    )
    valid = nbrs >= 0
    cnt = valid.sum(axis=1).astype(np.float64)
    nbrs = np.where(valid, nbrs, 0)

    # start from the nearest known value
    _, (iy, ix) = ndimage.distance_transform_edt(mask, return_indices=True)
    flat[idx] = img[iy[ys, xs], ix[ys, xs]]

    labels, n = ndimage.label(mask)
    extent = max(max(s.stop - s.start for s in sl) for sl in ndimage.find_objects(labels))
    omega = 2.0 / (1.0 + math.sin(math.pi / (extent + 1)))

    colors = [((ys + xs) % 2) == c for c in (0, 1)]
    parts = [(idx[c], nbrs[c], valid[c], cnt[c]) for c in colors]
    it, change = 0, math.inf
    while it < max_iters:
        it += 1
        change = 0.0
        for pidx, pn, pv, pc in parts:
            if len(pidx) == 0:
                continue
            s = (flat[pn] * pv[..., None]).sum(axis=1) / pc[:, None]
            delta = omega * (s - flat[pidx])
            flat[pidx] += delta
            change = max(change, float(np.abs(delta).max()))
        if change < tol:
            break
    converged = change < tol
    if not converged:
        warnings.warn(
            f"harmonic inpainting did not converge in {max_iters} sweeps (last change {change:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    out = np.clip(out, 0.0, 1.0)
    info = HarmonicInfo(it, converged, change)
    return (out, info) if return_info else out


def inpaint(request: InpaintRequest, **kwargs) -> np.ndarray:
    """Run the requested method; the result always equals the input outside the mask."""
    if request.method == "fmm":
        out = inpaint_fmm(request.image, request.mask, **kwargs)
    elif request.method == "harmonic":
        out = inpaint_harmonic(request.image, request.mask, **kwargs)
    else:
        from tacmode.tacdiff import inpaint_tacdiff

        out = inpaint_tacdiff(request.image, request.mask, **kwargs)
    return rectify(out, request.image, request.mask)
