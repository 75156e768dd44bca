import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve

from tacmode.core import DimensionError
from tacmode.inpaint import (
    ConvergenceWarning,
    InpaintRequest,
    _unit_gradient,
    fmm_distance,
    inpaint,
    inpaint_fmm,
    inpaint_harmonic,
    rectify,
)
from tacmode.tacdiff import schedule_linear

from conftest import random_mask


def dense_laplace(img, mask):
    """Direct sparse solve of the 5-point Laplace equation, Neumann at the image edge."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    pos = -np.ones((h, w), int)
    pos[ys, xs] = np.arange(len(ys))
    rows, cols, vals = [], [], []
    rhs = np.zeros((len(ys), 3))
    for k, (y, x) in enumerate(zip(ys, xs)):
        deg = 0
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if not (0 <= ny < h and 0 <= nx < w):
                continue
            deg += 1
            if mask[ny, nx]:
                rows.append(k)
                cols.append(pos[ny, nx])
                vals.append(-1.0)
            else:
                rhs[k] += img[ny, nx]
        rows.append(k)
        cols.append(k)
        vals.append(float(deg))
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(ys), len(ys)))
    out = img.copy()
    out[ys, xs] = np.column_stack([spsolve(A, rhs[:, c]) for c in range(3)])
    return out


def _grad(img, known, y, x):
    h, w = known.shape
    g = np.zeros((2, 3))
    for k, (dy, dx) in enumerate(((0, 1), (1, 0))):
        f = y + dy < h and x + dx < w and known[y + dy, x + dx]
        b = y - dy >= 0 and x - dx >= 0 and known[y - dy, x - dx]
        if f and b:
            g[k] = 0.5 * (img[y + dy, x + dx] - img[y - dy, x - dx])
        elif f:
            g[k] = img[y + dy, x + dx] - img[y, x]
        elif b:
            g[k] = img[y, x] - img[y - dy, x - dx]
    return g


def sequential_fmm(img, mask, radius):
    """Pixel-by-pixel fill in arrival order, written with plain loops."""
    h, w = mask.shape
    out = img.copy()
    T, order = fmm_distance(mask)
    nx, ny = _unit_gradient(T, mask)
    known = ~mask
    grad = np.zeros((h, w, 2, 3))
    for y, x in zip(*np.nonzero(known)):
        grad[y, x] = _grad(out, known, y, x)
    R = int(radius)
    for y, x in order:
        acc, tot = np.zeros(3), 0.0
        for dy in range(-R, R + 1):
            for dx in range(-R, R + 1):
                r2 = dx * dx + dy * dy
                qy, qx = y + dy, x + dx
                if r2 == 0 or r2 > radius * radius or not (0 <= qy < h and 0 <= qx < w) or not known[qy, qx]:
                    continue
                cos = abs(dx * nx[y, x] + dy * ny[y, x]) / np.sqrt(r2)
                wt = max(cos, 1e-6) / r2 / (1 + abs(T[qy, qx] - T[y, x]))
                acc += wt * (out[qy, qx] - dx * grad[qy, qx, 0] - dy * grad[qy, qx, 1])
                tot += wt
        out[y, x] = acc / tot
        known[y, x] = True
        for yy, xx in ((y, x), (y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= yy < h and 0 <= xx < w and known[yy, xx]:
                grad[yy, xx] = _grad(out, known, yy, xx)
    return np.clip(out, 0, 1)


@pytest.mark.parametrize("radius", [1.0, 3.0, 5.0])
def test_fmm_matches_sequential_fill(radius, rng):
    img = rng.random((30, 34, 3))
    mask = random_mask(rng, 30, 34, 0.15)
    np.testing.assert_allclose(inpaint_fmm(img, mask, radius), sequential_fmm(img, mask, radius), atol=1e-12)


def test_fmm_parallel_holes_match_sequential_fill(small_scene):
    img, mask = small_scene.with_markers, small_scene.mask
    np.testing.assert_allclose(inpaint_fmm(img, mask), sequential_fmm(img, mask, 5.0), atol=1e-12)


def test_rectify_is_exact(rng):
    raw, known = rng.random((8, 9, 3)), rng.random((8, 9, 3))
    m = rng.random((8, 9)) < 0.4
    out = rectify(raw, known, m)
    np.testing.assert_array_equal(out[m], raw[m])
    np.testing.assert_array_equal(out[~m], known[~m])
    with pytest.raises(DimensionError):
        rectify(raw, known[:-1], m)


def test_request_validation():
    img = np.zeros((4, 4, 3))
    with pytest.raises(ValueError):
        InpaintRequest(img, np.ones((4, 4), bool))
    with pytest.raises(ValueError):
        InpaintRequest(img, np.zeros((4, 4), bool), method="telea")
    with pytest.raises(DimensionError):
        InpaintRequest(img, np.zeros((4, 5), bool))


@pytest.mark.parametrize("method", ["fmm", "harmonic"])
def test_empty_mask_is_identity(method, rng):
    img = rng.random((10, 12, 3))
    out = inpaint(InpaintRequest(img, np.zeros((10, 12), bool), method))
    np.testing.assert_array_equal(out, img)


def test_harmonic_matches_direct_solve(rng):
    img = ndimage.gaussian_filter(rng.random((24, 30, 3)), (2, 2, 0))
    mask = np.zeros((24, 30), bool)
    mask[5:15, 8:20] = True
    mask[18:24, 0:6] = True  # touches the image corner
    out = inpaint_harmonic(img, mask, tol=1e-12, max_iters=100000)
    np.testing.assert_allclose(out, dense_laplace(img, mask), atol=1e-9)


def test_harmonic_reproduces_linear_ramp():
    x = np.linspace(0.1, 0.9, 64)
    img = np.repeat(np.repeat(x[None, :, None], 32, axis=0), 3, axis=2)
    mask = np.zeros((32, 64), bool)
    mask[8:24, 20:40] = True
    out = inpaint_harmonic(img, mask, tol=1e-10)
    np.testing.assert_allclose(out, img, atol=1e-7)


def test_fmm_reproduces_linear_ramp():
    x = np.linspace(0.1, 0.9, 64)
    img = np.repeat(np.repeat(x[None, :, None], 32, axis=0), 3, axis=2)
    mask = np.zeros((32, 64), bool)
    mask[8:24, 20:40] = True
    out = inpaint_fmm(img, mask)
    np.testing.assert_allclose(out, img, atol=0.02 * (x[-1] - x[0]))


@pytest.mark.parametrize("fn", [inpaint_fmm, inpaint_harmonic])
def test_single_pixel_hole_in_constant(fn):
    img = np.full((9, 9, 3), 0.3)
    mask = np.zeros((9, 9), bool)
    mask[4, 4] = True
    np.testing.assert_allclose(fn(img, mask), img, atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.02, 0.5))
def test_maximum_principle(seed, frac):
    rng = np.random.default_rng(seed)
    img = rng.random((14, 16, 3))
    mask = random_mask(rng, 14, 16, frac)
    lo, hi = img[~mask].min(axis=0), img[~mask].max(axis=0)
    for out in (inpaint_harmonic(img, mask), inpaint_fmm(img, mask)):
        assert (out >= 0).all() and (out <= 1).all()
        np.testing.assert_array_equal(out[~mask], img[~mask])
    h = inpaint_harmonic(img, mask)
    assert (h[mask] >= lo - 1e-6).all() and (h[mask] <= hi + 1e-6).all()


def test_fmm_distance_band_is_exact():
    mask = np.zeros((10, 20), bool)
    mask[:, 5:12] = True
    T, order = fmm_distance(mask)
    cols = np.arange(20)
    expect = np.minimum(np.abs(cols - 4), np.abs(cols - 12)).astype(float)
    expect[~mask[0]] = 0
    np.testing.assert_allclose(T, np.tile(expect, (10, 1)))
    assert len(order) == mask.sum()


@given(st.integers(0, 2**32 - 1))
def test_fmm_order_is_monotone_and_close_to_edt(seed):
    rng = np.random.default_rng(seed)
    mask = ndimage.binary_dilation(rng.random((20, 20)) < 0.05, iterations=2)
    mask[0, 0] = False
    T, order = fmm_distance(mask)
    times = [T[y, x] for y, x in order]
    assert all(a <= b for a, b in zip(times, times[1:]))
    assert sorted(order) == sorted(zip(*np.nonzero(mask)))
    edt = ndimage.distance_transform_edt(mask)
    assert np.abs(T[mask] - edt[mask]).max() <= 1.0


def test_fmm_return_order(rng):
    img = rng.random((10, 10, 3))
    mask = np.zeros((10, 10), bool)
    mask[3:6, 3:6] = True
    out, order = inpaint_fmm(img, mask, return_order=True)
    assert order[-1] == (4, 4)


def test_harmonic_convergence_warning(rng):
    img = rng.random((30, 30, 3))
    mask = np.zeros((30, 30), bool)
    mask[5:25, 5:25] = True
    with pytest.warns(ConvergenceWarning):
        out, info = inpaint_harmonic(img, mask, tol=1e-14, max_iters=3, return_info=True)
    assert not info.converged and info.iterations == 3
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, info = inpaint_harmonic(img, mask, return_info=True)
    assert info.converged


def test_inpaint_dispatch_tacdiff(small_scene):
    req = InpaintRequest(small_scene.with_markers, small_scene.mask, "tacdiff")
    out = inpaint(req, schedule=schedule_linear(5), rng=0)
    m = small_scene.mask
    np.testing.assert_array_equal(out[~m], small_scene.with_markers[~m])
    assert np.abs(out - small_scene.markerless)[m].max() < 0.2
