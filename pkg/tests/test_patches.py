import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tacmode.core import DimensionError
from tacmode.patches import PatchLayout, merge_patches, plan_patches, slice_patches


def test_default_layout_is_six_patches():
    lay = plan_patches(640, 480, 256)
    assert len(lay) == 6
    assert sorted({x for x, _ in lay.origins}) == [0, 192, 384]
    assert sorted({y for _, y in lay.origins}) == [0, 224]


@given(st.integers(16, 300), st.integers(16, 300), st.integers(8, 64))
def test_layout_covers_with_fewest_patches(w, h, p):
    if p > min(w, h):
        with pytest.raises(ValueError):
            plan_patches(w, h, p)
        return
    lay = plan_patches(w, h, p)
    assert (lay.coverage() >= 1).all()
    nx = len({x for x, _ in lay.origins})
    ny = len({y for _, y in lay.origins})
    assert nx == -(-w // p) and ny == -(-h // p)
    assert all(r.within(w, h) for r in lay.rects())


@given(st.integers(0, 2**32 - 1), st.integers(20, 90), st.integers(20, 90), st.integers(10, 20))
def test_slice_merge_roundtrip(seed, w, h, p):
    img = np.random.default_rng(seed).random((h, w, 3))
    lay = plan_patches(w, h, p)
    np.testing.assert_allclose(merge_patches(lay, slice_patches(img, lay)), img, atol=1e-12)


def test_merge_averages_overlaps():
    lay = plan_patches(6, 4, 4)
    patches = [np.full((4, 4, 1), float(k)) for k in range(len(lay))]
    out = merge_patches(lay, patches)[..., 0]
    assert out[0, 0] == 0 and out[0, 5] == 1
    assert out[0, 2] == 0.5


def test_merge_independent_of_patch_order(rng):
    lay = plan_patches(50, 40, 16)
    patches = [rng.random((16, 16, 3)) for _ in range(len(lay))]
    perm = rng.permutation(len(lay))
    lay2 = PatchLayout(lay.image_w, lay.image_h, lay.patch, tuple(lay.origins[i] for i in perm))
    a = merge_patches(lay, patches)
    b = merge_patches(lay2, [patches[i] for i in perm])
    np.testing.assert_array_equal(a, b)


def test_merge_errors():
    lay = plan_patches(32, 32, 16)
    with pytest.raises(DimensionError):
        merge_patches(lay, [np.zeros((16, 16, 3))] * 3)
    with pytest.raises(DimensionError):
        merge_patches(lay, [np.zeros((15, 16, 3))] * 4)
    with pytest.raises(DimensionError):
        slice_patches(np.zeros((31, 32, 3)), lay)
    with pytest.raises(ValueError):
        plan_patches(32, 32, 0)
