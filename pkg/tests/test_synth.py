import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tacmode.inpaint import rectify
from tacmode.markers import extract_markers, match_nearest
from tacmode.synth import Dome, SceneSpec, gen_scene, gen_slip_sequence, grid_centers, shear_field


def test_zero_shear_is_exact_grid():
    s = gen_scene(SceneSpec(w=160, h=120, spacing=24, seed=1))
    assert not s.field.vectors.any()
    np.testing.assert_array_equal(s.markers.centers, grid_centers(s.spec))
    np.testing.assert_array_equal(s.field.anchors.centers, s.markers.centers)


def test_default_scene_geometry():
    s = gen_scene(SceneSpec())
    assert len(s.markers) == 17 * 13
    frac = s.mask.mean()
    assert 0.03 < frac < 0.06
    assert s.markerless.shape == (480, 640, 3)
    assert s.markerless.min() >= 0 and s.markerless.max() <= 1


def test_field_matches_analytic_shear():
    spec = SceneSpec(shear_amp=9.0, shear_center=(200, 300), shear_dir=(0.6, -0.8), seed=4)
    s = gen_scene(spec)
    grid = grid_centers(spec)
    np.testing.assert_array_equal(s.field.vectors, shear_field(spec, grid))
    np.testing.assert_array_equal(s.markers.centers, grid + s.field.vectors)
    c = np.argmin(np.hypot(grid[:, 0] - 200, grid[:, 1] - 300))
    d2 = (grid[c, 0] - 200) ** 2 + (grid[c, 1] - 300) ** 2
    assert np.hypot(*s.field.vectors[c]) == pytest.approx(9.0 * np.exp(-d2 / (2 * 120.0**2)))


def test_mask_matches_stamped_pixels(small_scene):
    diff = np.any(small_scene.with_markers != small_scene.markerless, axis=2)
    assert not (diff & ~small_scene.mask).any()
    out = rectify(small_scene.with_markers, small_scene.markerless, small_scene.mask)
    changed = np.any(out != small_scene.with_markers, axis=2)
    assert not (changed & ~small_scene.mask).any()


@given(st.integers(0, 10_000), st.floats(0, 10))
def test_extraction_self_check(seed, amp):
    spec = SceneSpec(w=200, h=160, spacing=30, seed=seed, shear_amp=amp, dome=Dome(100, 80, 50))
    s = gen_scene(spec)
    _, found = extract_markers(s.with_markers)
    m = match_nearest(s.markers, found, 2.0)
    assert len(m.pairs) == len(s.markers) == len(found)
    assert m.distances.max() <= 0.5


def test_generation_is_deterministic():
    a = gen_scene(SceneSpec(seed=9, shear_amp=3, dome=Dome(300, 200, 80)))
    b = gen_scene(SceneSpec(seed=9, shear_amp=3, dome=Dome(300, 200, 80)))
    np.testing.assert_array_equal(a.with_markers, b.with_markers)
    c = gen_scene(SceneSpec(seed=10, shear_amp=3, dome=Dome(300, 200, 80)))
    assert not np.array_equal(a.markerless, c.markerless)


def test_infeasible_specs():
    with pytest.raises(ValueError):
        SceneSpec(spacing=10, radius=4).validate()
    with pytest.raises(ValueError):
        gen_scene(SceneSpec(w=100, h=100, dome=Dome(50, 50, 60)))
    with pytest.raises(ValueError):
        gen_scene(SceneSpec(w=100, h=100, spacing=20, shear_amp=30, shear_sigma=1000))


def test_spec_dict_roundtrip():
    spec = SceneSpec(seed=3, dome=Dome(1, 2, 3), shear_center=(4.0, 5.0))
    assert SceneSpec.from_dict(spec.to_dict()) == spec


def test_slip_sequence_schedule():
    spec = SceneSpec(w=200, h=160, spacing=30, seed=2)
    seq = gen_slip_sequence(spec, 10, 5, 1.0)
    np.testing.assert_array_equal(seq.displacement, [0, 0, 0, 0, 0, 0, 1, 2, 3, 4])
    base = seq.scene.markers.centers
    for k in range(5):
        d = np.hypot(*(seq.markers[k].centers - base).T)
        assert d.max() <= 0.2
    other = gen_slip_sequence(SceneSpec(w=200, h=160, spacing=30, seed=3), 10, 5, 1.0)
    np.testing.assert_array_equal(other.displacement, seq.displacement)
    assert not np.array_equal(other.markers[0].centers, seq.markers[0].centers)


def test_slip_sequence_renders_and_validates():
    spec = SceneSpec(w=200, h=160, spacing=30, seed=2)
    seq = gen_slip_sequence(spec, 3, 1, 2.0, render=False)
    assert seq.images == [None] * 3
    img, ms = gen_slip_sequence(spec, 3, 1, 2.0)[2]
    assert img.shape == (160, 200, 3) and len(ms) > 0
    with pytest.raises(ValueError):
        gen_slip_sequence(spec, 3, 3, 1.0)
    with pytest.raises(ValueError):
        gen_slip_sequence(spec, 3, 1, -1.0)
