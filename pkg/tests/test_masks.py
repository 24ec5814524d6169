import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from roiqa.core import ImageBuffer, RegionMask
from roiqa.masks import (
    CroppedRoi,
    MIN_MASK_AREA,
    RleMask,
    coverage_fractions,
    crop_to_min_rect,
    decode_mask,
    decode_rle,
    embed_patch,
    encode_mask,
    filter_small,
    mask_pool,
    propose_masks,
)

from conftest import rect_mask


class TestRle:
    def test_full_mask(self):
        m = decode_rle(RleMask(size=(2, 2), counts=(0, 4)))
        assert m.bits.all() and m.bits.shape == (2, 2)

    def test_empty_mask(self):
        m = decode_rle(RleMask(size=(2, 2), counts=(4,)))
        assert not m.bits.any()

    def test_malformed_sum_rejected(self):
        with pytest.raises(ValueError):
            RleMask(size=(2, 2), counts=(3,))

    def test_negative_run_rejected(self):
        with pytest.raises(ValueError):
            RleMask(size=(2, 2), counts=(-1, 5))

    @settings(max_examples=200)
    @given(st.data())
    def test_roundtrip_identity(self, data):
        h = data.draw(st.integers(1, 12))
        w = data.draw(st.integers(1, 12))
        bits = data.draw(
            st.lists(st.booleans(), min_size=h * w, max_size=h * w)
        )
        mask = RegionMask.from_array(np.array(bits, dtype=bool).reshape(h, w))
        assert decode_rle(encode_mask(mask)) == mask

    def test_decode_png_nonzero_means_inside(self, tmp_path):
        arr = np.zeros((6, 5), dtype=np.uint8)
        arr[2:4, 1:3] = 177
        p = tmp_path / "m.png"
        Image.fromarray(arr, mode="L").save(p)
        mask = decode_mask(p)
        assert mask == RegionMask.from_array(arr != 0)

    def test_decode_json_dict(self):
        mask = decode_mask({"size": [2, 3], "counts": [1, 4, 1]})
        expect = np.array([[0, 1, 1], [1, 1, 0]], dtype=bool)
        assert np.array_equal(mask.bits, expect)


class TestProposeMasks:
    def test_constant_image_single_connected_cap(self):
        img = ImageBuffer.from_array(np.full((20, 20, 3), 0.5))
        masks = propose_masks(img, 1, seed=5)
        assert len(masks) == 1
        cap = int(0.25 * 20 * 20)
        assert masks[0].popcount == cap
        assert _is_connected(masks[0].bits)

    def test_deterministic(self, photo64):
        a = propose_masks(photo64, 5, seed=9)
        b = propose_masks(photo64, 5, seed=9)
        assert len(a) == len(b) and all(x == y for x, y in zip(a, b))

    def test_quadrant_containment(self):
        # Derived oracle: on a 4-quadrant color image every grown region must
        # stay inside the quadrant of its seed point.
        img = np.zeros((40, 40, 3))
        img[:20, :20] = [0.9, 0.1, 0.1]
        img[:20, 20:] = [0.1, 0.9, 0.1]
        img[20:, :20] = [0.1, 0.1, 0.9]
        img[20:, 20:] = [0.9, 0.9, 0.1]
        buf = ImageBuffer.from_array(img)
        quads = [
            np.zeros((40, 40), bool) for _ in range(4)
        ]
        quads[0][:20, :20] = True
        quads[1][:20, 20:] = True
        quads[2][20:, :20] = True
        quads[3][20:, 20:] = True
        for mask in propose_masks(buf, 5, seed=21):
            inside_one = any((mask.bits & ~q).sum() == 0 for q in quads)
            assert inside_one, "mask leaked across a quadrant boundary"


def _is_connected(bits: np.ndarray) -> bool:
    from collections import deque

    coords = np.argwhere(bits)
    if len(coords) == 0:
        return False
    seen = np.zeros_like(bits)
    q = deque([tuple(coords[0])])
    seen[tuple(coords[0])] = True
    count = 0
    while q:
        r, c = q.popleft()
        count += 1
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < bits.shape[0] and 0 <= cc < bits.shape[1]:
                if bits[rr, cc] and not seen[rr, cc]:
                    seen[rr, cc] = True
                    q.append((rr, cc))
    return count == bits.sum()


class TestFilterSmall:
    def test_exact_boundary_kept(self):
        m = rect_mask(64, 64, 0, 32, 0, 32)  # 1024 px
        assert m.popcount == MIN_MASK_AREA
        assert filter_small([m]) == [m]

    def test_below_boundary_dropped(self):
        m = rect_mask(64, 64, 0, 32, 0, 32)
        bits = np.array(m.bits)
        bits[0, 0] = False  # 1023 px
        assert filter_small([RegionMask.from_array(bits)]) == []

    def test_empty_list(self):
        assert filter_small([]) == []


class TestCropToMinRect:
    def test_full_mask_is_identity(self, photo64):
        mask = RegionMask.from_array(np.ones((64, 64), bool))
        roi = crop_to_min_rect(photo64, mask)
        assert np.array_equal(roi.patch.data, photo64.data)
        assert (roi.top, roi.left) == (0, 0)

    def test_single_pixel(self, photo64):
        bits = np.zeros((64, 64), bool)
        bits[10, 20] = True
        roi = crop_to_min_rect(photo64, RegionMask.from_array(bits))
        assert roi.patch.data.shape == (1, 1, 3)
        assert np.array_equal(roi.patch.data[0, 0], photo64.data[10, 20])
        assert (roi.top, roi.left) == (10, 20)

    def test_l_shape_zeroes_background(self, photo64):
        bits = np.zeros((64, 64), bool)
        bits[10:30, 10:14] = True
        bits[26:30, 10:30] = True
        roi = crop_to_min_rect(photo64, RegionMask.from_array(bits))
        assert roi.patch.data.shape == (20, 20, 3)
        # corner outside the L is zero
        assert np.array_equal(roi.patch.data[0, 10:], np.zeros((10, 3)))
        assert roi.mask.popcount == bits.sum()

    def test_empty_mask_errors(self, photo64):
        with pytest.raises(ValueError):
            crop_to_min_rect(photo64, RegionMask.from_array(np.zeros((64, 64), bool)))

    def test_reembedding_reconstructs_masked_pixels(self, photo64):
        bits = np.zeros((64, 64), bool)
        bits[5:20, 30:50] = True
        bits[9, 33] = False
        mask = RegionMask.from_array(bits)
        roi = crop_to_min_rect(photo64, mask)
        canvas = embed_patch(roi, 64, 64)
        assert np.array_equal(canvas.data[bits], photo64.data[bits])
        assert np.array_equal(canvas.data[~bits], np.zeros_like(canvas.data[~bits]))


def brute_force_mask_pool(featmap: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Direct double-precision oracle: per-cell coverage then weighted mean."""
    C, h, w = featmap.shape
    H, W = bits.shape
    cov = np.zeros((h, w))
    area = np.zeros((h, w))
    for r in range(H):
        for c in range(W):
            cell = (r * h // H, c * w // W)
            area[cell] += 1
            cov[cell] += bits[r, c]
    cov = cov / area
    out = np.zeros(C)
    for ch in range(C):
        num = 0.0
        den = 0.0
        for i in range(h):
            for j in range(w):
                num += cov[i, j] * featmap[ch, i, j]
                den += cov[i, j]
        out[ch] = num / den
    return out


class TestMaskPool:
    def test_left_column_mean(self):
        feat = np.array([[[1.0, 2.0], [3.0, 4.0]]])  # C=1, 2x2
        mask = rect_mask(2, 2, 0, 2, 0, 1)
        assert mask_pool(feat, mask)[0] == 2.0

    def test_full_mask_global_mean(self):
        feat = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        mask = RegionMask.from_array(np.ones((2, 2), bool))
        assert mask_pool(feat, mask)[0] == 2.5

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(25):
            H = int(rng.integers(8, 33))
            W = int(rng.integers(8, 33))
            h = int(rng.integers(1, 9))
            w = int(rng.integers(1, 9))
            bits = rng.random((H, W)) > 0.6
            if not bits.any():
                bits[0, 0] = True
            feat = rng.normal(size=(3, h, w))
            got = mask_pool(feat, RegionMask.from_array(bits))
            want = brute_force_mask_pool(feat, bits)
            assert np.abs(got - want).max() < 1e-12

    def test_invariant_to_zero_coverage_cells(self):
        bits = np.zeros((16, 16), bool)
        bits[:4, :4] = True  # covers only cell (0,0) of a 4x4 grid
        mask = RegionMask.from_array(bits)
        rng = np.random.default_rng(0)
        feat = rng.normal(size=(2, 4, 4))
        base = mask_pool(feat, mask)
        feat2 = feat.copy()
        feat2[:, 1:, :] = 99.0
        feat2[:, :, 1:] = -99.0
        assert np.array_equal(mask_pool(feat2, mask), base)

    def test_empty_mask_errors(self):
        with pytest.raises(ValueError):
            mask_pool(np.ones((1, 2, 2)), RegionMask.from_array(np.zeros((4, 4), bool)))

    def test_coverage_full_mask_is_ones(self):
        mask = RegionMask.from_array(np.ones((12, 12), bool))
        assert np.array_equal(coverage_fractions(mask, 3, 4), np.ones((3, 4)))
