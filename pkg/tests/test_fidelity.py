import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roiqa.core import (
    DistortionType,
    ImageBuffer,
    LevelScale,
    QUALITY_HUMAN,
    QUALITY_ORACLE,
    RegionMask,
    ScaleKind,
    SEVERITY_HUMAN,
)
from roiqa.distortions import DistortionSpec, apply_distortion, apply_transfer
from roiqa.fidelity import (
    FidelityScore,
    discretize,
    distortion_label,
    fr_score,
    roi_importance_score,
    roi_quality_score,
)

from conftest import rect_mask, texture_image
from fr_reference import reference_fr_score

# Frozen golden values (computed once with the loop-based reference oracle).
CHECKERBOARD_GOLDEN = 0.2421313836826531
IMPORTANCE_GOLDEN = {
    # (distortion, mask) -> importance on the standard composite fixture
    ("blur", "sky"): 0.030399474386937464,
    ("blur", "subject"): 0.20076445003203236,
    ("noise", "sky"): 0.3529916444976985,
    ("noise", "subject"): 0.1754247379349062,
}


def checkerboard_pair(n=32):
    yy, xx = np.mgrid[0:n, 0:n]
    checker = ((yy + xx) % 2 * 2 - 1).astype(float)
    img = np.repeat((0.5 + 0.25 * checker)[:, :, None], 3, axis=2)
    gray = np.full((n, n, 3), float(img.mean()))
    return ImageBuffer.from_array(img), ImageBuffer.from_array(gray)


def composite_fixture():
    """Flat blue 'sky' top half over a textured 'subject' bottom half."""
    rng = np.random.default_rng(5)
    img = np.zeros((64, 64, 3))
    img[:32] = [0.55, 0.65, 0.85]
    yy, xx = np.mgrid[0:32, 0:64]
    tex = 0.5 + 0.2 * np.sin(xx * 0.9) * np.cos(yy * 1.1) + rng.normal(0, 0.08, (32, 64))
    img[32:] = np.clip(np.repeat(tex[:, :, None], 3, axis=2) * [1.0, 0.8, 0.6], 0, 1)
    ref = ImageBuffer.from_array(np.clip(img, 0, 1))
    sky = rect_mask(64, 64, 4, 28, 8, 56)
    subject = rect_mask(64, 64, 36, 60, 8, 56)
    return ref, sky, subject


class TestFrScore:
    def test_identical_inputs_score_one(self, photo64):
        assert fr_score(photo64, photo64).value == 1.0

    def test_noise_monotonicity_contract(self, photo64):
        mild = apply_transfer(photo64, DistortionType.NOISE, 0.05,
                              noise_rng=np.random.default_rng(1))
        harsh = apply_transfer(photo64, DistortionType.NOISE, 0.3,
                               noise_rng=np.random.default_rng(1))
        assert fr_score(harsh, photo64).value < fr_score(mild, photo64).value

    def test_checkerboard_golden_constant(self):
        img, gray = checkerboard_pair()
        got = fr_score(img, gray).value
        assert got == pytest.approx(CHECKERBOARD_GOLDEN, abs=1e-12)
        # and the production path still agrees with the loop oracle
        assert got == pytest.approx(reference_fr_score(img.data, gray.data), abs=1e-12)

    def test_matches_reference_on_random_pairs(self):
        rng = np.random.default_rng(8)
        for _ in range(3):
            a = ImageBuffer.from_array(rng.random((24, 20, 3)))
            b = ImageBuffer.from_array(rng.random((24, 20, 3)))
            assert fr_score(a, b).value == pytest.approx(
                reference_fr_score(a.data, b.data), abs=1e-12
            )

    def test_dimension_mismatch_errors(self, photo64):
        other = texture_image(32)
        with pytest.raises(ValueError):
            fr_score(photo64, other)

    def test_too_small_errors(self):
        tiny = ImageBuffer.from_array(np.zeros((4, 12, 3)))
        with pytest.raises(ValueError):
            fr_score(tiny, tiny)

    def test_range_and_symmetric_structure(self, photo64):
        noisy = apply_transfer(photo64, DistortionType.NOISE, 0.2,
                               noise_rng=np.random.default_rng(0))
        ab = fr_score(noisy, photo64).value
        ba = fr_score(photo64, noisy).value
        assert 0.0 <= ab <= 1.0
        assert ab == pytest.approx(ba, abs=1e-12)


class TestRoiQualityScore:
    def test_identical_roi_scores_one(self, photo64):
        mask = rect_mask(64, 64, 8, 40, 8, 48)
        assert roi_quality_score(photo64, photo64, mask).value == 1.0

    def test_blur_levels_monotone_on_roi(self, photo64):
        mask = rect_mask(64, 64, 8, 56, 8, 56)
        scores = []
        for lvl in range(20):
            dist = apply_distortion(
                photo64, DistortionSpec.for_level(DistortionType.BLUR, lvl, 3, "fix")
            )
            scores.append(roi_quality_score(dist, photo64, mask).value)
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_roi_outside_local_distortion_scores_one(self, photo64):
        # splice a distorted square into the reference; an ROI elsewhere is untouched
        dist_full = apply_transfer(photo64, DistortionType.CONTRAST, 0.15)
        composite = np.array(photo64.data)
        composite[40:60, 40:60] = dist_full.data[40:60, 40:60]
        composite_img = ImageBuffer.from_array(composite)
        mask = rect_mask(64, 64, 4, 24, 4, 24)
        assert roi_quality_score(composite_img, photo64, mask).value == 1.0


class TestRoiImportanceScore:
    def test_identity_replacement_is_zero(self, photo64):
        mask = rect_mask(64, 64, 10, 30, 10, 30)
        assert roi_importance_score(photo64, photo64, mask) == 0.0

    def test_full_mask_equals_one_minus_fr(self, photo64):
        noisy = apply_transfer(photo64, DistortionType.NOISE, 0.15,
                               noise_rng=np.random.default_rng(2))
        full = RegionMask.from_array(np.ones((64, 64), bool))
        direct = 1.0 - fr_score(noisy, photo64).value
        assert roi_importance_score(noisy, photo64, full) == pytest.approx(direct, abs=0)

    def test_frozen_regression_pairs(self):
        # Regression pair on the composite fixture. Under blur the textured
        # subject dominates the flat sky; under additive noise the windowed
        # structure statistic inverts the order (flat regions lose all
        # structural correlation), and the frozen values pin that behavior.
        ref, sky, subject = composite_fixture()
        for dt, lvl in ((DistortionType.BLUR, 12), (DistortionType.NOISE, 12)):
            dist = apply_distortion(ref, DistortionSpec.for_level(dt, lvl, 77, "composite"))
            got_sky = roi_importance_score(dist, ref, sky)
            got_subj = roi_importance_score(dist, ref, subject)
            assert got_sky == pytest.approx(IMPORTANCE_GOLDEN[(dt.value, "sky")], abs=1e-12)
            assert got_subj == pytest.approx(IMPORTANCE_GOLDEN[(dt.value, "subject")], abs=1e-12)
        blur_dist = apply_distortion(
            ref, DistortionSpec.for_level(DistortionType.BLUR, 12, 77, "composite")
        )
        assert roi_importance_score(blur_dist, ref, subject) >= roi_importance_score(
            blur_dist, ref, sky
        )

    def test_range(self, photo64):
        harsh = apply_transfer(photo64, DistortionType.CONTRAST, 2.5)
        mask = rect_mask(64, 64, 0, 48, 0, 48)
        imp = roi_importance_score(harsh, photo64, mask)
        assert 0.0 <= imp <= 1.0


class TestDistortionLabel:
    def test_above_threshold_is_clean(self):
        present, dtype = distortion_label(FidelityScore(0.95), DistortionType.NOISE)
        assert present is False and dtype is None

    def test_at_threshold_is_distorted(self):
        present, dtype = distortion_label(FidelityScore(0.92), DistortionType.BLUR)
        assert present is True and dtype is DistortionType.BLUR

    def test_clear_distortion(self):
        present, dtype = distortion_label(FidelityScore(0.50), DistortionType.NOISE)
        assert (present, dtype) == (True, DistortionType.NOISE)

    def test_threshold_configurable(self):
        present, _ = distortion_label(FidelityScore(0.8), DistortionType.BLUR, threshold=0.75)
        assert present is False


def brute_force_discretize(s: float, m: float) -> int:
    if s == 0.0:
        return 0
    for i in range(5):
        if m * i / 5.0 < s <= m * (i + 1) / 5.0:
            return i
    raise AssertionError(f"no bin for s={s} m={m}")


class TestDiscretize:
    def test_spec_examples(self):
        assert discretize(2.0, QUALITY_HUMAN) == (2, "Fair")
        assert discretize(4.0, QUALITY_HUMAN) == (4, "Excellent")
        assert discretize(0.0, QUALITY_HUMAN) == (0, "Bad")

    def test_severity_names(self):
        assert discretize(1.0, SEVERITY_HUMAN) == (1, "Severe")
        assert discretize(3.9, SEVERITY_HUMAN) == (4, "Trivial")

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            discretize(4.1, QUALITY_HUMAN)
        with pytest.raises(ValueError):
            discretize(-0.1, QUALITY_ORACLE)

    @settings(max_examples=500)
    @given(st.data())
    def test_matches_bruteforce_scan(self, data):
        m = data.draw(st.sampled_from([1.0, 4.0, 5.0, 0.3, 7.25]))
        s = data.draw(st.floats(min_value=0.0, max_value=m, allow_nan=False))
        scale = LevelScale(ScaleKind.QUALITY, m)
        assert discretize(s, scale)[0] == brute_force_discretize(s, m)

    def test_exact_boundaries(self):
        for m in (1.0, 4.0, 0.3, 7.25):
            scale = LevelScale(ScaleKind.SEVERITY, m)
            for i in range(6):
                s = m * i / 5.0
                assert discretize(s, scale)[0] == brute_force_discretize(s, m)
