import numpy as np
import pytest

from dcftrack import mcdcf
from dcftrack.features import (
    GrayImage,
    HogParams,
    Patch,
    compute_hog,
    extract_patch,
    rounded_patch_size,
    scale_model_size,
    scale_sample,
    translation_sample,
)
from dcftrack.spectral import gaussian_response, hann_window, signed_offset
from dcftrack.trackers import TargetState, TrackerConfig, default_config
from dataclasses import replace


def naive_hog(pixels, cell):
    """Per-pixel loop oracle for the 31-channel HOG pipeline."""
    h, w = pixels.shape
    gx = np.zeros_like(pixels)
    gy = np.zeros_like(pixels)
    for i in range(h):
        for j in range(w):
            j0, j1 = max(j - 1, 0), min(j + 1, w - 1)
            i0, i1 = max(i - 1, 0), min(i + 1, h - 1)
            gx[i, j] = pixels[i, j1] - pixels[i, j0]
            gy[i, j] = pixels[i1, j] - pixels[i0, j]
    rows, cols = h // cell, w // cell
    sens = np.zeros((rows, cols, 18))
    for i in range(rows * cell):
        for j in range(cols * cell):
            mag = np.hypot(gx[i, j], gy[i, j])
            theta = np.arctan2(gy[i, j], gx[i, j])
            b = int(np.rint(theta / (np.pi / 9.0))) % 18
            cy = (i + 0.5) / cell - 0.5
            cx = (j + 0.5) / cell - 0.5
            fy, fx = int(np.floor(cy)), int(np.floor(cx))
            wy1, wx1 = cy - fy, cx - fx
            for dy, wy in ((0, 1 - wy1), (1, wy1)):
                for dx, wx in ((0, 1 - wx1), (1, wx1)):
                    r, c = fy + dy, fx + dx
                    if 0 <= r < rows and 0 <= c < cols:
                        sens[r, c, b] += mag * wy * wx
    insens = sens[..., :9] + sens[..., 9:]
    energy = np.sum(insens**2, axis=-1)
    out = np.zeros((rows, cols, 31))
    for r in range(rows):
        for c in range(cols):
            norms = []
            for dy in (-1, 1):
                for dx in (-1, 1):
                    rr = min(max(r + dy, 0), rows - 1)
                    cc = min(max(c + dx, 0), cols - 1)
                    n = (
                        energy[r, c]
                        + energy[rr, c]
                        + energy[r, cc]
                        + energy[rr, cc]
                    )
                    norms.append(np.sqrt(n + 1e-10))
            for k, nrm in enumerate(norms):
                clipped = np.minimum(sens[r, c] / nrm, 0.2)
                out[r, c, :18] += 0.25 * clipped
                out[r, c, 18:27] += 0.25 * np.minimum(insens[r, c] / nrm, 0.2)
                out[r, c, 27 + k] = clipped.sum() / 18.0
    return out


def make_image(rng, h=48, w=48):
    return GrayImage(rng.uniform(-0.5, 0.5, (h, w)))


class TestExtractPatch:
    def test_native_size_identity(self):
        rng = np.random.default_rng(30)
        img = make_image(rng, 10, 10)
        # 4x4 block of pixels [3..6] has its pixel-center centroid at 4.5
        patch = extract_patch(img, (4.5, 4.5), 4, 4, 4, 4)
        np.testing.assert_allclose(patch.pixels, img.pixels[3:7, 3:7], atol=1e-12)

    def test_constant_image_any_scale(self):
        img = GrayImage(np.full((12, 12), 0.25))
        for out in [(3, 3), (7, 5), (24, 24)]:
            patch = extract_patch(img, (5.5, 5.5), 9, 9, *out)
            np.testing.assert_allclose(patch.pixels, 0.25, atol=1e-13)

    def test_checkerboard_downscale_averages(self):
        board = np.indices((4, 4)).sum(axis=0) % 2 * 1.0 - 0.5
        img = GrayImage(board)
        patch = extract_patch(img, (1.5, 1.5), 4, 4, 2, 2)
        # each output pixel is the bilinear blend at the center of a 2x2 block
        np.testing.assert_allclose(patch.pixels, np.zeros((2, 2)), atol=1e-12)

    def test_out_of_bounds_replicates_edges(self):
        img = GrayImage(np.arange(9.0).reshape(3, 3) / 16.0 - 0.25)
        # rectangle entirely above-left of the image: every sample clamps
        # to the corner pixel
        patch = extract_patch(img, (-10.0, -10.0), 4, 4, 3, 3)
        np.testing.assert_allclose(patch.pixels, np.full((3, 3), img.pixels[0, 0]))
        # straddling the right edge: out-of-range columns replicate the
        # last column
        patch = extract_patch(img, (2.0, 1.0), 3, 1, 3, 1)
        np.testing.assert_allclose(
            patch.pixels, [[img.pixels[1, 1], img.pixels[1, 2], img.pixels[1, 2]]]
        )

    def test_bad_sizes_rejected(self):
        img = GrayImage(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            extract_patch(img, (1, 1), 0, 2, 2, 2)
        with pytest.raises(ValueError):
            extract_patch(img, (1, 1), 2, 2, 0, 2)


class TestComputeHog:
    def test_constant_patch_all_zero(self):
        patch = Patch(np.full((8, 8), 0.3), (0, 0), (8, 8))
        for cell in (1, 4):
            feats = compute_hog(patch, HogParams(cell)).data
            np.testing.assert_allclose(feats, 0.0, atol=1e-12)

    def test_values_bounded_by_truncation(self):
        rng = np.random.default_rng(31)
        for cell in (1, 4):
            patch = Patch(rng.uniform(-0.5, 0.5, (16, 16)), (0, 0), (16, 16))
            feats = compute_hog(patch, HogParams(cell)).data
            assert np.all(feats >= 0.0)
            assert np.all(feats <= 0.2 + 1e-12)

    def test_vertical_step_edge_concentrates_horizontal_bin(self):
        px = np.full((12, 12), -0.4)
        px[:, 6:] = 0.4
        feats = compute_hog(Patch(px, (0, 0), (12, 12)), HogParams(4)).data
        sens = feats[:, 1, :18]  # cells straddling the edge
        assert np.argmax(sens.sum(axis=0)) == 0  # gradient along +x
        ref = naive_hog(px, 4)
        np.testing.assert_allclose(feats, ref, atol=1e-12)

    @pytest.mark.parametrize("cell", [1, 4])
    def test_matches_naive_oracle(self, cell):
        rng = np.random.default_rng(32 + cell)
        px = rng.uniform(-0.5, 0.5, (12, 16))
        feats = compute_hog(Patch(px, (0, 0), (16, 12)), HogParams(cell)).data
        np.testing.assert_allclose(feats, naive_hog(px, cell), atol=1e-12)

    def test_brightness_invariance(self):
        rng = np.random.default_rng(33)
        px = rng.uniform(-0.3, 0.3, (8, 8))
        a = compute_hog(Patch(px, (0, 0), (8, 8)), HogParams(1)).data
        b = compute_hog(Patch(px + 0.1, (0, 0), (8, 8)), HogParams(1)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_patch_smaller_than_cell_rejected(self):
        with pytest.raises(ValueError):
            compute_hog(Patch(np.zeros((3, 3)), (0, 0), (3, 3)), HogParams(4))


def _trans_config(cell=1, padding=2.0, rows=16, cols=16):
    return replace(
        default_config("translation"),
        hog_cell=cell,
        padding=padding,
        model_cells=(rows, cols),
    )


class TestTranslationSample:
    def test_purity(self):
        rng = np.random.default_rng(34)
        img = make_image(rng, 64, 64)
        state = TargetState(31.5, 31.5, 1.0, 16, 16)
        cfg = _trans_config()
        a = translation_sample(img, state, cfg)
        b = translation_sample(img, state, cfg)
        np.testing.assert_array_equal(a.data, b.data)
        assert a.windowed

    def test_channel_count_is_32(self):
        rng = np.random.default_rng(35)
        img = make_image(rng, 64, 64)
        state = TargetState(31.5, 31.5, 1.0, 16, 16)
        for cell in (1, 4):
            sample = translation_sample(img, state, _trans_config(cell=cell))
            assert sample.channels == 32
            assert sample.dims == (16, 16)

    def test_constant_image_leaves_only_windowed_intensity(self):
        img = GrayImage(np.full((64, 64), 0.2))
        state = TargetState(31.5, 31.5, 1.0, 16, 16)
        sample = translation_sample(img, state, _trans_config())
        np.testing.assert_allclose(sample.data[..., :31], 0.0, atol=1e-12)
        np.testing.assert_allclose(
            sample.data[..., 31], 0.2 * hann_window((16, 16)), atol=1e-12
        )


class TestScaleSample:
    def _state(self):
        return TargetState(31.5, 31.5, 1.0, 20, 20)

    def test_model_size_rule(self):
        assert scale_model_size(20, 20) == (20, 20)  # area 400 <= 512
        w, h = scale_model_size(24, 24)  # area 576: shrink, aspect kept
        assert (w, h) == (22, 22)
        w, h = scale_model_size(128, 4)
        assert w * h <= 512 + 128  # flooring keeps the area bound near 512
        # descriptor bound: never more than 992 flattened HOG values
        for bw, bh in [(24, 24), (128, 4), (100, 100), (3, 400), (31, 33)]:
            wm, hm = scale_model_size(bw, bh)
            assert (wm // 4) * (hm // 4) * 31 <= 992

    def test_single_scale_equals_flattened_hog(self):
        rng = np.random.default_rng(36)
        img = make_image(rng, 64, 64)
        state = self._state()
        sample = scale_sample(img, state, 1, 1.02, (20, 20))
        patch = extract_patch(img, (state.x, state.y), 20, 20, 20, 20)
        ref = compute_hog(patch, HogParams(4)).data.reshape(-1)
        np.testing.assert_allclose(sample.data[0], ref, atol=1e-12)

    def test_static_scene_gives_identical_samples(self):
        rng = np.random.default_rng(37)
        img = make_image(rng, 64, 64)
        state = self._state()
        a = scale_sample(img, state, 9, 1.05, (20, 20))
        b = scale_sample(img, state, 9, 1.05, (20, 20))
        np.testing.assert_array_equal(a.data, b.data)
        assert a.dims == (9,)

    def test_zoomed_scene_shifts_scale_argmax(self):
        # static texture rendered at scale 1 and at scale a**k: a filter
        # trained on the first image must peak k bins away on the second
        from dcftrack import evaluation as ev

        s_bins, a = 17, 1.05
        for k in (-2, -1, 1, 2):
            spec = ev.SyntheticSpec(
                canvas_w=128,
                canvas_h=128,
                frame_count=2,
                target_w=40,
                target_h=40,
                zoom_start=1.0,
                zoom_end=a**k,
                seed=40 + k,
                texture_smooth=2,
            )
            seq = ev.render_synthetic(spec)
            frames = seq.load_frames()
            state = TargetState(63.5, 63.5, 1.0, 40, 40)
            model_px = scale_model_size(40, 40)
            f = scale_sample(frames[0], state, s_bins, a, model_px)
            g = gaussian_response((s_bins,), (s_bins / 16.0,))
            model = mcdcf.update(
                mcdcf.FilterModel.initial((s_bins,), f.channels, 0.01), f, g, 1.0
            )
            z = scale_sample(frames[1], state, s_bins, a, model_px)
            scores = mcdcf.detect(model, z)
            assert signed_offset(scores.argmax_index[0], s_bins) == k


class TestGrayImage:
    def test_uint8_mapping(self):
        img = GrayImage.from_uint8(np.array([[0, 255], [128, 64]], dtype=np.uint8))
        np.testing.assert_allclose(
            img.pixels, [[-0.5, 0.5], [128 / 255 - 0.5, 64 / 255 - 0.5]]
        )

    def test_rgb_luma(self):
        rgb = np.zeros((1, 1, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 0, 0)
        img = GrayImage.from_uint8(rgb)
        np.testing.assert_allclose(img.pixels[0, 0], 0.299 - 0.5)

    def test_rounded_patch_size_floor_one(self):
        assert rounded_patch_size(0.2, 0.4) == (1, 1)
        assert rounded_patch_size(24.5, 23.4) == (24, 23)
