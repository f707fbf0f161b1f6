import numpy as np
import pytest

from dynimg import compose as C
from dynimg import media
from dynimg.compose import AugConfig, LayoutConfig, Rect
from dynimg.errors import ArityMismatch, DegenerateCrop, PatchBoundaryViolation, SizeMismatch
from dynimg.media import SynthSpec


def gray(value, h=64, w=64):
    return np.full((h, w, 3), value, dtype=np.uint8)


class TestPlanLayout:
    def test_default_geometry(self):
        layout = C.plan_layout(LayoutConfig(336, 14, 4))
        assert layout.total_size == (420, 336)
        assert layout.keyframe_patch_grid == (24, 24)
        assert layout.prompt_patch_grid == (6, 6)
        assert layout.patch_grid == (30, 24)

    def test_six_prompts(self):
        layout = C.plan_layout(LayoutConfig(336, 14, 6))
        assert layout.prompt_regions[0].width == 56
        assert layout.prompt_patch_grid[1] == 4
        assert layout.patch_grid == (28, 24)

    def test_five_prompts_rejected(self):
        with pytest.raises(PatchBoundaryViolation, match="n_prompts 5"):
            C.plan_layout(LayoutConfig(336, 14, 5))

    @pytest.mark.parametrize("n", [1, 2, 4, 6, 12])
    def test_ablation_grid_tiles_exactly(self, n):
        layout = C.plan_layout(LayoutConfig(336, 14, n))
        rows, cols = layout.patch_grid
        # exhaustive audit: every patch belongs to exactly one region and
        # regions tile the raster with no gap or overlap
        covered = np.zeros(layout.total_size[:2], dtype=int)
        for r in [layout.keyframe_region] + list(layout.prompt_regions):
            covered[r.top:r.top + r.height, r.left:r.left + r.width] += 1
        assert covered.min() == 1 and covered.max() == 1
        for row in range(rows):
            for col in range(cols):
                layout.region_of_patch(row, col)  # raises if straddling

    def test_region_boundaries_on_patch_multiples(self):
        layout = C.plan_layout(LayoutConfig(336, 14, 4))
        for r in [layout.keyframe_region] + list(layout.prompt_regions):
            for v in (r.top, r.left, r.height, r.width):
                assert v % layout.patch == 0

    def test_prompt_regions_chronological_left_to_right(self):
        layout = C.plan_layout(LayoutConfig(336, 14, 4))
        lefts = [r.left for r in layout.prompt_regions]
        assert lefts == sorted(lefts)
        widths = {r.width for r in layout.prompt_regions}
        assert len(widths) == 1


class TestAugment:
    def test_group_shares_crop_and_flip(self):
        rng = np.random.default_rng(11)
        frames = [np.random.default_rng(i).integers(0, 256, (56, 56, 3), dtype=np.uint8)
                  for i in range(5)]
        params = C.sample_group_params((56, 56), AugConfig(), rng)
        out = C.apply_geometric(frames, params)
        # re-applying the same params to one frame reproduces its output
        again = C.apply_geometric([frames[2]], params)[0]
        assert np.array_equal(out[2], again)

    def test_disabled_is_pure_normalization(self):
        aug = AugConfig(enabled=False)
        frame = gray(128)
        out = C.augment_group([frame], aug, np.random.default_rng(0))[0]
        expected = (frame.astype(np.float64) / 255.0 - 0.5) / 0.5
        assert np.allclose(out, expected)

    def test_hflip_prob_one_mirrors_columns(self):
        aug = AugConfig(crop_scale=(1.0, 1.0), hflip_prob=1.0, enabled=True)
        frame = np.zeros((28, 28, 3), dtype=np.uint8)
        frame[:, 3] = 200
        out = C.apply_geometric([frame], C.sample_group_params((28, 28), aug,
                                                               np.random.default_rng(0)))[0]
        assert (out[:, 28 - 1 - 3] == 200).all()
        assert (out[:, 3] == 0).all()

    def test_degenerate_crop_rejected(self):
        aug = AugConfig(crop_scale=(0.01, 0.01), enabled=True)
        with pytest.raises(DegenerateCrop):
            C.sample_group_params((28, 28), aug, np.random.default_rng(0))

    def test_mismatched_frame_sizes_rejected(self):
        with pytest.raises(ArityMismatch):
            C.augment_group([gray(1, 8, 8), gray(1, 9, 9)], AugConfig(enabled=False),
                            np.random.default_rng(0))

    def test_determinism(self):
        frames = [gray(70, 56, 56)] * 5
        a = C.augment_group(frames, AugConfig(), np.random.default_rng(5))
        b = C.augment_group(frames, AugConfig(), np.random.default_rng(5))
        for fa, fb in zip(a, b):
            assert np.array_equal(fa, fb)


class TestCompose:
    def layout(self):
        return C.plan_layout(LayoutConfig(336, 14, 4))

    def test_uniform_gray_stays_uniform(self):
        layout = self.layout()
        raster = C.compose([gray(90)] * 5, layout)
        assert raster.shape == (420, 336, 3)
        assert (raster == 90).all()

    def test_solid_prompt_colors_land_in_their_regions(self):
        layout = self.layout()
        colors = [(50, 50, 50), (200, 0, 0), (0, 200, 0), (0, 0, 200), (200, 200, 0)]
        frames = [np.full((64, 64, 3), c, dtype=np.uint8) for c in colors]
        raster = C.compose(frames, layout)
        k = layout.keyframe_region
        assert (raster[k.top:k.top + k.height, k.left:k.left + k.width] == colors[0]).all()
        for j, r in enumerate(layout.prompt_regions):
            region = raster[r.top:r.top + r.height, r.left:r.left + r.width]
            assert (region == colors[j + 1]).all()

    def test_arity_mismatch(self):
        with pytest.raises(ArityMismatch):
            C.compose([gray(1)] * 4, self.layout())

    def test_moving_dot_lands_at_mapped_positions(self):
        # oracle: centroid of bright pixels in each region must match the
        # synth motion formula mapped through the half-pixel resize
        layout = self.layout()
        spec = SynthSpec(pattern="moving-dot", frame_count=10, width=112, height=112,
                         velocity=(9.0, 0.0), object_size=18, seed=2)
        src = media.synth_video(spec)
        indices = [4, 0, 2, 6, 8]  # keyframe first, prompts chronological
        frames = media.decode_frames(src, indices)
        raster = C.compose(frames, layout)

        regions = [layout.keyframe_region] + list(layout.prompt_regions)
        centers = [src.object_center(t) for t in indices]
        positions = []
        for r, (cx, cy) in zip(regions, centers):
            sub = raster[r.top:r.top + r.height, r.left:r.left + r.width]
            mask = sub[:, :, 0] > 120
            py, px = np.nonzero(mask)
            got = (px.mean(), py.mean())
            # half-pixel mapping from 112x112 into the region
            exp_x = (cx + 0.5) * r.width / 112 - 0.5
            exp_y = (cy + 0.5) * r.height / 112 - 0.5
            assert got[0] == pytest.approx(exp_x, abs=1.5)
            assert got[1] == pytest.approx(exp_y, abs=1.5)
            positions.append((r.left + got[0], r.top + got[1]))
        assert len({(round(x), round(y)) for x, y in positions}) == 5

    def test_determinism_bit_identical(self):
        layout = self.layout()
        frames = [np.random.default_rng(i).integers(0, 256, (50, 50, 3), dtype=np.uint8)
                  for i in range(5)]
        assert np.array_equal(C.compose(frames, layout), C.compose(frames, layout))


class TestPatchify:
    def test_counts_by_region(self):
        layout = C.plan_layout(LayoutConfig(336, 14, 4))
        raster = gray(33, 420, 336)
        block = C.patchify(raster, layout)
        assert block.tokens == 720
        assert block.mask("keyframe").sum() == 576
        assert block.mask("prompts").sum() == 144

    def test_reassemble_roundtrip(self):
        layout = C.plan_layout(LayoutConfig(112, 14, 4))
        raster = np.random.default_rng(0).integers(0, 256, (*layout.total_size, 3),
                                                   dtype=np.uint8)
        block = C.patchify(raster, layout)
        back = C.reassemble(block, layout)
        assert np.array_equal(back.astype(np.uint8), raster)

    def test_label_of_strip_patch(self):
        layout = C.plan_layout(LayoutConfig(336, 14, 4))
        block = C.patchify(gray(0, 420, 336), layout)
        rows, cols = layout.patch_grid
        assert block.labels[25 * cols + 3] == "prompt_0"

    def test_size_mismatch(self):
        layout = C.plan_layout(LayoutConfig(336, 14, 4))
        with pytest.raises(SizeMismatch):
            C.patchify(gray(0, 100, 100), layout)


class TestResize:
    def test_identity_when_same_size(self):
        img = np.random.default_rng(0).uniform(size=(17, 13, 3))
        assert np.allclose(C.resize_bilinear(img, 17, 13), img)

    def test_constant_preserved(self):
        img = gray(77, 30, 40)
        out = C.resize_bilinear(img, 7, 90)
        assert np.allclose(out, 77.0)

    def test_2x_upscale_linear_ramp(self):
        # 1-D ramp along x: bilinear on half-pixel centers interpolates linearly
        img = np.arange(4, dtype=np.float64).reshape(1, 4, 1).repeat(2, axis=0)
        out = C.resize_bilinear(img, 2, 8)
        expected = np.array([0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.0])
        assert np.allclose(out[0, :, 0], expected)
