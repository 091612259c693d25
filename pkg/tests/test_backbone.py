"""Feature extractor: token split, block behaviour, stage shapes, variants."""

import numpy as np
import pytest

from podcount import BackboneConfig, Tensor, gradient_check, variant_config
from podcount.backbone import Backbone, PatchMerging, SwinBlock, patch_split
from podcount.tensor import ShapeError


class TestPatchSplit:
    def test_full_resolution_grid(self):
        tokens = patch_split(Tensor(np.zeros((3, 224, 224))))
        assert tokens.shape == (56, 56, 48)

    def test_constant_image(self):
        tokens = patch_split(Tensor(np.full((3, 8, 8), 0.25)))
        np.testing.assert_array_equal(tokens.data, np.full((2, 2, 48), 0.25))

    def test_channel_major_token_layout(self, rng):
        img = rng.random((3, 8, 8))
        tokens = patch_split(Tensor(img)).data
        expected = np.empty(48)
        for c in range(3):
            for dy in range(4):
                for dx in range(4):
                    expected[c * 16 + dy * 4 + dx] = img[c, dy, dx]
        np.testing.assert_array_equal(tokens[0, 0], expected)

    def test_non_divisible_rejected(self):
        with pytest.raises(ShapeError, match="divisible"):
            patch_split(Tensor(np.zeros((3, 10, 12))))

    def test_batched(self, rng):
        img = rng.random((2, 3, 16, 16))
        assert patch_split(Tensor(img)).shape == (2, 4, 4, 48)


class TestSwinBlock:
    def make_block(self, shift, dim=8, window=4, seed=0):
        return SwinBlock(dim, heads=2, window=window, shift=shift,
                         rng=np.random.default_rng(seed), dtype=np.float64)

    def test_shape_preserved(self, rng):
        x = Tensor(rng.standard_normal((2, 8, 8, 8)))
        for shift in (0, 2):
            assert self.make_block(shift).forward(x).shape == x.shape

    def test_zeroed_output_projections_give_identity(self, rng):
        block = self.make_block(shift=0)
        block.attn.proj.weight.data[:] = 0.0
        block.attn.proj.bias.data[:] = 0.0
        block.mlp.fc2.weight.data[:] = 0.0
        block.mlp.fc2.bias.data[:] = 0.0
        x = Tensor(rng.standard_normal((1, 8, 8, 8)))
        np.testing.assert_allclose(block.forward(x).data, x.data, atol=1e-12)

    def test_shifted_differs_from_unshifted(self, rng):
        x = Tensor(rng.standard_normal((1, 8, 8, 8)))
        plain = self.make_block(shift=0, seed=3).forward(x).data
        shifted = self.make_block(shift=2, seed=3).forward(x).data
        assert np.abs(plain - shifted).max() > 0

    def test_non_divisible_extents_padded(self, rng):
        x = Tensor(rng.standard_normal((1, 6, 7, 8)))
        for shift in (0, 2):
            out = self.make_block(shift).forward(x)
            assert out.shape == x.shape
            assert np.isfinite(out.data).all()

    def test_shift_disabled_on_single_window_map(self, rng):
        # wrapping a map that is one window wide would only isolate tokens,
        # so the shifted block must collapse to the plain one there
        x = Tensor(rng.standard_normal((1, 4, 4, 8)))
        plain = self.make_block(shift=0, seed=7).forward(x).data
        shifted = self.make_block(shift=2, seed=7).forward(x).data
        np.testing.assert_array_equal(shifted, plain)

    def test_gradients(self, rng):
        block = self.make_block(shift=2)
        x = rng.standard_normal((1, 4, 4, 8))
        params = block.param_dict()
        err = gradient_check(
            lambda p: (block.forward(Tensor(x)) ** 2.0).sum(), params,
            max_elements_per_param=8,
        )
        assert err < 1e-6


class TestPatchMerging:
    def test_halves_space_doubles_channels(self, rng):
        merge = PatchMerging(96, np.random.default_rng(0))
        x = Tensor(rng.standard_normal((1, 56, 56, 96)).astype(np.float32))
        assert merge.forward(x).shape == (1, 28, 28, 192)

    def test_odd_extents_rejected(self, rng):
        merge = PatchMerging(4, np.random.default_rng(0))
        with pytest.raises(ShapeError, match="even"):
            merge.forward(Tensor(rng.standard_normal((1, 5, 6, 4))))

    def test_constant_preserving_construction(self):
        # with the affine set to reproduce the constant and an averaging
        # projection, a constant map stays that constant
        dim, v = 4, 1.7
        merge = PatchMerging(dim, np.random.default_rng(0), dtype=np.float64)
        merge.norm.gamma.data[:] = 0.0
        merge.norm.beta.data[:] = v
        merge.reduction.weight.data[:] = 1.0 / (4 * dim)
        x = Tensor(np.full((1, 6, 6, dim), v))
        np.testing.assert_allclose(merge.forward(x).data, v, atol=1e-12)


class TestBackbone:
    def test_tiny_variant_feature_shapes(self):
        backbone = Backbone(variant_config("T"), np.random.default_rng(0))
        f2, f3 = backbone(Tensor(np.zeros((3, 224, 224), dtype=np.float32)))
        assert f2.tensor.shape == (28, 28, 192) and f2.stride == 8
        assert f3.tensor.shape == (14, 14, 384) and f3.stride == 16

    def test_large_variant_feature_shapes(self):
        backbone = Backbone(variant_config("L"), np.random.default_rng(0))
        f2, f3 = backbone(Tensor(np.zeros((3, 224, 224), dtype=np.float32)))
        assert f2.tensor.shape == (28, 28, 384)
        assert f3.tensor.shape == (14, 14, 768)

    def test_identical_batch_elements_identical_features(self, rng):
        cfg = BackboneConfig(embed_dim=8, depths=(1, 1, 1), window=2)
        backbone = Backbone(cfg, np.random.default_rng(1), dtype=np.float64)
        img = rng.random((3, 32, 32))
        f2, _ = backbone(Tensor(np.stack([img, img])))
        np.testing.assert_array_equal(f2.tensor.data[0], f2.tensor.data[1])

    def test_extents_must_be_multiple_of_16(self):
        cfg = BackboneConfig(embed_dim=8, depths=(1, 1, 1), window=2)
        backbone = Backbone(cfg, np.random.default_rng(0))
        with pytest.raises(ShapeError, match="16"):
            backbone(Tensor(np.zeros((3, 40, 40), dtype=np.float32)))

    def test_parameter_count_ordering(self):
        counts = {}
        for variant in "TSBL":
            backbone = Backbone(variant_config(variant), np.random.default_rng(0))
            counts[variant] = backbone.num_parameters()
        assert counts["T"] < counts["S"] < counts["B"] < counts["L"]

    def test_gradients_through_tiny_backbone(self, rng):
        cfg = BackboneConfig(embed_dim=8, depths=(1, 1, 1), window=2)
        backbone = Backbone(cfg, np.random.default_rng(5), dtype=np.float64)
        img = rng.random((3, 32, 32))
        params = backbone.param_dict()

        def f(p):
            f2, f3 = backbone(Tensor(img))
            return (f2.tensor ** 2.0).sum() + (f3.tensor ** 2.0).sum()

        err = gradient_check(f, params, max_elements_per_param=4)
        assert err < 1e-5

    def test_rel_pos_bias_switch_changes_params(self):
        with_bias = Backbone(BackboneConfig(embed_dim=8, depths=(1, 1, 1), window=2,
                                            rel_pos_bias=True), np.random.default_rng(0))
        without = Backbone(BackboneConfig(embed_dim=8, depths=(1, 1, 1), window=2,
                                          rel_pos_bias=False), np.random.default_rng(0))
        assert with_bias.num_parameters() > without.num_parameters()

    def test_heads_must_divide_channels(self):
        with pytest.raises(ValueError, match="divisible"):
            BackboneConfig(embed_dim=8, depths=(1, 1, 1), heads=(3, 3, 3))

    def test_default_heads_floor_at_one(self):
        cfg = BackboneConfig(embed_dim=8, depths=(1, 1, 1))
        assert cfg.heads == (1, 1, 1)
        assert variant_config("T").heads == (3, 6, 12)
