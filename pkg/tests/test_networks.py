"""Network builders: receptive fields, shapes, conditioning, state dicts."""

import numpy as np
import pytest

from s2s.errors import ConfigError
from s2s.networks import (
    DiscriminatorSpec,
    build_discriminator,
    build_generator,
    compute_receptive_field,
)
from s2s.tensor import Tensor

from helpers import directional_gradient_check


class TestReceptiveField:
    def test_head_only(self):
        assert compute_receptive_field([(2, 1)]) == 2

    def test_three_layers(self):
        assert compute_receptive_field([(4, 2), (4, 2), (2, 1)]) == 14

    def test_six_layers(self):
        layers = [(4, 2)] * 5 + [(2, 1)]
        assert compute_receptive_field(layers) == 126

    def test_full_family(self):
        # 2**(n+1) - 2 for n = 1..6
        for n, expected in zip(range(1, 7), (2, 6, 14, 30, 62, 126)):
            layers = [(4, 2)] * (n - 1) + [(2, 1)]
            assert compute_receptive_field(layers) == expected == 2 ** (n + 1) - 2

    def test_invalid_layers(self):
        with pytest.raises(ValueError):
            compute_receptive_field([])
        with pytest.raises(ValueError):
            compute_receptive_field([(0, 1)])
        with pytest.raises(ValueError):
            compute_receptive_field([(4, -2)])


class TestDiscriminator:
    def test_patch6_layer_stack(self):
        d = build_discriminator(DiscriminatorSpec(6, 1.0), resolution=64)
        assert d.layer_shapes == [(4, 2), (2, 1)]
        assert d.effective_patch_size == 6

    def test_patch126_has_six_layers(self):
        d = build_discriminator(DiscriminatorSpec(126, 1.0), resolution=256)
        assert len(d.layer_shapes) == 6
        assert d.effective_patch_size == 126

    def test_unsupported_patch_size(self):
        with pytest.raises(ConfigError, match=r"2, 6, 14, 30, 62, 126"):
            DiscriminatorSpec(7, 1.0)

    def test_receptive_fields_exact(self):
        for patch in (2, 6, 14, 30, 62, 126):
            d = build_discriminator(DiscriminatorSpec(patch, 1.0), resolution=256)
            assert d.effective_patch_size == patch

    def test_logit_map_shape_patch6(self):
        d = build_discriminator(DiscriminatorSpec(6, 1.0), resolution=64, seed=1)
        x = Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32))
        y = Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32))
        out = d(x, y)
        assert out.shape == (1, 1, 31, 31)

    def test_logit_map_shape_patch126_clamped(self):
        # depth is clamped so the map stays at least 1x1 on small inputs
        d = build_discriminator(DiscriminatorSpec(126, 1.0), resolution=64, seed=1)
        x = Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32))
        y = Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32))
        assert d(x, y).shape == (1, 1, 1, 1)
        d32 = build_discriminator(DiscriminatorSpec(126, 1.0), resolution=32, seed=1)
        x32 = Tensor(np.zeros((1, 1, 32, 32), dtype=np.float32))
        assert d32(x32, x32).shape == (1, 1, 1, 1)
        assert d32.effective_patch_size == 62
        assert d32.spec.patch_size == 126

    def test_map_extent_decreases_with_depth(self):
        extents = []
        for patch in (2, 6, 14, 30, 62, 126):
            d = build_discriminator(DiscriminatorSpec(patch, 1.0), resolution=64, seed=1)
            x = Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32))
            extents.append(d(x, x).shape[-1])
        assert extents == sorted(extents, reverse=True)
        assert len(set(extents)) == len(extents)

    def test_conditional_requires_condition(self):
        d = build_discriminator(DiscriminatorSpec(6, 1.0), resolution=64)
        x = Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32))
        with pytest.raises(ValueError, match="contour"):
            d(x)

    def test_unconditional_variant(self):
        d = build_discriminator(DiscriminatorSpec(6, 1.0, conditional=False),
                                resolution=64, seed=1)
        x = Tensor(np.zeros((1, 1, 64, 64), dtype=np.float32))
        assert d(x).shape == (1, 1, 31, 31)

    def test_zero_head_gives_half_scores(self):
        d = build_discriminator(DiscriminatorSpec(2, 1.0, conditional=False),
                                resolution=64, seed=1)
        d.head.weight.data[...] = 0.0
        d.head.bias.data[...] = 0.0
        x = Tensor(np.random.default_rng(0).standard_normal((1, 1, 64, 64)).astype(np.float32))
        logits = d(x)
        np.testing.assert_array_equal(logits.data, 0.0)

    def test_weight_bounds(self):
        with pytest.raises(ConfigError):
            DiscriminatorSpec(6, 0.0)
        with pytest.raises(ConfigError):
            DiscriminatorSpec(6, 1.5)


class TestGenerator:
    def test_resolution_must_be_supported(self):
        with pytest.raises(ConfigError):
            build_generator(48)
        with pytest.raises(ConfigError):
            build_generator(8)

    def test_stage_count(self):
        g = build_generator(64, seed=0)
        assert len(g.enc_convs) == 6  # 64 -> 1 at the bottleneck

    def test_forward_shape_and_range(self):
        g = build_generator(64, seed=0)
        x = Tensor(np.zeros((2, 1, 64, 64), dtype=np.float32))
        out = g(x)
        assert out.shape == (2, 1, 64, 64)
        assert np.all(np.isfinite(out.data))
        assert np.all(np.abs(out.data) < 1.0)

    def test_forward_shape_res16(self):
        g = build_generator(16, seed=0)
        x = Tensor(np.random.default_rng(1).standard_normal((1, 1, 16, 16)).astype(np.float32))
        assert g(x).shape == (1, 1, 16, 16)

    def test_seeded_build_is_reproducible(self):
        a = build_generator(32, seed=9)
        b = build_generator(32, seed=9)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_state_dict_roundtrip(self):
        g = build_generator(32, seed=3)
        state = {k: v.copy() for k, v in g.state_dict().items()}
        g2 = build_generator(32, seed=4)
        g2.load_state_dict(state)
        for k, v in g2.state_dict().items():
            np.testing.assert_array_equal(v, state[k])

    def test_generator_gradients_res16(self):
        g = build_generator(16, seed=5)
        rng = np.random.default_rng(6)
        x64 = rng.standard_normal((1, 1, 16, 16))
        params = g.parameters()
        for p in params:
            p.data = p.data.astype(np.float64)
        for bn in [m for m in _all_batchnorms(g)]:
            bn.running_mean = bn.running_mean.astype(np.float64)
            bn.running_var = bn.running_var.astype(np.float64)
        target = rng.standard_normal((1, 1, 16, 16))

        def build():
            from s2s.tensor import Tensor as Tn, l1_loss
            return l1_loss(g(Tn(x64)), Tn(target))

        directional_gradient_check(build, params, rng, n_directions=4)


def _all_batchnorms(module):
    from s2s.networks import BatchNorm2d
    out = []
    stack = [module]
    while stack:
        m = stack.pop()
        if isinstance(m, BatchNorm2d):
            out.append(m)
        stack.extend(child for _, child in m._children())
    return out
