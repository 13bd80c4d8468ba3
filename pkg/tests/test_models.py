import numpy as np
import pytest

from swift_sr.errors import ShapeError
from swift_sr.models import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    build_standard_conv_twin,
    count_parameters,
)
from swift_sr.tensor import Tensor

from conftest import rand_nchw


def generator_conv_stages(base=64, n_res=16, n_ups=2, in_c=3):
    """Independent enumeration of every conv stage as (kernel, in, out)."""
    stages = [(9, in_c, base)]
    for _ in range(n_res):
        stages += [(3, base, base), (3, base, base)]
    stages.append((3, base, base))
    for _ in range(n_ups):
        stages.append((3, base, base * 4))
    stages.append((9, base, in_c))
    return stages


def separable_weights(stages):
    return sum(k * k * ci + ci * co for k, ci, co in stages)


def standard_weights(stages):
    return sum(k * k * ci * co for k, ci, co in stages)


class TestParameterCounts:
    def test_analytic_formula_values(self):
        stages = generator_conv_stages()
        assert separable_weights(stages) == 193_907
        assert standard_weights(stages) == 1_542_528

    def test_generator_conv_only_matches_analytic(self):
        gen = build_generator(GeneratorConfig(), seed=0)
        assert count_parameters(gen, include_biases=False, conv_only=True) == 193_907

    def test_twin_conv_only_matches_analytic(self):
        twin = build_standard_conv_twin(GeneratorConfig(), seed=0)
        assert count_parameters(twin, include_biases=False, conv_only=True) == 1_542_528

    def test_size_ratio_near_eight(self):
        gen = build_generator(seed=0)
        twin = build_standard_conv_twin(seed=0)
        ratio = count_parameters(twin, False, True) / count_parameters(gen, False, True)
        assert 7.5 <= ratio <= 8.5
        assert ratio == pytest.approx(7.955, abs=5e-3)

    def test_single_block_ratio(self):
        sep = 3 * 3 * 64 + 64 * 64
        std = 3 * 3 * 64 * 64
        assert std / sep == pytest.approx(7.89, abs=0.01)

    def test_bias_inclusion_changes_count(self):
        gen = build_generator(seed=0)
        with_b = count_parameters(gen, include_biases=True, conv_only=True)
        without_b = count_parameters(gen, include_biases=False, conv_only=True)
        stages = generator_conv_stages()
        # Each separable stage carries a depthwise bias (in) and pointwise bias (out).
        assert with_b - without_b == sum(ci + co for _, ci, co in stages)

    def test_full_count_includes_bn_and_prelu(self):
        gen = build_generator(seed=0)
        total = count_parameters(gen, include_biases=True, conv_only=False)
        conv = count_parameters(gen, include_biases=True, conv_only=True)
        n_bn = 16 * 2 + 1
        n_prelu = 1 + 16 + 2  # head, one per residual block, one per upsample block
        assert total - conv == n_bn * 2 * 64 + n_prelu * 64


class TestGeneratorShapes:
    def test_x4_shape_rule(self):
        gen = build_generator(seed=1)
        y = gen.forward(Tensor(np.zeros((1, 3, 64, 64), dtype=np.float32)))
        assert y.shape == (1, 3, 256, 256)

    def test_x2_single_upsample(self):
        gen = build_generator(GeneratorConfig(upscale_factor=2), seed=1)
        assert len(gen.ups) == 1
        y = gen.forward(np.zeros((1, 3, 64, 64), dtype=np.float32))
        assert y.shape == (1, 3, 128, 128)

    @pytest.mark.parametrize("hw", [16, 24, 33])
    def test_shape_contract_odd_sizes(self, hw, rng):
        gen = build_generator(GeneratorConfig(base_channels=8, num_residual_blocks=1), seed=1)
        y = gen.forward(rand_nchw(rng, 2, 3, hw, hw, lo=0, hi=1))
        assert y.shape == (2, 3, 4 * hw, 4 * hw)

    def test_invalid_config_rejected(self):
        with pytest.raises(ShapeError):
            GeneratorConfig(upscale_factor=3)
        with pytest.raises(ShapeError):
            GeneratorConfig(num_residual_blocks=0)

    def test_zero_weights_zero_input_zero_output(self):
        gen = build_generator(GeneratorConfig(base_channels=8, num_residual_blocks=2), seed=0)
        for _, p in gen.named_parameters():
            p.data[:] = 0.0
        y = gen.forward(np.zeros((1, 3, 16, 16), dtype=np.float32))
        assert np.all(y == 0.0)

    def test_eval_forward_deterministic(self, rng):
        gen = build_generator(GeneratorConfig(base_channels=8, num_residual_blocks=2), seed=3)
        x = rand_nchw(rng, 1, 3, 16, 16, lo=0, hi=1)
        a = gen.forward(x)
        b = gen.forward(x)
        assert np.array_equal(a, b)

    def test_train_and_eval_bn_differ(self, rng):
        gen = build_generator(GeneratorConfig(base_channels=8, num_residual_blocks=2), seed=3)
        x = rand_nchw(rng, 2, 3, 16, 16, lo=0, hi=1)
        y_train = gen.forward(x, train=True)
        y_eval = gen.forward(x, train=False)
        assert not np.array_equal(y_train, y_eval)

    def test_channel_mismatch_error(self, rng):
        gen = build_generator(seed=0)
        with pytest.raises(ShapeError, match="generator expects"):
            gen.forward(rand_nchw(rng, 1, 1, 16, 16))

    def test_twin_same_shape_contract(self, rng):
        cfg = GeneratorConfig(base_channels=8, num_residual_blocks=1)
        twin = build_standard_conv_twin(cfg, seed=0)
        y = twin.forward(rand_nchw(rng, 1, 3, 16, 16, lo=0, hi=1))
        assert y.shape == (1, 3, 64, 64)


class TestDiscriminator:
    def test_output_shape_and_range(self, rng):
        disc = build_discriminator(seed=2)
        y = disc.forward(rand_nchw(rng, 2, 3, 96, 96, lo=0, hi=1))
        assert y.shape == (2, 1)
        assert np.all((y > 0) & (y < 1))

    def test_odd_input_size(self, rng):
        disc = build_discriminator(seed=2)
        y = disc.forward(rand_nchw(rng, 1, 3, 47, 47, lo=0, hi=1))
        assert y.shape == (1, 1)
        assert 0 < y[0, 0] < 1

    def test_first_block_has_no_bn(self):
        disc = build_discriminator(seed=0)
        names = [n for n, _ in disc.named_parameters()]
        assert not any(n.startswith("blocks.0.bn") for n in names)
        for i in range(1, 8):
            assert any(n.startswith(f"blocks.{i}.bn.") for n in names)

    def test_extreme_inputs_stay_in_open_interval(self):
        disc = build_discriminator(seed=0)
        big = np.full((1, 3, 48, 48), 1e4, dtype=np.float32)
        y = disc.forward(big)
        assert 0 < y[0, 0] < 1

    def test_config_validation(self):
        with pytest.raises(ShapeError):
            DiscriminatorConfig(block_channels=(8, 8, 8))
        with pytest.raises(ShapeError):
            DiscriminatorConfig(strides=(1, 2, 1, 2, 1, 2, 1, 3))


class TestInit:
    def test_same_seed_bitwise_identical(self):
        a = build_generator(GeneratorConfig(base_channels=16, num_residual_blocks=2), seed=7)
        b = build_generator(GeneratorConfig(base_channels=16, num_residual_blocks=2), seed=7)
        for (na, pa), (nb, pb) in zip(a.named_state(), b.named_state()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_different_seed_differs(self):
        a = build_generator(GeneratorConfig(base_channels=16, num_residual_blocks=2), seed=7)
        b = build_generator(GeneratorConfig(base_channels=16, num_residual_blocks=2), seed=8)
        same = all(
            np.array_equal(pa.data, pb.data)
            for (_, pa), (_, pb) in zip(a.named_state(), b.named_state())
        )
        assert not same

    def test_bn_gamma_ones(self):
        gen = build_generator(seed=0)
        for name, p in gen.named_parameters():
            if p.kind == "bn_gamma":
                assert np.all(p.data == 1.0)
            if p.kind == "prelu_slope":
                assert np.all(p.data == 0.25)
            if p.kind in ("conv_bias", "linear_bias", "bn_beta"):
                assert np.all(p.data == 0.0)

    def test_weight_variance_matches_kaiming(self):
        gen = build_generator(seed=11)
        checked = 0
        for name, p in gen.named_parameters():
            if p.kind == "conv_weight" and p.data.size >= 1000:
                fan_in = int(np.prod(p.data.shape[1:]))
                var = p.data.var()
                assert abs(var - 2.0 / fan_in) <= 0.2 * (2.0 / fan_in), name
                checked += 1
        assert checked > 0


class TestMacs:
    def test_macs_match_independent_enumeration(self):
        gen = build_generator(seed=0)
        twin = build_standard_conv_twin(seed=0)
        # Spatial sizes per stage at a 64x64 input with x4 upscaling.
        px = 64 * 64
        stages = generator_conv_stages()
        areas = [px] + [px] * (16 * 2) + [px] + [px, 4 * px] + [16 * px]
        sep = sum(a * (k * k * ci + ci * co) for a, (k, ci, co) in zip(areas, stages))
        std = sum(a * (k * k * ci * co) for a, (k, ci, co) in zip(areas, stages))
        assert gen.macs((64, 64)) == sep == 1_332_948_992
        assert twin.macs((64, 64)) == std == 9_085_648_896

    def test_flop_ratio_exceeds_five(self):
        gen = build_generator(seed=0)
        twin = build_standard_conv_twin(seed=0)
        assert twin.macs((64, 64)) / gen.macs((64, 64)) > 5.0
