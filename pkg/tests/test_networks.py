"""Architecture contracts: widths, shapes, determinism, gradients."""

import numpy as np
import pytest
import torch

from flimsr.networks import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    discriminator_forward,
    generator_forward,
    trace_forward,
)

REDUCED = GeneratorConfig(base_channels=8, levels=2)


def _conv_params(cin, cout, k=3):
    return cout * cin * k * k + cout


def _block_params(cin, cout, n_convs, time_dim=0):
    total, ch = 0, cin
    for _ in range(n_convs):
        total += _conv_params(ch, cout) + 2 * cout  # conv + batch norm affine
        ch = cout
    if time_dim:
        total += time_dim * cout + cout
    return total


def generator_param_count(cfg: GeneratorConfig) -> int:
    widths = cfg.level_widths
    enc_in = [cfg.in_channels] + widths[:-1]
    total = sum(
        _block_params(enc_in[i], widths[i], cfg.convs_per_block, cfg.time_dim)
        for i in range(cfg.levels)
    )
    dec_in = [widths[i] + widths[i + 1] for i in range(cfg.levels - 1)] + [widths[-1]]
    total += sum(
        _block_params(dec_in[i], widths[i], cfg.convs_per_block, cfg.time_dim)
        for i in range(cfg.levels)
    )
    total += _conv_params(widths[0], cfg.out_channels)
    return total


def discriminator_param_count(cfg: DiscriminatorConfig) -> int:
    total = _conv_params(cfg.in_channels, cfg.base_channels)
    ch = cfg.base_channels
    for _ in range(cfg.n_blocks):
        total += _conv_params(ch, ch) + 2 * ch
        total += _conv_params(ch, 2 * ch) + 2 * (2 * ch)
        ch *= 2
    flat = ch * cfg.pool_size**2
    total += flat * cfg.fc_hidden + cfg.fc_hidden
    total += cfg.fc_hidden + 1
    return total


class TestGenerator:
    def test_default_encoder_widths(self):
        cfg = GeneratorConfig()
        assert cfg.level_widths == [64, 128, 256, 512]

    def test_seeded_init_bit_identical(self):
        a = build_generator(42, REDUCED)
        b = build_generator(42, REDUCED)
        for k, v in a.state_dict().items():
            assert torch.equal(v, b.state_dict()[k]), k

    def test_different_seeds_differ(self):
        a = build_generator(1, REDUCED)
        b = build_generator(2, REDUCED)
        assert any(not torch.equal(v, b.state_dict()[k]) for k, v in a.state_dict().items())

    def test_parameter_count_closed_form(self):
        for cfg in (REDUCED, GeneratorConfig(base_channels=16, levels=3)):
            gen = build_generator(0, cfg)
            actual = sum(p.numel() for p in gen.parameters())
            assert actual == generator_param_count(cfg)

    def test_shape_contract_small(self):
        gen = build_generator(3, REDUCED)
        x = np.random.default_rng(0).random((6, 32, 32)).astype(np.float32)
        out = generator_forward(gen, x, (64, 64))
        assert out.shape == (6, 64, 64)

    def test_odd_input_resized_to_target(self):
        gen = build_generator(3, REDUCED)
        x = np.random.default_rng(1).random((6, 51, 51)).astype(np.float32)
        out = generator_forward(gen, x, (256, 256))
        assert out.shape == (6, 256, 256)

    def test_fresh_outputs_bounded(self):
        gen = build_generator(7, REDUCED)
        x = np.random.default_rng(2).random((6, 24, 24)).astype(np.float32)
        out = generator_forward(gen, x, (48, 48))
        assert np.isfinite(out).all()
        assert np.abs(out).max() < 1e3

    def test_nonfinite_input_rejected(self):
        gen = build_generator(3, REDUCED)
        x = np.full((6, 8, 8), np.nan, dtype=np.float32)
        with pytest.raises(ValueError, match="non-finite"):
            generator_forward(gen, x, (16, 16))

    def test_eval_mode_deterministic(self):
        gen = build_generator(5, REDUCED)
        x = np.random.default_rng(3).random((6, 16, 16)).astype(np.float32)
        out1 = generator_forward(gen, x, (32, 32))
        out2 = generator_forward(gen, x, (32, 32))
        np.testing.assert_array_equal(out1, out2)

    def test_zero_padded_residual_first_channels(self):
        from flimsr.networks import _match_channels

        x = torch.arange(2 * 3 * 4 * 4, dtype=torch.float32).reshape(2, 3, 4, 4)
        padded = _match_channels(x, 8)
        assert padded.shape == (2, 8, 4, 4)
        assert torch.equal(padded[:, :3], x)
        assert torch.equal(padded[:, 3:], torch.zeros(2, 5, 4, 4))
        sliced = _match_channels(x, 2)
        assert torch.equal(sliced, x[:, :2])


class TestGradients:
    def test_generator_gradcheck_central_differences(self):
        gen = build_generator(11, REDUCED).double().train()
        x = torch.from_numpy(np.random.default_rng(0).random((1, 6, 32, 32))).double()
        gen(x, (32, 32)).sum().backward()
        params = list(gen.named_parameters())
        bounds = np.cumsum([p.numel() for _, p in params])
        rng = np.random.default_rng(123)
        picks = rng.choice(int(bounds[-1]), size=100, replace=False)
        h = 1e-6
        with torch.no_grad():
            for flat in picks:
                ti = int(np.searchsorted(bounds, flat, side="right"))
                local = int(flat - (bounds[ti - 1] if ti > 0 else 0))
                _, p = params[ti]
                analytic = p.grad.flatten()[local].item()
                orig = p.flatten()[local].item()
                p.flatten()[local] = orig + h
                f_plus = gen(x, (32, 32)).sum().item()
                p.flatten()[local] = orig - h
                f_minus = gen(x, (32, 32)).sum().item()
                p.flatten()[local] = orig
                fd = (f_plus - f_minus) / (2 * h)
                rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)
                assert rel < 1e-3, (params[ti][0], local, analytic, fd)


class TestDiscriminator:
    SMALL = DiscriminatorConfig(base_channels=8)

    def test_block_widths_default(self):
        assert DiscriminatorConfig().block_widths == [128, 256, 512, 1024, 2048]

    def test_seeded_init_identical(self):
        a = build_discriminator(9, self.SMALL)
        b = build_discriminator(9, self.SMALL)
        for k, v in a.state_dict().items():
            assert torch.equal(v, b.state_dict()[k]), k

    def test_parameter_count_closed_form(self):
        disc = build_discriminator(0, self.SMALL)
        assert sum(p.numel() for p in disc.parameters()) == discriminator_param_count(self.SMALL)

    def test_score_in_open_unit_interval(self):
        disc = build_discriminator(4, self.SMALL)
        patch = np.random.default_rng(4).random((6, 64, 64)).astype(np.float32)
        score = discriminator_forward(disc, patch)
        assert 0.0 < score < 1.0

    def test_purity(self):
        disc = build_discriminator(4, self.SMALL)
        patch = np.random.default_rng(5).random((6, 64, 64)).astype(np.float32)
        assert discriminator_forward(disc, patch) == discriminator_forward(disc, patch)

    def test_score_is_sigmoid_of_logit(self):
        disc = build_discriminator(6, self.SMALL)
        patch = np.random.default_rng(6).random((6, 64, 64)).astype(np.float32)
        x = torch.from_numpy(patch).unsqueeze(0)
        with torch.no_grad():
            logit = disc.forward_logit(x)
            score = disc(x)
        assert abs(float(score) - float(torch.sigmoid(logit))) < 1e-6

    def test_five_halvings_reach_8x8(self):
        disc = build_discriminator(2, self.SMALL)
        x = torch.zeros(1, 6, 256, 256)
        _, trace = trace_forward(disc, (x,))
        conv_shapes = [s for name, s in trace.shapes if "conv_down" in name]
        assert conv_shapes[-1][-2:] == (8, 8)
        widths = [s[1] for name, s in trace.shapes if "conv_down" in name]
        assert widths == [16, 32, 64, 128, 256]  # base 8 doubled per block

    def test_indivisible_patch_rejected(self):
        disc = build_discriminator(2, self.SMALL)
        with pytest.raises(ValueError, match="divisible by 32"):
            discriminator_forward(disc, np.zeros((6, 100, 100), dtype=np.float32))

    def test_nonfinite_rejected(self):
        disc = build_discriminator(2, self.SMALL)
        with pytest.raises(ValueError, match="non-finite"):
            discriminator_forward(disc, np.full((6, 64, 64), np.inf, dtype=np.float32))
