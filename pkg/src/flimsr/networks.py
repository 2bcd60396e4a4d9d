"""Generator and discriminator architectures.

The generator is a U-Net preceded by a bilinear interpolation front-end:
four encoder levels (three 3x3 convs each, batch norm + ReLU, channel
widths 64/128/256/512) joined by stride-2 average pooling, a mirrored
decoder joined by bilinear x2 upsampling with skip concatenation, and a
final 3x3 conv back to six channels.  Residual connections at every level
zero-pad (or slice) the block input along the channel axis and add it to
the block output.

The discriminator is an initial 6->64 conv followed by five blocks, each a
dimension-preserving conv plus a channel-doubling stride-2 conv, then
adaptive average pooling to 4x4 and two fully connected layers with a
sigmoid output.

The same U-Net body doubles as the diffusion denoiser when built with 12
input channels and a sinusoidal time embedding (one learned projection per
level, added to that level's features).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


@dataclass(frozen=True)
class GeneratorConfig:
    in_channels: int = 6
    out_channels: int = 6
    base_channels: int = 64
    levels: int = 4
    convs_per_block: int = 3
    time_dim: int = 0  # >0 builds the time-conditioned (denoiser) variant

    @property
    def level_widths(self) -> list[int]:
        return [self.base_channels * 2**i for i in range(self.levels)]


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_channels: int = 6
    base_channels: int = 64
    n_blocks: int = 5
    pool_size: int = 4
    fc_hidden: int = 1024

    @property
    def block_widths(self) -> list[int]:
        return [self.base_channels * 2 ** (i + 1) for i in range(self.n_blocks)]


def _match_channels(x: torch.Tensor, out_channels: int) -> torch.Tensor:
    """Zero-pad (or slice) the channel axis so x can be added residually."""
    in_channels = x.shape[1]
    if in_channels == out_channels:
        return x
    if in_channels < out_channels:
        pad = x.new_zeros(x.shape[0], out_channels - in_channels, *x.shape[2:])
        return torch.cat([x, pad], dim=1)
    return x[:, :out_channels]


def sinusoidal_time_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sin/cos positional embedding of integer timesteps."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / max(half - 1, 1)
    )
    angles = t.float().reshape(-1, 1) * freqs.reshape(1, -1)
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class ResidualConvBlock(nn.Module):
    """convs_per_block x (3x3 conv + BN + ReLU) with a zero-padded residual
    shortcut; optionally adds a projected time embedding to the output."""

    def __init__(self, in_channels: int, out_channels: int, convs_per_block: int, time_dim: int = 0):
        super().__init__()
        convs, norms = [], []
        ch = in_channels
        for _ in range(convs_per_block):
            convs.append(nn.Conv2d(ch, out_channels, kernel_size=3, stride=1, padding=1))
            norms.append(nn.BatchNorm2d(out_channels, eps=BN_EPS, momentum=BN_MOMENTUM))
            ch = out_channels
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)
        self.out_channels = out_channels
        self.time_proj = nn.Linear(time_dim, out_channels) if time_dim > 0 else None

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor | None = None) -> torch.Tensor:
        h = x
        for conv, norm in zip(self.convs, self.norms):
            h = F.relu(norm(conv(h)))
        h = h + _match_channels(x, self.out_channels)
        if self.time_proj is not None and t_emb is not None:
            h = h + self.time_proj(t_emb)[:, :, None, None]
        return h


class UNet(nn.Module):
    """Encoder/decoder body shared by the generator and the denoiser."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        widths = config.level_widths
        enc_in = [config.in_channels] + widths[:-1]
        self.encoder = nn.ModuleList(
            ResidualConvBlock(enc_in[i], widths[i], config.convs_per_block, config.time_dim)
            for i in range(config.levels)
        )
        dec_in = [widths[i] + widths[i + 1] for i in range(config.levels - 1)] + [widths[-1]]
        self.decoder = nn.ModuleList(
            ResidualConvBlock(dec_in[i], widths[i], config.convs_per_block, config.time_dim)
            for i in range(config.levels)
        )
        self.pool = nn.AvgPool2d(kernel_size=2, stride=2)
        self.head = nn.Conv2d(widths[0], config.out_channels, kernel_size=3, stride=1, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor | None = None) -> torch.Tensor:
        t_emb = None
        if self.config.time_dim > 0:
            if t is None:
                raise ValueError("time-conditioned UNet requires a timestep")
            t_emb = sinusoidal_time_embedding(t.to(x.device), self.config.time_dim)
            if t_emb.shape[0] == 1 and x.shape[0] > 1:
                t_emb = t_emb.expand(x.shape[0], -1)
        skips = []
        h = x
        for i, block in enumerate(self.encoder):
            if i > 0:
                h = self.pool(h)
            h = block(h, t_emb)
            skips.append(h)
        h = self.decoder[-1](skips[-1], t_emb)
        for i in range(self.config.levels - 2, -1, -1):
            h = F.interpolate(h, size=skips[i].shape[-2:], mode="bilinear", align_corners=False)
            # Skip branch first: the level's residual slice then keeps the
            # encoder path, which carries the zero-padded network input.
            h = self.decoder[i](torch.cat([skips[i], h], dim=1), t_emb)
        return self.head(h)


class Generator(nn.Module):
    """Bilinear front-end + U-Net correction; maps a low-resolution stack
    directly to the requested high-resolution size (no output activation).

    The U-Net output is added to the interpolated input (a parameter-free
    global residual), so the network learns the detail the interpolation
    misses rather than re-deriving the image itself.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        self.unet = UNet(config)

    def forward(self, x: torch.Tensor, target_hw: tuple[int, int]) -> torch.Tensor:
        if tuple(x.shape[-2:]) != tuple(target_hw):
            x = F.interpolate(x, size=tuple(target_hw), mode="bilinear", align_corners=False)
        return x + self.unet(x)


class DiscriminatorBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv_same = nn.Conv2d(channels, channels, kernel_size=3, stride=1, padding=1)
        self.bn_same = nn.BatchNorm2d(channels, eps=BN_EPS, momentum=BN_MOMENTUM)
        self.conv_down = nn.Conv2d(channels, channels * 2, kernel_size=3, stride=2, padding=1)
        self.bn_down = nn.BatchNorm2d(channels * 2, eps=BN_EPS, momentum=BN_MOMENTUM)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.bn_same(self.conv_same(x)))
        return F.relu(self.bn_down(self.conv_down(h)))


class Discriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        self.initial = nn.Conv2d(config.in_channels, config.base_channels, kernel_size=3, stride=1, padding=1)
        self.blocks = nn.ModuleList(
            DiscriminatorBlock(config.base_channels * 2**i) for i in range(config.n_blocks)
        )
        self.pool = nn.AdaptiveAvgPool2d(config.pool_size)
        flat = config.block_widths[-1] * config.pool_size**2
        self.fc1 = nn.Linear(flat, config.fc_hidden)
        self.fc2 = nn.Linear(config.fc_hidden, 1)

    def forward_logit(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.initial(x))
        for block in self.blocks:
            h = block(h)
        h = self.pool(h).flatten(1)
        return self.fc2(F.relu(self.fc1(h))).squeeze(-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.forward_logit(x))


HEAD_INIT_GAIN = 0.1


def _init_parameters(module: nn.Module, seed: int) -> None:
    """Kaiming fan-in init for conv/linear weights, zero biases, unit batch
    norm; draws come from one explicit generator so init is bit-reproducible.

    The U-Net output conv is down-scaled by HEAD_INIT_GAIN so a fresh
    generator starts close to its interpolation front-end (and a fresh
    denoiser close to a zero noise estimate) instead of emitting unit-scale
    noise it must first unlearn.
    """
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight.shape[1:].numel()
            std = math.sqrt(2.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * std)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
    for m in module.modules():
        if isinstance(m, UNet):
            with torch.no_grad():
                m.head.weight.mul_(HEAD_INIT_GAIN)


def build_generator(seed: int, config: GeneratorConfig | None = None) -> Generator:
    """Construct and deterministically initialize a generator (eval mode)."""
    gen = Generator(config or GeneratorConfig())
    _init_parameters(gen, seed)
    return gen.eval()


def build_discriminator(seed: int, config: DiscriminatorConfig | None = None) -> Discriminator:
    """Construct and deterministically initialize a discriminator (eval mode)."""
    disc = Discriminator(config or DiscriminatorConfig())
    _init_parameters(disc, seed)
    return disc.eval()


def build_denoiser(seed: int, config: GeneratorConfig | None = None) -> UNet:
    """Time-conditioned U-Net for the diffusion baseline (12 in / 6 out)."""
    cfg = config or GeneratorConfig(in_channels=12, time_dim=64)
    if cfg.time_dim <= 0:
        raise ValueError("denoiser config requires time_dim > 0")
    net = UNet(cfg)
    _init_parameters(net, seed)
    return net.eval()


def generator_forward(
    gen: Generator, lr_patch: np.ndarray, target_hw: tuple[int, int]
) -> np.ndarray:
    """Run one C x m x n patch through the generator (no gradients)."""
    if not np.all(np.isfinite(lr_patch)):
        raise ValueError("non-finite input")
    x = torch.from_numpy(np.ascontiguousarray(lr_patch, dtype=np.float32)).unsqueeze(0)
    with torch.no_grad():
        out = gen(x, target_hw)
    return out.squeeze(0).numpy()


def discriminator_forward(disc: Discriminator, patch: np.ndarray) -> float:
    """Score one C x P x P patch; P must survive five halvings."""
    if not np.all(np.isfinite(patch)):
        raise ValueError("non-finite input")
    p = patch.shape[-1]
    if patch.shape[-2] % 32 != 0 or p % 32 != 0:
        raise ValueError(f"patch dimensions must be divisible by 32, got {patch.shape[-2:]}")
    x = torch.from_numpy(np.ascontiguousarray(patch, dtype=np.float32)).unsqueeze(0)
    with torch.no_grad():
        score = disc(x)
    return float(score.squeeze(0))


@dataclass
class ForwardTrace:
    """Per-layer output shapes (and optionally activations) of one pass."""

    shapes: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    activations: dict[str, torch.Tensor] = field(default_factory=dict)


def trace_forward(
    module: nn.Module, args: Sequence, keep_activations: bool = False
) -> tuple[torch.Tensor, ForwardTrace]:
    """Run a forward pass recording every leaf module's output shape."""
    trace = ForwardTrace()
    handles = []
    for name, m in module.named_modules():
        if len(list(m.children())) > 0 or name == "":
            continue

        def hook(mod, inputs, output, _name=name):
            if isinstance(output, torch.Tensor):
                trace.shapes.append((_name, tuple(output.shape)))
                if keep_activations:
                    trace.activations[_name] = output.detach()

        handles.append(m.register_forward_hook(hook))
    try:
        out = module(*args)
    finally:
        for h in handles:
            h.remove()
    return out, trace
