"""Adversarial training loop and tiled whole-image inference.

Each step runs one discriminator update (least-squares objective on a
detached generator output and the real target) followed by one generator
update (smooth-L1 plus the alpha-weighted adversarial term).  Both
networks use Adam(1e-4, betas=(0.5, 0.999)).  Training is reproducible:
all randomness descends from the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint as ckpt
from .flimb import FlimImage
from .losses import alpha_for_k
from .metrics import MetricConstants, psnr, ssim
from .networks import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    build_discriminator,
    build_generator,
)
from .preprocess import ClipStats, NormStats, PairedPatch, bilinear_resize_array


def child_seed(seed: int, index: int) -> int:
    """Derive an independent stream seed: entry `index` under the root."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0] % 2**63)


@dataclass
class TrainConfig:
    """Hyperparameters of one cGAN training run.

    ``alpha`` defaults to the published schedule (0.1 for k in {2, 3}, 1.0
    for k >= 4); other values require ``allow_custom_alpha``.
    """

    k: int
    alpha: float | None = None
    batch_size: int = 4
    steps: int = 1000
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_interval: int = 0  # 0: checkpoint only at the end
    base_channels: int = 64
    levels: int = 4
    convs_per_block: int = 3
    disc_base_channels: int | None = None
    allow_custom_alpha: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("batch_size and steps must be positive")
        if self.alpha is None:
            self.alpha = alpha_for_k(self.k)
        elif self.alpha != alpha_for_k(self.k) and not self.allow_custom_alpha:
            raise ValueError(
                f"alpha={self.alpha} deviates from the schedule value "
                f"{alpha_for_k(self.k)} for k={self.k}; pass allow_custom_alpha=True"
            )
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            base_channels=self.base_channels,
            levels=self.levels,
            convs_per_block=self.convs_per_block,
        )

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(base_channels=self.disc_base_channels or self.base_channels)


@dataclass
class TrainHistory:
    g_loss: list[float] = field(default_factory=list)
    d_loss: list[float] = field(default_factory=list)
    l1_term: list[float] = field(default_factory=list)
    adv_term: list[float] = field(default_factory=list)
    val_steps: list[int] = field(default_factory=list)
    val_psnr: list[float] = field(default_factory=list)
    val_ssim: list[float] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        lines = ["step,g_loss,d_loss,l1_term,adv_term"]
        for i in range(len(self.g_loss)):
            lines.append(
                f"{i + 1},{self.g_loss[i]:.8g},{self.d_loss[i]:.8g},"
                f"{self.l1_term[i]:.8g},{self.adv_term[i]:.8g}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


def _stack_pairs(dataset: list[PairedPatch], k: int) -> tuple[torch.Tensor, torch.Tensor]:
    if not dataset:
        raise ValueError("empty dataset")
    lr_shape = dataset[0].lr.data.shape
    hr_shape = dataset[0].hr.data.shape
    for pair in dataset:
        if pair.k != k:
            raise ValueError(f"pair has k={pair.k}, config expects {k}")
        if pair.lr.data.shape != lr_shape or pair.hr.data.shape != hr_shape:
            raise ValueError("all training pairs must share one patch geometry")
    lrs = torch.from_numpy(np.stack([p.lr.data for p in dataset]).astype(np.float32))
    hrs = torch.from_numpy(np.stack([p.hr.data for p in dataset]).astype(np.float32))
    return lrs, hrs


def _validation_scores(
    gen: Generator, lrs: torch.Tensor, hrs: torch.Tensor
) -> tuple[float, float]:
    constants = MetricConstants()
    was_training = gen.training
    gen.eval()
    with torch.no_grad():
        pred = gen(lrs, tuple(hrs.shape[-2:])).clamp(0.0, 1.0).numpy()
    if was_training:
        gen.train()
    target = hrs.numpy()
    psnrs = [psnr(pred[i], target[i]) for i in range(pred.shape[0])]
    ssims = [ssim(pred[i], target[i], constants) for i in range(pred.shape[0])]
    return float(np.mean(psnrs)), float(np.mean(ssims))


def train(
    config: TrainConfig,
    dataset: list[PairedPatch],
    out_dir: str | Path | None = None,
    stats_ref: str | None = None,
    validate_every: int = 0,
) -> tuple[Generator, Discriminator, TrainHistory]:
    """Alternating cGAN training over paired patches.

    Deterministic for a fixed config and dataset order.  Checkpoints land
    in ``out_dir`` (final ``generator.ckpt``/``discriminator.ckpt``, plus
    periodic snapshots when ``checkpoint_interval`` > 0).
    """
    lrs, hrs = _stack_pairs(dataset, config.k)
    target_hw = tuple(hrs.shape[-2:])
    n = lrs.shape[0]

    torch.manual_seed(child_seed(config.seed, 3))
    gen = build_generator(child_seed(config.seed, 0), config.generator_config())
    disc = build_discriminator(child_seed(config.seed, 1), config.discriminator_config())
    shuffle_rng = np.random.default_rng(child_seed(config.seed, 2))
    opt_g = torch.optim.Adam(
        gen.parameters(), lr=config.lr, betas=(config.beta1, config.beta2), eps=config.adam_eps
    )
    opt_d = torch.optim.Adam(
        disc.parameters(), lr=config.lr, betas=(config.beta1, config.beta2), eps=config.adam_eps
    )

    history = TrainHistory()
    gen.train()
    disc.train()
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    def meta() -> dict:
        return {
            "k": config.k,
            "alpha": config.alpha,
            "seed": config.seed,
            "optimizer": {
                "name": "adam",
                "lr": config.lr,
                "betas": [config.beta1, config.beta2],
                "eps": config.adam_eps,
            },
            "batch_size": config.batch_size,
            "steps": config.steps,
            "stats_ref": stats_ref,
        }

    step = 0
    order: list[int] = []
    batch_size = min(config.batch_size, n)
    while step < config.steps:
        # Top up from a fresh seeded permutation so every batch is full;
        # size-1 batches would break batch-norm on 1x1 feature maps.
        while len(order) < batch_size:
            order.extend(shuffle_rng.permutation(n))
        batch_idx = [order.pop(0) for _ in range(batch_size)]
        lr_batch = lrs[batch_idx]
        hr_batch = hrs[batch_idx]
        step += 1

        # Discriminator step on a detached generator output (Eq. for D).
        fake = gen(lr_batch, target_hw).detach()
        d_fake = disc(fake)
        d_real = disc(hr_batch)
        loss_d = (d_fake**2).mean() + ((d_real - 1.0) ** 2).mean()
        opt_d.zero_grad()
        loss_d.backward()
        opt_d.step()

        # Generator step (smooth-L1 + alpha * adversarial term).
        fake = gen(lr_batch, target_hw)
        d_fake2 = disc(fake)
        l1 = F.smooth_l1_loss(fake, hr_batch, beta=1.0)
        adv = ((d_fake2 - 1.0) ** 2).mean()
        loss_g = l1 + config.alpha * adv
        opt_g.zero_grad()
        loss_g.backward()
        opt_g.step()

        history.g_loss.append(loss_g.item())
        history.d_loss.append(loss_d.item())
        history.l1_term.append(l1.item())
        history.adv_term.append(adv.item())

        if validate_every > 0 and (step % validate_every == 0 or step == config.steps):
            vp, vs = _validation_scores(gen, lrs, hrs)
            history.val_steps.append(step)
            history.val_psnr.append(vp)
            history.val_ssim.append(vs)
        if (
            out_path is not None
            and config.checkpoint_interval > 0
            and step % config.checkpoint_interval == 0
            and step < config.steps
        ):
            ckpt.save_checkpoint(
                out_path / f"generator_step{step:06d}.ckpt",
                gen,
                ckpt.generator_meta(gen.config, **meta(), step=step),
            )

    gen.eval()
    disc.eval()
    if out_path is not None:
        ckpt.save_checkpoint(
            out_path / "generator.ckpt", gen, ckpt.generator_meta(gen.config, **meta())
        )
        ckpt.save_checkpoint(
            out_path / "discriminator.ckpt", disc, ckpt.discriminator_meta(disc.config, **meta())
        )
        history.to_csv(out_path / "history.csv")
    return gen, disc, history


def _segment_edges(n_lr: int, n_hr: int, tile_hr: int) -> list[tuple[int, int, int, int]]:
    """(lr_start, lr_stop, hr_start, hr_stop) segments covering one axis."""
    hr_edges = list(range(0, n_hr, tile_hr)) + [n_hr]
    if hr_edges[-2] == n_hr:
        hr_edges.pop(-2)
    segments = []
    for a, b in zip(hr_edges[:-1], hr_edges[1:]):
        la = round(a * n_lr / n_hr)
        lb = round(b * n_lr / n_hr)
        lb = max(lb, la + 1)
        segments.append((la, min(lb, n_lr), a, b))
    return segments


def infer(
    generator: Generator,
    lr_image: FlimImage,
    target_hw: tuple[int, int],
    stats: tuple[ClipStats, NormStats] | None = None,
    tile_hr: int = 256,
) -> FlimImage:
    """Tile, super-resolve, stitch, and clamp one low-resolution image.

    The input must already carry the training-time preprocessing; pass the
    training ``(ClipStats, NormStats)`` to apply it here instead.
    """
    if stats is not None:
        clip_stats, norm_stats = stats
        lr_image = norm_stats.apply(clip_stats.apply(lr_image), clamp=True)
    else:
        lo, hi = float(lr_image.data.min()), float(lr_image.data.max())
        if lo < -1e-3 or hi > 1.0 + 1e-3:
            raise ValueError(
                f"input range [{lo:.3g}, {hi:.3g}] is not normalized and no "
                "preprocessing statistics were given"
            )
    generator.eval()
    c, h_lr, w_lr = lr_image.data.shape
    h_out, w_out = target_hw
    out = np.zeros((c, h_out, w_out), dtype=np.float32)
    x = torch.from_numpy(lr_image.data.astype(np.float32))
    with torch.no_grad():
        for la, lb, ha, hb in _segment_edges(h_lr, h_out, tile_hr):
            for lc, ld, wa, wb in _segment_edges(w_lr, w_out, tile_hr):
                tile = x[:, la:lb, lc:ld].unsqueeze(0)
                pred = generator(tile, (hb - ha, wb - wa))
                out[:, ha:hb, wa:wb] = pred.squeeze(0).clamp(0.0, 1.0).numpy()
    scale = h_lr / h_out
    return lr_image.with_data(out, pixel_size_um=lr_image.pixel_size_um * scale)


def bilinear_baseline(lr_image: FlimImage, target_hw: tuple[int, int]) -> FlimImage:
    """Interpolation-only reference reconstruction."""
    data = bilinear_resize_array(lr_image.data, *target_hw)
    scale = lr_image.data.shape[-2] / target_hw[0]
    return lr_image.with_data(
        np.clip(data, 0.0, 1.0), pixel_size_um=lr_image.pixel_size_um * scale
    )
