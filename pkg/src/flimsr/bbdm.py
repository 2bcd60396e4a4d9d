"""Conditional Brownian-bridge diffusion baseline.

The forward process pins x_0 (the high-resolution image) and x_T = y (the
bilinearly upsampled low-resolution image): at step t the state is
Gaussian with mean (1 - m_t) x_0 + m_t y and variance d_t = 2 s (m_t -
m_t^2), with m_t = t / T.  A time-conditioned U-Net predicts the standard
normal draw; reverse sampling estimates x_0 from that prediction and then
samples the exact Gaussian bridge posterior toward the previous timestep.

The endpoint t = T is singular (m_T = 1, d_T = 0, so x_T = y carries no
information about x_0); the first reverse transition therefore uses
x_0-hat = y, which the next step's prediction immediately corrects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint as ckpt
from .flimb import FlimImage
from .networks import GeneratorConfig, UNet, build_denoiser
from .preprocess import PairedPatch
from .training import child_seed

DenoiserFn = Callable[[torch.Tensor, torch.Tensor, int], torch.Tensor]


@dataclass(frozen=True)
class DiffusionSchedule:
    """Tables m_t = t/T and d_t = 2 s (m_t - m_t^2) for t = 0..T."""

    T: int
    s: float
    m: np.ndarray
    delta: np.ndarray


def schedule(T: int = 1000, s: float = 1.0) -> DiffusionSchedule:
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    t = np.arange(T + 1, dtype=np.float64)
    m = t / T
    delta = 2.0 * s * (m - m**2)
    return DiffusionSchedule(T=T, s=s, m=m, delta=delta)


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.float()
    return torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))


def forward_sample(
    x0, y, t: int, sched: DiffusionSchedule, rng: torch.Generator
) -> torch.Tensor:
    """Draw x_t ~ N((1-m_t) x_0 + m_t y, d_t I); exact at both endpoints."""
    x0_t, y_t = _as_tensor(x0), _as_tensor(y)
    if x0_t.shape != y_t.shape:
        raise ValueError(f"shape mismatch: {tuple(x0_t.shape)} vs {tuple(y_t.shape)}")
    if not 0 <= t <= sched.T:
        raise ValueError(f"t must lie in [0, {sched.T}], got {t}")
    m = float(sched.m[t])
    delta = float(sched.delta[t])
    mean = (1.0 - m) * x0_t + m * y_t
    if delta == 0.0:
        return mean
    eps = torch.randn(x0_t.shape, generator=rng)
    return mean + math.sqrt(delta) * eps


@dataclass
class BbdmConfig:
    """Hyperparameters of the diffusion baseline."""

    k: int
    T: int = 1000
    s: float = 1.0
    batch_size: int = 4
    steps: int = 1000
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    base_channels: int = 64
    levels: int = 4
    convs_per_block: int = 3
    time_dim: int = 64
    sample_steps: int = 0  # 0: all T reverse steps

    def denoiser_config(self) -> GeneratorConfig:
        # x_t concatenated with the upsampled condition: 12 channels in.
        return GeneratorConfig(
            in_channels=12,
            out_channels=6,
            base_channels=self.base_channels,
            levels=self.levels,
            convs_per_block=self.convs_per_block,
            time_dim=self.time_dim,
        )


@dataclass
class BbdmHistory:
    noise_mse: list[float] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        lines = ["step,noise_mse"]
        for i, v in enumerate(self.noise_mse):
            lines.append(f"{i + 1},{v:.8g}")
        Path(path).write_text("\n".join(lines) + "\n")


def _upsample_condition(lr: torch.Tensor, target_hw: tuple[int, int]) -> torch.Tensor:
    """f_k: bilinear interpolation of the low-resolution stack to HR size."""
    return F.interpolate(lr, size=tuple(target_hw), mode="bilinear", align_corners=False)


def denoiser_fn(module: UNet) -> DenoiserFn:
    """Adapt the trained U-Net to the (x_t, y, t) -> eps-hat interface."""

    def fn(x: torch.Tensor, y: torch.Tensor, t: int) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x, y = x.unsqueeze(0), y.unsqueeze(0)
        with torch.no_grad():
            out = module(torch.cat([x, y], dim=1), torch.tensor([t]))
        return out.squeeze(0) if squeeze else out

    return fn


def train_bbdm(
    config: BbdmConfig,
    dataset: list[PairedPatch],
    out_dir: str | Path | None = None,
    stats_ref: str | None = None,
) -> tuple[UNet, BbdmHistory]:
    """Noise-prediction training: sample t ~ U[1, T], draw x_t with the
    closed-form forward process, regress the drawn noise with MSE."""
    if not dataset:
        raise ValueError("empty dataset")
    for pair in dataset:
        if pair.k != config.k:
            raise ValueError(f"pair has k={pair.k}, config expects {config.k}")
    sched = schedule(config.T, config.s)
    hrs = torch.from_numpy(np.stack([p.hr.data for p in dataset]).astype(np.float32))
    lrs = torch.from_numpy(np.stack([p.lr.data for p in dataset]).astype(np.float32))
    ys = _upsample_condition(lrs, tuple(hrs.shape[-2:]))
    n = hrs.shape[0]

    torch.manual_seed(child_seed(config.seed, 13))
    net = build_denoiser(child_seed(config.seed, 10), config.denoiser_config())
    opt = torch.optim.Adam(
        net.parameters(), lr=config.lr, betas=(config.beta1, config.beta2), eps=config.adam_eps
    )
    batch_rng = np.random.default_rng(child_seed(config.seed, 11))
    noise_rng = torch.Generator().manual_seed(child_seed(config.seed, 12))

    m_table = torch.from_numpy(sched.m).float()
    d_table = torch.from_numpy(sched.delta).float()
    history = BbdmHistory()
    net.train()
    for _ in range(config.steps):
        idx = batch_rng.choice(n, size=min(config.batch_size, n), replace=n < config.batch_size)
        x0 = hrs[list(idx)]
        y = ys[list(idx)]
        t = torch.from_numpy(batch_rng.integers(1, config.T + 1, size=len(idx)))
        m = m_table[t].reshape(-1, 1, 1, 1)
        d = d_table[t].reshape(-1, 1, 1, 1)
        eps = torch.randn(x0.shape, generator=noise_rng)
        x_t = (1.0 - m) * x0 + m * y + torch.sqrt(d) * eps
        pred = net(torch.cat([x_t, y], dim=1), t)
        loss = F.mse_loss(pred, eps)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.noise_mse.append(loss.item())

    net.eval()
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        meta = ckpt.denoiser_meta(
            net.config,
            k=config.k,
            T=config.T,
            s=config.s,
            seed=config.seed,
            conditioning="bilinear_upsampled_lr_concat",
            optimizer={
                "name": "adam",
                "lr": config.lr,
                "betas": [config.beta1, config.beta2],
                "eps": config.adam_eps,
            },
            stats_ref=stats_ref,
        )
        ckpt.save_checkpoint(out_path / "denoiser.ckpt", net, meta)
        history.to_csv(out_path / "bbdm_history.csv")
    return net, history


def _reverse_timesteps(T: int, steps: int) -> list[int]:
    """Strictly decreasing timestep ladder from T to 0 with ~steps rungs."""
    raw = np.linspace(T, 0, steps + 1)
    ts = sorted({int(round(v)) for v in raw}, reverse=True)
    if ts[0] != T or ts[-1] != 0:
        raise ValueError("failed to build a T..0 ladder")
    return ts


def reverse_sample(
    denoiser: DenoiserFn,
    y,
    sched: DiffusionSchedule,
    rng: torch.Generator,
    steps: int | None = None,
) -> torch.Tensor:
    """Run the reverse bridge from x_T = y down to an x_0 estimate.

    Each transition t -> u estimates x_0 from the predicted noise via the
    forward mean equation, then samples the Gaussian posterior
    q(x_u | x_t, x_0-hat, y).  The final transition to u = 0 is
    deterministic (d_0 = 0).
    """
    y_t = _as_tensor(y).clone()
    n_steps = sched.T if steps is None or steps <= 0 else steps
    if n_steps > sched.T:
        raise ValueError(f"steps={n_steps} exceeds T={sched.T}")
    ladder = _reverse_timesteps(sched.T, n_steps)
    x = y_t.clone()  # first state is the condition, bit-exactly
    m, d = sched.m, sched.delta
    for t, u in zip(ladder[:-1], ladder[1:]):
        eps_hat = denoiser(x, y_t, t)
        if t == sched.T:
            # Singular endpoint: x_T = y regardless of x_0.
            x0_hat = y_t
        else:
            x0_hat = (x - m[t] * y_t - math.sqrt(d[t]) * eps_hat) / (1.0 - m[t])
        a = (1.0 - m[u]) * x0_hat + m[u] * y_t
        if t == sched.T:
            mean, var = a, d[u]
        else:
            r = (1.0 - m[t]) / (1.0 - m[u])
            q = d[t] - r * r * d[u]
            mean = a + (d[u] * r / d[t]) * (x - r * a - (m[t] - r * m[u]) * y_t)
            var = d[u] * q / d[t]
        if u == 0 or var <= 0:
            x = mean
        else:
            noise = torch.randn(x.shape, generator=rng)
            x = mean + math.sqrt(var) * noise
    return x


def bbdm_infer(
    net: UNet,
    lr_image: FlimImage,
    target_hw: tuple[int, int],
    sched: DiffusionSchedule,
    seed: int = 0,
    steps: int | None = None,
) -> FlimImage:
    """Whole-image diffusion inference: upsample, reverse-sample, clamp."""
    lo, hi = float(lr_image.data.min()), float(lr_image.data.max())
    if lo < -1e-3 or hi > 1.0 + 1e-3:
        raise ValueError(
            f"input range [{lo:.3g}, {hi:.3g}] is not normalized; apply the "
            "training-time preprocessing statistics first"
        )
    x = torch.from_numpy(lr_image.data.astype(np.float32)).unsqueeze(0)
    y = _upsample_condition(x, target_hw).squeeze(0)
    rng = torch.Generator().manual_seed(seed)
    out = reverse_sample(denoiser_fn(net), y, sched, rng, steps=steps)
    data = out.clamp(0.0, 1.0).numpy().astype(np.float32)
    scale = lr_image.data.shape[-2] / target_hw[0]
    return lr_image.with_data(data, pixel_size_um=lr_image.pixel_size_um * scale)
