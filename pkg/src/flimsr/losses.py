"""Training objectives: least-squares adversarial losses and the smooth-L1
(Huber) pixel term.

The discriminator minimizes  D(fake)^2 + (D(real) - 1)^2 ; the generator
minimizes  smooth_l1(pred, target) + alpha * (D(fake) - 1)^2 , where alpha
is 0.1 for super-resolution factors 2 and 3 and 1.0 for factors >= 4.
"""

from __future__ import annotations

import numpy as np


def alpha_for_k(k: int) -> float:
    """Adversarial weight schedule over the super-resolution factor."""
    return 0.1 if k in (2, 3) else 1.0


def huber_elementwise(u: float) -> float:
    """u^2/2 for |u| < 1, |u| - 0.5 otherwise; both branches meet at 0.5."""
    a = abs(u)
    return 0.5 * u * u if a < 1.0 else a - 0.5


def smooth_l1(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean Huber loss over all elements (the 1/(H*W*C) normalization)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    u = pred - target
    a = np.abs(u)
    per_element = np.where(a < 1.0, 0.5 * u * u, a - 0.5)
    return float(per_element.mean())


def smooth_l1_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Analytic gradient of smooth_l1 with respect to pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    u = pred - target
    g = np.where(np.abs(u) < 1.0, u, np.sign(u))
    return g / u.size


def discriminator_loss(d_fake: float, d_real: float) -> float:
    """Least-squares discriminator objective."""
    return d_fake**2 + (d_real - 1.0) ** 2


def generator_loss(pred: np.ndarray, target: np.ndarray, d_fake: float, alpha: float) -> float:
    """Pixel term plus alpha-weighted least-squares adversarial term."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return smooth_l1(pred, target) + alpha * (d_fake - 1.0) ** 2
