"""Adversarial and regularization objectives as plain functions of scores and images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-7
DEFAULT_LAMBDA = 1.0
LAMBDA_SWEEP = (0.05, 0.1, 0.5, 1.0, 5.0, 10.0)


def _pixels(img) -> np.ndarray:
    return np.asarray(getattr(img, "pixels", img), dtype=np.float64)


def _scores(scores, eps: float = EPS) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("score batch is empty")
    return np.clip(s, eps, 1.0 - eps)


def l_reg(gen, proj) -> float:
    """Mean absolute pixel difference between a rendered and a reference image."""
    a, b = _pixels(gen), _pixels(proj)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def adv_loss_d(real, fake, eps: float = EPS) -> float:
    """Discriminator loss ``-(E[log D(x)] + E[log(1 - D(G(y)))])``."""
    r, f = _scores(real, eps), _scores(fake, eps)
    return float(-(np.mean(np.log(r)) + np.mean(np.log1p(-f))))


def adv_loss_g(fake, eps: float = EPS) -> float:
    """Non-saturating generator loss ``-E[log D(G(y))]``."""
    return float(-np.mean(np.log(_scores(fake, eps))))


@dataclass(frozen=True)
class LossValue:
    adv: float
    reg: float
    lam: float

    @property
    def total(self) -> float:
        return self.adv + self.lam * self.reg

    def __float__(self) -> float:
        return self.total


def total_objective(adv: float, reg: float, lam: float = DEFAULT_LAMBDA) -> LossValue:
    if lam < 0:
        raise ValueError(f"regularization weight must be nonnegative, got {lam}")
    if reg < 0:
        raise ValueError(f"regularization term must be nonnegative, got {reg}")
    return LossValue(float(adv), float(reg), float(lam))
