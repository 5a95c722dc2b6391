"""Training objectives for the generator, adversary and classifier."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .diffcore import kl_standard_normal, softmax_xent
from .errors import ConfigError, ShapeError
from .models import GaussianPosterior


@dataclass
class LossBreakdown:
    reconstruction: torch.Tensor
    kl: torch.Tensor
    adversarial_term: torch.Tensor
    total: torch.Tensor

    def detach(self) -> "LossBreakdown":
        return LossBreakdown(*(getattr(self, k).detach() for k in
                               ("reconstruction", "kl", "adversarial_term", "total")))

    def as_floats(self) -> dict[str, float]:
        return {k: getattr(self, k).item() for k in ("reconstruction", "kl", "adversarial_term", "total")}


def reconstruction_error(X: torch.Tensor, X_hat: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    """Batch mean of the per-trial squared error (summed, or averaged, over C x T)."""
    if X.shape != X_hat.shape:
        raise ShapeError(f"reconstruction shape {tuple(X_hat.shape)} differs from input {tuple(X.shape)}")
    sq = (X - X_hat).pow(2).flatten(1)
    per_trial = sq.sum(dim=1) if reduction == "sum" else sq.mean(dim=1)
    return per_trial.mean()


def loss_cvae(X, X_hat, posterior: GaussianPosterior, reduction: str = "sum") -> LossBreakdown:
    rec = reconstruction_error(X, X_hat, reduction)
    kl = kl_standard_normal(posterior.mu, posterior.sigma).mean()
    zero = torch.zeros((), dtype=rec.dtype)
    return LossBreakdown(rec, kl, zero, rec + kl)


def loss_acvae(X, X_hat, posterior: GaussianPosterior, adv_logits, s, lam: float,
               reduction: str = "sum") -> LossBreakdown:
    """Reconstruction + KL + ``lam`` times the adversary's mean log-likelihood of ``s``.

    Minimizing the total drives the adversary's log-likelihood of the true
    subject down.
    """
    if lam < 0:
        raise ConfigError(f"adversarial weight must be nonnegative, got {lam}")
    base = loss_cvae(X, X_hat, posterior, reduction)
    adv = -softmax_xent(adv_logits, s)
    return LossBreakdown(base.reconstruction, base.kl, adv, base.reconstruction + base.kl + lam * adv)


def loss_adversary(adv_logits, s) -> torch.Tensor:
    return softmax_xent(adv_logits, s)


def loss_classifier(cls_logits, y) -> torch.Tensor:
    return softmax_xent(cls_logits, y)
