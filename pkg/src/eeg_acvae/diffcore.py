"""Differentiable building blocks, the Adam update and a finite-difference checker.

Forward passes are written against torch tensors so gradients come from
autograd; :func:`check_gradients` verifies them independently with central
differences in float64.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DomainError, ShapeError

Pad = tuple[int, int, int, int]  # (top, bottom, left, right)


def same_padding(width: int) -> Pad:
    """Temporal padding that keeps the length unchanged for a ``1 x width`` kernel."""
    left = width // 2
    return (0, 0, left, width - 1 - left)


def _check_conv(x: torch.Tensor, kernels: torch.Tensor, in_channels: int, pad: Pad):
    if x.dim() != 4 or kernels.dim() != 4:
        raise ShapeError(f"expected 4-d input and kernels, got {tuple(x.shape)} and {tuple(kernels.shape)}")
    if x.shape[1] != in_channels:
        raise ShapeError(f"input has {x.shape[1]} feature maps, kernels expect {in_channels}")
    if len(pad) != 4 or min(pad) < 0:
        raise ShapeError(f"padding must be four nonnegative ints, got {pad}")


def conv2d(x: torch.Tensor, kernels: torch.Tensor, pad: Pad = (0, 0, 0, 0),
           groups: int = 1) -> torch.Tensor:
    """Cross-correlate ``x`` (B, F_in, H, W) with ``kernels`` (F_out, F_in/groups, kH, kW)."""
    _check_conv(x, kernels, kernels.shape[1] * groups, pad)
    top, bottom, left, right = pad
    H, W = x.shape[2] + top + bottom, x.shape[3] + left + right
    if kernels.shape[2] > H or kernels.shape[3] > W:
        raise ShapeError(f"kernel {tuple(kernels.shape[2:])} larger than padded input {(H, W)}")
    if any(pad):
        x = F.pad(x, (left, right, top, bottom))
    return F.conv2d(x, kernels, groups=groups)


def conv2d_transpose(x: torch.Tensor, kernels: torch.Tensor, pad: Pad = (0, 0, 0, 0),
                     groups: int = 1) -> torch.Tensor:
    """Adjoint of :func:`conv2d` for the same kernels, padding and groups.

    ``x`` has ``kernels.shape[0]`` feature maps; the result has
    ``kernels.shape[1] * groups``. The padded border produced by the full
    transposed convolution is cropped, which is the adjoint of zero padding.
    """
    _check_conv(x, kernels, kernels.shape[0], pad)
    if kernels.shape[0] % groups:
        raise ShapeError(f"{kernels.shape[0]} kernels not divisible into {groups} groups")
    top, bottom, left, right = pad
    out = F.conv_transpose2d(x, kernels, groups=groups)
    H, W = out.shape[2], out.shape[3]
    if top + bottom >= H or left + right >= W:
        raise ShapeError(f"padding {pad} crops the whole {H}x{W} output")
    return out[:, :, top:H - bottom, left:W - right]


def dense(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    if x.dim() != 2 or weight.dim() != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense: input {tuple(x.shape)} incompatible with weight {tuple(weight.shape)}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense: bias {tuple(bias.shape)} does not match {weight.shape[0]} outputs")
    return F.linear(x, weight, bias)


def batchnorm(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor,
              running_mean: torch.Tensor, running_var: torch.Tensor, mode: str = "train",
              momentum: float = 0.9, eps: float = 1e-5, update_stats: bool = True) -> torch.Tensor:
    """Per-feature normalization over the batch and any spatial axes.

    Train mode normalizes with biased batch statistics and, when
    ``update_stats`` is set, folds them into the running buffers in place:
    ``running = momentum * running + (1 - momentum) * batch`` (unbiased
    variance). Eval mode uses the running buffers.
    """
    if x.dim() not in (2, 4) or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batchnorm: input {tuple(x.shape)} vs {gamma.shape[0]} features")
    if mode == "train":
        # fused kernel; with buffers given it applies exactly the update above
        stats = (running_mean, running_var) if update_stats else (None, None)
        return F.batch_norm(x, *stats, gamma, beta, training=True,
                            momentum=1.0 - momentum, eps=eps)
    if mode == "eval":
        return F.batch_norm(x, running_mean, running_var, gamma, beta, training=False, eps=eps)
    raise ValueError(f"unknown mode {mode!r}")


def relu(x: torch.Tensor) -> torch.Tensor:
    return F.relu(x)


def dropout(x: torch.Tensor, rate: float, mode: str = "train",
            generator: torch.Generator | None = None) -> torch.Tensor:
    """Inverted dropout: survivors scaled by ``1 / (1 - rate)``; identity in eval mode."""
    if mode != "train" or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must lie in [0, 1), got {rate}")
    scale = torch.rand(x.shape, generator=generator, dtype=x.dtype).ge_(rate).div_(1.0 - rate)
    return x * scale


def reparameterize(mu: torch.Tensor, sigma: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    if mu.shape != sigma.shape or mu.shape != eps.shape:
        raise ShapeError(f"reparameterize: shapes {tuple(mu.shape)}, {tuple(sigma.shape)}, {tuple(eps.shape)}")
    if bool((sigma <= 0).any()):
        raise DomainError("posterior scale must be strictly positive")
    return mu + sigma * eps


def kl_standard_normal(mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, diag sigma^2) || N(0, I)) for each row of the batch."""
    if bool((sigma <= 0).any()):
        raise DomainError("posterior scale must be strictly positive")
    log_var = 2.0 * torch.log(sigma)
    return 0.5 * (sigma * sigma + mu * mu - 1.0 - log_var).sum(dim=-1)


def log_softmax(logits: torch.Tensor) -> torch.Tensor:
    shifted = logits - logits.max(dim=1, keepdim=True).values.detach()
    return shifted - torch.log(torch.exp(shifted).sum(dim=1, keepdim=True))


def softmax_xent(logits: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
    """Batch mean of ``-log softmax(logits)[true class]``."""
    if logits.shape != onehot.shape or logits.dim() != 2:
        raise ShapeError(f"softmax_xent: logits {tuple(logits.shape)} vs targets {tuple(onehot.shape)}")
    return -(onehot * log_softmax(logits)).sum(dim=1).mean()


def one_hot(indices, n_classes: int, dtype=torch.float32) -> torch.Tensor:
    idx = torch.as_tensor(np.asarray(indices), dtype=torch.long)
    if idx.numel() and (int(idx.min()) < 0 or int(idx.max()) >= n_classes):
        raise ShapeError(f"class index outside [0, {n_classes})")
    return F.one_hot(idx, n_classes).to(dtype)


@dataclass
class OptimizerState:
    step: int = 0
    first_moment: dict[str, torch.Tensor] = field(default_factory=dict)
    second_moment: dict[str, torch.Tensor] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a fixed, named set of tensors.

    Parameters are updated in place, so modules holding them see the
    new values immediately.
    """

    def __init__(self, params: Mapping[str, torch.Tensor] | Iterable[tuple[str, torch.Tensor]],
                 lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = OptimizerState(
            first_moment={k: torch.zeros_like(p) for k, p in self.params.items()},
            second_moment={k: torch.zeros_like(p) for k, p in self.params.items()},
        )

    @torch.no_grad()
    def step(self, grads: Mapping[str, torch.Tensor] | Iterable[torch.Tensor]) -> None:
        if not isinstance(grads, Mapping):
            grads = dict(zip(self.params, grads))
        if grads.keys() != self.params.keys():
            raise ShapeError("gradient names do not match optimizer parameters")
        st = self.state
        st.step += 1
        bc1 = 1.0 - self.beta1 ** st.step
        bc2 = 1.0 - self.beta2 ** st.step
        for name, p in self.params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"{name}: gradient {tuple(g.shape)} vs parameter {tuple(p.shape)}")
            m, v = st.first_moment[name], st.second_moment[name]
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            p.sub_(self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps))


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tolerance: float
    worst: list[tuple[str, tuple[int, ...], float, float, float]]

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __str__(self) -> str:
        head = (f"{'PASS' if self.passed else 'FAIL'}: max relative error {self.max_rel_error:.3e} "
                f"over {self.n_checked} coordinates (tolerance {self.tolerance:.0e})")
        rows = [f"  {name}{list(idx)}: analytic {a:+.6e} numeric {n:+.6e} rel {r:.2e}"
                for name, idx, a, n, r in self.worst]
        return "\n".join([head] + rows)


def check_gradients(fn: Callable[..., torch.Tensor], point: Mapping[str, np.ndarray | torch.Tensor],
                    tolerance: float = 1e-4, max_coords: int = 200, step: float = 1e-6,
                    seed: int = 0, n_worst: int = 5) -> GradCheckReport:
    """Compare autograd gradients of ``fn(**point)`` against central differences.

    Everything is re-evaluated in float64. Non-scalar outputs are reduced to a
    scalar by a fixed random projection. Tensors with more than ``max_coords``
    entries are probed on a random subsample of ``max_coords`` coordinates.
    """
    rng = np.random.default_rng(seed)
    inputs = {k: torch.as_tensor(np.asarray(v.detach() if torch.is_tensor(v) else v),
                                 dtype=torch.float64).clone() for k, v in point.items()}

    projection: list[torch.Tensor] = []

    def scalar(**kw) -> torch.Tensor:
        out = fn(**kw)
        if out.dim() == 0:
            return out
        if not projection:
            projection.append(torch.as_tensor(rng.standard_normal(tuple(out.shape))))
        return (out * projection[0]).sum()

    leaves = {k: v.clone().requires_grad_(True) for k, v in inputs.items()}
    value = scalar(**leaves)
    analytic = dict(zip(leaves, torch.autograd.grad(value, list(leaves.values()), allow_unused=True)))

    records = []
    with torch.no_grad():
        for name, base in inputs.items():
            grad = analytic[name]
            grad = torch.zeros_like(base) if grad is None else grad
            flat = base.reshape(-1)
            coords = (np.arange(flat.numel()) if flat.numel() <= max_coords
                      else rng.choice(flat.numel(), size=max_coords, replace=False))
            for c in coords:
                orig = flat[c].item()
                h = step * max(1.0, abs(orig))
                flat[c] = orig + h
                up = scalar(**inputs).item()
                flat[c] = orig - h
                down = scalar(**inputs).item()
                flat[c] = orig
                numeric = (up - down) / (2 * h)
                a = grad.reshape(-1)[c].item()
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                records.append((name, tuple(int(i) for i in np.unravel_index(c, tuple(base.shape))),
                                a, numeric, rel))
    records.sort(key=lambda r: r[4], reverse=True)
    worst = records[:n_worst]
    return GradCheckReport(worst[0][4] if worst else 0.0, len(records), tolerance, worst)


def fan_in_uniform(shape: tuple[int, ...], fan_in: int, generator: torch.Generator) -> torch.Tensor:
    bound = math.sqrt(3.0 / fan_in)
    return (torch.rand(shape, generator=generator) * 2.0 - 1.0) * bound
