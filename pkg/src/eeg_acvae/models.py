"""Encoder, decoder, adversary and classifier networks and the four variants."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import torch
from torch import nn

from . import diffcore as dc
from .errors import ConfigError, ShapeError, VariantError

VARIANTS = ("ACVAE", "CVAE", "AVAE", "CNN")


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int = 64
    n_samples: int = 320
    kernel_length: int = 100
    latent_dim: int = 100
    n_subjects: int = 90
    n_classes: int = 2
    adversarial_weight: float = 1.0
    filters: int = 40
    dropout: float = 0.25
    hidden: int = 100
    variant: str = "ACVAE"
    faithful_final_layer: bool = False
    spatial_conv_mode: str = "full"
    reconstruction: str = "sum"
    logvar_clamp: float = 10.0
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 100
    stage1_epochs: int = 750
    stage2_epochs: int = 50
    stage2_use_mean: bool = False
    monitor_every: int = 1
    init_seed: int = 0
    train_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.adversarial_weight < 0:
            raise ConfigError("adversarial_weight must be nonnegative")
        if self.spatial_conv_mode not in ("full", "depthwise"):
            raise ConfigError(f"spatial_conv_mode must be 'full' or 'depthwise', got {self.spatial_conv_mode!r}")
        if self.reconstruction not in ("sum", "mean"):
            raise ConfigError(f"reconstruction must be 'sum' or 'mean', got {self.reconstruction!r}")
        dims = ("n_channels", "n_samples", "kernel_length", "latent_dim", "n_subjects",
                "n_classes", "filters", "hidden", "batch_size")
        for name in dims:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**doc)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class Recipe:
    """What a variant trains and how."""

    variant: str
    conditioned: bool  # decoder receives the subject one-hot
    adversarial: bool  # adversary term enters the generator objective
    has_decoder: bool
    has_adversary: bool


@dataclass
class GaussianPosterior:
    mu: torch.Tensor
    sigma: torch.Tensor
    logvar: torch.Tensor | None = None


def _param(t: torch.Tensor) -> nn.Parameter:
    return nn.Parameter(t.to(torch.float32))


class BatchNorm(nn.Module):
    def __init__(self, n: int, momentum: float, eps: float):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(n))
        self.beta = nn.Parameter(torch.zeros(n))
        self.register_buffer("running_mean", torch.zeros(n))
        self.register_buffer("running_var", torch.ones(n))
        self.momentum, self.eps = momentum, eps

    def forward(self, x, mode="train", update_stats=True):
        return dc.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            mode, self.momentum, self.eps, update_stats)


class Encoder(nn.Module):
    """Temporal conv -> spatial conv -> flatten -> (mu, logvar) heads."""

    def __init__(self, cfg: ModelConfig, generator: torch.Generator, with_logvar: bool = True):
        super().__init__()
        self.cfg = cfg
        F_, C, W = cfg.filters, cfg.n_channels, cfg.kernel_length
        self.groups = F_ if cfg.spatial_conv_mode == "depthwise" else 1
        self.temporal = _param(dc.fan_in_uniform((F_, 1, 1, W), W, generator))
        self.bn1 = BatchNorm(F_, cfg.bn_momentum, cfg.bn_eps)
        spatial_in = F_ // self.groups
        self.spatial = _param(dc.fan_in_uniform((F_, spatial_in, C, 1), spatial_in * C, generator))
        self.bn2 = BatchNorm(F_, cfg.bn_momentum, cfg.bn_eps)
        flat = F_ * cfg.n_samples
        self.mu_weight = _param(dc.fan_in_uniform((cfg.latent_dim, flat), flat, generator))
        self.mu_bias = _param(torch.zeros(cfg.latent_dim))
        self.with_logvar = with_logvar
        if with_logvar:
            self.logvar_weight = _param(dc.fan_in_uniform((cfg.latent_dim, flat), flat, generator))
            self.logvar_bias = _param(torch.zeros(cfg.latent_dim))

    def layer_outputs(self, X, mode="train", generator=None, update_stats=True) -> dict:
        """Every stage's output, keyed by stage name, ending with the posterior."""
        cfg = self.cfg
        if X.dim() != 3 or X.shape[1:] != (cfg.n_channels, cfg.n_samples):
            raise ShapeError(f"encoder expects (B, {cfg.n_channels}, {cfg.n_samples}), got {tuple(X.shape)}")
        out = {}
        h = dc.conv2d(X.unsqueeze(1), self.temporal, dc.same_padding(cfg.kernel_length))
        h = out["temporal"] = dc.dropout(dc.relu(self.bn1(h, mode, update_stats)), cfg.dropout, mode, generator)
        h = dc.conv2d(h, self.spatial, groups=self.groups)
        h = out["spatial"] = dc.dropout(dc.relu(self.bn2(h, mode, update_stats)), cfg.dropout, mode, generator)
        h = out["flatten"] = h.flatten(1)
        mu = dc.dense(h, self.mu_weight, self.mu_bias)
        if not self.with_logvar:
            out["posterior"] = GaussianPosterior(mu, torch.ones_like(mu), torch.zeros_like(mu))
            return out
        c = self.cfg.logvar_clamp
        logvar = torch.clamp(dc.dense(h, self.logvar_weight, self.logvar_bias), -c, c)
        out["posterior"] = GaussianPosterior(mu, torch.exp(0.5 * logvar), logvar)
        return out

    def forward(self, X, mode="train", generator=None, update_stats=True) -> GaussianPosterior:
        return self.layer_outputs(X, mode, generator, update_stats)["posterior"]


class Decoder(nn.Module):
    """Dense -> reshape -> spatial deconv -> temporal deconv back to C x T."""

    def __init__(self, cfg: ModelConfig, conditioned: bool, generator: torch.Generator):
        super().__init__()
        self.cfg, self.conditioned = cfg, conditioned
        F_, C, W, T = cfg.filters, cfg.n_channels, cfg.kernel_length, cfg.n_samples
        self.input_dim = cfg.latent_dim + (cfg.n_subjects if conditioned else 0)
        self.groups = F_ if cfg.spatial_conv_mode == "depthwise" else 1
        self.fc_weight = _param(dc.fan_in_uniform((F_ * T, self.input_dim), self.input_dim, generator))
        self.fc_bias = _param(torch.zeros(F_ * T))
        self.spatial = _param(dc.fan_in_uniform((F_, F_ // self.groups, C, 1), F_ // self.groups, generator))
        self.bn1 = BatchNorm(F_, cfg.bn_momentum, cfg.bn_eps)
        self.temporal = _param(dc.fan_in_uniform((F_, 1, 1, W), F_ * W, generator))
        if cfg.faithful_final_layer:
            self.bn2 = BatchNorm(1, cfg.bn_momentum, cfg.bn_eps)
        else:
            self.out_bias = _param(torch.zeros(1))

    def layer_outputs(self, z, s=None, mode="train", generator=None, update_stats=True) -> dict:
        cfg = self.cfg
        if self.conditioned != (s is not None):
            raise VariantError("decoder conditioning does not match the variant: "
                               f"conditioned={self.conditioned}, subject vector {'given' if s is not None else 'absent'}")
        out = {}
        inp = out["input"] = torch.cat([z, s.to(z.dtype)], dim=1) if s is not None else z
        if inp.shape[1] != self.input_dim:
            raise ShapeError(f"decoder expects {self.input_dim} inputs, got {inp.shape[1]}")
        h = dc.relu(dc.dense(inp, self.fc_weight, self.fc_bias))
        h = out["reshape"] = h.reshape(-1, cfg.filters, 1, cfg.n_samples)
        h = dc.conv2d_transpose(h, self.spatial, groups=self.groups)
        h = out["spatial"] = dc.dropout(dc.relu(self.bn1(h, mode, update_stats)), cfg.dropout, mode, generator)
        h = dc.conv2d_transpose(h, self.temporal, dc.same_padding(cfg.kernel_length))
        if cfg.faithful_final_layer:
            h = dc.dropout(dc.relu(self.bn2(h, mode, update_stats)), cfg.dropout, mode, generator)
        else:
            h = h + self.out_bias
        out["output"] = h.squeeze(1)
        return out

    def forward(self, z, s=None, mode="train", generator=None, update_stats=True):
        return self.layer_outputs(z, s, mode, generator, update_stats)["output"]


class MLP(nn.Module):
    """One hidden ReLU layer; used for both the adversary and the classifier."""

    def __init__(self, n_in: int, hidden: int, n_out: int, generator: torch.Generator):
        super().__init__()
        self.w1 = _param(dc.fan_in_uniform((hidden, n_in), n_in, generator))
        self.b1 = _param(torch.zeros(hidden))
        self.w2 = _param(dc.fan_in_uniform((n_out, hidden), hidden, generator))
        self.b2 = _param(torch.zeros(n_out))

    def forward(self, z):
        return dc.dense(dc.relu(dc.dense(z, self.w1, self.b1)), self.w2, self.b2)


GROUPS = ("encoder", "decoder", "adversary", "classifier")


class ParameterStore(nn.Module):
    """All networks of one run: encoder (phi), decoder (theta), adversary (Psi), classifier (Omega)."""

    def __init__(self, cfg: ModelConfig, recipe: Recipe):
        super().__init__()
        self.cfg, self.recipe = cfg, recipe
        g = torch.Generator().manual_seed(cfg.init_seed)
        self.encoder = Encoder(cfg, g, with_logvar=recipe.variant != "CNN")
        self.decoder = Decoder(cfg, recipe.conditioned, g) if recipe.has_decoder else None
        self.adversary = MLP(cfg.latent_dim, cfg.hidden, cfg.n_subjects, g) if recipe.has_adversary else None
        self.classifier = MLP(cfg.latent_dim, cfg.hidden, cfg.n_classes, g)

    def group_params(self, *names: str) -> dict[str, torch.Tensor]:
        out = {}
        for name in names:
            module = getattr(self, name)
            if module is not None:
                out.update({f"{name}.{k}": p for k, p in module.named_parameters()})
        return out

    def named_arrays(self) -> dict[str, torch.Tensor]:
        """Every parameter and batch-norm buffer, keyed ``group.name``."""
        return dict(self.state_dict())

    def parameter_count(self) -> dict[str, int]:
        return {name: sum(p.numel() for p in self.group_params(name).values()) for name in GROUPS}


def build_variant(cfg: ModelConfig) -> tuple[ParameterStore, Recipe]:
    """Allocate the networks a variant needs and describe its training recipe."""
    v = cfg.variant
    if v == "ACVAE":
        recipe = Recipe(v, conditioned=True, adversarial=True, has_decoder=True, has_adversary=True)
    elif v == "CVAE":
        recipe = Recipe(v, conditioned=True, adversarial=False, has_decoder=True, has_adversary=True)
    elif v == "AVAE":
        recipe = Recipe(v, conditioned=False, adversarial=True, has_decoder=True, has_adversary=True)
    elif v == "CNN":
        recipe = Recipe(v, conditioned=False, adversarial=False, has_decoder=False, has_adversary=False)
    else:
        raise ConfigError(f"unknown variant {v!r}")
    return ParameterStore(cfg, recipe), recipe


def encode(X, phi: Encoder, mode="eval", generator=None) -> GaussianPosterior:
    return phi(X, mode, generator)


def decode(z, s, theta: Decoder, mode="eval", generator=None):
    return theta(z, s, mode, generator)


def adversary_logits(z, psi: MLP):
    return psi(z)


def classifier_logits(z, omega: MLP):
    return omega(z)
