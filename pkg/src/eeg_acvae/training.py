"""Two-stage training: adversarial representation learning, then a frozen-encoder classifier.

The CNN baseline skips both and trains encoder + classifier end to end.
"""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataio.corpus import TrialSet
from .diffcore import Adam, one_hot, reparameterize
from .errors import DataError, StateError, VariantError
from .evaluation import adversary_accuracy, classifier_accuracy
from .models import ModelConfig, ParameterStore, Recipe, build_variant
from .objectives import LossBreakdown, loss_acvae, loss_adversary, loss_classifier, loss_cvae

logger = logging.getLogger(__name__)


@dataclass
class TrainHistory:
    iterations: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    seeds: dict[str, int] = field(default_factory=dict)

    def epoch_means(self, key: str = "total") -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for rec in self.iterations:
            by_epoch.setdefault(rec["epoch"], []).append(rec[key])
        return [float(np.mean(v)) for _, v in sorted(by_epoch.items())]

    def write_csv(self, path: str | Path) -> None:
        if not self.iterations:
            Path(path).write_text("iteration,epoch\n")
            return
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.iterations[0]))
            w.writeheader()
            w.writerows(self.iterations)

    def write_epochs_csv(self, path: str | Path) -> None:
        keys = list(dict.fromkeys(k for rec in self.epochs for k in rec)) or ["epoch"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(self.epochs)


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffle split into batches; the last partial batch is kept."""
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def iterations_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def _check_data(train: TrialSet):
    if len(train) == 0:
        raise DataError("training set is empty")


def _grads(loss, params: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    return dict(zip(params, torch.autograd.grad(loss, list(params.values()))))


def _adam(params, cfg: ModelConfig) -> Adam:
    return Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)


def generator_step(store: ParameterStore, opt: Adam, X: torch.Tensor, s: torch.Tensor,
                   cfg: ModelConfig, generator: torch.Generator) -> LossBreakdown:
    """One optimizer step on encoder + decoder; the adversary is only read."""
    recipe: Recipe = store.recipe
    post = store.encoder(X, "train", generator)
    z = reparameterize(post.mu, post.sigma, torch.randn(post.mu.shape, generator=generator))
    X_hat = store.decoder(z, s if recipe.conditioned else None, "train", generator)
    if recipe.adversarial:
        parts = loss_acvae(X, X_hat, post, store.adversary(z), s, cfg.adversarial_weight,
                           cfg.reconstruction)
    else:
        parts = loss_cvae(X, X_hat, post, cfg.reconstruction)
    opt.step(_grads(parts.total, opt.params))
    return parts.detach()


def adversary_step(store: ParameterStore, opt: Adam, X: torch.Tensor, s: torch.Tensor,
                   generator: torch.Generator) -> float:
    """One optimizer step on the adversary against a fresh encoding of ``X``.

    Batch-norm running statistics are left untouched so the generator is
    bit-identical afterwards.
    """
    with torch.no_grad():
        post = store.encoder(X, "train", generator, update_stats=False)
        z = reparameterize(post.mu, post.sigma, torch.randn(post.mu.shape, generator=generator))
    loss = loss_adversary(store.adversary(z), s)
    opt.step(_grads(loss, opt.params))
    return loss.item()


def train_representation(train: TrialSet, cfg: ModelConfig, validation: TrialSet | None = None,
                         store: ParameterStore | None = None) -> tuple[ParameterStore, TrainHistory]:
    """Stage 1: alternate one generator step and one adversary step per batch.

    The generator (encoder + decoder) minimizes the variant objective with
    the adversary frozen; the adversary then minimizes its cross-entropy on
    a fresh encoding of the same batch with the generator frozen. CVAE runs
    the adversary step too, but its loss never reaches the generator.
    """
    if cfg.variant == "CNN":
        raise VariantError("the CNN baseline has no representation stage; use train_cnn_baseline")
    _check_data(train)
    if store is None:
        store, _ = build_variant(cfg)
    opt_gen = _adam(store.group_params("encoder", "decoder"), cfg)
    opt_adv = _adam(store.group_params("adversary"), cfg)
    rng = np.random.default_rng(cfg.train_seed)
    torch_gen = torch.Generator().manual_seed(cfg.train_seed)
    history = TrainHistory(seeds={"init_seed": cfg.init_seed, "train_seed": cfg.train_seed})
    S = cfg.n_subjects

    it = 0
    for epoch in range(1, cfg.stage1_epochs + 1):
        for idx in batches(len(train), cfg.batch_size, rng):
            X = torch.from_numpy(train.X[idx])
            s = one_hot(train.subject_index[idx], S)
            parts = generator_step(store, opt_gen, X, s, cfg, torch_gen)
            adv_loss = adversary_step(store, opt_adv, X, s, torch_gen)
            it += 1
            history.iterations.append({"iteration": it, "epoch": epoch, **parts.as_floats(),
                                       "adversary_loss": adv_loss})
        rec = {"epoch": epoch, "total": history.epoch_means()[-1]}
        if cfg.monitor_every and (epoch % cfg.monitor_every == 0 or epoch == cfg.stage1_epochs):
            rec["adversary_train_acc"] = adversary_accuracy(store.encoder, store.adversary, train)
            if validation is not None and len(validation):
                rec["adversary_val_acc"] = adversary_accuracy(store.encoder, store.adversary, validation)
        history.epochs.append(rec)
        logger.info("stage1 %s epoch %d: %s", cfg.variant, epoch,
                    ", ".join(f"{k}={v:.4g}" for k, v in rec.items() if k != "epoch"))
    return store, history


def train_classifier(store: ParameterStore, train: TrialSet, cfg: ModelConfig,
                     validation: TrialSet | None = None) -> tuple[ParameterStore, TrainHistory]:
    """Stage 2: fit the classifier on z drawn from the frozen, eval-mode encoder."""
    if store is None or store.encoder is None:
        raise StateError("stage 2 needs trained encoder parameters")
    _check_data(train)
    params = store.group_params("classifier")
    opt = _adam(params, cfg)
    rng = np.random.default_rng(cfg.train_seed + 1)
    torch_gen = torch.Generator().manual_seed(cfg.train_seed + 1)
    history = TrainHistory(seeds={"train_seed": cfg.train_seed + 1})
    it = 0
    for epoch in range(1, cfg.stage2_epochs + 1):
        for idx in batches(len(train), cfg.batch_size, rng):
            X = torch.from_numpy(train.X[idx])
            with torch.no_grad():
                post = store.encoder(X, "eval")
                z = post.mu if cfg.stage2_use_mean else reparameterize(
                    post.mu, post.sigma, torch.randn(post.mu.shape, generator=torch_gen))
            y = one_hot(train.y[idx], cfg.n_classes)
            loss = loss_classifier(store.classifier(z), y)
            opt.step(_grads(loss, params))
            it += 1
            history.iterations.append({"iteration": it, "epoch": epoch, "classifier_loss": loss.item()})
        rec = {"epoch": epoch, "classifier_loss": history.epoch_means("classifier_loss")[-1],
               "classifier_train_acc": classifier_accuracy(store.encoder, store.classifier, train)}
        if validation is not None and len(validation):
            rec["classifier_val_acc"] = classifier_accuracy(store.encoder, store.classifier, validation)
        history.epochs.append(rec)
        logger.info("stage2 epoch %d: %s", epoch,
                    ", ".join(f"{k}={v:.4g}" for k, v in rec.items() if k != "epoch"))
    return store, history


def train_cnn_baseline(train: TrialSet, cfg: ModelConfig, validation: TrialSet | None = None,
                       store: ParameterStore | None = None) -> tuple[ParameterStore, TrainHistory]:
    """Encoder mean head + classifier trained jointly on the classification loss."""
    if cfg.variant != "CNN":
        raise VariantError(f"train_cnn_baseline needs variant CNN, got {cfg.variant}")
    _check_data(train)
    if store is None:
        store, _ = build_variant(cfg)
    params = store.group_params("encoder", "classifier")
    opt = _adam(params, cfg)
    rng = np.random.default_rng(cfg.train_seed)
    torch_gen = torch.Generator().manual_seed(cfg.train_seed)
    history = TrainHistory(seeds={"init_seed": cfg.init_seed, "train_seed": cfg.train_seed})
    it = 0
    for epoch in range(1, cfg.stage1_epochs + 1):
        for idx in batches(len(train), cfg.batch_size, rng):
            X = torch.from_numpy(train.X[idx])
            y = one_hot(train.y[idx], cfg.n_classes)
            post = store.encoder(X, "train", torch_gen)
            loss = loss_classifier(store.classifier(post.mu), y)
            opt.step(_grads(loss, params))
            it += 1
            history.iterations.append({"iteration": it, "epoch": epoch, "classifier_loss": loss.item()})
        rec = {"epoch": epoch, "classifier_loss": history.epoch_means("classifier_loss")[-1]}
        if cfg.monitor_every and (epoch % cfg.monitor_every == 0 or epoch == cfg.stage1_epochs):
            rec["classifier_train_acc"] = classifier_accuracy(store.encoder, store.classifier, train)
            if validation is not None and len(validation):
                rec["classifier_val_acc"] = classifier_accuracy(store.encoder, store.classifier, validation)
        history.epochs.append(rec)
        logger.info("cnn epoch %d: %s", epoch,
                    ", ".join(f"{k}={v:.4g}" for k, v in rec.items() if k != "epoch"))
    return store, history


# -- checkpoints ------------------------------------------------------------

_MAGIC = b"ACVP"


def write_array(path: Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    header = _MAGIC + struct.pack("<I", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    path.write_bytes(header + array.tobytes())


def read_array(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise StateError(f"{path} is not a parameter file")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    shape = struct.unpack_from(f"<{ndim}I", raw, 8)
    offset = 8 + 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(raw) != offset + 4 * count:
        raise StateError(f"{path} is truncated")
    return np.frombuffer(raw, dtype="<f4", offset=offset, count=count).reshape(shape).copy()


def save_checkpoint(store: ParameterStore, directory: str | Path, iteration: int = 0,
                    metrics: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for name, tensor in store.named_arrays().items():
        write_array(directory / f"{name}.bin", tensor.detach().numpy())
        names.append(name)
    manifest = {"config": store.cfg.to_dict(), "iteration": iteration,
                "metrics": metrics or {}, "arrays": names}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return directory


def load_checkpoint(directory: str | Path, cfg: ModelConfig | None = None) -> ParameterStore:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise StateError(f"no checkpoint at {directory}")
    manifest = json.loads(manifest_path.read_text())
    cfg = cfg or ModelConfig.from_dict(manifest["config"])
    store, _ = build_variant(cfg)
    state = store.state_dict()
    missing = set(state) - set(manifest["arrays"])
    if missing:
        raise StateError(f"checkpoint {directory} lacks {sorted(missing)[:3]}")
    loaded = {}
    for name in state:
        path = directory / f"{name}.bin"
        if not path.exists():
            raise StateError(f"checkpoint file {path} is missing")
        arr = read_array(path)
        if arr.shape != tuple(state[name].shape):
            raise StateError(f"{name}: checkpoint shape {arr.shape} vs model {tuple(state[name].shape)}")
        loaded[name] = torch.from_numpy(arr)
    store.load_state_dict(loaded)
    return store
