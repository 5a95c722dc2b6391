"""Command-line driver: ``prepare``, ``train``, ``eval`` and ``report``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import ExperimentConfig, load_config
from .dataio import (
    PreparedData,
    TrialSet,
    assemble,
    make_splits,
    read_cache,
    read_manifest,
    screen_corpus,
    write_cache,
)
from .errors import ArtifactError, ConfigError, DataError, StateError
from .evaluation import (
    ExperimentReport,
    adversary_accuracy,
    classifier_accuracy,
    summarize,
    transfer_accuracy,
)
from .models import VARIANTS
from .plotting import transfer_boxplot
from .training import (
    load_checkpoint,
    save_checkpoint,
    train_classifier,
    train_cnn_baseline,
    train_representation,
)

logger = logging.getLogger("eeg_acvae")

# Keys that legitimately differ between runs being compared.
_RUN_KEYS = {"variant", "train_seed", "init_seed", "output_dir"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _prepare_key(cfg: ExperimentConfig) -> dict:
    return {"corpus": str(Path(cfg.corpus).resolve()), "split_seed": cfg.split_seed,
            "expected_subjects": cfg.expected_subjects, "heldout_count": cfg.heldout_count,
            "normalizer_mode": cfg.normalizer_mode}


def _subject_labels(trials: TrialSet) -> dict[str, list[int]]:
    labels: dict[str, list[int]] = {}
    for sid, y in zip(trials.subject_ids, trials.y):
        labels.setdefault(sid, []).append(int(y))
    return labels


def cmd_prepare(cfg: ExperimentConfig, out=None) -> int:
    """Parse, screen, epoch, split and cache the corpus."""
    out = out or sys.stdout
    key = _prepare_key(cfg)
    try:
        if read_manifest(cfg.cache).get("prepare") == key:
            print(f"cache up to date: {cfg.cache}", file=out)
            return 0
    except DataError:
        pass
    corpus = Path(cfg.corpus)
    if not corpus.is_dir():
        raise DataError(f"corpus directory not found: {corpus}")
    results, records = screen_corpus(corpus, workers=cfg.workers)
    for r in results:
        print(f"{r.subject_id}\t{'kept' if r.keep else 'discarded'}\t{r.reason}", file=out)
    kept = [r for r in results if r.keep]
    print(f"{len(kept)} kept, {len(results) - len(kept)} discarded", file=out)
    trials = TrialSet.from_records(records)
    split = make_splits(_subject_labels(trials), cfg.split_seed, cfg.heldout_count,
                        cfg.expected_subjects)
    data = assemble(trials, split, mode=cfg.normalizer_mode)
    write_cache(trials, split, data.normalizer, cfg.cache, screening=results, extra={"prepare": key})
    print(f"wrote {len(trials)} trials to {cfg.cache} "
          f"(train {len(data.train)}, validation {len(data.validation)}, held-out {len(data.heldout)})",
          file=out)
    return 0


def load_prepared(cfg: ExperimentConfig) -> PreparedData:
    """Cached trials split and centered according to ``cfg``."""
    cache = read_cache(cfg.cache)
    split, normalizer = cache.split, cache.normalizer
    if (split.rng_seed != cfg.split_seed or len(split.heldout_subjects) != cfg.heldout_count
            or normalizer.mode != cfg.normalizer_mode):
        split = make_splits(_subject_labels(cache.trials), cfg.split_seed, cfg.heldout_count,
                            cfg.expected_subjects)
        normalizer = None
    if cfg.pool_limit:
        split = split.restrict_pool(cfg.pool_limit)
        normalizer = None
    data = assemble(cache.trials, split, normalizer, cfg.normalizer_mode)
    return PreparedData(data.train, data.validation, data.heldout, split, data.normalizer,
                        cache.screening)


def _resolve(cfg: ExperimentConfig, data: PreparedData) -> ExperimentConfig:
    return ExperimentConfig.from_flat({**cfg.to_flat(), "n_subjects": data.n_subjects})


def _write_stage(run_dir: Path, name: str, store, history, metrics) -> None:
    save_checkpoint(store, run_dir / name, len(history.iterations), metrics)
    history.write_csv(run_dir / f"history_{name}.csv")
    history.write_epochs_csv(run_dir / f"epochs_{name}.csv")


def cmd_train(cfg: ExperimentConfig, run_dir: str | Path | None = None, out=None) -> Path:
    out = out or sys.stdout
    data = load_prepared(cfg)
    cfg = _resolve(cfg, data)
    m = cfg.model
    run_dir = Path(run_dir or Path(cfg.output_dir) / f"{m.variant}-seed{m.train_seed}")
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(run_dir / "config.json")
    started = time.time()
    stages = {}
    if m.variant == "CNN":
        store, hist = train_cnn_baseline(data.train, m, data.validation)
        _write_stage(run_dir, "stage1", store, hist, hist.epochs[-1] if hist.epochs else {})
        stages["stage1"] = hist.epochs[-1] if hist.epochs else {}
    else:
        store, hist = train_representation(data.train, m, data.validation)
        _write_stage(run_dir, "stage1", store, hist, hist.epochs[-1] if hist.epochs else {})
        stages["stage1"] = hist.epochs[-1] if hist.epochs else {}
        store, hist2 = train_classifier(store, data.train, m, data.validation)
        _write_stage(run_dir, "stage2", store, hist2, hist2.epochs[-1] if hist2.epochs else {})
        stages["stage2"] = hist2.epochs[-1] if hist2.epochs else {}
    manifest = {"variant": m.variant, "stages": stages, "seconds": round(time.time() - started, 1),
                "n_train": len(data.train), "n_validation": len(data.validation),
                "n_heldout": len(data.heldout), "pool_subjects": list(data.split.pool_subjects),
                "heldout_subjects": list(data.split.heldout_subjects)}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"{m.variant} run written to {run_dir}", file=out)
    for name, rec in stages.items():
        print(f"  {name}: " + ", ".join(f"{k}={v:.4g}" for k, v in rec.items() if k != "epoch"), file=out)
    return run_dir


def final_checkpoint(run_dir: Path, variant: str) -> Path:
    path = run_dir / ("stage1" if variant == "CNN" else "stage2")
    if not (path / "manifest.json").exists():
        raise StateError(f"run {run_dir} has no {path.name} checkpoint; train it first")
    return path


def cmd_eval(run_dir: str | Path, overrides: list[str] = (), out=None) -> ExperimentReport:
    out = out or sys.stdout
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise StateError(f"{run_dir} is not a run directory (no config.json)")
    cfg = load_config(cfg_path).override(list(overrides))
    m = cfg.model
    store = load_checkpoint(final_checkpoint(run_dir, m.variant), m)
    data = load_prepared(cfg)
    k = cfg.eval_samples
    adv_train = adv_val = None
    if store.adversary is not None:
        adv_train = adversary_accuracy(store.encoder, store.adversary, data.train, samples=k)
        adv_val = adversary_accuracy(store.encoder, store.adversary, data.validation, samples=k)
    transfer = transfer_accuracy(store.encoder, store.classifier, data.heldout, samples=k)
    report = ExperimentReport(
        variant=m.variant, adversary_train=adv_train, adversary_validation=adv_val,
        transfer=transfer.per_subject, summary=transfer.summary,
        seeds={"split_seed": cfg.split_seed, "init_seed": m.init_seed, "train_seed": m.train_seed},
        classifier_train=classifier_accuracy(store.encoder, store.classifier, data.train, samples=k),
        classifier_validation=classifier_accuracy(store.encoder, store.classifier, data.validation,
                                                  samples=k),
    )
    report.write(run_dir)
    chance = 1.0 / m.n_subjects
    if adv_train is not None:
        print(f"adversary accuracy: train {adv_train:.3f}, validation {adv_val:.3f} "
              f"(chance {chance:.4f})", file=out)
    s = transfer.summary
    print(f"transfer accuracy over {s.n} held-out subjects: mean {s.mean:.3f}, median {s.median:.3f}, "
          f"range [{s.min:.3f}, {s.max:.3f}]", file=out)
    return report


def cmd_report(run_dirs: list[str | Path], out_dir: str | Path, out=None) -> list[str]:
    out = out or sys.stdout
    if not run_dirs:
        raise DataError("report needs at least one run directory")
    reports, configs = [], []
    for rd in map(Path, run_dirs):
        path = rd / "report.json"
        if not path.exists():
            raise StateError(f"{rd} has no report.json; run eval first")
        reports.append(ExperimentReport.from_json(json.loads(path.read_text())))
        configs.append(json.loads((rd / "config.json").read_text()) if (rd / "config.json").exists() else {})
    warnings = []
    keys = sorted({k for c in configs for k in c} - _RUN_KEYS)
    differing = [k for k in keys if len({json.dumps(c.get(k)) for c in configs}) > 1]
    if differing:
        warnings.append("runs were produced with conflicting configs: " + ", ".join(differing))
    comparison = summarize(reports)
    comparison.write(out_dir, warnings)
    transfer_boxplot(comparison.boxes, Path(out_dir) / "figure.svg",
                     banner=warnings[0] if warnings else None)
    for w in warnings:
        print(f"WARNING: {w}", file=out)
    for row in comparison.rows:
        adv = "" if row["adversary_train"] == "" else (
            f" adversary train {row['adversary_train']:.3f} val {row['adversary_validation']:.3f}")
        print(f"{row['variant']:>6} seed {row['seed']}: transfer mean {row['transfer_mean']:.3f}{adv}",
              file=out)
    print(f"wrote comparison.csv, comparison.json, figure.svg to {out_dir}", file=out)
    return warnings


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config).override(args.set or [])
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eeg-acvae", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat JSON config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    sp = sub.add_parser("prepare", help="screen, epoch, split and cache the corpus")
    common(sp)
    sp = sub.add_parser("train", help="train one variant")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS, help="overrides the config's variant")
    sp.add_argument("--smoke", action="store_true", help="reduced subjects/epochs preset")
    sp.add_argument("--run-dir", help="output run directory")
    sp = sub.add_parser("eval", help="evaluate a trained run")
    sp.add_argument("run_dir")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    sp = sub.add_parser("report", help="compare evaluated runs and draw the box plot")
    sp.add_argument("run_dirs", nargs="+")
    sp.add_argument("--out", default="report", help="output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "prepare":
            return cmd_prepare(_base_config(args))
        if args.command == "train":
            cfg = _base_config(args)
            if args.variant:
                cfg = cfg.override([f"variant={args.variant}"])
            if args.smoke:
                cfg = cfg.smoke()
            cmd_train(cfg, args.run_dir)
            return 0
        if args.command == "eval":
            cmd_eval(args.run_dir, args.set or [])
            return 0
        if args.command == "report":
            cmd_report(args.run_dirs, args.out)
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ArtifactError, FloatingPointError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 1


if __name__ == "__main__":
    sys.exit(main())
