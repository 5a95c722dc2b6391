"""Adversary leakage, held-out transfer accuracy and cross-run summaries."""

from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataio.corpus import TRIALS_PER_SUBJECT, TrialSet
from .errors import DataError, SubjectIndexError
from .models import MLP, Encoder


@torch.no_grad()
def predict(encoder: Encoder, head: MLP, X: np.ndarray, batch_size: int = 100,
            samples: int = 0, seed: int = 0) -> np.ndarray:
    """Argmax predictions of ``head`` on encoder features, eval mode throughout.

    With ``samples == 0`` the head sees the posterior mean; otherwise softmax
    outputs are averaged over ``samples`` posterior draws. Ties go to the
    lowest class index.
    """
    gen = torch.Generator().manual_seed(seed)
    out = []
    for start in range(0, len(X), batch_size):
        xb = torch.from_numpy(np.ascontiguousarray(X[start:start + batch_size]))
        post = encoder(xb, mode="eval")
        if samples <= 0:
            scores = head(post.mu)
        else:
            scores = sum(torch.softmax(head(post.mu + post.sigma * torch.randn(
                post.mu.shape, generator=gen)), dim=1) for _ in range(samples)) / samples
        out.append(scores.numpy())
    if not out:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(np.concatenate(out), axis=1)


def adversary_accuracy(encoder: Encoder, adversary: MLP, trials: TrialSet, batch_size: int = 100,
                       samples: int = 0) -> float:
    """Fraction of trials whose subject the adversary recovers from z."""
    n_subjects = adversary.w2.shape[0]
    idx = trials.subject_index
    if len(idx) and (idx.min() < 0 or idx.max() >= n_subjects):
        raise SubjectIndexError("adversary accuracy needs training-pool subjects only "
                                f"(indices in [0, {n_subjects}))")
    if len(trials) == 0:
        raise DataError("no trials to evaluate")
    pred = predict(encoder, adversary, trials.X, batch_size, samples)
    return float(np.mean(pred == idx))


def classifier_accuracy(encoder: Encoder, classifier: MLP, trials: TrialSet,
                        batch_size: int = 100, samples: int = 0) -> float:
    if len(trials) == 0:
        raise DataError("no trials to evaluate")
    return float(np.mean(predict(encoder, classifier, trials.X, batch_size, samples) == trials.y))


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float


def summary_stats(values: Sequence[float]) -> Summary:
    """Box-plot statistics; quartiles interpolate linearly between order statistics."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DataError("cannot summarize an empty set of accuracies")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return Summary(int(v.size), float(v.mean()), float(med), float(q1), float(q3),
                   float(v.min()), float(v.max()))


@dataclass(frozen=True)
class TransferResult:
    per_subject: dict[str, float]
    summary: Summary


def transfer_accuracy(encoder: Encoder, classifier: MLP, heldout: TrialSet, batch_size: int = 100,
                      samples: int = 0, trials_per_subject: int | None = TRIALS_PER_SUBJECT) -> TransferResult:
    """Per held-out subject classification accuracy with the frozen encoder."""
    if len(heldout) == 0:
        raise DataError("no held-out trials")
    pred = predict(encoder, classifier, heldout.X, batch_size, samples)
    sids = np.array(heldout.subject_ids)
    per_subject = {}
    for sid in dict.fromkeys(heldout.subject_ids):
        mask = sids == sid
        if trials_per_subject is not None and mask.sum() != trials_per_subject:
            raise DataError(f"held-out subject {sid} has {mask.sum()} trials, expected {trials_per_subject}")
        per_subject[sid] = float(np.mean(pred[mask] == heldout.y[mask]))
    return TransferResult(per_subject, summary_stats(list(per_subject.values())))


@dataclass
class ExperimentReport:
    variant: str
    adversary_train: float | None
    adversary_validation: float | None
    transfer: dict[str, float]
    summary: Summary
    seeds: dict[str, int] = field(default_factory=dict)
    classifier_train: float | None = None
    classifier_validation: float | None = None

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["summary"] = asdict(self.summary)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentReport":
        doc = dict(doc)
        doc["summary"] = Summary(**doc["summary"])
        return cls(**doc)

    def write(self, run_dir: str | Path) -> None:
        run_dir = Path(run_dir)
        (run_dir / "report.json").write_text(json.dumps(self.to_json(), indent=2))
        with open(run_dir / "report.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "metric", "subject", "value"])
            for metric in ("adversary_train", "adversary_validation", "classifier_train",
                           "classifier_validation"):
                value = getattr(self, metric)
                if value is not None:
                    w.writerow([self.variant, metric, "", f"{value:.6f}"])
            for sid, acc in self.transfer.items():
                w.writerow([self.variant, "transfer", sid, f"{acc:.6f}"])
            for k, v in asdict(self.summary).items():
                w.writerow([self.variant, f"transfer_{k}", "", v if k == "n" else f"{v:.6f}"])


@dataclass
class BoxGeometry:
    label: str
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    mean: float
    values: list[float]


@dataclass
class Comparison:
    rows: list[dict]
    boxes: list[BoxGeometry]

    def write(self, out_dir: str | Path, warnings: Sequence[str] = ()) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        doc = {"warnings": list(warnings), "rows": self.rows, "boxes": [asdict(b) for b in self.boxes]}
        (out_dir / "comparison.json").write_text(json.dumps(doc, indent=2))
        with open(out_dir / "comparison.csv", "w", newline="") as fh:
            for warning in warnings:
                fh.write(f"# WARNING: {warning}\n")
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            w.writeheader()
            w.writerows(self.rows)


def summarize(reports: Sequence[ExperimentReport]) -> Comparison:
    """One table row per report plus pooled box geometry per variant.

    Reports sharing a variant (different seeds) are pooled into one box and
    their transfer means averaged.
    """
    if not reports:
        raise DataError("no reports to summarize")
    rows = []
    for r in reports:
        s = r.summary
        rows.append({
            "variant": r.variant,
            "seed": r.seeds.get("train_seed", ""),
            "adversary_train": "" if r.adversary_train is None else round(r.adversary_train, 6),
            "adversary_validation": "" if r.adversary_validation is None else round(r.adversary_validation, 6),
            "transfer_mean": round(s.mean, 6), "transfer_median": round(s.median, 6),
            "transfer_q1": round(s.q1, 6), "transfer_q3": round(s.q3, 6),
            "transfer_min": round(s.min, 6), "transfer_max": round(s.max, 6), "n_subjects": s.n,
        })
    boxes = []
    for variant in dict.fromkeys(r.variant for r in reports):
        group = [r for r in reports if r.variant == variant]
        values = [v for r in group for v in r.transfer.values()]
        st = summary_stats(values)
        boxes.append(BoxGeometry(variant, st.median, st.q1, st.q3, st.min, st.max,
                                 float(np.mean([r.summary.mean for r in group])), values))
    return Comparison(rows, boxes)
