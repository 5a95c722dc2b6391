"""Seed-averaged checks of full-length runs against the published reference numbers."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .evaluation import ExperimentReport

# Published single-run values.
ADVERSARY_TRAIN = {"ACVAE": 0.48, "CVAE": 0.56, "AVAE": 0.68}
ADVERSARY_VALIDATION = {"ACVAE": 0.13, "CVAE": 0.15, "AVAE": 0.21}
TRANSFER_MEAN = {"ACVAE": 0.638, "CVAE": 0.612, "AVAE": 0.569, "CNN": 0.598}

TRAIN_TOLERANCE = 0.15
VALIDATION_TOLERANCE = 0.10
LEAKAGE_FLOOR = 5.0 / 90
TRANSFER_RANGE = (0.58, 0.70)
NOT_WORSE_MARGIN = -0.01
UNCONDITIONED_GAP = 0.03
CHANCE = 0.5
ADVERSARIAL = ("ACVAE", "CVAE", "AVAE")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def load_runs(root: str | Path) -> dict[str, list[ExperimentReport]]:
    """Every ``report.json`` under ``root``, grouped by variant."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"run directory {root} does not exist")
    grouped: dict[str, list[ExperimentReport]] = {}
    for path in sorted(root.rglob("report.json")):
        report = ExperimentReport.from_json(json.loads(path.read_text()))
        grouped.setdefault(report.variant, []).append(report)
    return grouped


def _mean(reports: Sequence[ExperimentReport], attr: str) -> float:
    return float(np.mean([getattr(r, attr) for r in reports]))


def _transfer(reports: Sequence[ExperimentReport]) -> float:
    return float(np.mean([r.summary.mean for r in reports]))


def check_full_reproduction(runs: Mapping[str, Sequence[ExperimentReport]], min_seeds: int = 3) -> list[Check]:
    """Ordering, range and chance checks on seed-averaged reports."""
    missing = [v for v in (*ADVERSARIAL, "CNN") if len(runs.get(v, ())) < min_seeds]
    if missing:
        return [Check("runs present", False,
                      f"need {min_seeds} seeds per variant; short: "
                      + ", ".join(f"{v} ({len(runs.get(v, ()))})" for v in missing))]
    checks = []
    for split, ref, tol in (("train", ADVERSARY_TRAIN, TRAIN_TOLERANCE),
                            ("validation", ADVERSARY_VALIDATION, VALIDATION_TOLERANCE)):
        acc = {v: _mean(runs[v], f"adversary_{split}") for v in ADVERSARIAL}
        shown = ", ".join(f"{v} {acc[v]:.3f}" for v in ADVERSARIAL)
        checks.append(Check(f"adversary {split} ordering ACVAE < CVAE < AVAE",
                            acc["ACVAE"] < acc["CVAE"] < acc["AVAE"], shown))
        off = {v: acc[v] - ref[v] for v in ADVERSARIAL}
        checks.append(Check(f"adversary {split} within {tol:.2f} of reference",
                            all(abs(d) <= tol for d in off.values()),
                            ", ".join(f"{v} {d:+.3f}" for v, d in off.items())))
        checks.append(Check(f"adversary {split} at least 5x chance",
                            all(a >= LEAKAGE_FLOOR for a in acc.values()), shown))
    means = {v: _transfer(runs[v]) for v in (*ADVERSARIAL, "CNN")}
    shown = ", ".join(f"{v} {m:.3f}" for v, m in means.items())
    lo, hi = TRANSFER_RANGE
    checks.append(Check(f"ACVAE transfer mean in [{lo:.2f}, {hi:.2f}]", lo <= means["ACVAE"] <= hi,
                        f"ACVAE {means['ACVAE']:.3f}"))
    checks.append(Check("ACVAE transfer not materially worse than any variant",
                        all(means["ACVAE"] - means[v] >= NOT_WORSE_MARGIN for v in ("CVAE", "AVAE", "CNN")),
                        shown))
    checks.append(Check("ACVAE transfer exceeds AVAE by 3 points",
                        means["ACVAE"] - means["AVAE"] >= UNCONDITIONED_GAP,
                        f"gap {100 * (means['ACVAE'] - means['AVAE']):.1f} points"))
    checks.append(Check("every variant above chance", all(m > CHANCE for m in means.values()), shown))
    return checks
