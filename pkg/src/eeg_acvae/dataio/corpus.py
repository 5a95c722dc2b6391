"""Screening, epoching, splitting and mean-centering of the imagery corpus."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (
    DataError,
    FitError,
    MissingRunError,
    ShapeError,
    SplitError,
    WindowError,
)
from .edf import Recording, read_edf

logger = logging.getLogger(__name__)

IMAGERY_RUNS = (4, 8, 12)
SAMPLE_RATE = 160
N_CHANNELS = 64
TRIAL_OFFSET = 160  # 1 s after cue onset
TRIAL_LENGTH = 320  # 1 s .. 3 s
TRIALS_PER_SUBJECT = 45
N_KEPT = 103
N_HELDOUT = 13
VALIDATION_PER_SUBJECT = 9

LEFT, RIGHT = 0, 1
CLASS_NAMES = ("left", "right")
_CODE_TO_LABEL = {"T1": LEFT, "T2": RIGHT}


@dataclass(frozen=True)
class TrialRecord:
    X: np.ndarray
    y: int
    subject_id: str
    run_id: int
    trial_index: int
    subject_index: int | None = None  # None marks held-out subjects

    def __post_init__(self):
        self.X.setflags(write=False)


@dataclass(frozen=True)
class TrialSet:
    """Trials stacked into arrays, the form the training loop consumes."""

    X: np.ndarray  # (N, C, T) float32, microvolts
    y: np.ndarray  # (N,) int64
    subject_ids: tuple[str, ...]
    run_ids: np.ndarray
    trial_indices: np.ndarray
    subject_index: np.ndarray  # (N,) int64, -1 for held-out

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_records(cls, trials: Sequence[TrialRecord]) -> "TrialSet":
        if not trials:
            return cls(np.zeros((0, N_CHANNELS, TRIAL_LENGTH), np.float32),
                       np.zeros(0, np.int64), (), np.zeros(0, np.int64),
                       np.zeros(0, np.int64), np.zeros(0, np.int64))
        return cls(
            X=np.stack([t.X for t in trials]).astype(np.float32, copy=False),
            y=np.array([t.y for t in trials], dtype=np.int64),
            subject_ids=tuple(t.subject_id for t in trials),
            run_ids=np.array([t.run_id for t in trials], dtype=np.int64),
            trial_indices=np.array([t.trial_index for t in trials], dtype=np.int64),
            subject_index=np.array([-1 if t.subject_index is None else t.subject_index
                                    for t in trials], dtype=np.int64),
        )

    def subset(self, idx) -> "TrialSet":
        idx = np.asarray(idx, dtype=np.int64)
        return TrialSet(self.X[idx], self.y[idx], tuple(self.subject_ids[i] for i in idx),
                        self.run_ids[idx], self.trial_indices[idx], self.subject_index[idx])

    def with_X(self, X: np.ndarray) -> "TrialSet":
        return TrialSet(X, self.y, self.subject_ids, self.run_ids,
                        self.trial_indices, self.subject_index)

    def with_subject_index(self, mapping: Mapping[str, int]) -> "TrialSet":
        index = np.array([mapping.get(s, -1) for s in self.subject_ids], dtype=np.int64)
        return TrialSet(self.X, self.y, self.subject_ids, self.run_ids, self.trial_indices, index)

    def records(self) -> list[TrialRecord]:
        return [TrialRecord(self.X[i], int(self.y[i]), self.subject_ids[i], int(self.run_ids[i]),
                            int(self.trial_indices[i]),
                            None if self.subject_index[i] < 0 else int(self.subject_index[i]))
                for i in range(len(self))]


@dataclass(frozen=True)
class ScreenResult:
    subject_id: str
    keep: bool
    reason: str = ""
    n_trials: int = 0


def _cue_start(onset: float) -> int:
    return int(round(onset * SAMPLE_RATE)) + TRIAL_OFFSET


def extract_trials(recording: Recording) -> list[TrialRecord]:
    """Cut the 1-3 s post-cue window out of every T1/T2 event."""
    if recording.sample_rate != SAMPLE_RATE:
        raise WindowError(f"{recording.subject_id} run {recording.run_id}: "
                          f"sample rate {recording.sample_rate} Hz, expected {SAMPLE_RATE}")
    trials = []
    for a in recording.annotations:
        if a.code not in _CODE_TO_LABEL:
            continue
        start = _cue_start(a.onset)
        stop = start + TRIAL_LENGTH
        if start < 0 or stop > recording.n_samples:
            raise WindowError(f"{recording.subject_id} run {recording.run_id}: cue at "
                              f"{a.onset}s needs samples [{start}, {stop}) of {recording.n_samples}")
        X = np.ascontiguousarray(recording.signals[:, start:stop], dtype=np.float32)
        trials.append(TrialRecord(X, _CODE_TO_LABEL[a.code], recording.subject_id,
                                  recording.run_id, len(trials)))
    return trials


def screen_subject(recordings: Sequence[Recording]) -> ScreenResult:
    """Keep/discard decision for one subject's three imagery runs."""
    runs = {r.run_id: r for r in recordings}
    missing = [r for r in IMAGERY_RUNS if r not in runs]
    if missing:
        sid = recordings[0].subject_id if recordings else "?"
        raise MissingRunError(f"{sid}: imagery runs {missing} not present")
    sid = runs[IMAGERY_RUNS[0]].subject_id
    for run_id in IMAGERY_RUNS:
        if runs[run_id].sample_rate != SAMPLE_RATE:
            return ScreenResult(sid, False, f"sample_rate: run {run_id} at {runs[run_id].sample_rate:g} Hz")
    total = 0
    for run_id in IMAGERY_RUNS:
        rec = runs[run_id]
        if rec.signals.shape[0] != N_CHANNELS:
            return ScreenResult(sid, False, f"channels: run {run_id} has {rec.signals.shape[0]}")
        for a in rec.annotations:
            if a.code in _CODE_TO_LABEL:
                start = _cue_start(a.onset)
                if start < 0 or start + TRIAL_LENGTH > rec.n_samples:
                    return ScreenResult(sid, False, f"window: run {run_id} cue at {a.onset:g}s "
                                                    "exceeds the recording")
                total += 1
    if total != TRIALS_PER_SUBJECT:
        return ScreenResult(sid, False, f"trial_count: {total} cues, expected {TRIALS_PER_SUBJECT}",
                            total)
    return ScreenResult(sid, True, "", total)


def subject_dirs(root: Path) -> list[str]:
    return sorted(p.name for p in root.iterdir() if p.is_dir() and p.name.startswith("S"))


def load_subject(root: str | Path, subject_id: str) -> list[Recording]:
    """Read the imagery runs of one subject from the PhysioNet directory layout."""
    root = Path(root)
    recordings = []
    for run_id in IMAGERY_RUNS:
        path = root / subject_id / f"{subject_id}R{run_id:02d}.edf"
        if path.exists():
            recordings.append(read_edf(path))
    if len(recordings) < len(IMAGERY_RUNS):
        raise MissingRunError(f"{subject_id}: found {len(recordings)} of "
                              f"{len(IMAGERY_RUNS)} imagery runs under {root / subject_id}")
    return recordings


def _screen_one(root: Path, sid: str):
    try:
        recordings = load_subject(root, sid)
        result = screen_subject(recordings)
    except DataError as exc:
        return ScreenResult(sid, False, f"{type(exc).__name__}: {exc}"), []
    if not result.keep:
        return result, []
    trials = [t for rec in sorted(recordings, key=lambda r: r.run_id) for t in extract_trials(rec)]
    return result, trials


def screen_corpus(root: str | Path, workers: int = 1,
                  subjects: Sequence[str] | None = None) -> tuple[list[ScreenResult], list[TrialRecord]]:
    """Screen every subject under ``root`` and epoch the kept ones.

    Output order is subject/run/trial regardless of ``workers``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus directory {root} does not exist")
    sids = list(subjects) if subjects is not None else subject_dirs(root)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(lambda s: _screen_one(root, s), sids))
    results, trials = [], []
    for result, subject_trials in outcomes:
        results.append(result)
        trials.extend(subject_trials)
        if not result.keep:
            logger.info("discarded %s (%s)", result.subject_id, result.reason)
    return results, trials


@dataclass(frozen=True)
class SplitSpec:
    pool_subjects: tuple[str, ...]
    heldout_subjects: tuple[str, ...]
    train_indices: Mapping[str, tuple[int, ...]]
    validation_indices: Mapping[str, tuple[int, ...]]
    rng_seed: int

    @property
    def subject_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.pool_subjects)}

    def to_json(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "pool_subjects": list(self.pool_subjects),
            "heldout_subjects": list(self.heldout_subjects),
            "train_indices": {s: list(v) for s, v in self.train_indices.items()},
            "validation_indices": {s: list(v) for s, v in self.validation_indices.items()},
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "SplitSpec":
        return cls(
            pool_subjects=tuple(doc["pool_subjects"]),
            heldout_subjects=tuple(doc["heldout_subjects"]),
            train_indices={s: tuple(v) for s, v in doc["train_indices"].items()},
            validation_indices={s: tuple(v) for s, v in doc["validation_indices"].items()},
            rng_seed=int(doc["rng_seed"]),
        )

    def restrict_pool(self, n_subjects: int) -> "SplitSpec":
        """Keep the first ``n_subjects`` pool subjects (used by the smoke preset)."""
        pool = self.pool_subjects[:n_subjects]
        return SplitSpec(pool, self.heldout_subjects,
                         {s: self.train_indices[s] for s in pool},
                         {s: self.validation_indices[s] for s in pool}, self.rng_seed)


def _stratified_validation(labels: np.ndarray, n_val: int, rng: np.random.Generator) -> list[int]:
    classes = np.unique(labels)
    counts = np.array([(labels == c).sum() for c in classes])
    quota = counts * n_val / len(labels)
    alloc = np.floor(quota).astype(int)
    # largest remainder, ties to the lower class label
    for k in np.argsort(-(quota - alloc), kind="stable")[: n_val - alloc.sum()]:
        alloc[k] += 1
    chosen = []
    for c, k in zip(classes, alloc):
        members = np.flatnonzero(labels == c)
        chosen.extend(members[rng.permutation(len(members))[:k]].tolist())
    return sorted(chosen)


def make_splits(subject_labels: Mapping[str, Sequence[int]], seed: int,
                n_heldout: int = N_HELDOUT, expected_subjects: int | None = N_KEPT,
                validation_fraction: float = VALIDATION_PER_SUBJECT / TRIALS_PER_SUBJECT) -> SplitSpec:
    """Hold out ``n_heldout`` subjects and split each pool subject's trials.

    ``subject_labels`` maps kept subject ids (in corpus order) to their
    per-trial class labels; the labels drive the class-stratified
    train/validation split.
    """
    subjects = list(subject_labels)
    if expected_subjects is not None and len(subjects) != expected_subjects:
        raise SplitError(f"expected {expected_subjects} kept subjects, got {len(subjects)}")
    if not 0 < n_heldout < len(subjects):
        raise SplitError(f"cannot hold out {n_heldout} of {len(subjects)} subjects")
    rng = np.random.default_rng(seed)
    held = set(rng.choice(len(subjects), size=n_heldout, replace=False).tolist())
    heldout = tuple(s for i, s in enumerate(subjects) if i in held)
    pool = tuple(s for i, s in enumerate(subjects) if i not in held)
    train, val = {}, {}
    for sid in pool:
        labels = np.asarray(subject_labels[sid])
        n_val = int(round(len(labels) * validation_fraction))
        v = _stratified_validation(labels, n_val, rng)
        val[sid] = tuple(v)
        train[sid] = tuple(i for i in range(len(labels)) if i not in set(v))
    return SplitSpec(pool, heldout, train, val, int(seed))


@dataclass(frozen=True)
class Normalizer:
    channel_means: np.ndarray
    mode: str = "per_channel"

    def __post_init__(self):
        self.channel_means.setflags(write=False)


def _as_array(trials) -> np.ndarray:
    if isinstance(trials, TrialSet):
        return trials.X
    if isinstance(trials, np.ndarray):
        return trials
    return np.stack([t.X for t in trials]) if len(trials) else np.zeros((0, N_CHANNELS, TRIAL_LENGTH))


def fit_normalizer(train_trials, mode: str = "per_channel") -> Normalizer:
    """Mean of the training trials per channel (or one global mean)."""
    X = _as_array(train_trials)
    if X.shape[0] == 0:
        raise FitError("cannot fit a normalizer on zero trials")
    if mode == "per_channel":
        means = X.astype(np.float64).mean(axis=(0, 2))
    elif mode == "global":
        means = np.full(X.shape[1], X.astype(np.float64).mean())
    else:
        raise FitError(f"unknown normalizer mode {mode!r}")
    return Normalizer(means, mode)


def apply_normalizer(normalizer: Normalizer, trials):
    """Subtract the fitted means; returns the same container type it was given."""
    X = _as_array(trials)
    if X.ndim != 3 or X.shape[1] != len(normalizer.channel_means):
        raise ShapeError(f"trials have shape {X.shape}, normalizer expects "
                         f"{len(normalizer.channel_means)} channels")
    centered = (X.astype(np.float64) - normalizer.channel_means[None, :, None]).astype(np.float32)
    if isinstance(trials, TrialSet):
        return trials.with_X(centered)
    if isinstance(trials, np.ndarray):
        return centered
    return [TrialRecord(c, t.y, t.subject_id, t.run_id, t.trial_index, t.subject_index)
            for c, t in zip(centered, trials)]


@dataclass(frozen=True)
class PreparedData:
    """Normalized train/validation/held-out sets ready for training."""

    train: TrialSet
    validation: TrialSet
    heldout: TrialSet
    split: SplitSpec
    normalizer: Normalizer
    screening: tuple[ScreenResult, ...] = field(default_factory=tuple)

    @property
    def n_subjects(self) -> int:
        return len(self.split.pool_subjects)


def assemble(trials: TrialSet, split: SplitSpec, normalizer: Normalizer | None = None,
             mode: str = "per_channel") -> PreparedData:
    """Partition ``trials`` per ``split``; fit the normalizer on train if not given."""
    by_subject: dict[str, list[int]] = {}
    for i, sid in enumerate(trials.subject_ids):
        by_subject.setdefault(sid, []).append(i)
    train_idx, val_idx, held_idx = [], [], []
    for sid in split.pool_subjects:
        rows = by_subject.get(sid)
        if rows is None:
            raise DataError(f"split references subject {sid} absent from the trial set")
        train_idx += [rows[i] for i in split.train_indices[sid]]
        val_idx += [rows[i] for i in split.validation_indices[sid]]
    for sid in split.heldout_subjects:
        held_idx += by_subject.get(sid, [])
    index = split.subject_index
    train = trials.subset(train_idx).with_subject_index(index)
    if normalizer is None:
        normalizer = fit_normalizer(train, mode)
    return PreparedData(
        train=apply_normalizer(normalizer, train),
        validation=apply_normalizer(normalizer, trials.subset(val_idx).with_subject_index(index)),
        heldout=apply_normalizer(normalizer, trials.subset(held_idx).with_subject_index({})),
        split=split,
        normalizer=normalizer,
    )
