"""On-disk epoch cache: ``manifest.json`` plus one float32 file per subject.

Trials are stored un-normalized (microvolts) so one cache serves every
split seed; the split and normalizer recorded in the manifest are those of
the seed used at prepare time.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CacheVersionError, TruncationError
from .corpus import N_CHANNELS, TRIAL_LENGTH, Normalizer, ScreenResult, SplitSpec, TrialSet

CACHE_VERSION = 1
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class CacheContents:
    trials: TrialSet
    split: SplitSpec
    normalizer: Normalizer
    screening: tuple[ScreenResult, ...]
    manifest: dict


def write_cache(trials: TrialSet, split: SplitSpec, normalizer: Normalizer, path: str | Path,
                screening=(), extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    subjects = []
    order = list(dict.fromkeys(trials.subject_ids))
    for sid in order:
        rows = np.array([i for i, s in enumerate(trials.subject_ids) if s == sid])
        payload = np.ascontiguousarray(trials.X[rows], dtype="<f4").tobytes()
        fname = f"{sid}.f32"
        (path / fname).write_bytes(payload)
        subjects.append({
            "subject_id": sid,
            "file": fname,
            "n_trials": len(rows),
            "sha256": hashlib.sha256(payload).hexdigest(),
            "labels": trials.y[rows].tolist(),
            "run_ids": trials.run_ids[rows].tolist(),
            "trial_indices": trials.trial_indices[rows].tolist(),
        })
    manifest = {
        "version": CACHE_VERSION,
        "C": int(trials.X.shape[1]) if len(trials) else N_CHANNELS,
        "T": int(trials.X.shape[2]) if len(trials) else TRIAL_LENGTH,
        "dtype": "float32-le",
        "layout": "trial-major, channel-major, time-minor",
        "subjects": subjects,
        "split_seed": split.rng_seed,
        "split": split.to_json(),
        "normalizer": {"mode": normalizer.mode, "means": normalizer.channel_means.tolist()},
        "screening": [{"subject_id": r.subject_id, "keep": r.keep, "reason": r.reason,
                       "n_trials": r.n_trials} for r in screening],
    }
    if extra:
        manifest.update(extra)
    (path / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def read_manifest(path: str | Path) -> dict:
    path = Path(path) / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise CacheVersionError(f"no cache manifest at {path}") from None
    except json.JSONDecodeError as exc:
        raise TruncationError(f"cache manifest {path} is not valid JSON: {exc}") from None
    if manifest.get("version") != CACHE_VERSION:
        raise CacheVersionError(f"cache version {manifest.get('version')!r}, "
                                f"this build reads version {CACHE_VERSION}")
    return manifest


def read_cache(path: str | Path) -> CacheContents:
    path = Path(path)
    manifest = read_manifest(path)
    C, T = manifest["C"], manifest["T"]
    X, y, sids, runs, tidx = [], [], [], [], []
    for entry in manifest["subjects"]:
        raw = (path / entry["file"]).read_bytes()
        expected = entry["n_trials"] * C * T * 4
        if len(raw) != expected:
            raise TruncationError(f"{entry['file']}: {len(raw)} bytes, manifest implies {expected}")
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise TruncationError(f"{entry['file']}: checksum mismatch")
        X.append(np.frombuffer(raw, dtype="<f4").reshape(entry["n_trials"], C, T))
        y += entry["labels"]
        sids += [entry["subject_id"]] * entry["n_trials"]
        runs += entry["run_ids"]
        tidx += entry["trial_indices"]
    n = len(y)
    trials = TrialSet(
        X=np.concatenate(X).astype(np.float32) if X else np.zeros((0, C, T), np.float32),
        y=np.array(y, dtype=np.int64),
        subject_ids=tuple(sids),
        run_ids=np.array(runs, dtype=np.int64),
        trial_indices=np.array(tidx, dtype=np.int64),
        subject_index=np.full(n, -1, dtype=np.int64),
    )
    norm = manifest["normalizer"]
    screening = tuple(ScreenResult(r["subject_id"], r["keep"], r["reason"], r["n_trials"])
                      for r in manifest.get("screening", []))
    return CacheContents(trials, SplitSpec.from_json(manifest["split"]),
                         Normalizer(np.array(norm["means"], dtype=np.float64), norm["mode"]),
                         screening, manifest)
