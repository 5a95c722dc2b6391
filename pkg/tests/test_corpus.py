import json

import numpy as np
import pytest

from eeg_acvae.dataio import (
    Annotation,
    Recording,
    TrialSet,
    apply_normalizer,
    assemble,
    extract_trials,
    fit_normalizer,
    make_splits,
    read_cache,
    screen_corpus,
    screen_subject,
    write_cache,
)
from eeg_acvae.dataio.cache import read_manifest
from eeg_acvae.errors import (
    CacheVersionError,
    FitError,
    MissingRunError,
    ShapeError,
    SplitError,
    TruncationError,
    WindowError,
)


def recording(events, seconds=20, run_id=4, rate=160, channels=64):
    n = int(seconds * rate)
    signals = np.tile(np.arange(n, dtype=np.float64), (channels, 1))
    return Recording("S001", run_id, signals, float(rate), tuple(f"C{i}" for i in range(channels)),
                     tuple(events))


def labels_for(n_subjects, n_trials=45, seed=0):
    rng = np.random.default_rng(seed)
    return {f"S{i:03d}": rng.integers(0, 2, n_trials).tolist() for i in range(1, n_subjects + 1)}


# ---- epoching


def test_cue_at_ten_seconds_takes_samples_1760_to_2080():
    rec = recording([Annotation(10.0, 4.1, "T1")])
    (trial,) = extract_trials(rec)
    assert trial.X.shape == (64, 320)
    assert trial.X[0, 0] == 1760 and trial.X[0, -1] == 2079
    assert trial.y == 0


def test_rest_only_recording_has_no_trials():
    rec = recording([Annotation(0.0, 4.2, "T0"), Annotation(8.0, 4.2, "T0")])
    assert extract_trials(rec) == []


def test_labels_follow_event_codes():
    rec = recording([Annotation(1.0, 4, "T2"), Annotation(6.0, 4, "T1"), Annotation(11.0, 4, "T0")])
    assert [t.y for t in extract_trials(rec)] == [1, 0]


def test_window_past_end_raises():
    rec = recording([Annotation(18.5, 4.1, "T2")])
    with pytest.raises(WindowError):
        extract_trials(rec)


def test_trials_are_read_only():
    (trial,) = extract_trials(recording([Annotation(2.0, 4, "T1")]))
    with pytest.raises(ValueError):
        trial.X[0, 0] = 1.0


# ---- screening


def test_screen_requires_all_three_runs():
    with pytest.raises(MissingRunError):
        screen_subject([recording([], run_id=4), recording([], run_id=8)])


def test_screen_rejects_other_sample_rates():
    recs = [recording([], run_id=4), recording([], run_id=8, rate=128), recording([], run_id=12)]
    result = screen_subject(recs)
    assert not result.keep and result.reason.startswith("sample_rate")


def test_synthetic_corpus_screening(synthetic_corpus):
    results, trials = screen_corpus(synthetic_corpus)
    reasons = {r.subject_id: r.reason for r in results}
    kept = [r.subject_id for r in results if r.keep]
    assert len(results) == 16 and len(kept) == 12
    assert reasons["S002"].startswith("sample_rate")
    assert reasons["S005"].startswith("trial_count")
    assert reasons["S009"].startswith("window")
    assert reasons["S012"].startswith("MissingRunError")
    ts = TrialSet.from_records(trials)
    for sid in kept:
        assert ts.subject_ids.count(sid) == 45
    assert ts.X.shape[1:] == (64, 320)


def test_screening_order_is_independent_of_workers(synthetic_corpus):
    r1, t1 = screen_corpus(synthetic_corpus, workers=1, subjects=["S001", "S003", "S004"])
    r4, t4 = screen_corpus(synthetic_corpus, workers=4, subjects=["S001", "S003", "S004"])
    assert r1 == r4
    assert all(np.array_equal(a.X, b.X) for a, b in zip(t1, t4))


# ---- splits


def test_split_totals():
    split = make_splits(labels_for(103), seed=3)
    assert len(split.pool_subjects) == 90 and len(split.heldout_subjects) == 13
    assert not set(split.pool_subjects) & set(split.heldout_subjects)
    assert sum(len(v) for v in split.train_indices.values()) == 3240
    assert sum(len(v) for v in split.validation_indices.values()) == 810
    for sid in split.pool_subjects:
        tr, va = set(split.train_indices[sid]), set(split.validation_indices[sid])
        assert len(va) == 9 and not tr & va and tr | va == set(range(45))


def test_split_validation_is_class_stratified():
    labels = {f"S{i:03d}": [0] * 30 + [1] * 15 for i in range(1, 104)}
    split = make_splits(labels, seed=0)
    for sid in split.pool_subjects:
        val_labels = [labels[sid][i] for i in split.validation_indices[sid]]
        assert sorted(val_labels) == [0] * 6 + [1] * 3


def test_split_is_deterministic_in_seed():
    labels = labels_for(103)
    a, b, c = make_splits(labels, 7), make_splits(labels, 7), make_splits(labels, 8)
    assert a == b
    assert a.heldout_subjects != c.heldout_subjects


def test_split_rejects_wrong_subject_count():
    with pytest.raises(SplitError):
        make_splits(labels_for(100), seed=0)
    with pytest.raises(SplitError):
        make_splits(labels_for(5), seed=0, n_heldout=5, expected_subjects=None)


def test_split_json_roundtrip():
    split = make_splits(labels_for(103), seed=1)
    assert type(split).from_json(json.loads(json.dumps(split.to_json()))) == split


# ---- normalization


def test_constant_channels_become_zero():
    X = np.tile(np.arange(1, 5, dtype=np.float32)[None, :, None], (6, 1, 10))
    norm = fit_normalizer(X)
    assert np.array_equal(apply_normalizer(norm, X), np.zeros_like(X))


def test_training_channel_means_vanish():
    X = np.random.default_rng(0).normal(40, 25, (50, 64, 320)).astype(np.float32)
    centered = apply_normalizer(fit_normalizer(X), X)
    assert np.abs(centered.astype(np.float64).mean(axis=(0, 2))).max() <= 1e-4
    # float64 path meets the tighter bound
    assert np.abs((X.astype(np.float64) - X.astype(np.float64).mean(axis=(0, 2))[None, :, None])
                  .mean(axis=(0, 2))).max() <= 1e-6


def test_zero_mean_data_unchanged_and_double_application_shifts():
    X = np.random.default_rng(1).normal(0, 1, (20, 3, 8))
    X -= X.mean(axis=(0, 2))[None, :, None]
    norm = fit_normalizer(X)
    assert np.allclose(apply_normalizer(norm, X), X, atol=1e-6)
    Y = X + 5.0
    n2 = fit_normalizer(Y)
    once = apply_normalizer(n2, Y)
    twice = apply_normalizer(n2, once)
    assert np.allclose(once - twice, 5.0, atol=1e-5)


def test_global_mode_subtracts_one_scalar():
    X = np.random.default_rng(2).normal(3, 1, (10, 4, 6))
    norm = fit_normalizer(X, mode="global")
    assert np.allclose(norm.channel_means, X.mean())


def test_normalizer_errors():
    with pytest.raises(FitError):
        fit_normalizer(np.zeros((0, 4, 6)))
    norm = fit_normalizer(np.ones((2, 4, 6)))
    with pytest.raises(ShapeError):
        apply_normalizer(norm, np.ones((2, 5, 6)))


def test_assemble_fits_on_train_only(synthetic_corpus):
    _, records = screen_corpus(synthetic_corpus, subjects=["S001", "S003", "S004", "S006"])
    trials = TrialSet.from_records(records)
    labels = {}
    for sid, y in zip(trials.subject_ids, trials.y):
        labels.setdefault(sid, []).append(int(y))
    split = make_splits(labels, 0, n_heldout=1, expected_subjects=4)
    data = assemble(trials, split)
    assert (len(data.train), len(data.validation), len(data.heldout)) == (108, 27, 45)
    assert np.abs(data.train.X.astype(np.float64).mean(axis=(0, 2))).max() < 1e-3
    assert set(data.heldout.subject_index) == {-1}
    assert set(data.train.subject_index) == {0, 1, 2}


# ---- cache


@pytest.fixture
def small_cache(tmp_path, synthetic_corpus):
    results, records = screen_corpus(synthetic_corpus, subjects=["S001", "S003", "S004"])
    trials = TrialSet.from_records(records)
    labels = {}
    for sid, y in zip(trials.subject_ids, trials.y):
        labels.setdefault(sid, []).append(int(y))
    split = make_splits(labels, 0, n_heldout=1, expected_subjects=3)
    data = assemble(trials, split)
    path = write_cache(trials, split, data.normalizer, tmp_path / "cache", screening=results)
    return path, trials, split, data.normalizer


def test_cache_roundtrip(small_cache):
    path, trials, split, norm = small_cache
    cache = read_cache(path)
    assert np.array_equal(cache.trials.X, trials.X)
    assert np.array_equal(cache.trials.y, trials.y)
    assert cache.trials.subject_ids == trials.subject_ids
    assert cache.split == split
    assert np.array_equal(cache.normalizer.channel_means, norm.channel_means)
    assert len(cache.screening) == 3


def test_cache_truncation_detected(small_cache):
    path = small_cache[0]
    f = path / "S003.f32"
    f.write_bytes(f.read_bytes()[:-4])
    with pytest.raises(TruncationError):
        read_cache(path)


def test_cache_checksum_detected(small_cache):
    path = small_cache[0]
    f = path / "S001.f32"
    raw = bytearray(f.read_bytes())
    raw[100] ^= 0xFF
    f.write_bytes(bytes(raw))
    with pytest.raises(TruncationError):
        read_cache(path)


def test_cache_version_mismatch(small_cache):
    path = small_cache[0]
    doc = read_manifest(path)
    doc["version"] = 99
    (path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(CacheVersionError):
        read_cache(path)
