"""EDF ingestion, subject screening, epoching, splits and the epoch cache."""

from .cache import CacheContents, read_cache, read_manifest, write_cache
from .corpus import (
    IMAGERY_RUNS,
    LEFT,
    RIGHT,
    Normalizer,
    PreparedData,
    ScreenResult,
    SplitSpec,
    TrialRecord,
    TrialSet,
    apply_normalizer,
    assemble,
    extract_trials,
    fit_normalizer,
    load_subject,
    make_splits,
    screen_corpus,
    screen_subject,
)
from .edf import Annotation, Recording, parse_edf, read_edf, write_edf

__all__ = [
    "Annotation", "CacheContents", "IMAGERY_RUNS", "LEFT", "Normalizer", "PreparedData",
    "RIGHT", "Recording", "ScreenResult", "SplitSpec", "TrialRecord", "TrialSet",
    "apply_normalizer", "assemble", "extract_trials", "fit_normalizer", "load_subject",
    "make_splits", "parse_edf", "read_cache", "read_edf", "read_manifest", "screen_corpus",
    "screen_subject", "write_cache", "write_edf",
]
