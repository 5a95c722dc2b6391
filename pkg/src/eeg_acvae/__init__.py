"""Adversarially censored conditional VAEs for subject-invariant EEG features."""

__version__ = "0.1.0"
