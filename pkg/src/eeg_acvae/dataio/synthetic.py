"""Synthetic stand-in for the PhysioNet imagery corpus.

Writes ``SxxxRyy.edf`` files with the same layout, channel set and event
coding as the real recordings so the full prepare/train/eval pipeline can be
exercised without the download. Each subject gets its own channel offsets,
gains and alpha frequency (identity the adversary can pick up); imagery
trials carry a lateralized slow shift plus an ipsilateral 11 Hz burst (the
class signal).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .edf import Annotation, write_edf

CHANNELS = (
    "Fc5.", "Fc3.", "Fc1.", "Fcz.", "Fc2.", "Fc4.", "Fc6.", "C5..", "C3..", "C1..", "Cz..",
    "C2..", "C4..", "C6..", "Cp5.", "Cp3.", "Cp1.", "Cpz.", "Cp2.", "Cp4.", "Cp6.", "Fp1.",
    "Fpz.", "Fp2.", "Af7.", "Af3.", "Afz.", "Af4.", "Af8.", "F7..", "F5..", "F3..", "F1..",
    "Fz..", "F2..", "F4..", "F6..", "F8..", "Ft7.", "Ft8.", "T7..", "T8..", "T9..", "T10.",
    "Tp7.", "Tp8.", "P7..", "P5..", "P3..", "P1..", "Pz..", "P2..", "P4..", "P6..", "P8..",
    "Po7.", "Po3.", "Poz.", "Po4.", "Po8.", "O1..", "Oz..", "O2..", "Iz..",
)
LEFT_MOTOR = [CHANNELS.index(c) for c in ("Fc3.", "C5..", "C3..", "C1..", "Cp3.")]
RIGHT_MOTOR = [CHANNELS.index(c) for c in ("Fc4.", "C2..", "C4..", "C6..", "Cp4.")]

DEFECTS = ("rate128", "short", "window", "missing_run")


def _run(rng, subject, rate, n_cues, trial_s, rest_s, class_gain, truncate_last):
    n = int(round((n_cues * (trial_s + rest_s) + rest_s) * rate))
    t = np.arange(n) / rate
    # AR(1) smoothing gives a 1/f-like background.
    noise = lfilter([1.0], [1.0, -0.9], rng.standard_normal((len(CHANNELS), n)), axis=1)
    sig = 4.0 * noise * subject["gain"][:, None] + subject["offset"][:, None]
    sig += subject["alpha_amp"][:, None] * np.sin(2 * np.pi * subject["alpha_hz"] * t
                                                  + subject["alpha_phase"][:, None])

    labels = rng.permutation([1] * ((n_cues + 1) // 2) + [2] * (n_cues // 2))
    events, onset = [Annotation(0.0, rest_s, "T0")], rest_s
    for code in labels:
        events.append(Annotation(round(onset, 4), trial_s, f"T{code}"))
        a, b = int(onset * rate), int((onset + trial_s) * rate)
        ramp = np.sin(np.linspace(0, np.pi, b - a))
        contra, ipsi = (RIGHT_MOTOR, LEFT_MOTOR) if code == 1 else (LEFT_MOTOR, RIGHT_MOTOR)
        sig[contra, a:b] -= class_gain * ramp
        sig[ipsi, a:b] += class_gain * ramp
        mu = np.sin(2 * np.pi * 11.0 * t[a:b])
        sig[ipsi, a:b] += 0.5 * class_gain * mu
        onset += trial_s
        events.append(Annotation(round(onset, 4), rest_s, "T0"))
        onset += rest_s
    if truncate_last:
        last = [e for e in events if e.code != "T0"][-1]
        n = int((last.onset + 2.0) * rate)
        sig = sig[:, :n]
        events = [e for e in events if e.onset <= n / rate]
    return sig, events


def write_synthetic_corpus(root: str | Path, n_subjects: int = 23, seed: int = 0,
                           defects: dict[int, str] | None = None, n_cues: int = 15,
                           trial_s: float = 4.0, rest_s: float = 2.0,
                           class_gain: float = 12.0) -> list[str]:
    """Write a PhysioNet-layout corpus of ``n_subjects`` subjects under ``root``.

    ``defects`` maps 1-based subject numbers to one of :data:`DEFECTS`,
    producing the recordings the screen is expected to reject.
    """
    root = Path(root)
    defects = defects or {}
    rng = np.random.default_rng(seed)
    written = []
    for number in range(1, n_subjects + 1):
        sid = f"S{number:03d}"
        defect = defects.get(number)
        subject = {
            "gain": rng.uniform(0.6, 1.6, len(CHANNELS)),
            "offset": rng.normal(0.0, 10.0, len(CHANNELS)),
            "alpha_amp": rng.uniform(2.0, 8.0, len(CHANNELS)),
            "alpha_hz": rng.uniform(8.5, 12.5),
            "alpha_phase": rng.uniform(0, 2 * np.pi, len(CHANNELS)),
        }
        (root / sid).mkdir(parents=True, exist_ok=True)
        for run_id in (4, 8, 12):
            if defect == "missing_run" and run_id == 12:
                continue
            rate = 128 if defect == "rate128" and run_id == 8 else 160
            cues = n_cues - 1 if defect == "short" and run_id == 4 else n_cues
            sig, events = _run(rng, subject, rate, cues, trial_s, rest_s, class_gain,
                               truncate_last=defect == "window" and run_id == 12)
            data = write_edf(sig, rate, CHANNELS, events, record_duration=1.0)
            (root / sid / f"{sid}R{run_id:02d}.edf").write_bytes(data)
        written.append(sid)
    return written
