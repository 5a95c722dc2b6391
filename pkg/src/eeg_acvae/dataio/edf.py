"""Reading and writing EDF / EDF+ recordings.

Only the subset needed for the PhysioNet motor imagery runs is handled:
16-bit samples, one "EDF Annotations" channel carrying TAL event lists,
and contiguous (EDF+C) data records.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AnnotationError, ParseError, TruncationError

ANNOTATION_LABEL = "EDF Annotations"
EVENT_CODES = ("T0", "T1", "T2")

_UNIT_SCALE = {"uv": 1.0, "µv": 1.0, "mv": 1e3, "v": 1e6, "nv": 1e-3}
_FILENAME_RE = re.compile(r"^S(\d{3})R(\d{2})\.edf$", re.IGNORECASE)


@dataclass(frozen=True)
class Annotation:
    onset: float
    duration: float
    code: str


@dataclass(frozen=True)
class Recording:
    """One EDF run, signals in microvolts (channels x samples)."""

    subject_id: str
    run_id: int
    signals: np.ndarray
    sample_rate: float
    channel_names: tuple[str, ...]
    annotations: tuple[Annotation, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.signals.ndim != 2 or self.signals.shape[0] != len(self.channel_names):
            raise ParseError(
                f"signals shape {self.signals.shape} does not match "
                f"{len(self.channel_names)} channel names"
            )
        self.signals.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.signals.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate if self.sample_rate else 0.0


def _field(raw: bytes, start: int, width: int) -> str:
    return raw[start:start + width].decode("latin-1").strip()


def _number(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"header field {what!r} is not numeric: {text!r}") from None


def _parse_tals(chunk: bytes) -> list[tuple[float, float, list[str]]]:
    out = []
    for tal in chunk.split(b"\x00"):
        if not tal:
            continue
        parts = tal.split(b"\x14")
        stamp = parts[0].decode("latin-1")
        if not stamp or stamp[0] not in "+-":
            raise AnnotationError(f"malformed TAL timestamp {stamp!r}")
        onset_txt, _, dur_txt = stamp.partition("\x15")
        try:
            onset = float(onset_txt)
            duration = float(dur_txt) if dur_txt else 0.0
        except ValueError:
            raise AnnotationError(f"malformed TAL timestamp {stamp!r}") from None
        texts = [p.decode("utf-8", errors="replace") for p in parts[1:] if p]
        out.append((onset, duration, texts))
    return out


def parse_edf(raw: bytes, subject_id: str = "", run_id: int = 0) -> Recording:
    """Decode an EDF+ byte stream into a :class:`Recording`.

    Digital values are mapped to physical units with the per-channel
    header ranges and then rescaled to microvolts. Only T0/T1/T2 events are
    kept from the annotation stream; the per-record timekeeping entries are
    dropped.
    """
    if len(raw) < 256:
        raise ParseError(f"file is {len(raw)} bytes, shorter than the 256-byte header")
    if raw[:8] != b"0       ":
        raise ParseError(f"bad EDF version field {raw[:8]!r}")
    header_bytes = int(_number(_field(raw, 184, 8), "header bytes"))
    n_records = int(_number(_field(raw, 236, 8), "number of records"))
    record_duration = _number(_field(raw, 244, 8), "record duration")
    ns = int(_number(_field(raw, 252, 4), "number of signals"))
    if ns <= 0 or header_bytes != 256 * (ns + 1):
        raise ParseError(f"header size {header_bytes} inconsistent with {ns} signals")
    if len(raw) < header_bytes:
        raise TruncationError("file ends inside the signal header block")

    def column(offset: int, width: int) -> list[str]:
        base = 256 + offset * ns
        return [_field(raw, base + i * width, width) for i in range(ns)]

    # Per-signal header layout: field widths in file order.
    widths = [16, 80, 8, 8, 8, 8, 8, 80, 8, 32]
    offsets = np.cumsum([0] + widths[:-1])
    labels = column(offsets[0], 16)
    units = column(offsets[2], 8)
    phys_min = np.array([_number(v, "physical min") for v in column(offsets[3], 8)])
    phys_max = np.array([_number(v, "physical max") for v in column(offsets[4], 8)])
    dig_min = np.array([_number(v, "digital min") for v in column(offsets[5], 8)])
    dig_max = np.array([_number(v, "digital max") for v in column(offsets[6], 8)])
    n_per_record = np.array([int(_number(v, "samples per record")) for v in column(offsets[8], 8)])

    record_bytes = 2 * int(n_per_record.sum())
    body = len(raw) - header_bytes
    if n_records == -1 and record_bytes:
        if body % record_bytes:
            raise TruncationError("record count unknown and body is not a whole number of records")
        n_records = body // record_bytes
    if n_records < 0 or body != n_records * record_bytes:
        raise TruncationError(
            f"header declares {n_records} records ({n_records * record_bytes} bytes) "
            f"but the data section holds {body} bytes"
        )

    ann = [i for i, lab in enumerate(labels) if lab == ANNOTATION_LABEL]
    if not ann:
        raise AnnotationError("no 'EDF Annotations' channel in file")
    data_idx = [i for i in range(ns) if i not in ann]
    if not data_idx:
        raise ParseError("file has no data channels")
    rates = {int(n_per_record[i]) for i in data_idx}
    if len(rates) != 1:
        raise ParseError(f"data channels have mixed sample counts {sorted(rates)}")
    per_rec = rates.pop()
    sample_rate = per_rec / record_duration if record_duration > 0 else 0.0

    words = np.frombuffer(raw, dtype="<i2", offset=header_bytes,
                          count=body // 2).reshape(n_records, int(np.sum(n_per_record)))
    starts = np.concatenate([[0], np.cumsum(n_per_record)])
    signals = np.empty((len(data_idx), n_records * per_rec), dtype=np.float64)
    for row, i in enumerate(data_idx):
        digital = words[:, starts[i]:starts[i + 1]].reshape(-1).astype(np.float64)
        gain = (phys_max[i] - phys_min[i]) / (dig_max[i] - dig_min[i])
        scale = _UNIT_SCALE.get(units[i].lower(), 1.0)
        signals[row] = ((digital - dig_min[i]) * gain + phys_min[i]) * scale

    events: list[Annotation] = []
    for i in ann:
        for rec in range(n_records):
            chunk = words[rec, starts[i]:starts[i + 1]].tobytes()
            for onset, duration, texts in _parse_tals(chunk):
                events.extend(Annotation(onset, duration, t) for t in texts if t in EVENT_CODES)
    events.sort(key=lambda a: a.onset)
    total = signals.shape[1] / sample_rate if sample_rate else 0.0
    for a in events:
        if a.onset < 0 or a.onset > total:
            raise AnnotationError(f"annotation {a.code} at {a.onset}s lies outside the {total}s recording")

    return Recording(
        subject_id=subject_id,
        run_id=run_id,
        signals=signals,
        sample_rate=sample_rate,
        channel_names=tuple(labels[i] for i in data_idx),
        annotations=tuple(events),
    )


def read_edf(path: str | Path) -> Recording:
    """Parse an EDF file; subject/run ids come from ``SxxxRyy.edf`` names."""
    path = Path(path)
    m = _FILENAME_RE.match(path.name)
    subject_id, run_id = (f"S{m.group(1)}", int(m.group(2))) if m else (path.stem, 0)
    return parse_edf(path.read_bytes(), subject_id=subject_id, run_id=run_id)


def _fit8(value: float) -> str:
    """Shortest decimal rendering of ``value`` that fits an 8-byte field."""
    for digits in range(6, -1, -1):
        text = f"{value:.{digits}f}"
        if len(text) <= 8:
            return text
    text = f"{value:.2g}"
    if len(text) > 8:
        raise ValueError(f"cannot encode {value} in 8 characters")
    return text


def _pad(text: str, width: int) -> bytes:
    data = text.encode("latin-1")[:width]
    return data + b" " * (width - len(data))


def write_edf(
    signals: np.ndarray,
    sample_rate: float,
    channel_names: list[str] | tuple[str, ...],
    annotations=(),
    record_duration: float = 1.0,
    physical_range: float | None = None,
) -> bytes:
    """Encode microvolt signals plus T-code events as an EDF+C file.

    ``physical_range`` fixes a symmetric +/- range for every channel;
    by default each channel uses its own peak magnitude.
    """
    signals = np.asarray(signals, dtype=np.float64)
    n_ch, n_samples = signals.shape
    per_rec = int(round(sample_rate * record_duration))
    if per_rec <= 0 or abs(per_rec - sample_rate * record_duration) > 1e-9:
        raise ValueError("sample_rate * record_duration must be a positive integer")
    n_records = math.ceil(n_samples / per_rec)
    padded = np.zeros((n_ch, n_records * per_rec))
    padded[:, :n_samples] = signals

    dig_lo, dig_hi = -32768, 32767
    phys_hi_txt, phys_lo_txt, digital = [], [], []
    for row in padded:
        peak = physical_range if physical_range is not None else max(float(np.abs(row).max()), 1.0)
        hi_txt, lo_txt = _fit8(peak), _fit8(-peak)
        hi, lo = float(hi_txt), float(lo_txt)
        counts = np.round((row - lo) * (dig_hi - dig_lo) / (hi - lo) + dig_lo)
        digital.append(np.clip(counts, dig_lo, dig_hi).astype("<i2"))
        phys_hi_txt.append(hi_txt)
        phys_lo_txt.append(lo_txt)

    tals = []
    for rec in range(n_records):
        text = f"+{rec * record_duration:g}\x14\x14\x00"
        for a in annotations:
            onset, duration, code = (a.onset, a.duration, a.code) if isinstance(a, Annotation) else a
            if min(int(onset // record_duration), n_records - 1) == rec:
                text += f"+{onset:g}\x15{duration:g}\x14{code}\x14\x00"
        tals.append(text.encode("latin-1"))
    ann_words = max(1, math.ceil(max(len(t) for t in tals) / 2)) if n_records else 8

    ns = n_ch + 1
    labels = list(channel_names) + [ANNOTATION_LABEL]
    header = b"".join([
        _pad("0", 8), _pad("X X X X", 80), _pad("Startdate X X X X", 80),
        _pad("01.01.09", 8), _pad("00.00.00", 8), _pad(str(256 * (ns + 1)), 8),
        _pad("EDF+C", 44), _pad(str(n_records), 8), _pad(_fit8(record_duration), 8),
        _pad(str(ns), 4),
    ])
    header += b"".join(_pad(lab, 16) for lab in labels)
    header += b"".join(_pad("", 80) for _ in labels)
    header += b"".join(_pad("uV", 8) for _ in range(n_ch)) + _pad("", 8)
    header += b"".join(_pad(v, 8) for v in phys_lo_txt) + _pad("-1", 8)
    header += b"".join(_pad(v, 8) for v in phys_hi_txt) + _pad("1", 8)
    header += b"".join(_pad(str(dig_lo), 8) for _ in labels)
    header += b"".join(_pad(str(dig_hi), 8) for _ in labels)
    header += b"".join(_pad("", 80) for _ in labels)
    header += b"".join(_pad(str(per_rec), 8) for _ in range(n_ch)) + _pad(str(ann_words), 8)
    header += b"".join(_pad("", 32) for _ in labels)

    records = []
    for rec in range(n_records):
        sl = slice(rec * per_rec, (rec + 1) * per_rec)
        records.extend(d[sl].tobytes() for d in digital)
        records.append(tals[rec].ljust(2 * ann_words, b"\x00"))
    return header + b"".join(records)
