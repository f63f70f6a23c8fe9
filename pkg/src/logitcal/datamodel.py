"""Record types and the logit-dump file format.

A dump holds one detection per row: its logit vector, objectness score,
TP/FP match label and difficulty tier. Two encodings are supported and
carry the same fields:

CSV::

    #logitcal-dump version=1
    frame_id,det_id,logit_0,logit_1,logit_2,objectness,match,difficulty
    000001,0,1.2,-0.3,0.1,0.9,TP:0,easy

JSON lines (first line is the header object)::

    {"format": "logitcal-dump", "version": 1, "K": 3}
    {"frame_id": "000001", "det_id": 0, "logits": [1.2, -0.3, 0.1], ...}

The version line and the ``frame_id``/``det_id`` columns are optional on
read. An optional ``split`` column (train/validation/test) turns the file
into a :class:`DatasetSplit`. Columns named ``score_<method>`` and
``pred_class_<method>`` are carried through as extra columns.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DUMP_VERSION = 1
METHODS = ("SG", "SOFTMAX", "ML", "MAP")
DIFFICULTIES = ("easy", "moderate", "hard", "unknown")
SPLITS = ("train", "validation", "test")

_LOGIT_COL = re.compile(r"^logit_(\d+)$")
_EXTRA_COL = re.compile(r"^(score|pred_class)_[a-z0-9_]+$")


class DumpError(ValueError):
    """Base class for problems with a logit dump."""


class ParseError(DumpError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DumpError):
    pass


class ValidationError(DumpError):
    pass


@dataclass(frozen=True)
class Match:
    """TP/FP label. ``cls`` is the matched class index for a TP, else None."""

    cls: int | None = None

    @property
    def is_tp(self):
        return self.cls is not None

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text.upper() == "FP":
            return cls(None)
        head, sep, idx = text.partition(":")
        if head.upper() != "TP" or not sep:
            raise ValueError(f"bad match label {text!r} (expected 'TP:<class>' or 'FP')")
        try:
            return cls(int(idx))
        except ValueError:
            raise ValueError(f"bad class index in match label {text!r}") from None

    def __str__(self):
        return "FP" if self.cls is None else f"TP:{self.cls}"


@dataclass(frozen=True)
class DetectionRecord:
    frame_id: str
    det_id: int
    logits: tuple[float, ...]
    objectness: float = 1.0
    match: Match = field(default_factory=Match)
    difficulty: str = "unknown"

    def __post_init__(self):
        logits = tuple(float(v) for v in self.logits)
        object.__setattr__(self, "logits", logits)
        if len(logits) < 2:
            raise ValidationError(f"need at least 2 logits, got {len(logits)}")
        if not all(math.isfinite(v) for v in logits):
            raise ValidationError(f"non-finite logit in {logits}")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValidationError(f"objectness {self.objectness} outside [0, 1]")
        if self.match.is_tp and not 0 <= self.match.cls < len(logits):
            raise ValidationError(f"match class {self.match.cls} outside [0, {len(logits)})")
        if self.difficulty not in DIFFICULTIES:
            raise ValidationError(f"unknown difficulty {self.difficulty!r}")

    @property
    def K(self):
        return len(self.logits)


@dataclass(frozen=True)
class TrainingRecord:
    logits: tuple[float, ...]
    true_class: int

    def __post_init__(self):
        logits = tuple(float(v) for v in self.logits)
        object.__setattr__(self, "logits", logits)
        if not all(math.isfinite(v) for v in logits):
            raise ValidationError(f"non-finite logit in {logits}")
        if not 0 <= self.true_class < len(logits):
            raise ValidationError(f"true_class {self.true_class} outside [0, {len(logits)})")

    @classmethod
    def from_detection(cls, rec: DetectionRecord):
        if not rec.match.is_tp:
            raise ValueError("only TP detections carry a true class")
        return cls(rec.logits, rec.match.cls)


@dataclass(frozen=True)
class ScoringConfig:
    """Everything the prediction layers need.

    ``smoothing`` is the additive smoothing constant (lambda) added to every
    class term of the ML/MAP layers. ``prior`` selects how MAP evaluates the
    class prior: ``"gaussian"`` evaluates each class's Gaussian density at
    the test logit, ``"frequency"`` uses the training class frequency.
    """

    method: str = "ML"
    smoothing: float = 1.6e-6
    bins: int = 22
    temperature: float = 1.0
    use_objectness: bool = True
    prior: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.upper())
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.smoothing >= 0:
            raise ValueError(f"smoothing must be >= 0, got {self.smoothing}")
        if int(self.bins) != self.bins or self.bins < 1:
            raise ValueError(f"bins must be a positive integer, got {self.bins}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.prior not in ("gaussian", "frequency"):
            raise ValueError(f"unknown prior {self.prior!r}")


@dataclass(frozen=True)
class DatasetSplit:
    train: list[TrainingRecord]
    validation: list[DetectionRecord]
    test: list[DetectionRecord]

    @property
    def K(self):
        for rec in (*self.train[:1], *self.validation[:1], *self.test[:1]):
            return len(rec.logits)
        return None


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"{self.level}: {self.message}"


def validate_split(split: DatasetSplit, bins: int = 22) -> list[Diagnostic]:
    """Check a split for consistency; empty list means usable as-is.

    Classes with fewer training records than histogram bins get a
    ``sparse class`` warning since their histogram would be mostly empty.
    """
    diags = []
    ks = {len(r.logits) for r in (*split.train, *split.validation, *split.test)}
    if len(ks) > 1:
        diags.append(Diagnostic("error", f"mixed logit lengths across records: {sorted(ks)}"))
        return diags
    if not ks:
        return diags
    (K,) = ks
    counts = np.bincount([r.true_class for r in split.train], minlength=K)
    for c, n in enumerate(counts):
        if n == 0:
            diags.append(Diagnostic("error", f"missing class {c}: no training records"))
        elif n < bins:
            diags.append(Diagnostic("warning", f"sparse class {c}: {n} training records < {bins} bins"))
    return diags


# --------------------------------------------------------------------------
# reading


@dataclass
class Dump:
    """Parsed dump file: records plus any pass-through columns."""

    records: list[DetectionRecord]
    K: int | None
    splits: list[str] | None = None
    extras: dict[str, list[str]] = field(default_factory=dict)

    def to_split(self) -> DatasetSplit:
        if self.splits is None:
            raise SchemaError("dump has no 'split' column")
        train, val, test = [], [], []
        for rec, s in zip(self.records, self.splits):
            if s == "train":
                if rec.match.is_tp:
                    train.append(TrainingRecord.from_detection(rec))
            elif s == "validation":
                val.append(rec)
            else:
                test.append(rec)
        return DatasetSplit(train, val, test)


def _guess_format(path):
    ext = os.path.splitext(str(path))[1].lower()
    return "jsonl" if ext in (".jsonl", ".json", ".ndjson") else "csv"


def read_dump(path, format=None) -> Dump:
    """Parse a dump file into a :class:`Dump` (records + extra columns)."""
    format = format or _guess_format(path)
    with open(path, newline="") as fh:
        if format == "csv":
            return _read_csv(fh)
        if format == "jsonl":
            return _read_jsonl(fh)
    raise ValueError(f"unknown dump format {format!r}")


def load_dump(path, format=None):
    """Load a dump file.

    Returns a :class:`DatasetSplit` when the file has a ``split`` column,
    otherwise the list of :class:`DetectionRecord` in file order.
    """
    dump = read_dump(path, format)
    return dump.to_split() if dump.splits is not None else dump.records


def _parse_version(line, lineno):
    m = re.search(r"version\s*=\s*(\d+)", line)
    if m is None:
        raise ParseError("version line without 'version=<n>'", lineno)
    if int(m.group(1)) > DUMP_VERSION:
        raise SchemaError(f"dump version {m.group(1)} is newer than supported {DUMP_VERSION}")


def _read_csv(fh) -> Dump:
    lines = fh.read().splitlines()
    lineno = 0
    while lineno < len(lines) and lines[lineno].startswith("#"):
        _parse_version(lines[lineno], lineno + 1)
        lineno += 1
    if lineno >= len(lines):
        raise ParseError("missing header", lineno + 1)
    reader = csv.reader(lines[lineno:])
    header = [h.strip() for h in next(reader)]
    header_line = lineno + 1

    logit_cols = {}
    for i, name in enumerate(header):
        m = _LOGIT_COL.match(name)
        if m:
            logit_cols[int(m.group(1))] = i
    K = len(logit_cols)
    if K < 2 or sorted(logit_cols) != list(range(K)):
        raise SchemaError(f"header must declare logit_0..logit_<K-1> with K >= 2, got {sorted(logit_cols)}")
    for req in ("objectness", "match"):
        if req not in header:
            raise SchemaError(f"header lacks required column {req!r}")
    known = {"frame_id", "det_id", "objectness", "match", "difficulty", "split"}
    extras = [h for h in header if h not in known and not _LOGIT_COL.match(h)]
    for h in extras:
        if not _EXTRA_COL.match(h):
            raise SchemaError(f"unexpected column {h!r}")
    col = {h: i for i, h in enumerate(header)}

    records, splits = [], ([] if "split" in col else None)
    extra_vals = {h: [] for h in extras}
    for offset, row in enumerate(reader):
        ln = header_line + 1 + offset
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", ln)
        try:
            logits = [float(row[logit_cols[k]]) for k in range(K)]
            rec = DetectionRecord(
                frame_id=row[col["frame_id"]] if "frame_id" in col else "",
                det_id=int(row[col["det_id"]]) if "det_id" in col else len(records),
                logits=logits,
                objectness=float(row[col["objectness"]]),
                match=Match.parse(row[col["match"]]),
                difficulty=row[col["difficulty"]].strip() if "difficulty" in col else "unknown",
            )
        except ValidationError as exc:
            raise ValidationError(f"line {ln}: {exc}") from None
        except ValueError as exc:
            raise ParseError(str(exc), ln) from None
        records.append(rec)
        if splits is not None:
            s = row[col["split"]].strip()
            if s not in SPLITS:
                raise ParseError(f"unknown split {s!r}", ln)
            splits.append(s)
        for h in extras:
            extra_vals[h].append(row[col[h]])
    return Dump(records, K, splits, extra_vals)


def _read_jsonl(fh) -> Dump:
    lines = fh.read().splitlines()
    if not lines:
        raise ParseError("missing header", 1)
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header: {exc.msg}", 1) from None
    if not isinstance(head, dict) or "K" not in head:
        raise SchemaError("header object must declare 'K'")
    if int(head.get("version", DUMP_VERSION)) > DUMP_VERSION:
        raise SchemaError(f"dump version {head['version']} is newer than supported {DUMP_VERSION}")
    K = int(head["K"])
    records, splits, extras = [], None, {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            logits = obj["logits"]
            if len(logits) != K:
                raise SchemaError(f"line {ln}: expected {K} logits, got {len(logits)}")
            rec = DetectionRecord(
                frame_id=str(obj.get("frame_id", "")),
                det_id=int(obj.get("det_id", len(records))),
                logits=logits,
                objectness=float(obj["objectness"]),
                match=Match.parse(obj["match"]),
                difficulty=obj.get("difficulty", "unknown"),
            )
        except (SchemaError, ParseError):
            raise
        except ValidationError as exc:
            raise ValidationError(f"line {ln}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, ln) from None
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{type(exc).__name__}: {exc}", ln) from None
        if "split" in obj:
            if splits is None:
                if records:
                    raise ParseError("'split' present on some rows only", ln)
                splits = []
            if obj["split"] not in SPLITS:
                raise ParseError(f"unknown split {obj['split']!r}", ln)
            splits.append(obj["split"])
        elif splits is not None:
            raise ParseError("'split' present on some rows only", ln)
        records.append(rec)
        for k, v in obj.items():
            if _EXTRA_COL.match(k):
                extras.setdefault(k, [""] * (len(records) - 1)).append(str(v))
        for k, vals in extras.items():
            if len(vals) < len(records):
                vals.append("")
    return Dump(records, K, splits, extras)


# --------------------------------------------------------------------------
# writing


def fmt_float(x):
    """Float formatting used in every text output (9 significant digits)."""
    return format(float(x), ".9g")


def write_dump(records: Sequence[DetectionRecord] | DatasetSplit, path, format=None,
               K=None, splits: Sequence[str] | None = None,
               extras: dict[str, Sequence] | None = None):
    """Write records in canonical form; ``extras`` are appended as columns.

    ``K`` only matters for an empty record list (it sizes the header).
    """
    if isinstance(records, DatasetSplit):
        records, splits = _flatten_split(records)
    records = list(records)
    if K is None:
        K = len(records[0].logits) if records else 2
    for r in records:
        if len(r.logits) != K:
            raise SchemaError(f"record {r.det_id} has {len(r.logits)} logits, expected {K}")
    extras = {k: [str(v) for v in vals] for k, vals in (extras or {}).items()}
    format = format or _guess_format(path)
    if format == "csv":
        text = _csv_text(records, K, splits, extras)
    elif format == "jsonl":
        text = _jsonl_text(records, K, splits, extras)
    else:
        raise ValueError(f"unknown dump format {format!r}")
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _flatten_split(split: DatasetSplit):
    records, splits = [], []
    for i, t in enumerate(split.train):
        records.append(DetectionRecord(f"train-{i}", i, t.logits, 1.0, Match(t.true_class), "unknown"))
        splits.append("train")
    for name, recs in (("validation", split.validation), ("test", split.test)):
        records.extend(recs)
        splits.extend([name] * len(recs))
    return records, splits


def _csv_text(records, K, splits, extras):
    buf = io.StringIO()
    buf.write(f"#logitcal-dump version={DUMP_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = ["frame_id", "det_id", *(f"logit_{k}" for k in range(K)),
              "objectness", "match", "difficulty"]
    if splits is not None:
        header.append("split")
    header.extend(extras)
    w.writerow(header)
    for i, r in enumerate(records):
        row = [r.frame_id, r.det_id, *(fmt_float(v) for v in r.logits),
               fmt_float(r.objectness), str(r.match), r.difficulty]
        if splits is not None:
            row.append(splits[i])
        row.extend(vals[i] for vals in extras.values())
        w.writerow(row)
    return buf.getvalue()


def _jsonl_text(records, K, splits, extras):
    out = [json.dumps({"format": "logitcal-dump", "version": DUMP_VERSION, "K": K})]
    for i, r in enumerate(records):
        obj = {
            "frame_id": r.frame_id,
            "det_id": r.det_id,
            "logits": [float(fmt_float(v)) for v in r.logits],
            "objectness": float(fmt_float(r.objectness)),
            "match": str(r.match),
            "difficulty": r.difficulty,
        }
        if splits is not None:
            obj["split"] = splits[i]
        for k, vals in extras.items():
            obj[k] = vals[i]
        out.append(json.dumps(obj))
    return "\n".join(out) + "\n"


def logits_matrix(records: Iterable[DetectionRecord | TrainingRecord], K=None) -> np.ndarray:
    """Stack record logits into an ``(n, K)`` float array."""
    rows = [r.logits for r in records]
    if not rows:
        return np.empty((0, K or 0))
    return np.asarray(rows, dtype=float)
