"""Readers and writers for the on-disk artifacts.

RTTM, UEM, plain-text embedding tables, domain maps (CSV) and domain
profiles (JSON). Parsers never repair their input: every invariant
violation raises with the offending line number.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError, ParseError, ValidationError

__all__ = [
    "Turn",
    "Annotation",
    "ScoringRegions",
    "UtteranceTable",
    "SegmentTable",
    "DomainProfile",
    "ProfileSet",
    "parse_rttm",
    "write_rttm",
    "parse_uem",
    "write_uem",
    "parse_embeddings",
    "write_embeddings",
    "read_profiles",
    "write_profiles",
    "read_domain_map",
    "write_domain_map",
]


def _check_token(value, what, line=None):
    if not isinstance(value, str) or not value or any(c.isspace() for c in value):
        raise ValidationError(f"{what} must be a non-empty token without whitespace, got {value!r}", line)


OFFSET_DECIMALS = 9


@dataclass(frozen=True, order=True)
class Turn:
    recording_id: str
    onset: float
    duration: float
    speaker: str

    def __post_init__(self):
        _check_token(self.recording_id, "recording id")
        _check_token(self.speaker, "speaker")
        if not math.isfinite(self.onset) or self.onset < 0:
            raise ValidationError(f"turn onset must be finite and >= 0, got {self.onset}")
        if not math.isfinite(self.duration) or self.duration <= 0:
            raise ValidationError(f"turn duration must be finite and > 0, got {self.duration}")

    @property
    def offset(self) -> float:
        # nanosecond rounding removes float noise such as 0.17 + 0.01 = 0.18000000000000002
        return round(self.onset + self.duration, OFFSET_DECIMALS)


def _turn_key(t: Turn):
    return (t.onset, t.speaker, t.duration)


@dataclass(frozen=True)
class Annotation:
    """All speaker turns of one recording, sorted by onset then speaker."""

    recording_id: str
    turns: tuple = ()

    def __post_init__(self):
        _check_token(self.recording_id, "recording id")
        turns = tuple(sorted(self.turns, key=_turn_key))
        for t in turns:
            if t.recording_id != self.recording_id:
                raise ValidationError(
                    f"turn of recording {t.recording_id!r} inside annotation of {self.recording_id!r}"
                )
        object.__setattr__(self, "turns", turns)

    @property
    def speakers(self) -> list[str]:
        return sorted({t.speaker for t in self.turns})

    def speaker_intervals(self) -> dict[str, list[tuple[float, float]]]:
        out: dict[str, list[tuple[float, float]]] = defaultdict(list)
        for t in self.turns:
            out[t.speaker].append((t.onset, t.offset))
        return dict(out)

    def extent(self) -> tuple[float, float]:
        if not self.turns:
            return (0.0, 0.0)
        return (min(t.onset for t in self.turns), max(t.offset for t in self.turns))


@dataclass(frozen=True)
class ScoringRegions:
    recording_id: str
    regions: tuple = ()

    def __post_init__(self):
        _check_token(self.recording_id, "recording id")
        regs = tuple(sorted((float(a), float(b)) for a, b in self.regions))
        for a, b in regs:
            if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
                raise ValidationError(f"region [{a}, {b}) of {self.recording_id!r} has offset <= onset")
        for (_, b0), (a1, _) in zip(regs, regs[1:]):
            if a1 < b0:
                raise ValidationError(f"overlapping regions in {self.recording_id!r} around {a1}")
        object.__setattr__(self, "regions", regs)

    @property
    def total(self) -> float:
        return sum(b - a for a, b in self.regions)


# --------------------------------------------------------------------- RTTM


def parse_rttm(text: str) -> dict[str, Annotation]:
    """Parse RTTM ``SPEAKER`` lines into one :class:`Annotation` per recording."""
    grouped: dict[str, list[Turn]] = defaultdict(list)
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) < 9:
            raise ParseError(f"expected >= 9 fields, got {len(fields)}", lineno)
        if fields[0] != "SPEAKER":
            raise ParseError(f"expected type SPEAKER, got {fields[0]!r}", lineno)
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise ParseError(f"non-numeric onset/duration {fields[3]!r} {fields[4]!r}", lineno) from None
        try:
            turn = Turn(fields[1], onset, duration, fields[7])
        except ValidationError as exc:
            raise ValidationError(str(exc), lineno) from None
        grouped[fields[1]].append(turn)
    return {rec: Annotation(rec, tuple(turns)) for rec, turns in sorted(grouped.items())}


def write_rttm(annotations: Mapping[str, Annotation] | Iterable[Annotation]) -> str:
    if isinstance(annotations, Mapping):
        annotations = annotations.values()
    lines = []
    for ann in sorted(annotations, key=lambda a: a.recording_id):
        for t in ann.turns:
            dur = f"{t.duration:.3f}"
            if float(dur) <= 0:
                raise ValidationError(f"turn of {t.recording_id!r} at {t.onset} rounds to zero duration")
            lines.append(f"SPEAKER {t.recording_id} 1 {t.onset:.3f} {dur} <NA> <NA> {t.speaker} <NA> <NA>\n")
    return "".join(lines)


# ---------------------------------------------------------------------- UEM


def parse_uem(text: str) -> dict[str, ScoringRegions]:
    grouped: dict[str, list[tuple[float, float]]] = defaultdict(list)
    first_line: dict[str, int] = {}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", lineno)
        try:
            onset, offset = float(fields[2]), float(fields[3])
        except ValueError:
            raise ParseError(f"non-numeric region bounds {fields[2]!r} {fields[3]!r}", lineno) from None
        if not offset > onset:
            raise ValidationError(f"offset {offset} <= onset {onset}", lineno)
        grouped[fields[0]].append((onset, offset))
        first_line.setdefault(fields[0], lineno)
    out = {}
    for rec, regs in sorted(grouped.items()):
        try:
            out[rec] = ScoringRegions(rec, tuple(regs))
        except ValidationError as exc:
            raise ValidationError(str(exc), first_line[rec]) from None
    return out


def write_uem(regions: Mapping[str, ScoringRegions] | Iterable[ScoringRegions]) -> str:
    if isinstance(regions, Mapping):
        regions = regions.values()
    lines = []
    for sr in sorted(regions, key=lambda r: r.recording_id):
        for a, b in sr.regions:
            lines.append(f"{sr.recording_id} 1 {a!r} {b!r}\n")
    return "".join(lines)


# ---------------------------------------------------------------- embeddings


@dataclass
class UtteranceTable:
    """Utterance-level embeddings, optionally labeled with a domain."""

    ids: list[str]
    vectors: np.ndarray
    domains: list[str] | None = None

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if len(self.ids) != len(self.vectors):
            raise ValidationError("ids and vectors differ in length")
        if self.domains is not None and len(self.domains) != len(self.ids):
            raise ValidationError("domains and ids differ in length")

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class SegmentTable:
    """Time-bounded sub-segment embeddings, possibly spanning several recordings."""

    recording_ids: list[str]
    onsets: np.ndarray
    offsets: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.onsets = np.asarray(self.onsets, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2:
            self.vectors = self.vectors.reshape(len(self.recording_ids), -1)
        n = len(self.recording_ids)
        if not (len(self.onsets) == len(self.offsets) == len(self.vectors) == n):
            raise ValidationError("segment table columns differ in length")

    def __len__(self):
        return len(self.recording_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def by_recording(self) -> dict[str, "SegmentTable"]:
        """Split per recording, each sorted by onset (stable)."""
        idx: dict[str, list[int]] = defaultdict(list)
        for i, rec in enumerate(self.recording_ids):
            idx[rec].append(i)
        out = {}
        for rec in sorted(idx):
            rows = np.asarray(idx[rec])
            rows = rows[np.argsort(self.onsets[rows], kind="stable")]
            out[rec] = SegmentTable(
                [rec] * len(rows), self.onsets[rows], self.offsets[rows], self.vectors[rows]
            )
        return out

    @staticmethod
    def concat(tables: Iterable["SegmentTable"]) -> "SegmentTable":
        tables = list(tables)
        if not tables:
            return SegmentTable([], np.zeros(0), np.zeros(0), np.zeros((0, 0)))
        return SegmentTable(
            [r for t in tables for r in t.recording_ids],
            np.concatenate([t.onsets for t in tables]),
            np.concatenate([t.offsets for t in tables]),
            np.vstack([t.vectors for t in tables]),
        )


def _floats(tokens, lineno):
    try:
        vals = [float(v) for v in tokens]
    except ValueError:
        raise FormatError(f"non-numeric value in {tokens!r}", lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise FormatError("non-finite value", lineno)
    return vals


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def parse_embeddings(text: str, form: str = "utterance") -> UtteranceTable | SegmentTable:
    """Parse a whitespace-separated embedding table.

    ``form="utterance"`` reads ``<utt_id> [<domain>] <v1> ... <vD>`` where the
    domain column is present iff the second token is not a number (all lines
    must agree). ``form="segment"`` reads ``<recording_id> <onset> <offset>
    <v1> ... <vD>``. ``#`` starts a comment.
    """
    if form not in ("utterance", "segment"):
        raise ValueError(f"unknown embedding form {form!r}")
    rows = []
    dim = None
    labeled = None
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        fields = raw.split("#", 1)[0].split()
        if not fields:
            continue
        if form == "segment":
            if len(fields) < 4:
                raise FormatError("segment line needs recording, onset, offset and >= 1 value", lineno)
            onset, offset = _floats(fields[1:3], lineno)
            if not offset > onset:
                raise ValidationError(f"segment offset {offset} <= onset {onset}", lineno)
            vec = _floats(fields[3:], lineno)
            head = (fields[0], onset, offset)
        else:
            if len(fields) < 2:
                raise FormatError("utterance line needs an id and >= 1 value", lineno)
            has_label = not _is_number(fields[1])
            if labeled is None:
                labeled = has_label
            elif labeled != has_label:
                raise FormatError("domain column present on some lines only", lineno)
            start = 2 if has_label else 1
            if len(fields) <= start:
                raise FormatError("utterance line has no vector values", lineno)
            vec = _floats(fields[start:], lineno)
            head = (fields[0], fields[1] if has_label else None)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise FormatError(f"dimension {len(vec)} differs from {dim}", lineno)
        rows.append((head, vec))

    vectors = np.array([v for _, v in rows], dtype=float).reshape(len(rows), dim or 0)
    if form == "segment":
        return SegmentTable(
            [h[0] for h, _ in rows],
            np.array([h[1] for h, _ in rows], dtype=float),
            np.array([h[2] for h, _ in rows], dtype=float),
            vectors,
        )
    domains = [h[1] for h, _ in rows] if labeled else None
    return UtteranceTable([h[0] for h, _ in rows], vectors, domains)


def _fmt_vec(v):
    return " ".join(repr(float(x)) for x in v)


def write_embeddings(table: UtteranceTable | SegmentTable) -> str:
    lines = []
    if isinstance(table, SegmentTable):
        for rec, a, b, v in zip(table.recording_ids, table.onsets, table.offsets, table.vectors):
            lines.append(f"{rec} {float(a)!r} {float(b)!r} {_fmt_vec(v)}\n")
    else:
        for i, (uid, v) in enumerate(zip(table.ids, table.vectors)):
            label = f" {table.domains[i]}" if table.domains is not None else ""
            lines.append(f"{uid}{label} {_fmt_vec(v)}\n")
    return "".join(lines)


# ------------------------------------------------------------------ profiles


@dataclass(frozen=True)
class DomainProfile:
    """Tuned clustering parameters for one acoustic domain."""

    domain: str
    ahc_threshold: float
    pca_energy: float = 0.30

    def __post_init__(self):
        _check_token(self.domain, "domain")
        if not math.isfinite(self.ahc_threshold):
            raise ValidationError(f"ahc_threshold of {self.domain!r} must be finite")
        if not (0.0 < self.pca_energy <= 1.0):
            raise ValidationError(f"pca_energy of {self.domain!r} must lie in (0, 1], got {self.pca_energy}")

    def to_json(self) -> dict:
        return {"domain": self.domain, "ahc_threshold": self.ahc_threshold, "pca_energy": self.pca_energy}


@dataclass
class ProfileSet:
    profiles: dict[str, DomainProfile] = field(default_factory=dict)
    fallback: DomainProfile | None = None

    def __getitem__(self, domain):
        return self.profiles[domain]

    def __len__(self):
        return len(self.profiles)


def _profile_from(obj, where):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: profile must be an object")
    missing = {"domain", "ahc_threshold", "pca_energy"} - obj.keys()
    if missing:
        raise ValidationError(f"{where}: missing keys {sorted(missing)}")
    try:
        return DomainProfile(str(obj["domain"]), float(obj["ahc_threshold"]), float(obj["pca_energy"]))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


def read_profiles(text: str) -> ProfileSet:
    """Read profiles JSON: ``{"profiles": [...], "fallback": {...}}`` or a bare array."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    fallback = None
    if isinstance(doc, dict):
        items = doc.get("profiles", [])
        if doc.get("fallback") is not None:
            fallback = _profile_from(doc["fallback"], "fallback")
    elif isinstance(doc, list):
        items = doc
    else:
        raise ValidationError("profiles document must be an object or an array")
    profiles: dict[str, DomainProfile] = {}
    for i, obj in enumerate(items):
        prof = _profile_from(obj, f"profile #{i}")
        if prof.domain in profiles:
            raise ValidationError(f"duplicate domain {prof.domain!r}")
        profiles[prof.domain] = prof
    return ProfileSet(profiles, fallback)


def write_profiles(profiles: ProfileSet | Mapping[str, DomainProfile], fallback: DomainProfile | None = None) -> str:
    if isinstance(profiles, ProfileSet):
        fallback = profiles.fallback if fallback is None else fallback
        profiles = profiles.profiles
    doc = {
        "profiles": [profiles[d].to_json() for d in sorted(profiles)],
        "fallback": fallback.to_json() if fallback is not None else None,
    }
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------- domain map


def read_domain_map(text: str) -> dict[str, str]:
    """Read a ``recording_id,domain`` CSV (header row required)."""
    reader = csv.reader(io.StringIO(text))
    out: dict[str, str] = {}
    header = None
    for lineno, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip():
            continue
        if header is None:
            header = [c.strip() for c in row]
            if header[:2] != ["recording_id", "domain"]:
                raise ParseError("domain map header must start with recording_id,domain", lineno)
            continue
        if len(row) < 2:
            raise ParseError("expected recording_id,domain", lineno)
        rec, dom = row[0].strip(), row[1].strip()
        _check_token(rec, "recording id", lineno)
        _check_token(dom, "domain", lineno)
        if rec in out and out[rec] != dom:
            raise ValidationError(f"conflicting domains for {rec!r}", lineno)
        out[rec] = dom
    return out


def write_domain_map(mapping: Mapping[str, str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["recording_id", "domain"])
    for rec in sorted(mapping):
        w.writerow([rec, mapping[rec]])
    return buf.getvalue()
