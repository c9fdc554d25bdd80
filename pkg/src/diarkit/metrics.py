"""Diarization error rate and Jaccard error rate.

Overlap-aware, no collar by default, restricted to scoring regions. One
optimal one-to-one speaker mapping per recording serves both metrics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .formats import Annotation, ScoringRegions

logger = logging.getLogger(__name__)

__all__ = [
    "DerComponents",
    "ScoreReport",
    "overlap_matrix",
    "optimal_mapping",
    "compute_der",
    "compute_jer",
    "jer_per_speaker",
    "score_recording",
    "score_report",
]

# overlap totals closer than this count as ties
TIE_TOL = 1e-9


# ------------------------------------------------------------- interval math


def _merge(intervals):
    out = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def _intersect(xs, ys):
    """Intersection of two sorted, disjoint interval lists."""
    out = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        a = max(xs[i][0], ys[j][0])
        b = min(xs[i][1], ys[j][1])
        if b > a:
            out.append((a, b))
        if xs[i][1] < ys[j][1]:
            i += 1
        else:
            j += 1
    return out


def _subtract(xs, ys):
    out = []
    for a, b in xs:
        cur = a
        for c, d in ys:
            if d <= cur or c >= b:
                continue
            if c > cur:
                out.append((cur, c))
            cur = max(cur, d)
        if cur < b:
            out.append((cur, b))
    return out


def _length(xs):
    return sum(b - a for a, b in xs)


def _speaker_times(ann: Annotation, regions):
    return {spk: _intersect(_merge(iv), regions) for spk, iv in sorted(ann.speaker_intervals().items())}


def _effective_regions(ref: Annotation, regions: ScoringRegions | None, collar: float):
    if regions is None:
        lo, hi = ref.extent()
        regs = [(lo, hi)] if hi > lo else []
    else:
        regs = list(regions.regions)
    if collar > 0:
        bounds = [x for t in ref.turns for x in (t.onset, t.offset)]
        regs = _subtract(regs, _merge([(x - collar, x + collar) for x in bounds]))
    return regs


# ------------------------------------------------------------------ mapping


def overlap_matrix(ref_times, hyp_times):
    R, H = list(ref_times), list(hyp_times)
    M = np.zeros((len(R), len(H)))
    for i, r in enumerate(R):
        for j, h in enumerate(H):
            M[i, j] = _length(_intersect(ref_times[r], hyp_times[h]))
    return M


def _best_total(M):
    if M.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(M, maximize=True)
    return float(M[rows, cols].sum())


def _mapping_from_matrix(M, ref_names, hyp_names):
    """Maximum-overlap assignment, lexicographically smallest among optima.

    Refs are visited in name order; each takes the smallest hyp name that
    keeps the optimum reachable, or stays unmapped (which sorts last). Pairs
    with zero overlap are never mapped.
    """
    best = _best_total(M)
    tol = TIE_TOL * (1.0 + best)
    mapping = {}
    fixed_total = 0.0
    free_rows = list(range(len(ref_names)))
    free_cols = list(range(len(hyp_names)))
    for r in range(len(ref_names)):
        free_rows.remove(r)
        chosen = None
        for c in free_cols:
            if M[r, c] <= 0:
                continue
            rest = [cc for cc in free_cols if cc != c]
            total = fixed_total + M[r, c] + _best_total(M[np.ix_(free_rows, rest)])
            if total >= best - tol:
                chosen = c
                break
        if chosen is not None:
            mapping[ref_names[r]] = hyp_names[chosen]
            fixed_total += M[r, chosen]
            free_cols.remove(chosen)
    return mapping


def optimal_mapping(ref: Annotation, hyp: Annotation, regions: ScoringRegions | None = None,
                    collar: float = 0.0) -> dict[str, str]:
    regs = _effective_regions(ref, regions, collar)
    rt = _speaker_times(ref, regs)
    ht = _speaker_times(hyp, regs)
    return _mapping_from_matrix(overlap_matrix(rt, ht), list(rt), list(ht))


# ---------------------------------------------------------------------- DER


@dataclass
class DerComponents:
    miss: float = 0.0
    false_alarm: float = 0.0
    confusion: float = 0.0
    total_ref: float = 0.0

    @property
    def der(self) -> float:
        if self.total_ref <= 0:
            return math.nan
        return (self.miss + self.false_alarm + self.confusion) / self.total_ref


def _timeline(times, regions):
    points = {a for a, _ in regions} | {b for _, b in regions}
    for ivs in times:
        for iv in ivs.values():
            for a, b in iv:
                points.add(a)
                points.add(b)
    return sorted(points)


def _active_per_interval(times, edges):
    """For each elementary interval, the set of active speakers."""
    mids = [(a + b) / 2 for a, b in zip(edges, edges[1:])]
    active = [set() for _ in mids]
    for spk, ivs in times.items():
        for a, b in ivs:
            lo = np.searchsorted(edges, a)
            hi = np.searchsorted(edges, b)
            for k in range(lo, hi):
                active[k].add(spk)
    return mids, active


def _der_from_times(rt, ht, regs, mapping):
    edges = _timeline((rt, ht), regs)
    mids, ref_act = _active_per_interval(rt, edges)
    _, hyp_act = _active_per_interval(ht, edges)
    out = DerComponents()
    for k, (a, b) in enumerate(zip(edges, edges[1:])):
        if not ref_act[k] and not hyp_act[k]:
            continue
        d = b - a
        r, h = len(ref_act[k]), len(hyp_act[k])
        c = sum(1 for s in ref_act[k] if mapping.get(s) in hyp_act[k])
        out.miss += max(0, r - h) * d
        out.false_alarm += max(0, h - r) * d
        out.confusion += (min(r, h) - c) * d
        out.total_ref += r * d
    return out


def compute_der(ref: Annotation, hyp: Annotation, regions: ScoringRegions | None = None,
                mapping: dict | None = None, collar: float = 0.0) -> DerComponents:
    """Interval-sweep DER components; ``der`` is NaN when no reference speech is scored."""
    regs = _effective_regions(ref, regions, collar)
    rt = _speaker_times(ref, regs)
    ht = _speaker_times(hyp, regs)
    if mapping is None:
        mapping = _mapping_from_matrix(overlap_matrix(rt, ht), list(rt), list(ht))
    return _der_from_times(rt, ht, regs, mapping)


# ---------------------------------------------------------------------- JER


def _jer_from_times(rt, ht, mapping):
    out = {}
    for spk, ivs in rt.items():
        if _length(ivs) <= 0:
            continue
        m = mapping.get(spk)
        if m is None or m not in ht:
            out[spk] = 1.0
            continue
        inter = _length(_intersect(ivs, ht[m]))
        union = _length(ivs) + _length(ht[m]) - inter
        out[spk] = 1.0 - inter / union
    return out


def jer_per_speaker(ref, hyp, regions=None, mapping=None, collar: float = 0.0) -> dict[str, float]:
    regs = _effective_regions(ref, regions, collar)
    rt = _speaker_times(ref, regs)
    ht = _speaker_times(hyp, regs)
    if mapping is None:
        mapping = _mapping_from_matrix(overlap_matrix(rt, ht), list(rt), list(ht))
    return _jer_from_times(rt, ht, mapping)


def compute_jer(ref, hyp, regions=None, mapping=None, collar: float = 0.0) -> float:
    """Mean over reference speakers of 1 - Jaccard(ref time, mapped hyp time); NaN if no ref speakers."""
    per = jer_per_speaker(ref, hyp, regions, mapping, collar)
    return float(np.mean(list(per.values()))) if per else math.nan


# ------------------------------------------------------------------- report


@dataclass
class RecordingScore:
    der: float
    jer: float
    miss: float
    false_alarm: float
    confusion: float
    total_ref: float
    n_ref_speakers: int
    mapping: dict = field(default_factory=dict)


@dataclass
class ScoreReport:
    der: float
    jer: float
    miss: float
    false_alarm: float
    confusion: float
    total_ref: float
    per_recording: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "der": clean(self.der),
            "jer": clean(self.jer),
            "miss": self.miss,
            "false_alarm": self.false_alarm,
            "confusion": self.confusion,
            "total_ref": self.total_ref,
            "per_recording": {
                rec: {k: clean(v) for k, v in asdict(s).items()} for rec, s in sorted(self.per_recording.items())
            },
            "warnings": list(self.warnings),
        }

    def to_csv(self) -> str:
        lines = ["recording_id,der,jer,miss,fa,conf,total_ref\n"]
        for rec, s in sorted(self.per_recording.items()):
            lines.append(
                f"{rec},{s.der!r},{s.jer!r},{s.miss!r},{s.false_alarm!r},{s.confusion!r},{s.total_ref!r}\n"
            )
        return "".join(lines)


def score_recording(ref: Annotation, hyp: Annotation, regions: ScoringRegions | None = None,
                    collar: float = 0.0):
    """DER components, per-speaker JER terms and the mapping for one recording."""
    regs = _effective_regions(ref, regions, collar)
    rt = _speaker_times(ref, regs)
    ht = _speaker_times(hyp, regs)
    mapping = _mapping_from_matrix(overlap_matrix(rt, ht), list(rt), list(ht))
    comp = _der_from_times(rt, ht, regs, mapping)
    jers = _jer_from_times(rt, ht, mapping)
    return comp, jers, mapping


def score_report(refs: dict, hyps: dict, uem: dict | None = None, collar: float = 0.0) -> ScoreReport:
    """Score every reference recording; pooled DER is time-weighted, pooled JER speaker-averaged."""
    warnings = []
    per = {}
    total = DerComponents()
    all_jers = []
    for rec in sorted(refs):
        ref = refs[rec]
        hyp = hyps.get(rec)
        if hyp is None:
            hyp = Annotation(rec, ())
            warnings.append(f"{rec}: no hypothesis, scored as empty")
        regions = None
        if uem is not None:
            regions = uem.get(rec)
            if regions is None:
                warnings.append(f"{rec}: not in UEM, scored over reference extent")
        comp, jers, mapping = score_recording(ref, hyp, regions, collar)
        jer = float(np.mean(list(jers.values()))) if jers else math.nan
        per[rec] = RecordingScore(comp.der, jer, comp.miss, comp.false_alarm, comp.confusion,
                                  comp.total_ref, len(jers), mapping)
        if comp.total_ref <= 0:
            warnings.append(f"{rec}: no reference speech in scoring regions, excluded from pooling")
            continue
        total.miss += comp.miss
        total.false_alarm += comp.false_alarm
        total.confusion += comp.confusion
        total.total_ref += comp.total_ref
        all_jers.extend(jers.values())
    for w in warnings:
        logger.warning(w)
    return ScoreReport(
        total.der,
        float(np.mean(all_jers)) if all_jers else math.nan,
        total.miss,
        total.false_alarm,
        total.confusion,
        total.total_ref,
        per,
        warnings,
    )
