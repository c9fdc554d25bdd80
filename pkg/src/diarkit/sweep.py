"""First-pass diarization of one recording group and per-domain grid search.

``run_config`` is the diarizer: PLDA scoring with recording-dependent PCA,
average-linkage AHC cut at a threshold, optional VB-HMM resegmentation.
``sweep_domain``/``sweep_all`` tune (threshold, PCA energy) per domain on
pooled dev DER.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .clustering import build_dendrogram
from .errors import ConfigError
from .formats import Annotation, DomainProfile, ProfileSet, SegmentTable, Turn
from .metrics import score_recording
from .plda import PldaModel, prepare, score_matrix
from .reseg import VbConfig, vb_resegment

logger = logging.getLogger(__name__)

__all__ = [
    "BASELINE_ENERGY",
    "SweepGrid",
    "RecordingResult",
    "diarize_recording",
    "labels_to_annotation",
    "run_config",
    "DomainSweep",
    "SweepResult",
    "sweep_domain",
    "sweep_all",
]

BASELINE_ENERGY = 0.30
TIE_TOL = 1e-12


def default_thresholds():
    return [round(x, 1) for x in np.arange(-2.0, 2.0 + 1e-9, 0.1)]


def default_energies():
    return sorted({round(x, 2) for x in np.arange(0.10, 0.95 + 1e-9, 0.05)} | {BASELINE_ENERGY})


@dataclass(frozen=True)
class SweepGrid:
    thresholds: tuple = field(default_factory=lambda: tuple(default_thresholds()))
    energies: tuple = field(default_factory=lambda: tuple(default_energies()))

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        en = tuple(float(e) for e in self.energies)
        if not th or not en:
            raise ConfigError("sweep grid must be non-empty")
        if any(b <= a for a, b in zip(th, th[1:])) or any(b <= a for a, b in zip(en, en[1:])):
            raise ConfigError("grid values must be strictly ascending")
        if any(not math.isfinite(t) for t in th):
            raise ConfigError("grid thresholds must be finite")
        if any(not 0 < e <= 1 for e in en):
            raise ConfigError("grid energies must lie in (0, 1]")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "energies", en)


# ------------------------------------------------------------------ diarizer


def labels_to_annotation(seg: SegmentTable, labels, recording_id=None, prefix="spk") -> Annotation:
    """Turn per-segment labels into speaker turns.

    Overlapping consecutive segments are split at the midpoint of their
    overlap; touching turns of the same speaker are merged.
    """
    rec = recording_id or (seg.recording_ids[0] if len(seg) else None)
    if rec is None:
        raise ConfigError("cannot name an annotation without a recording id")
    order = np.argsort(seg.onsets, kind="stable")
    on = seg.onsets[order].astype(float)
    off = seg.offsets[order].astype(float)
    lab = np.asarray(labels)[order]
    starts, ends = on.copy(), off.copy()
    for i in range(len(on) - 1):
        if off[i] > on[i + 1]:
            mid = 0.5 * (on[i + 1] + off[i])
            ends[i] = mid
            starts[i + 1] = max(starts[i + 1], mid)
    merged = []
    for a, b, s in zip(starts, ends, lab):
        if b <= a:
            continue
        if merged and merged[-1][2] == s and a <= merged[-1][1] + 1e-9:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b, s])
    return Annotation(rec, tuple(Turn(rec, float(a), float(b - a), f"{prefix}{int(s)}") for a, b, s in merged))


@dataclass
class RecordingResult:
    annotation: Annotation
    labels: np.ndarray
    n_clusters: int
    elbo_trace: list = field(default_factory=list)


def diarize_recording(seg: SegmentTable, model: PldaModel, threshold: float, energy: float,
                      vb: VbConfig | None = None) -> RecordingResult:
    X = prepare(model, seg.vectors)
    S, proj = score_matrix(model, X, energy, return_projection=True)
    first = build_dendrogram(S).cut(threshold)
    labels, trace = first.labels, []
    if vb is not None:
        res = vb_resegment(X, labels, model, proj, vb)
        labels, trace = res.labels, res.elbo_trace
    return RecordingResult(labels_to_annotation(seg, labels), labels, len(set(labels.tolist())), trace)


def run_config(recordings: dict, model: PldaModel, threshold: float, energy: float,
               vb: VbConfig | None = None, map_fn=map) -> dict:
    """Diarize a group of recordings ({rec: SegmentTable}) with one profile."""
    recs = sorted(recordings)
    results = map_fn(lambda r: diarize_recording(recordings[r], model, threshold, energy, vb), recs)
    return {r: res.annotation for r, res in zip(recs, results)}


# --------------------------------------------------------------------- sweep


@dataclass
class GridRow:
    domain: str
    threshold: float
    energy: float
    der: float
    jer: float
    errors: float
    total_ref: float


@dataclass
class DomainSweep:
    profile: DomainProfile
    der: float
    table: list


@dataclass
class SweepResult:
    per_domain: dict
    global_profile: DomainProfile
    global_der: float
    baseline_profile: DomainProfile
    baseline_der: float
    m1_profiles: dict
    table: list

    def profiles(self) -> ProfileSet:
        """M2 profiles with the energy-0.30 global baseline as fallback."""
        return ProfileSet({d: s.profile for d, s in self.per_domain.items()}, self.baseline_profile)

    def m1_profile_set(self) -> ProfileSet:
        return ProfileSet(dict(self.m1_profiles), self.baseline_profile)

    def pooled(self, profiles: dict) -> float:
        """Pooled dev DER when each domain uses ``profiles[domain]``."""
        err = tot = 0.0
        for dom, prof in profiles.items():
            row = _row_for(self.table, dom, prof.ahc_threshold, prof.pca_energy)
            err += row.errors
            tot += row.total_ref
        return err / tot if tot > 0 else math.nan

    def grid_csv(self) -> str:
        lines = ["domain,threshold,energy,der,jer\n"]
        for r in self.table:
            lines.append(f"{r.domain},{r.threshold!r},{r.energy!r},{r.der!r},{r.jer!r}\n")
        return "".join(lines)


def _row_for(table, dom, threshold, energy):
    for r in table:
        if r.domain == dom and r.threshold == threshold and r.energy == energy:
            return r
    raise KeyError((dom, threshold, energy))


class _RecordingCache:
    """Per-recording scores for every (energy, merge count) visited."""

    def __init__(self, seg, ref, regions, model, vb):
        self.seg, self.ref, self.regions, self.model, self.vb = seg, ref, regions, model, vb
        self.X = prepare(model, seg.vectors)
        self.dendro = {}
        self.results = {}

    def prime(self, energy):
        S, proj = score_matrix(self.model, self.X, energy, return_projection=True)
        self.dendro[energy] = (build_dendrogram(S), proj)

    def score(self, energy, threshold):
        dendro, proj = self.dendro[energy]
        n_merges = dendro.n_merges(threshold)
        key = (energy, n_merges)
        if key not in self.results:
            labels = dendro.cut_after(n_merges).labels
            if self.vb is not None:
                labels = vb_resegment(self.X, labels, self.model, proj, self.vb).labels
            hyp = labels_to_annotation(self.seg, labels)
            comp, jers, _ = score_recording(self.ref, hyp, self.regions)
            self.results[key] = (comp, list(jers.values()))
        return self.results[key]


def _evaluate(caches, grid: SweepGrid, energies, map_fn):
    """DER components per recording for every grid point."""
    jobs = [(rec, e) for rec in sorted(caches) for e in energies]
    list(map_fn(lambda job: caches[job[0]].prime(job[1]), jobs))

    def run(rec):
        c = caches[rec]
        return {(t, e): c.score(e, t) for e in energies for t in grid.thresholds}

    recs = sorted(caches)
    return dict(zip(recs, map_fn(run, recs)))


def _pool(per_rec, recs, point):
    err = tot = 0.0
    jers = []
    for rec in recs:
        comp, j = per_rec[rec][point]
        if comp.total_ref <= 0:
            continue
        err += comp.miss + comp.false_alarm + comp.confusion
        tot += comp.total_ref
        jers.extend(j)
    der = err / tot if tot > 0 else math.nan
    return der, (float(np.mean(jers)) if jers else math.nan), err, tot


def _argmin(rows):
    """Smallest DER; ties go to smaller energy, then smaller threshold."""
    best = min(r.der for r in rows)
    tied = [r for r in rows if r.der <= best + TIE_TOL]
    return min(tied, key=lambda r: (r.energy, r.threshold))


def _domain_rows(dom, per_rec, recs, grid, energies):
    rows = []
    for e in energies:
        for t in grid.thresholds:
            der, jer, err, tot = _pool(per_rec, recs, (t, e))
            rows.append(GridRow(dom, t, e, der, jer, err, tot))
    return rows


def _prepare_caches(recordings, refs, uem, model, vb):
    caches = {}
    for rec, seg in recordings.items():
        if rec not in refs:
            raise ConfigError(f"no reference for dev recording {rec!r}")
        regions = uem.get(rec) if uem else None
        caches[rec] = _RecordingCache(seg, refs[rec], regions, model, vb)
    return caches


def sweep_domain(recordings: dict, refs: dict, uem: dict | None, model: PldaModel,
                 grid: SweepGrid = SweepGrid(), vb: VbConfig | None = None, domain: str = "all",
                 map_fn=map) -> DomainSweep:
    """Exhaustive grid search for one domain; returns the argmin profile and the table."""
    if not recordings:
        raise ConfigError(f"domain {domain!r} has no recordings")
    caches = _prepare_caches(recordings, refs, uem, model, vb)
    per_rec = _evaluate(caches, grid, grid.energies, map_fn)
    rows = _domain_rows(domain, per_rec, sorted(recordings), grid, grid.energies)
    if all(math.isnan(r.der) for r in rows):
        raise ConfigError(f"domain {domain!r} has no scored reference speech")
    best = _argmin(rows)
    return DomainSweep(DomainProfile(domain, best.threshold, best.energy), best.der, rows)


def sweep_all(recordings: dict, domains: dict, refs: dict, uem: dict | None, model: PldaModel,
              grid: SweepGrid = SweepGrid(), vb: VbConfig | None = None, map_fn=map) -> SweepResult:
    """Per-domain sweeps plus a global sweep over the pooled dev set.

    The global sweep yields both the best single profile over all grid
    points and the baseline profile (best threshold at energy 0.30).
    """
    missing = [r for r in recordings if r not in domains]
    if missing:
        raise ConfigError(f"recordings without a domain label: {', '.join(sorted(missing)[:5])}")
    caches = _prepare_caches(recordings, refs, uem, model, vb)
    energies = tuple(sorted(set(grid.energies) | {BASELINE_ENERGY}))
    per_rec = _evaluate(caches, grid, energies, map_fn)

    groups: dict = {}
    for rec in sorted(recordings):
        groups.setdefault(domains[rec], []).append(rec)

    per_domain, m1, table = {}, {}, []
    for dom in sorted(groups):
        rows = _domain_rows(dom, per_rec, groups[dom], grid, energies)
        table.extend(r for r in rows if r.energy in grid.energies)
        on_grid = [r for r in rows if r.energy in grid.energies and not math.isnan(r.der)]
        if not on_grid:
            raise ConfigError(f"domain {dom!r} has no scored reference speech")
        best = _argmin(on_grid)
        per_domain[dom] = DomainSweep(DomainProfile(dom, best.threshold, best.energy), best.der,
                                      [r for r in rows if r.energy in grid.energies])
        b = _argmin([r for r in rows if r.energy == BASELINE_ENERGY and not math.isnan(r.der)])
        m1[dom] = DomainProfile(dom, b.threshold, BASELINE_ENERGY)
        # baseline-energy rows stay available for pooled() even off-grid
        if BASELINE_ENERGY not in grid.energies:
            table.extend(r for r in rows if r.energy == BASELINE_ENERGY)

    all_recs = sorted(recordings)
    g_rows = _domain_rows("__global__", per_rec, all_recs, grid, energies)
    g_best = _argmin([r for r in g_rows if r.energy in grid.energies])
    g_base = _argmin([r for r in g_rows if r.energy == BASELINE_ENERGY])
    return SweepResult(
        per_domain,
        DomainProfile("global", g_best.threshold, g_best.energy),
        g_best.der,
        DomainProfile("global", g_base.threshold, BASELINE_ENERGY),
        g_base.der,
        m1,
        table,
    )


def pooled_for_profile(result: SweepResult, profile: DomainProfile) -> float:
    """Pooled dev DER when every domain uses the same ``profile``."""
    return result.pooled({d: profile for d in result.per_domain})
