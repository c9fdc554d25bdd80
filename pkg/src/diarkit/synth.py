"""Deterministic synthetic diarization corpora.

Embeddings follow ``x = mu_domain + y_speaker + e``, the same structure the
PLDA backend models, so every stage of the pipeline can be exercised with
known ground truth.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .formats import Annotation, ScoringRegions, SegmentTable, Turn, UtteranceTable

__all__ = ["SynthConfig", "SynthCorpus", "generate_corpus", "SPLITS"]

SPLITS = ("dev", "eval")
# turn boundaries are quantised to this grid (seconds)
TIME_GRID = 0.01


@dataclass(frozen=True)
class SynthConfig:
    n_domains: int = 3
    recordings_per_domain: int = 8
    speakers_per_recording: tuple = (2, 4)
    dim: int = 16
    domain_spread: float = 3.0
    between_scale: float = 1.0
    within_scale: float = 0.4
    turn_duration: tuple = (2.0, 8.0)
    recording_duration: float = 60.0
    subsegment_hop: float = 1.0
    seed: int = 0
    # per-domain multiplier range for within_scale; (1, 1) keeps all domains alike
    domain_noise_range: tuple = (1.0, 1.0)
    overlap_fraction: float = 0.0
    # total recordings per split, distributed round-robin over domains (overrides recordings_per_domain)
    n_recordings: int | None = None

    def validate(self):
        counts = [self.n_domains, self.recordings_per_domain, self.dim]
        if any(int(c) < 1 for c in counts):
            raise ConfigError("n_domains, recordings_per_domain and dim must be >= 1")
        if self.n_recordings is not None and self.n_recordings < 1:
            raise ConfigError("n_recordings must be >= 1")
        lo, hi = self.speakers_per_recording
        if not 1 <= lo <= hi:
            raise ConfigError("speakers_per_recording must satisfy 1 <= min <= max")
        tlo, thi = self.turn_duration
        if not 0 < tlo <= thi:
            raise ConfigError("turn_duration must satisfy 0 < min <= max")
        if not 0 < self.subsegment_hop <= tlo:
            raise ConfigError(
                f"subsegment_hop {self.subsegment_hop} must lie in (0, min turn duration {tlo}]"
            )
        if self.recording_duration <= 0:
            raise ConfigError("recording_duration must be > 0")
        if self.domain_spread < 0 or self.between_scale <= 0 or self.within_scale <= 0:
            raise ConfigError("scales must be > 0 (domain_spread >= 0)")
        nlo, nhi = self.domain_noise_range
        if not 0 < nlo <= nhi:
            raise ConfigError("domain_noise_range must satisfy 0 < min <= max")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ConfigError("overlap_fraction must lie in [0, 1]")

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class SynthCorpus:
    utterances: UtteranceTable
    segments: SegmentTable
    refs: dict
    uem: dict
    segment_speakers: list
    domains: dict
    truth: list = field(default_factory=list)  # (recording_id, domain, n_speakers)

    def truth_csv(self) -> str:
        return "recording_id,domain,n_speakers\n" + "".join(f"{r},{d},{n}\n" for r, d, n in self.truth)


def domain_names(n):
    return [f"dom{i:02d}" for i in range(n)]


def _domain_params(cfg: SynthConfig):
    rng = np.random.default_rng([cfg.seed, 0])
    means = rng.normal(0.0, cfg.domain_spread, size=(cfg.n_domains, cfg.dim))
    lo, hi = cfg.domain_noise_range
    noise = np.exp(rng.uniform(np.log(lo), np.log(hi), size=cfg.n_domains))
    return means, noise


def _quantise(x):
    return round(round(x / TIME_GRID) * TIME_GRID, 6)


def _recording(cfg, rng, rec, mean, within):
    lo, hi = cfg.speakers_per_recording
    n_spk = int(rng.integers(lo, hi + 1))
    latents = rng.normal(0.0, cfg.between_scale, size=(n_spk, cfg.dim))
    tlo, thi = cfg.turn_duration

    turns = []  # (onset, offset, speaker index)
    t = 0.0
    spk = int(rng.integers(n_spk))
    while t < cfg.recording_duration - 1e-9:
        end = min(_quantise(t + rng.uniform(tlo, thi)), cfg.recording_duration)
        if end <= t:
            end = min(t + TIME_GRID, cfg.recording_duration)
        turns.append((t, end, spk))
        t = end
        if n_spk > 1:
            spk = int((spk + rng.integers(1, n_spk)) % n_spk)

    names = [f"{rec}_spk{j}" for j in range(n_spk)]
    ref_turns = []
    seg_on, seg_off, seg_spk = [], [], []
    for a, b, s in turns:
        ref_turns.append(Turn(rec, a, round(b - a, 6), names[s]))
        n_sub = math.ceil((b - a) / cfg.subsegment_hop - 1e-9)
        for k in range(n_sub):
            on = a + k * cfg.subsegment_hop
            seg_on.append(on)
            seg_off.append(min(on + cfg.subsegment_hop, b))
            seg_spk.append(s)
        if n_spk > 1 and cfg.overlap_fraction > 0 and rng.uniform() < cfg.overlap_fraction:
            other = int((s + rng.integers(1, n_spk)) % n_spk)
            third = _quantise((b - a) / 3)
            if third > 0:
                ref_turns.append(Turn(rec, round(a + third, 6), third, names[other]))
    seg_spk = np.asarray(seg_spk, dtype=int)
    noise = rng.normal(0.0, cfg.within_scale * within, size=(len(seg_spk), cfg.dim))
    vectors = mean + latents[seg_spk] + noise
    segs = SegmentTable([rec] * len(seg_spk), np.array(seg_on), np.array(seg_off), vectors)
    speakers_used = sorted({names[s] for s in seg_spk})
    return segs, Annotation(rec, tuple(ref_turns)), [names[s] for s in seg_spk], len(speakers_used)


def generate_corpus(cfg: SynthConfig, split: str = "dev") -> SynthCorpus:
    """Generate one split of a corpus. Splits share domain means, nothing else."""
    cfg.validate()
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}; expected one of {SPLITS}")
    means, noise = _domain_params(cfg)
    names = domain_names(cfg.n_domains)
    if cfg.n_recordings is not None:
        per_dom = [0] * cfg.n_domains
        for i in range(cfg.n_recordings):
            per_dom[i % cfg.n_domains] += 1
    else:
        per_dom = [cfg.recordings_per_domain] * cfg.n_domains

    seg_tables, refs, uem, seg_spk, domains, truth = [], {}, {}, [], {}, []
    utt_ids, utt_vecs, utt_doms = [], [], []
    split_idx = SPLITS.index(split) + 1
    for d, dom in enumerate(names):
        for i in range(per_dom[d]):
            rec = f"{split}_{dom}_{i:03d}"
            rng = np.random.default_rng([cfg.seed, split_idx, d, i])
            segs, ann, spk, n_spk = _recording(cfg, rng, rec, means[d], noise[d])
            seg_tables.append(segs)
            refs[rec] = ann
            uem[rec] = ScoringRegions(rec, ((0.0, float(cfg.recording_duration)),))
            seg_spk.extend(spk)
            domains[rec] = dom
            truth.append((rec, dom, n_spk))
            utt_ids.append(rec)
            utt_vecs.append(segs.vectors.mean(axis=0))
            utt_doms.append(dom)
    return SynthCorpus(
        UtteranceTable(utt_ids, np.array(utt_vecs), utt_doms),
        SegmentTable.concat(seg_tables),
        refs,
        uem,
        seg_spk,
        domains,
        truth,
    )
