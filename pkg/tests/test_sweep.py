import math

import numpy as np
import pytest

from diarkit.errors import ConfigError
from diarkit.formats import SegmentTable
from diarkit.metrics import compute_der
from diarkit.plda import plda_train_em
from diarkit.sweep import (
    BASELINE_ENERGY,
    SweepGrid,
    default_energies,
    diarize_recording,
    labels_to_annotation,
    run_config,
    sweep_all,
    sweep_domain,
)
from diarkit.synth import SynthConfig, generate_corpus

THRESHOLDS = tuple(float(t) for t in np.arange(-20, 21, 2))


@pytest.fixture(scope="module")
def corpus():
    cfg = SynthConfig(n_domains=3, recordings_per_domain=3, dim=6, recording_duration=40.0,
                      domain_noise_range=(0.5, 2.0), seed=3)
    c = generate_corpus(cfg)
    model = plda_train_em(c.segments.vectors, c.segment_speakers, iters=10)
    return c, model


def test_default_grid():
    g = SweepGrid()
    assert BASELINE_ENERGY in g.energies and g.thresholds[0] == -2.0 and g.thresholds[-1] == 2.0
    assert len(g.thresholds) == 41
    assert default_energies()[0] == 0.10 and default_energies()[-1] == 0.95
    with pytest.raises(ConfigError):
        SweepGrid((1.0, 0.0), (0.3,))
    with pytest.raises(ConfigError):
        SweepGrid((0.0,), (1.5,))


def test_one_segment_recording(corpus):
    _, model = corpus
    seg = SegmentTable(["r"], np.array([1.0]), np.array([2.5]), np.zeros((1, model.dim)))
    res = diarize_recording(seg, model, 0.0, 0.3)
    assert [(t.onset, t.duration, t.speaker) for t in res.annotation.turns] == [(1.0, 1.5, "spk0")]


def test_infinite_threshold_singletons(corpus):
    c, model = corpus
    rec = sorted(c.refs)[0]
    seg = c.segments.by_recording()[rec]
    res = diarize_recording(seg, model, math.inf, 0.3)
    assert res.n_clusters == len(seg)


def test_two_speaker_recording_low_der():
    cfg = SynthConfig(n_domains=1, recordings_per_domain=1, speakers_per_recording=(2, 2), dim=8,
                      between_scale=3.0, within_scale=0.2, seed=5)
    c = generate_corpus(cfg)
    train = generate_corpus(SynthConfig(**{**cfg.__dict__, "recordings_per_domain": 40, "seed": 6}))
    model = plda_train_em(train.segments.vectors, train.segment_speakers)
    hyps = run_config(c.segments.by_recording(), model, 0.0, 0.3)
    for rec, ref in c.refs.items():
        assert compute_der(ref, hyps[rec], c.uem[rec]).der < 0.05


def test_labels_to_annotation_merges_and_splits():
    seg = SegmentTable(["r"] * 4, np.array([0.0, 1.0, 1.5, 3.0]), np.array([1.0, 2.0, 3.0, 4.0]), np.zeros((4, 2)))
    ann = labels_to_annotation(seg, [0, 0, 1, 1])
    got = [(t.speaker, t.onset, t.offset) for t in ann.turns]
    assert got == [("spk0", 0.0, 1.75), ("spk1", 1.75, 4.0)]


def test_single_point_grid(corpus):
    c, model = corpus
    recs = c.segments.by_recording()
    res = sweep_domain(recs, c.refs, c.uem, model, SweepGrid((0.5,), (0.4,)))
    assert (res.profile.ahc_threshold, res.profile.pca_energy) == (0.5, 0.4)


def test_sweep_all_structure(corpus):
    c, model = corpus
    grid = SweepGrid(THRESHOLDS, (0.2, 0.3, 0.6, 0.9))
    res = sweep_all(c.segments.by_recording(), c.domains, c.refs, c.uem, model, grid)
    for dom, ds in res.per_domain.items():
        # returned best is the minimum of the emitted table
        assert ds.der == min(r.der for r in ds.table)
        # never worse than the global profile on that domain
        g = [r for r in ds.table if r.threshold == res.global_profile.ahc_threshold
             and r.energy == res.global_profile.pca_energy][0]
        assert ds.der <= g.der + 1e-12
    m2 = res.pooled({d: s.profile for d, s in res.per_domain.items()})
    m1 = res.pooled(res.m1_profiles)
    assert m2 <= res.global_der + 1e-12
    assert m2 <= m1 + 1e-12 <= res.baseline_der + 2e-12
    assert res.global_der <= res.baseline_der + 1e-12
    assert res.baseline_profile.pca_energy == BASELINE_ENERGY
    csv = res.grid_csv().splitlines()
    assert csv[0] == "domain,threshold,energy,der,jer"
    assert len(csv) == 1 + 3 * len(THRESHOLDS) * 4


def test_sweep_deterministic(corpus):
    c, model = corpus
    grid = SweepGrid(THRESHOLDS[::3], (0.3, 0.7))
    a = sweep_all(c.segments.by_recording(), c.domains, c.refs, c.uem, model, grid)
    b = sweep_all(c.segments.by_recording(), c.domains, c.refs, c.uem, model, grid)
    assert a.grid_csv() == b.grid_csv()
    assert a.profiles() == b.profiles()


def test_single_domain_equals_global(corpus):
    c, model = corpus
    recs = {r: s for r, s in c.segments.by_recording().items() if c.domains[r] == "dom00"}
    grid = SweepGrid(THRESHOLDS[::2], (0.3, 0.8))
    res = sweep_all(recs, c.domains, c.refs, c.uem, model, grid)
    ds = res.per_domain["dom00"]
    assert ds.der == res.global_der
    assert ds.profile.ahc_threshold == res.global_profile.ahc_threshold
    assert ds.profile.pca_energy == res.global_profile.pca_energy


def test_empty_domain_raises(corpus):
    _, model = corpus
    with pytest.raises(ConfigError):
        sweep_domain({}, {}, None, model)


def test_missing_domain_label(corpus):
    c, model = corpus
    with pytest.raises(ConfigError):
        sweep_all(c.segments.by_recording(), {}, c.refs, c.uem, model, SweepGrid((0.0,), (0.3,)))


def test_parallel_map_agrees(corpus):
    from diarkit.util import parallel_map

    c, model = corpus
    grid = SweepGrid(THRESHOLDS[::4], (0.3, 0.6))
    a = sweep_all(c.segments.by_recording(), c.domains, c.refs, c.uem, model, grid)
    with parallel_map(4) as pmap:
        b = sweep_all(c.segments.by_recording(), c.domains, c.refs, c.uem, model, grid, map_fn=pmap)
    assert a.grid_csv() == b.grid_csv()
