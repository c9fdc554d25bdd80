"""
First-pass AHC and VB-HMM resegmentation
========================================

Cluster one synthetic recording with average-linkage AHC on PLDA scores,
then refine the labels with the VB-HMM and compare DER.
"""

import numpy as np

from diarkit.clustering import ahc_cluster
from diarkit.metrics import compute_der
from diarkit.plda import plda_train_em, prepare, score_matrix
from diarkit.reseg import VbConfig, vb_resegment
from diarkit.sweep import labels_to_annotation
from diarkit.synth import SynthConfig, generate_corpus

cfg = SynthConfig(n_domains=1, recordings_per_domain=30, dim=8, within_scale=0.6, seed=1)
corpus = generate_corpus(cfg)
model = plda_train_em(corpus.segments.vectors, corpus.segment_speakers)

rec = sorted(corpus.refs)[0]
seg = corpus.segments.by_recording()[rec]
X = prepare(model, seg.vectors)
S = score_matrix(model, X, energy=0.9)

# raising the threshold never merges more
for thr in (-10, -2, 0, 2, 10):
    print(f"threshold {thr:+d}: {ahc_cluster(S, thr).n_clusters} clusters")

first = ahc_cluster(S, 0.0)
hyp = labels_to_annotation(seg, first.labels)
print(f"first pass: {first.n_clusters} speakers, DER {compute_der(corpus.refs[rec], hyp).der:.3f}")

res = vb_resegment(X, first.labels, model, cfg=VbConfig())
hyp = labels_to_annotation(seg, res.labels)
print(f"after VB-HMM: DER {compute_der(corpus.refs[rec], hyp).der:.3f}")
print("ELBO trace:", np.round(res.elbo_trace, 2))
