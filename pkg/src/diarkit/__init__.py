"""Domain-aware speaker diarization backend.

Cosine nearest-neighbour acoustic domain identification, two-covariance
PLDA scoring with recording-dependent PCA, average-linkage AHC, VB-HMM
resegmentation, DER/JER scoring and per-domain parameter sweeps.
"""

__version__ = "0.1.0"

from .adi import AdiModel, TrialConfig, adi_benchmark, adi_fit, adi_predict, cosine_similarity
from .clustering import ahc_cluster
from .formats import (
    Annotation,
    DomainProfile,
    ProfileSet,
    ScoringRegions,
    SegmentTable,
    Turn,
    UtteranceTable,
    parse_embeddings,
    parse_rttm,
    parse_uem,
    read_profiles,
    write_embeddings,
    write_profiles,
    write_rttm,
    write_uem,
)
from .metrics import compute_der, compute_jer, optimal_mapping, score_report
from .plda import (
    AdaptationConfig,
    PcaProjection,
    PldaModel,
    plda_adapt,
    plda_score_pair,
    plda_train_em,
    project_model,
    recording_pca,
    score_matrix,
)
from .reseg import VbConfig, forward_backward, vb_resegment
from .sweep import SweepGrid, run_config, sweep_all, sweep_domain
from .synth import SynthConfig, generate_corpus
