"""Two-covariance PLDA backend.

Model: ``x = mu + y + e`` with speaker variable ``y ~ N(0, sigma_b)`` and
residual ``e ~ N(0, sigma_w)``. Provides EM training, unsupervised
adaptation on pooled out-of-domain data, per-recording PCA and
same/different-speaker log-likelihood-ratio scoring.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, DomainError, NumericalError, TrainingError, ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "PldaModel",
    "PcaProjection",
    "AdaptationConfig",
    "plda_train_em",
    "plda_loglik",
    "plda_adapt",
    "recording_pca",
    "project_model",
    "plda_score_pair",
    "score_matrix",
    "length_normalize",
    "prepare",
]

SYM_TOL = 1e-10
MIN_EIG = 1e-12
JITTER = 1e-8


def _symmetrize(M):
    return 0.5 * (M + M.T)


def _jitter(M, name, scale=None):
    """Add ``1e-8 * trace/D`` (at least 1e-11) to the diagonal when M is numerically singular."""
    M = _symmetrize(M)
    w = np.linalg.eigvalsh(M)
    if w[0] >= MIN_EIG:
        return M
    d = len(M)
    tr = np.trace(M) if np.trace(M) > 0 else (scale if scale else 1.0)
    # floor keeps a collapsed matrix (trace ~ 0) invertible
    eps = max(JITTER * tr / d, 10 * MIN_EIG)
    logger.info("jitter %.3g added to %s (min eigenvalue %.3g)", eps, name, w[0])
    M = M + eps * np.eye(d)
    if np.linalg.eigvalsh(M)[0] < MIN_EIG:
        # eigenvalues that are negative beyond the jitter are not a rounding issue
        raise NumericalError(f"{name} is not positive semi-definite (min eigenvalue {w[0]:.3g})")
    return M


@dataclass(frozen=True)
class PldaModel:
    mu: np.ndarray
    sigma_b: np.ndarray
    sigma_w: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)
    # optional embedding preprocessing: {"center": [...], "length_norm": bool}
    preprocess: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sb = np.atleast_2d(np.asarray(self.sigma_b, dtype=float))
        sw = np.atleast_2d(np.asarray(self.sigma_w, dtype=float))
        d = mu.size
        if sb.shape != (d, d) or sw.shape != (d, d):
            raise ValidationError(f"inconsistent PLDA dimensions: mu {d}, sigma_b {sb.shape}, sigma_w {sw.shape}")
        for name, M in (("sigma_b", sb), ("sigma_w", sw)):
            if not np.all(np.isfinite(M)):
                raise ValidationError(f"{name} has non-finite entries")
            if np.max(np.abs(M - M.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(M))):
                raise ValidationError(f"{name} is not symmetric")
        sb = _symmetrize(sb)
        if d and np.linalg.eigvalsh(sb)[0] < -1e-9 * max(1.0, np.trace(sb)):
            raise ValidationError("sigma_b is not positive semi-definite")
        sw = _jitter(sw, "sigma_w", scale=np.trace(sb)) if d else sw
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_b", sb)
        object.__setattr__(self, "sigma_w", sw)

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def sigma_t(self) -> np.ndarray:
        return self.sigma_b + self.sigma_w

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "mu": self.mu.tolist(),
            "sigma_b": self.sigma_b.tolist(),
            "sigma_w": self.sigma_w.tolist(),
            "preprocess": self.preprocess,
            "metadata": self.metadata,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"

    @classmethod
    def from_json(cls, doc) -> "PldaModel":
        try:
            model = cls(
                np.asarray(doc["mu"], dtype=float),
                np.asarray(doc["sigma_b"], dtype=float),
                np.asarray(doc["sigma_w"], dtype=float),
                dict(doc.get("metadata") or {}),
                doc.get("preprocess"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed PLDA model: {exc}") from None
        if "dim" in doc and int(doc["dim"]) != model.dim:
            raise ValidationError(f"declared dim {doc['dim']} != actual {model.dim}")
        return model


def data_digest(X) -> str:
    return hashlib.sha256(np.ascontiguousarray(X, dtype=float).tobytes()).hexdigest()[:16]


# ------------------------------------------------------------ preprocessing


def length_normalize(X, center=None):
    """Center (optional) and scale every row to norm sqrt(D)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if center is not None:
        X = X - np.asarray(center, dtype=float)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return X * (np.sqrt(X.shape[1]) / norms)


def prepare(model: PldaModel, X):
    """Apply the preprocessing recorded in ``model.preprocess`` to raw embeddings."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pp = model.preprocess
    if not pp:
        return X
    center = pp.get("center")
    if pp.get("length_norm", False):
        return length_normalize(X, center)
    return X - np.asarray(center, dtype=float) if center is not None else X


# ---------------------------------------------------------------- training


def _group(X, labels):
    labels = list(labels)
    if len(labels) != len(X):
        raise TrainingError("labels and embeddings differ in length")
    index: dict = {}
    for i, lab in enumerate(labels):
        index.setdefault(lab, []).append(i)
    return [np.asarray(rows) for rows in index.values()]


def _speaker_stats(X, groups):
    counts = np.array([len(g) for g in groups])
    means = np.array([X[g].mean(axis=0) for g in groups])
    scatter = sum(((X[g] - m).T @ (X[g] - m) for g, m in zip(groups, means)), np.zeros((X.shape[1],) * 2))
    return counts, means, scatter


def _loglik(mu, sb, sw, counts, means, scatter):
    """Exact marginal log-likelihood of all data under the two-covariance model."""
    d = len(mu)
    n_tot = counts.sum()
    sw_c = linalg.cho_factor(sw, lower=True)
    logdet_w = 2 * np.sum(np.log(np.diag(sw_c[0])))
    ll = -0.5 * (n_tot - len(counts)) * (d * np.log(2 * np.pi) + logdet_w)
    ll -= 0.5 * np.trace(linalg.cho_solve(sw_c, scatter))
    for n in np.unique(counts):
        sel = counts == n
        C = sb + sw / n
        c_f = linalg.cho_factor(C, lower=True)
        diff = means[sel] - mu
        maha = np.sum(diff * linalg.cho_solve(c_f, diff.T).T, axis=1)
        logdet = 2 * np.sum(np.log(np.diag(c_f[0])))
        k = sel.sum()
        ll -= 0.5 * (k * (d * np.log(2 * np.pi) + logdet + d * np.log(n)) + maha.sum())
    return float(ll)


def plda_loglik(model: PldaModel, X, labels) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    counts, means, scatter = _speaker_stats(X, _group(X, labels))
    return _loglik(model.mu, model.sigma_b, model.sigma_w, counts, means, scatter)


def plda_train_em(X, labels, iters: int = 10, return_trace: bool = False):
    """Maximum-likelihood two-covariance PLDA by EM.

    The mean is fixed to the global data mean; ``sigma_b`` and ``sigma_w``
    are re-estimated ``iters`` times from the posterior of every speaker
    variable. With ``return_trace`` the per-iteration log-likelihoods (the
    first entry is the initialisation) are returned as well.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise TrainingError("non-finite training embeddings")
    groups = _group(X, labels)
    if len(groups) < 2:
        raise TrainingError("PLDA training needs at least two speakers")
    n_tot, d = X.shape
    if n_tot <= d:
        logger.warning("PLDA training with N=%d <= D=%d samples", n_tot, d)
    counts, means, scatter = _speaker_stats(X, groups)
    mu = X.mean(axis=0)
    total_scale = np.trace(np.cov(X.T, bias=True).reshape(d, d)) or 1.0

    # initialise from pooled within-class scatter and spread of speaker means
    if n_tot > len(groups):
        sw = scatter / (n_tot - len(groups))
    else:
        sw = 0.5 * np.cov(X.T, bias=True).reshape(d, d)
    diff = means - mu
    sb = diff.T @ diff / len(groups)
    sw = _jitter(sw, "sigma_w", scale=total_scale)
    sb = _jitter(sb, "sigma_b", scale=total_scale)

    trace = []
    try:
        trace.append(_loglik(mu, sb, sw, counts, means, scatter))
        for _ in range(iters):
            acc_b = np.zeros((d, d))
            acc_w = scatter.copy()
            for n in np.unique(counts):
                sel = counts == n
                # posterior of y given the speaker mean: gain G = sb (sb + sw/n)^-1
                G = linalg.solve(sb + sw / n, sb, assume_a="pos").T
                C = _symmetrize(sb - G @ sb)
                m = (means[sel] - mu) @ G.T
                r = means[sel] - mu - m
                k = sel.sum()
                acc_b += k * C + m.T @ m
                acc_w += n * (k * C + r.T @ r)
            sb = _jitter(acc_b / len(groups), "sigma_b", scale=total_scale)
            sw = _jitter(acc_w / n_tot, "sigma_w", scale=total_scale)
            trace.append(_loglik(mu, sb, sw, counts, means, scatter))
    except (linalg.LinAlgError, ValueError) as exc:
        raise TrainingError(f"singular PLDA accumulators ({exc}); consider adding jitter") from None

    model = PldaModel(
        mu, sb, sw, metadata={"n_train": int(n_tot), "n_speakers": len(groups), "em_iters": iters,
                              "train_hash": data_digest(X)}
    )
    return (model, trace) if return_trace else model


# --------------------------------------------------------------- adaptation


@dataclass(frozen=True)
class AdaptationConfig:
    within_share: float = 0.75
    between_share: float = 0.25

    def __post_init__(self):
        if self.within_share < 0 or self.between_share < 0 or abs(self.within_share + self.between_share - 1) > 1e-12:
            raise ConfigError("within_share and between_share must be >= 0 and sum to 1")


def _sqrt_and_isqrt(T):
    w, V = np.linalg.eigh(T)
    if w[0] <= MIN_EIG:
        raise NumericalError(f"total covariance is singular (min eigenvalue {w[0]:.3g})")
    return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T


def plda_adapt(model: PldaModel, pooled, cfg: AdaptationConfig = AdaptationConfig()) -> PldaModel:
    """Unsupervised adaptation on pooled data.

    In coordinates whitened by the model's total covariance, every direction
    where the pooled data has variance lambda > 1 receives the excess
    ``lambda - 1``: ``within_share`` of it goes to ``sigma_w``, the rest to
    ``sigma_b``. Variance is measured around the model mean.
    """
    X = np.atleast_2d(np.asarray(pooled, dtype=float))
    m, d = X.shape
    if d != model.dim:
        raise DomainError(f"pooled dimension {d} != model dimension {model.dim}")
    if m < d + 1:
        raise ConfigError(f"adaptation needs at least D+1={d + 1} vectors, got {m}")
    root, iroot = _sqrt_and_isqrt(model.sigma_t)
    Xc = X - model.mu
    cov = Xc.T @ Xc / m
    lam, V = np.linalg.eigh(_symmetrize(iroot @ cov @ iroot))
    excess = np.clip(lam - 1.0, 0.0, None)
    E = _symmetrize(root @ ((V * excess) @ V.T) @ root)
    meta = dict(model.metadata)
    meta["adaptation"] = {
        "within_share": cfg.within_share,
        "between_share": cfg.between_share,
        "n_pooled": int(m),
        "pooled_hash": data_digest(X),
        "n_directions": int(np.sum(excess > 0)),
    }
    return PldaModel(
        model.mu,
        model.sigma_b + cfg.between_share * E,
        model.sigma_w + cfg.within_share * E,
        meta,
        model.preprocess,
    )


# ---------------------------------------------------------------------- PCA


@dataclass(frozen=True)
class PcaProjection:
    basis: np.ndarray
    retained_fraction: float
    degenerate: bool = False

    @property
    def k(self) -> int:
        return self.basis.shape[0]

    def apply(self, X):
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.basis.T


def recording_pca(segments, energy: float = 0.30) -> PcaProjection:
    """PCA on one recording's segments keeping the smallest k reaching ``energy``."""
    X = np.atleast_2d(np.asarray(segments, dtype=float))
    if not 0.0 < energy <= 1.0:
        raise ConfigError(f"energy must lie in (0, 1], got {energy}")
    n, d = X.shape
    if n < 2:
        return PcaProjection(np.eye(d)[: min(1, d)], 1.0, degenerate=True)
    Xc = X - X.mean(axis=0)
    w, V = np.linalg.eigh(Xc.T @ Xc / (n - 1))
    w, V = w[::-1].clip(min=0.0), V[:, ::-1]
    total = w.sum()
    if total <= 0:
        return PcaProjection(V[:, :1].T.copy(), 1.0, degenerate=True)
    frac = np.cumsum(w) / total
    k = int(np.searchsorted(frac, energy - 1e-12 * energy) + 1)
    k = min(max(k, 1), d)
    return PcaProjection(np.ascontiguousarray(V[:, :k].T), float(frac[k - 1]))


def project_model(model: PldaModel, proj: PcaProjection) -> PldaModel:
    B = proj.basis
    if B.shape[1] != model.dim:
        raise DomainError(f"projection input dimension {B.shape[1]} != model dimension {model.dim}")
    return PldaModel(
        B @ model.mu, _symmetrize(B @ model.sigma_b @ B.T), _symmetrize(B @ model.sigma_w @ B.T),
        model.metadata, None,
    )


# ------------------------------------------------------------------ scoring


def diagonalize(model: PldaModel):
    """Return (A, phi) with ``A.T @ sigma_w @ A = I`` and ``A.T @ sigma_b @ A = diag(phi)``."""
    L = np.linalg.cholesky(model.sigma_w)
    Linv = linalg.solve_triangular(L, np.eye(model.dim), lower=True)
    phi, U = np.linalg.eigh(_symmetrize(Linv @ model.sigma_b @ Linv.T))
    return Linv.T @ U, np.clip(phi, 0.0, None)


def _llr_terms(phi):
    q = 1.0 / (1.0 + phi) - (1.0 + phi) / (1.0 + 2.0 * phi)
    p = phi / (1.0 + 2.0 * phi)
    const = 0.5 * np.sum(2.0 * np.log1p(phi) - np.log1p(2.0 * phi))
    return q, p, const


def plda_score_pair(model: PldaModel, x1, x2) -> float:
    """Same-speaker vs different-speaker log-likelihood ratio for one pair."""
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.size != model.dim or x2.size != model.dim:
        raise DomainError(f"vector dimension does not match model dimension {model.dim}")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise DomainError("non-finite input to PLDA scoring")
    A, phi = diagonalize(model)
    q, p, const = _llr_terms(phi)
    y1 = (x1 - model.mu) @ A
    y2 = (x2 - model.mu) @ A
    return float(0.5 * (np.sum(q * y1 * y1) + np.sum(q * y2 * y2)) + np.sum(p * (y1 * y2)) + const)


def score_all(model: PldaModel, X) -> np.ndarray:
    """Full pairwise LLR matrix (no PCA); exactly symmetric, diagonal = +inf."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise DomainError("non-finite input to PLDA scoring")
    A, phi = diagonalize(model)
    q, p, const = _llr_terms(phi)
    Y = (X - model.mu) @ A
    self_term = 0.5 * np.sum(q * Y * Y, axis=1)
    S = self_term[:, None] + self_term[None, :] + (Y * p) @ Y.T + const
    S = np.triu(S, 1)
    S = S + S.T
    np.fill_diagonal(S, np.inf)
    return S


def score_matrix(model: PldaModel, segments, energy: float = 0.30, return_projection: bool = False):
    """Recording-dependent PCA followed by pairwise PLDA scoring."""
    X = np.atleast_2d(np.asarray(segments, dtype=float))
    if X.shape[1] != model.dim:
        raise DomainError(f"segment dimension {X.shape[1]} != model dimension {model.dim}")
    proj = recording_pca(X, energy)
    S = score_all(project_model(model, proj), proj.apply(X))
    return (S, proj) if return_projection else S
