"""Acoustic domain identification by cosine nearest neighbour over embeddings."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, ValidationError
from .formats import UtteranceTable

__all__ = [
    "cosine_similarity",
    "AdiModel",
    "TrialConfig",
    "AdiReport",
    "adi_fit",
    "adi_predict",
    "adi_benchmark",
]

# Similarities closer than this are treated as tied.
TIE_TOL = 1e-12


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DomainError(f"dimension mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DomainError("cosine similarity of a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / norms


@dataclass(frozen=True)
class AdiModel:
    train_vectors: np.ndarray
    train_labels: tuple
    ids: tuple
    k: int = 1
    _unit: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.train_vectors, dtype=float))
        if len(X) == 0:
            raise ValidationError("ADI model needs at least one training vector")
        if np.any(np.linalg.norm(X, axis=1) == 0):
            raise ValidationError("zero-norm training vector")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        object.__setattr__(self, "train_vectors", X)
        object.__setattr__(self, "_unit", _unit_rows(X))

    @property
    def dim(self) -> int:
        return self.train_vectors.shape[1]

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "dim": self.dim,
            "ids": list(self.ids),
            "labels": list(self.train_labels),
            "vectors": self.train_vectors.tolist(),
        }

    @classmethod
    def from_json(cls, doc) -> "AdiModel":
        try:
            vectors = np.asarray(doc["vectors"], dtype=float)
            return cls(vectors, tuple(doc["labels"]), tuple(doc["ids"]), int(doc.get("k", 1)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed ADI model: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_json()) + "\n"


def adi_fit(table: UtteranceTable, k: int = 1) -> AdiModel:
    """Memorize a labeled utterance table (rows kept in input order)."""
    if table.domains is None or any(not d for d in table.domains):
        raise ValidationError("every training utterance needs a domain label")
    return AdiModel(table.vectors, tuple(table.domains), tuple(table.ids), k)


def _decide(sims, labels, k):
    """Pick a label from one row of similarities; returns (label, similarity)."""
    best = sims.max()
    if k == 1:
        tied = np.flatnonzero(sims >= best - TIE_TOL)
        # smallest label first, then smallest training index
        j = min(tied, key=lambda i: (labels[i], i))
        return labels[j], float(sims[j])
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], labels[i], i))[:k]
    votes = Counter(labels[i] for i in order)
    score = {lab: sum(sims[i] for i in order if labels[i] == lab) for lab in votes}
    lab = min(votes, key=lambda lab: (-votes[lab], -score[lab], lab))
    return lab, float(max(sims[i] for i in order if labels[i] == lab))


def adi_predict(model: AdiModel, query) -> tuple[str, float]:
    q = np.asarray(query, dtype=float).ravel()
    if q.size != model.dim:
        raise DomainError(f"query dimension {q.size} != model dimension {model.dim}")
    nq = np.linalg.norm(q)
    if nq == 0:
        raise DomainError("zero-norm query")
    sims = np.clip(model._unit @ (q / nq), -1.0, 1.0)
    return _decide(sims, model.train_labels, model.k)


def adi_predict_many(model: AdiModel, queries) -> list[tuple[str, float]]:
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    if Q.shape[1] != model.dim:
        raise DomainError(f"query dimension {Q.shape[1]} != model dimension {model.dim}")
    if np.any(np.linalg.norm(Q, axis=1) == 0):
        raise DomainError("zero-norm query")
    S = np.clip(_unit_rows(Q) @ model._unit.T, -1.0, 1.0)
    return [_decide(row, model.train_labels, model.k) for row in S]


@dataclass(frozen=True)
class TrialConfig:
    n_train: int
    n_trials: int = 1000
    seed: int = 0
    require_all_domains_in_train: bool = False
    k: int = 1
    max_redraws: int = 1000


@dataclass
class AdiReport:
    mean_accuracy: float
    per_domain_accuracy: dict
    per_domain_n_test: dict
    confusion: dict
    n_trials: int
    n_train: int
    n_test: int
    trial_accuracy: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": float(np.std(self.trial_accuracy)) if self.trial_accuracy else 0.0,
            "n_trials": self.n_trials,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "per_domain_accuracy": dict(sorted(self.per_domain_accuracy.items())),
            "per_domain_n_test": dict(sorted(self.per_domain_n_test.items())),
            "confusion": [
                {"true": t, "predicted": p, "count": c} for (t, p), c in sorted(self.confusion.items())
            ],
        }

    def per_domain_csv(self) -> str:
        lines = ["domain,accuracy,n_test\n"]
        for dom in sorted(self.per_domain_n_test):
            acc = self.per_domain_accuracy.get(dom)
            lines.append(f"{dom},{'' if acc is None else repr(acc)},{self.per_domain_n_test[dom]}\n")
        return "".join(lines)


def _trial_split(n, cfg: TrialConfig, t: int, labels, all_domains):
    rng = np.random.default_rng([cfg.seed, t])
    for _ in range(cfg.max_redraws):
        perm = rng.permutation(n)
        train = np.sort(perm[: cfg.n_train])
        if not cfg.require_all_domains_in_train:
            return train
        missing = all_domains - {labels[i] for i in train}
        if not missing:
            return train
    raise ConfigError(
        f"could not place every domain in the training split after {cfg.max_redraws} draws; "
        f"unsatisfiable domain(s): {', '.join(sorted(missing))}"
    )


def run_trial(table: UtteranceTable, cfg: TrialConfig, t: int):
    """One random split; returns (accuracy, list of (true, predicted))."""
    labels = table.domains
    n = len(table)
    train = _trial_split(n, cfg, t, labels, set(labels))
    mask = np.ones(n, dtype=bool)
    mask[train] = False
    test = np.flatnonzero(mask)
    model = AdiModel(
        table.vectors[train], tuple(labels[i] for i in train), tuple(table.ids[i] for i in train), cfg.k
    )
    preds = adi_predict_many(model, table.vectors[test])
    pairs = [(labels[i], p) for i, (p, _) in zip(test, preds)]
    acc = sum(a == b for a, b in pairs) / len(pairs)
    return acc, pairs


def adi_benchmark(table: UtteranceTable, cfg: TrialConfig, map_fn=map) -> AdiReport:
    """Repeated random train/test split benchmark.

    Each trial draws its split from an RNG seeded by ``(seed, trial)``, so
    the report does not depend on the order in which ``map_fn`` runs trials.
    """
    if table.domains is None:
        raise ValidationError("benchmark table needs domain labels")
    n = len(table)
    if not 0 < cfg.n_train < n:
        raise ConfigError(f"n_train must satisfy 0 < n_train < {n}, got {cfg.n_train}")
    if cfg.n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    if np.any(np.linalg.norm(table.vectors, axis=1) == 0):
        raise ValidationError("zero-norm embedding in benchmark table")

    results = list(map_fn(lambda t: run_trial(table, cfg, t), range(cfg.n_trials)))
    confusion: Counter = Counter()
    for _, pairs in results:
        confusion.update(pairs)
    n_test_dom: Counter = Counter()
    correct_dom: Counter = Counter()
    for (true, pred), c in confusion.items():
        n_test_dom[true] += c
        if true == pred:
            correct_dom[true] += c
    per_domain = {d: correct_dom[d] / n_test_dom[d] for d in sorted(n_test_dom)}
    # absent domains (never in a test split) are reported with n_test = 0
    n_test_all = {d: n_test_dom.get(d, 0) for d in sorted(set(table.domains))}
    trial_acc = [acc for acc, _ in results]
    return AdiReport(
        mean_accuracy=float(np.mean(trial_acc)),
        per_domain_accuracy=per_domain,
        per_domain_n_test=n_test_all,
        confusion=dict(sorted(confusion.items())),
        n_trials=cfg.n_trials,
        n_train=cfg.n_train,
        n_test=n - cfg.n_train,
        trial_accuracy=trial_acc,
    )
