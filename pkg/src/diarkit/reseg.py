"""VB-HMM resegmentation of a first-pass diarization.

Sub-segment embeddings are modelled in the (PCA-projected) PLDA space: each
speaker s has a latent ``y_s ~ N(0, sigma_b)`` and emits
``x_t ~ N(mu + y_s, sigma_w)``; the speaker sequence is a Markov chain that
stays with probability ``loop_probability`` and otherwise switches uniformly.
Working in the basis where ``sigma_w = I`` and ``sigma_b = diag(phi)``, the
variational updates have closed form (same algebra as VBx, with a fixed
transition matrix and no speaker-prior re-estimation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, NumericalError, ValidationError
from .plda import PcaProjection, PldaModel, diagonalize, project_model

__all__ = ["VbConfig", "VbResult", "forward_backward", "vb_resegment"]

ELBO_SLACK = 1e-6


@dataclass(frozen=True)
class VbConfig:
    loop_probability: float = 0.9
    ll_scale: float = 0.3
    max_iters: int = 10
    elbo_tol: float = 1e-4
    min_speaker_posterior: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.loop_probability < 1.0:
            raise ConfigError("loop_probability must lie in (0, 1)")
        if not self.ll_scale > 0:
            raise ConfigError("ll_scale must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not 0.0 <= self.min_speaker_posterior < 1.0:
            raise ConfigError("min_speaker_posterior must lie in [0, 1)")


@dataclass
class VbResult:
    labels: np.ndarray
    posteriors: np.ndarray
    elbo_trace: list = field(default_factory=list)
    kept_speakers: tuple = ()


def _propagate(a, loop, S):
    """log sum_j exp(a_j) P(j -> k) for every k, using the stay/switch structure."""
    m = a.max()
    p = np.exp(a - m)
    if S == 1:
        return a
    switch = (1.0 - loop) / (S - 1)
    with np.errstate(divide="ignore"):
        return m + np.log(loop * p + switch * (p.sum() - p))


def forward_backward(log_emissions, loop_probability: float):
    """Exact state posteriors of the stay/switch HMM with uniform start.

    Returns ``(posteriors, log_evidence)``; all recursions are in log space.
    The transition matrix is ``loop`` on the diagonal and ``(1-loop)/(S-1)``
    elsewhere, so each step costs O(S) instead of O(S^2).
    """
    lls = np.atleast_2d(np.asarray(log_emissions, dtype=float))
    if not np.all(np.isfinite(lls)):
        raise NumericalError("non-finite log-emission")
    T, S = lls.shape
    if S < 1:
        raise ValidationError("forward_backward needs at least one state")
    lfw = np.empty_like(lls)
    lbw = np.empty_like(lls)
    lfw[0] = lls[0] - np.log(S)
    for t in range(1, T):
        lfw[t] = lls[t] + _propagate(lfw[t - 1], loop_probability, S)
    lbw[-1] = 0.0
    # the transition matrix is symmetric, so the backward pass reuses _propagate
    for t in range(T - 2, -1, -1):
        lbw[t] = _propagate(lls[t + 1] + lbw[t + 1], loop_probability, S)
    log_evidence = float(logsumexp(lfw[-1]))
    post = np.exp(lfw + lbw - log_evidence)
    post /= post.sum(axis=1, keepdims=True)
    return post, log_evidence


def _speaker_posteriors(gamma, rho, phi, ll_scale):
    """q(z_s) = N(alpha_s, diag(inv_l_s)) for the whitened speaker variables."""
    counts = gamma.sum(axis=0)[:, None]  # S x 1
    inv_l = 1.0 / (1.0 + ll_scale * counts * phi[None, :])
    alpha = ll_scale * inv_l * (gamma.T @ rho)
    return alpha, inv_l


def _expected_loglik(rho, G, alpha, inv_l, phi, ll_scale):
    return ll_scale * (rho @ alpha.T - 0.5 * (inv_l + alpha**2) @ phi + G)


def vb_resegment(segments, init_labels, model: PldaModel, proj: PcaProjection | None = None,
                 cfg: VbConfig = VbConfig()) -> VbResult:
    """Refine per-segment speaker labels with a variational Bayes HMM.

    ``segments`` are raw (T x D) embeddings in time order; they are mapped
    with ``proj`` (if given) and the model is projected the same way.
    """
    X = np.atleast_2d(np.asarray(segments, dtype=float))
    init = np.asarray(init_labels, dtype=int).ravel()
    if len(init) != len(X):
        raise ValidationError("init_labels length differs from number of segments")
    if len(X) == 0:
        raise ValidationError("resegmentation needs at least one segment")
    if init.min() < 0:
        raise ValidationError("speaker indices must be non-negative")
    S = int(init.max()) + 1
    if S == 0:
        raise ValidationError("no speakers in initial labels")
    if proj is not None:
        model = project_model(model, proj)
        X = proj.apply(X)
    T = len(X)
    A, phi = diagonalize(model)
    Y = (X - model.mu) @ A  # sigma_w -> I, sigma_b -> diag(phi)
    V = np.sqrt(phi)
    rho = Y * V
    G = -0.5 * (np.sum(Y**2, axis=1, keepdims=True) + Y.shape[1] * np.log(2 * np.pi))

    gamma = np.zeros((T, S))
    gamma[np.arange(T), init] = 1.0
    elbo_trace: list[float] = []
    for it in range(cfg.max_iters):
        alpha, inv_l = _speaker_posteriors(gamma, rho, phi, cfg.ll_scale)
        log_p = _expected_loglik(rho, G, alpha, inv_l, phi, cfg.ll_scale)
        if not np.all(np.isfinite(log_p)):
            raise NumericalError(f"non-finite emission at VB iteration {it}")
        gamma, log_px = forward_backward(log_p, cfg.loop_probability)
        elbo = log_px + 0.5 * np.sum(np.log(inv_l) - inv_l - alpha**2 + 1.0)
        if elbo_trace and elbo < elbo_trace[-1] - ELBO_SLACK * max(1.0, abs(elbo)):
            raise NumericalError(f"ELBO decreased at VB iteration {it}: {elbo_trace[-1]:.10g} -> {elbo:.10g}")
        elbo_trace.append(float(elbo))
        if it > 0 and elbo - elbo_trace[-2] < cfg.elbo_tol:
            break

    # prune weak speakers once, then a final E-step over the survivors
    mass = gamma.sum(axis=0)
    keep = np.flatnonzero(mass >= cfg.min_speaker_posterior * T)
    if len(keep) == 0:
        keep = np.array([int(np.argmax(mass))])
    if len(keep) < S:
        log_p_k = _expected_loglik(rho, G, alpha[keep], inv_l[keep], phi, cfg.ll_scale)
        g_k, _ = forward_backward(log_p_k, cfg.loop_probability)
        gamma = np.zeros((T, S))
        gamma[:, keep] = g_k
    labels = np.argmax(gamma, axis=1)
    return VbResult(labels, gamma, elbo_trace, tuple(int(k) for k in keep))
