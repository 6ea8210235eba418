"""Weighted Gaussian process over pseudo points, logistic-normal outputs and the Taylor UCE."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax as _np_log_softmax, ndtr

from . import numdiff as nd
from .numdiff import Tensor


@dataclass(frozen=True)
class KernelConfig:
    gamma: float = 1.0
    jitter: float = 1e-6

    def __post_init__(self):
        if not (self.gamma > 0 and self.jitter > 0):
            raise ValueError("KernelConfig: gamma and jitter must be positive")


@dataclass
class LogisticNormalParams:
    """Diagonal logit Gaussian per time; arrays shaped (..., C)."""

    mu: np.ndarray
    var: np.ndarray


def weighted_kernel(t1: float, w1: float, t2: float, w2: float,
                    config: KernelConfig = KernelConfig()) -> float:
    return min(w1, w2) * math.exp(-config.gamma ** 2 * (t1 - t2) ** 2)


def weighted_gram(loc, weight, config: KernelConfig) -> Tensor:
    """Gram matrix (..., M, M) of the weighted kernel, without jitter."""
    loc, weight = nd.as_tensor(loc), nd.as_tensor(weight)
    d = nd.expand_dims(loc, -1) - nd.expand_dims(loc, -2)
    base = nd.exp(-config.gamma ** 2 * nd.square(d))
    return nd.minimum(nd.expand_dims(weight, -1), nd.expand_dims(weight, -2)) * base


MAX_JITTER_ESCALATIONS = 3


def gp_posterior(weight, loc, value, queries, config: KernelConfig = KernelConfig()):
    """Posterior mean and variance of the weighted GP at ``queries``.

    ``weight``, ``loc`` and ``value`` have shape (..., M); ``queries`` has
    shape (..., Q) broadcastable against the leading axes.  The query point
    carries weight 1.  Returns tensors ``(mu, var)`` of shape (..., Q).
    """
    weight, loc, value = nd.as_tensor(weight), nd.as_tensor(loc), nd.as_tensor(value)
    queries = nd.as_tensor(queries)
    M = loc.shape[-1]
    gram = weighted_gram(loc, weight, config)
    eye = np.eye(M)

    jitter = config.jitter
    for attempt in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            np.linalg.cholesky(gram.data + jitter * eye)
            break
        except np.linalg.LinAlgError:
            if attempt == MAX_JITTER_ESCALATIONS:
                raise np.linalg.LinAlgError(
                    f"gp_posterior: Gram matrix not positive definite even with jitter {jitter:g}") from None
            jitter *= 10.0
    K = gram + jitter * eye

    d = nd.expand_dims(loc, -1) - nd.expand_dims(queries, -2)            # (..., M, Q)
    kq = nd.expand_dims(nd.minimum(weight, 1.0), -1) * nd.exp(-config.gamma ** 2 * nd.square(d))
    rhs = nd.concat([nd.broadcast_to(nd.expand_dims(value, -1), kq.shape[:-1] + (1,)), kq], axis=-1)
    sol = nd.spd_solve(nd.broadcast_to(K, kq.shape[:-2] + (M, M)), rhs)
    mu = (kq * sol[..., :1]).sum(axis=-2)
    var = 1.0 - (kq * sol[..., 1:]).sum(axis=-2)
    return mu, nd.clamp(var, 0.0, None)


def ln_params(points, queries, config: KernelConfig = KernelConfig()):
    """Logit means/variances (..., Q, C) from WGP pseudo points (..., C, M) at queries (..., Q)."""
    q = nd.expand_dims(nd.as_tensor(queries), -2)                         # (..., 1, Q)
    mu, var = gp_posterior(points.weight, points.loc, points.value, q, config)
    return nd.transpose(mu, _swap_last(mu.ndim)), nd.transpose(var, _swap_last(var.ndim))


def _swap_last(ndim):
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


# --------------------------------------------------------- simplex summaries

_CHUNK = 1 << 21


def _mc_map(mu, var, S, seed, fn):
    """Apply ``fn(z)`` to logit samples (n, S, C) in chunks, common noise over all rows."""
    mu, var = np.asarray(mu, dtype=np.float64), np.asarray(var, dtype=np.float64)
    lead, C = mu.shape[:-1], mu.shape[-1]
    noise = np.random.default_rng(seed).standard_normal((S, C))
    flat_mu = mu.reshape(-1, C)
    flat_sd = np.sqrt(np.maximum(var, 0.0)).reshape(-1, C)
    rows = max(1, _CHUNK // (S * C))
    parts = []
    for i in range(0, len(flat_mu), rows):
        z = flat_mu[i:i + rows, None, :] + flat_sd[i:i + rows, None, :] * noise
        parts.append(fn(z))
    out = np.concatenate(parts, axis=0) if parts else np.empty((0, C))
    return out.reshape(lead + out.shape[1:])


def ln_mean_probs(mu, var, samples: int = 1000, seed: int = 0) -> np.ndarray:
    """Monte Carlo mean of softmax(z), z ~ N(mu, diag var)."""
    if samples < 1:
        raise ValueError("ln_mean_probs: need at least one sample")
    p = _mc_map(mu, var, samples, seed, lambda z: np.exp(_np_log_softmax(z, axis=-1)).mean(axis=1))
    return p / p.sum(axis=-1, keepdims=True)


def ln_confidence(mu, var, c: int | None = None, samples: int = 1000, seed: int = 0) -> np.ndarray:
    """Probability that class ``c`` has the largest sampled probability.

    Two classes use the closed form of a difference of normals; more
    classes use Monte Carlo over the logits.  ``c=None`` returns all classes.
    """
    mu, var = np.asarray(mu, dtype=np.float64), np.asarray(var, dtype=np.float64)
    C = mu.shape[-1]
    if C < 2:
        raise ValueError("ln_confidence: need at least two classes")
    if C == 2:
        diff = mu[..., 0] - mu[..., 1]
        sd = np.sqrt(var[..., 0] + var[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            q0 = np.where(sd > 0, ndtr(diff / np.where(sd > 0, sd, 1.0)), (diff >= 0).astype(float))
        q = np.stack([q0, 1.0 - q0], axis=-1)
    else:
        def wins(z):
            top = z.max(axis=-1, keepdims=True)
            return (z >= top).mean(axis=1)
        q = _mc_map(mu, var, samples, seed, wins)
    return q if c is None else q[..., c]


# ------------------------------------------------------------------- losses

def _pick(x: Tensor, c) -> Tensor:
    onehot = np.eye(x.shape[-1])[np.asarray(c)]
    return (x * onehot).sum(axis=-1)


def uce_taylor(mu, var, c) -> Tensor:
    """Second-order approximation of -E[log softmax(z)_c] for z ~ N(mu, diag var).

    Uses the log-normal moments of sum_k exp(z_k):
    ``-mu_c + log E - V / (2 E^2)``.  Shapes (..., C) with ``c`` of shape (...).
    """
    mu, var = nd.as_tensor(mu), nd.as_tensor(var)
    shifted = mu + 0.5 * var
    log_e = nd.logsumexp(shifted, axis=-1)
    s = nd.softmax(shifted, axis=-1)
    ratio = ((nd.exp(var) - 1.0) * nd.square(s)).sum(axis=-1)          # V / E^2
    return -_pick(mu, c) + log_e - 0.5 * ratio
