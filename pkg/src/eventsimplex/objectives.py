"""Training objectives: CE, UCE per model flavour, the mean/variance regularizer
and the neighbourhood regularizer of the standalone classification demo."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import dirichlet as fd
from . import numdiff as nd
from . import wgp
from .numdiff import Tensor

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class RegularizerConfig:
    alpha_reg: float = 1e-3
    beta_reg: float = 1e-3
    target_var: float | None = None
    horizon: float = 1.2
    samples: int = 10

    def __post_init__(self):
        if self.alpha_reg < 0 or self.beta_reg < 0:
            raise ValueError("RegularizerConfig: coefficients must be >= 0")
        if not self.horizon > 0 or self.samples < 1:
            raise ValueError("RegularizerConfig: horizon must be > 0 and samples >= 1")


def ce_loss(p_mean, c):
    """-log p_c with p_c floored at 1e-12; accepts arrays or tensors shaped (..., C)."""
    c = np.asarray(c)
    if isinstance(p_mean, Tensor):
        onehot = np.eye(p_mean.shape[-1])[c]
        picked = (p_mean * onehot).sum(axis=-1)
        if np.any(picked.data < PROB_FLOOR):
            log.debug("ce_loss: probability below %g clamped", PROB_FLOOR)
        return -nd.log(nd.clamp(picked, PROB_FLOOR, None))
    p_mean = np.asarray(p_mean, dtype=np.float64)
    picked = np.take_along_axis(p_mean, c[..., None], axis=-1)[..., 0]
    if np.any(picked < PROB_FLOOR):
        log.debug("ce_loss: probability below %g clamped", PROB_FLOOR)
    return -np.log(np.maximum(picked, PROB_FLOOR))


def wgp_ce_tensor(mu, var, c, samples: int = 64, seed: int = 0) -> Tensor:
    """Differentiable CE of the Monte Carlo mean softmax under fixed noise."""
    mu, var = nd.as_tensor(mu), nd.as_tensor(var)
    noise = np.random.default_rng(seed).standard_normal((samples,) + mu.shape)
    z = nd.expand_dims(mu, 0) + nd.expand_dims(nd.sqrt(var + 1e-12), 0) * noise
    return ce_loss(nd.mean(nd.softmax(z, axis=-1), axis=0), c)


# ------------------------------------------------------------------ events

def event_loss(model, points, c, tau) -> Tensor:
    """Per-event loss (...,) for pseudo points (..., C, M), classes and normalised gaps (...)."""
    spec = model.spec
    c, tau = np.asarray(c), np.asarray(tau, dtype=np.float64)
    if spec.kind == "fd-dir-pp":
        return fd.pp_loss(points, spec.nu, c, tau, spec.quad_nodes, uce=spec.loss == "uce")
    out = model.head_outputs(points, tau[..., None])
    if spec.is_wgp:
        mu, var = out["mu"][..., 0, :], out["var"][..., 0, :]
        if spec.loss == "uce":
            return wgp.uce_taylor(mu, var, c)
        return wgp_ce_tensor(mu, var, c)
    alpha = out["alpha"][..., 0, :]
    if spec.loss == "uce":
        return fd.uce_dirichlet(alpha, c)
    return ce_loss(fd.dirichlet_mean(alpha), c)


def regularizer_target(model, config: RegularizerConfig) -> float:
    if config.target_var is not None:
        return config.target_var
    if model.spec.is_wgp:
        return 1.0
    C = model.spec.n_classes
    return (C - 1) / (C * C * (C + 1))


def mean_variance_regularizer(model, points, config: RegularizerConfig, seed=0, times=None) -> Tensor:
    """Per-class regularizer r_c, shaped (..., C).

    Integrals over (0, T) are estimated with ``config.samples`` uniform times
    (or the given ``times`` of shape (..., S)).  FD models only penalise the
    Dirichlet marginal variance; the mean term is omitted.
    """
    lead = points.weight.shape[:-2]
    if times is None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        times = rng.uniform(0.0, config.horizon, lead + (config.samples,))
    target = regularizer_target(model, config)
    T = config.horizon
    if model.spec.is_wgp:
        mu, var = wgp.ln_params(points, times, model.spec.kernel)
        return (config.alpha_reg * T * nd.mean(nd.square(mu), axis=-2)
                + config.beta_reg * T * nd.mean(nd.square(target - var), axis=-2))
    alpha = fd.decompose_alpha(points, times, model.spec.nu)
    return config.beta_reg * T * nd.mean(nd.square(target - fd.dirichlet_marginal_var(alpha)), axis=-2)


def sequence_loss(model, classes, gaps, config: RegularizerConfig | None = None, seed=0, h0=None) -> Tensor:
    """Summed loss over the transitions of one sequence.

    ``gaps`` are normalised and aligned with ``classes`` (entry 0 unused as a
    target).  Event j is predicted from the state after events 0..j-1 and
    scored at its observed gap; the regularizer is added per transition when
    ``config`` is given.
    """
    classes, gaps = np.asarray(classes), np.asarray(gaps, dtype=np.float64)
    if classes.ndim != 1 or len(classes) < 2:
        raise ValueError("sequence_loss: need a 1-D sequence with at least two events")
    states = model.encode(classes[None, :-1], gaps[None, :-1], h0=h0)[0]
    points = model.points(states)
    total = event_loss(model, points, classes[1:], gaps[1:]).sum()
    if config is not None:
        total = total + mean_variance_regularizer(model, points, config, seed).sum()
    return total


# -------------------------------------------------------- neighbourhoods

def neighbor_counts(x: np.ndarray, w: float) -> np.ndarray:
    """Number of points j (including i itself) with squared distance ||x_i - x_j||^2 < w."""
    x = np.asarray(x, dtype=np.float64)
    sq = (x * x).sum(1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    return (d2 < w).sum(1).astype(np.float64)


def neighborhood_regularizer(alpha0, count):
    """|alpha_0(x) - count|; tensors stay on the tape."""
    if isinstance(alpha0, Tensor):
        return nd.absolute(alpha0 - np.asarray(count, dtype=np.float64))
    return np.abs(np.asarray(alpha0, dtype=np.float64) - np.asarray(count, dtype=np.float64))
