"""Gaussian-basis decomposition of Dirichlet concentrations and the point-process variant."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import numdiff as nd
from .numdiff import Tensor

ALPHA_FLOOR = 1e-8
LOG_ALPHA_CEIL = 50.0


@dataclass
class DirichletParams:
    alpha: np.ndarray

    @property
    def alpha0(self) -> np.ndarray:
        return self.alpha.sum(axis=-1)


@dataclass
class IntensitySet:
    lam: np.ndarray

    @property
    def lam0(self) -> np.ndarray:
        return self.lam.sum(axis=-1)


def log_decomposition(points, queries, nu: float = 0.0) -> Tensor:
    """sum_j w_j N(tau | center_j, width_j) + nu, shaped (..., Q, C).

    ``points`` carry (..., C, M) arrays; ``queries`` are (..., Q).
    """
    q = nd.expand_dims(nd.expand_dims(nd.as_tensor(queries), -2), -2)   # (..., 1, 1, Q)
    center = nd.expand_dims(points.loc, -1)
    width = nd.expand_dims(points.width, -1)
    dens = nd.normal_pdf((q - center) / width) / width                 # (..., C, M, Q)
    total = (nd.expand_dims(points.weight, -1) * dens).sum(axis=-2) + nu
    axes = list(range(total.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return nd.transpose(total, tuple(axes))


def decompose_alpha(points, queries, nu: float = 0.0) -> Tensor:
    """Concentrations alpha_c(tau) (..., Q, C); log-alpha is clipped to [log 1e-8, 50]."""
    return nd.exp(nd.clamp(log_decomposition(points, queries, nu), math.log(ALPHA_FLOOR), LOG_ALPHA_CEIL))


# same functional form; the values are read as per-class intensities
decompose_intensity = decompose_alpha


def dirichlet_mean(alpha):
    if isinstance(alpha, Tensor):
        return alpha / alpha.sum(axis=-1, keepdims=True)
    alpha = np.asarray(alpha, dtype=np.float64)
    return alpha / alpha.sum(axis=-1, keepdims=True)


def _pick(x: Tensor, c) -> Tensor:
    onehot = np.eye(x.shape[-1])[np.asarray(c)]
    return (x * onehot).sum(axis=-1)


def uce_dirichlet(alpha, c) -> Tensor:
    """-E[log p_c] under Dir(alpha) = digamma(alpha_0) - digamma(alpha_c)."""
    alpha = nd.as_tensor(alpha)
    return nd.digamma(alpha.sum(axis=-1)) - nd.digamma(_pick(alpha, c))


def dirichlet_marginal_var(alpha) -> Tensor:
    alpha = nd.as_tensor(alpha)
    a0 = alpha.sum(axis=-1, keepdims=True)
    return alpha * (a0 - alpha) / (nd.square(a0) * (a0 + 1.0))


def dirichlet_confidence(alpha, c: int | None = None, samples: int = 10000, seed: int = 0) -> np.ndarray:
    """Monte Carlo P(p_c >= max_{c' != c} p_c') with p ~ Dir(alpha) via normalised Gamma draws."""
    if samples < 1:
        raise ValueError("dirichlet_confidence: need at least one sample")
    alpha = np.asarray(alpha, dtype=np.float64)
    rng = np.random.default_rng(seed)
    g = rng.standard_gamma(np.broadcast_to(alpha[..., None, :], alpha.shape[:-1] + (samples, alpha.shape[-1])))
    p = g / g.sum(axis=-1, keepdims=True)
    wins = (p >= p.max(axis=-1, keepdims=True)).mean(axis=-2)
    return wins if c is None else wins[..., c]


# ------------------------------------------------------------ point process

def trapezoid_nodes(upper, n: int) -> np.ndarray:
    """Uniform nodes on [0, upper] along a new trailing axis."""
    if n < 2:
        raise ValueError("quadrature needs at least two nodes")
    upper = np.asarray(upper, dtype=np.float64)
    return upper[..., None] * np.linspace(0.0, 1.0, n)


NODES_PER_UNIT = 50


def default_node_count(upper) -> int:
    """Nodes giving at least NODES_PER_UNIT per unit of time on the longest interval."""
    return max(2, int(np.ceil(NODES_PER_UNIT * float(np.max(upper, initial=0.0)))) + 1)


def survival_integral(points, nu: float, upper, n_nodes: int | None = None) -> Tensor:
    """Composite trapezoid estimate of int_0^upper lambda_0(t) dt, shape of ``upper``."""
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(upper < 0):
        raise ValueError("survival_integral: upper limit must be >= 0")
    n_nodes = n_nodes or default_node_count(upper)
    lam0 = decompose_intensity(points, trapezoid_nodes(upper, n_nodes), nu).sum(axis=-1)   # (..., N)
    h = upper / (n_nodes - 1)
    inner = lam0.sum(axis=-1) - 0.5 * (lam0[..., 0] + lam0[..., n_nodes - 1])
    return inner * h


def pp_loss(points, nu: float, c, tau, n_nodes: int | None = None, uce: bool = True) -> Tensor:
    """Negative log-likelihood of (class c, gap tau) under the per-class intensities.

    Term (i) is the Dirichlet UCE over Dir(lambda) when ``uce`` is set, the
    plain ``-log(lambda_c / lambda_0)`` otherwise; then ``- log lambda_0(tau)``
    plus the survival integral.  Normalised gaps below the training minimum
    are negative; the intensity lives on tau >= 0, so they are scored at 0.
    """
    tau = np.maximum(np.asarray(tau, dtype=np.float64), 0.0)
    lam = decompose_intensity(points, tau[..., None], nu)[..., 0, :]        # (..., C)
    lam0 = lam.sum(axis=-1)
    if uce:
        term_i = uce_dirichlet(lam, c)
    else:
        term_i = nd.log(lam0) - nd.log(_pick(lam, c))
    return term_i - nd.log(lam0) + survival_integral(points, nu, tau, n_nodes)


def expected_next_time(points, nu: float = 0.0, horizon: float = 5.0, n_nodes: int | None = None):
    """Mean of q(tau) = lambda_0 exp(-int lambda_0) truncated at ``horizon``.

    Returns ``(tau_hat, tail_mass)`` where ``tail_mass`` = exp(-Lambda(horizon))
    is the probability left beyond the horizon.
    """
    if horizon <= 0:
        raise ValueError("expected_next_time: horizon must be positive")
    n = n_nodes or int(round(50 * horizon)) + 1
    grid = np.linspace(0.0, horizon, n)
    lead = points.weight.shape[:-2]
    with nd.no_grad():
        lam0 = decompose_intensity(points, np.broadcast_to(grid, lead + (n,)), nu).data.sum(axis=-1)
    h = grid[1] - grid[0]
    cum = np.concatenate([np.zeros(lead + (1,)), np.cumsum(0.5 * h * (lam0[..., 1:] + lam0[..., :-1]), axis=-1)],
                         axis=-1)
    dens = lam0 * np.exp(-cum)
    tau_hat = np.trapezoid(grid * dens, grid, axis=-1)
    return tau_hat, np.exp(-cum[..., -1])


# ------------------------------------------------------------- simplex grid

def dirichlet_log_density(x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    return (gammaln(alpha.sum()) - gammaln(alpha).sum()
            + ((alpha - 1.0) * np.log(x)).sum(axis=-1))


def simplex_density_grid(alpha, resolution: int = 30) -> np.ndarray:
    """Rows ``(u, v, density)`` over the 2-simplex; ``u``, ``v`` are the first two
    barycentric coordinates of the centroids of a ``resolution``-fold subdivision."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (3,):
        raise ValueError("simplex_density_grid: defined for exactly three classes")
    if resolution < 2:
        raise ValueError("simplex_density_grid: resolution must be >= 2")
    pts = []
    for i in range(resolution):
        for j in range(resolution - i):
            pts.append(((i + 1 / 3) / resolution, (j + 1 / 3) / resolution))
            if i + j < resolution - 1:
                pts.append(((i + 2 / 3) / resolution, (j + 2 / 3) / resolution))
    uv = np.array(pts)
    x = np.column_stack([uv, 1.0 - uv.sum(axis=1)])
    return np.column_stack([uv, np.exp(dirichlet_log_density(x, alpha))])
