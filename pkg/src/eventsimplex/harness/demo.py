"""Static classification demo: Dirichlet MLP on three 2-D Gaussians, CE vs UCE + neighbourhood term."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .. import numdiff as nd
from ..dirichlet import uce_dirichlet
from ..numdiff import Tensor
from ..objectives import ce_loss, neighbor_counts, neighborhood_regularizer

VARIANTS = {"overlapping": (1.0, 1e-2), "separated": (0.3, 1e-5)}   # (cluster std, neighbourhood w)
CLASS_RADIUS = 2.0
LOG_ALPHA_CEIL = 30.0


def class_means(C: int = 3) -> np.ndarray:
    ang = 2 * np.pi * np.arange(C) / C + np.pi / 2
    return CLASS_RADIUS * np.column_stack([np.cos(ang), np.sin(ang)])


def make_gaussians(variant: str, n: int = 1500, seed: int = 0):
    std, _ = VARIANTS[variant]
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(3), n // 3)
    x = class_means()[y] + std * rng.standard_normal((len(y), 2))
    return x, y


def inter_class_region(n_per_disc: int = 200, radius: float = 0.5, seed: int = 1234) -> np.ndarray:
    """Uniform points within ``radius`` of the pairwise midpoints of the class means."""
    rng = np.random.default_rng(seed)
    means = class_means()
    out = []
    for i in range(3):
        for j in range(i + 1, 3):
            r = radius * np.sqrt(rng.uniform(size=n_per_disc))
            a = rng.uniform(0, 2 * np.pi, n_per_disc)
            out.append(0.5 * (means[i] + means[j]) + np.column_stack([r * np.cos(a), r * np.sin(a)]))
    return np.concatenate(out)


@dataclass
class MLP:
    params: list[Tensor]

    @classmethod
    def init(cls, rng, sizes=(2, 64, 64, 3)) -> "MLP":
        ps = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            bound = 1 / np.sqrt(a)
            ps += [Tensor(rng.uniform(-bound, bound, (a, b)), True), Tensor(np.zeros(b), True)]
        return cls(ps)

    def log_alpha(self, x) -> Tensor:
        h = nd.as_tensor(x)
        for k in range(0, len(self.params), 2):
            h = nd.matmul(h, self.params[k]) + self.params[k + 1]
            if k + 2 < len(self.params):
                h = nd.tanh(h)
        return nd.clamp(h, None, LOG_ALPHA_CEIL)

    def alpha(self, x) -> np.ndarray:
        with nd.no_grad():
            return np.exp(self.log_alpha(x).data)


def train_demo(x, y, objective: str, w: float, seed: int, epochs: int = 300, lr: float = 1e-2) -> MLP:
    """Full-batch Adam on ``ce`` (CE of the Dirichlet mean) or ``uce`` (UCE + neighbourhood term)."""
    rng = np.random.default_rng(seed)
    net = MLP.init(rng)
    opt = nd.AdamState.for_params(net.params, lr=lr)
    counts = neighbor_counts(x, w) if objective == "uce" else None
    for _ in range(epochs):
        alpha = nd.exp(net.log_alpha(x))
        if objective == "ce":
            loss = ce_loss(alpha / alpha.sum(axis=-1, keepdims=True), y).mean()
        else:
            loss = (uce_dirichlet(alpha, y) + neighborhood_regularizer(alpha.sum(axis=-1), counts)).mean()
        nd.adam_step(opt, net.params, nd.backward(loss, net.params))
    return net


def mean_entropy(net: MLP, points: np.ndarray) -> float:
    p = softmax(np.log(net.alpha(points)), axis=-1)
    return float(np.mean(-(p * np.log(np.maximum(p, 1e-300))).sum(-1)))


def demo_g1(seeds=range(5), epochs: int = 300, variants=("overlapping", "separated")) -> list[dict]:
    """Mean predictive entropy in the inter-class region per variant, objective and seed."""
    region = inter_class_region()
    rows = []
    for variant in variants:
        _, w = VARIANTS[variant]
        for seed in seeds:
            x, y = make_gaussians(variant, seed=seed)
            for objective in ("ce", "uce"):
                net = train_demo(x, y, objective, w, seed, epochs)
                rows.append({"variant": variant, "seed": seed, "objective": objective,
                             "entropy": mean_entropy(net, region),
                             "accuracy": float(np.mean(np.argmax(net.alpha(x), -1) == y))})
    return rows


def entropy_grid(net: MLP, extent: float = 4.0, n: int = 120):
    g = np.linspace(-extent, extent, n)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    p = softmax(np.log(net.alpha(pts)), axis=-1)
    ent = -(p * np.log(np.maximum(p, 1e-300))).sum(-1)
    return xx, yy, ent.reshape(xx.shape)


def render_demo(variant: str, seed: int, path, epochs: int = 300):
    """Entropy maps of the CE and UCE-trained networks side by side."""
    from .report import _pyplot
    plt = _pyplot()
    x, y = make_gaussians(variant, seed=seed)
    _, w = VARIANTS[variant]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    for ax, objective in zip(axes, ("ce", "uce")):
        xx, yy, ent = entropy_grid(train_demo(x, y, objective, w, seed, epochs))
        cs = ax.contourf(xx, yy, ent, levels=20, vmin=0, vmax=np.log(3))
        ax.scatter(x[:, 0], x[:, 1], c=y, s=2, cmap="tab10", alpha=0.4)
        ax.set_title(f"{variant}: {objective.upper()}")
        ax.set_aspect("equal")
    fig.colorbar(cs, ax=axes, label="predictive entropy")
    fig.savefig(path, dpi=120)
    plt.close(fig)
