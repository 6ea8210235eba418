"""Event model: GRU encoder plus a WGP-LN or FD-Dir pseudo-point head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dirichlet as fd
from . import numdiff as nd
from . import wgp
from .encoder import embed_sequence, gru_sequence, head_fd, head_wgp, init_gru_params, init_head_params
from .numdiff import Tensor

MODEL_KINDS = ("wgp-ln", "fd-dir", "fd-dir-pp")
DEFAULT_POINTS = {"wgp-ln": 3, "fd-dir": 20, "fd-dir-pp": 20}


@dataclass
class ModelSpec:
    kind: str
    n_classes: int
    hidden: int = 32
    n_points: int | None = None
    gamma: float = 1.0
    jitter: float = 1e-6
    nu: float = 0.0
    quad_nodes: int | None = None
    loss: str = "uce"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.loss not in ("uce", "ce"):
            raise ValueError(f"unknown loss {self.loss!r}; expected 'uce' or 'ce'")
        if self.n_points is None:
            self.n_points = DEFAULT_POINTS[self.kind]
        if self.n_classes < 2 or self.hidden < 1 or self.n_points < 1:
            raise ValueError("ModelSpec: n_classes >= 2, hidden >= 1 and n_points >= 1 required")

    @property
    def is_wgp(self) -> bool:
        return self.kind == "wgp-ln"

    @property
    def kernel(self) -> wgp.KernelConfig:
        return wgp.KernelConfig(self.gamma, self.jitter)


class EventModel:
    """Parameters and forward pieces shared by training and evaluation."""

    def __init__(self, spec: ModelSpec, seed: int = 0, params: dict[str, Tensor] | None = None):
        self.spec = spec
        if params is None:
            rng = np.random.default_rng(seed)
            params = init_gru_params(spec.n_classes + 1, spec.hidden, rng)
            params.update(init_head_params(spec.hidden, spec.n_classes, spec.n_points, rng))
        self.params = params

    # ------------------------------------------------------------ forward
    def encode(self, classes, gaps, mask=None, h0=None) -> Tensor:
        """Hidden states (B, L, H) after each event of (B, L) class/gap arrays."""
        classes, gaps = np.atleast_2d(classes), np.atleast_2d(gaps)
        x = embed_sequence(classes, gaps, self.spec.n_classes)
        if h0 is None:
            h0 = np.zeros((x.shape[0], self.spec.hidden))
        return gru_sequence(x, h0, self.params, mask)

    def points(self, states):
        head = head_wgp if self.spec.is_wgp else head_fd
        return head(states, self.params, self.spec.n_classes, self.spec.n_points)

    def head_outputs(self, points, queries) -> dict[str, Tensor]:
        """Distribution parameters at ``queries`` (..., Q): ``mu``/``var`` or ``alpha``, each (..., Q, C)."""
        if self.spec.is_wgp:
            mu, var = wgp.ln_params(points, queries, self.spec.kernel)
            return {"mu": mu, "var": var}
        return {"alpha": fd.decompose_alpha(points, queries, self.spec.nu)}

    # ----------------------------------------------------------- summaries
    def mean_probs(self, points, queries, samples: int = 1000, seed: int = 0) -> np.ndarray:
        with nd.no_grad():
            out = self.head_outputs(points, queries)
        if self.spec.is_wgp:
            return wgp.ln_mean_probs(out["mu"].data, out["var"].data, samples, seed)
        return fd.dirichlet_mean(out["alpha"].data)

    def distributional_score(self, points, queries, classes, samples: int = 1000, seed: int = 0) -> np.ndarray:
        """q_c (WGP-LN) or alpha_c (FD-Dir) of ``classes`` at ``queries`` (..., Q)."""
        with nd.no_grad():
            out = self.head_outputs(points, queries)
        idx = np.asarray(classes)[..., None]
        if self.spec.is_wgp:
            q = wgp.ln_confidence(out["mu"].data, out["var"].data, None, samples, seed)
            return np.take_along_axis(q, idx, axis=-1)[..., 0]
        return np.take_along_axis(out["alpha"].data, idx, axis=-1)[..., 0]

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))
