"""Event embedding, GRU recurrence and the pseudo-point heads."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import numdiff as nd
from .numdiff import Tensor

WIDTH_FLOOR = 1e-3


def embed_event(class_id: int, gap: float, n_classes: int) -> np.ndarray:
    """One-hot class followed by the normalised gap (length ``n_classes + 1``)."""
    if not 0 <= class_id < n_classes:
        raise ValueError(f"embed_event: class {class_id} outside [0, {n_classes})")
    out = np.zeros(n_classes + 1)
    out[class_id] = 1.0
    out[-1] = gap
    return out


def embed_sequence(classes: np.ndarray, gaps: np.ndarray, n_classes: int) -> np.ndarray:
    """Vectorised :func:`embed_event` over trailing axis; shapes (..., L) -> (..., L, C + 1)."""
    classes = np.asarray(classes)
    if np.any((classes < 0) | (classes >= n_classes)):
        raise ValueError("embed_sequence: class id out of range")
    out = np.zeros(classes.shape + (n_classes + 1,))
    np.put_along_axis(out, classes[..., None], 1.0, axis=-1)
    out[..., -1] = gaps
    return out


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def init_gru_params(input_dim: int, hidden: int, rng: np.random.Generator) -> dict[str, Tensor]:
    # gate blocks along the last axis are ordered (reset, update, candidate)
    return {
        "gru.Wx": Tensor(_uniform(rng, input_dim, (input_dim, 3 * hidden)), True, "gru.Wx"),
        "gru.Wh": Tensor(_uniform(rng, hidden, (hidden, 3 * hidden)), True, "gru.Wh"),
        "gru.bx": Tensor(_uniform(rng, hidden, (3 * hidden,)), True, "gru.bx"),
        "gru.bh": Tensor(_uniform(rng, hidden, (3 * hidden,)), True, "gru.bh"),
    }


def gru_step(x, h, params: dict[str, Tensor]) -> Tensor:
    """One GRU update built from tape primitives (reference path for the fused kernel)."""
    H = params["gru.Wh"].shape[0]
    gx = nd.matmul(x, params["gru.Wx"]) + params["gru.bx"]
    gh = nd.matmul(h, params["gru.Wh"]) + params["gru.bh"]
    r = nd.sigmoid(gx[..., :H] + gh[..., :H])
    z = nd.sigmoid(gx[..., H:2 * H] + gh[..., H:2 * H])
    n = nd.tanh(gx[..., 2 * H:] + r * gh[..., 2 * H:])
    return (1.0 - z) * n + z * h


def gru_sequence(inputs, h0, params: dict[str, Tensor], mask: np.ndarray | None = None) -> Tensor:
    """Unrolled GRU as a single primitive with hand-written backpropagation through time.

    ``inputs`` is (B, L, D), ``h0`` is (B, H); returns the states (B, L, H)
    after each input.  Where ``mask[b, t]`` is 0 the state is carried over
    unchanged, which lets ragged windows share one batch.
    """
    X, h0 = nd.as_tensor(inputs), nd.as_tensor(h0)
    Wx, Wh, bx, bh = (params[k] for k in ("gru.Wx", "gru.Wh", "gru.bx", "gru.bh"))
    B, L, _ = X.shape
    H = Wh.shape[0]
    if X.shape[2] != Wx.shape[0] or h0.shape != (B, H):
        raise ValueError(f"gru_sequence: shape mismatch inputs {X.shape}, state {h0.shape}, Wx {Wx.shape}")
    m = np.ones((B, L)) if mask is None else np.asarray(mask, dtype=np.float64)

    gx_all = X.data @ Wx.data + bx.data
    hs = np.empty((B, L, H))
    cache = []
    h = h0.data
    for t in range(L):
        gx = gx_all[:, t]
        gh = h @ Wh.data + bh.data
        r = expit(gx[:, :H] + gh[:, :H])
        z = expit(gx[:, H:2 * H] + gh[:, H:2 * H])
        ghn = gh[:, 2 * H:]
        n = np.tanh(gx[:, 2 * H:] + r * ghn)
        new = (1.0 - z) * n + z * h
        mt = m[:, t:t + 1]
        cache.append((h, r, z, n, ghn))
        h = mt * new + (1.0 - mt) * h
        hs[:, t] = h

    def vjp(G):
        dWh = np.zeros_like(Wh.data)
        dgx_all = np.empty((B, L, 3 * H))
        dbh = np.zeros_like(bh.data)
        dh = np.zeros((B, H))
        for t in range(L - 1, -1, -1):
            h_prev, r, z, n, ghn = cache[t]
            mt = m[:, t:t + 1]
            dh = dh + G[:, t]
            dnew = mt * dh
            dn = dnew * (1.0 - z)
            dz = dnew * (h_prev - n)
            dan = dn * (1.0 - n * n)
            dar = dan * ghn * r * (1.0 - r)
            daz = dz * z * (1.0 - z)
            dgh = np.concatenate([dar, daz, dan * r], axis=1)
            dgx_all[:, t] = np.concatenate([dar, daz, dan], axis=1)
            dWh += h_prev.T @ dgh
            dbh += dgh.sum(0)
            dh = dnew * z + (1.0 - mt) * dh + dgh @ Wh.data.T
        flat = dgx_all.reshape(B * L, 3 * H)
        dWx = X.data.reshape(B * L, -1).T @ flat
        dbx = flat.sum(0)
        dX = dgx_all @ Wx.data.T
        return dX, dh, dWx, dWh, dbx, dbh

    return nd.make_op(hs, (X, h0, Wx, Wh, bx, bh), vjp, "gru_sequence")


# ---------------------------------------------------------------------- heads

@dataclass
class PseudoPointSet:
    """Per-class pseudo points with trailing shape (..., C, M).

    ``flavor`` is ``"wgp"`` (weight in [0, 1], location, logit value) or
    ``"fd"`` (basis weight, centre, width).
    """

    flavor: str
    weight: Tensor
    loc: Tensor
    aux: Tensor

    @property
    def value(self) -> Tensor:
        assert self.flavor == "wgp"
        return self.aux

    @property
    def width(self) -> Tensor:
        assert self.flavor == "fd"
        return self.aux

    @property
    def shape(self) -> tuple[int, ...]:
        return self.weight.shape

    def numpy(self) -> dict[str, np.ndarray]:
        names = ("weight", "loc", "value") if self.flavor == "wgp" else ("weight", "center", "width")
        return dict(zip(names, (self.weight.data, self.loc.data, self.aux.data)))

    def take(self, idx) -> "PseudoPointSet":
        return PseudoPointSet(self.flavor, self.weight[idx], self.loc[idx], self.aux[idx])


def init_head_params(hidden: int, n_classes: int, n_points: int,
                     rng: np.random.Generator) -> dict[str, Tensor]:
    out = 3 * n_classes * n_points
    return {
        "head.W": Tensor(_uniform(rng, hidden, (hidden, out)), True, "head.W"),
        "head.b": Tensor(_uniform(rng, hidden, (out,)), True, "head.b"),
    }


def _head_raw(hidden_state, params, n_classes, n_points) -> Tensor:
    raw = nd.matmul(hidden_state, params["head.W"]) + params["head.b"]
    return nd.reshape(raw, raw.shape[:-1] + (n_classes, n_points, 3))


def head_wgp(hidden_state, params: dict[str, Tensor], n_classes: int, n_points: int) -> PseudoPointSet:
    raw = _head_raw(nd.as_tensor(hidden_state), params, n_classes, n_points)
    return PseudoPointSet("wgp", nd.sigmoid(raw[..., 0]), nd.softplus(raw[..., 1]), raw[..., 2])


def head_fd(hidden_state, params: dict[str, Tensor], n_classes: int, n_points: int) -> PseudoPointSet:
    raw = _head_raw(nd.as_tensor(hidden_state), params, n_classes, n_points)
    return PseudoPointSet("fd", raw[..., 0], nd.softplus(raw[..., 1]),
                          nd.softplus(raw[..., 2]) + WIDTH_FLOOR)
