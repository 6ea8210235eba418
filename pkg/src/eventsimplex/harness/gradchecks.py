"""Finite-difference checks of every loss and the GRU on small toy inputs."""
from __future__ import annotations

import numpy as np

from .. import dirichlet as fd
from .. import numdiff as nd
from .. import wgp
from ..encoder import PseudoPointSet, gru_sequence, init_gru_params
from ..model import EventModel, ModelSpec
from ..objectives import RegularizerConfig, mean_variance_regularizer, neighborhood_regularizer, sequence_loss

TOLERANCE = 1e-4
TOY_CLASSES = np.array([0, 2, 1, 1, 0])
TOY_GAPS = np.array([0.0, 0.3, 0.7, 0.2, 0.9])


def _points(flavor, rng, shape=(4, 3, 3)):
    w = rng.uniform(0.2, 0.9, shape) if flavor == "wgp" else rng.normal(size=shape)
    # FD bumps sit inside the toy gaps' range: a narrow bump far from every query
    # has a gradient below what central differences resolve against the 1e-8 floor.
    # GP locations stay spread out to keep the Gram matrix well conditioned.
    loc = rng.uniform(0.0, 1.5, shape) if flavor == "wgp" else rng.uniform(0.2, 0.9, shape)
    aux = rng.normal(size=shape) if flavor == "wgp" else rng.uniform(0.2, 0.8, shape)
    return [w, loc, aux]


def _model_check(kind: str, reg: bool, seed: int) -> float:
    model = EventModel(ModelSpec(kind, 3, hidden=4, n_points=3), seed=seed)
    names = list(model.params)

    def f(*ts):
        m = EventModel(model.spec, params=dict(zip(names, ts)))
        return sequence_loss(m, TOY_CLASSES, TOY_GAPS, RegularizerConfig() if reg else None, seed=0)

    return nd.grad_check(f, [model.params[n].data for n in names])


def run_gradchecks(seed: int = 0) -> dict[str, float]:
    """Maximum relative error per component."""
    rng = np.random.default_rng(seed)
    out = {}
    c = np.array([0, 2, 1, 1])
    tau = TOY_GAPS[1:]

    out["uce_dirichlet"] = nd.grad_check(lambda a: fd.uce_dirichlet(nd.exp(a), c).sum(),
                                         [rng.normal(size=(4, 3))])
    out["uce_taylor"] = nd.grad_check(lambda m, lv: wgp.uce_taylor(m, nd.exp(lv), c).sum(),
                                      [rng.normal(size=(4, 3)), rng.normal(size=(4, 3)) - 1.0])
    out["pp_loss"] = nd.grad_check(
        lambda w, l, s: fd.pp_loss(PseudoPointSet("fd", w, l, s), 0.0, c, tau).sum(), _points("fd", rng))
    out["pp_loss_plain"] = nd.grad_check(
        lambda w, l, s: fd.pp_loss(PseudoPointSet("fd", w, l, s), 0.0, c, tau, uce=False).sum(),
        _points("fd", rng))
    out["wgp_posterior"] = nd.grad_check(
        lambda w, l, v: sum(t.sum() for t in wgp.ln_params(PseudoPointSet("wgp", w, l, v), tau[:, None] * [1, 2])),
        _points("wgp", rng))
    for flavor, kind in (("wgp", "wgp-ln"), ("fd", "fd-dir")):
        spec_model = EventModel(ModelSpec(kind, 3, hidden=2, n_points=3))
        times = rng.uniform(0, 1.2, (4, 10))
        out[f"regularizer_{kind}"] = nd.grad_check(
            lambda a, b, d, m=spec_model, fl=flavor: mean_variance_regularizer(
                m, PseudoPointSet(fl, a, b, d), RegularizerConfig(), times=times).sum(),
            _points(flavor, rng))
    counts = np.array([3.0, 1.0, 7.0, 2.0])
    out["neighborhood"] = nd.grad_check(
        lambda a: neighborhood_regularizer(nd.exp(a).sum(axis=-1), counts).sum(), [rng.normal(size=(4, 3))])

    params = init_gru_params(4, 5, rng)
    names = list(params)
    x = rng.normal(size=(2, 5, 4))
    mask = np.array([[0, 0, 1, 1, 1], [1, 1, 1, 1, 1]], dtype=float)

    def gru_loss(xx, *ts):
        hs = gru_sequence(xx, np.zeros((2, 5)), dict(zip(names, ts)), mask)
        return (hs * np.linspace(-1, 1, hs.data.size).reshape(hs.shape)).sum()

    out["gru"] = nd.grad_check(gru_loss, [x] + [params[n].data for n in names])
    for kind in ("wgp-ln", "fd-dir", "fd-dir-pp"):
        out[f"sequence_{kind}"] = _model_check(kind, True, seed)
    return out
