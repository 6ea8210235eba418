"""Evaluation metrics and Bayes-oracle accuracy ceilings for the synthetic data."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import dirichlet as fd
from . import numdiff as nd
from .events import GraphSpec, read_kv


# ------------------------------------------------------------------ report

@dataclass
class EvalReport:
    accuracy: float = float("nan")
    time_error: float = float("nan")
    auroc: float = float("nan")
    aupr: float = float("nan")
    auroc_distributional: float = float("nan")
    aupr_distributional: float = float("nan")
    time_mse: float = float("nan")
    n_events: int = 0
    extra: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("accuracy", "auroc", "aupr", "auroc_distributional", "aupr_distributional"):
            v = getattr(self, name)
            if not (np.isnan(v) or 0.0 <= v <= 1.0):
                raise ValueError(f"EvalReport: {name}={v} outside [0, 1]")
        if self.time_error < 0:
            raise ValueError("EvalReport: time_error must be >= 0")

    def as_dict(self) -> dict[str, float]:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "extra"}
        out.update(self.extra)
        return out

    def save(self, path) -> None:
        text = "".join(f"{k}={int(v) if k == 'n_events' else repr(float(v))}\n" for k, v in self.as_dict().items())
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EvalReport":
        kv = read_kv(path)
        known = {f.name for f in fields(cls)} - {"extra"}
        kwargs = {k: (int(v) if k == "n_events" else float(v)) for k, v in kv.items() if k in known}
        return cls(**kwargs, extra={k: float(v) for k, v in kv.items() if k not in known})

    def csv_row(self) -> dict[str, float]:
        return self.as_dict()


def write_reports_csv(path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("write_reports_csv: no rows")
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


# ----------------------------------------------------------------- metrics

def class_accuracy(p_mean: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax(p_mean) == label; np.argmax breaks ties toward the smallest index."""
    p_mean, labels = np.asarray(p_mean), np.asarray(labels)
    if labels.size == 0:
        raise ValueError("class_accuracy: empty test set")
    return float(np.mean(np.argmax(p_mean, axis=-1) == labels))


def time_error(scores_on_grid: np.ndarray, score_at_truth: np.ndarray, t_max: float = 1.2) -> float:
    """Mean measure of {tau in [0, t_max]: g(tau) >= g(tau*)}.

    ``scores_on_grid`` is (n, N) evaluated at the N cell midpoints of [0, t_max]
    (see :func:`time_grid`); ``score_at_truth`` is (n,).
    """
    g = np.atleast_2d(np.asarray(scores_on_grid, dtype=np.float64))
    ref = np.asarray(score_at_truth, dtype=np.float64).reshape(-1, 1)
    # fraction of cells first, then one multiplication: a constant score gives exactly t_max
    return float(np.mean((g >= ref).mean(axis=1)) * t_max)


def time_grid(t_max: float = 1.2, n: int = 200) -> np.ndarray:
    """Midpoints of ``n`` equal cells on [0, t_max]."""
    return (np.arange(n) + 0.5) * (t_max / n)


def auroc_aupr(scores, labels, low_is_anomalous: bool = True) -> tuple[float, float]:
    """AUROC by the rank statistic (ties count 1/2) and step-wise AUPR (average precision).

    ``labels`` are 1 for anomalies; when ``low_is_anomalous`` the scores are
    negated so that larger always means more anomalous.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if y.all() or not y.any():
        raise ValueError("auroc_aupr: labels must contain both classes")
    if low_is_anomalous:
        s = -s
    pos, neg = s[y], s[~y]
    order = np.sort(neg)
    greater = np.searchsorted(order, pos, side="left")
    ties = np.searchsorted(order, pos, side="right") - greater
    auroc = float((greater + 0.5 * ties).sum() / (pos.size * neg.size))

    # average precision over distinct thresholds, descending
    idx = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[idx], y[idx]
    last = np.r_[np.flatnonzero(np.diff(s_sorted)), s_sorted.size - 1]
    tp = np.cumsum(y_sorted)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    aupr = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return auroc, aupr


def time_mse(tau_hat, tau_true) -> float:
    tau_hat, tau_true = np.asarray(tau_hat, dtype=np.float64), np.asarray(tau_true, dtype=np.float64)
    return float(np.mean((tau_hat - tau_true) ** 2))


# ------------------------------------------------------------------ oracles

def truncated_normal_pdf(x, mu, sigma):
    """Density of N(mu, sigma^2) restricted to x > 0."""
    return norm.pdf(x, mu, sigma) / norm.sf(0.0, mu, sigma)


def bayes_predict_3g(gaps) -> np.ndarray:
    """Oracle class for raw 3-G gaps: argmax_c of the positive-truncated N(c + 1, 1) density."""
    gaps = np.asarray(gaps, dtype=np.float64)
    dens = np.stack([truncated_normal_pdf(gaps, c + 1.0, 1.0) for c in range(3)], axis=-1)
    return np.argmax(dens, axis=-1)


def bayes_oracle_3g(classes, gaps) -> float:
    """Accuracy of the Bayes rule on raw (unnormalised) gaps preceding each event."""
    return float(np.mean(bayes_predict_3g(gaps) == np.asarray(classes)))


def bayes_predict_graph(spec: GraphSpec, prev_nodes, gaps) -> np.ndarray:
    prev_nodes = np.asarray(prev_nodes)
    gaps = np.asarray(gaps, dtype=np.float64)
    out = np.empty(prev_nodes.shape, dtype=np.int64)
    for i, (u, g) in enumerate(zip(prev_nodes, gaps)):
        if not 0 <= u < spec.n_nodes:
            raise ValueError(f"bayes_oracle_graph: unknown previous node {u}")
        edges = spec.out_edges(int(u))
        if edges.size == 0:
            raise ValueError(f"bayes_oracle_graph: node {u} has no outgoing edges")
        post = spec.prob[edges] * truncated_normal_pdf(g, spec.mu[edges], spec.sigma[edges])
        out[i] = spec.dst[edges[np.argmax(post)]]
    return out


def bayes_oracle_graph(spec: GraphSpec, prev_nodes, classes, gaps) -> float:
    """Accuracy ceiling given the previous node and the observed raw gap."""
    return float(np.mean(bayes_predict_graph(spec, prev_nodes, gaps) == np.asarray(classes)))


# ------------------------------------------------------ model-driven helpers

@dataclass
class SequencePredictions:
    """Head evaluations of one sequence's transitions (events 1..L-1)."""

    classes: np.ndarray
    gaps: np.ndarray
    points: object


def predict_sequence(model, classes, gaps) -> SequencePredictions:
    classes, gaps = np.asarray(classes), np.asarray(gaps, dtype=np.float64)
    if len(classes) < 2:
        raise ValueError("predict_sequence: need at least two events")
    with nd.no_grad():
        states = model.encode(classes[None, :-1], gaps[None, :-1])[0]
        points = model.points(states)
    return SequencePredictions(classes[1:], gaps[1:], points)


def model_accuracy(model, preds: SequencePredictions, samples: int = 1000, seed: int = 0) -> float:
    p = model.mean_probs(preds.points, preds.gaps[:, None], samples, seed)[:, 0]
    return class_accuracy(p, preds.classes)


def model_time_error(model, preds: SequencePredictions, t_max: float = 1.2, n_cells: int = 200,
                     samples: int = 200, seed: int = 0) -> float:
    """Time-Error with the observed-class mean probability as score.

    The truth and the grid are scored in one call so Monte Carlo estimates
    share the same noise draws.
    """
    grid = time_grid(t_max, n_cells)
    queries = np.concatenate([preds.gaps[:, None], np.broadcast_to(grid, (len(preds.gaps), n_cells))], axis=1)
    p = model.mean_probs(preds.points, queries, samples, seed)
    g = np.take_along_axis(p, np.broadcast_to(preds.classes[:, None, None], p.shape[:-1] + (1,)), axis=-1)[..., 0]
    return time_error(g[:, 1:], g[:, 0], t_max)


def model_time_mse(model, preds: SequencePredictions, horizon: float = 5.0) -> float:
    if model.spec.kind != "fd-dir-pp":
        raise ValueError("time_mse: requires a point-process head")
    tau_hat, _ = fd.expected_next_time(preds.points, model.spec.nu, horizon)
    return time_mse(tau_hat, preds.gaps)
