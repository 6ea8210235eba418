"""Evaluation of checkpoints, plot-data tables and figure rendering."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .. import numdiff as nd
from .. import dirichlet as fd
from .. import wgp
from ..evalkit import (EvalReport, auroc_aupr, class_accuracy, model_time_error, model_time_mse,
                       predict_sequence)
from ..events import EventSequence, inject_anomalies, num_classes, split
from .checkpoint import Checkpoint
from .data import prepare_sequence

METRICS = ("accuracy", "time_error", "time_mse")


def test_split(ckpt: Checkpoint, data: list[EventSequence]):
    """Test split of ``data`` under the checkpoint's split mode, normalised with its transform."""
    if num_classes(data) > ckpt.n_classes:
        raise ValueError(f"evaluate: data has {num_classes(data)} classes, checkpoint expects {ckpt.n_classes}")
    _, _, test = split(data, ckpt.config.split, seed=ckpt.config.seed)
    return [prepare_sequence(s, ckpt.transform) for s in test if len(s) >= 2]


def evaluate(ckpt: Checkpoint, data: list[EventSequence], metrics=("accuracy", "time_error"),
             t_max: float = 1.2, n_cells: int = 200, samples: int = 1000, seed: int = 0) -> EvalReport:
    """Run the requested metrics on the test split."""
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"evaluate: unknown metrics {sorted(unknown)}")
    model = ckpt.build_model()
    preds = [predict_sequence(model, s.classes, s.gaps) for s in test_split(ckpt, data)]
    n = sum(len(p.classes) for p in preds)
    out = {"n_events": n}
    weights = np.array([len(p.classes) for p in preds], dtype=float) / n
    if "accuracy" in metrics:
        accs = [class_accuracy(model.mean_probs(p.points, p.gaps[:, None], samples, seed)[:, 0], p.classes)
                for p in preds]
        out["accuracy"] = float(np.dot(weights, accs))
    if "time_error" in metrics:
        tes = [model_time_error(model, p, t_max, n_cells, min(samples, 200), seed) for p in preds]
        out["time_error"] = float(np.dot(weights, tes))
    if "time_mse" in metrics and model.spec.kind == "fd-dir-pp":
        out["time_mse"] = float(np.dot(weights, [model_time_mse(model, p) for p in preds]))
    return EvalReport(**out)


def anomaly_scores(ckpt: Checkpoint, data: list[EventSequence], fraction: float = 0.1, seed: int = 0,
                   samples: int = 1000):
    """Perturb test gaps and score every transition.

    Returns ``(labels, categorical, distributional)`` arrays; the
    categorical score is the mean probability of the observed class, the
    distributional one is q_c (WGP-LN) or alpha_c (FD-Dir) at the observed gap.
    """
    model = ckpt.build_model()
    labels, cat, dist = [], [], []
    for k, s in enumerate(test_split(ckpt, data)):
        perturbed, lab = inject_anomalies(s.gaps[1:], fraction, seed + k)
        gaps = np.r_[0.0, perturbed]
        p = predict_sequence(model, s.classes, gaps)
        probs = model.mean_probs(p.points, p.gaps[:, None], samples, seed)[:, 0]
        cat.append(probs[np.arange(len(p.classes)), p.classes])
        dist.append(model.distributional_score(p.points, p.gaps[:, None], p.classes[:, None], samples, seed)[:, 0])
        labels.append(lab.flags)
    return np.concatenate(labels), np.concatenate(cat), np.concatenate(dist)


def detect_anomalies(ckpt: Checkpoint, data: list[EventSequence], fraction: float = 0.1, seed: int = 0,
                     samples: int = 1000) -> tuple[EvalReport, dict]:
    labels, cat, dist = anomaly_scores(ckpt, data, fraction, seed, samples)
    auroc, aupr = auroc_aupr(cat, labels)
    auroc_d, aupr_d = auroc_aupr(dist, labels)
    report = EvalReport(auroc=auroc, aupr=aupr, auroc_distributional=auroc_d, aupr_distributional=aupr_d,
                        n_events=len(labels))
    return report, {"label": labels, "categorical": cat, "distributional": dist}


# ------------------------------------------------------------- plot data

def plot_columns(kind: str, C: int) -> list[str]:
    cols = ["tau"] + [f"p{c}" for c in range(C)] + [f"q{c}" for c in range(C)]
    if kind == "wgp-ln":
        cols += [f"mu{c}" for c in range(C)] + [f"var{c}" for c in range(C)]
    else:
        cols += [f"alpha{c}" for c in range(C)]
    return cols


def emit_plot_data(ckpt: Checkpoint, classes, gaps, grid, samples: int = 1000, seed: int = 0) -> np.ndarray:
    """Head evaluations on ``grid`` after encoding a prefix (normalised gaps).

    Rows are ``tau, p_c..., q_c..., alpha_c...`` (FD) or ``..., mu_c..., var_c...`` (WGP).
    """
    model = ckpt.build_model()
    classes, gaps = np.asarray(classes), np.asarray(gaps, dtype=np.float64)
    if classes.size < 1:
        raise ValueError("emit_plot_data: prefix must contain at least one event")
    grid = np.asarray(grid, dtype=np.float64)
    with nd.no_grad():
        points = model.points(model.encode(classes[None], gaps[None])[0, -1])
        out = model.head_outputs(points, grid)
    p = model.mean_probs(points, grid, samples, seed)
    if model.spec.is_wgp:
        q = wgp.ln_confidence(out["mu"].data, out["var"].data, None, samples, seed)
        extra = [out["mu"].data, out["var"].data]
    else:
        q = fd.dirichlet_confidence(out["alpha"].data, None, samples, seed)
        extra = [out["alpha"].data]
    return np.column_stack([grid, p, q, *extra])


def write_table(path, columns: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=np.float64)


# ----------------------------------------------------------------- figures

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_evolution(columns: list[str], table: np.ndarray, path, title: str = "") -> Path:
    """Two panels: mean class probabilities, then alpha (FD) or logit mean +- sd (WGP)."""
    plt = _pyplot()
    col = {c: i for i, c in enumerate(columns)}
    tau = table[:, 0]
    C = sum(1 for c in columns if c.startswith("p"))
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for c in range(C):
        ax1.plot(tau, table[:, col[f"p{c}"]], label=f"class {c}")
    ax1.set_ylabel("mean probability")
    ax1.set_ylim(0, 1)
    ax1.legend(loc="upper right", fontsize="small")
    for c in range(C):
        if f"alpha{c}" in col:
            ax2.plot(tau, table[:, col[f"alpha{c}"]], label=f"alpha {c}")
            ax2.set_ylabel("concentration")
        else:
            mu, sd = table[:, col[f"mu{c}"]], np.sqrt(table[:, col[f"var{c}"]])
            ax2.plot(tau, mu, label=f"logit {c}")
            ax2.fill_between(tau, mu - sd, mu + sd, alpha=0.2)
            ax2.set_ylabel("logit mean +- sd")
    ax2.set_xlabel("normalised time since last event")
    ax2.legend(loc="upper right", fontsize="small")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_simplex(grid_rows: np.ndarray, path, title: str = "") -> Path:
    """Dirichlet density over the triangle from ``u, v, density`` rows."""
    plt = _pyplot()
    u, v, dens = grid_rows.T
    # class-0 vertex at (0, 0), class-1 at (1, 0), class-2 at the apex
    x = v + 0.5 * (1.0 - u - v)
    y = (np.sqrt(3) / 2) * (1.0 - u - v)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    tc = ax.tricontourf(x, y, dens, levels=30)
    fig.colorbar(tc, ax=ax, label="density")
    ax.plot([0, 1, 0.5, 0], [0, 0, np.sqrt(3) / 2, 0], "k-", lw=1)
    ax.set_aspect("equal")
    ax.axis("off")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_roc(scores: dict, path) -> Path:
    """ROC curves of the categorical and distributional anomaly scores (low score = anomalous)."""
    plt = _pyplot()
    labels = np.asarray(scores["label"]).astype(bool)
    fig, ax = plt.subplots(figsize=(5, 5))
    for name in ("categorical", "distributional"):
        s = -np.asarray(scores[name])
        order = np.argsort(-s, kind="mergesort")
        tpr = np.r_[0.0, np.cumsum(labels[order]) / labels.sum()]
        fpr = np.r_[0.0, np.cumsum(~labels[order]) / (~labels).sum()]
        auroc, _ = auroc_aupr(scores[name], labels)
        ax.plot(fpr, tpr, label=f"{name} (AUROC {auroc:.3f})")
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_bars(labels: list[str], means, stds, path, ylabel: str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(labels) + 2), 4))
    ax.bar(range(len(labels)), means, yerr=stds, capsize=3)
    ax.set_xticks(range(len(labels)), labels, rotation=30, ha="right", fontsize="small")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
