"""Training loop with early stopping and the hyper-parameter grid search."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import numdiff as nd
from ..evalkit import model_accuracy, predict_sequence
from ..model import EventModel
from ..objectives import event_loss, mean_variance_regularizer
from .checkpoint import Checkpoint
from .config import TrainConfig
from .data import PreparedData, make_windows

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    model: EventModel
    checkpoint: Checkpoint
    history: list[EpochRecord]
    best_epoch: int
    best_val_loss: float

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    def log_lines(self) -> list[str]:
        return [f"epoch={r.epoch} train_loss={r.train_loss:.6f} val_loss={r.val_loss:.6f}"
                for r in self.history]


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record ``value``; returns True when training should stop."""
        if value < self.best:
            self.best, self.best_epoch, self.bad = value, epoch, 0
            return False
        self.bad += 1
        return self.bad >= self.patience


def batch_loss(model: EventModel, batch, reg, rng) -> nd.Tensor:
    classes, gaps, mask, tc, tg = batch
    states = model.encode(classes, gaps, mask)
    points = model.points(states[:, -1])
    loss = event_loss(model, points, tc, tg)
    if reg is not None:
        loss = loss + mean_variance_regularizer(model, points, reg, rng).sum(axis=-1)
    return loss.mean()


def evaluation_loss(model: EventModel, seqs) -> float:
    """Mean per-transition loss (no regularizer) over full-sequence passes."""
    total, count = 0.0, 0
    with nd.no_grad():
        for s in seqs:
            if len(s.classes) < 2:
                continue
            pred = predict_sequence(model, s.classes, s.gaps)
            total += float(event_loss(model, pred.points, pred.classes, pred.gaps).data.sum())
            count += len(pred.classes)
    if count == 0:
        raise ValueError("evaluation_loss: no transitions")
    return total / count


def train(config: TrainConfig, data: PreparedData, progress=None) -> TrainResult:
    """Minimise the configured objective on the training split with Adam.

    The validation loss is checked after each epoch; the parameters of the
    best epoch are kept and returned in the checkpoint.
    """
    rng = np.random.default_rng(config.seed)
    model = EventModel(config.model_spec(data.n_classes), seed=config.seed)
    params = list(model.params.values())
    opt = nd.AdamState.for_params(params, lr=config.lr, l2=config.l2)
    source = make_windows(data.train, config.window)
    reg = config.regularizer()
    stopper = EarlyStopping(config.patience)
    best_params = {k: p.data.copy() for k, p in model.params.items()}
    history: list[EpochRecord] = []

    for epoch in range(1, config.epochs + 1):
        losses = []
        for b, batch in enumerate(source.batches(config.batch, rng)):
            loss = batch_loss(model, batch, reg, rng)
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"train: non-finite loss at epoch {epoch}, batch {b}")
            try:
                nd.adam_step(opt, params, nd.backward(loss, params))
            except FloatingPointError as exc:
                raise FloatingPointError(f"train: epoch {epoch}, batch {b}: {exc}") from None
            losses.append(float(loss.data))
        val = evaluation_loss(model, data.validation)
        if not np.isfinite(val):
            raise FloatingPointError(f"train: non-finite validation loss at epoch {epoch}")
        history.append(EpochRecord(epoch, float(np.mean(losses)), val))
        if progress:
            progress(history[-1])
        stop = stopper.update(epoch, val)
        if stopper.best_epoch == epoch:
            best_params = {k: p.data.copy() for k, p in model.params.items()}
        if stop:
            break

    for k, p in model.params.items():
        p.data = best_params[k]
    ckpt = Checkpoint.from_model(model, config, data.transform,
                                 {"best_epoch": str(stopper.best_epoch), "epochs_run": str(len(history))})
    return TrainResult(model, ckpt, history, stopper.best_epoch, stopper.best)


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepResult:
    rows: list[dict] = field(default_factory=list)
    selected: dict | None = None
    best: TrainResult | None = None

    def summary(self) -> list[dict]:
        cells: dict[tuple, list[float]] = {}
        for r in self.rows:
            cells.setdefault(r["cell"], []).append(r["val_accuracy"])
        return [{"cell": k, "mean_val_accuracy": float(np.mean(v)), "std_val_accuracy": float(np.std(v)),
                 "runs": len(v)} for k, v in cells.items()]


def validation_accuracy(model: EventModel, seqs) -> float:
    correct, total = 0.0, 0
    for s in seqs:
        pred = predict_sequence(model, s.classes, s.gaps)
        correct += model_accuracy(model, pred) * len(pred.classes)
        total += len(pred.classes)
    return correct / total


def grid_search(base: TrainConfig, grid: dict[str, list], data: PreparedData, seeds: int = 5,
                progress=None) -> SweepResult:
    """Train every cell of the Cartesian grid with ``seeds`` seeds.

    The cell with the highest mean validation accuracy is selected, and its
    best seed's checkpoint (highest validation accuracy) is promoted.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid_search: grid must be non-empty on every axis")
    keys = sorted(grid)
    result = SweepResult()
    cell_runs: dict[tuple, list[tuple[float, TrainResult]]] = {}
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = tuple(zip(keys, values))
        for s in range(seeds):
            cfg = base.replace(**dict(cell), seed=base.seed + s)
            run = train(cfg, data)
            acc = validation_accuracy(run.model, data.validation)
            row = {**dict(cell), "seed": cfg.seed, "cell": cell, "val_accuracy": acc,
                   "val_loss": run.best_val_loss, "epochs": run.epochs_run}
            result.rows.append(row)
            cell_runs.setdefault(cell, []).append((acc, run))
            if progress:
                progress(row)
    best_cell = max(cell_runs, key=lambda c: np.mean([a for a, _ in cell_runs[c]]))
    result.selected = dict(best_cell)
    result.best = max(cell_runs[best_cell], key=lambda t: t[0])[1]
    return result
