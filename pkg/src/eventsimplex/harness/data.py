"""Split, normalise and window event data for training and evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..events import EventSequence, TimeTransform, normalized_gaps, num_classes, split


@dataclass
class PreparedSequence:
    """One sequence with gaps normalised; ``raw_gaps[0]`` and ``gaps[0]`` are 0 (input only)."""

    sequence: EventSequence
    classes: np.ndarray
    gaps: np.ndarray
    raw_gaps: np.ndarray


@dataclass
class PreparedData:
    transform: TimeTransform
    n_classes: int
    train: list[PreparedSequence]
    validation: list[PreparedSequence]
    test: list[PreparedSequence]


def prepare_sequence(seq: EventSequence, transform: TimeTransform) -> PreparedSequence:
    raw = np.zeros(len(seq))
    raw[1:] = seq.gaps
    return PreparedSequence(seq, seq.classes, normalized_gaps(seq, transform), raw)


def prepare(data: list[EventSequence], mode: str = "chronological", eps: float = 1e-8,
            n_classes: int | None = None, seed: int = 0) -> PreparedData:
    """Split 60/20/20 and fit the time transform on training gaps only."""
    tr, va, te = split(data, mode, seed=seed)
    train_gaps = np.concatenate([s.gaps for s in tr])
    transform = TimeTransform.fit(train_gaps, eps)
    C = n_classes or num_classes(data)
    prep = lambda part: [prepare_sequence(s, transform) for s in part if len(s) >= 2]  # noqa: E731
    return PreparedData(transform, C, prep(tr), prep(va), prep(te))


@dataclass
class WindowBatchSource:
    """Every transition as a left-padded history window of at most ``window`` events."""

    classes: np.ndarray      # (S, W) history classes
    gaps: np.ndarray         # (S, W) history gaps
    mask: np.ndarray         # (S, W) 1 where the history slot is real
    target_class: np.ndarray
    target_gap: np.ndarray

    def __len__(self) -> int:
        return len(self.target_class)

    def batches(self, batch: int, rng: np.random.Generator):
        order = rng.permutation(len(self))
        for i in range(0, len(order), batch):
            idx = order[i:i + batch]
            yield (self.classes[idx], self.gaps[idx], self.mask[idx],
                   self.target_class[idx], self.target_gap[idx])


def make_windows(seqs: list[PreparedSequence], window: int) -> WindowBatchSource:
    rows_c, rows_g, rows_m, tc, tg = [], [], [], [], []
    for s in seqs:
        for j in range(1, len(s.classes)):
            lo = max(0, j - window)
            n = j - lo
            c = np.zeros(window, dtype=np.int64)
            g = np.zeros(window)
            m = np.zeros(window)
            c[window - n:] = s.classes[lo:j]
            g[window - n:] = s.gaps[lo:j]
            m[window - n:] = 1.0
            rows_c.append(c)
            rows_g.append(g)
            rows_m.append(m)
            tc.append(s.classes[j])
            tg.append(s.gaps[j])
    if not tc:
        raise ValueError("make_windows: no transitions in the training data")
    return WindowBatchSource(np.array(rows_c), np.array(rows_g), np.array(rows_m),
                             np.array(tc), np.array(tg))
