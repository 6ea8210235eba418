"""Event data model, time normalisation, splits, synthetic generators and file I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class EventFormatError(ValueError):
    """Malformed or inconsistent event data."""


@dataclass(frozen=True)
class Event:
    class_id: int
    timestamp: float


@dataclass
class EventSequence:
    """Events of one sequence as parallel arrays, ordered by time."""

    sequence_id: str
    classes: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.classes.shape != self.times.shape or self.classes.ndim != 1:
            raise EventFormatError(f"sequence {self.sequence_id}: classes and times must be 1-D and aligned")
        if np.any(np.diff(self.times) <= 0):
            raise EventFormatError(f"sequence {self.sequence_id}: timestamps must strictly increase")

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def events(self) -> list[Event]:
        return [Event(int(c), float(t)) for c, t in zip(self.classes, self.times)]

    @property
    def gaps(self) -> np.ndarray:
        """Gaps t_j - t_{j-1}; one shorter than the sequence."""
        return np.diff(self.times)

    def slice(self, start: int, stop: int, suffix: str = "") -> "EventSequence":
        return EventSequence(self.sequence_id + suffix, self.classes[start:stop], self.times[start:stop])

    def __eq__(self, other) -> bool:
        return (isinstance(other, EventSequence) and self.sequence_id == other.sequence_id
                and np.array_equal(self.classes, other.classes)
                and np.array_equal(self.times, other.times))


def num_classes(sequences: Iterable[EventSequence]) -> int:
    return int(max(s.classes.max() for s in sequences if len(s))) + 1


# ------------------------------------------------------------ time transform

@dataclass
class TimeTransform:
    """Log transform followed by min-max scaling fitted on training gaps."""

    eps: float = 1e-8
    log_min: float = math.nan
    log_max: float = math.nan

    @classmethod
    def fit(cls, train_gaps: np.ndarray, eps: float = 1e-8) -> "TimeTransform":
        logs = np.log(np.asarray(train_gaps, dtype=np.float64) + eps)
        if logs.size < 2 or not logs.max() > logs.min():
            raise ValueError("time transform: training gaps are all identical (degenerate normalisation)")
        return cls(eps, float(logs.min()), float(logs.max()))

    def __call__(self, gaps) -> np.ndarray:
        logs = np.log(np.asarray(gaps, dtype=np.float64) + self.eps)
        return (logs - self.log_min) / (self.log_max - self.log_min)

    def inverse(self, normalized) -> np.ndarray:
        logs = np.asarray(normalized) * (self.log_max - self.log_min) + self.log_min
        return np.exp(logs) - self.eps


def fit_apply_time_transform(train_gaps, all_gaps, eps: float = 1e-8) -> np.ndarray:
    """Fit on ``train_gaps`` and normalise ``all_gaps``; values are not clipped."""
    return TimeTransform.fit(train_gaps, eps)(all_gaps)


def normalized_gaps(seq: EventSequence, transform: TimeTransform) -> np.ndarray:
    """Per-event normalised gap aligned with ``seq.classes``; the first entry is 0."""
    out = np.zeros(len(seq))
    if len(seq) > 1:
        out[1:] = transform(seq.gaps)
    return out


# --------------------------------------------------------------- generators

def _positive_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    value = rng.normal(mean, std)
    while value <= 0:
        value = rng.normal(mean, std)
    return value


def _from_gaps(seq_id: str, classes, gaps) -> EventSequence:
    return EventSequence(seq_id, np.asarray(classes), np.cumsum(gaps))


def generate_3g(n: int, seed: int) -> EventSequence:
    """Three classes; the gap preceding class i is N(i + 1, 1) restricted to positive values."""
    if n < 1:
        raise ValueError("generate_3g: n must be >= 1")
    rng = np.random.default_rng(seed)
    classes = np.empty(n, dtype=np.int64)
    gaps = np.empty(n)
    for i in range(n):
        c = int(rng.choice(3, 1)[0])
        classes[i] = c
        gaps[i] = _positive_normal(rng, c + 1, 1.0)
    return _from_gaps("3g", classes, gaps)


MULTIG_MODES = {0: ((1.0, 0.5), (3.0, 0.5)), 1: ((2.0, 0.5),)}


def generate_multig(n: int, seed: int) -> EventSequence:
    """Two classes: class 0 gaps mix N(1, .5^2) and N(3, .5^2) evenly, class 1 gaps are N(2, .5^2)."""
    if n < 1:
        raise ValueError("generate_multig: n must be >= 1")
    rng = np.random.default_rng(seed)
    classes = np.empty(n, dtype=np.int64)
    gaps = np.empty(n)
    for i in range(n):
        c = int(rng.choice(2, 1)[0])
        modes = MULTIG_MODES[c]
        mean, std = modes[int(rng.integers(len(modes)))] if len(modes) > 1 else modes[0]
        classes[i] = c
        gaps[i] = _positive_normal(rng, mean, std)
    return _from_gaps("multig", classes, gaps)


@dataclass
class GraphSpec:
    """Directed graph whose random walk emits events; node ids are class ids."""

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    prob: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.prob = np.asarray(self.prob, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def validate(self) -> None:
        for node in range(self.n_nodes):
            out = self.src == node
            if not out.any():
                raise ValueError(f"graph spec: node {node} has no outgoing edges")
            if abs(self.prob[out].sum() - 1.0) > 1e-9:
                raise ValueError(f"graph spec: outgoing probabilities of node {node} do not sum to 1")
        if np.any(self.sigma <= 0):
            raise ValueError("graph spec: every edge needs sigma > 0")
        if np.any((self.dst < 0) | (self.dst >= self.n_nodes)):
            raise ValueError("graph spec: edge endpoint out of range")

    def out_edges(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.src == node)

    def save(self, path) -> None:
        lines = [f"n_nodes={self.n_nodes}", f"n_edges={self.n_edges}", f"seed={self.seed}"]
        for k in range(self.n_edges):
            lines.append(f"edge.{k}={self.src[k]},{self.dst[k]},{float(self.prob[k])!r},"
                         f"{float(self.mu[k])!r},{float(self.sigma[k])!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GraphSpec":
        kv = read_kv(path)
        rows = [kv[f"edge.{k}"].split(",") for k in range(int(kv["n_edges"]))]
        cols = list(zip(*rows)) if rows else [(), (), (), (), ()]
        spec = cls(int(kv["n_nodes"]), [int(v) for v in cols[0]], [int(v) for v in cols[1]],
                   [float(v) for v in cols[2]], [float(v) for v in cols[3]],
                   [float(v) for v in cols[4]], int(kv.get("seed", 0)))
        spec.validate()
        return spec


def make_graph_spec(n_nodes: int = 10, n_edges: int = 48, seed: int = 0) -> GraphSpec:
    """Random directed graph with ``n_edges`` distinct non-loop edges, every node with an exit.

    Outgoing probabilities are Dirichlet(1, ..., 1) per node, crossing times
    N(mu, sigma^2) with mu ~ U(0.5, 5) and sigma ~ U(0.1, 1).
    """
    if n_edges < n_nodes or n_edges > n_nodes * (n_nodes - 1):
        raise ValueError("make_graph_spec: edge count incompatible with node count")
    rng = np.random.default_rng(seed)
    pairs = np.array([(i, j) for i in range(n_nodes) for j in range(n_nodes) if i != j])
    while True:
        chosen = pairs[np.sort(rng.choice(len(pairs), n_edges, replace=False))]
        if len(np.unique(chosen[:, 0])) == n_nodes:
            break
    prob = np.empty(n_edges)
    for node in range(n_nodes):
        out = np.flatnonzero(chosen[:, 0] == node)
        prob[out] = rng.dirichlet(np.ones(len(out)))
    mu = rng.uniform(0.5, 5.0, n_edges)
    sigma = rng.uniform(0.1, 1.0, n_edges)
    spec = GraphSpec(n_nodes, chosen[:, 0], chosen[:, 1], prob, mu, sigma, seed)
    spec.validate()
    return spec


def generate_graph(spec: GraphSpec, n: int, seed: int | None = None) -> EventSequence:
    """Random walk on ``spec``; each event is the destination node of the crossed edge."""
    spec.validate()
    if n < 1:
        raise ValueError("generate_graph: n must be >= 1")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    node = int(rng.integers(spec.n_nodes))
    exits = [spec.out_edges(v) for v in range(spec.n_nodes)]
    classes = np.empty(n, dtype=np.int64)
    gaps = np.empty(n)
    for i in range(n):
        edges = exits[node]
        e = int(edges[rng.choice(len(edges), p=spec.prob[edges] / spec.prob[edges].sum())])
        gaps[i] = _positive_normal(rng, spec.mu[e], spec.sigma[e])
        node = int(spec.dst[e])
        classes[i] = node
    return _from_gaps("graph", classes, gaps)


# ---------------------------------------------------------------- anomalies

@dataclass
class AnomalyLabels:
    flags: np.ndarray
    seed: int
    fraction: float = 0.10

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def save(self, path) -> None:
        idx = ",".join(str(i) for i in self.indices)
        Path(path).write_text(f"seed={self.seed}\nfraction={self.fraction!r}\n"
                              f"n={len(self.flags)}\nflagged={idx}\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AnomalyLabels":
        kv = read_kv(path)
        flags = np.zeros(int(kv["n"]), dtype=bool)
        if kv.get("flagged"):
            flags[[int(i) for i in kv["flagged"].split(",")]] = True
        return cls(flags, int(kv["seed"]), float(kv["fraction"]))


def inject_anomalies(gaps: np.ndarray, fraction: float = 0.10, seed: int = 0):
    """Replace a random ``fraction`` of normalised gaps by Uniform(0, 1) draws.

    Returns the perturbed copy and the labels; untouched gaps are kept bit-exactly.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("inject_anomalies: fraction must lie in (0, 1)")
    gaps = np.asarray(gaps, dtype=np.float64)
    rng = np.random.default_rng(seed)
    k = int(round(fraction * gaps.size))
    chosen = rng.choice(gaps.size, k, replace=False)
    out = gaps.copy()
    out[chosen] = rng.uniform(0.0, 1.0, k)
    flags = np.zeros(gaps.size, dtype=bool)
    flags[chosen] = True
    return out, AnomalyLabels(flags, seed, fraction)


# -------------------------------------------------------------------- splits

def split(data: Sequence[EventSequence], mode: str = "chronological",
          ratios: tuple[float, float, float] = (0.6, 0.2, 0.2), seed: int = 0):
    """Train/validation/test partition.

    ``chronological`` cuts every sequence at the cumulative ratio quantiles of
    its event count; ``by-sequence`` shuffles sequence ids (seeded) and
    partitions them.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split: ratios must sum to 1")
    c1, c2 = ratios[0], ratios[0] + ratios[1]
    if mode == "chronological":
        parts: list[list[EventSequence]] = [[], [], []]
        for seq in data:
            a, b = round(c1 * len(seq)), round(c2 * len(seq))
            for k, (lo, hi) in enumerate(((0, a), (a, b), (b, len(seq)))):
                if hi > lo:
                    parts[k].append(seq.slice(lo, hi))
    elif mode == "by-sequence":
        order = np.random.default_rng(seed).permutation(len(data))
        a, b = round(c1 * len(data)), round(c2 * len(data))
        parts = [[data[i] for i in order[:a]], [data[i] for i in order[a:b]],
                 [data[i] for i in order[b:]]]
    else:
        raise ValueError(f"split: unknown mode {mode!r}")
    for name, part in zip(("train", "validation", "test"), parts):
        if not part:
            raise ValueError(f"split: empty {name} split")
    return parts[0], parts[1], parts[2]


# ----------------------------------------------------------------------- I/O

def read_kv(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise EventFormatError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_events(path, sequences: Iterable[EventSequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            for c, t in zip(seq.classes, seq.times):
                fh.write(f"{seq.sequence_id},{int(c)},{float(t)!r}\n")


def read_events(path, n_classes: int | None = None) -> list[EventSequence]:
    """Parse ``sequence_id,class_id,timestamp`` lines; errors carry the line number."""
    classes: dict[str, list[int]] = {}
    times: dict[str, list[float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise EventFormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            sid, c_raw, t_raw = parts
            try:
                c, t = int(c_raw), float(t_raw)
            except ValueError:
                raise EventFormatError(f"{path}:{lineno}: cannot parse {line!r}") from None
            if c < 0 or (n_classes is not None and c >= n_classes):
                raise EventFormatError(f"{path}:{lineno}: unknown class id {c}")
            if not math.isfinite(t):
                raise EventFormatError(f"{path}:{lineno}: non-finite timestamp")
            seq_t = times.setdefault(sid, [])
            if seq_t and t <= seq_t[-1]:
                raise EventFormatError(f"{path}:{lineno}: timestamp {t!r} does not increase "
                                       f"within sequence {sid!r}")
            seq_t.append(t)
            classes.setdefault(sid, []).append(c)
    return [EventSequence(sid, classes[sid], times[sid]) for sid in times]
