"""Training configuration with flat key-value persistence."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..events import read_kv
from ..model import MODEL_KINDS, ModelSpec
from ..objectives import RegularizerConfig


@dataclass
class TrainConfig:
    model: str = "fd-dir"
    hidden: int = 32
    batch: int = 16
    l2: float = 0.0
    lr: float = 1e-3
    epochs: int = 100
    patience: int = 5
    n_points: int | None = None
    gamma: float = 1.0
    jitter: float = 1e-6
    nu: float = 0.0
    loss: str = "uce"
    alpha_reg: float = 1e-3
    beta_reg: float = 1e-3
    reg_horizon: float = 1.2
    reg_samples: int = 10
    quad_nodes: int | None = None
    window: int = 64
    seed: int = 0
    split: str = "chronological"
    eps: float = 1e-8

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"TrainConfig: unknown model {self.model!r}")
        for name in ("hidden", "batch", "epochs", "patience", "window", "reg_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"TrainConfig: {name} must be >= 1")
        for name in ("lr", "gamma", "jitter", "reg_horizon", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"TrainConfig: {name} must be > 0")
        if self.l2 < 0 or self.alpha_reg < 0 or self.beta_reg < 0:
            raise ValueError("TrainConfig: l2 and regularizer coefficients must be >= 0")

    def model_spec(self, n_classes: int) -> ModelSpec:
        return ModelSpec(self.model, n_classes, self.hidden, self.n_points, self.gamma, self.jitter,
                         self.nu, self.quad_nodes, self.loss)

    def regularizer(self) -> RegularizerConfig:
        return RegularizerConfig(self.alpha_reg, self.beta_reg, None, self.reg_horizon, self.reg_samples)

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})

    # ------------------------------------------------------------- text
    def to_kv(self) -> dict[str, str]:
        return {k: ("" if v is None else str(v)) for k, v in asdict(self).items()}

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(kv) - set(types)
        if unknown:
            raise ValueError(f"TrainConfig: unknown keys {sorted(unknown)}")
        return cls(**{k: parse_field(types[k], v) for k, v in kv.items()})

    def save(self, path) -> None:
        Path(path).write_text("".join(f"{k}={v}\n" for k, v in self.to_kv().items()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_kv(read_kv(path))


def parse_field(type_name: str, text: str):
    text = text.strip()
    if "None" in type_name and text in ("", "None"):
        return None
    if type_name.startswith("int"):
        return int(text)
    if type_name.startswith("float"):
        return float(text)
    return text
