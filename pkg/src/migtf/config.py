"""Training configuration and built-in per-dataset hyperparameters."""

from __future__ import annotations

import os
import re
from dataclasses import asdict, dataclass, fields, replace

MODEL_KINDS = ("tucker", "tptf", "migtf")

TUCKER_TABLE = {
    "WN18RR": dict(d_e=200, d_r=30, lr=0.01, epochs=500, dropout_1=0.2, dropout_2=0.2, dropout_3=0.3),
    "FB15k-237": dict(d_e=200, d_r=200, lr=0.001, epochs=500, dropout_1=0.3, dropout_2=0.4, dropout_3=0.5),
    "YAGO3-10": dict(d_e=200, d_r=30, lr=0.003, epochs=500, dropout_1=0.2, dropout_2=0.2, dropout_3=0.2),
}

TPTF_TABLE = {
    "WN18RR": dict(d_h=50, lr=0.003, beta=1.3, epochs=250, rho_e=0.005, rho_r=0.005, dropout_e=0.2, dropout_r=0.2),
    "FB15k-237": dict(d_h=50, lr=0.002, beta=1.0, epochs=150, rho_e=0.001, rho_r=0.001, dropout_e=0.3, dropout_r=0.3),
    "YAGO3-10": dict(d_h=50, lr=0.005, beta=1.1, epochs=250, rho_e=0.001, rho_r=0.001, dropout_e=0.2, dropout_r=0.2),
}

MIGTF_TABLE = {
    "WN18RR": dict(d_h=50, lr=0.003, beta=1.5, epochs=250, rho_e=0.005, rho_r=0.005, dropout_e=0.2, dropout_r=0.2),
    "FB15k-237": dict(d_h=50, lr=0.001, beta=1.0, epochs=100, rho_e=0.001, rho_r=0.001, dropout_e=0.3, dropout_r=0.3),
    "YAGO3-10": dict(d_h=50, lr=0.005, beta=1.1, epochs=150, rho_e=0.001, rho_r=0.001, dropout_e=0.2, dropout_r=0.2),
}


@dataclass(frozen=True)
class TrainConfig:
    model_kind: str = "migtf"
    d_e: int = 200
    d_r: int = 30
    d_h: int = 50
    beta: float = 1.0
    lr: float = 0.003
    epochs: int = 250
    batch_size: int = 128
    dropout_1: float = 0.0
    dropout_2: float = 0.0
    dropout_3: float = 0.0
    dropout_e: float = 0.0
    dropout_r: float = 0.0
    rho_e: float = 0.001
    rho_r: float = 0.001
    label_smoothing: float = 0.0
    batch_norm: bool = False
    mu: float = 0.5
    qr: bool = False
    seed: int = 0
    weight_decay: float = 0.0
    lr_decay: float = 1.0
    eval_every: int = 10
    dataset: str = ""
    tucker_checkpoint: str = ""

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        for name in ("d_e", "d_r", "d_h", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


def canonical_dataset(name: str) -> str | None:
    """Map a path or name such as ``data/wn18rr`` onto a table key."""
    key = re.sub(r"[^a-z0-9]", "", os.path.basename(os.path.normpath(name)).lower())
    for canon in TUCKER_TABLE:
        if re.sub(r"[^a-z0-9]", "", canon.lower()) == key:
            return canon
    return None


def table_defaults(dataset: str, model_kind: str) -> dict:
    """Hyperparameters from the built-in table for ``(dataset, model_kind)``.

    Unknown datasets yield an empty dict so the dataclass defaults apply.
    """
    canon = canonical_dataset(dataset) if dataset else None
    if canon is None:
        return {}
    out = dict(TUCKER_TABLE[canon])
    if model_kind == "tptf":
        out.update(TPTF_TABLE[canon])
    elif model_kind == "migtf":
        out.update(MIGTF_TABLE[canon])
    return out


def default_train_config(dataset: str, model_kind: str, **overrides) -> TrainConfig:
    values = table_defaults(dataset, model_kind)
    values.update(overrides)
    return TrainConfig(model_kind=model_kind, dataset=dataset, **values)
