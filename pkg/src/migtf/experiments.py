"""Curvature, mixture-weight and poisoning sweeps."""

from __future__ import annotations

from dataclasses import dataclass

from .checkpoint import from_bytes, to_bytes
from .config import TrainConfig, default_train_config
from .data import TripleStore, augment_inverse, build_filter_index, csv_string, poison, strip_inverse
from .evaluation import MetricsReport, evaluate_split
from .models import MigTfModel
from .training import fit, model_from_checkpoint

SWEEP_KINDS = ("curvature", "mu", "robustness")


class MixtureView:
    """Re-weights a trained MIG-TF model's components without touching its parameters."""

    def __init__(self, model: MigTfModel, mu: float):
        self.model = model
        self.mu = mu
        self.n_entities = model.n_entities
        self.n_relations = model.n_relations

    def scores(self, heads, rels):
        s_e, s_h = self.model.component_scores(heads, rels)
        return self.model.combine(s_e, s_h, self.mu)


@dataclass
class SweepResult:
    kind: str
    rows: list[tuple[float, MetricsReport]]

    def to_csv(self) -> str:
        return csv_string(["value", "mrr", "hr@10"],
                          [[repr(float(v)), f"{m.mrr:.6f}", f"{m.hr[10]:.6f}"] for v, m in self.rows])


def _check_values(kind, values):
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    values = [float(v) for v in values]
    if kind == "curvature" and any(v <= 0 for v in values):
        raise ValueError("curvatures must be positive")
    if kind in ("mu", "robustness") and any(not 0.0 <= v <= 1.0 for v in values):
        raise ValueError(f"{kind} values must lie in [0, 1]")
    return values


def sweep(kind: str, values, base_config: TrainConfig, store: TripleStore,
          model: MigTfModel | None = None, split: str = "test") -> SweepResult:
    """One metrics row per swept value.

    ``curvature`` retrains the hyperbolic term per value, ``mu`` re-scores the
    given trained MIG-TF ``model`` and ``robustness`` retrains on poisoned train
    data while evaluating on the clean split.
    """
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}")
    values = _check_values(kind, values)
    clean = store if store.augmented else augment_inverse(store)
    filt = build_filter_index(clean)
    rows = []
    if kind == "mu":
        if model is None:
            raise ValueError("the mu sweep needs a trained MIG-TF model")
        for mu in values:
            rows.append((mu, evaluate_split(MixtureView(model, mu), clean, split, filt)))
    elif kind == "curvature":
        for beta in values:
            trained = fit(base_config.replace(beta=beta), clean).model
            rows.append((beta, evaluate_split(trained, clean, split, filt)))
    else:
        base = strip_inverse(clean)
        for alpha in values:
            poisoned = augment_inverse(poison(base, alpha, seed=base_config.seed))
            trained = fit(base_config, poisoned).model
            rows.append((alpha, evaluate_split(trained, clean, split, filt)))
    return SweepResult(kind, rows)


@dataclass
class DirectionalRun:
    seed: int
    tucker_mrr: float
    migtf_mrr: float
    frozen_intact: bool

    @property
    def gain(self) -> float:
        return self.migtf_mrr - self.tucker_mrr


def directional_benefit(store: TripleStore, dataset: str = "", seeds=range(5),
                        d_e: int = 32, d_r: int = 16, d_h: int = 16,
                        tucker_epochs: int = 50, tptf_epochs: int = 30,
                        tucker_overrides: dict | None = None,
                        migtf_overrides: dict | None = None) -> list[DirectionalRun]:
    """Scaled-down mixed-geometry comparison on the validation split.

    Per seed: train Tucker, freeze it, train the hyperbolic correction on top
    and compare validation MRR of the frozen Tucker model against MIG-TF.
    ``dataset`` selects the table hyperparameters (e.g. ``"WN18RR"``); sizes
    and epoch counts given here take precedence.
    """
    clean = store if store.augmented else augment_inverse(store)
    filt = build_filter_index(clean)
    runs = []
    for seed in seeds:
        tk_cfg = default_train_config(dataset, "tucker", d_e=d_e, d_r=d_r, epochs=tucker_epochs,
                                      seed=seed, eval_every=0, **(tucker_overrides or {}))
        tucker_ckpt = from_bytes(to_bytes(fit(tk_cfg, clean).final))
        frozen = model_from_checkpoint(tucker_ckpt)
        base = evaluate_split(frozen, clean, "valid", filt).mrr
        mg_cfg = default_train_config(dataset, "migtf", d_e=d_e, d_r=d_r, d_h=d_h,
                                      epochs=tptf_epochs, seed=seed, eval_every=0,
                                      **(migtf_overrides or {}))
        result = fit(mg_cfg, clean, frozen=frozen)
        mixed = evaluate_split(result.model, clean, "valid", filt).mrr
        intact = result.final.tensor_bytes("tucker.") == tucker_ckpt.tensor_bytes("tucker.")
        runs.append(DirectionalRun(int(seed), base, mixed, intact))
    return runs
