"""Training loops, gradient verification and model/checkpoint conversion."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import TripleStore, augment_inverse, build_filter_index, make_batches, write_csv
from .errors import CheckpointIntegrityError, FrozenTermError, VocabMismatchError
from .evaluation import evaluate_split
from .models import MigTfModel, TptfModel, TptfParams, bce_loss, init_tptf
from .optim import AdamWState, adamw_step
from .tucker import BatchNormParams, DropoutSpec, TuckerModel, TuckerParams, init_tucker

log = logging.getLogger(__name__)


def backward(model, batch, rng: np.random.Generator | None = None, training: bool = True):
    """Loss and gradients of the mean BCE over ``batch`` for every trainable tensor."""
    scores, cache = model.forward(batch.heads, batch.relations, training=training, rng=rng)
    loss, g = bce_loss(scores, batch.labels)
    return loss, model.backward(cache, g)


# ---------------------------------------------------------------------------
# checkpoint <-> model


def _bn_from(tensors, name):
    key = f"tucker.{name}.gamma"
    if key not in tensors:
        return None
    return BatchNormParams(
        tensors[key], tensors[f"tucker.{name}.beta"],
        tensors[f"tucker.{name}.running_mean"], tensors[f"tucker.{name}.running_var"])


def tucker_from_tensors(tensors, dropout: DropoutSpec = DropoutSpec()) -> TuckerModel:
    params = TuckerParams(tensors["tucker.core"], tensors["tucker.E"], tensors["tucker.R"],
                          _bn_from(tensors, "bn0"), _bn_from(tensors, "bn1"))
    return TuckerModel(params, dropout)


def model_from_checkpoint(ckpt: Checkpoint, dtype=None):
    """Rebuild a model; ``dtype`` (e.g. float64) copies trainable tensors for optimization."""
    h = ckpt.header
    t = {k: (v.astype(dtype) if dtype is not None else v) for k, v in ckpt.tensors.items()}
    hyper = h.get("hyper", {})
    kind = h["model_kind"]
    if kind == "tucker":
        drop = DropoutSpec(hyper.get("dropout_1", 0.0), hyper.get("dropout_2", 0.0),
                           hyper.get("dropout_3", 0.0))
        return tucker_from_tensors(t, drop)
    tptf = TptfModel(TptfParams(t["tptf.E"], t["tptf.T"], h["beta"],
                                hyper.get("rho_e", 0.001), hyper.get("rho_r", 0.001),
                                hyper.get("dropout_e", 0.0), hyper.get("dropout_r", 0.0)),
                     qr_enabled=bool(h.get("qr", False)))
    if kind == "tptf":
        return tptf
    # frozen block keeps the exact loaded arrays
    tucker = tucker_from_tensors({k: v for k, v in ckpt.tensors.items() if k.startswith("tucker.")})
    return MigTfModel(tucker, tptf, mu=h.get("mu", 0.5))


def checkpoint_from_model(model, *, vocab_hash: str = "", seed: int = 0, epoch: int = 0,
                          config: TrainConfig | None = None) -> Checkpoint:
    dims = {}
    tensors = {}
    if model.kind in ("tucker", "migtf"):
        tk = model if model.kind == "tucker" else model.tucker
        d_e, d_r = tk.params.dims
        dims.update(d_e=int(d_e), d_r=int(d_r))
    if model.kind in ("tptf", "migtf"):
        tp = model if model.kind == "tptf" else model.tptf
        dims["d_h"] = int(tp.params.dim)
    for name, arr in model.tensors().items():
        # frozen float32 arrays pass through untouched; others are rounded once
        tensors[name] = arr if arr.dtype == np.float32 else arr.astype(np.float32)
    header = {
        "model_kind": model.kind,
        "dims": dims,
        "n_entities": int(model.n_entities),
        "n_relations": int(model.n_relations),
        "beta": float(getattr(model, "tptf", model).params.beta) if model.kind != "tucker" else None,
        "mu": float(model.mu) if model.kind == "migtf" else None,
        "qr": bool(getattr(model, "qr_enabled", False)),
        "seed": int(seed),
        "epoch": int(epoch),
        "vocab_hash": vocab_hash,
    }
    if config is not None:
        header["hyper"] = {k: v for k, v in config.as_dict().items()
                           if k.startswith(("dropout", "rho", "lr", "label", "batch", "weight"))}
    return Checkpoint(header, tensors)


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    valid_mrr: float | None = None


@dataclass
class TrainResult:
    final: Checkpoint
    best: Checkpoint | None
    history: list[EpochLog] = field(default_factory=list)
    model: object = None

    def log_rows(self):
        return [[e.epoch, f"{e.train_loss:.8f}", "" if e.valid_mrr is None else f"{e.valid_mrr:.6f}"]
                for e in self.history]


def load_frozen_tucker(path: str, store: TripleStore) -> TuckerModel:
    if not path:
        raise FrozenTermError("MIG-TF training needs a pretrained Tucker checkpoint (tucker_checkpoint)")
    ckpt = load_checkpoint(path)
    if ckpt.model_kind not in ("tucker", "migtf"):
        raise CheckpointIntegrityError(f"{path} holds a {ckpt.model_kind} model, not a Tucker term")
    _check_hash(ckpt, store, path)
    return tucker_from_tensors({k: v for k, v in ckpt.tensors.items() if k.startswith("tucker.")})


def _check_hash(ckpt: Checkpoint, store: TripleStore, path: str = "checkpoint"):
    expected = store.vocab.digest()
    got = ckpt.header.get("vocab_hash")
    if got and got != expected:
        raise VocabMismatchError(f"{path} was trained on a different vocabulary")


def build_model(config: TrainConfig, store: TripleStore, frozen: TuckerModel | None = None):
    """Freshly initialized model for ``config`` (trainables in float64)."""
    n_e, n_r = store.n_entities, store.n_relations
    if config.model_kind == "tucker":
        params = init_tucker(n_e, n_r, config.d_e, config.d_r, config.seed, dtype=np.float64,
                             batch_norm=config.batch_norm)
        return TuckerModel(params, DropoutSpec(config.dropout_1, config.dropout_2, config.dropout_3))
    tptf = TptfModel(init_tptf(n_e, n_r, config.d_h, config.beta, config.rho_e, config.rho_r,
                               seed=config.seed + 1, dropout_e=config.dropout_e,
                               dropout_r=config.dropout_r, dtype=np.float64),
                     qr_enabled=config.qr)
    if config.model_kind == "tptf":
        return tptf
    if frozen is None:
        frozen = load_frozen_tucker(config.tucker_checkpoint, store)
    return MigTfModel(frozen, tptf, mu=config.mu)


def epoch_loss(model, batches) -> float:
    """Mean batch loss without dropout or updates."""
    losses = [backward(model, b, training=False)[0] for b in batches]
    return float(np.mean(losses))


def fit(config: TrainConfig, store: TripleStore, out_dir: str | None = None,
        model=None, frozen: TuckerModel | None = None, on_step=None) -> TrainResult:
    """Train ``config.model_kind`` on ``store``; returns final/best checkpoints and the epoch log."""
    if not store.augmented:
        store = augment_inverse(store)
    if model is None:
        model = build_model(config, store, frozen)
    vocab_hash = store.vocab.digest()
    rng = np.random.default_rng(config.seed)
    opt = AdamWState(lr=config.lr, weight_decay=config.weight_decay)
    params = model.trainable()
    filt = build_filter_index(store) if len(store.valid) else None

    first = make_batches(store, config.batch_size, config.label_smoothing, seed=config.seed)
    history = [EpochLog(0, epoch_loss(model, first))]
    best, best_mrr = None, -1.0
    for epoch in range(1, config.epochs + 1):
        batches = make_batches(store, config.batch_size, config.label_smoothing,
                               seed=config.seed + epoch)
        for batch in batches:
            _, grads = backward(model, batch, rng)
            adamw_step(opt, params, grads)
            if on_step is not None:
                on_step(model)
        opt.lr *= config.lr_decay
        # measured like epoch 0 (no dropout, after the updates) so entries are comparable
        entry = EpochLog(epoch, epoch_loss(model, batches))
        if filt is not None and config.eval_every > 0 and (
                epoch % config.eval_every == 0 or epoch == config.epochs):
            entry.valid_mrr = evaluate_split(model, store, "valid", filt).mrr
            if entry.valid_mrr > best_mrr:
                best_mrr = entry.valid_mrr
                best = checkpoint_from_model(model, vocab_hash=vocab_hash, seed=config.seed,
                                             epoch=epoch, config=config)
        history.append(entry)
        log.info("epoch %d loss %.6f valid_mrr %s", epoch, entry.train_loss, entry.valid_mrr)

    final = checkpoint_from_model(model, vocab_hash=vocab_hash, seed=config.seed,
                                  epoch=config.epochs, config=config)
    result = TrainResult(final, best, history, model)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        save_checkpoint(final, os.path.join(out_dir, f"{config.model_kind}_final.ckpt"))
        if best is not None:
            save_checkpoint(best, os.path.join(out_dir, f"{config.model_kind}_best.ckpt"))
        write_csv(os.path.join(out_dir, f"{config.model_kind}_train_log.csv"),
                  ["epoch", "train_loss", "valid_mrr"], result.log_rows())
    return result


def train(config: TrainConfig, store: TripleStore, out_dir: str | None = None) -> Checkpoint:
    return fit(config, store, out_dir).final


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    model_kind: str
    max_rel_error: float
    per_tensor: dict[str, float]
    non_trainable: list[str]


def _toy_model(model_kind, dims, seed, beta, qr=False):
    rng = np.random.default_rng(seed)
    n_e, n_r = dims.get("n_e", 4), dims.get("n_r", 3)
    d_e, d_r, d_h = dims.get("d_e", 2), dims.get("d_r", 2), dims.get("d_h", 2)

    def tucker():
        p = TuckerParams(rng.normal(size=(d_e, d_e, d_r)), rng.normal(size=(n_e, d_e)),
                         rng.normal(size=(n_r, d_r)))
        return TuckerModel(p)

    def tptf():
        return TptfModel(TptfParams(rng.normal(size=(n_e, d_h)), rng.normal(size=(n_r, d_h)), beta),
                         qr_enabled=qr)

    if model_kind == "tucker":
        return tucker()
    if model_kind == "tptf":
        return tptf()
    return MigTfModel(tucker(), tptf())


def gradient_check(model_kind: str, dims: dict | None = None, seed: int = 0, beta: float = 1.0,
                   h: float = 1e-5, qr: bool = False) -> GradCheckReport:
    """Worst relative error of analytic gradients against central differences (float64).

    Relative error per entry is ``|a - f| / max(|a|, |f|, 1e-6 * max|f|)``.
    """
    dims = dict(dims or {})
    model = _toy_model(model_kind, dims, seed, beta, qr)
    rng = np.random.default_rng(seed + 1)
    b = dims.get("batch", 3)
    heads = rng.integers(model.n_entities, size=b)
    rels = rng.integers(model.n_relations, size=b)
    labels = (rng.random((b, model.n_entities)) < 0.4).astype(np.float64)

    scores, cache = model.forward(heads, rels)
    _, g = bce_loss(scores, labels)
    grads = model.backward(cache, g)
    trainable = model.trainable()
    n_params = sum(v.size for v in trainable.values())
    if n_params > 1000:
        raise ValueError(f"toy model has {n_params} parameters; finite differences capped at 1000")

    per_tensor = {}
    for name, theta in trainable.items():
        fd = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            old = theta[idx]
            theta[idx] = old + h
            lp = bce_loss(model.scores(heads, rels), labels)[0]
            theta[idx] = old - h
            lm = bce_loss(model.scores(heads, rels), labels)[0]
            theta[idx] = old
            fd[idx] = (lp - lm) / (2 * h)
        a = grads[name]
        floor = 1e-6 * max(np.abs(fd).max(), 1e-12)
        rel = np.abs(a - fd) / np.maximum(np.maximum(np.abs(a), np.abs(fd)), floor)
        per_tensor[name] = float(rel.max())
    frozen = sorted(set(model.tensors()) - set(trainable))
    return GradCheckReport(model_kind, max(per_tensor.values()), per_tensor, frozen)
