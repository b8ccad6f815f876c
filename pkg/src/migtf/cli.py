"""Command-line entry point: ``migtf {train,eval,analyze,sweep,gradcheck}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import typing
from dataclasses import asdict, dataclass, field, fields

import yaml

from .config import TrainConfig, table_defaults
from .errors import ConfigError, FrozenTermError, MigtfError

log = logging.getLogger("migtf")

COMMANDS = ("train", "eval", "analyze", "sweep", "gradcheck")
ANALYZE_KINDS = ("powerlaw", "degree-groups", "per-relation", "landscape", "correlation")
SWEEP_KINDS = ("curvature", "mu", "robustness")


@dataclass
class RunConfig:
    command: str = "train"
    kind: str = ""  # analyze / sweep sub-kind
    dataset: str = ""
    model: str = "migtf"
    out: str = "runs/latest"
    seed: int = 0
    threads: int = 1
    # hyperparameters (mirrors TrainConfig)
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
    weight_decay: float = 0.0
    lr_decay: float = 1.0
    eval_every: int = 10
    tucker_checkpoint: str = ""
    # evaluation / analysis
    checkpoint: str = ""
    split: str = "test"
    pessimistic: bool = False
    values: list = field(default_factory=list)
    top_k: int = 20
    group_size: int = 5
    landscape_t: list = field(default_factory=lambda: [-10.0, 0.0, 10.0])
    landscape_min: float = -10.0
    landscape_max: float = 10.0
    landscape_steps: int = 101
    landscape_mode: str = "both"

    def train_config(self) -> TrainConfig:
        names = set(TrainConfig.field_names())
        values = {k: v for k, v in asdict(self).items() if k in names}
        return TrainConfig(model_kind=self.model, **values)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("true", "1", "yes", "on"):
                return True
            if str(value).lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if kind == "list":
            if isinstance(value, str) and value.lstrip().startswith("["):
                value = yaml.safe_load(value)  # flow list, e.g. "[0, 0.5, 1]"
            elif isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if not isinstance(value, (list, tuple)):
                value = [value]
            return [float(v) for v in value]
        if isinstance(value, (dict, list)):
            raise ValueError(value)
        return str(value)
    except (TypeError, ValueError, yaml.YAMLError):
        raise ConfigError(f"config key {key!r}: cannot interpret {value!r} as {kind}") from None


def _check_keys(mapping, source):
    for key in mapping:
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r} in {source}")


def parse_config(file_path=None, cli_overrides=(), **explicit) -> RunConfig:
    """Resolve a run configuration.

    Precedence, lowest first: built-in defaults, the built-in table for
    ``(dataset, model)``, the YAML file, ``key=value`` overrides, explicit flags.
    """
    merged = {}
    if file_path:
        if not os.path.isfile(file_path):
            raise ConfigError(f"config file not found: {file_path}")
        with open(file_path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{file_path}: expected a flat mapping")
        _check_keys(loaded, file_path)
        merged.update(loaded)
    pairs = {}
    for item in cli_overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    _check_keys(pairs, "--set")
    merged.update(pairs)
    explicit = {k: v for k, v in explicit.items() if v is not None}
    _check_keys(explicit, "flags")
    merged.update(explicit)

    model = str(merged.get("model", RunConfig.model))
    dataset = str(merged.get("dataset", ""))
    resolved = {k: v for k, v in table_defaults(dataset, model).items() if k in _TYPES}
    resolved.update(merged)
    values = {k: _coerce(k, v) for k, v in resolved.items()}
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"config key 'command': unknown command {cfg.command!r}")
    if cfg.model not in ("tucker", "tptf", "migtf"):
        raise ConfigError(f"config key 'model': unknown model kind {cfg.model!r}")
    if cfg.command == "analyze" and cfg.kind not in ANALYZE_KINDS:
        raise ConfigError(f"config key 'kind': analyze needs one of {ANALYZE_KINDS}")
    if cfg.command == "sweep" and cfg.kind not in SWEEP_KINDS:
        raise ConfigError(f"config key 'kind': sweep needs one of {SWEEP_KINDS}")
    needs_data = cfg.command in ("train", "eval", "sweep") or (
        cfg.command == "analyze" and cfg.kind != "landscape")
    if needs_data and not cfg.dataset:
        raise ConfigError("config key 'dataset' is required for this command")
    if cfg.command == "eval" and not cfg.checkpoint:
        raise ConfigError("config key 'checkpoint' is required for eval")
    if cfg.command == "sweep" and not cfg.values:
        raise ConfigError("config key 'values' is required for sweep")
    if cfg.command == "analyze" and cfg.kind in ("degree-groups", "per-relation") and not cfg.checkpoint:
        raise ConfigError(f"config key 'checkpoint' is required for analyze {cfg.kind}")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_resolved(cfg: RunConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "resolved_config.yaml")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(asdict(cfg), fh, sort_keys=True)
    return path


# ---------------------------------------------------------------------------
# commands


def _store(cfg):
    from .data import augment_inverse, load_dataset
    return augment_inverse(load_dataset(cfg.dataset))


def _load_model(cfg, store):
    from .checkpoint import load_checkpoint
    from .training import _check_hash, model_from_checkpoint
    ckpt = load_checkpoint(cfg.checkpoint)
    _check_hash(ckpt, store, cfg.checkpoint)
    return model_from_checkpoint(ckpt)


def _write(out, name, text):
    path = os.path.join(out, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    print(f"wrote {path}")
    return path


def cmd_train(cfg: RunConfig):
    from .evaluation import evaluate_split
    from .training import fit
    tc = cfg.train_config()
    if tc.model_kind == "migtf" and not tc.tucker_checkpoint:
        raise FrozenTermError(
            "train model=migtf requires tucker_checkpoint: the Euclidean term is a pretrained, frozen Tucker model")
    store = _store(cfg)
    result = fit(tc, store, cfg.out)
    report = evaluate_split(result.model, store, cfg.split, pessimistic=cfg.pessimistic)
    _write(cfg.out, f"metrics_{cfg.split}.csv", report.to_csv())
    print(f"{cfg.model}: MRR {report.mrr:.4f}  HR@1 {report.hr[1]:.4f}  "
          f"HR@3 {report.hr[3]:.4f}  HR@10 {report.hr[10]:.4f}")


def cmd_eval(cfg: RunConfig):
    from .evaluation import evaluate_split
    store = _store(cfg)
    model = _load_model(cfg, store)
    report = evaluate_split(model, store, cfg.split, pessimistic=cfg.pessimistic)
    _write(cfg.out, f"metrics_{cfg.split}.csv", report.to_csv())
    print(f"MRR {report.mrr:.4f}  HR@1 {report.hr[1]:.4f}  HR@3 {report.hr[3]:.4f}  HR@10 {report.hr[10]:.4f}")


def cmd_analyze(cfg: RunConfig):
    from . import data, evaluation, lorentz
    if cfg.kind == "landscape":
        modes = ("lorentz", "geodesic") if cfg.landscape_mode == "both" else (cfg.landscape_mode,)
        for t in cfg.landscape_t:
            grids = {m: lorentz.landscape_grid([t], cfg.landscape_min, cfg.landscape_max,
                                               cfg.landscape_steps, cfg.beta, m) for m in modes}
            for m, grid in grids.items():
                _write(cfg.out, f"landscape_{m}_t{t:g}.csv", grid.to_csv())
            if len(grids) == 2:
                agree = lorentz.sign_agreement(grids["lorentz"], grids["geodesic"])
                print(f"t={t:g}: sign agreement {agree:.4f}")
        return
    if cfg.kind in ("powerlaw", "correlation"):
        store = data.load_dataset(cfg.dataset)
        names = store.vocab
        if cfg.kind == "powerlaw":
            curve = data.degree_curve(store)
            rows = [[int(r), e, names.entity_names[e], int(c)]
                    for r, e, c in zip(curve.ranks, curve.entities, curve.links)]
            _write(cfg.out, "powerlaw.csv", data.csv_string(["rank", "entity", "name", "links"], rows))
            print(f"log-log slope {curve.loglog_slope():.4f}")
        else:
            corr = data.relation_correlation(store)
            rows = [[names.relation_names[i]] + [f"{x:.6f}" for x in row] for i, row in enumerate(corr)]
            _write(cfg.out, "correlation.csv", data.csv_string(["relation"] + list(names.relation_names), rows))
        return
    store = _store(cfg)
    model = _load_model(cfg, store)
    if cfg.kind == "per-relation":
        rows = evaluation.per_relation_report(model, store, cfg.split)
        _write(cfg.out, "per_relation.csv", evaluation.relation_report_csv(rows))
    else:
        report = evaluation.degree_group_report(model, store, cfg.top_k, cfg.group_size, cfg.split)
        if report.empty:
            print("no test links among the top-degree entities", file=sys.stderr)
        _write(cfg.out, "degree_groups.csv", report.to_csv())


def cmd_sweep(cfg: RunConfig):
    from .experiments import sweep
    store = _store(cfg)
    model = _load_model(cfg, store) if cfg.kind == "mu" else None
    if cfg.kind == "mu" and (model is None or model.kind != "migtf"):
        raise ConfigError("config key 'checkpoint': the mu sweep needs a trained migtf checkpoint")
    tc = cfg.train_config()
    if cfg.kind != "mu" and tc.model_kind == "migtf" and not tc.tucker_checkpoint:
        raise FrozenTermError("sweeps over migtf require tucker_checkpoint (frozen Euclidean term)")
    result = sweep(cfg.kind, cfg.values, tc, store, model=model, split=cfg.split)
    _write(cfg.out, f"sweep_{cfg.kind}.csv", result.to_csv())


def cmd_gradcheck(cfg: RunConfig):
    from .data import csv_string
    from .training import gradient_check
    rows, ok = [], True
    cases = [("tucker", 1.0), ("tptf", 1.0), ("tptf", 1.3), ("tptf", 1.5), ("migtf", cfg.beta)]
    for kind, beta in cases:
        rep = gradient_check(kind, seed=cfg.seed, beta=beta)
        passed = rep.max_rel_error <= 1e-4
        ok &= passed
        note = f" (non-trainable: {len(rep.non_trainable)} tensors)" if rep.non_trainable else ""
        print(f"{kind:7s} beta={beta:<4g} max_rel_error={rep.max_rel_error:.3e} "
              f"{'PASS' if passed else 'FAIL'}{note}")
        rows.append([kind, beta, f"{rep.max_rel_error:.6e}", int(passed)])
    _write(cfg.out, "gradcheck.csv", csv_string(["model", "beta", "max_rel_error", "pass"], rows))
    return 0 if ok else 1


HANDLERS = {"train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze,
            "sweep": cmd_sweep, "gradcheck": cmd_gradcheck}


def dispatch(cfg: RunConfig) -> int:
    """Run one command; returns the process exit status."""
    from threadpoolctl import threadpool_limits
    try:
        write_resolved(cfg, cfg.out)
        with threadpool_limits(limits=max(1, cfg.threads)):
            status = HANDLERS[cfg.command](cfg)
        return status or 0
    except MigtfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="migtf", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("kind", nargs="?", default=None,
                        help="analyze: " + "|".join(ANALYZE_KINDS) + "; sweep: " + "|".join(SWEEP_KINDS))
    parser.add_argument("--config", default=None, help="YAML file with flat key: value pairs")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = parse_config(args.config, args.overrides, command=args.command, kind=args.kind,
                           out=args.out, threads=args.threads, seed=args.seed)
    except MigtfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
