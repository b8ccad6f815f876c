"""Full-size WN18RR run with the built-in table hyperparameters (multi-hour).

Trains Tucker for its table epochs, then the hyperbolic term on top of the
frozen checkpoint, and reports test metrics for both.

    python scripts/full_wn18rr.py --data data/WN18RR --out runs/wn18rr_full [--qr]
"""

import argparse
import logging
import os

from threadpoolctl import threadpool_limits

from migtf.config import default_train_config
from migtf.data import augment_inverse, load_dataset
from migtf.evaluation import evaluate_split
from migtf.training import fit, load_frozen_tucker


def epochs(n):
    return {} if n is None else {"epochs": n}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", default=os.environ.get("MIGTF_WN18RR_DIR", "data/WN18RR"))
    ap.add_argument("--out", default="runs/wn18rr_full")
    ap.add_argument("--qr", action="store_true")
    ap.add_argument("--batch-norm", action="store_true", help="Tucker batch normalization")
    ap.add_argument("--label-smoothing", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--tucker-epochs", type=int, help="override the table value")
    ap.add_argument("--migtf-epochs", type=int, help="override the table value")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    store = augment_inverse(load_dataset(args.data))
    tucker_path = os.path.join(args.out, "tucker_final.ckpt")
    with threadpool_limits(limits=args.threads):
        if not os.path.exists(tucker_path):
            cfg = default_train_config("WN18RR", "tucker", seed=args.seed, batch_norm=args.batch_norm,
                                       label_smoothing=args.label_smoothing, eval_every=50,
                                       **epochs(args.tucker_epochs))
            fit(cfg, store, args.out)
        frozen = load_frozen_tucker(tucker_path, store)
        base = evaluate_split(frozen, store, "test")
        cfg = default_train_config("WN18RR", "migtf", seed=args.seed, qr=args.qr,
                                   tucker_checkpoint=tucker_path, eval_every=25,
                                   **epochs(args.migtf_epochs))
        mixed = evaluate_split(fit(cfg, store, args.out, frozen=frozen).model, store, "test")
    for name, rep in (("tucker", base), ("migtf", mixed)):
        print(f"{name:6s} MRR {rep.mrr:.4f}  HR@1 {rep.hr[1]:.4f}  HR@3 {rep.hr[3]:.4f}  HR@10 {rep.hr[10]:.4f}")
        with open(os.path.join(args.out, f"{name}_test_metrics.csv"), "w", newline="") as fh:
            fh.write(rep.to_csv())


if __name__ == "__main__":
    main()
