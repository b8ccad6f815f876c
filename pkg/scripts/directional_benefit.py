"""Scaled-down frozen-Tucker vs MIG-TF comparison on WN18RR (five seeds).

    python scripts/directional_benefit.py --data data/WN18RR --out runs/directional
"""

import argparse
import logging
import os
import time

from threadpoolctl import threadpool_limits

from migtf.data import augment_inverse, csv_string, load_dataset
from migtf.experiments import directional_benefit


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data", default=os.environ.get("MIGTF_WN18RR_DIR", "data/WN18RR"))
    ap.add_argument("--out", default="runs/directional")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--tucker-epochs", type=int, default=50)
    ap.add_argument("--tptf-epochs", type=int, default=30)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    store = augment_inverse(load_dataset(args.data))
    start = time.perf_counter()
    with threadpool_limits(limits=args.threads):
        runs = directional_benefit(store, dataset="WN18RR", seeds=range(args.seeds),
                                   tucker_epochs=args.tucker_epochs, tptf_epochs=args.tptf_epochs)
    minutes = (time.perf_counter() - start) / 60

    rows = [[r.seed, f"{r.tucker_mrr:.6f}", f"{r.migtf_mrr:.6f}", f"{r.gain:+.6f}", int(r.frozen_intact)]
            for r in runs]
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "directional.csv"), "w", newline="") as fh:
        fh.write(csv_string(["seed", "tucker_valid_mrr", "migtf_valid_mrr", "gain", "frozen_intact"], rows))
    wins = sum(r.gain > 0 for r in runs)
    worst = min(r.gain for r in runs)
    print(f"{wins}/{len(runs)} seeds improved, worst gain {worst:+.4f}, {minutes:.1f} min")


if __name__ == "__main__":
    main()
