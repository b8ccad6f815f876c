"""Train-loss ratio after 200 epochs on a random 10-triple graph, per model kind and curvature.

    python scripts/memorization.py --betas 1.0 0.3 0.1
"""

import argparse

import numpy as np

from migtf.config import TrainConfig
from migtf.data import TripleStore, Vocabulary, augment_inverse
from migtf.training import fit


def ten_triple_store(seed):
    rng = np.random.default_rng(seed)
    triples = set()
    while len(triples) < 10:
        triples.add((int(rng.integers(10)), int(rng.integers(2)), int(rng.integers(10))))
    vocab = Vocabulary(tuple(f"e{i}" for i in range(10)), ("r0", "r1"))
    empty = np.zeros((0, 3), dtype=np.int64)
    return augment_inverse(TripleStore(np.array(sorted(triples)), empty, empty, vocab))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--betas", type=float, nargs="+", default=[1.0])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    store = ten_triple_store(args.seed)

    tucker = fit(TrainConfig(model_kind="tucker", d_e=8, d_r=4, epochs=args.epochs, lr=0.01,
                             eval_every=0), store)
    ratio = lambda res: res.history[-1].train_loss / res.history[0].train_loss  # noqa: E731
    print(f"tucker            {ratio(tucker):8.4%}")
    for beta in args.betas:
        hyper = dict(d_e=8, d_r=4, d_h=8, epochs=args.epochs, lr=args.lr, beta=beta,
                     rho_e=0.1, rho_r=0.1, eval_every=0)
        tptf = fit(TrainConfig(model_kind="tptf", **hyper), store)
        mig = fit(TrainConfig(model_kind="migtf", **hyper), store, frozen=tucker.model)
        print(f"tptf  beta={beta:<5g} {ratio(tptf):8.4%}")
        print(f"migtf beta={beta:<5g} {ratio(mig):8.4%}  (initial loss {mig.history[0].train_loss:.4g})")


if __name__ == "__main__":
    main()
