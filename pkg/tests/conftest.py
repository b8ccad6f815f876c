import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from migtf.data import TripleStore, Vocabulary, augment_inverse, load_dataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def write_split_files(directory, train, valid=(), test=()):
    os.makedirs(directory, exist_ok=True)
    for name, rows in (("train", train), ("valid", valid), ("test", test)):
        with open(os.path.join(directory, f"{name}.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in rows:
                fh.write(f"{h}\t{r}\t{t}\n")
    return directory


def random_store(n_e=12, n_r=3, n_train=30, n_valid=6, n_test=6, seed=0) -> TripleStore:
    """Random base store with disjoint splits; every entity and relation named."""
    rng = np.random.default_rng(seed)
    seen, rows = set(), []
    while len(rows) < n_train + n_valid + n_test:
        tr = (int(rng.integers(n_e)), int(rng.integers(n_r)), int(rng.integers(n_e)))
        if tr not in seen:
            seen.add(tr)
            rows.append(tr)
    arr = np.array(rows, dtype=np.int64)
    vocab = Vocabulary(tuple(f"e{i}" for i in range(n_e)), tuple(f"r{i}" for i in range(n_r)))
    return TripleStore(arr[:n_train], arr[n_train:n_train + n_valid], arr[n_train + n_valid:], vocab)


@pytest.fixture
def toy_dir(tmp_path):
    rng = np.random.default_rng(7)
    ents = [f"ent{i}" for i in range(15)]
    rels = ["hypernym", "part_of", "similar"]
    seen, rows = set(), []
    while len(rows) < 60:
        tr = (ents[rng.integers(15)], rels[rng.integers(3)], ents[rng.integers(15)])
        if tr not in seen:
            seen.add(tr)
            rows.append(tr)
    return write_split_files(str(tmp_path / "toykg"), rows[:44], rows[44:52], rows[52:])


@pytest.fixture
def toy_store(toy_dir):
    return augment_inverse(load_dataset(toy_dir))


@pytest.fixture
def small_store():
    return augment_inverse(random_store())
