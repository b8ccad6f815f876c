import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_store
from migtf.checkpoint import MAGIC, Checkpoint, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from migtf.config import TrainConfig, default_train_config, table_defaults
from migtf.data import augment_inverse, make_batches
from migtf.errors import (
    CheckpointFormatError, CheckpointIntegrityError, FrozenTermError, VocabMismatchError,
)
from migtf.models import bce_loss
from migtf.optim import AdamWState, adamw_step
from migtf.training import (
    backward, build_model, checkpoint_from_model, fit, gradient_check, load_frozen_tucker,
    model_from_checkpoint, train,
)


def tiny_config(kind, **kw):
    base = dict(d_e=4, d_r=3, d_h=4, epochs=3, batch_size=8, lr=0.01, eval_every=2)
    base.update(kw)
    return TrainConfig(model_kind=kind, **base)


@pytest.fixture
def tucker_ckpt(small_store, tmp_path):
    fit(tiny_config("tucker"), small_store, tmp_path)
    return str(tmp_path / "tucker_final.ckpt")


class TestAdamW:
    def test_one_step(self):
        theta = {"w": np.array([0.0])}
        adamw_step(AdamWState(lr=0.01), theta, {"w": np.array([1.0])})
        # m_hat = 1, v_hat = 1 -> step lr / (1 + eps)
        assert theta["w"][0] == pytest.approx(-0.01 / (1 + 1e-8), abs=1e-15)

    def test_null_update(self):
        theta = {"w": np.array([0.3, -2.0])}
        adamw_step(AdamWState(lr=0.1), theta, {"w": np.zeros(2)})
        assert theta["w"].tolist() == [0.3, -2.0]

    def test_decoupled_decay(self):
        theta = {"w": np.array([0.5, -4.0])}
        adamw_step(AdamWState(lr=0.1, weight_decay=0.2), theta, {"w": np.zeros(2)})
        assert np.allclose(theta["w"], np.array([0.5, -4.0]) * (1 - 0.1 * 0.2), rtol=0, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adamw_step(AdamWState(), {"w": np.zeros(2)}, {"w": np.zeros(3)})

    def test_missing_grad_untouched(self):
        theta = {"a": np.ones(2), "b": np.ones(2)}
        adamw_step(AdamWState(lr=0.1), theta, {"a": np.ones(2)})
        assert theta["b"].tolist() == [1.0, 1.0]

    @given(st.integers(0, 1000), st.integers(1, 20))
    def test_matches_reference_loop(self, seed, steps):
        rng = np.random.default_rng(seed)
        theta = {"w": rng.normal(size=3)}
        ref = theta["w"].copy()
        m = v = np.zeros(3)
        state = AdamWState(lr=0.05, weight_decay=0.01)
        for k in range(1, steps + 1):
            g = rng.normal(size=3)
            adamw_step(state, theta, {"w": g})
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mh, vh = m / (1 - 0.9 ** k), v / (1 - 0.999 ** k)
            ref = ref - 0.05 * (mh / (np.sqrt(vh) + 1e-8) + 0.01 * ref)
        assert np.allclose(theta["w"], ref, rtol=1e-12, atol=1e-14)


class TestBackward:
    @pytest.mark.parametrize("kind", ["tucker", "tptf", "migtf"])
    def test_stationary_point(self, kind):
        from migtf.training import _toy_model
        model = _toy_model(kind, {}, 0, 1.0)
        heads, rels = np.array([0, 1]), np.array([1, 2])
        scores = model.scores(heads, rels)
        labels = 1.0 / (1.0 + np.exp(-scores))
        batch = type("B", (), dict(heads=heads, relations=rels, labels=labels))
        _, grads = backward(model, batch, training=False)
        assert all(np.abs(g).max() <= 1e-15 for g in grads.values())

    @pytest.mark.parametrize("beta", [1.0, 1.3, 1.5])
    @pytest.mark.parametrize("kind", ["tucker", "tptf", "migtf"])
    def test_gradient_check(self, kind, beta):
        rep = gradient_check(kind, {"n_e": 3, "d_e": 2, "d_h": 2}, seed=1, beta=beta)
        assert rep.max_rel_error <= 1e-4
        if kind == "migtf":
            assert set(rep.non_trainable) == {"tucker.E", "tucker.R", "tucker.core"}
            assert set(rep.per_tensor) == {"tptf.E", "tptf.T"}

    @pytest.mark.parametrize("shape", [{"n_r": 2, "d_h": 4}, {"n_r": 4, "d_h": 2}])
    def test_gradient_check_qr(self, shape):
        assert gradient_check("tptf", shape, seed=2, beta=1.3, qr=True).max_rel_error <= 1e-4

    def test_gradient_check_batch_norm_and_dropout_paths(self):
        from migtf.tucker import DropoutSpec, TuckerModel, init_tucker
        model = TuckerModel(init_tucker(5, 2, 3, 2, seed=0, dtype=np.float64, batch_norm=True),
                            DropoutSpec(0.2, 0.3, 0.4))
        heads, rels = np.array([0, 2, 4, 1]), np.array([0, 1, 1, 0])
        labels = np.random.default_rng(0).random((4, 5))

        def loss():
            s, _ = model.forward(heads, rels, training=True, rng=np.random.default_rng(9))
            return bce_loss(s, labels)[0]

        s, cache = model.forward(heads, rels, training=True, rng=np.random.default_rng(9))
        grads = model.backward(cache, bce_loss(s, labels)[1])
        for name, theta in model.trainable().items():
            for idx in np.ndindex(*theta.shape):
                old = theta[idx]
                theta[idx] = old + 1e-6
                lp = loss()
                theta[idx] = old - 1e-6
                lm = loss()
                theta[idx] = old
                fd = (lp - lm) / 2e-6
                assert abs(fd - grads[name][idx]) <= 1e-6 + 1e-5 * abs(fd), name

    def test_parameter_cap(self):
        with pytest.raises(ValueError):
            gradient_check("tucker", {"n_e": 100, "d_e": 8, "d_r": 8})


class TestCheckpoint:
    def _ckpt(self):
        model = build_model(tiny_config("tptf"), augment_inverse(random_store()))
        return checkpoint_from_model(model, vocab_hash="abc", seed=3, epoch=7)

    def test_round_trip(self, tmp_path):
        ckpt = self._ckpt()
        save_checkpoint(ckpt, tmp_path / "a.ckpt")
        loaded = load_checkpoint(tmp_path / "a.ckpt")
        for name, arr in ckpt.tensors.items():
            assert loaded.tensors[name].tobytes() == arr.tobytes()
        save_checkpoint(loaded, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_layout(self):
        blob = to_bytes(self._ckpt())
        assert blob.startswith(b"MIGTF1\n")
        (n,) = struct.unpack_from("<Q", blob, len(MAGIC))
        header = json.loads(blob[len(MAGIC) + 8:len(MAGIC) + 8 + n])
        assert header["model_kind"] == "tptf" and header["epoch"] == 7
        first = header["tensors"][0]
        payload = blob[len(MAGIC) + 8 + n:]
        arr = np.frombuffer(payload, "<f4", count=int(np.prod(first["shape"])))
        assert arr.tobytes() == self._ckpt().tensors[first["name"]].astype("<f4").tobytes()

    def test_bad_magic(self):
        blob = bytearray(to_bytes(self._ckpt()))
        blob[0:1] = b"X"
        with pytest.raises(CheckpointFormatError):
            from_bytes(bytes(blob))

    def test_truncated(self):
        blob = to_bytes(self._ckpt())
        for cut in (3, len(MAGIC) + 4, len(blob) - 5):
            with pytest.raises(CheckpointFormatError):
                from_bytes(blob[:cut])

    def test_header_dims_mismatch(self):
        blob = to_bytes(self._ckpt())
        (n,) = struct.unpack_from("<Q", blob, len(MAGIC))
        header = json.loads(blob[len(MAGIC) + 8:len(MAGIC) + 8 + n])
        header["dims"]["d_h"] += 1
        raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        edited = MAGIC + struct.pack("<Q", len(raw)) + raw + blob[len(MAGIC) + 8 + n:]
        with pytest.raises(CheckpointIntegrityError):
            from_bytes(edited)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(CheckpointFormatError, match="nope.ckpt"):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_model_round_trip_scores(self):
        store = augment_inverse(random_store())
        model = build_model(tiny_config("tucker", batch_norm=True), store)
        again = model_from_checkpoint(from_bytes(to_bytes(checkpoint_from_model(model))))
        a = model.scores([0, 1], [0, 1])
        assert np.allclose(again.scores([0, 1], [0, 1]), a, rtol=1e-5, atol=1e-6)


class TestTrain:
    def test_loss_decreases_after_one_epoch(self):
        store = augment_inverse(random_store(n_e=5, n_r=1, n_train=2, n_valid=0, n_test=0))
        for kind in ("tucker", "tptf"):
            res = fit(tiny_config(kind, epochs=1, rho_e=0.1, rho_r=0.1, lr=0.05), store)
            assert res.history[1].train_loss < res.history[0].train_loss

    def test_outputs(self, small_store, tmp_path):
        res = fit(tiny_config("tucker", epochs=4), small_store, tmp_path)
        assert (tmp_path / "tucker_final.ckpt").exists()
        assert (tmp_path / "tucker_best.ckpt").exists()
        log = (tmp_path / "tucker_train_log.csv").read_text().splitlines()
        assert log[0] == "epoch,train_loss,valid_mrr"
        assert len(log) == 1 + 5
        assert [e.valid_mrr is not None for e in res.history] == [False, False, True, False, True]

    def test_train_returns_final_checkpoint(self, small_store):
        ckpt = train(tiny_config("tptf", epochs=2), small_store)
        assert isinstance(ckpt, Checkpoint) and ckpt.header["epoch"] == 2

    @pytest.mark.parametrize("kind", ["tucker", "tptf"])
    def test_deterministic(self, small_store, kind):
        cfg = tiny_config(kind, dropout_1=0.2, dropout_2=0.2, dropout_3=0.2, dropout_e=0.2, dropout_r=0.2)
        a = to_bytes(train(cfg, small_store))
        b = to_bytes(train(cfg, small_store))
        assert a == b

    def test_migtf_freezes_tucker_block(self, small_store, tucker_ckpt):
        loaded = load_checkpoint(tucker_ckpt)
        res = fit(tiny_config("migtf", tucker_checkpoint=tucker_ckpt, epochs=3), small_store)
        assert res.final.tensor_bytes("tucker.") == loaded.tensor_bytes("tucker.")
        assert res.final.tensor_bytes("tptf.") != checkpoint_from_model(
            build_model(tiny_config("migtf", tucker_checkpoint=tucker_ckpt), small_store)
        ).tensor_bytes("tptf.")

    def test_migtf_requires_checkpoint(self, small_store):
        with pytest.raises(FrozenTermError):
            fit(tiny_config("migtf"), small_store)

    def test_vocab_mismatch(self, tucker_ckpt):
        other = augment_inverse(random_store(n_e=13, seed=99))
        with pytest.raises(VocabMismatchError):
            load_frozen_tucker(tucker_ckpt, other)

    def test_tptf_checkpoint_is_not_a_tucker_term(self, small_store, tmp_path):
        fit(tiny_config("tptf", epochs=1), small_store, tmp_path)
        with pytest.raises(CheckpointIntegrityError):
            load_frozen_tucker(str(tmp_path / "tptf_final.ckpt"), small_store)


class TestConfig:
    def test_wn18rr_migtf_defaults(self):
        cfg = default_train_config("WN18RR", "migtf")
        assert (cfg.d_h, cfg.lr, cfg.beta, cfg.epochs) == (50, 0.003, 1.5, 250)

    def test_tucker_table(self):
        cfg = default_train_config("data/fb15k-237", "tucker")
        assert (cfg.d_e, cfg.d_r, cfg.lr) == (200, 200, 0.001)
        assert (cfg.dropout_1, cfg.dropout_2, cfg.dropout_3) == (0.3, 0.4, 0.5)

    def test_unknown_dataset(self):
        assert table_defaults("toy", "migtf") == {}

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(model_kind="rotate")
        with pytest.raises(ValueError):
            TrainConfig(beta=0.0)


def test_batches_feed_backward(small_store):
    model = build_model(tiny_config("tptf"), small_store)
    batch = make_batches(small_store, 4)[0]
    loss, grads = backward(model, batch, np.random.default_rng(0))
    assert np.isfinite(loss) and set(grads) == {"tptf.E", "tptf.T"}
