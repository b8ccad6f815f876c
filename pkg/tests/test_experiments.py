import numpy as np
import pytest

from migtf.checkpoint import from_bytes, to_bytes
from migtf.config import TrainConfig
from migtf.evaluation import evaluate_split
from migtf.experiments import MixtureView, sweep
from migtf.training import checkpoint_from_model, fit, model_from_checkpoint


def cfg(kind, **kw):
    base = dict(d_e=4, d_r=3, d_h=4, epochs=2, batch_size=8, lr=0.01, eval_every=0,
                rho_e=0.1, rho_r=0.1)
    base.update(kw)
    return TrainConfig(model_kind=kind, **base)


@pytest.fixture
def trained_migtf(toy_store, tmp_path):
    fit(cfg("tucker", epochs=3), toy_store, tmp_path)
    res = fit(cfg("migtf", tucker_checkpoint=str(tmp_path / "tucker_final.ckpt")), toy_store)
    return model_from_checkpoint(from_bytes(to_bytes(res.final)))


def test_mu_endpoints_match_components(toy_store, trained_migtf):
    res = sweep("mu", [0.0, 0.5, 1.0], cfg("migtf"), toy_store, model=trained_migtf)
    tucker_only = evaluate_split(trained_migtf.tucker, toy_store)
    tptf_only = evaluate_split(trained_migtf.tptf, toy_store)
    (v0, m0), (_, mid), (v1, m1) = res.rows
    assert (v0, v1) == (0.0, 1.0)
    assert (m0.mrr, m0.hr) == (tptf_only.mrr, tptf_only.hr)
    assert (m1.mrr, m1.hr) == (tucker_only.mrr, tucker_only.hr)
    assert mid.mrr == evaluate_split(trained_migtf, toy_store).mrr
    lines = res.to_csv().splitlines()
    assert lines[0] == "value,mrr,hr@10" and len(lines) == 4


def test_mixture_view_leaves_model_alone(trained_migtf):
    MixtureView(trained_migtf, 0.2).scores([0], [0])
    assert trained_migtf.mu == 0.5


def test_robustness_zero_is_clean_run(toy_store):
    base = cfg("tptf", seed=3)
    res = sweep("robustness", [0.0, 0.3], base, toy_store)
    clean = fit(base, toy_store).model
    ref = evaluate_split(clean, toy_store)
    assert res.rows[0][1].mrr == ref.mrr and res.rows[0][1].hr == ref.hr
    assert to_bytes(checkpoint_from_model(clean)) == to_bytes(
        checkpoint_from_model(fit(base, toy_store).model))


def test_curvature_retrains_per_value(toy_store):
    res = sweep("curvature", [0.5, 2.0], cfg("tptf"), toy_store)
    assert [v for v, _ in res.rows] == [0.5, 2.0]
    assert res.rows[0][1].mrr != res.rows[1][1].mrr


@pytest.mark.parametrize("kind,values", [
    ("curvature", [0.0]), ("mu", [1.5]), ("robustness", [-0.1]), ("curvature", []), ("bogus", [1.0]),
])
def test_invalid_values(toy_store, kind, values):
    with pytest.raises(ValueError):
        sweep(kind, values, cfg("tptf"), toy_store)


def test_mu_sweep_needs_model(toy_store):
    with pytest.raises(ValueError):
        sweep("mu", [0.5], cfg("migtf"), toy_store)


def test_directional_protocol_smoke(toy_store):
    from migtf.experiments import directional_benefit
    runs = directional_benefit(toy_store, seeds=[0, 1], d_e=4, d_r=3, d_h=4,
                               tucker_epochs=2, tptf_epochs=2)
    assert [r.seed for r in runs] == [0, 1]
    assert all(r.frozen_intact for r in runs)
    assert all(0 <= r.tucker_mrr <= 1 and 0 <= r.migtf_mrr <= 1 for r in runs)
