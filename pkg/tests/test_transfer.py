import json
import math

import numpy as np
import pytest

from dpstack.data import SynthSpec, synth_generate
from dpstack.partition import FeaturePartition, feature_partition
from dpstack.plr import LinearModel
from dpstack.stacking import predict_stacked, train_pst_f
from dpstack.transfer import (
    TransferModel, predict_transfer, source_anchors, train_pst_h, train_source_models,
)

INF = math.inf
SPEC = SynthSpec(n=3000, d=20, k_true=4, strengths=(2.0, 1.0, 0.5, 0.25), informative_fraction=(1,) * 4)


def fixed_noise(d, rate, rng):
    return np.linspace(-1.0, 1.0, d) * (0.0 if math.isinf(rate) else 2.0 / rate)


@pytest.fixture
def pair():
    ds, v = synth_generate(SPEC, np.random.default_rng(0))
    src, tgt = ds.subset(np.arange(2500)), ds.subset(np.arange(2500, 3000))
    return src, tgt, feature_partition(20, 4, "sorted", v)


def test_zero_anchors_equal_plain_pst_f(pair):
    _, tgt, part = pair
    zero = tuple(LinearModel(np.zeros(g.size), 1.0, 1.0, 0.01) for g in part.groups)
    h = train_pst_h(None, tgt, 1.0, 1.0, part, 0.01, 0.01, rng=np.random.default_rng(3),
                    source_models=zero)
    f = train_pst_f(tgt, 1.0, part, 0.01, rng=np.random.default_rng(3).spawn(2)[1])
    for a, b in zip(h.target.low_models + (h.target.high_model,), f.low_models + (f.high_model,)):
        np.testing.assert_array_equal(a.weights, b.weights)


def test_huge_lambda_pins_low_weights_to_anchors(pair):
    src, tgt, part = pair
    h = train_pst_h(src, tgt, 1.0, 1.0, part, 0.01, 1e6, rng=np.random.default_rng(1), _noise_fn=fixed_noise)
    anchors = source_anchors(h.source_models)
    for lm, a in zip(h.target.low_models, anchors):
        assert np.max(np.abs(lm.weights - a * lm.scale)) <= 1e-4
        # the anchor induces the source predictor on unscaled inputs
        np.testing.assert_allclose(lm.raw_weights(), a, atol=1e-4 / lm.scale)


def test_anchor_reproduces_source_predictor(pair):
    src, tgt, part = pair
    source = train_source_models(src, 1.0, part, 0.01, np.random.default_rng(2))
    for m, a, g in zip(source, source_anchors(source), part.groups):
        np.testing.assert_allclose(tgt.X[:, g] @ a, m.margin(tgt.X[:, g]), rtol=1e-12, atol=1e-12)


def test_anchored_fit_closer_to_source_than_scratch(pair):
    src, tgt, part = pair
    tiny = tgt.subset(np.arange(40))
    h = train_pst_h(src, tiny, INF, INF, part, 0.01, 10.0, rng=np.random.default_rng(0))
    scratch = train_pst_f(tiny, INF, part, 10.0, rng=np.random.default_rng(0))
    for k, a in enumerate(source_anchors(h.source_models)):
        d_anchor = np.linalg.norm(h.target.low_models[k].raw_weights() - a)
        d_scratch = np.linalg.norm(scratch.low_models[k].raw_weights() - a)
        assert d_anchor < d_scratch


def test_budget_independence_and_round_trip(pair):
    src, tgt, part = pair
    h = train_pst_h(src, tgt, 2.0, 0.5, part, 0.01, 0.01, rng=np.random.default_rng(5))
    assert all(m.epsilon == 2.0 for m in h.source_models)
    assert all(e.epsilon == 0.5 for e in h.target.ledger)
    assert h.target.partition is part
    doc = json.loads(json.dumps(h.to_dict()))
    assert doc["kind"] == "pst-h" and doc["eps_src"] == 2.0
    back = TransferModel.from_dict(doc)
    for comb in ("hl", "mv", "wmv"):
        np.testing.assert_array_equal(predict_transfer(back, tgt.X, comb), predict_transfer(h, tgt.X, comb))
    for a, b in zip(back.source_models, h.source_models):
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.scale == b.scale


def test_dimension_mismatch(pair):
    src, tgt, part = pair
    with pytest.raises(ValueError):
        train_pst_h(src.columns(np.arange(10)), tgt, 1.0, 1.0, part, 0.01, 0.01)
    bad = tuple(LinearModel(np.zeros(3), 1.0, 1.0, 0.01) for _ in part.groups)
    with pytest.raises(ValueError):
        train_pst_h(None, tgt, 1.0, 1.0, part, 0.01, 0.01, source_models=bad)
    with pytest.raises(ValueError):
        train_source_models(src, 1.0, FeaturePartition((np.arange(5),), [1.0]), 0.01)


def test_predict_matches_target(pair):
    src, tgt, part = pair
    h = train_pst_h(src, tgt, 1.0, 1.0, part, 0.01, 0.01, rng=np.random.default_rng(9))
    np.testing.assert_array_equal(predict_transfer(h, tgt.X), predict_stacked(h.target, tgt.X))
