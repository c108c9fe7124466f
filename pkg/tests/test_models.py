import json

import numpy as np
import pytest

from dpstack.data import SynthSpec, synth_generate
from dpstack.models import load_model, model_dim, model_from_dict, model_kind, predict, save_model
from dpstack.partition import feature_partition
from dpstack.plr import train_plr
from dpstack.stacking import train_pst_f, train_pst_s
from dpstack.transfer import train_pst_h


@pytest.fixture(scope="module")
def models():
    spec = SynthSpec(n=800, d=12, k_true=3, strengths=(1.0, 0.5, 0.25), informative_fraction=(1, 1, 1))
    ds, v = synth_generate(spec, np.random.default_rng(0))
    part = feature_partition(12, 3, "sorted", v)
    rng = np.random.default_rng(1)
    return ds, {
        "plr": train_plr(ds, 1.0, 0.01, rng=rng),
        "pst-s": train_pst_s(ds, 1.0, 3, 0.01, rng=rng),
        "pst-f": train_pst_f(ds, 1.0, part, 0.01, rng=rng),
        "pst-h": train_pst_h(ds, ds, 1.0, 1.0, part, 0.01, 0.01, rng=rng),
    }


@pytest.mark.parametrize("kind", ["plr", "pst-s", "pst-f", "pst-h"])
def test_round_trip(models, kind, tmp_path):
    ds, ms = models
    m = ms[kind]
    assert model_kind(m) == kind and model_dim(m) == 12
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert model_kind(back) == kind
    np.testing.assert_array_equal(predict(back, ds.X), predict(m, ds.X))


def test_combiner_dispatch(models):
    ds, ms = models
    with pytest.raises(ValueError):
        predict(ms["plr"], ds.X, "mv")
    with pytest.raises(ValueError):
        predict(ms["pst-s"], ds.X, "wmv")
    assert predict(ms["pst-f"], ds.X, "wmv").shape == (ds.n,)


def test_bad_documents(models):
    _, ms = models
    doc = json.loads(json.dumps(ms["plr"].to_dict()))
    with pytest.raises(ValueError):
        model_from_dict({**doc, "format_version": 2})
    with pytest.raises(ValueError):
        model_from_dict({**doc, "kind": "svm"})
    with pytest.raises(TypeError):
        model_kind(object())
