import numpy as np
import pytest

import htesel


def toy(n=800, seed=3):
    d = htesel.generate_toy(n, seed=seed)
    preds = htesel.noisy_candidates(d["tau"], [(0.0, 0.1), (0.3, 0.1), (0.5, 0.1)], seed=seed)
    return d, preds


def test_toy_shapes_and_truth():
    d = htesel.generate_toy(500, seed=1)
    assert d["x"].shape == (500, 8)
    assert set(np.unique(d["t"])) == {0, 1}
    np.testing.assert_array_equal(d["tau"], d["mu1"] - d["mu0"])
    assert d["e"].min() >= 0.1 and d["e"].max() <= 0.9


def test_select_returns_decision():
    d, preds = toy()
    assert preds.shape == (800, 3)
    out = htesel.select(d["x"], d["t"], d["y"], preds, seed=4)
    assert out["selector"] == "proposed"
    assert len(out["stats"]) == 3
    assert 0 in out["accepted"]
    assert out["stats"][2]["decision"] == "reject"
    again = htesel.select(d["x"], d["t"], d["y"], preds, seed=4)
    assert again == out


@pytest.mark.parametrize("name", ["naive", "bonferroni", "ablation"])
def test_other_selectors(name):
    d, preds = toy()
    out = htesel.select(d["x"], d["t"], d["y"], preds, selector=name)
    assert out["selector"] == name


def test_score_tensor_antisymmetric():
    d, preds = toy(200)
    t, fold = htesel.score_tensor(d["x"], d["t"], d["y"], preds)
    assert t.shape == (3, 3, 200)
    np.testing.assert_array_equal(t, -t.transpose(1, 0, 2))
    assert sorted(set(fold)) == [0, 1]


def test_exp_weights():
    w = htesel.exp_weights(np.array([1.0, 0.0]), 1.0)
    np.testing.assert_allclose(w, [0.7310585786300049, 0.2689414213699951], rtol=1e-14)


def test_errors_map_to_python():
    d, preds = toy(200)
    with pytest.raises(ValueError):
        htesel.select(d["x"], d["t"], d["y"], preds, selector="oracle")
    with pytest.raises(ValueError):
        htesel.select(d["x"], d["t"], d["y"], preds[:100])
    with pytest.raises(ValueError):
        htesel.run_experiment({"colour": "red"})


def test_run_experiment():
    rep = htesel.run_experiment({"n": 300, "repetitions": 3, "seed": 2, "workers": 1})
    assert rep["p"] == 5
    assert {s["name"] for s in rep["selectors"]} == {"naive", "bonferroni", "proposed"}
    for s in rep["selectors"]:
        assert 0.0 <= s["fwer"] <= 1.0
