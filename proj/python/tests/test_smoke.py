import math

import numpy as np
import pytest

import mvaug


def small_params(d=64, K=2, sigma_xi=1.0):
    p = mvaug.DistParams()
    p.d, p.P, p.K = d, 2, K
    p.rho = [1.0 / K] * K
    p.sigma_xi = sigma_xi
    return p


def test_psi_values():
    assert mvaug.psi(0.5, 3) == pytest.approx(0.125 / 3.0)
    assert mvaug.psi(2.0, 3) == pytest.approx(2.0 - 2.0 / 3.0)
    assert mvaug.psi(-2.0, 3) == pytest.approx(-mvaug.psi(2.0, 3))
    assert mvaug.psi_prime(0.5, 3) == pytest.approx(0.25)
    assert mvaug.psi_prime(3.0, 3) == pytest.approx(1.0)


def test_dataset_shape_and_determinism():
    p = small_params()
    a = mvaug.generate_dataset(p, 10, mvaug.SamplingMode.STRATIFIED, 7)
    b = mvaug.generate_dataset(p, 10, mvaug.SamplingMode.STRATIFIED, 7)
    assert len(a) == 10
    assert sorted(a.views) == [0] * 5 + [1] * 5
    assert set(a.labels) <= {-1, 1}
    X = a.patches(0)
    assert X.shape == (2, 64)
    np.testing.assert_array_equal(X, b.patches(0))
    with pytest.raises(IndexError):
        a.patches(10)


def test_invalid_params_raise():
    p = small_params()
    p.rho = [0.7, 0.7]
    assert p.validate()
    with pytest.raises(Exception):
        mvaug.generate_dataset(p, 4)


def test_augmentation_multiplies_dataset():
    p = small_params(K=4)
    ds = mvaug.generate_dataset(p, 8, mvaug.SamplingMode.IID, 3)
    aug = mvaug.augment_dataset(ds)
    assert len(aug) == 32
    assert aug.augmented
    assert sorted(aug.labels) == sorted(ds.labels * 4)


def test_gradient_matches_finite_difference():
    p = small_params(d=16, sigma_xi=0.5)
    ds = mvaug.generate_dataset(p, 4, mvaug.SamplingMode.IID, 11)
    m = mvaug.init_weights(2, 16, 0.1, 5)
    G = mvaug.gradient(m, ds)
    h = 1e-6
    for c, j in [(0, 0), (1, 3), (0, 9)]:
        plus, minus = mvaug.Model(), mvaug.Model()
        plus.q = minus.q = m.q
        Wp, Wm = m.W.copy(), m.W.copy()
        Wp[c, j] += h
        Wm[c, j] -= h
        plus.W, minus.W = Wp, Wm
        fd = (mvaug.loss(plus, ds) - mvaug.loss(minus, ds)) / (2 * h)
        assert fd == pytest.approx(G[c, j], rel=1e-5, abs=1e-9)


def test_training_reaches_margin():
    p = small_params(d=256, sigma_xi=1.0)
    ds = mvaug.generate_dataset(p, 8, mvaug.SamplingMode.STRATIFIED, 1)
    m0 = mvaug.init_weights(4, 256, 0.05, 2)
    cfg = mvaug.TrainConfig()
    cfg.eta = 1.0
    cfg.max_steps = 20000
    res = mvaug.train(ds, m0, cfg)
    assert res.stop_time is not None
    assert np.min(res.final_margins) >= 1.0
    assert mvaug.loss(res.model, ds) < math.log(2.0)
    err = mvaug.test_error(res.model, p, 500, 9)
    assert 0.0 <= err["error"] <= 1.0
    assert err["n_test"] == 500


def test_zero_model_loss_is_log2():
    p = small_params()
    ds = mvaug.generate_dataset(p, 6, mvaug.SamplingMode.IID, 4)
    m = mvaug.Model()
    m.W = np.zeros((3, 64))
    assert mvaug.loss(m, ds) == pytest.approx(math.log(2.0))
    assert np.all(mvaug.scores(m, ds) == 0.0)


def test_ginit_report_keys():
    p = small_params(d=1024, K=4, sigma_xi=2.0)
    ds = mvaug.generate_dataset(p, 16, mvaug.SamplingMode.IID, 1)
    rep = mvaug.check_ginit(mvaug.init_weights(12, 1024, 0.02, 2), ds, 0.02)
    assert isinstance(rep, dict) and rep


def test_dataset_round_trip(tmp_path):
    ds = mvaug.generate_dataset(small_params(), 5, mvaug.SamplingMode.IID, 13)
    mvaug.save_dataset(ds, str(tmp_path / "ds"))
    back = mvaug.load_dataset(str(tmp_path / "ds"))
    assert back.labels == ds.labels
    np.testing.assert_array_equal(back.patches(2), ds.patches(2))


def test_preset_and_scenario():
    spec = mvaug.preset("thm1")
    assert spec["scenario"] == "thm1"
    rec = mvaug.run_scenario({"scenario": "spurious", "n_test": 200}, seed=1)
    assert rec["scenario"] == "spurious"
    assert rec["seed"] == 1
    assert "assertions" in rec
