import csv
import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from prach_hybrid.channel import ChannelConfig, simulate_reception
from prach_hybrid.correlator import compute_pdp, window_features
from prach_hybrid.explain import (exact_shapley, explain_report, permutation_shapley,
                                  present_probability, shapley_values, shapley_weights)
from prach_hybrid.mlp import MlpModel, forward
from prach_hybrid.zc import RootSet, base_spectrum

feature_vec = arrays(np.float64, 13, elements=st.floats(0, 5))


@pytest.fixture(scope="module")
def random_model():
    return MlpModel.init(13, seed=21)


def test_weights_sum_per_player():
    from math import comb
    for d in (1, 4, 13):
        w = shapley_weights(d)
        assert sum(comb(d - 1, s) * w[s] for s in range(d)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(feature_vec, feature_vec)
def test_efficiency(x, base):
    m = MlpModel.init(13, seed=4)
    phi = shapley_values(m, x, base)
    f = forward(m, np.stack([x, base]))[:, 1]
    assert abs(phi.sum() - (f[0] - f[1])) < 1e-9


def test_input_equal_to_baseline_gives_zero(random_model):
    x = np.linspace(0, 2, 13)
    assert np.all(shapley_values(random_model, x, x) == 0.0)


def test_symmetry_and_dummy():
    # f depends on features 0 and 1 symmetrically and ignores the rest
    def value(z):
        return z[..., 0] * z[..., 1] + 0.5 * (z[..., 0] + z[..., 1])
    x = np.zeros(13)
    x[:2] = 2.0
    x[5] = 7.0
    phi = exact_shapley(value, x, np.zeros(13))
    assert phi[0] == pytest.approx(phi[1], abs=1e-12)
    assert np.all(np.abs(phi[2:]) < 1e-12)
    assert phi.sum() == pytest.approx(value(x), abs=1e-12)


def test_linear_model_attributions():
    w = np.arange(13.0)
    phi = exact_shapley(lambda z: z @ w, np.ones(13), np.zeros(13))
    assert np.allclose(phi, w, atol=1e-12)


def test_permutation_estimator_agrees(pdp_model, models):
    data = [w for w in models.dataset() if w.is_present][:20]
    f = present_probability(pdp_model)
    base = np.zeros(13)
    for i, w in enumerate(data):
        x = w.normalized(pdp_model.normalization)
        exact = shapley_values(pdp_model, x, base)
        est, se = permutation_shapley(f, x, base, n_perm=300, seed=i)
        assert np.all(np.abs(est - exact) <= 4 * se + 1e-9)


def test_cdp_model_rejected():
    m = MlpModel.init(26, seed=0, input_kind="cdp")
    with pytest.raises(ValueError):
        shapley_values(m, np.zeros(26))
    with pytest.raises(ValueError):
        shapley_values(MlpModel.init(13, seed=0), np.zeros(13), input_kind="cdp")


def test_report_on_empty_slice(tmp_path, random_model):
    path = tmp_path / "e.csv"
    summary = explain_report(random_model, [], path)
    lines = path.read_text().splitlines()
    assert lines == ["instance," + ",".join(f"attr_{j}" for j in range(13)) +
                     ",f_x,f_baseline,detected,argmax_feature,argmax_attribution"]
    assert summary["instances"] == 0 and summary["argmax_match_rate"] is None


def test_report_content(tmp_path, pdp_model, models):
    data = [w for w in models.dataset() if w.is_present and w.snr_db == 10.0][:30]
    path = tmp_path / "e.csv"
    summary = explain_report(pdp_model, data, path, baseline=np.zeros(13), header={"note": "x"})
    text = path.read_text()
    assert text.startswith("# note: ")
    rows = list(csv.DictReader(line for line in text.splitlines() if not line.startswith("#")))
    assert len(rows) == 30
    for r in rows:
        phi = np.array([float(r[f"attr_{j}"]) for j in range(13)])
        assert abs(phi.sum() - (float(r["f_x"]) - float(r["f_baseline"]))) < 1e-9
    # at high SNR the largest attribution sits on the correlation peak
    assert summary["argmax_match_rate"] >= 0.9
    assert json.loads((tmp_path / "e.summary.json").read_text())["detected"] == summary["detected"]


def test_report_rejects_mixed_kind(tmp_path, random_model, models):
    w = dataclasses.replace(models.dataset()[0], input_kind="cdp")
    with pytest.raises(ValueError):
        explain_report(random_model, [w], tmp_path / "e.csv")


def test_noiseless_awgn_argmax_matches_peak(models):
    m = models.model("awgn", 1)
    roots = RootSet()
    detected = hits = 0
    for rapid in range(0, 64, 3):
        b, v = roots.locate(rapid)
        for k in range(13):
            g = simulate_reception(roots.config(b, v), ChannelConfig(delay_samples=k * 4096 / 139))
            prof = compute_pdp(g, base_spectrum(roots.config(b)))
            feats = window_features(prof.values, "pdp", 139, 13)[v]
            x = feats / prof.mean_power
            if forward(m, x)[1] < 0.5:
                continue
            detected += 1
            hits += int(np.argmax(np.abs(shapley_values(m, x)))) == int(np.argmax(x))
    assert detected > 0 and hits == detected
