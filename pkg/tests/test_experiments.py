import numpy as np
import pytest

import oracles
from bloomlab.dyadic import DyadicInterval
from bloomlab.experiments import (CSV_COLUMNS, ConfigError, ExperimentConfig, bloom_ratio, draw_weights,
                                  duality_study, extremize_b, identity_suite, lemma_suite,
                                  lower_bound_study, map_trials, norms_study, random_b,
                                  single_coefficient_scan, trial_rng)
from bloomlab.weights import bmo_prod


def cfg(**sections):
    return ExperimentConfig.from_dict(sections)


def test_config_defaults_and_overrides():
    c = ExperimentConfig()
    assert c.depth == 4 and c.p == 2.0
    d = c.override(depth=2, seed=11, trials=None)
    assert d.depth == 2 and d.seed == 11 and d.trials == c.trials
    assert ExperimentConfig.from_dict(d.to_dict()).to_dict() == d.to_dict()


@pytest.mark.parametrize("bad", [
    {"nonsense": {}},
    {"experiment": {"depth": 9}},
    {"experiment": {"p": 1.0}},
    {"experiment": {"seed": -1}},
    {"experiment": {"depth": 3, "mode": "exact"}},
    {"experiment": {"mode": "fancy"}},
    {"experiment": {"depth": "four"}},
    {"b": 3},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict([1])


def test_trial_rng_split():
    a = trial_rng(5, 3).standard_normal(4)
    assert np.array_equal(a, trial_rng(5, 3).standard_normal(4))
    assert not np.array_equal(a, trial_rng(5, 4).standard_normal(4))
    assert not np.array_equal(a, trial_rng(6, 3).standard_normal(4))


def test_thread_count_does_not_change_results(monkeypatch):
    c = cfg(experiment={"depth": 3, "trials": 4, "seed": 2})
    monkeypatch.setenv("BLOOMLAB_THREADS", "1")
    serial = bloom_ratio(c)["rows"]
    monkeypatch.setenv("BLOOMLAB_THREADS", "3")
    threaded = bloom_ratio(c)["rows"]
    assert serial == threaded
    assert map_trials(lambda i: i * i, range(6)) == [0, 1, 4, 9, 16, 25]


def test_random_b_kinds():
    rng = np.random.default_rng(0)
    b = random_b({"kind": "spectrum"}, 3, rng)
    from bloomlab.dyadic import haar_coefficients
    c = haar_coefficients(b)
    assert np.abs(c[0]).max() < 1e-12 and np.abs(c[:, 0]).max() < 1e-12
    assert random_b({"kind": "checkerboard"}, 2, rng)[0, 1] == -1.0
    g = random_b({"kind": "given", "values": np.ones((4, 4)).tolist(), "scale": 2.0}, 2, rng)
    assert np.all(g == 2.0)
    with pytest.raises(ConfigError):
        random_b({"kind": "given", "values": [[1.0]]}, 2, rng)
    with pytest.raises(ConfigError):
        random_b({"kind": "bogus"}, 2, rng)


def test_weight_cap_resampling():
    from bloomlab.weights import ap_characteristic
    c = cfg(experiment={"depth": 3}, weights={"mu": {"kind": "haar_perturbation", "amplitude": 0.3},
                                              "lam": {"kind": "constant"}, "max_ap": 1.6})
    counts = []
    for t in range(10):
        mu, lam, resamples = draw_weights(c, trial_rng(0, t))
        assert ap_characteristic(mu, 2.0) <= 1.6 and lam.is_constant()
        counts.append(resamples)
    assert max(counts) > 0
    with pytest.raises(ConfigError):
        draw_weights(cfg(weights={"mu": {"kind": "haar_perturbation", "amplitude": 3.0},
                                  "max_ap": 1.0001, "max_resample": 2}), trial_rng(0, 0))


@pytest.mark.parametrize("depth,b", [(1, "spectrum"), (2, "checkerboard"), (3, "spectrum")])
def test_identity_suite(depth, b):
    rep = identity_suite(cfg(experiment={"depth": depth, "trials": 3}, b={"kind": b}))
    assert rep["passed"], rep["failures"]
    assert {r["case"] for r in rep["rows"]} >= {"product_bi", "shift_shift", "pi_pi",
                                                 "mixed_shift_pi", "pi_pi_dual"}
    assert all(r["value"] <= 1e-10 for r in rep["rows"])


def test_bloom_constant_b_excluded():
    rep = bloom_ratio(cfg(experiment={"depth": 3, "trials": 3}, b={"kind": "constant"}))
    assert rep["n_excluded"] == 3 and rep["sup_ratio"] is None
    assert all(e["reason"] for e in rep["excluded"])


def test_bloom_single_coefficient_against_dense_oracle():
    single = {"kind": "single", "K": [0, 0], "I1": [1, 0], "I2": [1, 1]}
    c = cfg(experiment={"depth": 2, "trials": 1},
            weights={"mu": {"kind": "constant"}, "lam": {"kind": "constant"}},
            operators={"U1": single, "U2": single}, b={"kind": "haar", "positions": [[2, 3]]})
    row = bloom_ratio(c)["rows"][0]
    n = 4
    S = oracles.shift_1d({((0, 0), (1, 0), (1, 1)): 0.5}, n)
    hb = np.outer(oracles.haar_1d(1, 0, n), oracles.haar_1d(1, 1, n))

    # [U1, [b, U2]] f = U1 b U2 f - U1 U2 (b f) - b U2 U1 f + U2 (b U1 f)
    def nested(f):
        U1 = lambda g: S @ g
        U2 = lambda g: g @ S.T
        return U1(hb * U2(f)) - U1(U2(hb * f)) - hb * U2(U1(f)) + U2(hb * U1(f))

    ref = oracles.weighted_norm(oracles.dense(nested, n), np.ones((n, n)), np.ones((n, n)))
    ref_ratio = ref / oracles.bmo_prod_bruteforce(hb, np.ones((n, n)))
    assert row["value"] == pytest.approx(ref, abs=1e-8)
    assert row["ratio"] == pytest.approx(ref_ratio, abs=1e-8)


def test_bloom_report_shape():
    rep = bloom_ratio(cfg(experiment={"depth": 3, "trials": 4, "seed": 9}))
    assert rep["all_finite"] and rep["value_kind"] == "certified_norm"
    assert rep["max_b_scaling_error"] <= 1e-10 and rep["max_f_scaling_error"] <= 1e-10
    assert rep["tables"]["by_operators"] and rep["tables"]["by_ap"]
    for r in rep["rows"]:
        assert set(CSV_COLUMNS) <= set(r)
        assert r["mu_ap"] <= 16 and r["lambda_ap"] <= 16
        assert r["value_kind"] == "certified_norm"


def test_bloom_lower_estimates_off_two():
    rep = bloom_ratio(cfg(experiment={"depth": 2, "trials": 2, "p": 3.0, "lower_budget": 40}))
    assert rep["value_kind"] == "lower_estimate"
    assert all(r["value_kind"] == "lower_estimate" for r in rep["rows"])


def test_extremize_zero_operator():
    rep = extremize_b(cfg(experiment={"depth": 2, "budget": 10}, operators={"U1": {"kind": "zero"}}))
    assert rep["best_ratio"] == 0.0


def test_extremize_properties():
    c = cfg(experiment={"depth": 2, "budget": 40, "restarts": 4, "seed": 3})
    rep = extremize_b(c)
    assert rep["monotone"]
    assert rep["best_ratio"] >= max(s["ratio"] for s in rep["starts"])
    again = extremize_b(c)
    assert again["best_ratio"] == rep["best_ratio"] and again["trace"] == rep["trace"]
    scan = single_coefficient_scan(c)
    singles = [s["ratio"] for s in rep["starts"] if s["kind"] == "single"]
    assert scan["max_ratio"] >= max(singles) * (1 - 1e-12)
    # the recorded b attains the recorded ratio
    nu_ok = bmo_prod(np.array(rep["best_b"]), None, "exact").norm_value > 0
    assert nu_ok
    with pytest.raises(ConfigError):
        extremize_b(cfg(experiment={"p": 3.0}))


def test_lemma_suite():
    rep = lemma_suite(cfg(experiment={"depth": 3, "trials": 2}))
    assert rep["passed"] and rep["max_exact_error"] <= 1e-12
    fs = [r for r in rep["rows"] if r["quantity"].startswith("Fefferman")]
    assert fs and all(r["value"] >= 1.0 for r in fs)


def test_a1_ratio_single_haar_oracle():
    from bloomlab.paraproducts import paraproduct_operator
    from bloomlab.operators import operator_norm_p2
    n = 4
    b = np.outer(oracles.haar_1d(0, 0, n), oracles.haar_1d(1, 1, n))
    est = operator_norm_p2(paraproduct_operator("A1", b)).value
    ref = oracles.weighted_norm(oracles.dense(lambda f: oracles.paraproduct("A1", b, f), n),
                                np.ones((n, n)), np.ones((n, n)))
    assert est == pytest.approx(ref, rel=1e-8)
    assert est / bmo_prod(b).norm_value == pytest.approx(ref / oracles.bmo_prod_bruteforce(b, np.ones((n, n))),
                                                         rel=1e-8)


def test_duality_and_norm_studies():
    d = duality_study(cfg(experiment={"depth": 2, "trials": 3}))
    assert d["n_degenerate"] == 0 and d["sup_ratio"] > 0
    n = norms_study(cfg(experiment={"depth": 3, "trials": 3}))
    assert n["max_expected_error"] <= 1e-8 and n["max_oracle_error"] <= 1e-6


def test_lower_bound_study():
    rep = lower_bound_study(cfg(experiment={"depth": 3, "trials": 2, "k": 2}))
    assert rep["all_finite"] and rep["n_degenerate"] == 0
    assert all(r["witness"] is not None for r in rep["rows"])
    with pytest.raises(ConfigError):
        lower_bound_study(cfg(experiment={"depth": 1}))
