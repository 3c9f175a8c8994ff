import numpy as np
import pytest

from hmmlu import (compile_model, mc_study, mixture_oracle, sample,
                   sample_scenario, scenario_catalog)
from hmmlu.mle import make_engine


def test_catalog_truths():
    cat = scenario_catalog()
    assert set(cat) == {"A", "B", "C"}
    a = cat["A"]
    cm = compile_model(a.model_spec())
    truth = dict(zip(cm.param_names, a.true_beta(cm)))
    assert truth["aware[item1:1]"] == pytest.approx(0.6931, abs=5e-4)
    assert truth["aware[item1:2]"] == pytest.approx(0.4055, abs=5e-4)
    assert truth["aware[item1:3]"] == pytest.approx(0.2877, abs=5e-4)
    assert truth["latent[U1]"] == pytest.approx(np.log(7 / 3))
    assert truth["latent[U1U2]"] == 2.0
    assert truth["assoc[item1,item2]"] == 3.0
    c = cat["C"]
    cmc = compile_model(c.model_spec())
    tc = dict(zip(cmc.param_names, c.true_beta(cmc)))
    assert tc["aware[item1:1]"] == pytest.approx(-1.3863, abs=5e-4)
    assert tc["aware[item1:2]"] == pytest.approx(0.0, abs=1e-12)
    assert tc["aware[item2:1]"] == pytest.approx(1.3863, abs=5e-4)
    assert tc["latent[U1U2]"] == 0.0
    assert cat["B"].latent_logor == 0.0


def test_law_equality_truth_vs_compiled():
    # expected counts from the compiled model at the true parameters
    # equal the oracle composition for every scenario
    for sc in scenario_catalog().values():
        cm = compile_model(sc.model_spec())
        engine = make_engine(cm)
        q, _ = engine.stratum_q_grad(sc.true_beta(cm), 0, want_grad=False)
        assert np.max(np.abs(q - sc.observable_q())) < 1e-8


def test_sampler_determinism():
    sc = scenario_catalog()["B"]
    t1 = sample_scenario(sc, 500, np.random.default_rng([3, 0]))
    t2 = sample_scenario(sc, 500, np.random.default_rng([3, 0]))
    np.testing.assert_array_equal(t1.counts, t2.counts)
    assert t1.counts.sum() == 500


def test_sampler_point_mass_components():
    rng = np.random.default_rng(21)
    sc = scenario_catalog()["A"]
    gs = [np.full(4, 0.25)] * 2
    aware = sc.aware_joint()
    n = 200000
    # all-aware: empirical pmf tracks the aware joint
    c = sample(np.array([0, 0, 0, 1.0]), gs, aware, (4, 4), n, rng)
    assert np.max(np.abs(c / n - aware)) < 3 / np.sqrt(n) + 3e-3
    # all-uncertain with uniform g: independence, uniform over 16 cells
    c = sample(np.array([1.0, 0, 0, 0]), gs, aware, (4, 4), n, rng)
    chi2 = np.sum((c - n / 16) ** 2 / (n / 16))
    assert chi2 < 50  # df 15; far tail only under a broken sampler


def test_sampler_mixture_law():
    rng = np.random.default_rng(8)
    sc = scenario_catalog()["A"]
    gs = [np.full(4, 0.25)] * 2
    n = 1_000_000
    c = sample(sc.latent_pi(), gs, sc.aware_joint(), sc.m, n, rng)
    q = sc.observable_q()
    z = (c / n - q) / np.sqrt(q * (1 - q) / n)
    assert np.max(np.abs(z)) < 5


def test_mc_study_shapes_and_failures():
    sc = scenario_catalog()["A"]
    st = mc_study(sc, 2000, 3, seed=5)
    assert st.estimates.shape == (3, 10)
    assert st.ignore_estimates.shape == (3, 7)
    assert st.n_failed == 0
    s = st.summary()
    assert s["n_failed"] == 0
    assert len(s["correct"]["parameters"]) == 10
    rows = st.boxplot_rows()
    assert len(rows) == 3 * 10 + 3 * 7
    assert all(len(r) == 4 for r in rows)
