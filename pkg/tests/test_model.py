import importlib.resources

import numpy as np
import pytest

from hmmlu import (CovEffect, Factor, InputError, ItemSchema, LatentAssoc,
                   ModelSpec, RespAssoc, UncertaintyKind, compile_model,
                   count_parameters, decompose_joint, load_model_spec,
                   mixture_oracle, model_spec_from_dict,
                   necessary_identifiability, theorem1_check)

DATA = importlib.resources.files("hmmlu") / "data"


def bivariate_spec(**kw):
    base = dict(schema=ItemSchema((4, 4)),
                resp_assoc=RespAssoc.UNIFORM,
                uncertainty=UncertaintyKind.UNIFORM)
    base.update(kw)
    return ModelSpec(**base)


def test_packaged_model_parameter_counts():
    published = {"m0": 103, "m1": 67, "m2": 67, "m3": 55, "m4": 49,
                 "m5": 36, "m6": 30}
    for name, want in published.items():
        spec = load_model_spec(DATA / "models" / f"{name}.yaml")
        assert count_parameters(spec) == want, name


def test_strata_order_and_labels():
    spec = load_model_spec(DATA / "models" / "m5.yaml")
    cm = compile_model(spec)
    assert cm.strata_labels == ["male-north", "male-south",
                               "female-north", "female-south"]


def test_unknown_config_keys_rejected():
    with pytest.raises(InputError):
        model_spec_from_dict({"version": 1, "items": [], "bogus": True})


def test_logit_kind_consistency():
    with pytest.raises(InputError):
        ModelSpec(schema=ItemSchema((4,)), logit_types=("global",),
                  uncertainty=UncertaintyKind.LOCAL_RESHAPED_PARABOLIC)


def test_necessary_identifiability_formulas():
    r2 = necessary_identifiability(ItemSchema((4, 4)))
    assert (r2["params"], r2["free_frequencies"]) == (20, 15)
    assert not r2["satisfied"]
    r3 = necessary_identifiability(ItemSchema((4, 4, 4)))
    assert (r3["params"], r3["free_frequencies"]) == (46, 63)
    assert r3["satisfied"]


def test_mixture_oracle_point_mass():
    rng = np.random.default_rng(0)
    aware = rng.dirichlet(np.ones(16))
    gs = [np.full(4, 0.25)] * 2
    # all-aware configuration reproduces the aware joint
    pi = np.array([0.0, 0.0, 0.0, 1.0])
    np.testing.assert_allclose(mixture_oracle(pi, gs, aware, (4, 4)),
                               aware, atol=1e-14)
    # all-uncertain configuration is the product of the g's
    pi = np.array([1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(mixture_oracle(pi, gs, aware, (4, 4)),
                               np.full(16, 1 / 16), atol=1e-14)


def test_joint_factorization_holds_at_any_beta():
    spec = bivariate_spec(latent_assoc=LatentAssoc.UNRESTRICTED)
    cm = compile_model(spec)
    rng = np.random.default_rng(4)
    for _ in range(5):
        beta = rng.normal(0, 0.4, cm.p)
        p_joint = cm.joint_p(beta, 0)
        assert theorem1_check(p_joint, spec.schema) < 1e-8


def test_decompose_joint_components():
    spec = bivariate_spec()
    cm = compile_model(spec)
    beta = np.zeros(cm.p)
    pi, gs, aware = decompose_joint(cm.joint_p(beta, 0), spec.schema)
    assert pi.shape == (4,)
    np.testing.assert_allclose(sum(pi), 1.0)
    for g in gs:
        np.testing.assert_allclose(g, np.full(4, 0.25), atol=1e-9)


def test_latent_independence_drops_interaction():
    free = bivariate_spec(latent_assoc=LatentAssoc.UNRESTRICTED)
    indep = bivariate_spec(latent_assoc=LatentAssoc.INDEPENDENCE)
    assert count_parameters(free) == count_parameters(indep) + 1


def test_factor_expansion():
    spec = bivariate_spec(
        factors=(Factor("g", ("a", "b")),),
        latent_cov=CovEffect.ADDITIVE_PARALLEL,
        resp_cov=CovEffect.ADDITIVE_PARALLEL)
    cm = compile_model(spec)
    assert cm.H == 2
    assert any(":g=b" in n for n in cm.param_names)


def test_fixed_phi_removes_parameters():
    spec = bivariate_spec(
        uncertainty=UncertaintyKind.LOCAL_RESHAPED_PARABOLIC)
    pinned = bivariate_spec(
        uncertainty=UncertaintyKind.LOCAL_RESHAPED_PARABOLIC,
        phi_fixed=(1.0, -1.0))
    assert count_parameters(spec) == count_parameters(pinned) + 2
