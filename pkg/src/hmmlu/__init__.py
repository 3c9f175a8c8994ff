"""Hierarchical marginal models with latent uncertainty for multivariate
ordinal ratings."""

from .marparam import (ConvergenceError, LogitType, MarginalParamSpec,
                       saturated_obs_spec)
from .mc import McStudy, Scenario, mc_study, sample, sample_scenario, \
    scenario_catalog
from .mle import (FitResult, default_init, fit, joint_residuals,
                  local_identifiability, loglik, lrt, marginal_residuals,
                  score_fisher)
from .model import (CompiledModel, CovEffect, Factor, LatentAssoc,
                    ModelSpec, RespAssoc, compile_marginal, compile_model,
                    count_parameters, decompose_joint, load_model_spec,
                    mixture_oracle, model_spec_from_dict,
                    necessary_identifiability, theorem1_check)
from .shapes import (ShapedPmf, UncertaintyKind, logit_constants,
                     shaped_pmf)
from .tables import CountTable, InputError, ItemSchema, read_counts_csv

__version__ = "0.1.0"

__all__ = [
    "CompiledModel", "ConvergenceError", "CountTable", "CovEffect",
    "Factor", "FitResult", "InputError", "ItemSchema", "LatentAssoc",
    "LogitType", "MarginalParamSpec", "McStudy", "ModelSpec", "RespAssoc",
    "Scenario", "ShapedPmf", "UncertaintyKind", "compile_marginal",
    "compile_model", "count_parameters", "decompose_joint", "default_init",
    "fit", "joint_residuals", "load_model_spec", "local_identifiability",
    "loglik", "logit_constants", "lrt", "marginal_residuals", "mc_study",
    "mixture_oracle", "model_spec_from_dict", "necessary_identifiability",
    "read_counts_csv", "saturated_obs_spec", "sample", "sample_scenario",
    "scenario_catalog", "score_fisher", "shaped_pmf", "theorem1_check",
]
