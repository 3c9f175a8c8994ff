"""Monte Carlo machinery: benchmark scenarios, a sampler for the latent
mixture, and a simulation study that fits both the uncertainty-aware model
and the comparator that ignores uncertainty."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .marparam import LogitType, MarginalParamSpec, saturated_obs_spec
from .mle import fit, make_engine
from .model import (CompiledModel, LatentAssoc, ModelSpec, RespAssoc,
                    compile_marginal, compile_model, mixture_oracle)
from .shapes import UncertaintyKind
from .tables import CountTable, InputError, ItemSchema


@dataclass(frozen=True)
class Scenario:
    """A bivariate benchmark configuration: aware marginals, a shared
    uniform local log odds ratio for the aware pair, Bernoulli latents with
    the given marginal probabilities and pairwise log odds ratio, and
    Uniform uncertainty pmfs."""

    name: str
    margins: tuple[tuple[float, ...], ...]
    assoc: float = 3.0
    pi_margin: tuple[float, ...] = (0.7, 0.7)
    latent_logor: float = 0.0

    @property
    def m(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.margins)

    @property
    def schema(self) -> ItemSchema:
        return ItemSchema(self.m)

    def latent_pi(self) -> np.ndarray:
        """Joint pmf of the latent pair, last latent fastest."""
        v = len(self.pi_margin)
        mp = MarginalParamSpec((2,) * v, n_latent=0,
                               logit_types=[LogitType.BASELINE0] * v)
        eta = np.zeros(mp.n_eta)
        for i, pl in enumerate(self.pi_margin):
            eta[mp.block((i,)).sl] = np.log(pl / (1.0 - pl))
        if v == 2:
            eta[mp.block((0, 1)).sl] = self.latent_logor
        elif self.latent_logor != 0.0:
            raise InputError("latent_logor needs exactly two latents")
        return mp.p_from_eta(eta)

    def aware_joint(self) -> np.ndarray:
        """Joint pmf of the responses given full awareness."""
        m = self.m
        mp = saturated_obs_spec(m)
        eta = np.zeros(mp.n_eta)
        for i, g in enumerate(self.margins):
            g = np.asarray(g, dtype=float)
            eta[mp.block((i,)).sl] = np.log(g[1:] / g[:-1])
        for i in range(len(m)):
            for j in range(i + 1, len(m)):
                eta[mp.block((i, j)).sl] = self.assoc
        return mp.p_from_eta(eta)

    def observable_q(self) -> np.ndarray:
        """Population pmf of the observable table under the mixture."""
        gs = [np.full(mi, 1.0 / mi) for mi in self.m]
        return mixture_oracle(self.latent_pi(), gs, self.aware_joint(),
                              self.m)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            schema=self.schema,
            latent_assoc=LatentAssoc.UNRESTRICTED,
            resp_assoc=RespAssoc.UNIFORM,
            uncertainty=UncertaintyKind.UNIFORM)

    def true_beta(self, cm: CompiledModel) -> np.ndarray:
        """Population parameter vector laid out for the compiled model
        (either the mixture model or the ignoring-uncertainty comparator,
        whose logit/association parameters then refer to the mixture pmf
        rather than the aware component)."""
        by_name = {}
        for i, pl in enumerate(self.pi_margin):
            by_name[f"latent[U{i+1}]"] = np.log(pl / (1.0 - pl))
        by_name["latent[U1U2]"] = self.latent_logor
        items = cm.spec.item_names
        for i, g in enumerate(self.margins):
            g = np.asarray(g, dtype=float)
            lam = np.log(g[1:] / g[:-1])
            for j, val in enumerate(lam, start=1):
                by_name[f"aware[{items[i]}:{j}]"] = val
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                by_name[f"assoc[{items[i]},{items[j]}]"] = self.assoc
        if not cm.latent:
            # the comparator's truth is the marginal parameterization of
            # the mixture pmf itself
            eta = cm.mp.eta_from_p(self.observable_q())
            beta = np.zeros(cm.p)
            for idx in range(cm.p):
                col = cm.X[0, :, idx]
                beta[idx] = eta[np.flatnonzero(col)[0]]
            # the uniform association is an average over its block
            for idx in cm.groups.get("assoc", []):
                rows = np.flatnonzero(cm.X[0, :, idx])
                beta[idx] = eta[rows].mean()
            return beta
        beta = np.zeros(cm.p)
        for idx, name in enumerate(cm.param_names):
            if name not in by_name:
                raise InputError(f"no population value for {name}")
            beta[idx] = by_name[name]
        return beta


def scenario_catalog() -> dict[str, Scenario]:
    up = (0.1, 0.2, 0.3, 0.4)
    return {
        "A": Scenario("A", margins=(up, up), latent_logor=2.0),
        "B": Scenario("B", margins=(up, up[::-1])),
        "C": Scenario("C", margins=((0.4, 0.1, 0.1, 0.4),
                                    (0.1, 0.4, 0.4, 0.1))),
    }


def sample(pi: np.ndarray, gs, aware_joint: np.ndarray, m, n: int,
           rng) -> np.ndarray:
    """Draw n observations from the mixture by its generative story: a
    latent configuration from pi, a full aware response vector from the
    aware joint, then each uncertain coordinate overwritten with an
    independent draw from that item's uncertainty pmf.  Returns the count
    vector over the observable table (last item fastest)."""
    m = tuple(int(x) for x in m)
    v = len(m)
    n = int(n)
    if n <= 0:
        raise InputError("sample size must be positive")
    u_idx = rng.choice(2 ** v, size=n, p=np.asarray(pi, dtype=float))
    cell = rng.choice(len(aware_joint), size=n,
                      p=np.asarray(aware_joint, dtype=float))
    coords = np.array(np.unravel_index(cell, m)).T  # n x v
    for i in range(v):
        # latent i sits at bit v-1-i of the configuration index
        uncertain = (u_idx >> (v - 1 - i)) & 1 == 0
        k = int(uncertain.sum())
        if k:
            coords[uncertain, i] = rng.choice(
                m[i], size=k, p=np.asarray(gs[i], dtype=float))
    flat = np.ravel_multi_index(coords.T, m)
    return np.bincount(flat, minlength=int(np.prod(m)))


def sample_scenario(scenario: Scenario, n: int, rng) -> CountTable:
    """One simulated dataset from a benchmark scenario."""
    gs = [np.full(mi, 1.0 / mi) for mi in scenario.m]
    counts = sample(scenario.latent_pi(), gs, scenario.aware_joint(),
                    scenario.m, n, rng)
    return CountTable(schema=scenario.schema, strata=["all"],
                      counts=counts[None, :])


@dataclass
class McStudy:
    """Replicate-level estimates from a simulation run."""

    scenario: str
    n: int
    reps: int
    seed: int
    param_names: list[str]
    true_beta: np.ndarray
    estimates: np.ndarray            # reps x p, NaN where a fit failed
    ignore_param_names: list[str] = field(default_factory=list)
    ignore_estimates: np.ndarray | None = None

    @property
    def n_failed(self) -> int:
        return int(np.any(np.isnan(self.estimates), axis=1).sum())

    def boxplot_rows(self):
        """Per-replication errors (estimate - true) for external plotting:
        rows of (model, rep, parameter, error)."""
        rows = []
        for rep in range(self.reps):
            if np.any(np.isnan(self.estimates[rep])):
                continue
            for j, nm in enumerate(self.param_names):
                rows.append(("correct", rep, nm,
                             float(self.estimates[rep, j]
                                   - self.true_beta[j])))
        if self.ignore_estimates is not None:
            # errors against the aware-component truth, so the comparator's
            # attenuation is visible as off-centre boxes
            truth = dict(zip(self.param_names, self.true_beta))
            ref = [truth.get(nm.replace("logit[", "aware[", 1), np.nan)
                   for nm in self.ignore_param_names]
            for rep in range(self.reps):
                if np.any(np.isnan(self.ignore_estimates[rep])):
                    continue
                for j, nm in enumerate(self.ignore_param_names):
                    rows.append(("ignoring", rep, nm,
                                 float(self.ignore_estimates[rep, j]
                                       - ref[j])))
        return rows

    def summary(self) -> dict:
        def stats(est, names, truth):
            ok = ~np.any(np.isnan(est), axis=1)
            sub = est[ok]
            return {
                "n_converged": int(ok.sum()),
                "parameters": [
                    {"name": nm, "true": None if truth is None
                     else float(truth[j]),
                     "mc_average": float(sub[:, j].mean()),
                     "mc_sd": float(sub[:, j].std(ddof=1))}
                    for j, nm in enumerate(names)],
            }

        out = {"scenario": self.scenario, "n": self.n, "reps": self.reps,
               "seed": self.seed, "n_failed": self.n_failed,
               "correct": stats(self.estimates, self.param_names,
                                self.true_beta)}
        if self.ignore_estimates is not None:
            out["ignoring"] = stats(self.ignore_estimates,
                                    self.ignore_param_names, None)
        return out


def mc_study(scenario: Scenario, n: int, reps: int, seed: int = 0,
             fit_ignoring: bool = True, verbose: bool = False) -> McStudy:
    """Repeatedly sample from the scenario and refit.

    The mixture model is started at the population values (the usual
    device in simulation studies: it fixes the estimation basin so that
    averages measure sampling error, not label switching); the comparator
    is started from its own data-driven default.
    """
    cm = compile_model(scenario.model_spec())
    truth = scenario.true_beta(cm)
    engine = make_engine(cm)
    est = np.full((reps, cm.p), np.nan)
    cmi = compile_marginal(scenario.model_spec()) if fit_ignoring else None
    est_i = np.full((reps, cmi.p), np.nan) if fit_ignoring else None
    for rep in range(reps):
        rng = np.random.default_rng([seed, rep])
        table = sample_scenario(scenario, n, rng)
        res = fit(cm, table.counts, init=truth, n_starts=1, engine=engine)
        if res.converged:
            est[rep] = res.beta
        if fit_ignoring:
            res_i = fit(cmi, table.counts, n_starts=1)
            if res_i.converged:
                est_i[rep] = res_i.beta
        if verbose:
            print(f"rep {rep + 1}/{reps}: loglik {res.loglik:.3f} "
                  f"converged={res.converged}")
    return McStudy(
        scenario=scenario.name, n=n, reps=reps, seed=seed,
        param_names=list(cm.param_names), true_beta=truth, estimates=est,
        ignore_param_names=list(cmi.param_names) if fit_ignoring else [],
        ignore_estimates=est_i)
