"""Maximum likelihood estimation for compiled models.

The observable counts in each stratum are multinomial with cell
probabilities q_h(beta) = L p_h(beta), where p_h is the joint (R, U) pmf
recovered from the linear predictor eta_h = X_h s(beta) + o_h by Newton
inversion of the marginal parameterization.  Likelihood, score and
expected (Fisher) information follow the multinomial chain rule; fitting
runs a quasi-Newton pass (L-BFGS-B with the analytic gradient) followed
by Fisher-scoring polish, with optional jittered restarts.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.stats

from .marparam import ConvergenceError
from .model import CompiledModel
from .tables import InputError

_PFLOOR = 1e-12


def _softmax_jac(p, Z):
    return p[:, None] * Z - np.outer(p, p @ Z)


def _inverse_param_jac(mp, p, Z, X):
    """d p / d eta through the inverse parameterization, applied to X."""
    J = mp.jacobian_eta_theta(p)
    try:
        Y = np.linalg.solve(J, X)
    except np.linalg.LinAlgError:
        Y, *_ = np.linalg.lstsq(J, X, rcond=None)
    return _softmax_jac(p, Z) @ Y


def _dense(A):
    return A.toarray() if hasattr(A, "toarray") else np.asarray(A)


class _Engine:
    """Reference evaluator working on the full joint (R, U) table; caches
    per-stratum state so successive evaluations warm-start the Newton
    inversion from the previous joint table."""

    def __init__(self, cm: CompiledModel):
        self.cm = cm
        self.theta = [None] * cm.H
        self.Z = _dense(cm.mp.Z)
        self.L = cm.L

    def stratum_p(self, beta: np.ndarray, h: int) -> np.ndarray:
        cm = self.cm
        eta = cm.eta(beta, h)
        init = self.theta[h]
        try:
            p, theta = cm.mp.p_from_eta(eta, init=init, return_theta=True)
        except ConvergenceError:
            if init is None:
                raise
            p, theta = cm.mp.p_from_eta(eta, return_theta=True)
        self.theta[h] = theta
        return p

    def stratum_q_grad(self, beta, h, want_grad=True):
        cm = self.cm
        p = self.stratum_p(beta, h)
        q = np.asarray(self.L @ p).ravel()
        if not want_grad:
            return q, None
        Xt = cm.X[h] * cm.link_jacobian_diag(beta)[None, :]
        dp = _inverse_param_jac(cm.mp, p, self.Z, Xt)
        return q, np.asarray(self.L @ dp)

    def q_all(self, beta: np.ndarray) -> np.ndarray:
        cm = self.cm
        q = np.empty((cm.H, cm.n_obs_cells))
        for h in range(cm.H):
            q[h], _ = self.stratum_q_grad(beta, h, want_grad=False)
        return q


def _pmf_from_logits(m, logit_type, lam):
    """Closed-form inversion of a one-variable logit vector where one
    exists; None otherwise."""
    from .marparam import LogitType
    lam = np.asarray(lam, dtype=float)
    if logit_type in (LogitType.LOCAL, LogitType.BASELINE0):
        from .shapes import pmf_from_local_logits
        return pmf_from_local_logits(lam)
    if logit_type == LogitType.GLOBAL:
        F = 1.0 / (1.0 + np.exp(lam))       # P(R <= j)
        g = np.diff(np.concatenate(([0.0], F, [1.0])))
        if np.any(g <= 0):
            raise ConvergenceError(
                "global logits do not define a distribution")
        return g
    return None


class _FastEngine:
    """Evaluator using the mixture factorization: the observable pmf is
    composed from the latent distribution pi, the per-item uncertainty
    pmfs g_i and the aware joint, each recovered by a small inversion
    instead of one Newton solve on the full joint table.

    The aware-joint interactions are the telescoped sums of the joint
    blocks S u T over latent subsets T, which is where the baseline-fixed
    contrast convention pays off.
    """

    def __init__(self, cm: CompiledModel):
        from .marparam import LogitType, MarginalParamSpec, saturated_obs_spec
        self.cm = cm
        spec = cm.spec
        schema = spec.schema
        self.v, self.m = schema.v, schema.m
        v = self.v
        self.mp_lat = MarginalParamSpec((2,) * v, 0, [LogitType.BASELINE0] * v)
        self.mp_obs = saturated_obs_spec(schema.m, spec.logit_types)
        self.Z_lat = _dense(self.mp_lat.Z)
        self.Z_obs = _dense(self.mp_obs.Z)
        self.n_lat_eta = 2**v - 1
        # the latent-only blocks lead the joint block order
        first = cm.mp.blocks[self.n_lat_eta - 1] if v else None
        self.g_sl = [cm.mp.block((i,)).sl for i in range(v)]
        self.star_parts = []
        lat_subsets = [tuple(v + t for t in T)
                       for k in range(v + 1)
                       for T in itertools.combinations(range(v), k)]
        for blk in self.mp_obs.blocks:
            parts = [cm.mp.block(tuple(sorted(blk.vars + T))).sl
                     for T in lat_subsets]
            self.star_parts.append((blk.sl, parts))
        self.onevar = [MarginalParamSpec((mi,), 0, [lt])
                       for mi, lt in zip(schema.m, spec.logit_types)]
        self.theta_obs = [None] * cm.H
        self.theta_lat = [None] * cm.H

    def _components(self, eta, h):
        """(pi, [g_i], aware joint) of one stratum from the joint eta."""
        eta_lat = eta[:self.n_lat_eta]
        pi, th = self.mp_lat.p_from_eta(eta_lat, init=self.theta_lat[h],
                                        return_theta=True)
        self.theta_lat[h] = th
        gs = []
        for i in range(self.v):
            lam = eta[self.g_sl[i]]
            g = _pmf_from_logits(self.m[i], self.cm.spec.logit_types[i], lam)
            if g is None:
                g = self.onevar[i].p_from_eta(lam)
            gs.append(g)
        eta_star = np.empty(self.mp_obs.n_eta)
        for sl, parts in self.star_parts:
            eta_star[sl] = sum(eta[part] for part in parts)
        try:
            pstar, th = self.mp_obs.p_from_eta(
                eta_star, init=self.theta_obs[h], return_theta=True)
        except ConvergenceError:
            if self.theta_obs[h] is None:
                raise
            pstar, th = self.mp_obs.p_from_eta(eta_star, return_theta=True)
        self.theta_obs[h] = th
        return pi, gs, pstar, eta_star

    def _config_ops(self, gs):
        """Per-configuration mixing operators M_u with q = sum pi_u M_u
        p*; each is a Kronecker product of g_i 1' (uncertain) or the
        identity (aware)."""
        v, m = self.v, self.m
        ops = []
        for u in itertools.product((0, 1), repeat=v):
            M = np.ones((1, 1))
            for i in range(v):
                B = np.eye(m[i]) if u[i] else \
                    np.outer(gs[i], np.ones(m[i]))
                M = np.kron(M, B)
            ops.append(M)
        return ops

    def stratum_q_grad(self, beta, h, want_grad=True):
        cm = self.cm
        eta = cm.eta(beta, h)
        pi, gs, pstar, eta_star = self._components(eta, h)
        ops = self._config_ops(gs)
        cols = np.column_stack([M @ pstar for M in ops])
        q = cols @ pi
        if not want_grad:
            return q, None
        v, m = self.v, self.m
        Xt = cm.X[h] * cm.link_jacobian_diag(beta)[None, :]
        # latent part: q depends on pi through the mixture columns
        dpi = _inverse_param_jac(self.mp_lat, pi, self.Z_lat,
                                 Xt[:self.n_lat_eta])
        J = cols @ dpi
        # uncertainty pmfs: replace g_i by each basis vector in turn
        configs = list(itertools.product((0, 1), repeat=v))
        for i in range(v):
            dq_dg = np.zeros((q.size, m[i]))
            for a in range(m[i]):
                basis = [np.eye(m[i])[a] if j == i else gs[j]
                         for j in range(v)]
                for k, u in enumerate(configs):
                    if u[i]:
                        continue
                    M = np.ones((1, 1))
                    for jv in range(v):
                        B = np.eye(m[jv]) if u[jv] else \
                            np.outer(basis[jv], np.ones(m[jv]))
                        M = np.kron(M, B)
                    dq_dg[:, a] += pi[k] * (M @ pstar)
            lt = cm.spec.logit_types[i]
            one = self.onevar[i]
            dg = _inverse_param_jac(one, gs[i], _dense(one.Z),
                                    Xt[self.g_sl[i]])
            J = J + dq_dg @ dg
        # aware joint: q is linear in p* with operator sum pi_u M_u
        A = sum(pi[k] * M for k, M in enumerate(ops))
        Xstar = np.empty((self.mp_obs.n_eta, cm.p))
        for sl, parts in self.star_parts:
            Xstar[sl] = sum(Xt[part] for part in parts)
        dpstar = _inverse_param_jac(self.mp_obs, pstar, self.Z_obs, Xstar)
        return q, J + A @ dpstar

    def q_all(self, beta: np.ndarray) -> np.ndarray:
        cm = self.cm
        q = np.empty((cm.H, cm.n_obs_cells))
        for h in range(cm.H):
            q[h], _ = self.stratum_q_grad(beta, h, want_grad=False)
        return q


def make_engine(cm: CompiledModel, fast: bool = True):
    return _FastEngine(cm) if (fast and cm.latent) else _Engine(cm)


def loglik(cm: CompiledModel, beta, counts, engine=None) -> float:
    engine = engine or make_engine(cm)
    counts = np.asarray(counts, dtype=float)
    q = engine.q_all(np.asarray(beta, dtype=float))
    return float(np.sum(counts * np.log(np.maximum(q, _PFLOOR))))


def score_fisher(cm: CompiledModel, beta, counts, engine=None,
                 want_fisher: bool = True):
    """Log-likelihood, score vector and (optionally) expected information
    in one pass over the strata."""
    engine = engine or make_engine(cm)
    beta = np.asarray(beta, dtype=float)
    counts = np.asarray(counts, dtype=float)
    ll = 0.0
    S = np.zeros(cm.p)
    F = np.zeros((cm.p, cm.p)) if want_fisher else None
    for h in range(cm.H):
        q, J = engine.stratum_q_grad(beta, h)
        qs = np.maximum(q, _PFLOOR)
        n_vec = counts[h]
        n_h = n_vec.sum()
        ll += float(n_vec @ np.log(qs))
        S += (n_vec / qs) @ J
        if want_fisher:
            F += n_h * (J.T @ (J / qs[:, None]))
    return ll, S, F


@dataclass
class FitResult:
    """Outcome of a model fit."""

    beta: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    grad_norm: float
    se: np.ndarray
    cov: np.ndarray
    param_names: list
    n_params: int
    n_obs: float
    fitted_q: np.ndarray          # H x observable cells
    strata: list
    rank: int
    identifiable: bool
    null_directions: np.ndarray   # columns span the unidentified space
    boundary: bool
    method: str
    n_starts: int
    message: str = ""
    elapsed: float = 0.0

    @property
    def aic(self) -> float:
        return 2 * self.n_params - 2 * self.loglik

    @property
    def bic(self) -> float:
        return self.n_params * np.log(self.n_obs) - 2 * self.loglik

    def z_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.beta / self.se

    def p_values(self) -> np.ndarray:
        return 2 * scipy.stats.norm.sf(np.abs(self.z_values()))

    def summary_rows(self):
        pv = self.p_values()
        z = self.z_values()
        return [
            {"name": n, "estimate": float(b), "se": float(s),
             "z": float(zz), "p_value": float(p)}
            for n, b, s, zz, p in zip(self.param_names, self.beta,
                                      self.se, z, pv)]

    def to_dict(self) -> dict:
        return {
            "loglik": self.loglik, "converged": self.converged,
            "n_iter": self.n_iter, "grad_norm": self.grad_norm,
            "n_params": self.n_params, "n_obs": self.n_obs,
            "aic": self.aic, "bic": self.bic,
            "rank": self.rank, "identifiable": self.identifiable,
            "boundary": self.boundary, "method": self.method,
            "n_starts": self.n_starts, "message": self.message,
            "elapsed": self.elapsed, "strata": list(self.strata),
            "parameters": self.summary_rows(),
            "beta": [float(b) for b in self.beta],
            "fitted_q": [[float(x) for x in row] for row in self.fitted_q],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def default_init(cm: CompiledModel, counts) -> np.ndarray:
    """Starting values from a least-squares match of the design against a
    crude target: unit logits for the latent prevalences, smoothed
    observed univariate-margin logits for the aware (or plain) item
    contrasts, zero elsewhere."""
    counts = np.asarray(counts, dtype=float)
    mp = cm.mp
    m = cm.spec.schema.m
    v = cm.spec.schema.v
    targets = np.zeros((cm.H, mp.n_eta))
    from .marparam import MarginalParamSpec
    from .tables import marginal_of
    for h in range(cm.H):
        obs = counts[h] + 0.5
        obs = obs / obs.sum()
        for i in range(v):
            gi = marginal_of(obs, m, [i])
            one = MarginalParamSpec((m[i],), 0, [cm.spec.logit_types[i]])
            logits = one.eta_from_p(gi)
            for blk in mp.blocks:
                if cm.latent and blk.vars == (i, v + i):
                    targets[h, blk.sl] = logits
                elif not cm.latent and blk.vars == (i,):
                    targets[h, blk.sl] = logits
        if cm.latent:
            for blk in mp.blocks:
                if len(blk.vars) == 1 and blk.vars[0] >= v:
                    targets[h, blk.sl] = 1.0
    A = cm.X.reshape(-1, cm.p)
    t = (targets - cm.offset).ravel()
    beta0, *_ = np.linalg.lstsq(A, t, rcond=None)
    beta0[cm.exp_link] = 0.0
    return beta0


def local_identifiability(cm: CompiledModel, beta, engine: _Engine = None,
                          rtol: float = 1e-8):
    """Rank of the stacked observable-probability Jacobian at beta; rank
    deficit means directions in parameter space the data cannot see."""
    engine = engine or make_engine(cm)
    beta = np.asarray(beta, dtype=float)
    Js = []
    for h in range(cm.H):
        _, J = engine.stratum_q_grad(beta, h)
        Js.append(J)
    D = np.vstack(Js)
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    rank = int(np.sum(s > rtol * s[0])) if s.size else 0
    null = Vt[rank:].T
    return rank, null


def fit(cm: CompiledModel, counts, init=None, method: str = "bfgs",
        n_starts: int = 5, jitter_sd: float = 0.3, seed: int = 0,
        tol: float = 1e-6, max_iter: int = 500, polish_iter: int = 60,
        boundary_abs: float = 8.0, verbose: bool = False,
        engine=None) -> FitResult:
    """Fit a compiled model to per-stratum observable counts.

    `counts` is an H x (observable cells) array aligned with the compiled
    stratum order (see CompiledModel.align_counts).  `method` is "bfgs"
    (quasi-Newton then Fisher polish) or "fisher" (scoring from the
    start).  Additional starts jitter the initial point.
    """
    t0 = time.time()
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (cm.H, cm.n_obs_cells):
        raise InputError(
            f"counts must be {cm.H} x {cm.n_obs_cells}, got {counts.shape}")
    n = counts.sum()
    beta0 = np.asarray(init, dtype=float) if init is not None \
        else default_init(cm, counts)
    if beta0.shape != (cm.p,):
        raise InputError(f"init must have length {cm.p}")
    rng = np.random.default_rng(seed)
    best = None
    for start in range(max(1, n_starts)):
        b0 = beta0 if start == 0 else beta0 + rng.normal(0, jitter_sd, cm.p)
        res = _fit_once(cm, counts, b0, method, tol, max_iter,
                        polish_iter, verbose, engine)
        if best is None or (res[1] > best[1] + 1e-9) \
                or (res[2] and not best[2] and res[1] > best[1] - 1e-9):
            best = res
        if best[2] and start >= 1:
            break  # converged twice-started optimum; stop burning time
    beta, ll, converged, n_iter, grad_norm, engine, message = best

    cov = np.full((cm.p, cm.p), np.nan)
    se = np.full(cm.p, np.nan)
    try:
        _, S, F = score_fisher(cm, beta, counts, engine)
        cov = np.linalg.inv(F)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        message = (message + "; " if message else "") + \
            "information matrix singular"
    except ConvergenceError:
        message = (message + "; " if message else "") + \
            "inversion failed at the optimum; no standard errors"
        converged = False
    try:
        rank, null = local_identifiability(cm, beta, engine)
    except ConvergenceError:
        rank, null = 0, np.zeros((cm.p, 0))
    q = engine.q_all(beta)
    assoc_ix = cm.groups.get("assoc", np.array([], dtype=int))
    boundary = bool(np.any(np.abs(beta[assoc_ix]) > boundary_abs))
    return FitResult(
        beta=beta, loglik=ll, converged=converged, n_iter=n_iter,
        grad_norm=grad_norm, se=se, cov=cov, param_names=cm.param_names,
        n_params=cm.p, n_obs=float(n), fitted_q=q,
        strata=list(cm.strata_labels), rank=rank,
        identifiable=rank == cm.p, null_directions=null,
        boundary=boundary, method=method, n_starts=max(1, n_starts),
        message=message, elapsed=time.time() - t0)


def _fit_once(cm, counts, b0, method, tol, max_iter, polish_iter,
              verbose, engine=None):
    engine = engine or make_engine(cm)
    n = counts.sum()
    message = ""

    def objective(beta):
        try:
            ll, S, _ = score_fisher(cm, beta, counts, engine,
                                    want_fisher=False)
        except (ConvergenceError, FloatingPointError):
            return 1e10, np.zeros(cm.p)
        if not np.isfinite(ll):
            return 1e10, np.zeros(cm.p)
        return -ll / n, -S / n

    beta = np.asarray(b0, dtype=float)
    n_iter = 0
    if method == "bfgs":
        opt = scipy.optimize.minimize(
            objective, beta, jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-9})
        beta = opt.x
        n_iter = int(opt.nit)
        message = str(opt.message)
    elif method != "fisher":
        raise InputError(f"unknown method {method!r}")

    # Fisher scoring: polish (or the whole fit when method == "fisher")
    ll, S, F = _safe_sf(cm, beta, counts, engine)
    converged = False
    scoring_iter = max_iter if method == "fisher" else polish_iter
    for it in range(scoring_iter):
        if np.max(np.abs(S)) < tol * max(n, 1.0):
            converged = True
            break
        try:
            step = np.linalg.solve(F + 1e-10 * np.eye(cm.p), S)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(F, S, rcond=None)
        big = np.max(np.abs(step))
        if big > 5.0:  # near-singular information: cap the move
            step = step * (5.0 / big)
        lam = 1.0
        for _ in range(30):
            cand = beta + lam * step
            try:
                ll_new, S_new, F_new = _safe_sf(cm, cand, counts, engine)
            except (ConvergenceError, FloatingPointError):
                lam *= 0.5
                continue
            if np.isfinite(ll_new) and ll_new >= ll - 1e-10:
                break
            lam *= 0.5
        else:
            break  # no uphill step found
        improved = ll_new - ll
        beta, ll, S, F = cand, ll_new, S_new, F_new
        n_iter += 1
        if verbose:
            print(f"  scoring iter {it}: ll={ll:.6f} |S|={np.max(np.abs(S)):.3g}")
        if improved < 1e-9 and np.max(np.abs(S)) < 1e-3 * max(n, 1.0):
            converged = True
            break
    else:
        message = (message + "; " if message else "") + "max iterations"
    grad_norm = float(np.max(np.abs(S)))
    if grad_norm < tol * max(n, 1.0):
        converged = True
    elif not converged and grad_norm < 1e-3 * max(n, 1.0):
        # line search could not move uphill and the mean per-observation
        # score is tiny: a stationary stall (e.g. a flat ridge), not a
        # failure
        converged = True
        message = (message + "; " if message else "") + \
            "stopped in a flat region"
    return beta, ll, converged, n_iter, grad_norm, engine, message


def _safe_sf(cm, beta, counts, engine):
    with np.errstate(over="raise", invalid="raise"):
        return score_fisher(cm, beta, counts, engine)


def lrt(restricted: FitResult, general: FitResult) -> dict:
    """Likelihood-ratio test of a restricted model against a more general
    one it is nested in."""
    df = general.n_params - restricted.n_params
    if df < 0:
        raise InputError("general model must have at least as many "
                         "parameters")
    stat = 2.0 * (general.loglik - restricted.loglik)
    stat = max(stat, 0.0)
    p = 1.0 if df == 0 else float(scipy.stats.chi2.sf(stat, df))
    return {"statistic": float(stat), "df": int(df), "p_value": p}


def joint_residuals(fitres: FitResult, counts) -> np.ndarray:
    """Standardized residuals of every observable cell in every stratum:
    (n - n_h q) / sqrt(n_h q (1 - q))."""
    counts = np.asarray(counts, dtype=float)
    n_h = counts.sum(axis=1, keepdims=True)
    q = fitres.fitted_q
    denom = np.sqrt(np.maximum(n_h * q * (1 - q), _PFLOOR))
    return (counts - n_h * q) / denom


def marginal_residuals(fitres: FitResult, counts, schema) -> dict:
    """Standardized residuals of the univariate margins per item and
    stratum, keyed by item index."""
    from .tables import marginal_of
    counts = np.asarray(counts, dtype=float)
    out = {}
    for i in range(schema.v):
        rows = []
        for h in range(counts.shape[0]):
            n_h = counts[h].sum()
            obs = marginal_of(counts[h], schema.m, [i])
            qe = marginal_of(fitres.fitted_q[h], schema.m, [i])
            denom = np.sqrt(np.maximum(n_h * qe * (1 - qe), _PFLOOR))
            rows.append((obs - n_h * qe) / denom)
        out[i] = np.array(rows)
    return out
