"""Marginal parameterization of joint contingency tables.

The table probabilities p are mapped to a vector of hierarchically
ordered marginal interactions eta = C ln(M p): logits of single
variables and log-odds-ratio contrasts of higher order, each defined in
a designated margin.  For a joint layout of observable items followed by
binary latent companions, a block over variable set I is defined

* in the margin I itself when I contains latent variables only
  (interactions of the latent marginal distribution), and
* in the margin (I intersect R) union U otherwise, with latent variables
  outside I fixed at their baseline category 0.

The map is a diffeomorphism between eta and the parameters theta of the
saturated log-linear model p = exp(Z theta) / sum(exp(Z theta)); the
inverse is computed by a damped Newton iteration on theta.

Contrast orientation: logit j compares "higher" to "lower", e.g. the
local logit j is ln p(j+1) - ln p(j) and the global logit j is
ln(1 - F(j)) - ln F(j).  Multi-way interactions are the corresponding
difference-of-differences contrasts, with entries ordered lexicographically
(last variable fastest), like the cells.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp

from .tables import InputError


class ConvergenceError(RuntimeError):
    """Newton inversion failed; carries the last residual norm."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class LogitType(str, enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"
    CONTINUATION = "continuation"
    REVERSE_CONTINUATION = "reverse_continuation"
    BASELINE0 = "baseline0"  # binary latent logit, category 0 as reference


def _num_den(arity: int, logit: LogitType, j: int):
    """Numerator/denominator selection vectors of the j-th logit
    (j = 0..arity-2) over the categories of one variable."""
    e = np.eye(arity)
    lo = np.zeros(arity)
    lo[: j + 1] = 1.0
    hi = np.zeros(arity)
    hi[j + 1:] = 1.0
    if logit in (LogitType.LOCAL, LogitType.BASELINE0):
        return e[j + 1], e[j]
    if logit == LogitType.GLOBAL:
        return hi, lo
    if logit == LogitType.CONTINUATION:
        return e[j + 1], lo
    if logit == LogitType.REVERSE_CONTINUATION:
        return hi, e[j]
    raise InputError(f"unknown logit type {logit}")


@dataclass(frozen=True)
class InteractionBlock:
    """One eta block: the interactions over variable set `vars`, defined
    in marginal distribution `margin` (both 0-based joint indices)."""

    vars: tuple[int, ...]
    margin: tuple[int, ...]
    offset: int
    size: int

    @property
    def sl(self) -> slice:
        return slice(self.offset, self.offset + self.size)


class MarginalParamSpec:
    """Compiled contrast machinery for one joint variable layout.

    Parameters
    ----------
    arities : category counts per variable, observables first.
    n_latent : how many trailing variables are binary latents.
    logit_types : one LogitType per variable (latents use BASELINE0).
    """

    def __init__(self, arities, n_latent: int, logit_types):
        self.arities = tuple(int(a) for a in arities)
        self.n_vars = len(self.arities)
        self.n_latent = int(n_latent)
        self.n_obs = self.n_vars - self.n_latent
        if self.n_obs < 0 or (self.n_obs == 0 and self.n_latent == 0):
            raise InputError("need at least one variable")
        self.logit_types = tuple(LogitType(t) for t in logit_types)
        if len(self.logit_types) != self.n_vars:
            raise InputError("one logit type per variable")
        if any(self.arities[i] != 2 for i in self._latents()):
            raise InputError("latent variables must be binary")
        self.n_cells = int(np.prod(self.arities))
        self._build()

    def _latents(self):
        return range(self.n_obs, self.n_vars)

    # -- construction -----------------------------------------------------

    def _subsets(self, pool):
        pool = list(pool)
        for k in range(1, len(pool) + 1):
            for c in itertools.combinations(pool, k):
                yield c

    def _block_order(self):
        """Blocks grouped by margin, margins hierarchically ordered:
        latent margins first (by size), then (S union latents) for
        nonempty observable S by size of S."""
        out = []
        lat = list(self._latents())
        for latset in sorted(self._subsets(lat), key=lambda s: (len(s), s)):
            out.append((latset, latset))
        for obsset in sorted(self._subsets(range(self.n_obs)),
                             key=lambda s: (len(s), s)):
            margin = tuple(obsset) + tuple(lat)
            for latset in itertools.chain(
                [()], sorted(self._subsets(lat), key=lambda s: (len(s), s))
            ):
                out.append((tuple(obsset) + tuple(latset), margin))
        return out

    def _build(self):
        blocks = []
        m_rows = []      # selection vectors, rows of M
        c_entries = []   # (eta_index, row_index, sign)
        offset = 0
        ones = [np.ones(a) for a in self.arities]
        base = [None] * self.n_vars
        for i in self._latents():
            e0 = np.zeros(2)
            e0[0] = 1.0
            base[i] = e0

        for varset, margin in self._block_order():
            sizes = [self.arities[i] - 1 for i in varset]
            size = int(np.prod(sizes))
            blocks.append(InteractionBlock(vars=tuple(varset),
                                           margin=tuple(margin),
                                           offset=offset, size=size))
            # product() enumerates levels with the last variable fastest,
            # matching the cell ordering, so a running counter indexes eta
            for levels in itertools.product(*(range(s) for s in sizes)):
                eta_idx = offset
                for pattern in itertools.product((0, 1), repeat=len(varset)):
                    sign = (-1) ** (len(varset) - sum(pattern))
                    vecs = []
                    for i in range(self.n_vars):
                        if i in varset:
                            k = varset.index(i)
                            num, den = _num_den(self.arities[i],
                                                self.logit_types[i], levels[k])
                            vecs.append(num if pattern[k] else den)
                        elif i in margin:
                            vecs.append(base[i])
                        else:
                            vecs.append(ones[i])
                    w = reduce(np.kron, vecs)
                    c_entries.append((eta_idx, len(m_rows), sign))
                    m_rows.append(w)
                offset += 1

        self.blocks = blocks
        self.n_eta = offset
        if self.n_eta != self.n_cells - 1:
            raise AssertionError("eta dimension mismatch")
        self.Mmat = sp.csr_matrix(np.vstack(m_rows))
        rows, cols, vals = zip(*[(e, r, s) for e, r, s in c_entries])
        self.C = sp.csr_matrix(
            (np.array(vals, dtype=float), (rows, cols)),
            shape=(self.n_eta, self.Mmat.shape[0]))
        self.Z = self._build_design()
        # full design with intercept; inverse gives theta from ln p exactly
        self._A = np.column_stack([np.ones(self.n_cells), self.Z])
        self._Ainv = np.linalg.inv(self._A)

    def _build_design(self) -> np.ndarray:
        """Full-rank log-linear design Z with baseline (corner) coding:
        category 1 is the reference for observables, 0 for latents.
        Columns follow the same block order as eta."""
        cols = []
        for blk in self.blocks:
            sizes = [self.arities[i] - 1 for i in blk.vars]
            for levels in itertools.product(*(range(s) for s in sizes)):
                vecs = []
                for i in range(self.n_vars):
                    if i in blk.vars:
                        k = blk.vars.index(i)
                        e = np.zeros(self.arities[i])
                        e[levels[k] + 1] = 1.0
                        vecs.append(e)
                    else:
                        vecs.append(np.ones(self.arities[i]))
                cols.append(reduce(np.kron, vecs))
        return np.column_stack(cols)

    # -- block lookup -----------------------------------------------------

    def block(self, varset) -> InteractionBlock:
        key = tuple(sorted(int(i) for i in varset))
        for blk in self.blocks:
            if blk.vars == key:
                return blk
        raise KeyError(f"no block over variables {key}")

    # -- forward map ------------------------------------------------------

    def eta_from_p(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n_cells,):
            raise InputError("p has wrong length")
        t = self.Mmat @ p
        if np.any(t <= 0):
            raise InputError("zero marginal sum; p must be interior")
        return self.C @ np.log(t)

    def loglinear_p(self, theta: np.ndarray) -> np.ndarray:
        z = self.Z @ np.asarray(theta, dtype=float)
        z -= z.max()
        p = np.exp(z)
        return p / p.sum()

    def theta_from_p(self, p: np.ndarray) -> np.ndarray:
        coef = self._Ainv @ np.log(np.asarray(p, dtype=float))
        return coef[1:]

    def jacobian_eta_theta(self, p: np.ndarray) -> np.ndarray:
        """d eta / d theta' at the table p (the derivative depends on p
        only): C Diag^{-1}(M p) M Omega Z with Omega = Diag(p) - p p'.
        The centering term drops because the contrast rows of C sum to
        zero, leaving C [M (Z * p)] / (M p)."""
        t = self.Mmat @ p
        inner = self.Mmat @ (self.Z * p[:, None])
        return self.C @ (inner / t[:, None])

    def jacobian_R(self, p: np.ndarray) -> np.ndarray:
        """R = d theta / d eta', the inverse of the forward Jacobian."""
        return np.linalg.inv(self.jacobian_eta_theta(p))

    # -- inverse map ------------------------------------------------------

    def p_from_eta(self, eta_target: np.ndarray, init: np.ndarray | None = None,
                   tol: float = 1e-10, max_iter: int = 200,
                   return_theta: bool = False, _homotopy: bool = True):
        """Invert eta = C ln(M p) by Newton iteration on theta with
        step-halving on the residual sup-norm.  If a cold start stalls,
        walk eta from zero to the target in stages, warm-starting each."""
        eta_target = np.asarray(eta_target, dtype=float)
        if eta_target.shape != (self.n_eta,):
            raise InputError("eta has wrong length")
        if not np.all(np.isfinite(eta_target)):
            raise InputError("eta target must be finite")
        if _homotopy:
            try:
                return self.p_from_eta(eta_target, init=init, tol=tol,
                                       max_iter=max_iter,
                                       return_theta=return_theta,
                                       _homotopy=False)
            except ConvergenceError:
                theta = np.zeros(self.n_eta)
                for t in (0.25, 0.5, 0.75, 1.0):
                    _, theta = self.p_from_eta(
                        t * eta_target, init=theta, tol=max(tol, 1e-8),
                        max_iter=max_iter, return_theta=True,
                        _homotopy=False)
                return self.p_from_eta(eta_target, init=theta, tol=tol,
                                       max_iter=max_iter,
                                       return_theta=return_theta,
                                       _homotopy=False)
        theta = (np.zeros(self.n_eta) if init is None
                 else np.array(init, dtype=float))
        p = self.loglinear_p(theta)
        resid = self.eta_from_p(p) - eta_target
        norm = np.max(np.abs(resid))
        for _ in range(int(max_iter)):
            if norm <= tol:
                out = p
                return (out, theta) if return_theta else out
            J = self.jacobian_eta_theta(p)
            try:
                step = np.linalg.solve(J, resid)
            except np.linalg.LinAlgError:
                step, *_ = np.linalg.lstsq(J, resid, rcond=None)
            scale = 1.0
            for _ in range(30):
                theta_new = theta - scale * step
                p_new = self.loglinear_p(theta_new)
                if np.all(p_new > 0):
                    resid_new = self.eta_from_p(p_new) - eta_target
                    norm_new = np.max(np.abs(resid_new))
                    if np.isfinite(norm_new) and norm_new < norm:
                        theta, p, resid, norm = (theta_new, p_new,
                                                 resid_new, norm_new)
                        break
                scale *= 0.5
            else:
                raise ConvergenceError(
                    f"inversion stalled at residual {norm:.3e}", residual=norm)
        if norm <= tol:
            return (p, theta) if return_theta else p
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations "
            f"(residual {norm:.3e})", residual=norm)


def saturated_obs_spec(m, logit_types=None) -> MarginalParamSpec:
    """Marginal parameterization of an observable table alone (no latent
    variables): each block over S is defined in margin S."""
    m = tuple(int(x) for x in m)
    if logit_types is None:
        logit_types = [LogitType.LOCAL] * len(m)
    return MarginalParamSpec(m, n_latent=0, logit_types=logit_types)
