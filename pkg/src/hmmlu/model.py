"""Model assembly: hypothesis flags to per-stratum linear designs.

A model is a linear (in the parameters) structure eta_h = X_h s(beta) + o_h
on the marginal interactions of the joint (R, U) table, where s applies an
exp link to any shape parameter constrained positive and o_h collects fixed
offsets.  The zero-constraint structure leaves free exactly

* the interactions of the latent marginal distribution,
* the logits of the per-item uncertainty pmfs (tied to one shape
  parameter each through known logit constants, or fixed),
* the aware-vs-uncertain logit contrasts of each item with its own
  latent companion, and
* one association block per item pair, equal to the pairwise log odds
  ratios of the aware joint distribution.

Every other interaction row is structurally zero: blocks mixing an item
with a foreign latent, cross-item blocks without both companions, and all
three-and-higher-way response blocks (unless explicitly relaxed).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import shapes
from .marparam import LogitType, MarginalParamSpec, saturated_obs_spec
from .shapes import UncertaintyKind
from .tables import CountTable, InputError, ItemSchema, marginal_of, \
    marginalization_matrix


class LatentAssoc(str, enum.Enum):
    UNRESTRICTED = "unrestricted"
    INDEPENDENCE = "independence"


class CovEffect(str, enum.Enum):
    UNRESTRICTED = "unrestricted"
    ADDITIVE_PARALLEL = "additive_parallel"
    NONE = "none"


class RespAssoc(str, enum.Enum):
    UNRESTRICTED = "unrestricted"
    HOMOGENEOUS = "homogeneous"
    UNIFORM = "uniform"
    INDEPENDENCE = "independence"


@dataclass(frozen=True)
class Factor:
    name: str
    levels: tuple[str, ...]


@dataclass
class ModelSpec:
    """A model hypothesis: schema, covariate factors and the association /
    covariate-effect structures for the latent and aware components."""

    schema: ItemSchema
    item_names: tuple[str, ...] = ()
    logit_types: tuple[LogitType, ...] = ()
    factors: tuple[Factor, ...] = ()
    latent_assoc: LatentAssoc = LatentAssoc.UNRESTRICTED
    latent_cov: CovEffect = CovEffect.UNRESTRICTED
    resp_assoc: RespAssoc = RespAssoc.UNRESTRICTED
    resp_cov: CovEffect = CovEffect.UNRESTRICTED
    uncertainty: tuple[UncertaintyKind, ...] = ()
    phi_fixed: tuple[float | None, ...] = ()
    fixed_pmfs: tuple[np.ndarray | None, ...] = ()
    per_stratum_phi: bool = False
    relax_threeway: bool = False

    def __post_init__(self):
        v = self.schema.v
        if not self.item_names:
            self.item_names = tuple(f"item{i+1}" for i in range(v))
        if not self.logit_types:
            self.logit_types = (LogitType.LOCAL,) * v
        else:
            self.logit_types = tuple(LogitType(t) for t in self.logit_types)
        if not self.uncertainty:
            self.uncertainty = (UncertaintyKind.UNIFORM,) * v
        elif isinstance(self.uncertainty, (str, UncertaintyKind)):
            self.uncertainty = (UncertaintyKind(self.uncertainty),) * v
        else:
            self.uncertainty = tuple(UncertaintyKind(k)
                                     for k in self.uncertainty)
        if not self.phi_fixed:
            self.phi_fixed = (None,) * v
        if not self.fixed_pmfs:
            self.fixed_pmfs = (None,) * v
        self.factors = tuple(Factor(f.name, tuple(f.levels))
                             for f in self.factors)
        for i, kind in enumerate(self.uncertainty):
            lt = self.logit_types[i]
            if kind in (UncertaintyKind.LOCAL_RESHAPED_PARABOLIC,
                        UncertaintyKind.LOCAL_RESHAPED_TRIANGULAR) \
                    and lt != LogitType.LOCAL:
                raise InputError(
                    f"item {self.item_names[i]}: local reshaped uncertainty "
                    "requires local logits")
            if kind == UncertaintyKind.GLOBAL_RESHAPED_PARABOLIC \
                    and lt != LogitType.GLOBAL:
                raise InputError(
                    f"item {self.item_names[i]}: global reshaped uncertainty "
                    "requires global logits")

    @property
    def strata(self) -> list[tuple[int, ...]]:
        """Covariate level combinations, first factor varying slowest."""
        if not self.factors:
            return [()]
        return list(itertools.product(*(range(len(f.levels))
                                        for f in self.factors)))

    def stratum_label(self, levels: tuple[int, ...]) -> str:
        if not self.factors:
            return "all"
        return "-".join(f.levels[l] for f, l in zip(self.factors, levels))

    @property
    def H(self) -> int:
        return len(self.strata)


@dataclass
class CompiledModel:
    """Per-stratum designs plus the shared contrast machinery."""

    spec: ModelSpec
    mp: MarginalParamSpec
    X: np.ndarray            # H x n_eta x p
    offset: np.ndarray       # H x n_eta
    exp_link: np.ndarray     # bool per parameter
    param_names: list[str]
    groups: dict             # group name -> parameter index array
    strata_labels: list[str]
    L: "object" = None       # marginalization matrix (sparse), or identity
    W: np.ndarray = None     # saturated observable log-linear design
    Hmat: np.ndarray = None  # contrasts with Hmat @ W = I_{m-1}
    latent: bool = True

    @property
    def p(self) -> int:
        return self.X.shape[2]

    @property
    def H(self) -> int:
        return self.X.shape[0]

    @property
    def n_obs_cells(self) -> int:
        return self.W.shape[0]

    def link(self, beta: np.ndarray) -> np.ndarray:
        s = np.array(beta, dtype=float)
        s[self.exp_link] = np.exp(s[self.exp_link])
        return s

    def link_jacobian_diag(self, beta: np.ndarray) -> np.ndarray:
        d = np.ones_like(np.asarray(beta, dtype=float))
        d[self.exp_link] = np.exp(np.asarray(beta)[self.exp_link])
        return d

    def eta(self, beta: np.ndarray, h: int) -> np.ndarray:
        return self.X[h] @ self.link(beta) + self.offset[h]

    def joint_p(self, beta, h: int, init=None, tol=1e-10,
                return_theta=False):
        """Joint (R, U) probabilities of stratum h at beta."""
        return self.mp.p_from_eta(self.eta(beta, h), init=init, tol=tol,
                                  return_theta=return_theta)

    def observable_q(self, beta, h: int, init=None) -> np.ndarray:
        p = self.joint_p(beta, h, init=init)
        return np.asarray(self.L @ p).ravel() if self.latent else p

    def align_counts(self, table: CountTable) -> np.ndarray:
        """Reorder the table's rows to the compiled stratum order."""
        if table.schema.m != self.spec.schema.m:
            raise InputError("count table schema does not match model")
        if len(table.strata) != len(self.strata_labels):
            raise InputError(
                f"model expects {len(self.strata_labels)} strata, data has "
                f"{len(table.strata)}")
        if table.strata == self.strata_labels:
            return table.counts
        try:
            order = [table.strata.index(s) for s in self.strata_labels]
        except ValueError as exc:
            raise InputError(f"stratum labels do not match model: {exc}")
        return table.counts[order]


def _obs_design(m, logit_types=None):
    obs = saturated_obs_spec(m, logit_types)
    A = np.column_stack([np.ones(obs.n_cells), obs.Z])
    Hmat = np.linalg.inv(A)[1:, :]
    return obs.Z, Hmat


class _Columns:
    """Registry assigning parameter indices grouped in a fixed order."""

    GROUP_ORDER = ("latent", "phi", "aware", "assoc", "threeway", "logit")

    def __init__(self):
        self.keys: dict = {}
        self.names: dict = {}
        self.group_of: dict = {}

    def col(self, group: str, key, name: str) -> tuple:
        full = (group, key)
        if full not in self.keys:
            self.keys[full] = None
            self.names[full] = name
            self.group_of[full] = group
        return full

    def finalize(self):
        ordered = sorted(
            self.keys, key=lambda k: (self.GROUP_ORDER.index(self.group_of[k]),
                                      list(self.keys).index(k)))
        for idx, k in enumerate(ordered):
            self.keys[k] = idx
        names = [self.names[k] for k in ordered]
        groups = {}
        for k in ordered:
            groups.setdefault(self.group_of[k], []).append(self.keys[k])
        return names, {g: np.array(ix) for g, ix in groups.items()}


def _factor_terms(spec: ModelSpec, levels: tuple[int, ...]):
    """(factor, level) pairs active in a stratum under corner coding."""
    return [(f, l) for f, l in zip(spec.factors, levels) if l > 0]


def _uncertainty_offsets(spec: ModelSpec, i: int):
    """Fixed logit offset for item i, or None when its logits carry a
    free shape parameter."""
    kind = spec.uncertainty[i]
    m = spec.schema.m[i]
    if kind == UncertaintyKind.UNIFORM:
        return np.zeros(m - 1)
    if kind == UncertaintyKind.FIXED:
        pmf = spec.fixed_pmfs[i]
        if pmf is None:
            raise InputError(f"item {spec.item_names[i]}: fixed uncertainty "
                             "kind needs a pmf")
        one = MarginalParamSpec((m,), 0, [spec.logit_types[i]])
        return one.eta_from_p(np.asarray(pmf, dtype=float))
    if spec.phi_fixed[i] is not None:
        return spec.phi_fixed[i] * shapes.logit_constants(m, kind)
    return None


def compile_model(spec: ModelSpec) -> CompiledModel:
    """Build the per-stratum designs X_h realizing the hypothesis flags."""
    schema = spec.schema
    v = schema.v
    lat0 = v  # joint index of the first latent variable
    mp = MarginalParamSpec(
        schema.joint_arities, n_latent=v,
        logit_types=list(spec.logit_types) + [LogitType.BASELINE0] * v)
    strata = spec.strata
    H = len(strata)
    cols = _Columns()
    items = spec.item_names
    # rows[h] maps eta row -> list of (column key, coefficient)
    rows = [dict() for _ in range(H)]
    offset = np.zeros((H, mp.n_eta))
    exp_cols = set()

    def add(h, r, key, coeff=1.0):
        rows[h].setdefault(r, []).append((key, coeff))

    for blk in mp.blocks:
        obs_set = tuple(i for i in blk.vars if i < v)
        lat_set = tuple(i - lat0 for i in blk.vars if i >= lat0)
        sizes = [mp.arities[i] - 1 for i in blk.vars]
        entries = list(itertools.product(*(range(s) for s in sizes)))

        if not obs_set:
            # latent-marginal interactions
            if len(lat_set) > 1 and spec.latent_assoc == LatentAssoc.INDEPENDENCE:
                continue
            uname = "".join(f"U{i+1}" for i in lat_set)
            for h, lev in enumerate(strata):
                r = blk.offset
                if len(lat_set) == 1:
                    i = lat_set[0]
                    if spec.latent_cov == CovEffect.UNRESTRICTED and spec.factors:
                        add(h, r, cols.col("latent", ("s", i, lev),
                                           f"latent[{uname}]@{spec.stratum_label(lev)}"))
                    elif spec.latent_cov == CovEffect.ADDITIVE_PARALLEL:
                        add(h, r, cols.col("latent", ("s", i),
                                           f"latent[{uname}]"))
                        for f, l in _factor_terms(spec, lev):
                            add(h, r, cols.col("latent", ("s", i, f.name, l),
                                               f"latent[{uname}]:{f.name}={f.levels[l]}"))
                    else:
                        add(h, r, cols.col("latent", ("s", i),
                                           f"latent[{uname}]"))
                else:
                    if spec.latent_cov == CovEffect.UNRESTRICTED and spec.factors:
                        add(h, r, cols.col("latent", ("a", lat_set, lev),
                                           f"latent[{uname}]@{spec.stratum_label(lev)}"))
                    else:
                        add(h, r, cols.col("latent", ("a", lat_set),
                                           f"latent[{uname}]"))
            continue

        if len(obs_set) == 1:
            i = obs_set[0]
            if lat_set == ():
                # logits of the uncertainty pmf g_i
                off = _uncertainty_offsets(spec, i)
                if off is not None:
                    for h in range(H):
                        offset[h, blk.sl] = off
                else:
                    kind = spec.uncertainty[i]
                    l_vec = shapes.logit_constants(schema.m[i], kind)
                    is_exp = kind == UncertaintyKind.GLOBAL_RESHAPED_PARABOLIC
                    for h, lev in enumerate(strata):
                        if spec.per_stratum_phi and spec.factors:
                            key = cols.col("phi", (i, lev),
                                           f"phi[{items[i]}]@{spec.stratum_label(lev)}")
                        else:
                            key = cols.col("phi", (i,), f"phi[{items[i]}]")
                        if is_exp:
                            exp_cols.add(key)
                        for j, e in enumerate(entries):
                            add(h, blk.offset + j, key, l_vec[e[0]])
                continue
            if lat_set == (i,):
                # aware-vs-uncertain contrast of item i
                for h, lev in enumerate(strata):
                    for j, e in enumerate(entries):
                        r = blk.offset + j
                        jj = e[0] + 1
                        if spec.resp_cov == CovEffect.UNRESTRICTED and spec.factors:
                            add(h, r, cols.col(
                                "aware", (i, jj, lev),
                                f"aware[{items[i]}:{jj}]@{spec.stratum_label(lev)}"))
                        elif spec.resp_cov == CovEffect.ADDITIVE_PARALLEL:
                            add(h, r, cols.col("aware", (i, jj),
                                               f"aware[{items[i]}:{jj}]"))
                            for f, l in _factor_terms(spec, lev):
                                add(h, r, cols.col(
                                    "aware", (i, f.name, l),
                                    f"aware[{items[i]}]:{f.name}={f.levels[l]}"))
                        else:
                            add(h, r, cols.col("aware", (i, jj),
                                               f"aware[{items[i]}:{jj}]"))
                continue
            continue  # item with a foreign latent: structurally zero

        if len(obs_set) == 2 and lat_set == obs_set:
            # pairwise association of the aware responses
            i, j = obs_set
            pname = f"{items[i]},{items[j]}"
            if spec.resp_assoc == RespAssoc.INDEPENDENCE:
                continue
            for h, lev in enumerate(strata):
                for k, e in enumerate(entries):
                    r = blk.offset + k
                    a, b = e[0] + 1, e[1] + 1
                    if spec.resp_assoc == RespAssoc.UNIFORM:
                        if spec.factors:
                            add(h, r, cols.col(
                                "assoc", ("u", (i, j), lev),
                                f"assoc[{pname}]@{spec.stratum_label(lev)}"))
                        else:
                            add(h, r, cols.col("assoc", ("u", (i, j)),
                                               f"assoc[{pname}]"))
                    elif spec.resp_assoc == RespAssoc.UNRESTRICTED and spec.factors:
                        add(h, r, cols.col(
                            "assoc", ((i, j), a, b, lev),
                            f"assoc[{pname}]({a},{b})@{spec.stratum_label(lev)}"))
                    else:
                        add(h, r, cols.col("assoc", ((i, j), a, b),
                                           f"assoc[{pname}]({a},{b})"))
            continue

        if (spec.relax_threeway and len(obs_set) == 3
                and lat_set == obs_set):
            tname = ",".join(items[i] for i in obs_set)
            for h in range(H):
                for k, e in enumerate(entries):
                    lv = ",".join(str(x + 1) for x in e)
                    add(h, blk.offset + k,
                        cols.col("threeway", (obs_set, e),
                                 f"threeway[{tname}]({lv})"))
            continue
        # everything else is constrained to zero

    names, groups = cols.finalize()
    p = len(names)
    X = np.zeros((H, mp.n_eta, p))
    key_index = cols.keys
    for h in range(H):
        for r, terms in rows[h].items():
            for key, coeff in terms:
                X[h, r, key_index[key]] += coeff
    exp_link = np.zeros(p, dtype=bool)
    for key in exp_cols:
        exp_link[key_index[key]] = True

    W, Hmat = _obs_design(schema.m, spec.logit_types)
    return CompiledModel(
        spec=spec, mp=mp, X=X, offset=offset, exp_link=exp_link,
        param_names=names, groups=groups,
        strata_labels=[spec.stratum_label(s) for s in strata],
        L=marginalization_matrix(schema), W=W, Hmat=Hmat, latent=True)


def compile_marginal(spec: ModelSpec) -> CompiledModel:
    """The comparator that ignores latent uncertainty: a marginal model on
    the observable table with item logits and pairwise associations under
    the same hypothesis flags."""
    schema = spec.schema
    mp = saturated_obs_spec(schema.m, spec.logit_types)
    strata = spec.strata
    H = len(strata)
    cols = _Columns()
    items = spec.item_names
    rows = [dict() for _ in range(H)]

    def add(h, r, key, coeff=1.0):
        rows[h].setdefault(r, []).append((key, coeff))

    for blk in mp.blocks:
        sizes = [mp.arities[i] - 1 for i in blk.vars]
        entries = list(itertools.product(*(range(s) for s in sizes)))
        if len(blk.vars) == 1:
            i = blk.vars[0]
            for h, lev in enumerate(strata):
                for j, e in enumerate(entries):
                    r = blk.offset + j
                    jj = e[0] + 1
                    if spec.resp_cov == CovEffect.UNRESTRICTED and spec.factors:
                        add(h, r, cols.col(
                            "logit", (i, jj, lev),
                            f"logit[{items[i]}:{jj}]@{spec.stratum_label(lev)}"))
                    elif spec.resp_cov == CovEffect.ADDITIVE_PARALLEL:
                        add(h, r, cols.col("logit", (i, jj),
                                           f"logit[{items[i]}:{jj}]"))
                        for f, l in _factor_terms(spec, lev):
                            add(h, r, cols.col(
                                "logit", (i, f.name, l),
                                f"logit[{items[i]}]:{f.name}={f.levels[l]}"))
                    else:
                        add(h, r, cols.col("logit", (i, jj),
                                           f"logit[{items[i]}:{jj}]"))
        elif len(blk.vars) == 2 and spec.resp_assoc != RespAssoc.INDEPENDENCE:
            i, j = blk.vars
            pname = f"{items[i]},{items[j]}"
            for h, lev in enumerate(strata):
                for k, e in enumerate(entries):
                    r = blk.offset + k
                    a, b = e[0] + 1, e[1] + 1
                    if spec.resp_assoc == RespAssoc.UNIFORM:
                        if spec.factors:
                            add(h, r, cols.col(
                                "assoc", ("u", (i, j), lev),
                                f"assoc[{pname}]@{spec.stratum_label(lev)}"))
                        else:
                            add(h, r, cols.col("assoc", ("u", (i, j)),
                                               f"assoc[{pname}]"))
                    elif spec.resp_assoc == RespAssoc.UNRESTRICTED and spec.factors:
                        add(h, r, cols.col(
                            "assoc", ((i, j), a, b, lev),
                            f"assoc[{pname}]({a},{b})@{spec.stratum_label(lev)}"))
                    else:
                        add(h, r, cols.col("assoc", ((i, j), a, b),
                                           f"assoc[{pname}]({a},{b})"))
        # three-and-higher-way blocks stay zero

    names, groups = cols.finalize()
    p = len(names)
    X = np.zeros((H, mp.n_eta, p))
    for h in range(H):
        for r, terms in rows[h].items():
            for key, coeff in terms:
                X[h, r, cols.keys[key]] += coeff
    W, Hmat = _obs_design(schema.m, spec.logit_types)
    import scipy.sparse as sp
    return CompiledModel(
        spec=spec, mp=mp, X=X, offset=np.zeros((H, mp.n_eta)),
        exp_link=np.zeros(p, dtype=bool), param_names=names, groups=groups,
        strata_labels=[spec.stratum_label(s) for s in strata],
        L=sp.identity(mp.n_cells, format="csr"), W=W, Hmat=Hmat, latent=False)


def count_parameters(spec: ModelSpec) -> int:
    return compile_model(spec).p


def necessary_identifiability(schema: ItemSchema) -> dict:
    """Single-stratum parameter-count bound: latent interactions + shape
    parameters + aware contrasts + pairwise associations must not exceed
    the free observable frequencies."""
    v, m = schema.v, schema.m
    lhs = (2**v - 1) + v + sum(mi - 1 for mi in m) \
        + sum((m[i] - 1) * (m[j] - 1)
              for i in range(v) for j in range(i + 1, v))
    rhs = schema.n_obs_cells - 1
    return {"params": lhs, "free_frequencies": rhs, "satisfied": lhs <= rhs}


# -- mixture composition and its diagnostics ------------------------------

def mixture_oracle(pi: np.ndarray, gs, aware_joint: np.ndarray,
                   m) -> np.ndarray:
    """Observable pmf of the latent mixture composed directly from its
    ingredients: for every uncertainty configuration u, the component is
    the product of the uncertainty pmfs g_i over the uncertain items and
    the matching marginal of the aware joint over the rest.

    `pi` is indexed over configurations with the last latent fastest;
    `gs` are per-item pmf vectors; `aware_joint` is the pmf over the
    observable table given no uncertainty.
    """
    m = tuple(int(x) for x in m)
    v = len(m)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (2**v,):
        raise InputError("pi has wrong length")
    aware_joint = np.asarray(aware_joint, dtype=float)
    if aware_joint.shape != (int(np.prod(m)),):
        raise InputError("aware joint has wrong length")
    q = np.zeros(m)
    for idx, u in enumerate(itertools.product((0, 1), repeat=v)):
        if pi[idx] == 0:
            continue
        aware_items = [i for i in range(v) if u[i] == 1]
        comp = np.ones(m)
        for i in range(v):
            if u[i] == 0:
                shape = [1] * v
                shape[i] = m[i]
                comp = comp * np.asarray(gs[i], dtype=float).reshape(shape)
        if aware_items:
            marg = marginal_of(aware_joint, m, aware_items)
            shape = [m[i] if i in aware_items else 1 for i in range(v)]
            comp = comp * marg.reshape(shape)
        q += pi[idx] * comp
    return q.ravel()


def decompose_joint(p_joint: np.ndarray, schema: ItemSchema):
    """Split a joint (R, U) pmf into (pi, per-item uncertainty pmfs,
    aware joint p(r | u*))."""
    v, m = schema.v, schema.m
    arr = np.asarray(p_joint, dtype=float).reshape(schema.joint_arities)
    pi = marginal_of(p_joint, schema.joint_arities, range(v, 2 * v))
    gs = []
    for i in range(v):
        two = marginal_of(p_joint, schema.joint_arities, [i, v + i])
        two = two.reshape(m[i], 2)[:, 0]
        gs.append(two / two.sum())
    aware = arr[(slice(None),) * v + (1,) * v].ravel()
    return pi, gs, aware / aware.sum()


def theorem1_check(p_joint: np.ndarray, schema: ItemSchema) -> float:
    """Sup-norm gap between every conditional p(r | u) and its factorized
    reconstruction from the uncertainty pmfs and the aware joint."""
    v = schema.v
    pi, gs, aware = decompose_joint(p_joint, schema)
    arr = np.asarray(p_joint, dtype=float).reshape(schema.joint_arities)
    worst = 0.0
    for idx, u in enumerate(itertools.product((0, 1), repeat=v)):
        if pi[idx] <= 1e-300:
            continue
        cond = arr[(slice(None),) * v + u].ravel() / pi[idx]
        point = np.zeros(2**v)
        point[idx] = 1.0
        recon = mixture_oracle(point, gs, aware, schema.m)
        worst = max(worst, float(np.max(np.abs(cond - recon))))
    return worst


# -- configuration files --------------------------------------------------

_TOP_KEYS = {"version", "items", "factors", "latent_association",
             "latent_covariates", "response_association",
             "response_covariates", "uncertainty", "relax_threeway"}
_ITEM_KEYS = {"name", "categories", "logit"}
_FACTOR_KEYS = {"name", "levels"}
_UNC_KEYS = {"kind", "phi_fixed", "per_stratum_phi", "pmf"}


def _strict(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise InputError(f"{where}: unknown keys {sorted(unknown)}")


def model_spec_from_dict(cfg: dict) -> ModelSpec:
    if not isinstance(cfg, dict):
        raise InputError("model config must be a mapping")
    _strict(cfg, _TOP_KEYS, "model config")
    if cfg.get("version") != 1:
        raise InputError("model config must declare version: 1")
    items = cfg.get("items")
    if not items:
        raise InputError("model config needs an items list")
    for it in items:
        _strict(it, _ITEM_KEYS, f"item {it.get('name', '?')}")
    schema = ItemSchema(tuple(int(it["categories"]) for it in items))
    names = tuple(str(it.get("name", f"item{k+1}"))
                  for k, it in enumerate(items))
    logits = tuple(LogitType(it.get("logit", "local")) for it in items)
    factors = []
    for f in cfg.get("factors") or []:
        _strict(f, _FACTOR_KEYS, f"factor {f.get('name', '?')}")
        factors.append(Factor(str(f["name"]), tuple(str(l) for l in f["levels"])))
    unc = cfg.get("uncertainty") or {}
    _strict(unc, _UNC_KEYS, "uncertainty")
    kind = unc.get("kind", "uniform")
    kinds = tuple(UncertaintyKind(k) for k in kind) \
        if isinstance(kind, list) else (UncertaintyKind(kind),) * schema.v
    phi_fixed = unc.get("phi_fixed")
    if phi_fixed is None:
        phi_fixed = (None,) * schema.v
    else:
        phi_fixed = tuple(None if x is None else float(x) for x in phi_fixed)
        if len(phi_fixed) != schema.v:
            raise InputError("phi_fixed needs one entry per item")
    pmf = unc.get("pmf")
    fixed_pmfs = (None,) * schema.v if pmf is None \
        else tuple(None if x is None else np.asarray(x, float) for x in pmf)
    return ModelSpec(
        schema=schema, item_names=names, logit_types=logits,
        factors=tuple(factors),
        latent_assoc=LatentAssoc(cfg.get("latent_association", "unrestricted")),
        latent_cov=CovEffect(cfg.get("latent_covariates", "unrestricted")),
        resp_assoc=RespAssoc(cfg.get("response_association", "unrestricted")),
        resp_cov=CovEffect(cfg.get("response_covariates", "unrestricted")),
        uncertainty=kinds, phi_fixed=phi_fixed, fixed_pmfs=fixed_pmfs,
        per_stratum_phi=bool(unc.get("per_stratum_phi", False)),
        relax_threeway=bool(cfg.get("relax_threeway", False)))


def load_model_spec(path) -> ModelSpec:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    return model_spec_from_dict(cfg)
