"""Uncertainty distributions for ordinal responses.

The base shape is the discrete Parabolic pmf
p(r) = 6 (m + 1 - r) r / ((m + 2)(m + 1) m).  Reshaped families raise its
local or global odds to a power phi: the Local Reshaped family is Uniform
at phi = 0, bell-shaped for phi > 0 and U-shaped for phi < 0; the Global
Reshaped family is defined for phi >= 0 only and degenerates to the two
extreme categories at phi = 0.  A Triangular base gives an analogous
local-odds family.  All of them are symmetric with mean (m + 1) / 2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tables import InputError


class UncertaintyKind(str, enum.Enum):
    UNIFORM = "uniform"
    LOCAL_RESHAPED_PARABOLIC = "local_reshaped_parabolic"
    GLOBAL_RESHAPED_PARABOLIC = "global_reshaped_parabolic"
    LOCAL_RESHAPED_TRIANGULAR = "local_reshaped_triangular"
    FIXED = "fixed"


def _check_m(m: int) -> int:
    m = int(m)
    if m < 2:
        raise InputError("need at least 2 categories")
    return m


def parabolic_pmf(m: int) -> np.ndarray:
    m = _check_m(m)
    r = np.arange(1, m + 1, dtype=float)
    return 6.0 * (m + 1 - r) * r / ((m + 2) * (m + 1) * m)


def parabolic_cdf(m: int) -> np.ndarray:
    m = _check_m(m)
    r = np.arange(1, m + 1, dtype=float)
    return r * (r + 1) * (3 * (m + 1) - 2 * r - 1) / ((m + 2) * (m + 1) * m)


def triangular_pmf(m: int) -> np.ndarray:
    """Symmetric triangular pmf; normalized so it sums to one for even m
    as well (the raw tent weights only normalize exactly for odd m)."""
    m = _check_m(m)
    r = np.arange(1, m + 1, dtype=float)
    c = (m + 1) / 2.0
    w = np.where(r < c, r / c, (m - r + 1) / (m - c + 1)) * 2.0 / (m + 1)
    return w / w.sum()


def _local_logits(probs: np.ndarray) -> np.ndarray:
    return np.log(probs[1:]) - np.log(probs[:-1])


def _global_logits_from_cdf(cdf: np.ndarray) -> np.ndarray:
    f = cdf[:-1]
    return np.log1p(-f) - np.log(f)


def logit_constants(m: int, kind: UncertaintyKind) -> np.ndarray:
    """Known constant vector l of length m-1 such that the logits of the
    reshaped pmf equal phi * l."""
    kind = UncertaintyKind(kind)
    if kind == UncertaintyKind.LOCAL_RESHAPED_PARABOLIC:
        return _local_logits(parabolic_pmf(m))
    if kind == UncertaintyKind.GLOBAL_RESHAPED_PARABOLIC:
        return _global_logits_from_cdf(parabolic_cdf(m))
    if kind == UncertaintyKind.LOCAL_RESHAPED_TRIANGULAR:
        return _local_logits(triangular_pmf(m))
    raise InputError(f"no logit constants for kind {kind.value}")


def pmf_from_local_logits(logits: np.ndarray) -> np.ndarray:
    """Reconstruct a pmf from its local logits, computed in log space so
    large |logits| do not overflow."""
    logp = np.concatenate([[0.0], np.cumsum(np.asarray(logits, dtype=float))])
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def local_reshaped_pmf(m: int, phi: float) -> "ShapedPmf":
    m = _check_m(m)
    if not np.isfinite(phi):
        raise InputError("phi must be finite")
    probs = pmf_from_local_logits(phi * logit_constants(
        m, UncertaintyKind.LOCAL_RESHAPED_PARABOLIC))
    return ShapedPmf(m=m, kind=UncertaintyKind.LOCAL_RESHAPED_PARABOLIC,
                     phi=float(phi), probs=probs)


def local_reshaped_triangular_pmf(m: int, phi: float) -> "ShapedPmf":
    m = _check_m(m)
    if not np.isfinite(phi):
        raise InputError("phi must be finite")
    probs = pmf_from_local_logits(phi * logit_constants(
        m, UncertaintyKind.LOCAL_RESHAPED_TRIANGULAR))
    return ShapedPmf(m=m, kind=UncertaintyKind.LOCAL_RESHAPED_TRIANGULAR,
                     phi=float(phi), probs=probs)


def global_reshaped_pmf(m: int, phi: float) -> "ShapedPmf":
    """Reshape through the global odds: the output cdf G satisfies
    (1 - G) / G = ((1 - F) / F)^phi at every split.  Defined for
    phi >= 0 only; phi = 0 puts mass 1/2 on each extreme category."""
    m = _check_m(m)
    if not np.isfinite(phi) or phi < 0:
        raise InputError("global reshaped pmf requires phi >= 0")
    f = parabolic_cdf(m)[:-1]
    # G = F^phi / (F^phi + (1-F)^phi), stable in log space
    a = phi * np.log(f)
    b = phi * np.log1p(-f)
    g = 1.0 / (1.0 + np.exp(b - a))
    cdf = np.concatenate([g, [1.0]])
    probs = np.diff(np.concatenate([[0.0], cdf]))
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    return ShapedPmf(m=m, kind=UncertaintyKind.GLOBAL_RESHAPED_PARABOLIC,
                     phi=float(phi), probs=probs)


def uniform_pmf(m: int) -> "ShapedPmf":
    m = _check_m(m)
    return ShapedPmf(m=m, kind=UncertaintyKind.UNIFORM, phi=None,
                     probs=np.full(m, 1.0 / m))


def shaped_pmf(m: int, kind, phi: float | None = None,
               probs=None) -> "ShapedPmf":
    """Factory dispatching on kind."""
    kind = UncertaintyKind(kind)
    if kind == UncertaintyKind.UNIFORM:
        return uniform_pmf(m)
    if kind == UncertaintyKind.FIXED:
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (m,) or np.any(probs <= 0):
            raise InputError("fixed pmf needs m strictly positive entries")
        return ShapedPmf(m=m, kind=kind, phi=None, probs=probs / probs.sum())
    if phi is None:
        raise InputError(f"kind {kind.value} requires a shape parameter")
    if kind == UncertaintyKind.LOCAL_RESHAPED_PARABOLIC:
        return local_reshaped_pmf(m, phi)
    if kind == UncertaintyKind.GLOBAL_RESHAPED_PARABOLIC:
        return global_reshaped_pmf(m, phi)
    if kind == UncertaintyKind.LOCAL_RESHAPED_TRIANGULAR:
        return local_reshaped_triangular_pmf(m, phi)
    raise InputError(f"unknown kind {kind}")


@dataclass(frozen=True)
class ShapedPmf:
    m: int
    kind: UncertaintyKind
    phi: float | None
    probs: np.ndarray

    def __post_init__(self):
        s = float(np.sum(self.probs))
        if abs(s - 1.0) > 1e-12 or np.any(np.asarray(self.probs) < 0):
            raise InputError("pmf entries must be nonnegative and sum to 1")

    @property
    def mean(self) -> float:
        r = np.arange(1, self.m + 1)
        return float(np.dot(r, self.probs))

    @property
    def variance(self) -> float:
        r = np.arange(1, self.m + 1)
        return float(np.dot((r - self.mean) ** 2, self.probs))
