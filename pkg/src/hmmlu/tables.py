"""Index algebra for contingency tables over ordinal items and their
binary latent companions.

Cell linearization is lexicographic with the LAST listed variable varying
fastest.  In the joint layout the latent variables are appended after the
observable ones, so for a schema with items (m_1, ..., m_v) the joint
(R, U) table has m * 2^v cells ordered as
(r_1, ..., r_v, u_1, ..., u_v) with u_v fastest.  Observable categories
are 1-based (1..m_i); latent categories are coded 0/1 with 0 (uncertain)
as the baseline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class InputError(ValueError):
    """Raised on invalid user-supplied data (counts, categories, files)."""


@dataclass(frozen=True)
class ItemSchema:
    """The v ordinal items with category counts m_i and one binary latent
    companion per item."""

    m: tuple[int, ...]

    def __post_init__(self):
        if len(self.m) < 1:
            raise InputError("schema needs at least one item")
        if any(int(mi) < 2 for mi in self.m):
            raise InputError("every item needs at least 2 categories")
        object.__setattr__(self, "m", tuple(int(mi) for mi in self.m))

    @property
    def v(self) -> int:
        return len(self.m)

    @property
    def n_obs_cells(self) -> int:
        return int(np.prod(self.m))

    @property
    def joint_arities(self) -> tuple[int, ...]:
        return self.m + (2,) * self.v

    @property
    def n_joint_cells(self) -> int:
        return self.n_obs_cells * 2**self.v

    # -- cell indexing (observable table) ---------------------------------

    def cell_index(self, r) -> int:
        """Linear index of the 1-based category vector r."""
        r = tuple(int(x) for x in r)
        if len(r) != self.v:
            raise InputError(f"expected {self.v} categories, got {len(r)}")
        for x, mi in zip(r, self.m):
            if not 1 <= x <= mi:
                raise InputError(f"category {x} out of range 1..{mi}")
        return int(np.ravel_multi_index([x - 1 for x in r], self.m))

    def cell_vector(self, idx: int) -> tuple[int, ...]:
        """Inverse of cell_index: 1-based category vector of a linear index."""
        if not 0 <= idx < self.n_obs_cells:
            raise InputError(f"cell index {idx} out of range")
        return tuple(int(c) + 1 for c in np.unravel_index(idx, self.m))

    # -- cell indexing (joint (R, U) table) -------------------------------

    def joint_index(self, r, u) -> int:
        codes = [x - 1 for x in r] + [int(x) for x in u]
        return int(np.ravel_multi_index(codes, self.joint_arities))

    def joint_vector(self, idx: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        codes = np.unravel_index(idx, self.joint_arities)
        r = tuple(int(c) + 1 for c in codes[: self.v])
        u = tuple(int(c) for c in codes[self.v:])
        return r, u


def marginalization_matrix(schema: ItemSchema) -> sp.csr_matrix:
    """0/1 matrix L with q = L p, summing the joint (R, U) table over the
    latent variables.  Since latents are appended last (fastest), L is the
    Kronecker product of I_m with a row of ones."""
    m = schema.n_obs_cells
    return sp.kron(sp.identity(m, format="csr"),
                   np.ones((1, 2**schema.v)), format="csr")


def marginal_of(p: np.ndarray, arities, keep) -> np.ndarray:
    """Marginal of a joint pmf over the variables indexed by `keep`
    (0-based, in the table's variable order)."""
    arities = tuple(int(a) for a in arities)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(arities) for k in keep):
        raise InputError("subset index out of range")
    arr = np.asarray(p, dtype=float).reshape(arities)
    drop = tuple(i for i in range(len(arities)) if i not in keep)
    return arr.sum(axis=drop).ravel()


def subset_mask(indices, v: int) -> int:
    """Bitmask over 0..v-1 identifying a variable subset."""
    mask = 0
    for i in indices:
        if not 0 <= i < v:
            raise InputError("subset index out of range")
        mask |= 1 << i
    return mask


def mask_indices(mask: int, v: int) -> tuple[int, ...]:
    return tuple(i for i in range(v) if mask >> i & 1)


@dataclass
class CountTable:
    """Observed joint counts over the observable table, one row of length
    m per covariate stratum."""

    schema: ItemSchema
    strata: list[str]
    counts: np.ndarray  # H x m, nonnegative integers
    covariates: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2 or self.counts.shape != (
            len(self.strata), self.schema.n_obs_cells
        ):
            raise InputError("counts must be H x m with H = len(strata)")
        if np.any(self.counts < 0):
            raise InputError("negative count")
        if not self.covariates:
            self.covariates = [{} for _ in self.strata]

    @property
    def n_per_stratum(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def validate_counts(table: CountTable) -> dict:
    """Totals and a zero-cell flag.  Zero cells are reported, not rejected."""
    if table.n <= 0:
        raise InputError("empty table: total count is zero")
    return {
        "n": table.n,
        "n_h": table.n_per_stratum.tolist(),
        "H": len(table.strata),
        "cells": table.schema.n_obs_cells,
        "zero_cells": int(np.sum(table.counts == 0)),
    }


def read_counts_csv(path, v: int | None = None) -> CountTable:
    """Read a count table from CSV with header
    ``stratum,<cov1>,...,r1,...,rv,count``.

    Categories are 1-based integers, stratum labels strings.  Cells not
    listed default to zero.  Category counts m_i are inferred as the
    maximum category seen per item.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if not header or header[0] != "stratum" or header[-1] != "count":
            raise InputError(f"{path}: header must be stratum,...,r1..rv,count")
        r_cols = [i for i, h in enumerate(header) if h.startswith("r")
                  and h[1:].isdigit()]
        if not r_cols:
            raise InputError(f"{path}: no item columns r1..rv found")
        if v is not None and len(r_cols) != v:
            raise InputError(f"{path}: expected {v} item columns, got {len(r_cols)}")
        cov_cols = [i for i in range(1, len(header) - 1) if i not in r_cols]

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                cats = [int(row[i]) for i in r_cols]
                cnt = int(row[-1])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}")
            if cnt < 0:
                raise InputError(f"{path}:{lineno}: negative count")
            if any(c < 1 for c in cats):
                raise InputError(f"{path}:{lineno}: categories are 1-based")
            covs = {header[i]: row[i].strip() for i in cov_cols}
            rows.append((row[0].strip(), covs, cats, cnt, lineno))

    if not rows:
        raise InputError(f"{path}: no data rows")
    m = tuple(max(r[2][j] for r in rows) for j in range(len(r_cols)))
    schema = ItemSchema(m)

    strata: list[str] = []
    covariates: list[dict] = []
    blocks: dict[str, np.ndarray] = {}
    for label, covs, cats, cnt, lineno in rows:
        if label not in blocks:
            strata.append(label)
            covariates.append(covs)
            blocks[label] = np.zeros(schema.n_obs_cells, dtype=np.int64)
        blocks[label][schema.cell_index(cats)] += cnt
    counts = np.vstack([blocks[s] for s in strata])
    return CountTable(schema=schema, strata=strata, counts=counts,
                      covariates=covariates)


def write_counts_csv(table: CountTable, path) -> None:
    cov_names = sorted({k for c in table.covariates for k in c})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stratum"] + cov_names
                        + [f"r{i+1}" for i in range(table.schema.v)] + ["count"])
        for h, label in enumerate(table.strata):
            covs = table.covariates[h]
            for idx in range(table.schema.n_obs_cells):
                r = table.schema.cell_vector(idx)
                writer.writerow([label] + [covs.get(k, "") for k in cov_names]
                                + list(r) + [int(table.counts[h, idx])])
