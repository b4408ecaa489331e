"""Exact, tail and head projections for bisparse and jointly low-rank structure.

The target sets are symmetric matrices supported on an s x s principal
submatrix ("bisparse"), possibly intersected with a rank bound.  The exact
projection enumerates supports and is exponential in s, so it is guarded by a
cap; the tail and head operators are the polynomial-time surrogates, each with
a known approximation constant relative to the exact optimum:

  exact_project        exact, enumeration (desk scale only)
  tail_bisparse        near-best bisparse restriction, factor sqrt(2)
  tail_joint           near-best joint projection, factor 1 + 2*sqrt(2)
  head_square          support head with constant 1, support grows to s^2
  head_rowcol          support head into 2s indices, constant sqrt(s/n)
  head_anchor          support head staying at s indices, constant 1/sqrt(s)
  head_psd_lowrank     head for PSD rank-r inputs into r*s indices, 1/sqrt(r)
  head_joint           rank-truncated head_anchor, constant sqrt(r)/s
  head_square_variant  rank-truncated head_square (used inside head-tail IHT)
  head_shrink          averaging shrink of a given support to s indices
  project_hierarchical best (s-column, t-per-column)-sparse approximation

All argmax/argmin ties break toward the lexicographically smallest index set,
which keeps every operator deterministic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .symcore import check_support, check_sym, project_rank, restrict

__all__ = [
    "ProjectionOutcome",
    "ShrinkOutcome",
    "EnumerationCapError",
    "ENUMERATION_CAP",
    "exact_project",
    "tail_bisparse",
    "tail_joint",
    "head_square",
    "head_rowcol",
    "head_anchor",
    "head_psd_lowrank",
    "head_joint",
    "head_square_variant",
    "head_shrink",
    "hierarchical_mask",
    "project_hierarchical",
]

# supports enumerated by exact_project before it refuses and suggests tail_joint
ENUMERATION_CAP = 2_000_000

# PSD check: min eigenvalue may dip this far below zero (times ||M||_F)
PSD_TOL = 1e-8
# eigenvalues below this fraction of the largest magnitude count as rank zero
RANK_TOL = 1e-10


class EnumerationCapError(ValueError):
    """Raised when exact support enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class ProjectionOutcome:
    """Result of a projection: the matrix, its support, and the kept norm.

    `objective` is the Frobenius norm of `matrix`; for every operator here the
    output is of the form P^[rank](M restricted to support), so maximizing the
    kept norm is the same as minimizing the residual.  `rank_used` is an upper
    bound on the rank of `matrix` (the truncation rank, or the support size
    when no truncation was applied).
    """

    matrix: np.ndarray
    support: np.ndarray
    rank_used: int
    objective: float


@dataclass(frozen=True)
class ShrinkOutcome(ProjectionOutcome):
    """head_shrink result; also records the row and column halves of the support."""

    rows: np.ndarray = None
    cols: np.ndarray = None


def _top_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values, ties broken toward the lower index."""
    order = np.argsort(-values, kind="stable")
    return np.sort(order[:k])


def _check_sparsity(s: int, n: int) -> None:
    if not 1 <= s <= n:
        raise ValueError(f"sparsity must satisfy 1 <= s <= {n}, got {s}")


def _check_rank(r: int, n: int) -> None:
    if not 1 <= r <= n:
        raise ValueError(f"rank bound must satisfy 1 <= r <= {n}, got {r}")


def _outcome(mat: np.ndarray, support: np.ndarray, rank_used: int) -> ProjectionOutcome:
    return ProjectionOutcome(mat, support, rank_used, float(np.linalg.norm(mat)))


def rank_project_on_support(mat: np.ndarray, support: np.ndarray, rank: int) -> np.ndarray:
    """project_rank followed by re-restriction to the support.

    The eigensolver can leave O(1e-17) dirt outside the block of an exactly
    restricted matrix; zeroing it keeps outputs exactly structured.
    """
    return restrict(project_rank(mat, rank), support)


def exact_project(mat, s: int, r: int, cap: int = ENUMERATION_CAP) -> ProjectionOutcome:
    """Exact projection onto rank <= r matrices supported on some s x s block.

    Enumerates every size-s support, keeps the one whose rank-r restriction
    has the largest Frobenius norm, and returns that restriction.  Refuses
    when the number of supports exceeds `cap`.
    """
    m = check_sym(mat)
    n = m.shape[0]
    _check_sparsity(s, n)
    if not 1 <= r <= s:
        raise ValueError(f"rank bound must satisfy 1 <= r <= s={s}, got {r}")
    n_supports = math.comb(n, s)
    if n_supports > cap:
        raise EnumerationCapError(
            f"exact projection needs {n_supports} support candidates (cap {cap}); "
            "use tail_joint for a polynomial-time near-best projection"
        )
    best_obj = -1.0
    best_support = None
    for cand in itertools.combinations(range(n), s):
        block = m[np.ix_(cand, cand)]
        vals = np.linalg.eigvalsh(block)
        kept = np.sort(vals * vals)[::-1][:r]
        obj = float(np.sum(kept))
        if obj > best_obj:
            best_obj = obj
            best_support = cand
    support = np.array(best_support, dtype=int)
    out = rank_project_on_support(restrict(m, support), support, r)
    return _outcome(out, support, r)


def tail_bisparse(mat, s: int) -> ProjectionOutcome:
    """Restriction to the s columns of largest l2 norm.

    The residual is within a factor sqrt(2) of the best possible over all
    size-s supports.
    """
    m = check_sym(mat)
    _check_sparsity(s, m.shape[0])
    col_norms = np.linalg.norm(m, axis=0)
    support = _top_indices(col_norms, s)
    out = restrict(m, support)
    return _outcome(out, support, support.size)


def tail_joint(mat, s: int, r: int) -> ProjectionOutcome:
    """Near-best joint projection: bisparse tail followed by rank truncation.

    Composing the sqrt(2)-tail with the exact rank projection gives a tail
    operator for the joint structure with constant 1 + 2*sqrt(2).
    """
    m = check_sym(mat)
    _check_rank(r, m.shape[0])
    base = tail_bisparse(m, s)
    out = rank_project_on_support(base.matrix, base.support, r)
    return _outcome(out, base.support, r)


def head_square(mat, s: int) -> ProjectionOutcome:
    """Support head with constant 1, output supported on at most s^2 indices.

    For each row i, pick the s-1 largest off-diagonal magnitudes as partners
    and score the row by the l2 norm of those entries plus the diagonal; keep
    the s best rows together with their partners.  The restriction to the
    resulting index set carries at least as much energy as any s x s block.
    """
    m = check_sym(mat)
    n = m.shape[0]
    _check_sparsity(s, n)
    absm = np.abs(m)
    scores = np.empty(n)
    partners = []
    all_idx = np.arange(n)
    for i in range(n):
        others = np.delete(all_idx, i)
        order = others[np.argsort(-absm[i, others], kind="stable")]
        chosen = order[: s - 1]
        partners.append(chosen)
        scores[i] = absm[i, i] ** 2 + float(np.sum(absm[i, chosen] ** 2))
    anchor_rows = _top_indices(scores, s)
    members = set(anchor_rows.tolist())
    for i in anchor_rows:
        members.update(partners[i].tolist())
    support = np.array(sorted(members), dtype=int)
    out = restrict(m, support)
    return _outcome(out, support, support.size)


def head_rowcol(mat, s: int) -> ProjectionOutcome:
    """Support head from the s heaviest rows and then the s heaviest columns.

    The union has at most 2s indices and retains at least an s/n fraction of
    the energy of the best s x s block.
    """
    m = check_sym(mat)
    _check_sparsity(s, m.shape[0])
    row_norms = np.linalg.norm(m, axis=1)
    rows = _top_indices(row_norms, s)
    col_energy = np.linalg.norm(m[rows, :], axis=0)
    cols = _top_indices(col_energy, s)
    support = np.union1d(rows, cols)
    out = restrict(m, support)
    return _outcome(out, support, support.size)


def head_anchor(mat, s: int) -> ProjectionOutcome:
    """Support head staying at s indices, constant 1/sqrt(s).

    For each anchor column j, pair j with the s-1 rows of largest magnitude in
    that column; keep the anchor whose column segment has the largest norm.
    """
    m = check_sym(mat)
    n = m.shape[0]
    _check_sparsity(s, n)
    absm = np.abs(m)
    all_idx = np.arange(n)
    best_val = -1.0
    best_support = None
    for j in range(n):
        others = np.delete(all_idx, j)
        order = others[np.argsort(-absm[others, j], kind="stable")]
        chosen = order[: s - 1]
        val = absm[j, j] ** 2 + float(np.sum(absm[chosen, j] ** 2))
        if val > best_val:
            best_val = val
            best_support = np.append(chosen, j)
    support = np.sort(best_support)
    out = restrict(m, support)
    return _outcome(out, support, support.size)


def head_psd_lowrank(mat, s: int, rank_override: int | None = None) -> ProjectionOutcome:
    """Head for positive semidefinite low-rank inputs, constant 1/sqrt(rank).

    Factors M into a sum of rank-one terms via its eigendecomposition, keeps
    the s largest-magnitude entries of each factor, and restricts M to the
    union (at most rank * s indices).  Significantly indefinite inputs are
    rejected; the rank is inferred from the spectrum unless overridden.
    """
    m = check_sym(mat)
    n = m.shape[0]
    _check_sparsity(s, n)
    fro = float(np.linalg.norm(m))
    vals, vecs = np.linalg.eigh(m)
    if vals.size and float(vals.min()) < -PSD_TOL * fro:
        raise ValueError(
            f"matrix is significantly indefinite (min eigenvalue {vals.min():.3e}); "
            "this head applies to positive semidefinite inputs"
        )
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    if rank_override is not None:
        if rank_override < 0:
            raise ValueError("rank override must be nonnegative")
        r = min(rank_override, n)
    else:
        top = abs(vals[0]) if vals.size else 0.0
        r = int(np.sum(vals > RANK_TOL * top)) if top > 0 else 0
    members = set()
    for k in range(r):
        factor = np.abs(vecs[:, k])
        members.update(_top_indices(factor, s).tolist())
    support = np.array(sorted(members), dtype=int)
    out = restrict(m, support)
    return _outcome(out, support, support.size)


def head_joint(mat, s: int, r: int) -> ProjectionOutcome:
    """Head for the joint structure: rank-truncated head_anchor, constant sqrt(r)/s."""
    if r > s:
        raise ValueError(f"rank bound must not exceed sparsity, got r={r} > s={s}")
    m = check_sym(mat)
    _check_rank(r, m.shape[0])
    base = head_anchor(m, s)
    out = rank_project_on_support(base.matrix, base.support, r)
    return _outcome(out, base.support, r)


def head_square_variant(mat, s: int, r: int) -> ProjectionOutcome:
    """Rank-truncated head_square: the head operator used inside head-tail IHT.

    Maps into matrices of rank <= r supported on at most s^2 indices; keeps at
    least an r/s^2 fraction (in squared norm) of the best rank-r s x s block.
    """
    m = check_sym(mat)
    _check_rank(r, m.shape[0])
    base = head_square(m, s)
    out = rank_project_on_support(base.matrix, base.support, r)
    return _outcome(out, base.support, r)


def head_shrink(mat, sprime, s: int) -> ShrinkOutcome:
    """Shrink a given support to s indices by row/column averaging.

    Keeps the s/2 rows of the given support with the largest norms inside it,
    then the s/2 columns with the largest norms across those rows.  With
    C = |support|/s, the kept rows-by-columns block retains at least a
    1/(4 C^2) fraction of the squared energy of the original block.
    """
    m = check_sym(mat)
    n = m.shape[0]
    sp = check_support(sprime, n)
    if s % 2 != 0:
        raise ValueError(f"sparsity must be even, got {s}")
    if s < 2:
        raise ValueError(f"sparsity must be at least 2, got {s}")
    if sp.size < s:
        raise ValueError(f"given support has {sp.size} indices, need at least s={s}")
    half = s // 2
    row_scores = np.linalg.norm(m[np.ix_(sp, sp)], axis=1)
    rows = sp[_top_indices(row_scores, half)]
    col_scores = np.linalg.norm(m[np.ix_(rows, sp)], axis=0)
    cols = sp[_top_indices(col_scores, half)]
    support = np.union1d(rows, cols)
    out = restrict(m, support)
    return ShrinkOutcome(
        out, support, support.size, float(np.linalg.norm(out)), rows=rows, cols=cols
    )


def hierarchical_mask(mat, s: int, t: int) -> np.ndarray:
    """Boolean mask of the best (s-column, t-per-column)-sparse support.

    Works on arbitrary rectangular matrices: keep the t largest magnitudes in
    each column, score columns by the kept energy, keep the s best columns.
    """
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    n_rows, n_cols = m.shape
    if not 1 <= t <= n_rows:
        raise ValueError(f"per-column sparsity must satisfy 1 <= t <= {n_rows}, got {t}")
    if not 1 <= s <= n_cols:
        raise ValueError(f"column sparsity must satisfy 1 <= s <= {n_cols}, got {s}")
    mask = np.zeros(m.shape, dtype=bool)
    scores = np.empty(n_cols)
    kept_rows = []
    for j in range(n_cols):
        order = np.argsort(-np.abs(m[:, j]), kind="stable")[:t]
        kept_rows.append(order)
        scores[j] = float(np.sum(m[order, j] ** 2))
    for j in _top_indices(scores, s):
        mask[kept_rows[j], j] = True
    return mask


def project_hierarchical(mat, s: int, t: int) -> np.ndarray:
    """Best Frobenius approximation with s nonzero columns of t entries each."""
    m = np.asarray(mat, dtype=float)
    mask = hierarchical_mask(m, s, t)
    return np.where(mask, m, 0.0)
