"""Symmetric-matrix primitives.

All matrices are dense float64 numpy arrays.  A "symmetric matrix" here is an
n-by-n array that equals its transpose; `sym_enforce` produces one exactly,
every other entry point asserts symmetry up to a small tolerance.  A "support"
is a strictly increasing array of 0-based indices; restricting a matrix to a
support S zeroes every entry outside S x S.

Everything in this module is pure and treats its inputs as immutable, so the
functions are safe to call concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EigenDecomp",
    "sym_enforce",
    "check_sym",
    "check_support",
    "restrict",
    "eigen",
    "project_rank",
    "frob_inner",
    "read_matrix",
    "write_matrix",
]

# asymmetry allowed on inputs that claim to be symmetric (relative to max entry)
SYM_ATOL = 1e-12
# asymmetry above which the text reader warns before symmetrizing
READ_WARN_ATOL = 1e-9


def sym_enforce(mat) -> np.ndarray:
    """Return the symmetric part (M + M^T)/2 of a square matrix."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.size == 0:
        raise ValueError("matrix must be nonempty")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return (m + m.T) / 2.0


def check_sym(mat, atol: float = SYM_ATOL) -> np.ndarray:
    """Validate that `mat` is square, finite and symmetric; return it as float64."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.size == 0:
        raise ValueError("matrix must be nonempty")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    scale = max(1.0, float(np.max(np.abs(m))))
    asym = float(np.max(np.abs(m - m.T)))
    if asym > atol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    return m


def check_support(indices, n: int) -> np.ndarray:
    """Validate a support set for an n-dim matrix: unique indices in [0, n).

    Accepts any 1-D integer collection and returns it sorted ascending.
    """
    s = np.asarray(indices, dtype=int)
    if s.ndim != 1:
        raise ValueError("support must be one-dimensional")
    if s.size:
        if s.min() < 0 or s.max() >= n:
            raise ValueError(f"support index out of range [0, {n})")
        s = np.sort(s)
        if np.any(np.diff(s) == 0):
            raise ValueError("support contains duplicate indices")
    return s


def restrict(mat, support) -> np.ndarray:
    """Zero every entry of a symmetric matrix outside support x support."""
    m = check_sym(mat)
    s = check_support(support, m.shape[0])
    out = np.zeros_like(m)
    if s.size:
        ix = np.ix_(s, s)
        out[ix] = m[ix]
    return out


@dataclass(frozen=True)
class EigenDecomp:
    """Eigendecomposition with eigenvalues sorted by descending magnitude.

    `eigenvalues[k]` pairs with orthonormal column `eigenvectors[:, k]`; the
    sign of each eigenvector is fixed so its first nonzero component is
    positive, which makes the decomposition deterministic for a given input.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eigen(mat) -> EigenDecomp:
    """Symmetric eigendecomposition ordered by |eigenvalue|, deterministic signs.

    Ties in magnitude keep the eigenvalue with the lower position in the
    ascending-value factorization first, so repeated calls on the same input
    are bit-identical.  Raises numpy.linalg.LinAlgError if the underlying
    solver fails to converge.
    """
    m = check_sym(mat)
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(-np.abs(vals), kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        nz = np.nonzero(col)[0]
        if nz.size and col[nz[0]] < 0:
            vecs[:, k] = -col
    return EigenDecomp(vals, vecs)


def _leading_sign(m: np.ndarray) -> float:
    flat = m.ravel()
    nz = np.nonzero(flat)[0]
    if nz.size == 0:
        return 0.0
    return 1.0 if flat[nz[0]] > 0 else -1.0


def project_rank(mat, rank: int) -> np.ndarray:
    """Best Frobenius approximation of a symmetric matrix by rank <= `rank`.

    Keeps the `rank` eigenpairs of largest magnitude.  The result is exactly
    symmetric and supported inside the bisupport of the input.
    """
    m = check_sym(mat)
    if rank < 0:
        raise ValueError("rank bound must be nonnegative")
    n = m.shape[0]
    r = min(rank, n)
    if r == 0:
        return np.zeros_like(m)
    # evaluate on a sign-canonical input so project_rank(-M) == -project_rank(M)
    # bitwise; the solvers rely on the iteration map being exactly odd.  The
    # + 0.0 turns -0.0 entries into +0.0: LAPACK's reflector signs see the
    # sign bit of zeros, which would break the bitwise symmetry
    sign = _leading_sign(m)
    if sign == 0.0:
        return np.zeros_like(m)
    dec = eigen((m if sign > 0 else -m) + 0.0)
    vals = dec.eigenvalues[:r]
    vecs = dec.eigenvectors[:, :r]
    out = (vecs * vals) @ vecs.T
    out = (out + out.T) / 2.0
    return out if sign > 0 else -out


def frob_inner(a, b) -> float:
    """Frobenius inner product sum_ij A_ij * B_ij."""
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.sum(x * y))


def read_matrix(lines) -> np.ndarray:
    """Read the matrix text format: a line with n, then n rows of n numbers.

    The matrix is symmetrized on the way in; if the raw asymmetry exceeds
    1e-9 a warning is emitted.  Errors name the offending 1-based line number.
    """
    it = iter(lines)

    def next_line(lineno):
        try:
            return next(it)
        except StopIteration:
            raise ValueError(f"line {lineno}: unexpected end of matrix input") from None

    header = next_line(1).split()
    if len(header) != 1:
        raise ValueError(f"line 1: expected a single dimension, got {len(header)} tokens")
    try:
        n = int(header[0])
    except ValueError:
        raise ValueError(f"line 1: dimension is not an integer: {header[0]!r}") from None
    if n < 1:
        raise ValueError(f"line 1: dimension must be positive, got {n}")
    rows = np.empty((n, n))
    for i in range(n):
        lineno = i + 2
        parts = next_line(lineno).split()
        if len(parts) != n:
            raise ValueError(f"line {lineno}: expected {n} values, got {len(parts)}")
        try:
            rows[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not np.all(np.isfinite(rows)):
        raise ValueError("matrix entries must be finite")
    asym = float(np.max(np.abs(rows - rows.T)))
    if asym > READ_WARN_ATOL:
        warnings.warn(f"input matrix asymmetry {asym:.3e} exceeds {READ_WARN_ATOL}; symmetrizing")
    return sym_enforce(rows)


def write_matrix(mat, stream) -> None:
    """Write a matrix in the text format read by `read_matrix`."""
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    stream.write(f"{m.shape[0]}\n")
    for row in m:
        stream.write(" ".join(format(v, ".17g") for v in row) + "\n")
