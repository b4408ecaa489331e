"""Measurement ensembles, adjoints, and Monte-Carlo restricted-isometry probes.

Three linear measurement families on symmetric n x n matrices are supported:

  dense-gaussian   y_i = <X, A_i>        A_i symmetric, entries N(0, 1/m)
  rank-one         y_i = <X a_i, a_i>    a_i with N(0, 1/m) entries (or N(0,1)
                                         with scale="unit")
  factorized       y_i = <X, B^T A_i B>  B (p x n) and A_i (p x p) standard
                                         Gaussian; A_i may be rank-one a_i a_i^T

A map stores its payload arrays but is reproducible from (kind, n, m, p, seed,
inner, scale) alone, which is what the text serialization records.  Payloads
can also be injected directly for test hooks.

The RIP estimators probe the structured set with random unit-Frobenius
members; the reported constants are empirical lower bounds on the true
extremal constants, never certificates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .symcore import check_sym, frob_inner, project_rank

__all__ = [
    "KINDS",
    "MeasurementMap",
    "RipEstimate",
    "CrossTermReport",
    "sample_map",
    "isometry_map",
    "factorized_inner_map",
    "sample_structured",
    "estimate_rip",
    "cross_term_ratio",
    "check_rip_cross_term",
    "write_map_header",
    "read_map_header",
    "write_measurement_file",
    "read_measurement_file",
]

KINDS = ("dense-gaussian", "rank-one", "factorized")
INNER_KINDS = ("dense", "rank-one")
SCALES = ("inv_m", "unit")


@dataclass(frozen=True)
class MeasurementMap:
    """A tagged linear map from symmetric n x n matrices to R^m.

    Exactly one payload layout per kind: `matrices` (m, n, n) for
    dense-gaussian; `vectors` (m, n) for rank-one; `basis` (p, n) plus either
    `matrices` (m, p, p) or `vectors` (m, p) for factorized.  `seed` is the
    sampling seed when the payload came from `sample_map`, else None.
    """

    kind: str
    n: int
    m: int
    seed: int | None = None
    p: int | None = None
    inner: str = "dense"
    scale: str = "inv_m"
    matrices: np.ndarray | None = field(default=None, repr=False)
    vectors: np.ndarray | None = field(default=None, repr=False)
    basis: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        if self.m < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        if self.kind == "dense-gaussian":
            if self.matrices is None or self.matrices.shape != (self.m, self.n, self.n):
                raise ValueError("dense-gaussian payload must be m symmetric n x n matrices")
        elif self.kind == "rank-one":
            if self.vectors is None or self.vectors.shape != (self.m, self.n):
                raise ValueError("rank-one payload must be m vectors of length n")
        else:
            if self.p is None or self.p < 1:
                raise ValueError("factorized maps need a positive inner dimension p")
            if self.basis is None or self.basis.shape != (self.p, self.n):
                raise ValueError("factorized payload must include a p x n basis matrix")
            if self.inner == "dense":
                if self.matrices is None or self.matrices.shape != (self.m, self.p, self.p):
                    raise ValueError("factorized dense payload must be m p x p matrices")
            elif self.inner == "rank-one":
                if self.vectors is None or self.vectors.shape != (self.m, self.p):
                    raise ValueError("factorized rank-one payload must be m vectors of length p")
            else:
                raise ValueError(f"unknown inner kind {self.inner!r}")

    def apply(self, mat) -> np.ndarray:
        """Measure a symmetric n x n matrix; linear in the input."""
        x = check_sym(mat)
        if x.shape[0] != self.n:
            raise ValueError(f"matrix dimension {x.shape[0]} != map dimension {self.n}")
        if self.kind == "dense-gaussian":
            return np.einsum("kij,ij->k", self.matrices, x)
        if self.kind == "rank-one":
            return np.einsum("ki,ij,kj->k", self.vectors, x, self.vectors)
        inner = self.basis @ x @ self.basis.T
        if self.inner == "dense":
            return np.einsum("kij,ij->k", self.matrices, inner)
        return np.einsum("ki,ij,kj->k", self.vectors, inner, self.vectors)

    def adjoint(self, u) -> np.ndarray:
        """Adjoint sum_i u_i A_i; always lands on a symmetric matrix."""
        w = np.asarray(u, dtype=float)
        if w.shape != (self.m,):
            raise ValueError(f"expected {self.m} coefficients, got shape {w.shape}")
        if self.kind == "dense-gaussian":
            out = np.einsum("k,kij->ij", w, self.matrices)
        elif self.kind == "rank-one":
            out = self.vectors.T @ (w[:, None] * self.vectors)
        else:
            if self.inner == "dense":
                mid = np.einsum("k,kij->ij", w, self.matrices)
            else:
                mid = self.vectors.T @ (w[:, None] * self.vectors)
            out = self.basis.T @ mid @ self.basis
        return (out + out.T) / 2.0


def sample_map(
    kind: str,
    n: int,
    m: int,
    p: int | None = None,
    seed: int = 0,
    inner: str = "dense",
    scale: str = "inv_m",
) -> MeasurementMap:
    """Sample a measurement map; deterministic given the arguments.

    dense-gaussian matrices have i.i.d. N(0, 1/m) entries and are then
    symmetrized (which halves the off-diagonal variance); rank-one vectors
    have N(0, 1/m) entries, or N(0, 1) with scale="unit"; factorized draws the
    basis and the inner matrices/vectors with standard N(0, 1) entries.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown measurement kind {kind!r}")
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    rng = np.random.default_rng(seed)
    if kind == "dense-gaussian":
        mats = rng.standard_normal((m, n, n)) / np.sqrt(m)
        mats = (mats + mats.transpose(0, 2, 1)) / 2.0
        return MeasurementMap(kind, n, m, seed=seed, matrices=mats)
    if kind == "rank-one":
        vecs = rng.standard_normal((m, n))
        if scale == "inv_m":
            vecs = vecs / np.sqrt(m)
        return MeasurementMap(kind, n, m, seed=seed, scale=scale, vectors=vecs)
    if p is None:
        raise ValueError("factorized maps need the inner dimension p")
    basis = rng.standard_normal((p, n))
    if inner == "dense":
        mats = rng.standard_normal((m, p, p))
        mats = (mats + mats.transpose(0, 2, 1)) / 2.0
        return MeasurementMap(kind, n, m, seed=seed, p=p, inner=inner, matrices=mats, basis=basis)
    if inner == "rank-one":
        vecs = rng.standard_normal((m, p))
        return MeasurementMap(kind, n, m, seed=seed, p=p, inner=inner, vectors=vecs, basis=basis)
    raise ValueError(f"unknown inner kind {inner!r}")


def isometry_map(n: int) -> MeasurementMap:
    """Test hook: an orthonormal basis of symmetric matrices, so the map is an isometry.

    Uses m = n(n+1)/2 measurements; apply followed by adjoint is the identity
    on symmetric matrices.
    """
    m = n * (n + 1) // 2
    mats = np.zeros((m, n, n))
    k = 0
    for i in range(n):
        mats[k, i, i] = 1.0
        k += 1
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            mats[k, i, j] = inv_sqrt2
            mats[k, j, i] = inv_sqrt2
            k += 1
    return MeasurementMap("dense-gaussian", n, m, matrices=mats)


def factorized_inner_map(mp: MeasurementMap, normalize: bool = True) -> MeasurementMap:
    """The p x p stage-one map of a factorized map (measuring Y = B X B^T).

    With normalize=True the dense inner matrices are rescaled by 1/sqrt(m) so
    the map follows the N(0, 1/m) convention expected by plain gradient steps;
    apply the same rescaling to the measurements.  Rank-one inner payloads are
    returned as sampled (the modified solver absorbs the scale in its step).
    """
    if mp.kind != "factorized":
        raise ValueError("inner map is only defined for factorized maps")
    if mp.inner == "dense":
        mats = mp.matrices / np.sqrt(mp.m) if normalize else mp.matrices
        return MeasurementMap("dense-gaussian", mp.p, mp.m, matrices=mats)
    return MeasurementMap("rank-one", mp.p, mp.m, scale="unit", vectors=mp.vectors)


def sample_structured(n: int, s: int, r: int, rng: np.random.Generator):
    """Random unit-Frobenius symmetric matrix of rank <= r on a random s x s block.

    The support is uniform over size-s subsets; the block is a symmetrized
    Gaussian projected to rank r, so the spectrum is signed.  Returns the
    matrix and its support.
    """
    if not 1 <= s <= n:
        raise ValueError(f"sparsity must satisfy 1 <= s <= {n}")
    if not 1 <= r <= s:
        raise ValueError(f"rank must satisfy 1 <= r <= s={s}")
    while True:
        support = np.sort(rng.choice(n, size=s, replace=False))
        g = rng.standard_normal((s, s))
        block = project_rank((g + g.T) / 2.0, r)
        nrm = float(np.linalg.norm(block))
        if nrm > 0.0:
            break
    out = np.zeros((n, n))
    out[np.ix_(support, support)] = block / nrm
    return out, support


@dataclass(frozen=True)
class RipEstimate:
    """Empirical restricted-isometry statistics from random structured probes.

    delta_lower is the largest observed |  ||A(Z)||_2^2 - ||Z||_F^2 | over
    unit-norm probes; alpha_hat and beta_hat are the smallest and largest
    observed ||A(Z)||_1 / ||Z||_F.  Probing can only under-cover the
    structured set, so delta_lower and beta_hat under-estimate the true sup
    constants and alpha_hat over-estimates the true inf constant; none is a
    certificate.
    """

    delta_lower: float
    alpha_hat: float
    beta_hat: float
    trials: int
    s: int
    r: int
    mode: str


def estimate_rip(
    mp: MeasurementMap, s: int, r: int, trials: int, mode: str = "l2", seed: int = 0
) -> RipEstimate:
    """Probe the map with `trials` random structured matrices and record extremes.

    Each trial draws from an independent generator seeded by (seed, trial), so
    the result does not depend on evaluation order and is reproducible.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if mode not in ("l2", "l1"):
        raise ValueError(f"unknown mode {mode!r}")
    delta = 0.0
    alpha = np.inf
    beta = -np.inf
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        probe, _ = sample_structured(mp.n, s, r, rng)
        y = mp.apply(probe)
        zf2 = float(np.sum(probe * probe))
        zf = np.sqrt(zf2)
        delta = max(delta, abs(float(y @ y) - zf2) / zf2)
        ratio1 = float(np.sum(np.abs(y))) / zf
        alpha = min(alpha, ratio1)
        beta = max(beta, ratio1)
    return RipEstimate(delta, alpha, beta, trials, s, r, mode)


class CrossTermReport(NamedTuple):
    worst_ratio: float
    delta: float
    within: bool


def cross_term_ratio(mp: MeasurementMap, z, zp) -> float:
    """|<A(Z), A(Z')> - <Z, Z'>| / (||Z|| ||Z'||) for one pair of matrices."""
    za = np.asarray(z, dtype=float)
    zb = np.asarray(zp, dtype=float)
    num = abs(float(mp.apply(za) @ mp.apply(zb)) - frob_inner(za, zb))
    den = float(np.linalg.norm(za)) * float(np.linalg.norm(zb))
    return num / den


def check_rip_cross_term(
    mp: MeasurementMap, s: int, r: int, trials: int, delta: float, seed: int = 0
) -> CrossTermReport:
    """Worst cross-term ratio over random structured pairs, compared to delta.

    For Z, Z' in the structured set the ratio is bounded by the true RIP
    constant at doubled parameters (2s, 2r); pass such a delta to check it.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    worst = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        za, _ = sample_structured(mp.n, s, r, rng)
        zb, _ = sample_structured(mp.n, s, r, rng)
        worst = max(worst, cross_term_ratio(mp, za, zb))
    return CrossTermReport(worst, delta, worst <= delta)


def write_map_header(mp: MeasurementMap, stream) -> None:
    """Serialize a sampled map as a compact text header (payload not stored)."""
    if mp.seed is None:
        raise ValueError("only maps sampled from a seed can be serialized")
    stream.write(f"kind {mp.kind}\n")
    stream.write(f"n {mp.n}\n")
    stream.write(f"m {mp.m}\n")
    if mp.kind == "factorized":
        stream.write(f"p {mp.p}\n")
        stream.write(f"inner {mp.inner}\n")
    if mp.kind == "rank-one":
        stream.write(f"scale {mp.scale}\n")
    stream.write(f"seed {mp.seed}\n")


def _parse_header_lines(it) -> dict:
    fields = {}
    for raw in it:
        line = raw.strip()
        if not line:
            continue
        key, _, value = line.partition(" ")
        fields[key] = value.strip()
        if key == "seed":
            break
    if "seed" not in fields:
        raise ValueError("map header is missing the seed line")
    for key in ("kind", "n", "m"):
        if key not in fields:
            raise ValueError(f"map header is missing the {key} line")
    return fields


def read_map_header(lines) -> MeasurementMap:
    """Rebuild a map from its text header by resampling from the stored seed."""
    it = iter(lines)
    fields = _parse_header_lines(it)
    return sample_map(
        fields["kind"],
        int(fields["n"]),
        int(fields["m"]),
        p=int(fields["p"]) if "p" in fields else None,
        seed=int(fields["seed"]),
        inner=fields.get("inner", "dense"),
        scale=fields.get("scale", "inv_m"),
    )


def write_measurement_file(mp: MeasurementMap, y, stream) -> None:
    """Write a map header followed by a `y` sentinel and one measurement per line."""
    w = np.asarray(y, dtype=float)
    if w.shape != (mp.m,):
        raise ValueError(f"expected {mp.m} measurements, got shape {w.shape}")
    write_map_header(mp, stream)
    stream.write("y\n")
    for v in w:
        stream.write(format(v, ".17g") + "\n")


def read_measurement_file(lines):
    """Read a map header plus measurement vector; returns (map, y)."""
    it = iter(lines)
    fields = _parse_header_lines(it)
    sentinel = next(it, "").strip()
    if sentinel != "y":
        raise ValueError(f"expected 'y' sentinel after the map header, got {sentinel!r}")
    m = int(fields["m"])
    vals = []
    for k in range(m):
        raw = next(it, None)
        if raw is None:
            raise ValueError(f"expected {m} measurement lines, got {k}")
        vals.append(float(raw.strip()))
    mp = sample_map(
        fields["kind"],
        int(fields["n"]),
        m,
        p=int(fields["p"]) if "p" in fields else None,
        seed=int(fields["seed"]),
        inner=fields.get("inner", "dense"),
        scale=fields.get("scale", "inv_m"),
    )
    return mp, np.array(vals)
