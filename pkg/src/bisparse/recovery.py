"""Recovery solvers for jointly low-rank and bisparse symmetric matrices.

Four iterative solvers plus an exhaustive decoder, all starting from the zero
matrix and sharing the same stopping rules (relative residual, stall between
iterates, iteration cap, and a divergence guard):

  iht_exact            hard thresholding with the exact (enumerating) joint
                       projection; desk scale only
  iht_head_tail        hard thresholding with a polynomial head projection at
                       doubled parameters followed by a tail projection
  iht_rank_one         the head-tail iteration adapted to rank-one
                       measurements: sign of the residual in the gradient and
                       an l1-residual step size
  iht_lowrank          rank-only hard thresholding on p x p matrices (stage
                       one of the factorized pipeline)
  hihtp                hard thresholding pursuit with the hierarchical
                       (s, t)-sparse projection against the map Z -> B Z B^T
  two_step_factorized  iht_lowrank then hihtp for factorized measurements
  brute_force_decode   per-support least squares (or least absolute
                       deviations) over all size-s supports

`converged` on a result means the iteration settled (residual or stall rule
fired); whether the estimate equals the ground truth is a separate question
answered by the benchmark harness.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .measurements import MeasurementMap, estimate_rip, factorized_inner_map
from .projections import (
    ENUMERATION_CAP,
    EnumerationCapError,
    exact_project,
    head_joint,
    head_rowcol,
    head_square_variant,
    hierarchical_mask,
    rank_project_on_support,
    tail_joint,
)
from .symcore import eigen, project_rank

__all__ = [
    "HEAD_CHOICES",
    "RecoveryConfig",
    "RecoveryResult",
    "iht_exact",
    "iht_head_tail",
    "iht_rank_one",
    "iht_lowrank",
    "hihtp",
    "two_step_factorized",
    "brute_force_decode",
]

HEAD_CHOICES = ("square", "anchor", "rowcol")

# residual must exceed 10x the initial residual this many consecutive
# iterations before a run is abandoned as diverging
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 20

# defaults for deriving the l1 step normalizer when cfg.step_beta is unset
BETA_TRIALS = 200
BETA_SEED = 0


@dataclass
class RecoveryConfig:
    """Solver parameters shared by all iterative recovery algorithms.

    step_beta is the l1-RIP upper normalizer used by the sign-modified
    solvers; when None it is estimated from the map at doubled structure
    parameters.  debug=True re-checks the support/rank structure of every
    iterate.
    """

    max_iters: int = 500
    tol_residual: float = 1e-9
    tol_stall: float = 1e-12
    head_choice: str = "square"
    step_beta: float | None = None
    debug: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol_residual <= 0 or self.tol_stall <= 0:
            raise ValueError("tolerances must be positive")
        if self.head_choice not in HEAD_CHOICES:
            raise ValueError(f"unknown head choice {self.head_choice!r}")


@dataclass
class RecoveryResult:
    """Outcome of a solve: estimate, per-iteration residuals, and convergence flag."""

    estimate: np.ndarray
    iterations: int
    residual_trace: list = field(default_factory=list)
    converged: bool = False
    support: np.ndarray = None


def _support_of(mat: np.ndarray) -> np.ndarray:
    return np.nonzero(np.any(mat != 0.0, axis=0))[0]


def _assert_structured(mat: np.ndarray, s: int, r: int) -> None:
    nz = _support_of(mat)
    if nz.size > s:
        raise AssertionError(f"iterate support size {nz.size} exceeds s={s}")
    if nz.size:
        vals = np.abs(np.linalg.eigvalsh(mat[np.ix_(nz, nz)]))
        top = float(vals.max())
        if top > 0 and int(np.sum(vals > 1e-9 * top)) > r:
            raise AssertionError(f"iterate rank exceeds r={r}")


def _iterate(mp_apply, y, x0, step_fn, cfg, callback=None, structure=None):
    """Shared IHT driver: run step_fn until a stopping rule fires."""
    y = np.asarray(y, dtype=float)
    ynorm = float(np.linalg.norm(y))
    x = x0
    res = y - mp_apply(x)
    res0 = float(np.linalg.norm(res))
    trace = []
    converged = False
    grow_streak = 0
    for _ in range(cfg.max_iters):
        x_new = step_fn(x, res)
        if cfg.debug and structure is not None:
            _assert_structured(x_new, *structure)
        if callback is not None:
            callback(x_new)
        res = y - mp_apply(x_new)
        rnorm = float(np.linalg.norm(res))
        trace.append(rnorm)
        step_size = float(np.linalg.norm(x_new - x))
        prev_norm = float(np.linalg.norm(x))
        x = x_new
        if rnorm <= cfg.tol_residual * ynorm:
            converged = True
            break
        if step_size <= cfg.tol_stall * prev_norm:
            converged = True
            break
        if not np.isfinite(rnorm):
            break
        if rnorm > DIVERGENCE_FACTOR * res0:
            grow_streak += 1
            if grow_streak >= DIVERGENCE_PATIENCE:
                break
        else:
            grow_streak = 0
    return x, trace, converged


def _joint_head(grad: np.ndarray, s2: int, r2: int, choice: str) -> np.ndarray:
    if choice == "square":
        return head_square_variant(grad, s2, r2).matrix
    if choice == "anchor":
        return head_joint(grad, s2, r2).matrix
    if choice == "rowcol":
        base = head_rowcol(grad, s2)
        return rank_project_on_support(base.matrix, base.support, r2)
    raise ValueError(f"unknown head choice {choice!r}")


def _check_structure_params(n: int, s: int, r: int) -> None:
    if not 1 <= s <= n:
        raise ValueError(f"sparsity must satisfy 1 <= s <= {n}, got {s}")
    if not 1 <= r <= s:
        raise ValueError(f"rank must satisfy 1 <= r <= s={s}, got {r}")


def iht_exact(mp: MeasurementMap, y, s: int, r: int, cfg: RecoveryConfig | None = None,
              callback=None) -> RecoveryResult:
    """Iterative hard thresholding with the exact joint projection.

    Each step projects the gradient update exactly (by support enumeration),
    so this is exponential in s and intended for desk-scale problems only.
    """
    cfg = cfg or RecoveryConfig()
    _check_structure_params(mp.n, s, r)
    if math.comb(mp.n, s) > ENUMERATION_CAP:
        raise EnumerationCapError(
            f"exact projection over {math.comb(mp.n, s)} supports exceeds the cap; "
            "use iht_head_tail instead"
        )

    def step(x, res):
        return exact_project(x + mp.adjoint(res), s, r).matrix

    x0 = np.zeros((mp.n, mp.n))
    x, trace, converged = _iterate(mp.apply, y, x0, step, cfg, callback, structure=(s, r))
    return RecoveryResult(x, len(trace), trace, converged, _support_of(x))


def iht_head_tail(mp: MeasurementMap, y, s: int, r: int, cfg: RecoveryConfig | None = None,
                  callback=None) -> RecoveryResult:
    """Head-tail iterative hard thresholding.

    The gradient is compressed by a head projection run at doubled structure
    parameters (the update direction lives in the doubled set), the summed
    iterate is then pulled back by the near-best tail projection.  Polynomial
    time; the default square head grows the intermediate support to (2s)^2.
    """
    cfg = cfg or RecoveryConfig()
    _check_structure_params(mp.n, s, r)
    s2 = min(2 * s, mp.n)
    r2 = min(2 * r, mp.n)

    def step(x, res):
        h = _joint_head(mp.adjoint(res), s2, r2, cfg.head_choice)
        return tail_joint(x + h, s, r).matrix

    x0 = np.zeros((mp.n, mp.n))
    x, trace, converged = _iterate(mp.apply, y, x0, step, cfg, callback, structure=(s, r))
    return RecoveryResult(x, len(trace), trace, converged, _support_of(x))


def _resolve_beta(mp: MeasurementMap, s: int, r: int, cfg: RecoveryConfig) -> float:
    if cfg.step_beta is not None:
        if cfg.step_beta <= 0:
            raise ValueError("step_beta must be positive")
        return cfg.step_beta
    est = estimate_rip(mp, min(2 * s, mp.n), min(2 * r, mp.n), BETA_TRIALS,
                       mode="l1", seed=BETA_SEED)
    return est.beta_hat


def iht_rank_one(mp: MeasurementMap, y, s: int, r: int, cfg: RecoveryConfig | None = None,
                 callback=None) -> RecoveryResult:
    """Sign-modified head-tail iteration for rank-one measurements.

    Rank-one maps obey an l1-flavoured restricted isometry, so the gradient
    uses the sign of the residual (sign(0) = 0) and the step size is the l1
    residual divided by the squared upper normalizer beta.  The iteration map
    is exactly odd: negating y negates every iterate bitwise.
    """
    cfg = cfg or RecoveryConfig()
    if mp.kind != "rank-one":
        raise ValueError("iht_rank_one needs a rank-one measurement map")
    _check_structure_params(mp.n, s, r)
    beta = _resolve_beta(mp, s, r, cfg)
    s2 = min(2 * s, mp.n)
    r2 = min(2 * r, mp.n)

    def step(x, res):
        nu = float(np.sum(np.abs(res))) / (beta * beta)
        h = _joint_head(mp.adjoint(np.sign(res)), s2, r2, cfg.head_choice)
        return tail_joint(x + nu * h, s, r).matrix

    x0 = np.zeros((mp.n, mp.n))
    x, trace, converged = _iterate(mp.apply, y, x0, step, cfg, callback, structure=(s, r))
    return RecoveryResult(x, len(trace), trace, converged, _support_of(x))


def iht_lowrank(mp: MeasurementMap, y, r: int, cfg: RecoveryConfig | None = None,
                callback=None) -> RecoveryResult:
    """Rank-only iterative hard thresholding on p x p symmetric matrices.

    For dense payloads the update is a steepest-descent gradient step (step
    size = gradient energy over measured-gradient energy, the exact line
    search for the least-squares objective) followed by the rank projection;
    the unit step stalls or diverges on a noticeable fraction of instances at
    the m ~ r p regime.  Rank-one payloads get the sign-modified step as in
    iht_rank_one (without any support projection).
    """
    cfg = cfg or RecoveryConfig()
    p = mp.n
    if not 1 <= r <= p:
        raise ValueError(f"rank must satisfy 1 <= r <= {p}, got {r}")
    if mp.kind == "rank-one":
        beta = cfg.step_beta
        if beta is None:
            est = estimate_rip(mp, p, min(2 * r, p), BETA_TRIALS, mode="l1", seed=BETA_SEED)
            beta = est.beta_hat
        elif beta <= 0:
            raise ValueError("step_beta must be positive")

        def step(x, res):
            nu = float(np.sum(np.abs(res))) / (beta * beta)
            return project_rank(x + nu * mp.adjoint(np.sign(res)), r)
    else:

        def step(x, res):
            grad = mp.adjoint(res)
            measured = mp.apply(grad)
            denom = float(measured @ measured)
            mu = float(np.sum(grad * grad)) / denom if denom > 0 else 1.0
            return project_rank(x + mu * grad, r)

    x0 = np.zeros((p, p))
    x, trace, converged = _iterate(mp.apply, y, x0, step, cfg, callback, structure=(p, r))
    return RecoveryResult(x, len(trace), trace, converged, _support_of(x))


def _restricted_lstsq(basis: np.ndarray, target_vec: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Least-squares fit of B Z B^T to the target over entries of Z in the mask."""
    n = mask.shape[0]
    idx = np.argwhere(mask)
    design = np.stack(
        [np.outer(basis[:, i], basis[:, j]).ravel() for i, j in idx], axis=1
    )
    sol, _, rank, _ = np.linalg.lstsq(design, target_vec, rcond=None)
    if rank < design.shape[1]:
        warnings.warn("restricted least-squares system is rank-deficient; using ridge 1e-10")
        gram = design.T @ design + 1e-10 * np.eye(design.shape[1])
        sol = np.linalg.solve(gram, design.T @ target_vec)
    out = np.zeros((n, n))
    out[idx[:, 0], idx[:, 1]] = sol
    return out


def hihtp(basis, target, s: int, t: int, cfg: RecoveryConfig | None = None,
          callback=None) -> RecoveryResult:
    """Hard thresholding pursuit with the hierarchical (s, t)-sparse projection.

    Recovers an (s, t)-sparse n x n matrix X from a p x p observation of
    B X B^T: identify a candidate support from a normalized gradient step,
    then least-squares fit the (at most s*t) selected entries; stop when the
    candidate support stops changing.  The returned estimate is symmetrized.
    """
    cfg = cfg or RecoveryConfig()
    b = np.asarray(basis, dtype=float)
    yhat = np.asarray(target, dtype=float)
    if b.ndim != 2:
        raise ValueError(f"expected a p x n basis matrix, got shape {b.shape}")
    p, n = b.shape
    if yhat.shape != (p, p):
        raise ValueError(f"expected a {p} x {p} target, got shape {yhat.shape}")
    if not 1 <= t <= n or not 1 <= s <= n:
        raise ValueError(f"need 1 <= s, t <= {n}, got s={s}, t={t}")
    # B^T B has mean trace p for unit-variance Gaussian B, so the pullback of
    # the residual overshoots by (tr(B^T B)/n)^2; for orthonormal B this is 1
    tau = float(np.trace(b.T @ b)) / n
    scale = tau * tau
    target_vec = yhat.ravel()
    tnorm = float(np.linalg.norm(yhat))
    x = np.zeros((n, n))
    prev_mask = None
    trace = []
    converged = False
    for _ in range(cfg.max_iters):
        grad = b.T @ (yhat - b @ x @ b.T) @ b / scale
        mask = hierarchical_mask(x + grad, s, t)
        x = _restricted_lstsq(b, target_vec, mask)
        rnorm = float(np.linalg.norm(yhat - b @ x @ b.T))
        trace.append(rnorm)
        if callback is not None:
            callback(x)
        if prev_mask is not None and np.array_equal(mask, prev_mask):
            converged = True
            break
        if rnorm <= cfg.tol_residual * tnorm:
            converged = True
            break
        prev_mask = mask
    est = (x + x.T) / 2.0
    return RecoveryResult(est, len(trace), trace, converged, _support_of(est))


def two_step_factorized(mp: MeasurementMap, y, s: int, r: int,
                        cfg: RecoveryConfig | None = None) -> RecoveryResult:
    """Two-step recovery for factorized measurements.

    Step one recovers the p x p matrix B X B^T by low-rank hard thresholding
    on the inner measurement matrices; step two recovers X from that matrix by
    HiHTP with per-column sparsity equal to the bisparsity s.  Non-convergence
    of either stage is propagated.
    """
    cfg = cfg or RecoveryConfig()
    if mp.kind != "factorized":
        raise ValueError("two_step_factorized needs a factorized measurement map")
    _check_structure_params(mp.n, s, r)
    y = np.asarray(y, dtype=float)
    inner = factorized_inner_map(mp, normalize=True)
    y_inner = y / np.sqrt(mp.m) if mp.inner == "dense" else y
    stage1 = iht_lowrank(inner, y_inner, r, cfg)
    stage2 = hihtp(mp.basis, stage1.estimate, s, s, cfg)
    est = (stage2.estimate + stage2.estimate.T) / 2.0
    return RecoveryResult(
        est,
        stage1.iterations + stage2.iterations,
        stage1.residual_trace + stage2.residual_trace,
        stage1.converged and stage2.converged,
        _support_of(est),
    )


def _pair_basis_columns(mp: MeasurementMap):
    """Measurement of every symmetric pair basis matrix E_ij + E_ji (i <= j)."""
    n = mp.n
    pairs = []
    cols = []
    for i in range(n):
        for j in range(i, n):
            basis = np.zeros((n, n))
            basis[i, j] = 1.0
            basis[j, i] = 1.0
            pairs.append((i, j))
            cols.append(mp.apply(basis))
    return pairs, np.stack(cols, axis=1)


def _objective(res: np.ndarray, mode: str) -> float:
    if mode == "l2":
        return float(np.linalg.norm(res))
    return float(np.sum(np.abs(res)))


def _weighted_l1_fit(design: np.ndarray, y: np.ndarray, iters: int = 50) -> np.ndarray:
    """Least absolute deviations by iteratively reweighted least squares."""
    sol = np.linalg.lstsq(design, y, rcond=None)[0]
    for _ in range(iters):
        res = y - design @ sol
        w = 1.0 / np.sqrt(np.maximum(np.abs(res), 1e-10))
        new = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)[0]
        if np.max(np.abs(new - sol)) <= 1e-12 * max(1.0, float(np.max(np.abs(new)))):
            sol = new
            break
        sol = new
    return sol


def _fit(design: np.ndarray, y: np.ndarray, mode: str) -> np.ndarray:
    if mode == "l2":
        return np.linalg.lstsq(design, y, rcond=None)[0]
    return _weighted_l1_fit(design, y)


def _block_design(design_cols, support, pair_index):
    local_pairs = []
    col_ids = []
    for a, i in enumerate(support):
        for bpos in range(a, len(support)):
            j = support[bpos]
            local_pairs.append((a, bpos))
            col_ids.append(pair_index[(i, j)])
    return local_pairs, design_cols[:, col_ids]


def _coeffs_from_block(block: np.ndarray, local_pairs) -> np.ndarray:
    return np.array([block[a, b] for a, b in local_pairs])


def _block_from_coeffs(coeffs: np.ndarray, local_pairs, size: int) -> np.ndarray:
    block = np.zeros((size, size))
    for val, (a, b) in zip(coeffs, local_pairs):
        block[a, b] = val
        block[b, a] = val
    return block


def _polish_rank(design, local_pairs, size, y, block, r, mode, rounds=25):
    """Alternating refinement: rank-project, then refit within the kept eigenspace."""
    best_block = project_rank(block, r)
    best_obj = _objective(y - design @ _coeffs_from_block(best_block, local_pairs), mode)
    current = best_block
    for _ in range(rounds):
        dec = eigen(project_rank(current, r))
        vecs = dec.eigenvectors[:, :r]
        core_pairs = [(a, b) for a in range(r) for b in range(a, r)]
        core_cols = []
        for a, b in core_pairs:
            term = np.outer(vecs[:, a], vecs[:, b])
            term = term + term.T if a != b else term
            core_cols.append(design @ _coeffs_from_block(term, local_pairs))
        core_design = np.stack(core_cols, axis=1)
        core = _fit(core_design, y, mode)
        current = np.zeros((size, size))
        for val, (a, b) in zip(core, core_pairs):
            term = np.outer(vecs[:, a], vecs[:, b])
            current += val * (term + term.T if a != b else term)
        current = (current + current.T) / 2.0
        obj = _objective(y - design @ _coeffs_from_block(current, local_pairs), mode)
        if obj < best_obj - 1e-15:
            best_obj = obj
            best_block = current
        else:
            break
    return best_block, best_obj


def brute_force_decode(mp: MeasurementMap, y, s: int, r: int, noise_mode: str = "l2",
                       cap: int = ENUMERATION_CAP) -> RecoveryResult:
    """Best structured fit by support enumeration (the impractical decoder).

    For every size-s support, fit a symmetric block to the measurements by
    least squares (noise_mode="l2") or least absolute deviations ("l1"); when
    r < s the fit is polished toward rank r by alternating rank projection and
    refitting within the kept eigenspace, a heuristic that is exact whenever
    the residual reaches zero.  Returns the best-objective candidate; ties
    keep the lexicographically smallest support.
    """
    if noise_mode not in ("l2", "l1"):
        raise ValueError(f"unknown noise mode {noise_mode!r}")
    n = mp.n
    _check_structure_params(n, s, r)
    n_supports = math.comb(n, s)
    if n_supports > cap:
        raise EnumerationCapError(
            f"decoding over {n_supports} supports exceeds the cap {cap}"
        )
    unknowns = s * (s + 1) // 2
    if unknowns > mp.m:
        raise ValueError(
            f"per-support fit has {unknowns} unknowns but only {mp.m} measurements"
        )
    y = np.asarray(y, dtype=float)
    pairs, design_cols = _pair_basis_columns(mp)
    pair_index = {pair: k for k, pair in enumerate(pairs)}
    best_obj = np.inf
    best_support = None
    best_block = None
    for cand in itertools.combinations(range(n), s):
        local_pairs, design = _block_design(design_cols, cand, pair_index)
        coeffs = _fit(design, y, noise_mode)
        block = _block_from_coeffs(coeffs, local_pairs, s)
        if r < s:
            block, obj = _polish_rank(design, local_pairs, s, y, block, r, noise_mode)
        else:
            obj = _objective(y - design @ _coeffs_from_block(block, local_pairs), noise_mode)
        if obj < best_obj:
            best_obj = obj
            best_support = np.array(cand, dtype=int)
            best_block = block
    estimate = np.zeros((n, n))
    estimate[np.ix_(best_support, best_support)] = best_block
    return RecoveryResult(estimate, 1, [best_obj], True, _support_of(estimate))
