"""Seeded Monte-Carlo experiment harness: phase transitions and RIP sweeps.

An experiment is described by a flat key/value spec (see `parse_spec`): one
algorithm, one measurement ensemble, and grids over n, s, r and m.  Each grid
cell runs `trials_per_cell` independent trials whose seeds are derived by
hashing (base_seed, cell, trial), so any run is reproducible bit-for-bit and
trials can execute in any order or thread.

Measurement counts in the m grid may be absolute ("40") or multiples of the
structure-driven baseline ceil(r * s * ln(e n / s)) ("2x").

CSV columns: algo,ensemble,n,s,r,m,trial,seed,noise,success,rel_error,iters,ms.
The ms column is written as 0 by default: wall-clock times are kept on the
in-memory TrialRecord but would break the byte-reproducibility contract of
the CSV; pass timing=True to include them.
"""

from __future__ import annotations

import hashlib
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .measurements import RipEstimate, estimate_rip, sample_map, sample_structured
from .recovery import (
    RecoveryConfig,
    brute_force_decode,
    iht_exact,
    iht_head_tail,
    iht_rank_one,
    two_step_factorized,
)

__all__ = [
    "ALGOS",
    "ENSEMBLES",
    "CSV_HEADER",
    "ExperimentSpec",
    "TrialRecord",
    "derive_seed",
    "resolve_m",
    "default_inner_dim",
    "parse_spec",
    "run_phase_transition",
    "run_rip_sweep",
    "write_csv",
    "write_rip_csv",
    "aggregate",
    "write_aggregate_csv",
]

ALGOS = ("exact-iht", "head-tail", "rank-one", "two-step", "brute")
ENSEMBLES = ("dense-gaussian", "rank-one", "factorized")

CSV_HEADER = "algo,ensemble,n,s,r,m,trial,seed,noise,success,rel_error,iters,ms"
RIP_CSV_HEADER = "ensemble,n,s,r,m,mode,trials,seed,delta_lower,alpha_hat,beta_hat"
AGGREGATE_HEADER = "algo,ensemble,n,s,r,m,trials,successes,success_rate,mean_rel_error"


@dataclass
class ExperimentSpec:
    """A benchmark sweep: one algorithm/ensemble over a (n, s, r, m) grid.

    `m` entries are strings: either an absolute count ("40") or a multiple of
    the baseline ceil(r s ln(e n / s)) ("1.5x").  `p` optionally pins the
    inner dimension of factorized maps; by default it tracks the sparsity via
    ceil(3 s ln(e n / s)) + 10.
    """

    algo: str
    ensemble: str
    n: list = field(default_factory=list)
    s: list = field(default_factory=list)
    r: list = field(default_factory=list)
    m: list = field(default_factory=list)
    trials_per_cell: int = 1
    noise_level: float = 0.0
    success_tol: float = 1e-4
    base_seed: int = 0
    p: int | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algorithm {self.algo!r}")
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if not (self.n and self.s and self.r and self.m):
            raise ValueError("grid lists n, s, r, m must be nonempty")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be at least 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be nonnegative")
        if self.algo == "rank-one" and self.ensemble != "rank-one":
            raise ValueError("the rank-one algorithm needs the rank-one ensemble")
        if self.algo == "two-step" and self.ensemble != "factorized":
            raise ValueError("the two-step algorithm needs the factorized ensemble")


@dataclass
class TrialRecord:
    """One CSV row: cell parameters, derived seed, and the trial outcome.

    `seed` is derived by hashing (base_seed, algo, ensemble, n, s, r, m,
    trial); the map, signal and noise draws use role-suffixed hashes of the
    same tuple.  A skipped (infeasible) cell yields rel_error = nan.
    """

    algo: str
    ensemble: str
    n: int
    s: int
    r: int
    m: int
    trial: int
    seed: int
    noise: float
    success: bool
    rel_error: float
    iterations: int
    wall_ms: float


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from hashing the string forms of the parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def baseline_m(n: int, s: int, r: int) -> int:
    """The structure-driven measurement baseline ceil(r * s * ln(e n / s))."""
    return math.ceil(r * s * math.log(math.e * n / s))


def resolve_m(spec_value: str, n: int, s: int, r: int) -> int:
    """Resolve an m grid entry: absolute count, or "<mult>x" times the baseline."""
    text = str(spec_value).strip()
    if text.endswith("x"):
        mult = float(text[:-1])
        return math.ceil(mult * baseline_m(n, s, r))
    return int(text)


def default_inner_dim(n: int, s: int) -> int:
    """Default factorized inner dimension ceil(3 s ln(e n / s)) + 10."""
    return math.ceil(3 * s * math.log(math.e * n / s)) + 10


_LIST_INT_KEYS = ("n", "s", "r")
_SPEC_KEYS = {
    "algo", "ensemble", "n", "s", "r", "m",
    "trials_per_cell", "noise_level", "success_tol", "base_seed", "p",
}


def parse_spec(lines) -> ExperimentSpec:
    """Parse the flat key = value spec format; lists are comma-separated."""
    raw = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ValueError(f"line {lineno}: expected 'key = value', got {text!r}")
        key, _, value = text.partition("=")
        key = key.strip()
        if key not in _SPEC_KEYS:
            raise ValueError(f"line {lineno}: unknown spec key {key!r}")
        raw[key] = value.strip()
    for key in ("algo", "ensemble", "n", "s", "r", "m"):
        if key not in raw:
            raise ValueError(f"spec is missing the required key {key!r}")
    kwargs = {
        "algo": raw["algo"],
        "ensemble": raw["ensemble"],
        "m": [tok.strip() for tok in raw["m"].split(",") if tok.strip()],
    }
    for key in _LIST_INT_KEYS:
        kwargs[key] = [int(tok) for tok in raw[key].split(",") if tok.strip()]
    if "trials_per_cell" in raw:
        kwargs["trials_per_cell"] = int(raw["trials_per_cell"])
    if "noise_level" in raw:
        kwargs["noise_level"] = float(raw["noise_level"])
    if "success_tol" in raw:
        kwargs["success_tol"] = float(raw["success_tol"])
    if "base_seed" in raw:
        kwargs["base_seed"] = int(raw["base_seed"])
    if "p" in raw:
        kwargs["p"] = int(raw["p"])
    return ExperimentSpec(**kwargs)


def format_spec(spec: ExperimentSpec) -> str:
    """Inverse of parse_spec."""
    lines = [
        f"algo = {spec.algo}",
        f"ensemble = {spec.ensemble}",
        f"n = {', '.join(str(v) for v in spec.n)}",
        f"s = {', '.join(str(v) for v in spec.s)}",
        f"r = {', '.join(str(v) for v in spec.r)}",
        f"m = {', '.join(str(v) for v in spec.m)}",
        f"trials_per_cell = {spec.trials_per_cell}",
        f"noise_level = {format(spec.noise_level, '.17g')}",
        f"success_tol = {format(spec.success_tol, '.17g')}",
        f"base_seed = {spec.base_seed}",
    ]
    if spec.p is not None:
        lines.append(f"p = {spec.p}")
    return "\n".join(lines) + "\n"


def _cell_feasible(spec: ExperimentSpec, n: int, s: int, r: int, m: int) -> str | None:
    if m < 1:
        return f"m={m} < 1"
    if not 1 <= s <= n:
        return f"s={s} outside [1, {n}]"
    if not 1 <= r <= s:
        return f"r={r} outside [1, s={s}]"
    if spec.algo in ("exact-iht", "brute") and math.comb(n, s) > 2_000_000:
        return f"support enumeration over C({n},{s}) exceeds the cap"
    if spec.algo == "brute" and s * (s + 1) // 2 > m:
        return f"per-support fit needs {s * (s + 1) // 2} <= m={m}"
    return None


def _run_single_trial(spec: ExperimentSpec, n: int, s: int, r: int, m: int,
                      trial: int) -> TrialRecord:
    cell = (spec.base_seed, spec.algo, spec.ensemble, n, s, r, m, trial)
    seed = derive_seed(*cell)
    start = time.perf_counter()
    p = spec.p if spec.p is not None else default_inner_dim(n, s)
    mp = sample_map(
        spec.ensemble, n, m,
        p=p if spec.ensemble == "factorized" else None,
        seed=derive_seed(*cell, "map"),
    )
    signal, _ = sample_structured(n, s, r, np.random.default_rng(derive_seed(*cell, "signal")))
    y = mp.apply(signal)
    if spec.noise_level > 0:
        rng = np.random.default_rng(derive_seed(*cell, "noise"))
        y = y + rng.standard_normal(m) * (spec.noise_level * float(np.linalg.norm(y)) / np.sqrt(m))
    if spec.algo == "exact-iht":
        result = iht_exact(mp, y, s, r)
    elif spec.algo == "head-tail":
        result = iht_head_tail(mp, y, s, r)
    elif spec.algo == "rank-one":
        result = iht_rank_one(mp, y, s, r)
    elif spec.algo == "two-step":
        result = two_step_factorized(mp, y, s, r)
    else:
        result = brute_force_decode(mp, y, s, r)
    rel_error = float(np.linalg.norm(result.estimate - signal)) / float(np.linalg.norm(signal))
    wall_ms = (time.perf_counter() - start) * 1000.0
    return TrialRecord(
        spec.algo, spec.ensemble, n, s, r, m, trial, seed, spec.noise_level,
        rel_error <= spec.success_tol, rel_error, result.iterations, wall_ms,
    )


def run_phase_transition(spec: ExperimentSpec, threads: int = 1) -> list:
    """Run every (cell, trial) of the sweep; rows come back in grid order.

    Infeasible cells are skipped with a warning and produce placeholder rows
    with rel_error = nan so the CSV stays rectangular.
    """
    tasks = []
    records = []
    for n in spec.n:
        for s in spec.s:
            for r in spec.r:
                for m_entry in spec.m:
                    m = resolve_m(m_entry, n, s, r)
                    reason = _cell_feasible(spec, n, s, r, m)
                    for trial in range(spec.trials_per_cell):
                        if reason is None:
                            tasks.append((len(records), (n, s, r, m, trial)))
                            records.append(None)
                        else:
                            seed = derive_seed(spec.base_seed, spec.algo, spec.ensemble,
                                               n, s, r, m, trial)
                            records.append(TrialRecord(
                                spec.algo, spec.ensemble, n, s, r, m, trial, seed,
                                spec.noise_level, False, float("nan"), 0, 0.0,
                            ))
                    if reason is not None:
                        warnings.warn(f"skipping infeasible cell (n={n}, s={s}, r={r}, m={m}): {reason}")
    if threads > 1 and tasks:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(lambda job: _run_single_trial(spec, *job[1]), tasks)
            for (pos, _), rec in zip(tasks, results):
                records[pos] = rec
    else:
        for pos, args in tasks:
            records[pos] = _run_single_trial(spec, *args)
    return records


def run_rip_sweep(spec: ExperimentSpec, mode: str = "l2") -> list:
    """Estimate RIP statistics over the grid; returns (cell, seed, RipEstimate) rows."""
    rows = []
    for n in spec.n:
        for s in spec.s:
            for r in spec.r:
                for m_entry in spec.m:
                    m = resolve_m(m_entry, n, s, r)
                    if m < 1 or not 1 <= s <= n or not 1 <= r <= s:
                        warnings.warn(f"skipping infeasible cell (n={n}, s={s}, r={r}, m={m})")
                        continue
                    cell = (spec.base_seed, "rip", spec.ensemble, n, s, r, m, mode)
                    p = spec.p if spec.p is not None else default_inner_dim(n, s)
                    mp = sample_map(
                        spec.ensemble, n, m,
                        p=p if spec.ensemble == "factorized" else None,
                        seed=derive_seed(*cell, "map"),
                    )
                    est = estimate_rip(mp, s, r, spec.trials_per_cell, mode=mode,
                                       seed=derive_seed(*cell, "probes"))
                    rows.append({
                        "ensemble": spec.ensemble, "n": n, "s": s, "r": r, "m": m,
                        "mode": mode, "trials": spec.trials_per_cell,
                        "seed": derive_seed(*cell), "estimate": est,
                    })
    return rows


def _fmt(value: float) -> str:
    return format(value, ".17g")


def write_csv(records, stream, timing: bool = False) -> None:
    """Write trial records as CSV; ms is 0 unless timing=True (not reproducible)."""
    stream.write(CSV_HEADER + "\n")
    for rec in records:
        ms = int(round(rec.wall_ms)) if timing else 0
        stream.write(
            f"{rec.algo},{rec.ensemble},{rec.n},{rec.s},{rec.r},{rec.m},"
            f"{rec.trial},{rec.seed},{_fmt(rec.noise)},{int(rec.success)},"
            f"{_fmt(rec.rel_error)},{rec.iterations},{ms}\n"
        )


def write_rip_csv(rows, stream) -> None:
    stream.write(RIP_CSV_HEADER + "\n")
    for row in rows:
        est: RipEstimate = row["estimate"]
        stream.write(
            f"{row['ensemble']},{row['n']},{row['s']},{row['r']},{row['m']},"
            f"{row['mode']},{row['trials']},{row['seed']},"
            f"{_fmt(est.delta_lower)},{_fmt(est.alpha_hat)},{_fmt(est.beta_hat)}\n"
        )


def aggregate(records) -> list:
    """Per-cell success statistics; placeholder (nan) rows are left out."""
    cells = {}
    for rec in records:
        if math.isnan(rec.rel_error):
            continue
        key = (rec.algo, rec.ensemble, rec.n, rec.s, rec.r, rec.m)
        entry = cells.setdefault(key, {"trials": 0, "successes": 0, "err_sum": 0.0})
        entry["trials"] += 1
        entry["successes"] += int(rec.success)
        entry["err_sum"] += rec.rel_error
    rows = []
    for key in sorted(cells):
        entry = cells[key]
        rows.append({
            "algo": key[0], "ensemble": key[1], "n": key[2], "s": key[3],
            "r": key[4], "m": key[5], "trials": entry["trials"],
            "successes": entry["successes"],
            "success_rate": entry["successes"] / entry["trials"],
            "mean_rel_error": entry["err_sum"] / entry["trials"],
        })
    return rows


def write_aggregate_csv(rows, stream) -> None:
    stream.write(AGGREGATE_HEADER + "\n")
    for row in rows:
        stream.write(
            f"{row['algo']},{row['ensemble']},{row['n']},{row['s']},{row['r']},"
            f"{row['m']},{row['trials']},{row['successes']},"
            f"{_fmt(row['success_rate'])},{_fmt(row['mean_rel_error'])}\n"
        )
