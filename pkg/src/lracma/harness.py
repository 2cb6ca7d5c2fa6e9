"""Seeded trial execution, stopping rules, and aggregate metrics.

A trial iterates one optimizer on one problem until the *noiseless* f(m)
reaches the target, the evaluation budget is spent, or the numerical-error
stop fires.  Success is always judged on noiseless f(m), also for noisy
problems.  f(m) is checked once per generation, right after the parameter
update, so ``evals_to_target`` is always a multiple of lambda (0 when the
initial mean is already below the target).

The numerical-error stop is triggered by any of: the largest coordinate
standard deviation sigma * sqrt(max eig C) dropping below 1e-16, the
covariance condition number exceeding 4e6 (a degenerating axis), a
non-finite value appearing in the state, or the positive-definiteness floor
tripping persistently (more than 1% of generations, checked once at least
100 generations ran).  Exceptions raised by the update itself (singular
metric, nonpositive determinant, ...) are mapped to the same termination.

Everything is a pure function of (config, seed): per-trial seeds are derived
with SHA-256 from the base seed and the trial coordinates, so any subset of
a suite reproduces identically.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidFitnessError, NumericalError
from .lra import LraCmaEs, LraHyperParams
from .problems import Problem

TERM_TARGET = "target_hit"
TERM_BUDGET = "budget_exhausted"
TERM_NUMERICAL = "numerical_error"

# Largest coordinate standard deviation below which sigma is considered
# collapsed (the "excessively small sigma" stop).
SIGMA_COLLAPSE_TOL = 1e-16
# Covariance condition-number limit.  Diverging fixed-learning-rate runs let
# single axes collapse until the eigenvalue ratio blows past 1e7, where
# double-precision determinants of C stop being meaningful; the benchmark
# suite never needs more than ~1.7e6 (the Ellipsoid's fully adapted shape),
# so 4e6 separates degenerate states from legitimate ones with margin on
# both sides.
KAPPA_LIMIT = 4e6
# Persistent-floor rule: abort when more than this fraction of generations
# needed the positive-definiteness repair, checked after a warm-up.
FLOOR_RATE_LIMIT = 0.01
FLOOR_RATE_MIN_STEPS = 100

HISTORY_COLUMNS = (
    "t",
    "evals",
    "f_m",
    "sigma",
    "eta_m",
    "eta_sigma",
    "snr_m",
    "snr_sigma",
    "eig_min",
    "eig_max",
    "det_c",
)
# det_c is an in-memory diagnostic; files carry the documented schema.
HISTORY_CSV_COLUMNS = HISTORY_COLUMNS[:-1]

RESULTS_CSV_COLUMNS = (
    "problem",
    "d",
    "optimizer",
    "eta_m",
    "eta_sigma",
    "noise_variance",
    "seed",
    "success",
    "evals",
    "termination",
)


class History:
    """Columnar per-iteration trace with the columns in HISTORY_COLUMNS."""

    def __init__(self, capacity: int = 256):
        self._data = np.empty((max(capacity, 16), len(HISTORY_COLUMNS)))
        self._n = 0

    def append(self, row: Tuple[float, ...]) -> None:
        if self._n == self._data.shape[0]:
            grown = np.empty((2 * self._n, self._data.shape[1]))
            grown[: self._n] = self._data
            self._data = grown
        self._data[self._n] = row
        self._n += 1

    def __len__(self) -> int:
        return self._n

    def trim(self) -> None:
        """Drop the growth slack once no more rows will be appended."""
        self._data = self._data[: self._n].copy()

    @property
    def data(self) -> np.ndarray:
        return self._data[: self._n]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, HISTORY_COLUMNS.index(name)]

    def best_so_far(self) -> Tuple[np.ndarray, np.ndarray]:
        """(evals, running minimum of noiseless f(m)); nonincreasing."""
        return self.column("evals"), np.minimum.accumulate(self.column("f_m"))


@dataclass(frozen=True)
class TrialConfig:
    """One seeded trial: a problem, an optimizer choice, and stopping rules.

    ``optimizer`` is ``"lra"``, ``"fixed"`` (pinned eta_m/eta_sigma), or
    ``"plain"`` (the unmodified CMA-ES, mostly for reduction checks).
    """

    problem: Problem
    optimizer: str = "lra"
    eta_m: float = 1.0
    eta_sigma: float = 1.0
    max_evals: int = 10_000_000
    target_f: float = 1e-8
    seed: int = 0
    hyper: LraHyperParams = field(default_factory=LraHyperParams)
    population_size: Optional[int] = None
    history_every: int = 1

    def __post_init__(self):
        if self.optimizer not in ("lra", "fixed", "plain"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.target_f > 0:
            raise ValueError("target_f must be positive")
        if self.max_evals < 1:
            raise ValueError("max_evals must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.history_every < 1:
            raise ValueError("history_every must be at least 1")


@dataclass
class TrialResult:
    """Outcome of one trial; ``success`` iff the termination is target_hit."""

    success: bool
    evals_to_target: Optional[int]
    evals: int
    termination: str
    reason: str
    best_noiseless_fm: float
    history: History


def _make_optimizer(cfg: TrialConfig, rng: np.random.Generator) -> LraCmaEs:
    mode = {"lra": "adaptive", "fixed": "fixed", "plain": "plain"}[cfg.optimizer]
    return LraCmaEs(
        cfg.problem.init_m,
        cfg.problem.init_sigma,
        population_size=cfg.population_size,
        hyper=cfg.hyper,
        lr_mode=mode,
        eta_m=cfg.eta_m if mode == "fixed" else 1.0,
        eta_sigma=cfg.eta_sigma if mode == "fixed" else 1.0,
        rng=rng,
    )


def run_trial(cfg: TrialConfig, on_iteration=None) -> TrialResult:
    """Run one seeded trial to termination, capturing the iteration history.

    ``on_iteration(stats, f_m)``, when given, is called after every
    generation (live logging hook; it does not affect the trial).
    """
    problem = cfg.problem
    rng = np.random.default_rng(cfg.seed)
    opt = _make_optimizer(cfg, rng)
    lam = opt.strategy.lam
    if cfg.max_evals < lam:
        raise ValueError("max_evals must cover at least one generation")

    history = History()

    def record(stats, f_m):
        history.append(
            (
                stats.t,
                stats.evals,
                f_m,
                stats.sigma,
                stats.eta_m,
                stats.eta_sigma,
                stats.snr_m,
                stats.snr_sigma,
                stats.eig_min,
                stats.eig_max,
                stats.det_c,
            )
        )

    f_m = problem.evaluate_noiseless(opt.mean)
    best = f_m
    record(opt.initial_stats(), f_m)
    if f_m <= cfg.target_f:
        return TrialResult(True, 0, 0, TERM_TARGET, "", best, history)

    evals = 0
    termination = TERM_BUDGET
    reason = ""
    evals_to_target: Optional[int] = None
    while evals + lam <= cfg.max_evals:
        xs = opt.ask()
        fitness = problem.evaluate_population(xs, rng)
        try:
            stats = opt.tell(fitness)
        except NumericalError as exc:
            termination, reason = TERM_NUMERICAL, exc.reason
            break
        except InvalidFitnessError:
            # an overflowing objective (inf at extreme samples) ends the
            # trial like any other numerical failure
            termination, reason = TERM_NUMERICAL, "nonfinite_fitness"
            break
        evals += lam
        f_m = problem.evaluate_noiseless(opt.mean)
        best = min(best, f_m)
        if on_iteration is not None:
            on_iteration(stats, f_m)
        terminal = False
        if f_m <= cfg.target_f:
            termination, evals_to_target, terminal = TERM_TARGET, evals, True
        elif not math.isfinite(f_m):
            termination, reason, terminal = TERM_NUMERICAL, "nonfinite_state", True
        elif stats.eig_max < SIGMA_COLLAPSE_TOL**2:
            termination, reason, terminal = TERM_NUMERICAL, "sigma_collapse", True
        elif stats.eig_max > KAPPA_LIMIT * stats.eig_min:
            termination, reason, terminal = TERM_NUMERICAL, "covariance_degenerate", True
        elif (
            stats.t >= FLOOR_RATE_MIN_STEPS
            and opt.floor_count > FLOOR_RATE_LIMIT * stats.t
        ):
            termination, reason, terminal = TERM_NUMERICAL, "spd_floor_persistent", True
        is_last = evals + lam > cfg.max_evals
        if terminal or is_last or stats.t % cfg.history_every == 0:
            record(stats, f_m)
        if terminal:
            break

    history.trim()
    success = termination == TERM_TARGET
    return TrialResult(
        success=success,
        evals_to_target=evals_to_target if success else None,
        evals=evals,
        termination=termination,
        reason=reason,
        best_noiseless_fm=best,
        history=history,
    )


def success_rate(results: Sequence[TrialResult]) -> float:
    """Fraction of successful trials."""
    if not results:
        raise ValueError("success_rate needs at least one trial")
    return sum(r.success for r in results) / len(results)


def sp1(results: Sequence[TrialResult]) -> Optional[float]:
    """Mean evaluations over successful trials divided by the success rate.

    Returns ``None`` when no trial succeeded (plotted as a gap).
    """
    if not results:
        raise ValueError("sp1 needs at least one trial")
    successes = [r.evals_to_target for r in results if r.success]
    if not successes:
        return None
    rate = len(successes) / len(results)
    return float(np.mean(successes)) / rate


@dataclass(frozen=True)
class EcdfSpec:
    """Target grid for runtime profiles: n_targets values from 1e6 to 1e-3."""

    n_targets: int = 30
    n_trials: int = 20
    max_evals: int = 100_000_000

    def __post_init__(self):
        if self.n_targets < 2 or self.n_trials < 1:
            raise ValueError("need at least 2 targets and 1 trial")

    @property
    def targets(self) -> np.ndarray:
        i = np.arange(1, self.n_targets + 1)
        return 10.0 ** (6 - 9 * (i - 1) / (self.n_targets - 1))


@dataclass(frozen=True)
class EcdfCurve:
    """Right-continuous step curve: fraction of (trial, target) pairs hit."""

    evals: np.ndarray
    fraction: np.ndarray
    n_pairs: int

    def value_at(self, budget: float) -> float:
        idx = np.searchsorted(self.evals, budget, side="right")
        return 0.0 if idx == 0 else float(self.fraction[idx - 1])


def ecdf(
    histories: Sequence[Tuple[np.ndarray, np.ndarray]], spec: EcdfSpec
) -> EcdfCurve:
    """Profile over ``len(histories) * n_targets`` (trial, target) pairs.

    Each history is a pair (evals, best-so-far noiseless f(m)); the best
    series must be nonincreasing.  A pair counts as hit at budget b when the
    trial first reached the target within b evaluations.
    """
    if not histories:
        raise ValueError("ecdf needs at least one history")
    targets = spec.targets
    hits = []
    for evals, best in histories:
        evals = np.asarray(evals, dtype=float)
        best = np.asarray(best, dtype=float)
        if np.any(np.diff(best) > 0):
            raise ValueError("best-so-far series must be nonincreasing")
        # first index with best <= target; -best is nondecreasing
        idx = np.searchsorted(-best, -targets, side="left")
        hit = idx < best.size
        hits.append(evals[idx[hit]])
    all_hits = np.sort(np.concatenate(hits)) if hits else np.empty(0)
    n_pairs = len(histories) * targets.size
    fraction = np.arange(1, all_hits.size + 1) / n_pairs
    return EcdfCurve(evals=all_hits, fraction=fraction, n_pairs=n_pairs)


def ecdf_from_results(results: Sequence[TrialResult], spec: EcdfSpec) -> EcdfCurve:
    return ecdf([r.history.best_so_far() for r in results], spec)


def optimizer_label(cfg: TrialConfig) -> str:
    if cfg.optimizer == "fixed":
        return f"fixed_em{cfg.eta_m:g}_es{cfg.eta_sigma:g}"
    return cfg.optimizer


def derive_trial_seed(
    base_seed: int,
    problem_name: str,
    d: int,
    noise_variance: float,
    optimizer: str,
    trial_index: int,
) -> int:
    """Stable per-trial seed so any grid subset reproduces identically."""
    key = f"{base_seed}|{problem_name}|{d}|{noise_variance!r}|{optimizer}|{trial_index}"
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


def run_suite(configs: Sequence[TrialConfig], jobs: Optional[int] = None) -> List[TrialResult]:
    """Run independent trials on a worker pool; results keep config order."""
    configs = list(configs)
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(configs) <= 1:
        return [run_trial(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_trial, configs, chunksize=1))


def summarize(
    configs: Sequence[TrialConfig], results: Sequence[TrialResult]
) -> List[dict]:
    """Aggregate per (problem, d, noise, optimizer) group, in first-seen order."""
    groups: dict = {}
    order = []
    for cfg, res in zip(configs, results):
        key = (cfg.problem.name, cfg.problem.d, cfg.problem.noise_variance, optimizer_label(cfg))
        if key not in groups:
            groups[key] = ([], cfg)
            order.append(key)
        groups[key][0].append(res)
    rows = []
    for key in order:
        res_list, cfg = groups[key]
        name, d, noise, label = key
        rows.append(
            {
                "problem": name,
                "d": d,
                "noise_variance": noise,
                "optimizer": label,
                "n_trials": len(res_list),
                "success_rate": success_rate(res_list),
                "sp1": sp1(res_list),
                "median_best_f": float(np.median([r.best_noiseless_fm for r in res_list])),
            }
        )
    return rows


# -- CSV output ----------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_results_csv(path, configs, results) -> None:
    rows = []
    for cfg, res in zip(configs, results):
        rows.append(
            (
                cfg.problem.name,
                cfg.problem.d,
                cfg.optimizer,
                cfg.eta_m if cfg.optimizer == "fixed" else None,
                cfg.eta_sigma if cfg.optimizer == "fixed" else None,
                cfg.problem.noise_variance,
                cfg.seed,
                res.success,
                res.evals_to_target if res.success else res.evals,
                res.termination,
            )
        )
    _write_csv(path, RESULTS_CSV_COLUMNS, rows)


def write_summary_csv(path, rows: Sequence[dict]) -> None:
    header = (
        "problem",
        "d",
        "noise_variance",
        "optimizer",
        "n_trials",
        "success_rate",
        "sp1",
        "median_best_f",
    )
    _write_csv(path, header, ([row[k] for k in header] for row in rows))


def write_history_csv(path, history: History) -> None:
    keep = [HISTORY_COLUMNS.index(c) for c in HISTORY_CSV_COLUMNS]
    int_cols = {HISTORY_COLUMNS.index("t"), HISTORY_COLUMNS.index("evals")}
    rows = (
        [int(row[i]) if i in int_cols else row[i] for i in keep]
        for row in history.data
    )
    _write_csv(path, HISTORY_CSV_COLUMNS, rows)


def write_ecdf_csv(path, curve: EcdfCurve) -> None:
    _write_csv(
        path,
        ("evals", "fraction"),
        ((int(e), f) for e, f in zip(curve.evals, curve.fraction)),
    )
