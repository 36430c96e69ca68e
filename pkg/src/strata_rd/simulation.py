"""Seeded data-generating processes for the factorial simulation design, a
replication engine, and coverage/power summaries.

A scenario is a pure function of two integers: ``generation_seed`` fixes the
once-drawn stratum probabilities and effect parameters, ``run_seed`` fixes
every replicate. Replicate ``r`` draws from
``SeedSequence([run_seed, r])``, so results do not depend on how replicates
are spread over worker threads.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import InfeasibleParametersError, InvalidFactorError, RejectionCapError
from .tables import SubjectRecord
from .variance import DELTA_ATE, DELTA_MH, TrueParameters, normal_quantile

LARGE = "LARGE"
SPARSE = "SPARSE"
MIXED = "MIXED"

COMMON_4A = "COMMON_4A"
VARYING_4B = "VARYING_4B"
VARYING_4C = "VARYING_4C"
INDIVIDUAL_RD = "INDIVIDUAL_RD"
EXTREME = "EXTREME"

FACTOR4 = (COMMON_4A, VARYING_4B, VARYING_4C)

SAMPLE_SIZES = {"1a": 500, "1b": 300, "1c": 200}
ALLOCATIONS = {"2a": (2 / 3, 1 / 3), "2b": (0.5, 0.5)}
REGIMES = {"3a": LARGE, "3b": SPARSE, "3c": MIXED}
EFFECTS = {"4a": COMMON_4A, "4b": VARYING_4B, "4c": VARYING_4C}

# number of small strata by sample size
SPARSE_K = {500: 30, 300: 18, 200: 15}
MIXED_SMALL_K = {500: 15, 300: 9, 200: 12}

LARGE_RHO = (0.2, 0.3, 0.5)
MIXED_LARGE_RHO = (0.1, 0.15, 0.25)
LARGE_EFFECTS = {
    COMMON_4A: ((0.5, 0.2, 0.6), (-0.1, -0.1, -0.1)),
    VARYING_4B: ((0.1, 0.1, 0.7), (0.0, 0.0, 0.2)),
    VARYING_4C: ((0.8, 0.9, 0.5), (-0.5, -0.3, 0.2)),
    EXTREME: ((0.0, 1.0, 0.0), (1.0, -1.0, 0.0)),
}

TRUNCNORM_CAP = 10**6

# (estimator, variance method, estimand) cells reported per scenario
CELLS = (
    ("MH", "GR", DELTA_MH),
    ("MH", "SATO", DELTA_MH),
    ("MH", "MGR_MH", DELTA_MH),
    ("MH", "BOOTSTRAP", DELTA_MH),
    ("MH", "GR", DELTA_ATE),
    ("MH", "SATO", DELTA_ATE),
    ("MH", "MGR_MH", DELTA_ATE),
    ("MH", "MGR_ATE", DELTA_ATE),
    ("MH", "BOOTSTRAP", DELTA_ATE),
    ("PS", "PS", DELTA_ATE),
    ("UNADJUSTED", "UNADJUSTED", DELTA_ATE),
)
DEFAULT_METHODS = ("GR", "SATO", "MGR_MH", "MGR_ATE", "PS", "UNADJUSTED")


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the factorial design.

    ``effect == INDIVIDUAL_RD`` generates potential outcomes from a
    per-stratum lambda table whose induced ``(p0, delta)`` match
    ``base_effect``; ``harm_fraction`` places the share of harmed subjects
    between its feasible bounds (0 = fewest, 1 = most).
    """

    n: int
    pi: tuple[float, float]
    regime: str
    effect: str
    generation_seed: int = 2024
    run_seed: int = 1
    base_effect: str = VARYING_4C
    harm_fraction: float = 0.5
    small_strata: Optional[int] = None
    label: str = ""

    def __post_init__(self):
        pi = tuple(float(x) for x in self.pi)
        if len(pi) != 2 or min(pi) <= 0 or abs(pi[0] + pi[1] - 1) > 1e-12:
            raise InfeasibleParametersError(f"allocation {self.pi} must be two positive numbers summing to 1")
        object.__setattr__(self, "pi", pi)
        if self.n < 1:
            raise InfeasibleParametersError("sample size must be positive")
        if self.regime not in (LARGE, SPARSE, MIXED):
            raise InvalidFactorError(f"unknown regime {self.regime!r}")
        if self.effect not in FACTOR4 + (INDIVIDUAL_RD, EXTREME):
            raise InvalidFactorError(f"unknown effect {self.effect!r}")
        if self.base_effect not in FACTOR4:
            raise InvalidFactorError(f"unknown base effect {self.base_effect!r}")
        if not 0 <= self.harm_fraction <= 1:
            raise InfeasibleParametersError("harm_fraction must lie in [0, 1]")
        if self.regime != LARGE and self.small_strata is None and self.n not in SPARSE_K:
            raise InfeasibleParametersError(
                f"no default stratum count for n={self.n}; set small_strata explicitly")

    @property
    def pi1(self) -> float:
        return self.pi[0]

    @property
    def n_small(self) -> int:
        if self.regime == LARGE:
            return 0
        if self.small_strata is not None:
            return self.small_strata
        return (SPARSE_K if self.regime == SPARSE else MIXED_SMALL_K)[self.n]

    @property
    def K(self) -> int:
        return {LARGE: 3, SPARSE: 0, MIXED: 3}[self.regime] + self.n_small

    @property
    def generating_effect(self) -> str:
        return self.base_effect if self.effect == INDIVIDUAL_RD else self.effect

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pi"] = list(self.pi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["pi"] = tuple(d["pi"])
        return cls(**d)


def sample_truncnorm(a: float, b: float, mu: float, sigma: float,
                     rng: np.random.Generator, size: Optional[int] = None):
    """Normal(mu, sigma^2) conditioned on [a, b], by rejection.

    Returns a float, or an array when ``size`` is given. Raises
    :class:`RejectionCapError` after ``10**6`` rejected proposals per draw.
    """
    if not a < b:
        raise InfeasibleParametersError(f"need a < b, got [{a}, {b}]")
    if not sigma > 0:
        raise InfeasibleParametersError(f"sigma must be positive, got {sigma}")
    if size is None:
        for _ in range(TRUNCNORM_CAP):
            x = rng.normal(mu, sigma)
            if a <= x <= b:
                return float(x)
        raise RejectionCapError(f"no draw in [{a}, {b}] after {TRUNCNORM_CAP} proposals")
    out = np.empty(size)
    filled = 0
    rounds = 0
    while filled < size:
        if rounds == TRUNCNORM_CAP:
            raise RejectionCapError(f"no draw in [{a}, {b}] after {TRUNCNORM_CAP} proposals")
        need = size - filled
        x = rng.normal(mu, sigma, size=max(need, 64))
        x = x[(x >= a) & (x <= b)][:need]
        out[filled:filled + x.size] = x
        filled += x.size
        rounds += 1
    return out


def _small_strata_effects(effect: str, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(p0, delta) for ``m`` small strata; p0 for all strata is drawn before delta."""
    if m == 0:
        return np.empty(0), np.empty(0)
    if effect == COMMON_4A:
        p0 = rng.uniform(0.4, 0.7, size=m)
        return p0, np.full(m, -0.1)
    if effect == VARYING_4B:
        h = m // 2
        p0 = np.concatenate([rng.uniform(0.1, 0.2, size=h), rng.uniform(0.7, 0.8, size=m - h)])
        d = [sample_truncnorm(0.0, 0.1, 0.05, 0.05, rng) for _ in range(h)]
        d += [sample_truncnorm(0.1, 0.2, 0.15, 0.05, rng) for _ in range(m - h)]
        return p0, np.array(d)
    if effect == VARYING_4C:
        h = round(2 * m / 3)
        p0 = np.concatenate([rng.uniform(0.8, 0.9, size=h), rng.uniform(0.4, 0.5, size=m - h)])
        d = np.concatenate([rng.uniform(-0.6, -0.5, size=h), rng.uniform(0.1, 0.2, size=m - h)])
        return p0, d
    if effect == EXTREME:
        d = rng.integers(-1, 2, size=m).astype(float)
        coin = rng.integers(0, 2, size=m).astype(float)
        p0 = np.where(d == -1, 1.0, np.where(d == 1, 0.0, coin))
        return p0, d
    raise InvalidFactorError(f"unknown effect {effect!r}")


def build_truth(config: ScenarioConfig) -> TrueParameters:
    """True parameters of a scenario.

    Large strata use fixed probabilities and effects; small strata draw
    their probabilities (then ``p0``, then ``delta``) once from
    ``default_rng(generation_seed)``.
    """
    effect = config.generating_effect
    rng = np.random.default_rng(config.generation_seed)
    m = config.n_small
    raw = rng.uniform(0.2, 0.5, size=m)
    if config.regime == LARGE:
        rho = np.array(LARGE_RHO)
    elif config.regime == SPARSE:
        rho = raw / raw.sum()
    else:
        rho = np.concatenate([MIXED_LARGE_RHO, 0.5 * raw / raw.sum()])
    p0_s, d_s = _small_strata_effects(effect, m, rng)
    if config.regime == SPARSE:
        p0, d = p0_s, d_s
    else:
        lp0, ld = LARGE_EFFECTS[effect]
        p0 = np.concatenate([lp0, p0_s])
        d = np.concatenate([ld, d_s])
    p1 = p0 + d
    # exact endpoints for the 0/1 designs
    p1 = np.where(np.abs(p1) < 1e-15, 0.0, np.where(np.abs(p1 - 1) < 1e-15, 1.0, p1))
    if np.any(p1 < 0) or np.any(p1 > 1):
        raise InfeasibleParametersError("treated response probability outside [0, 1]")
    rho = rho / math.fsum(rho)
    return TrueParameters(tuple(rho), config.pi1, tuple(p1), tuple(p0))


def lambda_table(truth: TrueParameters, harm_fraction: float = 0.5) -> np.ndarray:
    """Per-stratum potential-outcome proportions matching ``truth``.

    Columns: harmed ``(Y0, Y1) = (1, 0)``, helped ``(0, 1)``, never ``(0, 0)``,
    always ``(1, 1)``.
    """
    p0 = np.array(truth.p0)
    p1 = np.array(truth.p1)
    d = p1 - p0
    lo = np.maximum(0.0, -d)
    hi = np.minimum(p0, 1 - p1)
    h = lo + harm_fraction * (hi - lo)
    lam = np.column_stack([h, d + h, 1 - p1 - h, p0 - h])
    return np.clip(lam, 0.0, 1.0)


def _cumulative(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def _draw_strata(cum_rho: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.searchsorted(cum_rho, rng.random(n), side="right")


def _draw_binomial_trial(truth_arrays, n: int, rng: np.random.Generator):
    cum_rho, pi1, p1, p0 = truth_arrays
    z = _draw_strata(cum_rho, n, rng)
    a = (rng.random(n) < pi1).astype(np.int64)
    p = np.where(a == 1, p1[z], p0[z])
    y = (rng.random(n) < p).astype(np.int64)
    return z, a, y


def _draw_individual_trial(lam_arrays, n: int, rng: np.random.Generator):
    cum_rho, pi1, cum_lam = lam_arrays
    z = _draw_strata(cum_rho, n, rng)
    u = rng.random(n)
    kind = (u[:, None] >= cum_lam[z]).sum(axis=1)
    a = (rng.random(n) < pi1).astype(np.int64)
    y0 = np.array([1, 0, 0, 1])[kind]
    y1 = np.array([0, 1, 0, 1])[kind]
    y = np.where(a == 1, y1, y0)
    return z, a, y


def _truth_arrays(truth: TrueParameters):
    return (_cumulative(np.array(truth.rho)), truth.pi1, np.array(truth.p1), np.array(truth.p0))


def _to_records(z, a, y) -> list[SubjectRecord]:
    return [SubjectRecord(f"s{k + 1}", int(t), int(o)) for k, t, o in zip(z.tolist(), a.tolist(), y.tolist())]


def sample_trial(truth: TrueParameters, n: int, seed: int) -> list[SubjectRecord]:
    """``n`` i.i.d. subjects: stratum from ``rho``, arm from ``pi1``, then a
    Bernoulli outcome. Strata are labelled ``s1 .. sK``."""
    rng = np.random.default_rng(seed)
    return _to_records(*_draw_binomial_trial(_truth_arrays(truth), n, rng))


def sample_trial_individual_rd(lambda_spec, rho: Sequence[float], pi: float | Sequence[float],
                               n: int, seed: int) -> list[SubjectRecord]:
    """Subjects with fixed potential outcomes.

    ``lambda_spec`` rows are ``(harmed, helped, never, always)`` proportions
    per stratum. ``pi`` is the treated probability or an ``(pi1, pi0)`` pair.
    """
    lam = np.asarray(lambda_spec, dtype=float)
    if lam.ndim != 2 or lam.shape[1] != 4 or lam.shape[0] != len(rho):
        raise InfeasibleParametersError("lambda_spec must have one row of four proportions per stratum")
    if np.any(lam < 0) or np.any(np.abs(lam.sum(axis=1) - 1) > 1e-9):
        raise InfeasibleParametersError("each lambda row must be non-negative and sum to 1")
    pi1 = float(pi if np.isscalar(pi) else pi[0])
    rng = np.random.default_rng(seed)
    arrays = (_cumulative(np.asarray(rho, dtype=float)), pi1, _cumulative(lam))
    return _to_records(*_draw_individual_trial(arrays, n, rng))


# -- replication engine ------------------------------------------------------

@dataclass
class ReplicateBatch:
    """Raw per-replicate output of the engine.

    ``stats`` has one row per replicate with columns indexed by the kernel
    constants; ``truth_mh`` is the replicate's MH-weighted true effect and
    ``counts`` its ``(K, 4)`` table.
    """

    stats: np.ndarray
    truth_mh: np.ndarray
    counts: np.ndarray
    boot_var_mh: Optional[np.ndarray] = None
    boot_var_ate: Optional[np.ndarray] = None


def _replicate(truth_arrays, draw, n: int, K: int, delta: np.ndarray, run_seed: int, r: int, bootstrap: int):
    rng = np.random.default_rng(np.random.SeedSequence([run_seed, r]))
    z, a, y = draw(truth_arrays, n, rng)
    codes = 4 * z + (1 - y) * 2 + (1 - a)
    counts = np.bincount(codes, minlength=4 * K).reshape(K, 4)
    bvar = (math.nan, math.nan)
    if bootstrap:
        idx = rng.integers(0, n, size=(bootstrap, n))
        est, tr = kernels.bootstrap(codes, K, idx, kernels.EST_MH, delta)
        ok = ~np.isnan(est)
        if ok.sum() >= 2:
            bvar = (float(np.var(est[ok] - tr[ok], ddof=1)), float(np.var(est[ok], ddof=1)))
    return counts, bvar


def simulate_replicates(truth: TrueParameters, n: int, runs: int, run_seed: int, *,
                        workers: int = 1, bootstrap: int = 0,
                        lambda_spec: Optional[np.ndarray] = None, chunk: int = 50) -> ReplicateBatch:
    """Draw ``runs`` trials and evaluate every statistic on each.

    With ``lambda_spec`` the trials come from the potential-outcome
    generator instead of per-arm Bernoulli draws.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    K = truth.K
    delta = np.array(truth.delta)
    if lambda_spec is None:
        arrays, draw = _truth_arrays(truth), _draw_binomial_trial
    else:
        arrays = (_cumulative(np.array(truth.rho)), truth.pi1, _cumulative(np.asarray(lambda_spec, dtype=float)))
        draw = _draw_individual_trial

    counts = np.empty((runs, K, 4), dtype=np.int64)
    bvar = np.full((runs, 2), np.nan)

    def work(lo: int, hi: int):
        for r in range(lo, hi):
            counts[r], bvar[r] = _replicate(arrays, draw, n, K, delta, run_seed, r, bootstrap)
        return kernels.summarize(counts[lo:hi])

    bounds = [(lo, min(lo + chunk, runs)) for lo in range(0, runs, chunk)]
    if workers <= 1:
        parts = [work(lo, hi) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda b: work(*b), bounds))
    stats = np.concatenate(parts, axis=0)

    c = counts.astype(float)
    n1 = c[..., 0] + c[..., 2]
    n0 = c[..., 1] + c[..., 3]
    tot = n1 + n0
    w = np.divide(n1 * n0, tot, out=np.zeros_like(tot), where=tot > 0)
    sw = w.sum(axis=1)
    truth_mh = np.full(runs, np.nan)
    np.divide((w * delta).sum(axis=1), sw, out=truth_mh, where=sw > 0)
    if bootstrap:
        return ReplicateBatch(stats, truth_mh, counts, bvar[:, 0], bvar[:, 1])
    return ReplicateBatch(stats, truth_mh, counts)


@dataclass(frozen=True)
class CellSummary:
    estimator: str
    method: str
    estimand: str
    bias: Optional[float]
    sd: Optional[float]
    mean_se: Optional[float]
    cp: Optional[float]
    power: Optional[float]
    valid_runs: int
    failures: int


@dataclass(frozen=True)
class ScenarioSummary:
    config: ScenarioConfig
    runs: int
    truth_ate: float
    truth_mh_avg: float
    cells: tuple[CellSummary, ...]
    mh_test_rejection: Optional[float]
    mean_nu2: Optional[float] = None

    @property
    def failures(self) -> int:
        return sum(c.failures for c in self.cells)

    def cell(self, method: str, estimand: str, estimator: str = "MH") -> CellSummary:
        for c in self.cells:
            if (c.estimator, c.method, c.estimand) == (estimator, method, estimand):
                return c
        raise KeyError((estimator, method, estimand))

    def to_dict(self) -> dict:
        return {
            "scenario": self.config.label,
            "config": self.config.to_dict(),
            "runs": self.runs,
            "truth_ate": self.truth_ate,
            "truth_mh_avg": self.truth_mh_avg,
            "mh_test_rejection": self.mh_test_rejection,
            "mean_nu2": self.mean_nu2,
            "cells": [asdict(c) for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSummary":
        return cls(
            config=ScenarioConfig.from_dict(d["config"]),
            runs=d["runs"],
            truth_ate=d["truth_ate"],
            truth_mh_avg=d["truth_mh_avg"],
            cells=tuple(CellSummary(**c) for c in d["cells"]),
            mh_test_rejection=d["mh_test_rejection"],
            mean_nu2=d.get("mean_nu2"),
        )


def _cell_variance(batch: ReplicateBatch, method: str, estimand: str) -> np.ndarray:
    s = batch.stats
    if method == "GR":
        return s[:, kernels.GR]
    if method == "SATO":
        return s[:, kernels.SATO]
    if method == "MGR_MH":
        return s[:, kernels.MGR_MH]
    if method == "MGR_ATE":
        return s[:, kernels.MGR_MH] + np.maximum(s[:, kernels.NU2], 0.0)
    if method == "PS":
        return s[:, kernels.PS_SIGMA2] + np.maximum(s[:, kernels.PS_NU2], 0.0)
    if method == "UNADJUSTED":
        return s[:, kernels.UNADJ_VAR]
    if method == "BOOTSTRAP":
        return batch.boot_var_mh if estimand == DELTA_MH else batch.boot_var_ate
    raise ValueError(f"unknown variance method {method!r}")


def _opt(x) -> Optional[float]:
    return None if x is None or not math.isfinite(x) else float(x)


def summarize_cell(estimates: np.ndarray, variances: np.ndarray, truth: np.ndarray,
                   estimator: str, method: str, estimand: str, level: float = 0.95) -> CellSummary:
    """Bias, SD, mean SE, coverage and power over valid replicates.

    A replicate is invalid when its estimate or variance is undefined or
    the variance is negative. For the run-varying estimand the SD is that
    of ``estimate - truth``.
    """
    z = normal_quantile((1 + level) / 2)
    ok = np.isfinite(estimates) & np.isfinite(variances) & np.isfinite(truth) & (variances >= 0)
    m = int(ok.sum())
    if m == 0:
        return CellSummary(estimator, method, estimand, None, None, None, None, None, 0, len(estimates))
    est = estimates[ok]
    se = np.sqrt(variances[ok])
    tr = truth[ok]
    dev = est - tr
    spread = dev if estimand == DELTA_MH else est
    lo = np.maximum(-1.0, est - z * se)
    hi = np.minimum(1.0, est + z * se)
    cover = (lo <= tr) & (tr <= hi)
    reject = (lo > 0) | (hi < 0)
    return CellSummary(
        estimator, method, estimand,
        bias=float(dev.mean()),
        sd=float(spread.std(ddof=1)) if m > 1 else None,
        mean_se=float(se.mean()),
        cp=float(cover.mean()),
        power=float(reject.mean()),
        valid_runs=m,
        failures=len(estimates) - m,
    )


def summarize_batch(config: ScenarioConfig, truth: TrueParameters, batch: ReplicateBatch,
                    methods: Iterable[str] = DEFAULT_METHODS, level: float = 0.95) -> ScenarioSummary:
    methods = set(methods)
    runs = batch.stats.shape[0]
    ate = np.full(runs, truth.delta_ate)
    est_col = {"MH": kernels.MH, "PS": kernels.PS, "UNADJUSTED": kernels.UNADJ}
    cells = []
    for estimator, method, estimand in CELLS:
        if method not in methods:
            continue
        if method == "BOOTSTRAP" and batch.boot_var_mh is None:
            continue
        tr = batch.truth_mh if estimand == DELTA_MH else ate
        cells.append(summarize_cell(batch.stats[:, est_col[estimator]], _cell_variance(batch, method, estimand),
                                    tr, estimator, method, estimand, level))
    chi2 = batch.stats[:, kernels.MH_CHI2]
    valid = np.isfinite(chi2)
    crit = normal_quantile(1 - (1 - level) / 2) ** 2
    rejection = float((chi2[valid] > crit).mean()) if valid.any() else None
    nu2 = batch.stats[:, kernels.NU2]
    nu2 = nu2[np.isfinite(nu2)]
    finite_truth = batch.truth_mh[np.isfinite(batch.truth_mh)]
    return ScenarioSummary(
        config=config,
        runs=runs,
        truth_ate=truth.delta_ate,
        truth_mh_avg=float(finite_truth.mean()) if finite_truth.size else math.nan,
        cells=tuple(cells),
        mh_test_rejection=rejection,
        mean_nu2=float(nu2.mean()) if nu2.size else None,
    )


def run_scenario(config: ScenarioConfig, runs: int = 1000, methods: Iterable[str] = DEFAULT_METHODS,
                 workers: int = 1, bootstrap: int = 0, level: float = 0.95) -> ScenarioSummary:
    """Simulate ``runs`` trials of a scenario and summarise each requested cell.

    Passing ``bootstrap=B`` adds the bootstrap cells with ``B`` resamples per
    replicate.
    """
    truth = build_truth(config)
    lam = lambda_table(truth, config.harm_fraction) if config.effect == INDIVIDUAL_RD else None
    methods = tuple(methods)
    if bootstrap:
        methods += ("BOOTSTRAP",)
    batch = simulate_replicates(truth, config.n, runs, config.run_seed, workers=workers,
                                bootstrap=bootstrap, lambda_spec=lam)
    return summarize_batch(config, truth, batch, methods, level)


# -- factor grid ----------------------------------------------------------------

def parse_factors(factors: str | Iterable[str], generation_seed: int = 2024, run_seed: int = 1) -> list[ScenarioConfig]:
    """Expand factor tokens such as ``"1a,2a,3b,4c"`` into scenario configs.

    Tokens: ``1a-1c`` (n), ``2a-2b`` (allocation), ``3a-3c`` (regime),
    ``4a-4c`` (effect), ``extreme`` (0/1 outcome design in place of factor 4)
    and ``ird`` (potential-outcome generation of the factor-4 effects).
    A factor left unspecified takes all of its levels.
    """
    tokens = [t.strip().lower() for t in (factors.split(",") if isinstance(factors, str) else factors)]
    tokens = [t for t in tokens if t]
    groups: dict[str, list[str]] = {"1": [], "2": [], "3": [], "4": []}
    extreme = ird = False
    for t in tokens:
        if t == "extreme":
            extreme = True
        elif t == "ird":
            ird = True
        elif len(t) == 2 and t[0] in groups and t in {**SAMPLE_SIZES, **ALLOCATIONS, **REGIMES, **EFFECTS}:
            if t not in groups[t[0]]:
                groups[t[0]].append(t)
        else:
            raise InvalidFactorError(f"unknown factor level {t!r}")
    if extreme and (groups["4"] or ird):
        raise InvalidFactorError("'extreme' replaces factor 4 and cannot be combined with 4a-4c or 'ird'")
    levels = {
        "1": groups["1"] or list(SAMPLE_SIZES),
        "2": groups["2"] or list(ALLOCATIONS),
        "3": groups["3"] or list(REGIMES),
        "4": ["extreme"] if extreme else (groups["4"] or list(EFFECTS)),
    }
    out = []
    for f1, f2, f3, f4 in itertools.product(levels["1"], levels["2"], levels["3"], levels["4"]):
        if f4 == "extreme":
            effect, base = EXTREME, VARYING_4C
        elif ird:
            effect, base = INDIVIDUAL_RD, EFFECTS[f4]
        else:
            effect, base = EFFECTS[f4], VARYING_4C
        label = "-".join([f1, f2, f3, f4] + (["ird"] if ird else []))
        out.append(ScenarioConfig(SAMPLE_SIZES[f1], ALLOCATIONS[f2], REGIMES[f3], effect,
                                  generation_seed, run_seed, base_effect=base, label=label))
    return out


# -- serialisation ----------------------------------------------------------------

def summaries_to_json(summaries: Sequence[ScenarioSummary]) -> str:
    return json.dumps([s.to_dict() for s in summaries], indent=2) + "\n"


def summaries_from_json(text: str) -> list[ScenarioSummary]:
    return [ScenarioSummary.from_dict(d) for d in json.loads(text)]


def display(value: Optional[float], digits: int = 1, scale: float = 100.0) -> str:
    """``value * scale`` rounded half-to-even, or ``NA``."""
    if value is None or not math.isfinite(value):
        return "NA"
    q = Decimal(1).scaleb(-digits)
    return str((Decimal(repr(value)) * Decimal(repr(scale))).quantize(q, rounding=ROUND_HALF_EVEN))


CSV_HEADER = ["scenario", "estimand", "estimator", "method", "truth", "bias", "sd", "se", "cp", "power", "failures"]


def summaries_to_csv(summaries: Sequence[ScenarioSummary]) -> str:
    """Table-style CSV: entries times 100 with one decimal."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in summaries:
        for c in s.cells:
            truth = s.truth_mh_avg if c.estimand == DELTA_MH else s.truth_ate
            w.writerow([s.config.label, c.estimand, c.estimator, c.method, display(truth),
                        display(c.bias), display(c.sd), display(c.mean_se),
                        display(c.cp), display(c.power), c.failures])
    return buf.getvalue()
