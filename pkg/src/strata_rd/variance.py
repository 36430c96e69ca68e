"""Variance estimators for the MH, post-stratified and unadjusted risk
differences, theoretical variances for known parameters, and Wald intervals.

Estimand tags: ``DELTA_MH`` is the MH-weighted average of stratum effects
(conditional on the realised margins); ``DELTA_ATE`` is the population
average treatment effect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    AllStrataDegenerateError,
    DimensionMismatchError,
    EmptyArmError,
    EmptyInputError,
    InfeasibleParametersError,
    StrataError,
    TooFewValidReplicatesError,
)
from .estimators import PointEstimate, mh_estimate, ps_estimate
from .tables import StratifiedDataset, StratumTable, SubjectRecord

GR = "GR"
SATO = "SATO"
MGR_MH = "MGR_MH"
MGR_ATE = "MGR_ATE"
PS = "PS"
UNADJUSTED = "UNADJUSTED"
BOOTSTRAP = "BOOTSTRAP"

DELTA_MH = "DELTA_MH"
DELTA_ATE = "DELTA_ATE"

SATO_HALF = "SATO_HALF"
GR_LAMBDA = "GR_LAMBDA"

NEGATIVE_VARIANCE = "NEGATIVE_VARIANCE"


class NegativeVarianceError(StrataError):
    code = NEGATIVE_VARIANCE


@dataclass(frozen=True)
class VarianceEstimate:
    """A variance estimate plus enough provenance to interpret it.

    ``variance`` is always the raw value. For the two-part estimators
    (``MGR_ATE``, ``PS``) ``components`` holds ``(sigma2, nu2)`` and
    ``variance == sigma2 + nu2``; the heterogeneity part may be negative
    in small samples, so :attr:`reported_variance` floors the total at
    ``sigma2``.
    """

    variance: float
    method: str
    estimand: str
    components: Optional[tuple[float, float]] = None
    warnings: tuple[str, ...] = ()
    failed_replicates: int = 0

    @property
    def reported_variance(self) -> float:
        if self.components is not None:
            return max(self.variance, self.components[0])
        return self.variance

    @property
    def se(self) -> float:
        """Standard error, NaN when the raw estimate is negative."""
        v = self.reported_variance
        return math.sqrt(v) if v >= 0 else math.nan


@dataclass(frozen=True)
class TrueParameters:
    """Data-generating parameters for a stratified trial.

    ``delta`` and ``delta_ate`` are derived from the other fields.
    """

    rho: tuple[float, ...]
    pi1: float
    p1: tuple[float, ...]
    p0: tuple[float, ...]
    delta: tuple[float, ...] = field(init=False)
    delta_ate: float = field(init=False)

    def __post_init__(self):
        rho = tuple(float(x) for x in self.rho)
        p1 = tuple(float(x) for x in self.p1)
        p0 = tuple(float(x) for x in self.p0)
        if not (len(rho) == len(p1) == len(p0)) or not rho:
            raise DimensionMismatchError("rho, p1 and p0 must have the same non-zero length")
        if abs(math.fsum(rho) - 1.0) > 1e-12 or min(rho) < 0:
            raise InfeasibleParametersError(f"stratum probabilities must be >= 0 and sum to 1, got {math.fsum(rho)}")
        if not 0 < self.pi1 < 1:
            raise InfeasibleParametersError(f"allocation probability {self.pi1} outside (0, 1)")
        for a, b in zip(p1, p0):
            if not (0 <= a <= 1 and 0 <= b <= 1):
                raise InfeasibleParametersError(f"response probability outside [0, 1]: p1={a}, p0={b}")
        delta = tuple(a - b for a, b in zip(p1, p0))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "pi1", float(self.pi1))
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "delta_ate", math.fsum(r * d for r, d in zip(rho, delta)))

    @property
    def K(self) -> int:
        return len(self.rho)

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    def delta_mh(self, margins: StratifiedDataset) -> float:
        """MH-weighted average of the true stratum effects under ``margins``."""
        _check_dims(margins, self)
        num = den = 0.0
        for s, d in zip(margins.strata, self.delta):
            if s.included:
                w = s.n_1 * s.n_0 / s.total
                num += w * d
                den += w
        if den == 0:
            raise AllStrataDegenerateError("no stratum has subjects in both arms")
        return num / den


def _included(dataset: StratifiedDataset) -> list[StratumTable]:
    strata = [s for s in dataset.strata if s.included]
    if not strata:
        raise AllStrataDegenerateError("no stratum has subjects in both arms")
    return strata


def _weight(s: StratumTable) -> float:
    return s.n_1 * s.n_0 / s.total


def _gr_term(s: StratumTable) -> float:
    n1, n0 = s.n_1, s.n_0
    return (s.n11 * s.n01 * n0**3 + s.n10 * s.n00 * n1**3) / (n1 * n0 * s.total**2)


def var_gr(dataset: StratifiedDataset) -> VarianceEstimate:
    """Greenland-Robins plug-in variance of the MH estimator."""
    strata = _included(dataset)
    sw = sum(_weight(s) for s in strata)
    return VarianceEstimate(sum(_gr_term(s) for s in strata) / sw**2, GR, DELTA_MH)


def _sato_pq(s: StratumTable) -> tuple[float, float]:
    n1, n0, N = s.n_1, s.n_0, s.total
    P = (n1**2 * s.n10 - n0**2 * s.n11 + 0.5 * n1 * n0 * (n0 - n1)) / N**2
    Q = (s.n11 * (n0 - s.n10) + s.n10 * (n1 - s.n11)) / (2 * N)
    return P, Q


def _neg_warning(value: float) -> tuple[str, ...]:
    return (NEGATIVE_VARIANCE,) if value < 0 else ()


def var_sato(dataset: StratifiedDataset) -> VarianceEstimate:
    """Sato's variance, ``(d * sum P_k + sum Q_k) / (sum w_k)^2``.

    Can be negative on extreme tables; the value is returned unclamped with
    a ``NEGATIVE_VARIANCE`` warning.
    """
    strata = _included(dataset)
    d = mh_estimate(dataset).value
    sw = sum(_weight(s) for s in strata)
    sP = sQ = 0.0
    for s in strata:
        P, Q = _sato_pq(s)
        sP += P
        sQ += Q
    v = (d * sP + sQ) / sw**2
    return VarianceEstimate(v, SATO, DELTA_MH, warnings=_neg_warning(v))


def _a_b_hat(s: StratumTable, d: float) -> tuple[float, float]:
    n1, n0, N = s.n_1, s.n_0, s.total
    a = (d * (n0**2 * s.n01 - n1**2 * s.n00) + n0 * s.n10 * s.n01 + n1 * s.n11 * s.n00) / N**2
    b = (d * (n1**2 * s.n10 - n0**2 * s.n11) + n0 * s.n11 * s.n00 + n1 * s.n10 * s.n01) / N**2
    return a, b


def var_common_form(dataset: StratifiedDataset, lambda_rule: str) -> VarianceEstimate:
    """``sum_k [l_k A_k + (1 - l_k) B_k] / (sum w_k)^2``.

    ``SATO_HALF`` uses ``l_k = 1/2`` and reproduces :func:`var_sato`;
    ``GR_LAMBDA`` uses the stratum-specific weight that cancels the
    ``d``-dependent part and reproduces :func:`var_gr`. That weight is
    undefined for balanced strata (``n_1 == n_0``), which contribute the
    direct GR term instead.
    """
    if lambda_rule not in (SATO_HALF, GR_LAMBDA):
        raise ValueError(f"unknown lambda rule {lambda_rule!r}")
    strata = _included(dataset)
    d = mh_estimate(dataset).value
    sw = sum(_weight(s) for s in strata)
    total = 0.0
    for s in strata:
        a, b = _a_b_hat(s, d)
        if lambda_rule == SATO_HALF:
            lam = 0.5
        elif s.n_1 != s.n_0:
            lam = (s.n_0 * s.n11 / s.n_1 - s.n_1 * s.n10 / s.n_0) / (s.n_0 - s.n_1)
        else:
            total += _gr_term(s)
            continue
        total += lam * a + (1 - lam) * b
    v = total / sw**2
    method = SATO if lambda_rule == SATO_HALF else GR
    return VarianceEstimate(v, method, DELTA_MH, warnings=_neg_warning(v))


def _corrected(count_prod: int, n: int) -> float:
    # n11 * n01 / n^3, inflated by n/(n-1) when n > 1
    base = count_prod / n**3
    return base * n / (n - 1) if n > 1 else base


def var_mgr_mh(dataset: StratifiedDataset) -> VarianceEstimate:
    """Modified GR variance: GR with unbiased per-arm binomial variances."""
    strata = _included(dataset)
    sw = sum(_weight(s) for s in strata)
    total = sum(
        _weight(s) ** 2 * (_corrected(s.n11 * s.n01, s.n_1) + _corrected(s.n10 * s.n00, s.n_0))
        for s in strata
    )
    return VarianceEstimate(total / sw**2, MGR_MH, DELTA_MH)


def _sample_var(successes: int, n: int) -> float:
    """Sample variance of ``n`` binary outcomes; 0 when ``n <= 1``."""
    if n <= 1:
        return 0.0
    p = successes / n
    return n * p * (1 - p) / (n - 1)


def _delta_sq_unbiased(s: StratumTable) -> float:
    p1 = s.n11 / s.n_1
    p0 = s.n10 / s.n_0
    return (p1**2 - _sample_var(s.n11, s.n_1) / s.n_1
            + p0**2 - _sample_var(s.n10, s.n_0) / s.n_0
            - 2 * p1 * p0)


def nu2_hat(dataset: StratifiedDataset) -> float:
    """Estimate of the between-stratum heterogeneity variance of the MH
    estimator around the ATE. May be negative in small samples."""
    strata = _included(dataset)
    n = dataset.n
    d = mh_estimate(dataset).value
    sw = sum(_weight(s) for s in strata)
    pi1 = sum(s.n_1 for s in dataset.strata) / n
    pi0 = sum(s.n_0 for s in dataset.strata) / n
    pp = pi1 * pi0
    total = 0.0
    for s in strata:
        N = s.total
        dk = s.n11 / s.n_1 - s.n10 / s.n_0
        d2 = _delta_sq_unbiased(s)
        total += (d2 - 2 * dk * d + d**2) * pp * (N - 1) / N * (N - 1 - (4 * N - 6) * pp) / n
        total += pp**2 * (N / n) * (d2 - d**2)
    return (total / n) / (sw / n) ** 2


def var_mgr_ate(dataset: StratifiedDataset) -> VarianceEstimate:
    sigma2 = var_mgr_mh(dataset).variance
    nu2 = nu2_hat(dataset)
    return VarianceEstimate(sigma2 + nu2, MGR_ATE, DELTA_ATE, components=(sigma2, nu2))


def var_ps(dataset: StratifiedDataset) -> VarianceEstimate:
    """Robust variance of the post-stratification estimator."""
    strata = _included(dataset)
    n = dataset.n
    d_ps = ps_estimate(dataset).value
    sigma2 = 0.0
    acc = 0.0
    for s in strata:
        share = s.total / n
        sigma2 += share**2 * (_sample_var(s.n11, s.n_1) / s.n_1 + _sample_var(s.n10, s.n_0) / s.n_0)
        acc += share * _delta_sq_unbiased(s)
    nu2 = (acc - d_ps**2) / n
    return VarianceEstimate(sigma2 + nu2, PS, DELTA_ATE, components=(sigma2, nu2))


def var_unadjusted(dataset: StratifiedDataset) -> VarianceEstimate:
    """Two-sample variance of the pooled difference in proportions."""
    t1 = sum(s.n_1 for s in dataset.strata)
    t0 = sum(s.n_0 for s in dataset.strata)
    if t1 == 0 or t0 == 0:
        raise EmptyArmError("a pooled arm has no subjects")
    r1 = sum(s.n11 for s in dataset.strata)
    r0 = sum(s.n10 for s in dataset.strata)
    v = _sample_var(r1, t1) / t1 + _sample_var(r0, t0) / t0
    return VarianceEstimate(v, UNADJUSTED, DELTA_ATE)


def encode_records(records: Sequence[SubjectRecord]) -> tuple[np.ndarray, list[str]]:
    """Cell codes ``stratum * 4 + cell`` for the bootstrap kernel."""
    labels: dict[str, int] = {}
    codes = np.empty(len(records), dtype=np.int64)
    for i, (stratum, arm, outcome) in enumerate(records):
        k = labels.setdefault(str(stratum), len(labels))
        codes[i] = 4 * k + (1 - outcome) * 2 + (1 - arm)
    return codes, list(labels)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of a run seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def resample_indices(n: int, B: int, seed: int) -> np.ndarray:
    """``(B, n)`` subject indices; row ``b`` depends only on ``(seed, b)``."""
    idx = np.empty((B, n), dtype=np.int64)
    for b in range(B):
        idx[b] = replicate_rng(seed, b).integers(0, n, size=n)
    return idx


def var_bootstrap(records: Sequence[SubjectRecord], estimator: str = "MH", B: int = 200,
                  seed: int = 0) -> VarianceEstimate:
    """Nonparametric bootstrap variance, resampling subjects with replacement.

    Replicates in which the estimator is undefined are skipped and counted
    in ``failed_replicates``.
    """
    if B < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    if not records:
        raise EmptyInputError("no subject records")
    if estimator not in kernels.ESTIMATOR_CODES:
        raise ValueError(f"unknown estimator {estimator!r}")
    codes, labels = encode_records(records)
    idx = resample_indices(len(codes), B, seed)
    est, _ = kernels.bootstrap(codes, len(labels), idx, kernels.ESTIMATOR_CODES[estimator])
    good = est[~np.isnan(est)]
    if good.size < 2:
        raise TooFewValidReplicatesError(f"only {good.size} of {B} replicates produced an estimate")
    return VarianceEstimate(float(np.var(good, ddof=1)), BOOTSTRAP, DELTA_ATE,
                            failed_replicates=int(B - good.size))


# -- theoretical variances under known parameters ------------------------

def _check_dims(margins: StratifiedDataset, truth: TrueParameters):
    if margins.K != truth.K:
        raise DimensionMismatchError(f"margins have {margins.K} strata, parameters have {truth.K}")


def theoretical_sigma2(margins: StratifiedDataset, truth: TrueParameters) -> float:
    """Conditional variance of the MH estimator given the arm margins."""
    _check_dims(margins, truth)
    num = den = 0.0
    for s, p1, p0 in zip(margins.strata, truth.p1, truth.p0):
        if not s.included:
            continue
        w = _weight(s)
        num += w**2 * (p1 * (1 - p1) / s.n_1 + p0 * (1 - p0) / s.n_0)
        den += w
    if den == 0:
        raise AllStrataDegenerateError("no stratum has subjects in both arms")
    return num / den**2


def theoretical_nu2(margins: StratifiedDataset, truth: TrueParameters) -> float:
    """Heterogeneity variance of the MH estimator around the ATE.

    Strata realised empty contribute only their probability-weighted term.
    """
    _check_dims(margins, truth)
    n = margins.n
    pp = truth.pi1 * truth.pi0
    ate = truth.delta_ate
    total = 0.0
    sw = 0.0
    for s, rho, d in zip(margins.strata, truth.rho, truth.delta):
        N = s.total
        if N > 0:
            total += (d - ate) ** 2 * pp * (N - 1) / N * (N - 1 - (4 * N - 6) * pp) / n
        total += pp**2 * rho * (d**2 - ate**2)
        if s.included:
            sw += _weight(s)
    if sw == 0:
        raise AllStrataDegenerateError("no stratum has subjects in both arms")
    return (total / n) / (sw / n) ** 2


# -- intervals --------------------------------------------------------------

def normal_quantile(p: float) -> float:
    return NormalDist().inv_cdf(p)


def confidence_interval(estimate: PointEstimate | float, variance: VarianceEstimate | float,
                        level: float = 0.95) -> tuple[float, float]:
    """Wald interval ``est +/- z * se``, clipped to [-1, 1]."""
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    value = estimate.value if isinstance(estimate, PointEstimate) else float(estimate)
    if isinstance(variance, VarianceEstimate):
        v = variance.reported_variance
    else:
        v = float(variance)
    if v < 0:
        raise NegativeVarianceError(f"variance {v} is negative")
    half = normal_quantile((1 + level) / 2) * math.sqrt(v)
    return max(-1.0, value - half), min(1.0, value + half)
