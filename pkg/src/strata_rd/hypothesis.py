"""Tests of no treatment effect: the MH chi-square test and Wald tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ZeroTotalVarianceError
from .estimators import mh_estimate
from .tables import StratifiedDataset
from .variance import DELTA_ATE, DELTA_MH, var_mgr_ate, var_mgr_mh

MH_CHI2 = "MH_CHI2"
WALD_MH = "WALD_MH"
WALD_ATE = "WALD_ATE"

SHARP_NULL = "SHARP_NULL"
DELTA_MH_ZERO = "DELTA_MH_ZERO"
DELTA_ATE_ZERO = "DELTA_ATE_ZERO"

# warning codes
SINGLETON_STRATA = "SINGLETON_STRATA"
ZERO_VARIANCE_DEVIATION = "ZERO_VARIANCE_DEVIATION"
SMALL_DEVIATIONS = "SMALL_DEVIATIONS"

SMALL_DEVIATION_LIMIT = 5.0


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    df: int
    method: str
    null_hypothesis: str
    warnings: tuple[str, ...] = ()


def chi2_1_sf(x: float) -> float:
    """Upper tail P(X >= x) of a chi-square with one degree of freedom."""
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return math.erfc(math.sqrt(x / 2.0))


def mh_test(dataset: StratifiedDataset) -> TestResult:
    """MH chi-square test of the sharp null using hypergeometric moments.

    Strata of size one are skipped. A warning is attached when any stratum
    has ``|n11 - E| <= 5``, the usual threshold below which the chi-square
    approximation is considered doubtful.
    """
    dev = 0.0
    var = 0.0
    warnings = []
    singletons = zero_var_dev = small = False
    for s in dataset.strata:
        N = s.total
        if N < 2:
            singletons = True
            continue
        e = s.n1_ * s.n_1 / N
        v = s.n1_ * s.n0_ * s.n_1 * s.n_0 / (N * N * (N - 1))
        d = s.n11 - e
        dev += d
        var += v
        if v == 0 and d != 0:
            zero_var_dev = True
        if abs(d) <= SMALL_DEVIATION_LIMIT:
            small = True
    if var <= 0:
        raise ZeroTotalVarianceError("hypergeometric variance is zero in every stratum")
    if singletons:
        warnings.append(SINGLETON_STRATA)
    if zero_var_dev:
        warnings.append(ZERO_VARIANCE_DEVIATION)
    if small:
        warnings.append(SMALL_DEVIATIONS)
    stat = dev * dev / var
    return TestResult(stat, chi2_1_sf(stat), 1, MH_CHI2, SHARP_NULL, tuple(warnings))


def wald_test(dataset: StratifiedDataset, estimand: str = DELTA_MH, null_value: float = 0.0) -> TestResult:
    """Wald chi-square test of ``estimand == null_value`` for the MH estimator.

    Uses the mGR variance appropriate for the estimand. A zero variance with
    a nonzero deviation gives an infinite statistic and p-value 0.
    """
    est = mh_estimate(dataset).value
    if estimand == DELTA_MH:
        v = var_mgr_mh(dataset)
        method, null = WALD_MH, DELTA_MH_ZERO
    elif estimand == DELTA_ATE:
        v = var_mgr_ate(dataset)
        method, null = WALD_ATE, DELTA_ATE_ZERO
    else:
        raise ValueError(f"unknown estimand {estimand!r}")
    diff = est - null_value
    var = v.reported_variance
    if diff == 0:
        stat = 0.0
    elif var <= 0:
        stat = math.inf
    else:
        stat = diff * diff / var
    return TestResult(stat, chi2_1_sf(stat), 1, method, null, v.warnings)
