"""Point estimators of the stratified risk difference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import AllStrataDegenerateError, EmptyArmError, SameArmError
from .tables import MultiArmStratumTable, StratifiedDataset

MH = "MH"
PS = "PS"
UNADJUSTED = "UNADJUSTED"
MH_MULTIARM = "MH_MULTIARM"


@dataclass(frozen=True)
class StratumEffect:
    """Per-stratum quantities; ``delta_hat`` and the proportions are ``None``
    when the stratum lacks an arm."""

    label: str
    delta_hat: Optional[float]
    p1_hat: Optional[float]
    p0_hat: Optional[float]
    weight_mh: float
    weight_ps: float
    included: bool


@dataclass(frozen=True)
class PointEstimate:
    value: float
    estimator: str
    strata_used: int
    strata_dropped: int


def stratum_effects(dataset: StratifiedDataset) -> list[StratumEffect]:
    n = dataset.n
    out = []
    for s in dataset.strata:
        if s.included:
            p1 = s.n11 / s.n_1
            p0 = s.n10 / s.n_0
            out.append(StratumEffect(s.label, p1 - p0, p1, p0, s.n_1 * s.n_0 / s.total, s.total / n, True))
        else:
            out.append(StratumEffect(
                s.label, None,
                s.n11 / s.n_1 if s.n_1 else None,
                s.n10 / s.n_0 if s.n_0 else None,
                0.0, s.total / n, False))
    return out


def mh_weight_sum(dataset: StratifiedDataset) -> float:
    return sum(s.n_1 * s.n_0 / s.total for s in dataset.strata if s.included)


def mh_estimate(dataset: StratifiedDataset) -> PointEstimate:
    """Mantel-Haenszel risk difference, sum(w_k d_k) / sum(w_k).

    Uses the cross-product form ``(n_0 n11 - n_1 n10) / n`` per stratum,
    which is algebraically the weighted stratum difference.
    """
    num = 0.0
    den = 0.0
    used = 0
    for s in dataset.strata:
        if not s.included:
            continue
        used += 1
        num += (s.n_0 * s.n11 - s.n_1 * s.n10) / s.total
        den += s.n_1 * s.n_0 / s.total
    if den == 0:
        raise AllStrataDegenerateError("no stratum has subjects in both arms")
    return PointEstimate(num / den, MH, used, dataset.K - used)


def ps_estimate(dataset: StratifiedDataset) -> PointEstimate:
    """Post-stratification estimator: stratum-size weighted differences,
    dropping strata with an empty arm (weights are *not* renormalised)."""
    n = dataset.n
    value = 0.0
    used = 0
    for s in dataset.strata:
        if s.included:
            used += 1
            value += s.total / n * (s.n11 / s.n_1 - s.n10 / s.n_0)
    if used == 0:
        raise AllStrataDegenerateError("no stratum has subjects in both arms")
    return PointEstimate(value, PS, used, dataset.K - used)


def unadjusted_estimate(dataset: StratifiedDataset) -> PointEstimate:
    r1 = sum(s.n11 for s in dataset.strata)
    t1 = sum(s.n_1 for s in dataset.strata)
    r0 = sum(s.n10 for s in dataset.strata)
    t0 = sum(s.n_0 for s in dataset.strata)
    if t1 == 0 or t0 == 0:
        raise EmptyArmError("a pooled arm has no subjects")
    return PointEstimate(r1 / t1 - r0 / t0, UNADJUSTED, dataset.K, 0)


def mh_estimate_pair(tables: Sequence[MultiArmStratumTable], j: int, l: int) -> PointEstimate:
    """MH risk difference of arm ``j`` against arm ``l`` in a 2xJ design."""
    if j == l:
        raise SameArmError(f"arms to compare must differ, got {j} twice")
    J = tables[0].J
    if any(t.J != J for t in tables):
        raise ValueError("all strata must have the same number of arms")
    if not (0 <= j < J and 0 <= l < J):
        raise IndexError(f"arm index out of range for J={J}")
    num = 0.0
    den = 0.0
    used = 0
    for t in tables:
        nj, nl = t.totals[j], t.totals[l]
        if nj == 0 or nl == 0:
            continue
        used += 1
        num += (t.responders[j] * nl - t.responders[l] * nj) / t.total
        den += nj * nl / t.total
    if den == 0:
        raise AllStrataDegenerateError(f"no stratum has subjects in both arms {j} and {l}")
    return PointEstimate(num / den, MH_MULTIARM, used, len(tables) - used)
