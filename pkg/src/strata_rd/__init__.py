"""Mantel-Haenszel and post-stratified risk differences for stratified 2x2
tables, with variance estimators that stay valid when strata are sparse or
effects vary across strata."""

from .errors import StrataError
from .estimators import (
    PointEstimate, StratumEffect, mh_estimate, mh_estimate_pair, mh_weight_sum,
    ps_estimate, stratum_effects, unadjusted_estimate,
)
from .hypothesis import TestResult, mh_test, wald_test
from .tables import (
    MultiArmStratumTable, StratifiedDataset, StratumTable, SubjectRecord,
    aggregate_multiarm, aggregate_subjects, calgb_dataset, calgb_records,
    expand_records, read_csv, validate,
)
from .variance import (
    TrueParameters, VarianceEstimate, confidence_interval, theoretical_nu2,
    theoretical_sigma2, var_bootstrap, var_common_form, var_gr, var_mgr_ate,
    var_mgr_mh, var_ps, var_sato, var_unadjusted,
)

__version__ = "0.1.0"

__all__ = [
    "StrataError", "PointEstimate", "StratumEffect", "mh_estimate", "mh_estimate_pair",
    "mh_weight_sum", "ps_estimate", "stratum_effects", "unadjusted_estimate",
    "TestResult", "mh_test", "wald_test",
    "MultiArmStratumTable", "StratifiedDataset", "StratumTable", "SubjectRecord",
    "aggregate_multiarm", "aggregate_subjects", "calgb_dataset", "calgb_records",
    "expand_records", "read_csv", "validate",
    "TrueParameters", "VarianceEstimate", "confidence_interval", "theoretical_nu2",
    "theoretical_sigma2", "var_bootstrap", "var_common_form", "var_gr", "var_mgr_ate",
    "var_mgr_mh", "var_ps", "var_sato", "var_unadjusted",
]
