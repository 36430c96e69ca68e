"""Batch kernels for the simulation hot loop.

The compiled extension is used when it was built; otherwise the numpy
implementation is used. Set ``STRATA_RD_KERNELS=python`` to force the
fallback.
"""

import os
from types import ModuleType

from . import _kernels_py
from ._kernels_py import (  # noqa: F401  (re-exported layout constants)
    DROPPED, EST_MH, EST_PS, EST_UNADJ, GR, MGR_MH, MH, MH_CHI2, NSTAT, NU2,
    PS, PS_NU2, PS_SIGMA2, SATO, SUM_W, UNADJ, UNADJ_VAR,
)

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

ESTIMATOR_CODES = {"MH": EST_MH, "PS": EST_PS, "UNADJUSTED": EST_UNADJ}


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels were not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


_requested = os.environ.get("STRATA_RD_KERNELS", "").lower()
if _requested == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"
_impl = get_backend(BACKEND)


def summarize(counts):
    """Statistics for an ``(R, K, 4)`` count batch; columns indexed by the
    module constants (``MH``, ``GR``, ...)."""
    return _impl.summarize(counts)


def bootstrap(codes, K, idx, estimator, delta_true=None):
    """Resampled estimates for each row of ``idx``; see ``_kernels_py.bootstrap``."""
    if len(codes) and (min(codes) < 0 or max(codes) >= 4 * K):
        raise ValueError("cell codes out of range")
    if idx.size and (idx.min() < 0 or idx.max() >= len(codes)):
        raise ValueError("resample indices out of range")
    return _impl.bootstrap(codes, K, idx, estimator, delta_true)
