"""Pure numpy implementation of the batch kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled kernels are tested against. Layouts are shared with ``_kernels.pyx``:

* ``counts``: int64 array ``(R, K, 4)`` holding ``n11, n10, n01, n00``.
* ``codes``: int64 array ``(n,)``, ``stratum * 4 + cell`` with cell in the
  same ``n11, n10, n01, n00`` order.
"""

import numpy as np

NSTAT = 13
(MH, SUM_W, GR, SATO, MGR_MH, NU2, PS, PS_SIGMA2, PS_NU2,
 UNADJ, UNADJ_VAR, MH_CHI2, DROPPED) = range(NSTAT)

EST_MH, EST_PS, EST_UNADJ = 0, 1, 2


def _div(a, b):
    # a/b where b > 0, else 0; both broadcastable
    out = np.zeros(np.broadcast(a, b).shape)
    np.divide(a, b, out=out, where=np.broadcast_to(b, out.shape) > 0)
    return out


def summarize(counts):
    """All per-dataset statistics for a batch of stratified tables."""
    # rows with n = 0 divide by zero on the way; they are masked to NaN at the end
    with np.errstate(divide="ignore", invalid="ignore"):
        return _summarize(counts)


def _summarize(counts):
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim == 2:
        c = c[None]
    n11, n10, n01, n00 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    n1 = n11 + n01
    n0 = n10 + n00
    N = n1 + n0
    n = N.sum(axis=1)
    inc = (n1 > 0) & (n0 > 0)

    w = _div(n1 * n0, N)
    sw = w.sum(axis=1)
    ok = sw > 0
    swd = np.where(ok, sw, 1.0)

    p1 = _div(n11, n1)
    p0 = _div(n10, n0)
    dk = np.where(inc, p1 - p0, 0.0)
    mh = (w * dk).sum(axis=1) / swd

    gr_num = _div(n11 * n01 * n0**3 + n10 * n00 * n1**3, n1 * n0 * N**2)
    gr = np.where(inc, gr_num, 0.0).sum(axis=1) / swd**2

    P = _div(n1**2 * n10 - n0**2 * n11 + 0.5 * n1 * n0 * (n0 - n1), N**2)
    Q = _div(n11 * (n0 - n10) + n10 * (n1 - n11), 2.0 * N)
    sato = (mh * np.where(inc, P, 0.0).sum(axis=1) + np.where(inc, Q, 0.0).sum(axis=1)) / swd**2

    c1 = np.where(n1 > 1, _div(n1, n1 - 1), 1.0)
    c0 = np.where(n0 > 1, _div(n0, n0 - 1), 1.0)
    mgr_terms = w**2 * (_div(n11 * n01, n1**3) * c1 + _div(n10 * n00, n0**3) * c0)
    mgr = np.where(inc, mgr_terms, 0.0).sum(axis=1) / swd**2

    # per-arm sample variances over (n - 1), zeroed when an arm has <= 1 subject
    s1 = np.where(n1 > 1, _div(n1 * p1 * (1 - p1), n1 - 1), 0.0)
    s0 = np.where(n0 > 1, _div(n0 * p0 * (1 - p0), n0 - 1), 0.0)
    d2 = p1**2 - _div(s1, n1) + p0**2 - _div(s0, n0) - 2 * p1 * p0

    pi1 = n1.sum(axis=1) / n
    pi0 = n0.sum(axis=1) / n
    pp = (pi1 * pi0)[:, None]
    nn = n[:, None]
    mhc = mh[:, None]
    first = (d2 - 2 * dk * mhc + mhc**2) * pp * _div(N - 1, N) * (N - 1 - (4 * N - 6) * pp) / nn
    second = pp**2 * (N / nn) * (d2 - mhc**2)
    nu2 = np.where(inc, first + second, 0.0).sum(axis=1) / n / (swd / n) ** 2

    ps = np.where(inc, N / nn * dk, 0.0).sum(axis=1)
    ps_sigma2 = np.where(inc, (N / nn) ** 2 * (_div(s1, n1) + _div(s0, n0)), 0.0).sum(axis=1)
    ps_nu2 = (np.where(inc, N / nn * d2, 0.0).sum(axis=1) - ps**2) / n

    t1 = n1.sum(axis=1)
    t0 = n0.sum(axis=1)
    u1 = _div(n11.sum(axis=1), t1)
    u0 = _div(n10.sum(axis=1), t0)
    unadj = u1 - u0
    unadj_var = _div(u1 * (1 - u1), t1 - 1) * (t1 > 1) + _div(u0 * (1 - u0), t0 - 1) * (t0 > 1)
    unadj_ok = (t1 > 0) & (t0 > 0)

    r1 = n11 + n10
    r0 = n01 + n00
    big = N >= 2
    dev = np.where(big, n11 - _div(r1 * n1, N), 0.0).sum(axis=1)
    hv = np.where(big, _div(r1 * r0 * n1 * n0, N**2 * (N - 1)), 0.0).sum(axis=1)
    chi2 = np.full(dev.shape, np.nan)
    np.divide(dev**2, hv, out=chi2, where=hv > 0)

    out = np.empty((c.shape[0], NSTAT))
    nan = np.nan
    out[:, MH] = np.where(ok, mh, nan)
    out[:, SUM_W] = sw
    out[:, GR] = np.where(ok, gr, nan)
    out[:, SATO] = np.where(ok, sato, nan)
    out[:, MGR_MH] = np.where(ok, mgr, nan)
    out[:, NU2] = np.where(ok, nu2, nan)
    anyinc = inc.any(axis=1)
    out[:, PS] = np.where(anyinc, ps, nan)
    out[:, PS_SIGMA2] = np.where(anyinc, ps_sigma2, nan)
    out[:, PS_NU2] = np.where(anyinc, ps_nu2, nan)
    out[:, UNADJ] = np.where(unadj_ok, unadj, nan)
    out[:, UNADJ_VAR] = np.where(unadj_ok, unadj_var, nan)
    out[:, MH_CHI2] = chi2
    out[:, DROPPED] = (~inc).sum(axis=1)
    return out


def _estimate_batch(counts, estimator):
    c = counts.astype(np.float64)
    n11, n10, n01, n00 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    n1 = n11 + n01
    n0 = n10 + n00
    N = n1 + n0
    inc = (n1 > 0) & (n0 > 0)
    if estimator == EST_MH:
        num = np.where(inc, _div(n0 * n11 - n1 * n10, N), 0.0).sum(axis=1)
        den = np.where(inc, _div(n1 * n0, N), 0.0).sum(axis=1)
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    if estimator == EST_PS:
        n = N.sum(axis=1)[:, None]
        val = np.where(inc, N / n * (_div(n11, n1) - _div(n10, n0)), 0.0).sum(axis=1)
        return np.where(inc.any(axis=1), val, np.nan)
    if estimator == EST_UNADJ:
        t1 = n1.sum(axis=1)
        t0 = n0.sum(axis=1)
        val = _div(n11.sum(axis=1), t1) - _div(n10.sum(axis=1), t0)
        return np.where((t1 > 0) & (t0 > 0), val, np.nan)
    raise ValueError(f"unknown estimator code {estimator}")


def bootstrap(codes, K, idx, estimator, delta_true=None):
    """Estimator on each resample ``codes[idx[b]]``.

    Returns ``(estimates, mh_truth)``; failed replicates are NaN.
    ``mh_truth`` is the MH-weighted average of ``delta_true`` under each
    resample's margins, or None when ``delta_true`` is not given.
    """
    codes = np.asarray(codes, dtype=np.int64)
    idx = np.asarray(idx, dtype=np.int64)
    B = idx.shape[0]
    flat = codes[idx] + (np.arange(B, dtype=np.int64) * 4 * K)[:, None]
    counts = np.bincount(flat.ravel(), minlength=B * 4 * K).reshape(B, K, 4)
    est = _estimate_batch(counts, estimator)
    truth = None
    if delta_true is not None:
        c = counts.astype(np.float64)
        n1 = c[..., 0] + c[..., 2]
        n0 = c[..., 1] + c[..., 3]
        w = _div(n1 * n0, n1 + n0)
        sw = w.sum(axis=1)
        truth = np.where(sw > 0, (w * np.asarray(delta_true)).sum(axis=1) / np.where(sw > 0, sw, 1.0), np.nan)
    return est, truth
