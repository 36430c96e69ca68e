# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport NAN
from libc.stdlib cimport calloc, free
from libc.string cimport memset

cnp.import_array()

cdef enum:
    NSTAT = 13
    MH = 0
    SUM_W = 1
    GR = 2
    SATO = 3
    MGR_MH = 4
    NU2 = 5
    PS = 6
    PS_SIGMA2 = 7
    PS_NU2 = 8
    UNADJ = 9
    UNADJ_VAR = 10
    MH_CHI2 = 11
    DROPPED = 12


cdef void _summarize_one(const cnp.int64_t[:, :] c, double[:] out) noexcept nogil:
    cdef Py_ssize_t K = c.shape[0], k
    cdef double n11, n10, n01, n00, n1, n0, N, w, p1, p0, dk, s1, s0, d2
    cdef double cf1, cf0
    cdef double n = 0, t1 = 0, t0 = 0, r11 = 0, r10 = 0
    cdef double sw = 0, num = 0, gr = 0, sP = 0, sQ = 0, mgr = 0
    cdef double ps = 0, ps_s2 = 0, ps_d2 = 0, dev = 0, hv = 0, dropped = 0
    cdef double mh, pi1, pi0, pp, nu = 0, u1, u0, E, r1, r0
    cdef int anyinc = 0
    cdef int i

    for k in range(K):
        n11 = c[k, 0]; n10 = c[k, 1]; n01 = c[k, 2]; n00 = c[k, 3]
        n1 = n11 + n01; n0 = n10 + n00; N = n1 + n0
        n += N; t1 += n1; t0 += n0; r11 += n11; r10 += n10
        if N >= 2:
            r1 = n11 + n10
            r0 = n01 + n00
            E = r1 * n1 / N
            dev += n11 - E
            hv += r1 * r0 * n1 * n0 / (N * N * (N - 1))
        if n1 > 0 and n0 > 0:
            anyinc = 1
            w = n1 * n0 / N
            sw += w
            num += (n0 * n11 - n1 * n10) / N
            gr += (n11 * n01 * n0 * n0 * n0 + n10 * n00 * n1 * n1 * n1) / (n1 * n0 * N * N)
            sP += (n1 * n1 * n10 - n0 * n0 * n11 + 0.5 * n1 * n0 * (n0 - n1)) / (N * N)
            sQ += (n11 * (n0 - n10) + n10 * (n1 - n11)) / (2.0 * N)
            cf1 = n1 / (n1 - 1) if n1 > 1 else 1.0
            cf0 = n0 / (n0 - 1) if n0 > 1 else 1.0
            mgr += w * w * (n11 * n01 / (n1 * n1 * n1) * cf1 + n10 * n00 / (n0 * n0 * n0) * cf0)
        else:
            dropped += 1

    for i in range(NSTAT):
        out[i] = NAN
    out[SUM_W] = sw
    out[DROPPED] = dropped

    if t1 > 0 and t0 > 0:
        u1 = r11 / t1
        u0 = r10 / t0
        out[UNADJ] = u1 - u0
        out[UNADJ_VAR] = (u1 * (1 - u1) / (t1 - 1) if t1 > 1 else 0.0) + (u0 * (1 - u0) / (t0 - 1) if t0 > 1 else 0.0)
    if hv > 0:
        out[MH_CHI2] = dev * dev / hv
    if not anyinc:
        return

    pi1 = t1 / n
    pi0 = t0 / n
    pp = pi1 * pi0
    mh = num / sw if sw > 0 else 0.0
    for k in range(K):
        n11 = c[k, 0]; n10 = c[k, 1]; n01 = c[k, 2]; n00 = c[k, 3]
        n1 = n11 + n01; n0 = n10 + n00; N = n1 + n0
        if not (n1 > 0 and n0 > 0):
            continue
        p1 = n11 / n1
        p0 = n10 / n0
        dk = p1 - p0
        s1 = n1 * p1 * (1 - p1) / (n1 - 1) if n1 > 1 else 0.0
        s0 = n0 * p0 * (1 - p0) / (n0 - 1) if n0 > 1 else 0.0
        d2 = p1 * p1 - s1 / n1 + p0 * p0 - s0 / n0 - 2 * p1 * p0
        nu += ((d2 - 2 * dk * mh + mh * mh) * pp * ((N - 1) / N) * (N - 1 - (4 * N - 6) * pp) / n
               + pp * pp * (N / n) * (d2 - mh * mh))
        ps += N / n * dk
        ps_s2 += (N / n) * (N / n) * (s1 / n1 + s0 / n0)
        ps_d2 += N / n * d2

    out[PS] = ps
    out[PS_SIGMA2] = ps_s2
    out[PS_NU2] = (ps_d2 - ps * ps) / n
    if sw > 0:
        out[MH] = mh
        out[GR] = gr / (sw * sw)
        out[SATO] = (mh * sP + sQ) / (sw * sw)
        out[MGR_MH] = mgr / (sw * sw)
        out[NU2] = nu / n / ((sw / n) * (sw / n))


def summarize(counts):
    arr = np.ascontiguousarray(counts, dtype=np.int64)
    if arr.ndim == 2:
        arr = arr[None]
    cdef const cnp.int64_t[:, :, :] c = arr
    cdef Py_ssize_t R = c.shape[0], r
    result = np.empty((R, NSTAT), dtype=np.float64)
    cdef double[:, :] out = result
    with nogil:
        for r in range(R):
            _summarize_one(c[r], out[r])
    return result


cdef double _estimate(const cnp.int64_t* cnt, Py_ssize_t K, int estimator) noexcept nogil:
    cdef Py_ssize_t k
    cdef double n11, n10, n01, n00, n1, n0, N
    cdef double num = 0, den = 0, n = 0, t1 = 0, t0 = 0, r1 = 0, r0 = 0, ps = 0
    cdef int anyinc = 0
    for k in range(K):
        n11 = cnt[4 * k]; n10 = cnt[4 * k + 1]; n01 = cnt[4 * k + 2]; n00 = cnt[4 * k + 3]
        n1 = n11 + n01; n0 = n10 + n00; N = n1 + n0
        n += N; t1 += n1; t0 += n0; r1 += n11; r0 += n10
        if n1 > 0 and n0 > 0:
            anyinc = 1
            num += (n0 * n11 - n1 * n10) / N
            den += n1 * n0 / N
            ps += N * (n11 / n1 - n10 / n0)
    if estimator == 0:
        return num / den if den > 0 else NAN
    if estimator == 1:
        return ps / n if anyinc else NAN
    if t1 > 0 and t0 > 0:
        return r1 / t1 - r0 / t0
    return NAN


def bootstrap(codes, Py_ssize_t K, idx, int estimator, delta_true=None):
    if estimator not in (0, 1, 2):
        raise ValueError(f"unknown estimator code {estimator}")
    cdef const cnp.int64_t[:] cd = np.ascontiguousarray(codes, dtype=np.int64)
    cdef const cnp.int64_t[:, :] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t B = ix.shape[0], m = ix.shape[1], b, i, k
    est_arr = np.empty(B, dtype=np.float64)
    cdef double[:] est = est_arr
    cdef int want_truth = delta_true is not None
    cdef const double[:] dt
    truth_arr = None
    cdef double[:] tr
    if want_truth:
        dt = np.ascontiguousarray(delta_true, dtype=np.float64)
        if dt.shape[0] != K:
            raise ValueError("delta_true must have length K")
        truth_arr = np.empty(B, dtype=np.float64)
        tr = truth_arr
    cdef cnp.int64_t* cnt = <cnp.int64_t*> calloc(4 * K, sizeof(cnp.int64_t))
    if cnt == NULL:
        raise MemoryError()
    cdef double n1, n0, w, sw, swd
    try:
        with nogil:
            for b in range(B):
                memset(cnt, 0, 4 * K * sizeof(cnp.int64_t))
                for i in range(m):
                    cnt[cd[ix[b, i]]] += 1
                est[b] = _estimate(cnt, K, estimator)
                if want_truth:
                    sw = 0
                    swd = 0
                    for k in range(K):
                        n1 = cnt[4 * k] + cnt[4 * k + 2]
                        n0 = cnt[4 * k + 1] + cnt[4 * k + 3]
                        if n1 > 0 and n0 > 0:
                            w = n1 * n0 / (n1 + n0)
                            sw += w
                            swd += w * dt[k]
                    tr[b] = swd / sw if sw > 0 else NAN
    finally:
        free(cnt)
    return est_arr, truth_arr
