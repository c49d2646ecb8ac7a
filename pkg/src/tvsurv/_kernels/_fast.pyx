# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the hot loops.

Sorting reuses numpy's stable argsort; scans and accumulations are typed C
loops with the same sequential float semantics as the pure numpy backend,
so both produce bit-identical output.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log, sqrt

cnp.import_array()

BACKEND = "fast"


cdef Py_ssize_t _bisect_left(const double[::1] arr, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _bisect_right(const double[::1] arr, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if x < arr[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def ltrc_event_table(L, R, delta, weights=None):
    """See the pure backend for the contract; identical output."""
    cdef const double[::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef const double[::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const unsigned char[::1] dv = np.ascontiguousarray(delta, dtype=np.uint8)
    cdef Py_ssize_t n = Lv.shape[0]
    w_arr = (
        np.ones(n) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    )
    cdef const double[::1] wv = w_arr

    ev = np.asarray(dv).astype(bool)
    times_arr = np.unique(np.asarray(Rv)[ev])
    cdef Py_ssize_t K = times_arr.shape[0]
    if K == 0:
        return times_arr, np.zeros(0), np.zeros(0)
    cdef const double[::1] times = times_arr

    d_arr = np.zeros(K)
    cdef double[::1] d = d_arr
    cdef Py_ssize_t i, k
    for i in range(n):
        if dv[i]:
            k = _bisect_left(times, Rv[i])
            d[k] += wv[i]

    oL = np.argsort(np.asarray(Lv), kind="stable")
    oR = np.argsort(np.asarray(Rv), kind="stable")
    cdef const cnp.intp_t[::1] oLv = np.ascontiguousarray(oL, dtype=np.intp)
    cdef const cnp.intp_t[::1] oRv = np.ascontiguousarray(oR, dtype=np.intp)

    Ls_arr = np.empty(n)
    Rs_arr = np.empty(n)
    cwL_arr = np.empty(n)
    cwR_arr = np.empty(n)
    cdef double[::1] Ls = Ls_arr, Rs = Rs_arr, cwL = cwL_arr, cwR = cwR_arr
    cdef double accL = 0.0, accR = 0.0
    for i in range(n):
        Ls[i] = Lv[oLv[i]]
        accL = accL + wv[oLv[i]]
        cwL[i] = accL
        Rs[i] = Rv[oRv[i]]
        accR = accR + wv[oRv[i]]
        cwR[i] = accR

    Y_arr = np.empty(K)
    cdef double[::1] Y = Y_arr
    cdef Py_ssize_t iL, iR
    cdef double entered, left
    for k in range(K):
        iL = _bisect_left(Ls, times[k])
        entered = cwL[iL - 1] if iL > 0 else 0.0
        iR = _bisect_left(Rs, times[k])
        left = cwR[iR - 1] if iR > 0 else 0.0
        Y[k] = entered - left
    return times_arr, d_arr, Y_arr


def logrank_scores(L, R, delta):
    """See the pure backend for the contract; identical output."""
    cdef const double[::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef const double[::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const unsigned char[::1] dv = np.ascontiguousarray(delta, dtype=np.uint8)
    cdef Py_ssize_t n = Lv.shape[0]
    times_arr, d_arr, Y_arr = ltrc_event_table(
        np.asarray(Lv), np.asarray(Rv), np.asarray(dv)
    )
    cdef Py_ssize_t K = times_arr.shape[0]
    if K == 0:
        return np.zeros(n)
    cdef const double[::1] times = times_arr
    cdef const double[::1] d = d_arr
    cdef const double[::1] Y = Y_arr

    logS_arr = np.empty(K)
    cdef double[::1] logS = logS_arr
    cdef double surv = 1.0, f, floor = 1.0 / (2.0 * n)
    cdef Py_ssize_t k
    for k in range(K):
        f = 1.0 - d[k] / Y[k]
        if f < 0.0:
            f = 0.0
        surv = surv * f
        logS[k] = log(surv if surv > floor else floor)

    U_arr = np.empty(n)
    cdef double[::1] U = U_arr
    cdef Py_ssize_t i, iR, iL
    cdef double at_R, at_L
    for i in range(n):
        iR = _bisect_right(times, Rv[i])
        at_R = logS[iR - 1] if iR > 0 else 0.0
        iL = _bisect_right(times, Lv[i])
        at_L = logS[iL - 1] if iL > 0 else 0.0
        U[i] = <double>dv[i] + at_R - at_L
    return U_arr


def cif_best_cut(x, U, minbucket):
    """See the pure backend for the contract; identical output."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    order = np.argsort(np.asarray(xv), kind="stable")
    cdef const cnp.intp_t[::1] ov = np.ascontiguousarray(order, dtype=np.intp)

    xs_arr = np.empty(n)
    cs_arr = np.empty(n)
    cdef double[::1] xs = xs_arr, cs = cs_arr
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        xs[i] = xv[ov[i]]
        acc = acc + Uv[ov[i]]
        cs[i] = acc
    cdef double hbar = cs[n - 1] / n
    cdef double dev = 0.0, u
    for i in range(n):
        u = Uv[ov[i]] - hbar
        dev = dev + u * u
    cdef double vh = dev / n
    if not vh > 0.0:
        return -1.0, float("nan"), 0

    cdef Py_ssize_t lo = minbucket if minbucket > 1 else 1
    cdef Py_ssize_t hi = n - lo
    cdef double best_stat = -1.0, best_thr = 0.0, nd = <double>n
    cdef Py_ssize_t best_nl = 0
    cdef double nl, var, stat
    for i in range(lo - 1, hi):
        if xs[i] == xs[i + 1]:
            continue
        nl = <double>(i + 1)
        var = vh * nl * (nd - nl) / (nd - 1.0)
        stat = fabs(cs[i] - nl * hbar) / sqrt(var)
        if stat > best_stat:
            best_stat = stat
            best_thr = (xs[i] + xs[i + 1]) / 2.0
            best_nl = i + 1
    if best_nl == 0:
        return -1.0, float("nan"), 0
    return best_stat, best_thr, best_nl


cdef inline double _pois_dev(double c_sum, double s_sum, double clogs_sum) noexcept nogil:
    cdef double den
    if c_sum <= 0.0:
        return 0.0
    den = s_sum if s_sum > 0.0 else 1.0
    return 2.0 * (-clogs_sum - c_sum * log(c_sum / den))


def rrf_best_cut(x, s, c, minbucket):
    """See the pure backend for the contract; identical output."""
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    order = np.argsort(np.asarray(xv), kind="stable")
    cdef const cnp.intp_t[::1] ov = np.ascontiguousarray(order, dtype=np.intp)

    xs_arr = np.empty(n)
    cc_arr = np.empty(n)
    ss_arr = np.empty(n)
    gg_arr = np.empty(n)
    cdef double[::1] xs = xs_arr, cc = cc_arr, ss = ss_arr, gg = gg_arr
    cdef double ac = 0.0, as_ = 0.0, ag = 0.0, si, ci, gi
    cdef Py_ssize_t i, j
    for i in range(n):
        j = ov[i]
        xs[i] = xv[j]
        ci = cv[j]
        si = sv[j]
        if ci > 0.0:
            gi = log(si if si > 0.0 else 1.0)
        else:
            gi = 0.0
        ac = ac + ci
        as_ = as_ + si
        ag = ag + gi
        cc[i] = ac
        ss[i] = as_
        gg[i] = ag

    cdef double c_tot = cc[n - 1], s_tot = ss[n - 1], g_tot = gg[n - 1]
    cdef double d_parent = _pois_dev(c_tot, s_tot, g_tot)
    cdef Py_ssize_t lo = minbucket if minbucket > 1 else 1
    cdef Py_ssize_t hi = n - lo
    cdef double best_red = -np.inf, best_thr = 0.0, red
    cdef Py_ssize_t best_nl = 0
    for i in range(lo - 1, hi):
        if xs[i] == xs[i + 1]:
            continue
        red = (
            d_parent
            - _pois_dev(cc[i], ss[i], gg[i])
            - _pois_dev(c_tot - cc[i], s_tot - ss[i], g_tot - gg[i])
        )
        if red > best_red:
            best_red = red
            best_thr = (xs[i] + xs[i + 1]) / 2.0
            best_nl = i + 1
    if best_nl == 0:
        return -np.inf, float("nan"), 0
    return best_red, best_thr, best_nl
