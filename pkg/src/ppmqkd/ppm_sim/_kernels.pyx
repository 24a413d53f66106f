# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled first-click resolution with afterpulse carry (see _kernels_py for semantics)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def resolve_clicks(const short[::1] prompt_key, const short[::1] prompt_fr,
                   const double[::1] u_key, const double[::1] u_fr,
                   const long long[::1] delay_key, const long long[::1] delay_fr,
                   int N, double p_ap):
    cdef Py_ssize_t n = prompt_key.shape[0]
    cdef Py_ssize_t i
    cdef long long pend_k = -1, pend_f = -1, base, hi
    cdef int ck, cf
    out_bin_arr = np.full(n, -1, dtype=np.int16)
    out_path_arr = np.full(n, -1, dtype=np.int8)
    cdef short[::1] out_bin = out_bin_arr
    cdef signed char[::1] out_path = out_path_arr

    for i in range(n):
        base = i * <long long>N
        hi = base + N
        ck = prompt_key[i]
        cf = prompt_fr[i]
        if pend_k >= 0:
            if pend_k < hi:
                if pend_k - base < ck:
                    ck = <int>(pend_k - base)
                pend_k = -1
        if pend_f >= 0:
            if pend_f < hi:
                if pend_f - base < cf:
                    cf = <int>(pend_f - base)
                pend_f = -1
        if ck < N and u_key[i] < p_ap:
            pend_k = base + ck + delay_key[i]
            if pend_k < hi:
                pend_k = -1
        if cf < N and u_fr[i] < p_ap:
            pend_f = base + cf + delay_fr[i]
            if pend_f < hi:
                pend_f = -1
        if ck < N and ck <= cf:
            out_bin[i] = ck
            out_path[i] = 0
        elif cf < N:
            out_bin[i] = cf
            out_path[i] = 1
    return out_bin_arr, out_path_arr
