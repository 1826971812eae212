# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled step kernel: drop-in replacement for the pure-numpy functions in
pure.py.  Same formulas, same contracts; see that module for the math notes.
"""

import numpy as np

from libc.math cimport exp, fabs, log, sqrt

GENERIC = 0
DEGENERATE = 1
ZERO_OVER_ZERO = 2

cdef inline double _cabs(double complex z) noexcept nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


def plan_step(p_arr, q_arr, long n_rem, double deg_rel, double deg_abs):
    cdef const double complex[::1] p = np.ascontiguousarray(p_arr)
    cdef const double complex[::1] q = np.ascontiguousarray(q_arr)
    cdef Py_ssize_t M = p.shape[0] - 1
    cdef double s2 = 1.0 - 1.0 / n_rem
    cdef double ls2 = log(s2)
    cdef Py_ssize_t m
    cdef double sm, um, s2m
    cdef double complex g = 0, a = 0, b = 0
    cdef double complex e0p, e0q
    # g = <eta0|nu0>, a = <eta0|n1>, b = <e1|nu0> with the reduced one-photon
    # vectors e1[m-1] = p[m] u_m, n1[m-1] = q[m] u_m, u_m = sqrt(1 - s2^m)
    for m in range(M + 1):
        s2m = exp(m * ls2)
        sm = sqrt(s2m)
        e0p = p[m].conjugate() * sm
        e0q = q[m] * sm
        g = g + e0p * e0q
        if m < M:
            um = sqrt(1.0 - s2m * s2)
            a = a + e0p * q[m + 1] * um
            b = b + (p[m + 1] * um).conjugate() * e0q
    cdef double aa = a.real * a.real + a.imag * a.imag
    cdef double bb = b.real * b.real + b.imag * b.imag
    cdef double den_r = aa - bb
    cdef double complex num_x = 2.0 * (g * b.conjugate() - a * g.conjugate())
    cdef double den = n_rem * den_r
    cdef double scale = n_rem * (aa + bb)
    cdef double num_mag = abs(num_x)
    cdef double num_scale
    cdef double complex X, xi
    if abs(den) < deg_rel * scale + deg_abs:
        num_scale = 2.0 * (abs(g) * abs(b) + abs(a) * abs(g))
        if num_mag <= deg_rel * num_scale + deg_abs:
            return 0j, ZERO_OVER_ZERO, den, scale, num_mag
        return 0j, DEGENERATE, den, scale, num_mag
    X = num_x / den_r
    xi = -X / (1.0 + sqrt(1.0 + X.real * X.real + X.imag * X.imag))
    return complex(xi), GENERIC, den, scale, num_mag


cdef void _count_rows(double complex xi, Py_ssize_t M, const double[::1] isf,
                      double complex[::1] d0, double complex[::1] d1) noexcept nogil:
    cdef double x = xi.real * xi.real + xi.imag * xi.imag
    cdef double emh = exp(-0.5 * x)
    cdef double complex mxc = 1.0  # (-conj(xi))^j running power
    cdef double complex nxc = -xi.conjugate()
    cdef Py_ssize_t j
    d0[0] = emh
    d1[0] = emh * xi
    for j in range(1, M + 1):
        d1[j] = emh * mxc * (j - x) * isf[j]
        mxc = mxc * nxc
        d0[j] = emh * mxc * isf[j]


def apply_step(state_arr, double r, double complex xi, sqb_arr, isf_arr):
    cdef const double complex[::1] state = np.ascontiguousarray(state_arr)
    cdef const double[:, ::1] sqb = sqb_arr
    cdef const double[::1] isf = isf_arr
    cdef Py_ssize_t M = state.shape[0] - 1
    out0 = np.zeros(M + 1, dtype=np.complex128)
    out1 = np.zeros(M + 1, dtype=np.complex128)
    cdef double complex[::1] c0 = out0
    cdef double complex[::1] c1 = out1
    buf = np.empty(2 * (M + 1), dtype=np.complex128)
    cdef double complex[::1] d0 = buf[: M + 1]
    cdef double complex[::1] d1 = buf[M + 1:]
    _count_rows(xi, M, isf, d0, d1)
    cdef Py_ssize_t n, j
    cdef double rj, w
    cdef double lr = log(r)
    cdef double complex u0, u1, src
    cdef double p0 = 0, p1 = 0, n2 = 0
    for j in range(M + 1):
        rj = exp(0.5 * j * lr)
        u0 = d0[j] * rj
        u1 = d1[j] * rj
        for n in range(M + 1 - j):
            w = sqb[n, j]
            src = w * state[n + j]
            c0[n] = c0[n] + u0 * src
            c1[n] = c1[n] + u1 * src
    cdef double lt = log(1.0 - r)
    cdef double tn
    for n in range(M + 1):
        tn = exp(0.5 * n * lt)
        c0[n] = c0[n] * tn
        c1[n] = c1[n] * tn
        p0 += c0[n].real * c0[n].real + c0[n].imag * c0[n].imag
        p1 += c1[n].real * c1[n].real + c1[n].imag * c1[n].imag
        n2 += state[n].real * state[n].real + state[n].imag * state[n].imag
    cdef double pfail = n2 - p0 - p1
    if pfail < 0.0:
        pfail = 0.0
    return out0, out1, p0, p1, pfail


def final_amps(state_arr, double complex xi, isf_arr):
    cdef const double complex[::1] state = np.ascontiguousarray(state_arr)
    cdef const double[::1] isf = isf_arr
    cdef Py_ssize_t M = state.shape[0] - 1
    buf = np.empty(2 * (M + 1), dtype=np.complex128)
    cdef double complex[::1] d0 = buf[: M + 1]
    cdef double complex[::1] d1 = buf[M + 1:]
    _count_rows(xi, M, isf, d0, d1)
    cdef double complex a0 = 0, a1 = 0
    cdef double n2 = 0
    cdef Py_ssize_t j
    for j in range(M + 1):
        a0 = a0 + d0[j] * state[j]
        a1 = a1 + d1[j] * state[j]
        n2 += state[j].real * state[j].real + state[j].imag * state[j].imag
    return complex(a0), complex(a1), n2


def final_align_objective(a_arr, b_arr, double complex xi, isf_arr):
    cdef const double complex[::1] a = np.ascontiguousarray(a_arr)
    cdef const double complex[::1] b = np.ascontiguousarray(b_arr)
    cdef const double[::1] isf = isf_arr
    cdef Py_ssize_t M = a.shape[0] - 1
    cdef double x = xi.real * xi.real + xi.imag * xi.imag
    cdef double emh = exp(-0.5 * x)
    cdef double complex mxc = 1.0
    cdef double complex nxc = -xi.conjugate()
    cdef double complex d0j, d1j
    cdef double complex s1a = 0, s0b = 0
    cdef Py_ssize_t j
    d1j = emh * xi
    s1a = d1j * a[0]
    s0b = emh * b[0]
    for j in range(1, M + 1):
        d1j = emh * mxc * (j - x) * isf[j]
        mxc = mxc * nxc
        d0j = emh * mxc * isf[j]
        s1a = s1a + d1j * a[j]
        s0b = s0b + d0j * b[j]
    return (s1a.real * s1a.real + s1a.imag * s1a.imag
            + s0b.real * s0b.real + s0b.imag * s0b.imag)


cdef void _apply_one(const double complex[::1] state, Py_ssize_t M,
                     const double complex[::1] d0, const double complex[::1] d1,
                     const double[::1] rj, const double[::1] tn,
                     const double[:, ::1] sqb,
                     double complex[::1] c0, double complex[::1] c1,
                     double* probs) noexcept nogil:
    cdef Py_ssize_t n, j
    cdef double complex u0, u1, src
    cdef double p0 = 0, p1 = 0, n2 = 0, pf
    for n in range(M + 1):
        c0[n] = 0
        c1[n] = 0
    for j in range(M + 1):
        u0 = d0[j] * rj[j]
        u1 = d1[j] * rj[j]
        for n in range(M + 1 - j):
            src = sqb[n, j] * state[n + j]
            c0[n] = c0[n] + u0 * src
            c1[n] = c1[n] + u1 * src
    for n in range(M + 1):
        c0[n] = c0[n] * tn[n]
        c1[n] = c1[n] * tn[n]
        p0 += c0[n].real * c0[n].real + c0[n].imag * c0[n].imag
        p1 += c1[n].real * c1[n].real + c1[n].imag * c1[n].imag
        n2 += state[n].real * state[n].real + state[n].imag * state[n].imag
    pf = n2 - p0 - p1
    if pf < 0.0:
        pf = 0.0
    cdef double s
    if p0 > 1e-300:
        s = 1.0 / sqrt(p0)
        for n in range(M + 1):
            c0[n] = c0[n] * s
    else:
        for n in range(M + 1):
            c0[n] = 0
    if p1 > 1e-300:
        s = 1.0 / sqrt(p1)
        for n in range(M + 1):
            c1[n] = c1[n] * s
    else:
        for n in range(M + 1):
            c1[n] = 0
    probs[0] = p0
    probs[1] = p1
    probs[2] = pf


def apply_pair(p_arr, q_arr, double r, double complex xi, sqb_arr, isf_arr):
    cdef const double complex[::1] p = np.ascontiguousarray(p_arr)
    cdef const double complex[::1] q = np.ascontiguousarray(q_arr)
    cdef const double[:, ::1] sqb = sqb_arr
    cdef const double[::1] isf = isf_arr
    cdef Py_ssize_t M = p.shape[0] - 1
    buf = np.empty(2 * (M + 1), dtype=np.complex128)
    cdef double complex[::1] d0 = buf[: M + 1]
    cdef double complex[::1] d1 = buf[M + 1:]
    _count_rows(xi, M, isf, d0, d1)
    pow_buf = np.empty(2 * (M + 1), dtype=np.float64)
    cdef double[::1] rj = pow_buf[: M + 1]
    cdef double[::1] tn = pow_buf[M + 1:]
    cdef double lr = log(r)
    cdef double lt = log(1.0 - r)
    cdef Py_ssize_t j
    for j in range(M + 1):
        rj[j] = exp(0.5 * j * lr)
        tn[j] = exp(0.5 * j * lt)
    out0p = np.empty(M + 1, dtype=np.complex128)
    out1p = np.empty(M + 1, dtype=np.complex128)
    out0q = np.empty(M + 1, dtype=np.complex128)
    out1q = np.empty(M + 1, dtype=np.complex128)
    cdef double complex[::1] c0p = out0p
    cdef double complex[::1] c1p = out1p
    cdef double complex[::1] c0q = out0q
    cdef double complex[::1] c1q = out1q
    cdef double probs_p[3]
    cdef double probs_q[3]
    _apply_one(p, M, d0, d1, rj, tn, sqb, c0p, c1p, probs_p)
    _apply_one(q, M, d0, d1, rj, tn, sqb, c0q, c1q, probs_q)
    return (out0p, out1p, out0q, out1q,
            (probs_p[0], probs_p[1], probs_p[2]),
            (probs_q[0], probs_q[1], probs_q[2]))


def step_both(p_arr, q_arr, long n_rem, double deg_rel, double deg_abs,
              double t_cap, sqb_arr, isf_arr):
    xi, status, den, scale, num = plan_step(p_arr, q_arr, n_rem,
                                            deg_rel, deg_abs)
    capped = False
    cdef double mag = abs(xi)
    if mag > t_cap:
        xi = xi * (t_cap * (1.0 - 1e-12) / mag)
        capped = True
    out = apply_pair(p_arr, q_arr, 1.0 / n_rem, xi, sqb_arr, isf_arr)
    return (xi, status, capped) + out


cdef int _plan_core(const double complex[::1] p, const double complex[::1] q,
                    long n_rem, double deg_rel, double deg_abs,
                    double complex* xi_out) noexcept nogil:
    """Shared planning math; returns the status code and writes xi."""
    cdef Py_ssize_t M = p.shape[0] - 1
    cdef double s2 = 1.0 - 1.0 / n_rem
    cdef double ls2 = log(s2)
    cdef Py_ssize_t m
    cdef double sm, um, s2m
    cdef double complex g = 0, a = 0, b = 0
    cdef double complex e0p, e0q
    for m in range(M + 1):
        s2m = exp(m * ls2)
        sm = sqrt(s2m)
        e0p = p[m].conjugate() * sm
        e0q = q[m] * sm
        g = g + e0p * e0q
        if m < M:
            um = sqrt(1.0 - s2m * s2)
            a = a + e0p * q[m + 1] * um
            b = b + (p[m + 1] * um).conjugate() * e0q
    cdef double aa = a.real * a.real + a.imag * a.imag
    cdef double bb = b.real * b.real + b.imag * b.imag
    cdef double den_r = aa - bb
    cdef double complex num_x = 2.0 * (g * b.conjugate() - a * g.conjugate())
    cdef double den = n_rem * den_r
    cdef double scale = n_rem * (aa + bb)
    cdef double num_mag = _cabs(num_x)
    cdef double num_scale
    cdef double complex X
    xi_out[0] = 0
    if fabs(den) < deg_rel * scale + deg_abs:
        num_scale = 2.0 * (_cabs(g) * _cabs(b) + _cabs(a) * _cabs(g))
        if num_mag <= deg_rel * num_scale + deg_abs:
            return 2
        return 1
    X = num_x / den_r
    xi_out[0] = -X / (1.0 + sqrt(1.0 + X.real * X.real + X.imag * X.imag))
    return 0


cdef class Stepper:
    """Stateful kernel bound to one cutoff: table views and scratch buffers
    are built once, so the per-step call overhead stays small."""

    cdef const double[:, ::1] sqb
    cdef const double[::1] isf
    cdef double complex[::1] d0
    cdef double complex[::1] d1
    cdef double[::1] rj
    cdef double[::1] tn
    cdef object _keep
    cdef Py_ssize_t M

    def __init__(self, sqb, isf):
        self.sqb = sqb
        self.isf = isf
        self.M = isf.shape[0] - 1
        cbuf = np.empty(2 * (self.M + 1), dtype=np.complex128)
        fbuf = np.empty(2 * (self.M + 1), dtype=np.float64)
        self.d0 = cbuf[: self.M + 1]
        self.d1 = cbuf[self.M + 1:]
        self.rj = fbuf[: self.M + 1]
        self.tn = fbuf[self.M + 1:]
        self._keep = (cbuf, fbuf)

    cdef void _rows_and_powers(self, double complex xi, double r) noexcept nogil:
        cdef double lr = log(r)
        cdef double lt = log(1.0 - r)
        cdef Py_ssize_t j
        _count_rows(xi, self.M, self.isf, self.d0, self.d1)
        for j in range(self.M + 1):
            self.rj[j] = exp(0.5 * j * lr)
            self.tn[j] = exp(0.5 * j * lt)

    def step_both(self, p_arr, q_arr, long n_rem, double deg_rel,
                  double deg_abs, double t_cap):
        cdef const double complex[::1] p = p_arr
        cdef const double complex[::1] q = q_arr
        cdef double complex xi
        cdef int status = _plan_core(p, q, n_rem, deg_rel, deg_abs, &xi)
        cdef bint capped = False
        cdef double mag = abs(xi)
        if mag > t_cap:
            xi = xi * (t_cap * (1.0 - 1e-12) / mag)
            capped = True
        base = np.empty(4 * (self.M + 1), dtype=np.complex128)
        cdef double complex[::1] view = base
        cdef double probs_p[3]
        cdef double probs_q[3]
        self._rows_and_powers(xi, 1.0 / n_rem)
        _apply_one(p, self.M, self.d0, self.d1, self.rj, self.tn, self.sqb,
                   view[: self.M + 1], view[self.M + 1: 2 * self.M + 2],
                   probs_p)
        _apply_one(q, self.M, self.d0, self.d1, self.rj, self.tn, self.sqb,
                   view[2 * self.M + 2: 3 * self.M + 3],
                   view[3 * self.M + 3:], probs_q)
        n1 = self.M + 1
        return (complex(xi), status, capped,
                base[:n1], base[n1: 2 * n1], base[2 * n1: 3 * n1],
                base[3 * n1:],
                (probs_p[0], probs_p[1], probs_p[2]),
                (probs_q[0], probs_q[1], probs_q[2]))

    def apply_pair(self, p_arr, q_arr, double r, double complex xi):
        cdef const double complex[::1] p = p_arr
        cdef const double complex[::1] q = q_arr
        base = np.empty(4 * (self.M + 1), dtype=np.complex128)
        cdef double complex[::1] view = base
        cdef double probs_p[3]
        cdef double probs_q[3]
        self._rows_and_powers(xi, r)
        _apply_one(p, self.M, self.d0, self.d1, self.rj, self.tn, self.sqb,
                   view[: self.M + 1], view[self.M + 1: 2 * self.M + 2],
                   probs_p)
        _apply_one(q, self.M, self.d0, self.d1, self.rj, self.tn, self.sqb,
                   view[2 * self.M + 2: 3 * self.M + 3],
                   view[3 * self.M + 3:], probs_q)
        n1 = self.M + 1
        return (base[:n1], base[n1: 2 * n1], base[2 * n1: 3 * n1],
                base[3 * n1:],
                (probs_p[0], probs_p[1], probs_p[2]),
                (probs_q[0], probs_q[1], probs_q[2]))

    def final_amps(self, s_arr, double complex xi):
        cdef const double complex[::1] s = s_arr
        _count_rows(xi, self.M, self.isf, self.d0, self.d1)
        cdef double complex a0 = 0, a1 = 0
        cdef double n2 = 0
        cdef Py_ssize_t j
        for j in range(self.M + 1):
            a0 = a0 + self.d0[j] * s[j]
            a1 = a1 + self.d1[j] * s[j]
            n2 += s[j].real * s[j].real + s[j].imag * s[j].imag
        return complex(a0), complex(a1), n2

    def final_align_objective(self, a_arr, b_arr, double complex xi):
        cdef const double complex[::1] a = a_arr
        cdef const double complex[::1] b = b_arr
        _count_rows(xi, self.M, self.isf, self.d0, self.d1)
        cdef double complex s1a = 0, s0b = 0
        cdef Py_ssize_t j
        for j in range(self.M + 1):
            s1a = s1a + self.d1[j] * a[j]
            s0b = s0b + self.d0[j] * b[j]
        return (s1a.real * s1a.real + s1a.imag * s1a.imag
                + s0b.real * s0b.real + s0b.imag * s0b.imag)
