# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same contract as ``krflab._kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, fabs, sqrt, INFINITY

cnp.import_array()

BACKEND = "cython"

ctypedef double complex cplx

cdef extern from "complex.h" nogil:
    double creal(double complex)
    double cimag(double complex)
    double complex conj(double complex)


cdef double _sweep(const cplx* Q, cplx* e, cplx* w, Py_ssize_t n) noexcept nogil:
    # w_b = sum_{a,c} (sum_d Q_abcd conj(e_d)) e_a e_c ; returns Re <e, w>
    cdef Py_ssize_t a, b, c, d
    cdef cplx acc, ea
    cdef cplx ebar[16]
    cdef const cplx* q = Q
    cdef double f = 0.0
    for b in range(n):
        w[b] = 0.0
        ebar[b] = conj(e[b])
    for a in range(n):
        ea = e[a]
        for b in range(n):
            for c in range(n):
                acc = 0.0
                for d in range(n):
                    acc = acc + q[d] * ebar[d]
                q += n
                w[b] = w[b] + acc * ea * e[c]
    for b in range(n):
        f += creal(ebar[b] * w[b])
    return f


def hsc_ascent(const cplx[:, :, :, ::1] Q, cplx[:, ::1] eta, int iters, double alpha, double tol):
    cdef Py_ssize_t m = eta.shape[0], n = eta.shape[1]
    cdef Py_ssize_t r, b
    cdef int it
    cdef double f, fc, nrm, shift
    cdef cplx w[16]
    cdef cplx e[16]
    cdef cplx wc[16]
    cdef cplx ec[16]
    cdef const cplx* q = &Q[0, 0, 0, 0]
    if n > 16:
        raise ValueError("hsc_ascent kernel supports n <= 16")
    out = np.empty(m)
    cdef double[::1] vals = out
    with nogil:
        for r in range(m):
            for b in range(n):
                e[b] = eta[r, b]
            f = _sweep(q, e, w, n)
            shift = alpha / 8.0
            it = 0
            while it < iters:
                it += 1
                nrm = 0.0
                for b in range(n):
                    ec[b] = w[b] + shift * e[b]
                    nrm += creal(ec[b]) * creal(ec[b]) + cimag(ec[b]) * cimag(ec[b])
                nrm = sqrt(nrm)
                for b in range(n):
                    ec[b] = ec[b] / nrm
                fc = _sweep(q, ec, wc, n)
                if fc < f and shift < alpha:
                    shift *= 2.0
                    continue
                for b in range(n):
                    e[b] = ec[b]
                    w[b] = wc[b]
                if fabs(fc - f) <= tol * (1.0 + fabs(fc)):
                    f = fc
                    break
                f = fc
            vals[r] = f
            for b in range(n):
                eta[r, b] = e[b]
    return out


cdef double _velocity(const double[:, ::1] psi, double t, double h, double gflat,
                      double[:, ::1] out) noexcept nogil:
    # two passes per row (stencil, then log1p) so the log loop vectorizes
    cdef Py_ssize_t N = psi.shape[0]
    cdef Py_ssize_t i, j, ip, im
    cdef double scale = exp(t) / (4.0 * h * h * gflat)
    cdef double rmin = INFINITY
    cdef double* row
    cdef const double* pc
    cdef const double* pu
    cdef const double* pd
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        row = &out[i, 0]
        pc = &psi[i, 0]
        pu = &psi[ip, 0]
        pd = &psi[im, 0]
        row[0] = scale * (pu[0] + pd[0] + pc[1] + pc[N - 1] - 4.0 * pc[0])
        for j in range(1, N - 1):
            row[j] = scale * (pu[j] + pd[j] + pc[j + 1] + pc[j - 1] - 4.0 * pc[j])
        row[N - 1] = scale * (pu[N - 1] + pd[N - 1] + pc[0] + pc[N - 2] - 4.0 * pc[N - 1])
        for j in range(N):
            if row[j] < rmin:
                rmin = row[j]
        if rmin > -1.0:
            for j in range(N):
                row[j] = log1p(row[j]) - pc[j]
    return gflat * exp(-t) * (1.0 + rmin)


def grid_metric(const double[:, ::1] phi, double t, double h, double gflat):
    cdef Py_ssize_t N = phi.shape[0]
    cdef Py_ssize_t i, j, ip, im, jp, jm
    cdef double base = gflat * exp(-t)
    cdef double scale = 1.0 / (4.0 * h * h)
    res = np.empty((N, N))
    cdef double[:, ::1] g = res
    with nogil:
        for i in range(N):
            ip = i + 1 if i + 1 < N else 0
            im = i - 1 if i > 0 else N - 1
            for j in range(N):
                jp = j + 1 if j + 1 < N else 0
                jm = j - 1 if j > 0 else N - 1
                g[i, j] = base + scale * (phi[ip, j] + phi[im, j] + phi[i, jp] + phi[i, jm] - 4.0 * phi[i, j])
    return res


def grid_velocity(const double[:, ::1] phi, double t, double h, double gflat):
    res = np.empty((phi.shape[0], phi.shape[1]))
    cdef double[:, ::1] out = res
    cdef double gmin
    with nogil:
        gmin = _velocity(phi, t, h, gflat, out)
    if not gmin > 0.0:
        res.fill(np.nan)
    return res, gmin


def grid_rk4_step(const double[:, ::1] phi, double t, double dt, double h, double gflat):
    cdef Py_ssize_t N = phi.shape[0]
    cdef Py_ssize_t i, j
    k = np.empty((4, N, N))
    tmp = np.empty((N, N))
    res = np.empty((N, N))
    cdef double[:, :, ::1] kv = k
    cdef double[:, ::1] s = tmp
    cdef double[:, ::1] o = res
    cdef double m1, m2, m3, m4
    with nogil:
        m1 = _velocity(phi, t, h, gflat, kv[0])
        for i in range(N):
            for j in range(N):
                s[i, j] = phi[i, j] + 0.5 * dt * kv[0, i, j]
        m2 = _velocity(s, t + 0.5 * dt, h, gflat, kv[1])
        for i in range(N):
            for j in range(N):
                s[i, j] = phi[i, j] + 0.5 * dt * kv[1, i, j]
        m3 = _velocity(s, t + 0.5 * dt, h, gflat, kv[2])
        for i in range(N):
            for j in range(N):
                s[i, j] = phi[i, j] + dt * kv[2, i, j]
        m4 = _velocity(s, t + dt, h, gflat, kv[3])
        for i in range(N):
            for j in range(N):
                o[i, j] = phi[i, j] + (dt / 6.0) * (kv[0, i, j] + 2.0 * kv[1, i, j]
                                                    + 2.0 * kv[2, i, j] + kv[3, i, j])
    return res, min(m1, m2, m3, m4)


def grid_schwarz_extrema(const double[:, :, ::1] g_window, const double[::1] weights, int center,
                         const double[:, ::1] u_center, double h, double rhs):
    cdef Py_ssize_t K = g_window.shape[0], N = g_window.shape[1]
    cdef Py_ssize_t i, j, k, ip, im, jp, jm
    cdef double scale = 1.0 / (4.0 * h * h)
    cdef double r, rmax = -INFINITY, rmin = INFINITY
    cdef double w[8]
    cdef const double* gk[8]
    cdef double* acc
    cdef const double* uc
    cdef const double* uu
    cdef const double* ud
    cdef const double* gc
    if K > 8:
        raise ValueError("at most 8 time levels")
    buf = np.empty(N)
    cdef double[::1] accv = buf
    acc = &accv[0]
    for k in range(K):
        w[k] = weights[k]
    with nogil:
        for i in range(N):
            ip = i + 1 if i + 1 < N else 0
            im = i - 1 if i > 0 else N - 1
            for k in range(K):
                gk[k] = &g_window[k, i, 0]
            uc = &u_center[i, 0]
            uu = &u_center[ip, 0]
            ud = &u_center[im, 0]
            gc = &g_window[center, i, 0]
            # acc = d_t g + lap u, then residual
            acc[0] = uu[0] + ud[0] + uc[1] + uc[N - 1] - 4.0 * uc[0]
            for j in range(1, N - 1):
                acc[j] = uu[j] + ud[j] + uc[j + 1] + uc[j - 1] - 4.0 * uc[j]
            acc[N - 1] = uu[N - 1] + ud[N - 1] + uc[0] + uc[N - 2] - 4.0 * uc[N - 1]
            for j in range(N):
                acc[j] = acc[j] * scale
            for k in range(K):
                for j in range(N):
                    acc[j] += w[k] * gk[k][j]
            for j in range(N):
                r = -acc[j] / gc[j] - rhs
                if r > rmax:
                    rmax = r
                if r < rmin:
                    rmin = r
    return rmax, rmin


def grid_fields(const double[:, ::1] psi, double t, double h, double gflat,
                double[:, ::1] g_out, double[:, ::1] u_out):
    cdef Py_ssize_t N = psi.shape[0]
    cdef Py_ssize_t i, j, ip, im
    cdef double base = gflat * exp(-t)
    cdef double scale = 1.0 / (4.0 * h * h * base)
    cdef double rmin = INFINITY, rmax = -INFINITY
    cdef double* row
    cdef double* urow
    cdef const double* pc
    cdef const double* pu
    cdef const double* pd
    with nogil:
        for i in range(N):
            ip = i + 1 if i + 1 < N else 0
            im = i - 1 if i > 0 else N - 1
            urow = &u_out[i, 0]
            pc = &psi[i, 0]
            pu = &psi[ip, 0]
            pd = &psi[im, 0]
            urow[0] = scale * (pu[0] + pd[0] + pc[1] + pc[N - 1] - 4.0 * pc[0])
            for j in range(1, N - 1):
                urow[j] = scale * (pu[j] + pd[j] + pc[j + 1] + pc[j - 1] - 4.0 * pc[j])
            urow[N - 1] = scale * (pu[N - 1] + pd[N - 1] + pc[0] + pc[N - 2] - 4.0 * pc[N - 1])
            for j in range(N):
                if urow[j] < rmin:
                    rmin = urow[j]
                if urow[j] > rmax:
                    rmax = urow[j]
        for i in range(N):
            row = &g_out[i, 0]
            urow = &u_out[i, 0]
            for j in range(N):
                row[j] = base * (1.0 + urow[j])
        if rmin > -1.0:
            for i in range(N):
                urow = &u_out[i, 0]
                for j in range(N):
                    urow[j] = -log1p(urow[j])
    return base * (1.0 + rmin), base * (1.0 + rmax)
