# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled distillation loop for a linear generator against a Gaussian target."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    SDS = 0
    VSD = 1
    ESD_EXACT = 2
    ESD_CFG = 3


cdef int _chol_solve(double* M, double* rhs, double* out, int D) noexcept nogil:
    """Solve M out = rhs for SPD M (overwritten with its Cholesky factor)."""
    cdef int i, j, p
    cdef double acc
    for j in range(D):
        acc = M[j * D + j]
        for p in range(j):
            acc -= M[j * D + p] * M[j * D + p]
        if acc <= 0.0:
            return -1
        M[j * D + j] = sqrt(acc)
        for i in range(j + 1, D):
            acc = M[i * D + j]
            for p in range(j):
                acc -= M[i * D + p] * M[j * D + p]
            M[i * D + j] = acc / M[j * D + j]
    for i in range(D):
        acc = rhs[i]
        for p in range(i):
            acc -= M[i * D + p] * out[p]
        out[i] = acc / M[i * D + i]
    for i in range(D - 1, -1, -1):
        acc = out[i]
        for p in range(i + 1, D):
            acc -= M[p * D + i] * out[p]
        out[i] = acc / M[i * D + i]
    return 0


def distill_linear_gaussian(double[::1] params0, int D, int k,
                            double[::1] mu, double[:, ::1] sigma_star, double guidance,
                            int method, double lam,
                            double[:, ::1] cams, double[::1] alphas, double[::1] sigmas,
                            double[::1] omegas, double[:, ::1] eps, double[::1] lrs,
                            int log_every, double guard):
    cdef Py_ssize_t n = alphas.shape[0]
    cdef int P = D + D * k
    cdef Py_ssize_t n_log = 0
    cdef Py_ssize_t s
    cdef int i, j, p, status
    cdef double a, sg, om, lr, acc, norm2, gnorm2, r_i
    cdef bint need_marg = method == ESD_EXACT or method == ESD_CFG
    cdef long abort_step = -1

    theta_arr = np.array(params0, dtype=np.float64, copy=True)
    cdef double[::1] theta = theta_arr
    max_log = n // log_every + 2
    steps_arr = np.empty(max_log, dtype=np.int64)
    snaps_arr = np.empty((max_log, P), dtype=np.float64)
    norms_arr = np.empty(max_log, dtype=np.float64)
    cdef long long[::1] log_steps = steps_arr
    cdef double[:, ::1] snaps = snaps_arr
    cdef double[::1] norms = norms_arr

    cdef double* g = <double*> malloc(D * sizeof(double))
    cdef double* x = <double*> malloc(D * sizeof(double))
    cdef double* rhs = <double*> malloc(D * sizeof(double))
    cdef double* sp = <double*> malloc(D * sizeof(double))
    cdef double* sm = <double*> malloc(D * sizeof(double))
    cdef double* r = <double*> malloc(D * sizeof(double))
    cdef double* M = <double*> malloc(D * D * sizeof(double))
    cdef double* grad = <double*> malloc(P * sizeof(double))
    if not (g and x and rhs and sp and sm and r and M and grad):
        free(g); free(x); free(rhs); free(sp); free(sm); free(r); free(M); free(grad)
        raise MemoryError()

    try:
        with nogil:
            for s in range(n):
                a = alphas[s]
                sg = sigmas[s]
                om = omegas[s]
                lr = lrs[s]
                # render and diffuse
                for i in range(D):
                    acc = theta[i]
                    for j in range(k):
                        acc = acc + theta[D + i * k + j] * cams[s, j]
                    g[i] = acc
                    x[i] = a * g[i] + sg * eps[s, i]
                # prior score: (a^2 S* + s^2 I)^-1 (a mu - x)
                for i in range(D):
                    for j in range(D):
                        M[i * D + j] = a * a * sigma_star[i, j]
                    M[i * D + i] = M[i * D + i] + sg * sg
                    rhs[i] = a * mu[i] - x[i]
                status = _chol_solve(M, rhs, sp, D)
                if status != 0:
                    abort_step = s
                    break
                for i in range(D):
                    sp[i] = guidance * sp[i]
                if need_marg:
                    # marginal render score: (a^2 A A^T + s^2 I)^-1 (a b - x)
                    for i in range(D):
                        for j in range(D):
                            acc = 0.0
                            for p in range(k):
                                acc = acc + theta[D + i * k + p] * theta[D + j * k + p]
                            M[i * D + j] = a * a * acc
                        M[i * D + i] = M[i * D + i] + sg * sg
                        rhs[i] = a * theta[i] - x[i]
                    status = _chol_solve(M, rhs, sm, D)
                    if status != 0:
                        abort_step = s
                        break
                for i in range(D):
                    if method == SDS:
                        r_i = sg * sp[i] + eps[s, i]
                    elif method == VSD:
                        r_i = sg * (sp[i] - (a * g[i] - x[i]) / (sg * sg))
                    elif method == ESD_EXACT:
                        r_i = sg * (sp[i] - lam * sm[i])
                    else:
                        r_i = sg * ((sp[i] - lam * sm[i]) - (1.0 - lam) * ((a * g[i] - x[i]) / (sg * sg)))
                    r[i] = -om * r_i
                gnorm2 = 0.0
                for i in range(D):
                    grad[i] = r[i]
                    for j in range(k):
                        grad[D + i * k + j] = r[i] * cams[s, j]
                for p in range(P):
                    gnorm2 = gnorm2 + grad[p] * grad[p]
                    theta[p] = theta[p] - lr * grad[p]
                norm2 = 0.0
                for p in range(P):
                    norm2 = norm2 + theta[p] * theta[p]
                if not isfinite(norm2) or sqrt(norm2) > guard:
                    abort_step = s
                if abort_step >= 0 or s % log_every == 0 or s == n - 1:
                    log_steps[n_log] = s
                    for p in range(P):
                        snaps[n_log, p] = theta[p]
                    norms[n_log] = sqrt(gnorm2)
                    n_log += 1
                if abort_step >= 0:
                    break
    finally:
        free(g); free(x); free(rhs); free(sp); free(sm); free(r); free(M); free(grad)

    return steps_arr[:n_log].copy(), snaps_arr[:n_log].copy(), norms_arr[:n_log].copy(), theta_arr, int(abort_step)
