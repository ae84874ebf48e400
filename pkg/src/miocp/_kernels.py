"""Compiled inner loops for the alternating iteration.

The alternation is a few tiny dense matrix products per stage, repeated up to
millions of times, so the hot path is hand-unrolled here under numba: no
allocation inside the loop, Cholesky and triangular solves written as plain
loops (LAPACK call overhead dwarfs the arithmetic at these sizes), and
objective bookkeeping gated on the recording schedule.  A separate scalar
path covers single-input single-state instances, where the whole update is a
handful of flops.

Status codes returned by the run kernels:
    0  iteration budget exhausted
    1  residual tolerance reached
    2  recorded objective increased beyond the allowed slack
    3  numerical failure (lost positive definiteness or non-finite update)
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["run_general", "run_scalar", "scalar_objective_grid"]


@njit(cache=True, inline="always")
def _chol(M, L):
    """Lower Cholesky factor of M into L; False if a pivot is not positive."""
    d = M.shape[0]
    for j in range(d):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, d):
            t = M[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return True


@njit(cache=True, inline="always")
def _cho_solve(L, B, X):
    """Solve (L L') X = B with L lower triangular; B and X are (d, p)."""
    d, p = B.shape
    for j in range(p):
        for i in range(d):
            s = B[i, j]
            for k in range(i):
                s -= L[i, k] * X[k, j]
            X[i, j] = s / L[i, i]
        for i in range(d - 1, -1, -1):
            s = X[i, j]
            for k in range(i + 1, d):
                s -= L[k, i] * X[k, j]
            X[i, j] = s / L[i, i]
    return X


@njit(cache=True, inline="always")
def _forward_solve(L, B, X):
    """Solve L X = B with L lower triangular; B and X are (d, p)."""
    d, p = B.shape
    for j in range(p):
        for i in range(d):
            s = B[i, j]
            for k in range(i):
                s -= L[i, k] * X[k, j]
            X[i, j] = s / L[i, i]
    return X


@njit(cache=True, inline="always")
def _trdot_sym(A, B):
    """Trace of A @ B for symmetric A and B."""
    d = A.shape[0]
    s = 0.0
    for i in range(d):
        for j in range(d):
            s += A[i, j] * B[i, j]
    return s


@njit(cache=True)
def _backward_general(A, B, R, F, Sw, eps, sigma, Spi, P, Pi, Pi_new,
                      S, LS, SQ, M, LM, W, G, H, T1, T2, want_obj):
    """One backward sweep: fills Spi and P per stage, leaves Pi at stage 0.

    Returns (objective accumulator, ok).  The accumulator collects the
    temperature-weighted log-determinant ratios plus the process-noise traces
    and is only meaningful when want_obj is True; the stage-0 trace term is
    added by the caller.
    """
    T = A.shape[0]
    n = A.shape[1]
    m = B.shape[2]
    obj_acc = 0.0
    for i in range(n):
        for j in range(n):
            Pi[i, j] = F[i, j]
    for k in range(T - 1, -1, -1):
        if want_obj:
            obj_acc += _trdot_sym(Pi, Sw[k])
        # T1 = Pi @ B_k ; S = R_k + B_k' T1, mirrored to exact symmetry
        for i in range(n):
            for j in range(m):
                s = 0.0
                for l in range(n):
                    s += Pi[i, l] * B[k, l, j]
                T1[i, j] = s
        for i in range(m):
            for j in range(i, m):
                s = R[k, i, j]
                for l in range(n):
                    s += B[k, l, i] * T1[l, j]
                S[i, j] = s
                S[j, i] = s
        if not _chol(S, LS):
            return 0.0, False
        for i in range(m):
            for j in range(m):
                M[i, j] = eps if i == j else 0.0
        _cho_solve(LS, M, SQ)
        for i in range(m):
            for j in range(i + 1, m):
                v = 0.5 * (SQ[i, j] + SQ[j, i])
                SQ[i, j] = v
                SQ[j, i] = v
        for i in range(m):
            for j in range(m):
                M[i, j] = sigma[k, i, j] + SQ[i, j]
        if not _chol(M, LM):
            return 0.0, False
        if want_obj:
            # log det(sigma+SQ) - log det(SQ), dets read off the factors of
            # M and of S (det SQ = eps^m / det S)
            ld = 0.0
            for i in range(m):
                ld += np.log(LM[i, i]) + np.log(LS[i, i])
            obj_acc += eps * (2.0 * ld - m * np.log(eps))
        _forward_solve(LM, SQ, W)
        # Spi_k = SQ - W' W, exactly symmetric by construction
        for i in range(m):
            for j in range(i, m):
                s = SQ[i, j]
                for l in range(m):
                    s -= W[l, i] * W[l, j]
                Spi[k, i, j] = s
                Spi[k, j, i] = s
        # T2 = Pi @ A_k ; G = B_k' T2 ; H = Spi_k @ G ; P_k = -H / eps
        for i in range(n):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += Pi[i, l] * A[k, l, j]
                T2[i, j] = s
        for i in range(m):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += B[k, l, i] * T2[l, j]
                G[i, j] = s
        for i in range(m):
            for j in range(n):
                s = 0.0
                for l in range(m):
                    s += Spi[k, i, l] * G[l, j]
                H[i, j] = s
                P[k, i, j] = -s / eps
        # Pi <- A_k' T2 - G' H / eps, mirrored
        for i in range(n):
            for j in range(i, n):
                s = 0.0
                for l in range(n):
                    s += A[k, l, i] * T2[l, j]
                for l in range(m):
                    s -= G[l, i] * H[l, j] / eps
                Pi_new[i, j] = s
        for i in range(n):
            for j in range(i, n):
                Pi[i, j] = Pi_new[i, j]
                Pi[j, i] = Pi_new[i, j]
    return obj_acc, True


@njit(cache=True)
def _forward_general(A, B, Sw, Sx0, sigma, Spi, P, sigma_next,
                     Sx, Sx_new, T3, T4, T5, U1):
    """One forward sweep: next prior covariances and the max stage increment."""
    T = A.shape[0]
    n = A.shape[1]
    m = B.shape[2]
    for i in range(n):
        for j in range(n):
            Sx[i, j] = Sx0[i, j]
    res_max = 0.0
    for k in range(T):
        for i in range(m):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += P[k, i, l] * Sx[l, j]
                T3[i, j] = s
        acc = 0.0
        for i in range(m):
            for j in range(i, m):
                s = Spi[k, i, j]
                for l in range(n):
                    s += T3[i, l] * P[k, j, l]
                sigma_next[k, i, j] = s
                sigma_next[k, j, i] = s
        for i in range(m):
            for j in range(m):
                d = sigma_next[k, i, j] - sigma[k, i, j]
                acc += d * d
        res_k = np.sqrt(acc)
        if res_k > res_max:
            res_max = res_k
        if k < T - 1:
            for i in range(n):
                for j in range(n):
                    s = A[k, i, j]
                    for l in range(m):
                        s += B[k, i, l] * P[k, l, j]
                    T4[i, j] = s
            for i in range(n):
                for j in range(n):
                    s = 0.0
                    for l in range(n):
                        s += T4[i, l] * Sx[l, j]
                    T5[i, j] = s
            for i in range(n):
                for j in range(m):
                    s = 0.0
                    for l in range(m):
                        s += B[k, i, l] * Spi[k, l, j]
                    U1[i, j] = s
            for i in range(n):
                for j in range(i, n):
                    s = Sw[k, i, j]
                    for l in range(n):
                        s += T5[i, l] * T4[j, l]
                    for l in range(m):
                        s += U1[i, l] * B[k, j, l]
                    Sx_new[i, j] = s
            for i in range(n):
                for j in range(i, n):
                    Sx[i, j] = Sx_new[i, j]
                    Sx[j, i] = Sx_new[i, j]
    return res_max


@njit(cache=True)
def run_general(A, B, R, F, Sw, Sx0, eps, sigma, max_iters, tol,
                record_every, slack, rec_idx, rec_sig, rec_obj, rec_res):
    """Iterate the alternation on matrix-valued instances.

    sigma (T, m, m) holds the initial prior covariances on entry and the
    final iterate on exit.  Records land in the rec_* buffers at every
    record_every-th iterate and at the final one; each record's objective and
    residual are evaluated at that same iterate (the residual is the norm of
    the update the iterate WOULD take, which is exactly the fixed-point
    defect).  A tolerance of zero disables the residual stop.  Returns
    (records written, final iterate index, status).
    """
    T = A.shape[0]
    n = A.shape[1]
    m = B.shape[2]
    Pi = np.empty((n, n))
    Pi_new = np.empty((n, n))
    S = np.empty((m, m))
    LS = np.empty((m, m))
    SQ = np.empty((m, m))
    M = np.empty((m, m))
    LM = np.empty((m, m))
    W = np.empty((m, m))
    G = np.empty((m, n))
    H = np.empty((m, n))
    T1 = np.empty((n, m))
    T2 = np.empty((n, n))
    T3 = np.empty((m, n))
    T4 = np.empty((n, n))
    T5 = np.empty((n, n))
    U1 = np.empty((n, m))
    Spi = np.empty((T, m, m))
    P = np.empty((T, m, n))
    sigma_next = np.empty((T, m, m))
    Sx = np.empty((n, n))
    Sx_new = np.empty((n, n))
    prev_obj = np.inf
    n_rec = 0
    t = 0
    while True:
        want_obj = (t % record_every == 0) or (t >= max_iters)
        obj_acc, ok = _backward_general(A, B, R, F, Sw, eps, sigma, Spi, P,
                                        Pi, Pi_new, S, LS, SQ, M, LM, W, G, H,
                                        T1, T2, want_obj)
        if not ok:
            return n_rec, t, 3
        res = _forward_general(A, B, Sw, Sx0, sigma, Spi, P, sigma_next,
                               Sx, Sx_new, T3, T4, T5, U1)
        if not np.isfinite(res):
            return n_rec, t, 3
        converged = tol > 0.0 and res <= tol
        final = converged or t >= max_iters
        if want_obj or final:
            if not want_obj:
                obj_acc, ok = _backward_general(A, B, R, F, Sw, eps, sigma,
                                                Spi, P, Pi, Pi_new, S, LS, SQ,
                                                M, LM, W, G, H, T1, T2, True)
                if not ok:
                    return n_rec, t, 3
            obj = 0.5 * (obj_acc + _trdot_sym(Pi, Sx0))
            rec_idx[n_rec] = t
            rec_sig[n_rec] = sigma
            rec_obj[n_rec] = obj
            rec_res[n_rec] = res
            n_rec += 1
            if obj > prev_obj + slack:
                return n_rec, t, 2
            prev_obj = obj
        if final:
            return n_rec, t, (1 if converged else 0)
        for k in range(T):
            for i in range(m):
                for j in range(m):
                    sigma[k, i, j] = sigma_next[k, i, j]
        t += 1


@njit(cache=True)
def _backward_scalar(a, b, r, f, sw, eps, sigma, spi, p, want_obj):
    """Scalar backward sweep; returns (objective accumulator, stage-0 weight, ok)."""
    T = a.shape[0]
    pi = f
    obj_acc = 0.0
    for k in range(T - 1, -1, -1):
        s = r[k] + b[k] * pi * b[k]
        if not s > 0.0:
            return 0.0, 0.0, False
        sq = eps / s
        mden = sigma[k] + sq
        if not mden > 0.0:
            return 0.0, 0.0, False
        if want_obj:
            obj_acc += eps * np.log(mden / sq) + pi * sw[k]
        spi_k = sq - sq * sq / mden
        g = b[k] * pi * a[k]
        spi[k] = spi_k
        p[k] = -spi_k * g / eps
        pi = a[k] * pi * a[k] - g * spi_k * g / eps
    return obj_acc, pi, True


@njit(cache=True)
def run_scalar(a, b, r, f, sw, sx0, eps, sigma, max_iters, tol,
               record_every, slack, rec_idx, rec_sig, rec_obj, rec_res):
    """Single-state single-input variant of run_general; same contract.

    All per-stage data are flat float arrays of length T and sigma is the
    length-T covariance vector, updated in place.
    """
    T = a.shape[0]
    spi = np.empty(T)
    p = np.empty(T)
    sigma_next = np.empty(T)
    prev_obj = np.inf
    n_rec = 0
    t = 0
    while True:
        want_obj = (t % record_every == 0) or (t >= max_iters)
        obj_acc, pi0, ok = _backward_scalar(a, b, r, f, sw, eps, sigma,
                                            spi, p, want_obj)
        if not ok:
            return n_rec, t, 3
        sx = sx0
        res = 0.0
        for k in range(T):
            sn = spi[k] + p[k] * sx * p[k]
            d = sn - sigma[k]
            if d < 0.0:
                d = -d
            if d > res:
                res = d
            sigma_next[k] = sn
            if k < T - 1:
                acl = a[k] + b[k] * p[k]
                sx = acl * acl * sx + b[k] * spi[k] * b[k] + sw[k]
        if not np.isfinite(res):
            return n_rec, t, 3
        converged = tol > 0.0 and res <= tol
        final = converged or t >= max_iters
        if want_obj or final:
            if not want_obj:
                obj_acc, pi0, ok = _backward_scalar(a, b, r, f, sw, eps,
                                                    sigma, spi, p, True)
                if not ok:
                    return n_rec, t, 3
            obj = 0.5 * (obj_acc + pi0 * sx0)
            rec_idx[n_rec] = t
            rec_sig[n_rec] = sigma
            rec_obj[n_rec] = obj
            rec_res[n_rec] = res
            n_rec += 1
            if obj > prev_obj + slack:
                return n_rec, t, 2
            prev_obj = obj
        if final:
            return n_rec, t, (1 if converged else 0)
        for k in range(T):
            sigma[k] = sigma_next[k]
        t += 1


@njit(cache=True)
def scalar_objective_grid(a, b, r, f, sw, sx0, eps, grid, stage, sigma, out):
    """Reduced objective over a grid of stage covariances, scalar instances.

    Evaluates the objective with sigma[stage] swept over the grid while all
    other stages stay at the values in sigma.  Used for brute-force
    minimization; agrees with the reference implementation to rounding.
    """
    T = a.shape[0]
    work = np.empty(T)
    for k in range(T):
        work[k] = sigma[k]
    for idx in range(grid.shape[0]):
        work[stage] = grid[idx]
        pi = f
        acc = 0.0
        for k in range(T - 1, -1, -1):
            s = r[k] + b[k] * pi * b[k]
            sq = eps / s
            mden = work[k] + sq
            acc += eps * np.log(mden / sq) + pi * sw[k]
            g = b[k] * pi * a[k]
            spi_k = sq - sq * sq / mden
            pi = a[k] * pi * a[k] - g * spi_k * g / eps
        out[idx] = 0.5 * (acc + pi * sx0)
    return out
