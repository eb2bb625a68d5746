"""Numba kernel for the Goldfarb-Idnani dual active-set iteration.

Works on the oriented-constraint encoding set up by ``qp.solve_qp``:
constraint ids ``2*i`` / ``2*i+1`` are the lower / upper sides of W row
``i``, ids ``2*k + 2*j`` / ``2*k + 2*j + 1`` the lower / upper box bounds
of variable ``j``.  ``x`` and ``j_mat`` are updated in place; the active
set, its multipliers, and the triangular factor R are returned for
multiplier recovery and polishing by the caller.

All inner products against constraint normals skip zero entries, so box
and sparse-row constraints cost O(m) rather than O(m^2) per step.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAX_ITER = 2


@njit(cache=True, fastmath=False)
def _gi_core(c, w, bl, bu, lb, ub, is_eq_row, x, j_mat, tol, max_iter):
    m = x.size
    k = w.shape[0]

    r_buf = np.zeros((m, m))
    active = np.full(m, -1, dtype=np.int64)
    u = np.zeros(m)
    on = np.zeros(2 * k + 2 * m, dtype=np.bool_)
    q = 0
    n_eq = 0
    iters = 0
    status = STATUS_OPTIMAL

    d = np.empty(m)
    z = np.empty(m)
    r_dir = np.empty(m)
    nvec = np.empty(m)
    nnz_idx = np.empty(m, dtype=np.int64)
    nnz_val = np.empty(m)
    wx = np.empty(max(k, 1))

    eq_rows = np.empty(k, dtype=np.int64)
    n_eq_total = 0
    for i in range(k):
        if is_eq_row[i]:
            eq_rows[n_eq_total] = i
            n_eq_total += 1
    eq_ptr = 0

    while True:
        # ---- select the next constraint to enforce ----
        cid = -1
        forcing_eq = False
        if eq_ptr < n_eq_total:
            row = eq_rows[eq_ptr]
            sv = -bl[row]
            for col in range(m):
                sv += w[row, col] * x[col]
            cid = 2 * row if sv <= 0.0 else 2 * row + 1
            forcing_eq = True
        else:
            worst = tol
            for i in range(k):
                acc = 0.0
                for col in range(m):
                    acc += w[i, col] * x[col]
                wx[i] = acc
            for i in range(k):
                if bl[i] > -np.inf and not on[2 * i]:
                    v = bl[i] - wx[i]
                    if v > worst:
                        worst = v
                        cid = 2 * i
                if bu[i] < np.inf and not on[2 * i + 1]:
                    v = wx[i] - bu[i]
                    if v > worst:
                        worst = v
                        cid = 2 * i + 1
            for jvar in range(m):
                lo_id = 2 * k + 2 * jvar
                if lb[jvar] > -np.inf and not on[lo_id]:
                    v = lb[jvar] - x[jvar]
                    if v > worst:
                        worst = v
                        cid = lo_id
                if ub[jvar] < np.inf and not on[lo_id + 1]:
                    v = x[jvar] - ub[jvar]
                    if v > worst:
                        worst = v
                        cid = lo_id + 1
            if cid == -1:
                break  # optimal

        # ---- build the oriented normal (sparse form) ----
        nnz = 0
        if cid < 2 * k:
            row = cid // 2
            sgn = 1.0 if cid % 2 == 0 else -1.0
            bval = bl[row] if cid % 2 == 0 else -bu[row]
            for col in range(m):
                val = sgn * w[row, col]
                nvec[col] = val
                if val != 0.0:
                    nnz_idx[nnz] = col
                    nnz_val[nnz] = val
                    nnz += 1
        else:
            jvar = (cid - 2 * k) // 2
            sgn = 1.0 if (cid - 2 * k) % 2 == 0 else -1.0
            bval = lb[jvar] if sgn > 0 else -ub[jvar]
            for col in range(m):
                nvec[col] = 0.0
            nvec[jvar] = sgn
            nnz_idx[0] = jvar
            nnz_val[0] = sgn
            nnz = 1

        sval = -bval
        for t in range(nnz):
            sval += nnz_val[t] * x[nnz_idx[t]]

        u_plus = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                status = STATUS_MAX_ITER
                break

            # d = J' n, skipping zero entries of the normal
            for col in range(m):
                d[col] = 0.0
            for t in range(nnz):
                rrow = nnz_idx[t]
                val = nnz_val[t]
                for col in range(m):
                    d[col] += val * j_mat[rrow, col]

            dd = 0.0
            for col in range(m):
                dd += d[col] * d[col]
            ztn = 0.0
            for col in range(q, m):
                ztn += d[col] * d[col]
            eps_z = 1e-13 * (dd if dd > 1.0 else 1.0)

            # z = J2 @ d2, streamed row-wise
            for rrow in range(m):
                acc = 0.0
                for col in range(q, m):
                    acc += j_mat[rrow, col] * d[col]
                z[rrow] = acc

            # r = R^{-1} d1 by back-substitution
            for i in range(q - 1, -1, -1):
                s = d[i]
                for jj in range(i + 1, q):
                    s -= r_buf[i, jj] * r_dir[jj]
                r_dir[i] = s / r_buf[i, i]

            if forcing_eq and ztn <= eps_z and abs(sval) <= tol * (1.0 + abs(bval)):
                eq_ptr += 1  # redundant but consistent equality row
                break

            t1 = np.inf
            k1 = -1
            for a in range(n_eq, q):
                if r_dir[a] > 1e-12:
                    ua = u[a] if u[a] > 0.0 else 0.0
                    ratio = ua / r_dir[a]
                    if ratio < t1:
                        t1 = ratio
                        k1 = a

            t2 = np.inf
            if ztn > eps_z:
                t2 = -sval / ztn
            t = t1 if t1 < t2 else t2
            if t == np.inf:
                status = STATUS_INFEASIBLE
                break

            if t2 < np.inf:
                for col in range(m):
                    x[col] += t * z[col]
                sval += t * ztn
            for a in range(q):
                u[a] -= t * r_dir[a]
            u_plus += t

            if t == t2:
                # ---- add constraint: Householder-zero the tail of d ----
                tail_n = m - q
                delta = 0.0
                if tail_n > 1:
                    norm = 0.0
                    for col in range(q, m):
                        norm += d[col] * d[col]
                    norm = np.sqrt(norm)
                    delta = -norm if d[q] >= 0.0 else norm
                    v0 = d[q] - delta
                    vv = v0 * v0
                    for col in range(q + 1, m):
                        vv += d[col] * d[col]
                    if vv > 0.0:
                        scale = 2.0 / vv
                        for rrow in range(m):
                            acc = j_mat[rrow, q] * v0
                            for col in range(q + 1, m):
                                acc += j_mat[rrow, col] * d[col]
                            acc *= scale
                            j_mat[rrow, q] -= acc * v0
                            for col in range(q + 1, m):
                                j_mat[rrow, col] -= acc * d[col]
                elif tail_n == 1:
                    delta = d[q]
                for i in range(q):
                    r_buf[i, q] = d[i]
                r_buf[q, q] = delta
                active[q] = cid
                u[q] = u_plus
                on[cid] = True
                if cid < 2 * k and is_eq_row[cid // 2]:
                    on[cid ^ 1] = True
                q += 1
                if forcing_eq:
                    eq_ptr += 1
                    n_eq += 1
                break

            # ---- drop blocking constraint k1, re-triangularize ----
            on[active[k1]] = False
            for col in range(k1, q - 1):
                for rrow in range(q):
                    r_buf[rrow, col] = r_buf[rrow, col + 1]
            for rrow in range(q):
                r_buf[rrow, q - 1] = 0.0
            for a in range(k1, q - 1):
                active[a] = active[a + 1]
                u[a] = u[a + 1]
            active[q - 1] = -1
            u[q - 1] = 0.0
            q -= 1
            for col in range(k1, q):
                aa = r_buf[col, col]
                bb = r_buf[col + 1, col]
                if bb == 0.0:
                    continue
                h = np.hypot(aa, bb)
                cs = aa / h
                sn = bb / h
                for cc in range(col, q):
                    top = r_buf[col, cc]
                    bot = r_buf[col + 1, cc]
                    r_buf[col, cc] = cs * top + sn * bot
                    r_buf[col + 1, cc] = -sn * top + cs * bot
                r_buf[col + 1, col] = 0.0
                for rrow in range(m):
                    jc = j_mat[rrow, col]
                    jn = j_mat[rrow, col + 1]
                    j_mat[rrow, col] = cs * jc + sn * jn
                    j_mat[rrow, col + 1] = -sn * jc + cs * jn

        if status != STATUS_OPTIMAL:
            break

    return status, iters, q, n_eq, active, u, r_buf
