# cython: boundscheck=False, wraparound=False, cdivision=True
"""Hot inner loop of the alternating-minimization solver.

One call runs the fixed-lambda marginal iteration
    P(u|x) = q(u) * tilt(x,u) / Z(x),   q <- sum_x px(x) P(u|x)
until the sup-norm change of q drops below tol_q or max_iter is reached.
`q` is updated in place; the return value is the iteration count.

Preconditions (enforced by the driver): px > 0, every row of tilt has its
maximum entry equal to 1, q > 0 initially.
"""

import numpy as np


def ba_iterate(double[::1] px, double[:, ::1] tilt, double[::1] q,
               double tol_q, long max_iter):
    cdef Py_ssize_t m = px.shape[0]
    cdef Py_ssize_t k = q.shape[0]
    qnew_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] qnew = qnew_arr
    cdef Py_ssize_t it, x, u
    cdef double z, w, s, delta, diff
    cdef long iters = 0

    with nogil:
        for it in range(max_iter):
            for u in range(k):
                qnew[u] = 0.0
            for x in range(m):
                z = 0.0
                for u in range(k):
                    z += q[u] * tilt[x, u]
                w = px[x] / z
                for u in range(k):
                    qnew[u] += w * q[u] * tilt[x, u]
            s = 0.0
            for u in range(k):
                s += qnew[u]
            delta = 0.0
            for u in range(k):
                qnew[u] = qnew[u] / s
                diff = qnew[u] - q[u]
                if diff < 0.0:
                    diff = -diff
                if diff > delta:
                    delta = diff
                q[u] = qnew[u]
            iters += 1
            if delta < tol_q:
                break
    return iters
