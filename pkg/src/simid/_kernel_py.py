"""Pure-Python (numpy) fallback for the compiled solver kernel.

Same contract as simid._kernel.ba_iterate: fixed-lambda alternating update
on the output marginal q (in place), returning the iteration count.
"""

import numpy as np


def ba_iterate(px, tilt, q, tol_q, max_iter):
    iters = 0
    for _ in range(max_iter):
        z = tilt @ q
        w = px / z
        qnew = q * (w @ tilt)
        qnew /= qnew.sum()
        delta = float(np.max(np.abs(qnew - q)))
        q[:] = qnew
        iters += 1
        if delta < tol_q:
            break
    return iters
