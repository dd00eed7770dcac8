"""Numba-compiled inner loops for per-record hot paths."""

import numpy as np
from numba import njit


@njit(cache=True)
def bm_update_batch(sub, col, keys, vals, cand, active, count, flag, pbm):
    """Sequential weighted majority-vote update over a record batch.

    sub/col: precomputed sub-stream and column indices per record.
    Zero-valued records leave all state untouched. Within a sub-stream
    the candidate/counter pair follows majority-vote cancellation:
    matching keys add weight, others subtract, and a sign flip hands
    the candidacy to the new key with the leftover weight (clearing the
    exactness flag). The column accumulator always absorbs the value.
    """
    for n in range(sub.shape[0]):
        v = vals[n]
        if v == np.uint64(0):
            continue
        s = sub[n]
        j = col[n]
        w = keys[n]
        if not active[s]:
            active[s] = True
            cand[s] = w
            count[s] = v
            pbm[s, j] = v
        elif cand[s] == w:
            count[s] += v
            pbm[s, j] += v
        elif count[s] > np.uint64(0):
            if v > count[s]:
                cand[s] = w
                count[s] = v - count[s]
                flag[s] = np.uint8(0)
            else:
                count[s] -= v
            pbm[s, j] += v
        else:
            cand[s] = w
            count[s] = v
            flag[s] = np.uint8(0)
            pbm[s, j] += v
