"""Numpy fallback for the pair-delay histogram.

Same contract as the compiled kernel in `_pairhist_cy`: count pairs with
s2[j] - s1[i] in [dmin, dmax] into (d - dmin) // bin_ps bins.  Window
bounds come from vectorized searchsorted; pair delays are materialized
in bounded-size chunks to keep memory flat.
"""

from __future__ import annotations

import numpy as np

_CHUNK_PAIRS = 8_000_000


def pair_histogram(s1, s2, dmin, dmax, bin_ps, counts):
    t1 = np.asarray(s1, dtype=np.int64)
    t2 = np.asarray(s2, dtype=np.int64)
    nbins = counts.shape[0]
    lo = np.searchsorted(t2, t1 + dmin, side="left")
    hi = np.searchsorted(t2, t1 + dmax, side="right")
    reps = hi - lo
    total = 0
    start = 0
    cum = np.concatenate([[0], np.cumsum(reps)])
    while start < t1.size:
        # grow the chunk until its pair budget is hit
        stop = int(np.searchsorted(cum, cum[start] + _CHUNK_PAIRS, side="right")) - 1
        stop = max(stop, start + 1)
        r = reps[start:stop]
        tot = int(r.sum())
        if tot:
            offsets = np.arange(tot) - np.repeat(cum[start:stop] - cum[start], r)
            idx2 = np.repeat(lo[start:stop], r) + offsets
            d = t2[idx2] - np.repeat(t1[start:stop], r)
            bins = (d - dmin) // bin_ps
            keep = bins < nbins
            counts += np.bincount(bins[keep], minlength=nbins).astype(np.int64)
            total += int(keep.sum())
        start = stop
    return total
