"""g2 estimation from timestamp streams.

Histograms pairwise delays with a sliding-window sweep (compiled kernel
when available, numpy fallback otherwise), normalizes by the measured
mean rates over the overlap window, and attaches Poisson error bars.

Auto mode uses positive delays only (the physical function is symmetric
and the zero-delay self-pair is an artifact); cross mode histograms
signed delays, verifies the +/- symmetry, and reports the trace on |tau|.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pairhist_np
from .errors import InvalidParamsError
from .trace import CorrelationTrace
from .trajectories import PS_PER_US, ClickStream

try:
    from . import _pairhist_cy
except ImportError:  # extension not built; numpy path covers everything
    _pairhist_cy = None


def available_backends() -> list[str]:
    return ["cython", "numpy"] if _pairhist_cy is not None else ["numpy"]


def default_backend() -> str:
    forced = os.environ.get("CQED_CORRELATOR", "").strip().lower()
    if forced in ("numpy", "python"):
        return "numpy"
    if forced == "cython":
        if _pairhist_cy is None:
            raise InvalidParamsError("CQED_CORRELATOR=cython but extension not built")
        return "cython"
    return "cython" if _pairhist_cy is not None else "numpy"


def _kernel(backend: str | None):
    name = backend or default_backend()
    if name == "cython":
        if _pairhist_cy is None:
            raise InvalidParamsError("compiled correlator backend not available")
        return _pairhist_cy.pair_histogram, "cython"
    if name in ("numpy", "python"):
        return _pairhist_np.pair_histogram, "numpy"
    raise InvalidParamsError(f"unknown correlator backend {name!r}")


@dataclass(frozen=True)
class CorrelatorConfig:
    bin_width_ns: float
    tau_max_us: float
    mode: str = "cross"

    def __post_init__(self):
        if self.bin_width_ns <= 0:
            raise InvalidParamsError("bin width must be positive")
        if self.tau_max_us * 1000.0 < 10.0 * self.bin_width_ns:
            raise InvalidParamsError("tau_max must cover at least 10 bins")
        if self.mode not in ("auto", "cross"):
            raise InvalidParamsError(f"mode must be auto|cross, got {self.mode!r}")

    @property
    def bin_ps(self) -> int:
        return int(round(self.bin_width_ns * 1000.0))

    @property
    def n_bins(self) -> int:
        return int(self.tau_max_us * PS_PER_US // self.bin_ps)


def _check_sorted(ts: np.ndarray, name: str):
    if ts.size == 0:
        raise InvalidParamsError(f"{name} is empty")
    d = np.diff(ts.astype(np.int64))
    bad = np.nonzero(d <= 0)[0]
    if bad.size:
        raise InvalidParamsError(
            f"{name} unsorted: first inversion at index {int(bad[0]) + 1}"
        )


def correlate(
    s1: ClickStream,
    s2: ClickStream | None,
    cfg: CorrelatorConfig,
    backend: str | None = None,
) -> CorrelationTrace:
    """Estimate g2(tau) from one stream (auto) or two streams (cross)."""
    kern, backend_name = _kernel(backend)
    bin_ps = cfg.bin_ps
    nb = cfg.n_bins
    tau_max_ps = nb * bin_ps

    t1 = s1.timestamps.astype(np.int64)
    _check_sorted(t1, "stream 1")
    if cfg.mode == "auto":
        if s2 is not None and s2 is not s1:
            raise InvalidParamsError("auto mode takes a single stream")
        t2, dur2 = t1, s1.duration_ps
    else:
        if s2 is None:
            raise InvalidParamsError("cross mode needs two streams")
        t2 = s2.timestamps.astype(np.int64)
        _check_sorted(t2, "stream 2")
        dur2 = s2.duration_ps

    t_ov = min(int(s1.duration_ps), int(dur2))
    if t_ov <= 0:
        raise InvalidParamsError("streams do not overlap")
    t1 = t1[t1 < t_ov]
    t2 = t2[t2 < t_ov]
    if t1.size == 0 or t2.size == 0:
        raise InvalidParamsError("no events inside the overlap window")

    meta = {
        "mode": cfg.mode,
        "bin_width_ns": cfg.bin_width_ns,
        "backend": backend_name,
        "overlap_us": t_ov / PS_PER_US,
        "rate1_per_us": t1.size / (t_ov / PS_PER_US),
        "rate2_per_us": t2.size / (t_ov / PS_PER_US),
    }
    if cfg.mode == "auto":
        counts = np.zeros(nb, dtype=np.int64)
        kern(t1, t2, 1, tau_max_ps, bin_ps, counts)
        # E[pairs per bin] for a flat process: n * rate * bin
        norm = t1.size * (t2.size / t_ov) * bin_ps
    else:
        signed = np.zeros(2 * nb, dtype=np.int64)
        kern(t1, t2, -tau_max_ps, tau_max_ps - 1, bin_ps, signed)
        pos = signed[nb:]
        neg = signed[:nb][::-1]
        counts = pos + neg
        tot_p, tot_n = int(pos.sum()), int(neg.sum())
        if tot_p + tot_n > 0:
            meta["symmetry_z"] = (tot_p - tot_n) / np.sqrt(tot_p + tot_n)
        norm = t1.size * (t2.size / t_ov) * 2.0 * bin_ps
    tau_us = (np.arange(nb) + 0.5) * bin_ps / PS_PER_US
    g2 = counts / norm
    stderr = np.sqrt(counts) / norm
    meta["norm_pairs_per_bin"] = norm
    return CorrelationTrace(tau_us=tau_us, g2=g2, stderr=stderr, pairs=counts, meta=meta)


def rebin(trace: CorrelationTrace, factor: int) -> CorrelationTrace:
    """Merge groups of `factor` bins, recomputing g2 and errors from counts."""
    if factor < 1 or int(factor) != factor:
        raise InvalidParamsError("rebin factor must be a positive integer")
    factor = int(factor)
    if factor == 1:
        return trace
    n = len(trace)
    if n % factor:
        raise InvalidParamsError(f"factor {factor} does not divide {n} bins")
    if trace.pairs is None or "norm_pairs_per_bin" not in trace.meta:
        raise InvalidParamsError("trace lacks raw pair counts; cannot rebin")
    counts = trace.pairs.reshape(-1, factor).sum(axis=1)
    tau = trace.tau_us.reshape(-1, factor).mean(axis=1)
    norm = trace.meta["norm_pairs_per_bin"] * factor
    meta = dict(trace.meta)
    meta["norm_pairs_per_bin"] = norm
    meta["bin_width_ns"] = trace.meta.get("bin_width_ns", 0.0) * factor
    return CorrelationTrace(
        tau_us=tau,
        g2=counts / norm,
        stderr=np.sqrt(counts) / norm,
        pairs=counts,
        meta=meta,
    )
