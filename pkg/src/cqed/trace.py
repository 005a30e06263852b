"""Correlation traces and their CSV serialization.

CSV layout: optional comment lines starting with '#', then the header
`tau_us,g2,stderr` (plus `,pairs` when raw pair counts are attached),
then one row per delay bin at full float precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidParamsError


@dataclass
class CorrelationTrace:
    """g2 values on a tau grid, with standard errors and raw pair counts.

    tau_us is in microseconds.  stderr entries are zero for analytic
    traces.  pairs is present only for histogram-based estimates; meta
    carries whatever the producer wants to record (bin width, rates,
    seed, normalization).
    """

    tau_us: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray | None = None
    pairs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau_us = np.asarray(self.tau_us, dtype=float)
        self.g2 = np.asarray(self.g2, dtype=float)
        if self.tau_us.shape != self.g2.shape:
            raise InvalidParamsError("tau and g2 grids differ in shape")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.g2.shape:
                raise InvalidParamsError("stderr shape mismatch")
        if self.pairs is not None:
            self.pairs = np.asarray(self.pairs)

    def __len__(self):
        return self.tau_us.size

    def with_meta(self, **extra) -> "CorrelationTrace":
        meta = dict(self.meta)
        meta.update(extra)
        return replace(self, meta=meta)


def write_trace_csv(trace: CorrelationTrace, path, header_lines: list[str] | None = None):
    """Write a trace; header_lines are emitted as leading '#' comments."""
    path = Path(path)
    cols = ["tau_us", "g2", "stderr"]
    stderr = trace.stderr if trace.stderr is not None else np.zeros_like(trace.g2)
    data = [trace.tau_us, trace.g2, stderr]
    if trace.pairs is not None:
        cols.append("pairs")
        data.append(trace.pairs)
    with path.open("w") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        for row in zip(*data):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_trace_csv(path) -> CorrelationTrace:
    path = Path(path)
    meta = {}
    rows = []
    names = None
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("# ")
                if "=" in body:
                    key, _, val = body.partition("=")
                    meta[key.strip()] = val.strip()
                continue
            parts = line.split(",")
            if names is None:
                names = [p.strip() for p in parts]
                continue
            rows.append([float(p) for p in parts])
    if names is None or not rows:
        raise InvalidParamsError(f"{path}: no trace data found")
    arr = np.asarray(rows, dtype=float)
    cols = {name: arr[:, i] for i, name in enumerate(names)}
    if "tau_us" not in cols or "g2" not in cols:
        raise InvalidParamsError(f"{path}: missing tau_us/g2 columns")
    return CorrelationTrace(
        tau_us=cols["tau_us"],
        g2=cols["g2"],
        stderr=cols.get("stderr"),
        pairs=cols.get("pairs"),
        meta=meta,
    )
