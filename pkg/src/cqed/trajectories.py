"""Monte Carlo wave-function synthesis of photon click streams.

A software stand-in for the detection chain: the conditional pure state
of the driven system (two-excitation truncation, explicit atoms) evolves
under the non-Hermitian generator; quantum jumps mark cavity emissions
(recorded) and atomic spontaneous emissions (unrecorded but collapsed).
Recorded emissions are thinned by the detection efficiency, split
between two detectors, and merged with background counts.

Timestamps are integers in picoseconds, stored as unsigned 64-bit; the
evolution between jumps is computed analytically from the eigensystem of
the constant generator, so there is no step-size error to tune.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import (
    IntegrationFailureError,
    InvalidParamsError,
    ScopeError,
    StreamFormatError,
    UndefinedCorrelationError,
)
from .model import RateParams
from .oracle import MAX_ORACLE_ATOMS, build_operators

PS_PER_US = 1_000_000


@dataclass(frozen=True)
class TrajectoryConfig:
    duration_us: float
    efficiency: float = 0.30
    background_per_us: float = 0.0
    split_ratio: float = 0.5
    seed: int = 0
    dead_time_ns: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.efficiency <= 1.0):
            raise InvalidParamsError("efficiency must be in [0, 1]")
        if not (0.0 <= self.split_ratio <= 1.0):
            raise InvalidParamsError("split ratio must be in [0, 1]")
        if self.duration_us <= 0:
            raise InvalidParamsError("duration must be positive")
        if self.background_per_us < 0:
            raise InvalidParamsError("background rate must be >= 0")


@dataclass
class ClickStream:
    """Ordered detection timestamps in ps plus acquisition metadata."""

    timestamps: np.ndarray
    duration_ps: int
    detector_id: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.uint64)
        if self.timestamps.size:
            if np.any(np.diff(self.timestamps.astype(np.int64)) <= 0):
                raise InvalidParamsError("timestamps must be strictly increasing")
            if int(self.timestamps[-1]) >= self.duration_ps:
                raise InvalidParamsError("timestamps must lie inside the duration")

    @property
    def duration_us(self) -> float:
        return self.duration_ps / PS_PER_US

    @property
    def rate_per_us(self) -> float:
        return self.timestamps.size / self.duration_us


class _Propagator:
    """Analytic evolution under the constant non-Hermitian generator."""

    def __init__(self, generator: np.ndarray):
        lam, V = np.linalg.eig(generator)
        W = np.linalg.inv(V)
        resid = np.max(np.abs(V @ np.diag(lam) @ W - generator))
        if resid > 1e-8 * max(1.0, np.max(np.abs(generator))):
            raise IntegrationFailureError("trajectory generator nearly defective")
        self.lam = lam
        self.V = V
        self.W = W
        self.gram = V.conj().T @ V

    def modes(self, psi: np.ndarray) -> np.ndarray:
        return self.W @ psi

    def state(self, modes: np.ndarray, dt: float) -> np.ndarray:
        return self.V @ (np.exp(self.lam * dt) * modes)

    def norm_sq(self, modes: np.ndarray, dts: np.ndarray) -> np.ndarray:
        """Squared norm of the evolved state at one or many time offsets."""
        dts = np.atleast_1d(np.asarray(dts, dtype=float))
        y = np.exp(np.multiply.outer(dts, self.lam)) * modes[None, :]
        vals = np.einsum("ti,ij,tj->t", y.conj(), self.gram, y).real
        return vals


def _draw_jump_time(prop: _Propagator, modes, u: float, t_rem: float) -> float | None:
    """Time until the survival probability first reaches u, or None if the
    trajectory survives the remaining window.

    The survival norm is monotone non-increasing, so a geometric bracket
    expansion followed by Brent refinement always succeeds.
    """
    if prop.norm_sq(modes, t_rem)[0] > u:
        return None
    scale = 1.0 / max(1e-12, -np.max(prop.lam.real))
    lo, hi = 0.0, min(1e-4 * scale, t_rem)
    while prop.norm_sq(modes, hi)[0] >= u:
        if hi >= t_rem:
            return t_rem
        lo, hi = hi, min(hi * 4.0, t_rem)
        if hi - lo < 1e-15:
            raise IntegrationFailureError("step-size underflow while locating a jump")
    return brentq(lambda dt: prop.norm_sq(modes, dt)[0] - u, lo, hi, xtol=1e-9)


def mcwf_synthesize(
    params: RateParams, atoms, cfg: TrajectoryConfig
) -> tuple[ClickStream, ClickStream]:
    """Synthesize two detector click streams from one quantum trajectory.

    atoms: explicit list of (coupling, detuning) pairs, at most four.
    Returns the streams of detector 0 and detector 1.
    """
    params.require_weak_drive()
    if len(atoms) > MAX_ORACLE_ATOMS:
        raise ScopeError(f"explicit trajectory limited to {MAX_ORACLE_ATOMS} atoms")
    if params.eps <= 0:
        raise UndefinedCorrelationError("zero drive: steady intensity vanishes")

    basis, a, n_op, sigmas, H = build_operators(params, atoms)
    decay = params.kappa * n_op + sum((params.gamma / 2.0) * (s.T @ s) for s in sigmas)
    generator = -1j * H - decay  # d psi/dt = generator @ psi
    prop = _Propagator(generator)
    jump_ops = [np.sqrt(2.0 * params.kappa) * a] + [np.sqrt(params.gamma) * s for s in sigmas]

    rng = np.random.Generator(np.random.Philox(key=[cfg.seed & (2**64 - 1), 0x7261795F]))
    psi = np.zeros(basis.dimension, dtype=complex)
    psi[0] = 1.0

    t = 0.0
    clicks = ([], [])
    while t < cfg.duration_us:
        modes = prop.modes(psi)
        dt = _draw_jump_time(prop, modes, rng.uniform(), cfg.duration_us - t)
        if dt is None:
            break
        t += dt
        psi = prop.state(modes, dt)
        amps = [op @ psi for op in jump_ops]
        weights = np.array([np.vdot(v, v).real for v in amps])
        total = weights.sum()
        if total <= 0:
            raise IntegrationFailureError("vanishing jump rates at a jump time")
        which = rng.choice(len(amps), p=weights / total)
        psi = amps[which] / np.sqrt(weights[which])
        if abs(np.vdot(psi, psi).real - 1.0) > 1e-12:
            psi = psi / np.sqrt(np.vdot(psi, psi).real)
        if which == 0 and rng.uniform() < cfg.efficiency:
            det = 0 if rng.uniform() < cfg.split_ratio else 1
            clicks[det].append(t)

    duration_ps = int(round(cfg.duration_us * PS_PER_US))
    streams = []
    for det in (0, 1):
        ts = np.asarray(clicks[det], dtype=float) * PS_PER_US
        ratio = cfg.split_ratio if det == 0 else 1.0 - cfg.split_ratio
        bg_mean = cfg.background_per_us * cfg.duration_us * ratio
        if bg_mean > 0:
            n_bg = rng.poisson(bg_mean)
            ts = np.concatenate([ts, rng.uniform(0, duration_ps, size=n_bg)])
        ts = _quantize_ps(ts, duration_ps)
        if cfg.dead_time_ns is not None:
            ts = apply_dead_time(ts, cfg.dead_time_ns * 1000.0)
        streams.append(
            ClickStream(
                timestamps=ts,
                duration_ps=duration_ps,
                detector_id=det,
                meta={"seed": cfg.seed, "efficiency": cfg.efficiency,
                      "background_per_us": cfg.background_per_us,
                      "n_atoms": len(atoms)},
            )
        )
    return streams[0], streams[1]


def _quantize_ps(times_ps: np.ndarray, duration_ps: int) -> np.ndarray:
    """Round to integer ps, keeping timestamps strictly increasing."""
    ts = np.sort(np.round(times_ps)).astype(np.int64)
    ts = ts[(ts >= 0) & (ts < duration_ps)]
    for i in range(1, ts.size):
        if ts[i] <= ts[i - 1]:
            ts[i] = ts[i - 1] + 1
    ts = ts[ts < duration_ps]
    return ts.astype(np.uint64)


def apply_dead_time(timestamps: np.ndarray, dead_ps: float) -> np.ndarray:
    """Drop clicks that follow an accepted click within the dead time."""
    out = []
    last = -np.inf
    for t in timestamps.astype(np.int64):
        if t - last >= dead_ps:
            out.append(t)
            last = t
    return np.asarray(out, dtype=np.uint64)


def expected_click_rate(params: RateParams, atoms, cfg: TrajectoryConfig) -> float:
    """Mean detected rate per detector-pair: eta * 2 kappa <n>_ss + background."""
    from .dynamics import reduce_to_classes, steady_one_excitation

    classes = reduce_to_classes([g for g, _ in atoms], [d for _, d in atoms])
    one = steady_one_excitation(params, classes)
    return cfg.efficiency * 2.0 * params.kappa * abs(one.a1) ** 2 + cfg.background_per_us


# ---------------------------------------------------------------------------
# stream serialization

MAGIC = b"CQTS"
VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")  # magic, version, detector, count, duration_ps


def write_stream(stream: ClickStream, path):
    """Write a click stream; binary CQTS unless the path ends in .csv."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open("w") as fh:
            for t in stream.timestamps:
                fh.write(f"{int(t)}\n")
        return
    with path.open("wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC, VERSION, stream.detector_id, stream.timestamps.size,
                stream.duration_ps,
            )
        )
        fh.write(stream.timestamps.astype("<u8").tobytes())


def read_stream(path, duration_ps: int | None = None) -> ClickStream:
    """Read a CQTS binary or one-timestamp-per-line CSV stream."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        if len(raw) < _HEADER.size:
            raise StreamFormatError(
                f"{path}: truncated header ({len(raw)} bytes)", offset=len(raw)
            )
        magic, version, det, count, dur = _HEADER.unpack_from(raw, 0)
        if version != VERSION:
            raise StreamFormatError(f"{path}: unsupported version {version}", offset=4)
        need = _HEADER.size + 8 * count
        if len(raw) < need:
            raise StreamFormatError(
                f"{path}: truncated payload, expected {need} bytes got {len(raw)}",
                offset=len(raw),
            )
        ts = np.frombuffer(raw, dtype="<u8", count=count, offset=_HEADER.size)
        return ClickStream(timestamps=ts.copy(), duration_ps=dur, detector_id=det)
    if raw[:1].isdigit() or not raw:
        lines = [ln for ln in raw.decode("ascii", "strict").splitlines() if ln.strip()]
        ts = np.asarray([int(ln) for ln in lines], dtype=np.uint64)
        dur = duration_ps if duration_ps is not None else (int(ts[-1]) + 1 if ts.size else 1)
        return ClickStream(timestamps=ts, duration_ps=dur)
    raise StreamFormatError(f"{path}: bad magic {raw[:4]!r}", offset=0)
