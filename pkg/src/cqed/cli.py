"""Command-line entry point: every pipeline stage, seedable and reproducible.

Every output is CSV with commented header lines carrying the package
version, the command, the seed, and the configuration hash; the merged
configuration is echoed to a `<out>.config.ini` sidecar.  Exit codes:
0 success, 2 input/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit_inverted_lorentzian, speed_sweep
from .config import Config
from .correlator import correlate
from .dynamics import classes_for_atom_number, g2_regression, transmission_spectrum
from .ensemble import averaged_g2
from .errors import (
    CQEDError,
    FitConvergenceError,
    IntegrationFailureError,
    UndefinedCorrelationError,
    UnresolvedExtremaError,
)
from .model import TWO_PI, angular_to_mhz, derive, g2_closed_form, oscillation_threshold, purcell_rates
from .nonmarkov import blp_vs_coupling
from .trace import read_trace_csv, write_trace_csv
from .trajectories import mcwf_synthesize, read_stream, write_stream

_NUMERICAL_ERRORS = (
    IntegrationFailureError,
    UndefinedCorrelationError,
    FitConvergenceError,
    UnresolvedExtremaError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


def _header(cfg: Config, args, extra=()) -> list[str]:
    lines = [
        f"cqed version = {__version__}",
        f"command = {' '.join(sys.argv[1:]) if sys.argv[1:] else args.command}",
        f"seed = {args.seed}",
        f"config_hash = {cfg.content_hash()}",
    ]
    lines.extend(extra)
    return lines


def _write_rows(path, cfg: Config, args, columns, rows, extra=()):
    path = Path(path)
    with path.open("w") as fh:
        for line in _header(cfg, args, extra):
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    cfg.echo_sidecar(path)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _tau_grid(args):
    return np.linspace(0.0, args.tau_max, args.points)


def cmd_params(cfg: Config, args) -> int:
    params = cfg.rate_params()
    n = args.n_atoms if args.n_atoms is not None else cfg.n_atoms
    d = derive(params, n)
    atom_rate, cavity_rate = purcell_rates(params, n)
    rows = [
        ("c1", d.c1),
        ("c", d.c),
        ("c1_prime", d.c1_prime),
        ("n_sat", d.n_sat),
        ("delta_alpha_ratio", d.delta_alpha_ratio),
        ("omega_vr_real_mhz", d.omega_vr.real / TWO_PI),
        ("omega_vr_imag_mhz", d.omega_vr.imag / TWO_PI),
        ("omega_vr_abs_mhz", abs(d.omega_vr) / TWO_PI),
        ("g_sqrt_n_mhz", angular_to_mhz(params.g_max) * np.sqrt(n)),
        ("oscillation_threshold_atoms", oscillation_threshold(params)),
        ("purcell_atom_rate_mhz", angular_to_mhz(atom_rate)),
        ("purcell_cavity_rate_mhz", angular_to_mhz(cavity_rate)),
        ("g2_zero_closed_form", (1.0 + d.delta_alpha_ratio) ** 2),
    ]
    if args.out:
        _write_rows(args.out, cfg, args, ("quantity", "value"), rows)
    for name, val in rows:
        print(f"{name} = {val:.6g}")
    return 0


def cmd_g2_closed(cfg: Config, args) -> int:
    params = cfg.rate_params()
    n = args.n_atoms if args.n_atoms is not None else cfg.n_atoms
    trace = g2_closed_form(params, n, _tau_grid(args))
    out = args.out or "g2_closed.csv"
    write_trace_csv(trace, out, _header(cfg, args, [f"n_atoms = {n}"]))
    cfg.echo_sidecar(out)
    print(f"wrote {out} (g2(0) = {trace.g2[0]:.6g})")
    return 0


def cmd_g2_refined(cfg: Config, args) -> int:
    params = cfg.rate_params()
    beam = cfg.beam_config(seed=args.seed, n_eff=args.n_eff)
    if args.realizations:
        from dataclasses import replace

        beam = replace(beam, realizations=args.realizations)
    trace = averaged_g2(cfg.mode_geometry(), beam, params, _tau_grid(args), workers=args.workers)
    out = args.out or "g2_refined.csv"
    write_trace_csv(
        trace, out,
        _header(cfg, args, [f"n_eff = {beam.n_eff}", f"realizations = {beam.realizations}"]),
    )
    cfg.echo_sidecar(out)
    print(f"wrote {out} (g2(0) = {trace.g2[0]:.6g}, {beam.realizations} realizations)")
    return 0


def cmd_spectrum(cfg: Config, args) -> int:
    params = cfg.rate_params()
    n = args.n_atoms if args.n_atoms is not None else cfg.n_atoms
    classes = classes_for_atom_number(params, n)
    span = TWO_PI * args.span_mhz
    grid = np.linspace(-span, span, args.points)
    spec = transmission_spectrum(params, classes, grid)
    extra = [f"n_atoms = {n}"]
    if spec.single_peak:
        extra.append("single_peak = true")
    else:
        extra.append(f"peak_separation_mhz = {spec.separation / TWO_PI:.6g}")
    rows = list(zip(spec.detuning / TWO_PI, spec.intensity))
    out = args.out or "spectrum.csv"
    _write_rows(out, cfg, args, ("delta_mhz", "intensity"), rows, extra)
    msg = "single peak" if spec.single_peak else f"separation {spec.separation / TWO_PI:.4g} MHz"
    print(f"wrote {out} ({msg})")
    return 0


def cmd_synthesize(cfg: Config, args) -> int:
    params = cfg.rate_params()
    n = int(round(args.n_atoms if args.n_atoms is not None else cfg.n_atoms))
    atoms = [(params.g_max, params.delta_a)] * n
    tcfg = cfg.trajectory_config(seed=args.seed, duration_us=args.duration_us)
    s0, s1 = mcwf_synthesize(params, atoms, tcfg)
    prefix = args.out or "stream"
    for s in (s0, s1):
        path = f"{prefix}.det{s.detector_id}.cqts"
        write_stream(s, path)
        print(f"wrote {path} ({s.timestamps.size} clicks, rate {s.rate_per_us:.4g}/us)")
    cfg.echo_sidecar(prefix)
    return 0


def cmd_correlate(cfg: Config, args) -> int:
    s1 = read_stream(args.stream1)
    s2 = read_stream(args.stream2) if args.stream2 else None
    mode = args.mode or ("cross" if s2 is not None else "auto")
    ccfg = cfg.correlator_config(mode=mode)
    if args.bin_ns or args.tau_max:
        from dataclasses import replace

        ccfg = replace(
            ccfg,
            bin_width_ns=args.bin_ns or ccfg.bin_width_ns,
            tau_max_us=args.tau_max or ccfg.tau_max_us,
        )
    trace = correlate(s1, s2, ccfg)
    out = args.out or "correlation.csv"
    write_trace_csv(
        trace, out,
        _header(cfg, args, [f"mode = {ccfg.mode}", f"bin_width_ns = {ccfg.bin_width_ns}"]),
    )
    cfg.echo_sidecar(out)
    print(f"wrote {out} ({int(trace.pairs.sum())} pairs)")
    return 0


def cmd_fit(cfg: Config, args) -> int:
    trace = read_trace_csv(args.trace)
    window = (0.0, args.window_max) if args.window_max else None
    fit = fit_inverted_lorentzian(trace, window)
    rows = [
        ("offset_c", fit.c),
        ("amplitude_a0", fit.a0),
        ("hwhm_us", fit.w),
        ("speed_per_us", fit.speed),
        ("speed_err", fit.speed_err),
        ("residual_norm", fit.residual_norm),
        ("window_max_us", fit.window[1]),
        ("bunched", int(fit.bunched)),
    ]
    if args.out:
        _write_rows(args.out, cfg, args, ("quantity", "value"), rows)
    for name, val in rows:
        print(f"{name} = {val:.6g}" if isinstance(val, float) else f"{name} = {val}")
    return 0


def cmd_sweep(cfg: Config, args) -> int:
    params = cfg.rate_params()
    targets = [float(x) for x in args.targets.split(",")]
    beam = cfg.beam_config(seed=args.seed)
    if args.realizations:
        from dataclasses import replace

        beam = replace(beam, realizations=args.realizations)
    result = speed_sweep(
        targets, cfg.mode_geometry(), beam, params,
        tau_grid=np.linspace(0.0, args.tau_max, args.points),
        workers=args.workers,
    )
    rows = [(p.omega_vr_mhz, p.speed, p.speed_err) for p in result.points]
    out = args.out or "sweep.csv"
    summary = (
        f"slope = {result.slope:.6g} +- {result.slope_err:.6g} /us/MHz, "
        f"chi2_red = {result.chi2_red:.4g}"
    )
    _write_rows(
        out, cfg, args, ("omega_vr_mhz", "speed_per_us", "speed_err"), rows, [summary]
    )
    print(f"wrote {out}")
    print(summary)
    return 0


def cmd_blp(cfg: Config, args) -> int:
    params = cfg.rate_params()
    n_grid = [float(x) for x in args.n_eff_grid.split(",")]
    beam = cfg.beam_config(seed=args.seed, n_eff=max(n_grid) or 1.0)
    if args.realizations:
        from dataclasses import replace

        beam = replace(beam, realizations=args.realizations)
    avg, mx = blp_vs_coupling(cfg.mode_geometry(), beam, params, n_grid, workers=args.workers)
    rows = []
    for curve in (avg, mx):
        rows += [
            (o, m, curve.variant)
            for o, m in zip(curve.omega_vr_mhz, curve.measure)
        ]
    out = args.out or "blp.csv"
    _write_rows(out, cfg, args, ("omega_vr_mhz", "blp_measure", "variant"), rows)
    print(f"wrote {out}")
    return 0


def cmd_oracle_check(cfg: Config, args) -> int:
    from .oracle import g2_exact, nonmarkov_exact_kernel
    from .dynamics import reduce_to_classes, response_kernel
    from dataclasses import replace

    params = replace(cfg.rate_params(), eps=0.01 * cfg.rate_params().kappa)
    tau = np.linspace(0.0, 1.0, 101)
    g = params.g_max
    cases = [
        ("one atom, resonant", [(g, 0.0)], 5e-3),
        ("two atoms {3,4} rad/us, one class", [(3.0, 0.0), (4.0, 0.0)], 5e-3),
        ("two atoms, split detunings", [(g, 0.8 * params.kappa), (0.6 * g, -0.5 * params.kappa)], 5e-3),
    ]
    worst_name, worst_rel, failed = "", 0.0, False
    lines = []
    for name, atoms, tol in cases:
        classes = reduce_to_classes([a[0] for a in atoms], [a[1] for a in atoms])
        fast = g2_regression(params, classes, tau).g2
        exact = g2_exact(params, atoms, tau).g2
        dev = float(np.max(np.abs(fast - exact)))
        ok = dev < tol
        failed |= not ok
        lines.append(f"g2 {name}: max|fast-exact| = {dev:.3e} (tol {tol:g}) {'PASS' if ok else 'FAIL'}")
        if dev / tol > worst_rel:
            worst_rel, worst_name = dev / tol, name
    kern_atoms = [(g, 0.0)]
    t = np.linspace(0.0, 1.0, 101)
    k_fast = response_kernel(params, reduce_to_classes([g], [0.0]), t)
    k_exact = nonmarkov_exact_kernel(params, kern_atoms, t)
    dev = float(np.max(np.abs(k_fast - k_exact)))
    ok = dev < 1e-10
    failed |= not ok
    lines.append(f"kernel one atom: max|fast-exact| = {dev:.3e} (tol 1e-10) {'PASS' if ok else 'FAIL'}")
    for line in lines:
        print(line)
    print(f"worst case: {worst_name} at {worst_rel:.3f} of tolerance")
    return 3 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cqed",
        description="Weak-drive cavity QED field dynamics toolkit",
    )
    ap.add_argument("--version", action="version", version=f"cqed {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, tau_default=1.0, points_default=401):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=1, help="master seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--out", default=None, help="output CSV path")
        p.add_argument("--tau-max", type=float, default=tau_default, help="max delay [us]")
        p.add_argument("--points", type=int, default=points_default, help="grid points")
        return p

    p = common(sub.add_parser("params", help="derived constants"))
    p.add_argument("--n-atoms", type=float, default=None)
    p.set_defaults(func=cmd_params)

    p = common(sub.add_parser("g2-closed", help="closed-form g2 trace"))
    p.add_argument("--n-atoms", type=float, default=None)
    p.set_defaults(func=cmd_g2_closed)

    p = common(sub.add_parser("g2-refined", help="beam-ensemble averaged g2"))
    p.add_argument("--n-eff", type=float, default=None)
    p.add_argument("--realizations", type=int, default=None)
    p.set_defaults(func=cmd_g2_refined)

    p = common(sub.add_parser("spectrum", help="transmission spectrum"))
    p.add_argument("--n-atoms", type=float, default=None)
    p.add_argument("--span-mhz", type=float, default=40.0)
    p.set_defaults(func=cmd_spectrum, points=2001)

    p = common(sub.add_parser("synthesize", help="MCWF click streams"))
    p.add_argument("--n-atoms", type=float, default=None)
    p.add_argument("--duration-us", type=float, default=None)
    p.set_defaults(func=cmd_synthesize)

    p = common(sub.add_parser("correlate", help="g2 from click streams"))
    p.add_argument("stream1")
    p.add_argument("stream2", nargs="?", default=None)
    p.add_argument("--mode", choices=["auto", "cross"], default=None)
    p.add_argument("--bin-ns", type=float, default=None)
    p.set_defaults(func=cmd_correlate)

    p = common(sub.add_parser("fit", help="inverted-Lorentzian speed fit"))
    p.add_argument("trace")
    p.add_argument("--window-max", type=float, default=None)
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("sweep", help="speed vs vacuum Rabi frequency"))
    p.add_argument("--targets", default="1.1,2.8,5.2", help="MHz list")
    p.add_argument("--realizations", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("blp", help="non-Markovianity curves"))
    p.add_argument("--n-eff-grid", default="0,0.25,0.5,1,1.5,2,2.5,3,3.5")
    p.add_argument("--realizations", type=int, default=None)
    p.set_defaults(func=cmd_blp)

    p = common(sub.add_parser("oracle-check", help="fast paths vs exact solver"))
    p.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        cfg = Config(args.config)
        return args.func(cfg, args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CQEDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
