"""Command-line entry point.

Subcommands: overlap, simulate, sweep, optimize-tau, detect, analyze,
roundtrip, figure.  Exit codes are a stable contract: 0 success, 2 bad
configuration or parameters, 3 numerical failure, 4 file/I-O problems.
The default output directory may be set with $PULSE_ATOM_SIM_OUTDIR.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import estimate_nbar, fit_exponential, histogram, reconstruct_pe
from .config import RunConfig, build_config
from .detection import (
    CH_BACKWARD,
    CH_FORWARD,
    read_timestamps,
    simulate_backward,
    simulate_forward,
    write_timestamps,
)
from .dynamics import (
    AtomParams,
    PulseShape,
    PulseSpec,
    TimeGrid,
    Trajectory,
    solve_bloch,
)
from .errors import (
    BinProbabilityError,
    ConfigError,
    DomainError,
    GridError,
    NumericalError,
    PulseAtomSimError,
    TimestampFormatError,
)
from .figures import figure_recipe
from .optics import FocusingGeometry, overlap_from_focusing
from .sweep import (
    DEFAULT_NBAR_VALUES,
    DEFAULT_TAU_VALUES,
    SweepGrid,
    optimal_tau,
    pe_max_for,
    sweep_pe_max,
)

_ENV_OUTDIR = "PULSE_ATOM_SIM_OUTDIR"


def _out_dir(args) -> Path:
    raw = getattr(args, "out_dir", None) or os.environ.get(_ENV_OUTDIR, ".")
    return Path(raw)


def _shape(name: str) -> PulseShape:
    return PulseShape.RISING_EXP if name == "exp" else PulseShape.SQUARE


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for flag, attr in (("gamma_ns", "lifetime_ns"), ("eta_p", "eta_p"),
                       ("detuning", "detuning"), ("tau_ns", "tau_ns"),
                       ("nbar", "nbar"), ("seed", "seed"),
                       ("n_pulses", "n_pulses")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[attr] = value
    if getattr(args, "shape", None) is not None:
        overrides["shape"] = _shape(args.shape)
    return build_config(getattr(args, "config", None), overrides)


def _write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    data = np.column_stack([traj.times, traj.p_e, traj.coherence])
    np.savetxt(path, data, delimiter=",", header="t_ns,p_e,coherence",
               comments="", fmt="%.10g")


def _read_trajectory_csv(path: Path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 3:
        raise ConfigError(f"{path}: expected columns t_ns,p_e,coherence")
    return Trajectory(times=data[:, 0], p_e=data[:, 1], coherence=data[:, 2],
                      p_e_max=float(data[:, 1].max()),
                      t_of_max=float(data[np.argmax(data[:, 1]), 0]))


def _cmd_overlap(args) -> int:
    if args.u is not None:
        geom = FocusingGeometry.from_strength(args.u)
    elif args.waist_mm is not None and args.focal_mm is not None:
        geom = FocusingGeometry.from_waist_and_focal(args.waist_mm, args.focal_mm)
    else:
        raise ConfigError("provide either --u or both --waist-mm and --focal-mm")
    res = overlap_from_focusing(geom)
    print(f"{res.eta_p:.8g} {res.r_sc:.8g}")
    print("u,eta_p,R_sc")
    print(f"{geom.u:.8g},{res.eta_p:.8g},{res.r_sc:.8g}")
    return 0


def _cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    atom, spec = cfg.atom(), cfg.pulse()
    t_start = args.t_start if args.t_start is not None else spec.start_time()
    t_end = args.t_end if args.t_end is not None else spec.end_time() + 5.0 / atom.gamma
    traj = solve_bloch(spec, atom, TimeGrid(t_start, t_end, args.dt_max))
    out = Path(args.out) if args.out else _out_dir(args) / "trajectory.csv"
    _write_trajectory_csv(out, traj)
    print(f"wrote {out}  (p_e_max={traj.p_e_max:.6g} at t={traj.t_of_max:.4g} ns)")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    nbars = cfg.sweep_nbar or DEFAULT_NBAR_VALUES
    taus = cfg.sweep_tau or DEFAULT_TAU_VALUES
    shape = _shape(args.shape) if args.shape else cfg.sweep_shape
    grid = SweepGrid(nbar_values=nbars, tau_values=taus, shape=shape, atom=cfg.atom())
    result = sweep_pe_max(grid, n_workers=args.workers)
    out = Path(args.out) if args.out else _out_dir(args) / "sweep.csv"
    result.write_csv(out)
    print(f"wrote {out}  ({len(result.points)} points, {len(result.failures)} failures)")
    for shape_, tau, nbar, msg in result.failures:
        print(f"  failed: shape={shape_.value} tau={tau} nbar={nbar}: {msg}",
              file=sys.stderr)
    return 0


def _cmd_optimize_tau(args) -> int:
    cfg = _config_from_args(args)
    shape = _shape(args.shape)
    res = optimal_tau(shape, cfg.nbar, cfg.atom(), (args.bracket[0], args.bracket[1]))
    print(f"tau_star_ns={res.tau_star:.4g} pe_max={res.pe_max:.6g}")
    if args.out:
        _, t_of_max = pe_max_for(shape, res.tau_star, cfg.nbar, cfg.atom())
        with open(args.out, "w") as fh:
            fh.write("shape,tau_ns,nbar,pe_max,t_of_max_ns\n")
            fh.write(f"{shape.value},{res.tau_star:.10g},{cfg.nbar:.10g},"
                     f"{res.pe_max:.10g},{t_of_max:.10g}\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_detect(args) -> int:
    cfg = build_config(args.setup, {"seed": args.seed} if args.seed is not None else {})
    setup = cfg.detection()
    if args.channel == "backward":
        if not args.traj:
            raise ConfigError("backward channel needs --traj (CSV from 'simulate')")
        traj = _read_trajectory_csv(Path(args.traj))
        stream = simulate_backward(traj, cfg.atom(), setup)
    else:
        stream = simulate_forward(cfg.pulse(), setup)
    write_timestamps(stream, args.out)
    print(f"wrote {args.out}  ({len(stream)} events / {setup.n_pulses} pulses)")
    return 0


def _cmd_analyze(args) -> int:
    cfg = build_config(args.setup, {})
    setup, atom, spec = cfg.detection(), cfg.atom(), cfg.pulse()
    stream = read_timestamps(args.infile)
    channel = CH_BACKWARD if args.channel == "backward" else CH_FORWARD
    if args.range:
        t_lo, t_hi = args.range
    elif channel == CH_BACKWARD:
        t_lo = math.floor(spec.start_time())
        t_hi = math.ceil(spec.end_time() + 5.0 / atom.gamma)
    else:
        t_lo, t_hi = math.floor(spec.start_time()), math.ceil(spec.end_time())
    hist = histogram(stream, channel, setup.bin_width, (t_lo, t_hi), setup.n_pulses)

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    hist_path = Path(f"{prefix}_hist.csv")
    np.savetxt(hist_path, np.column_stack([hist.bin_centers, hist.counts]),
               delimiter=",", header="bin_center_ns,counts", comments="", fmt="%.10g")
    written = [hist_path]
    report = [f"channel={args.channel} events={int(hist.counts.sum())} "
              f"dropped={hist.n_dropped} pulses={hist.n_pulses}"]

    if channel == CH_BACKWARD:
        pe = reconstruct_pe(hist, atom, setup)
        pe_path = Path(f"{prefix}_pe.csv")
        np.savetxt(pe_path, np.column_stack([pe.bin_centers, pe.p_e, pe.p_e_err]),
                   delimiter=",", header="bin_center_ns,p_e,p_e_err", comments="",
                   fmt="%.10g")
        written.append(pe_path)
        peak = int(np.argmax(pe.p_e))
        report.append(f"peak p_e={pe.p_e[peak]:.4g} +- {pe.p_e_err[peak]:.2g} "
                      f"at t={pe.bin_centers[peak]:.4g} ns")
        window = (args.fit_window if args.fit_window
                  else (spec.end_time() + 2.0, spec.end_time() + 80.0))
        direction = args.fit_direction or "decaying"
    else:
        est = estimate_nbar(hist, setup)
        report.append(f"nbar={est.nbar:.4g} +- {est.std_error:.3g} (r_d={est.r_d:.4g})")
        window = (args.fit_window if args.fit_window
                  else (max(t_lo, spec.end_time() - 4.0 * spec.tau), spec.end_time() - 1.0))
        direction = args.fit_direction or "rising"
    try:
        fit = fit_exponential(hist, window, direction)
        report.append(f"{direction} fit: tau={fit.tau:.4g} +- {fit.tau_err:.3g} ns "
                      f"amplitude={fit.amplitude:.4g} window={fit.window}")
    except (DomainError, NumericalError) as exc:
        report.append(f"{direction} fit skipped: {exc}")

    fit_path = Path(f"{prefix}_report.txt")
    fit_path.write_text("\n".join(report) + "\n")
    written.append(fit_path)
    for line in report:
        print(line)
    print("wrote " + " ".join(str(w) for w in written))
    return 0


def _cmd_roundtrip(args) -> int:
    cfg = _config_from_args(args)
    atom, spec, setup = cfg.atom(), cfg.pulse(), cfg.detection()
    grid = TimeGrid(spec.start_time(), spec.end_time() + 5.0 / atom.gamma, 0.1)
    traj = solve_bloch(spec, atom, grid)

    back = simulate_backward(traj, atom, setup)
    t_lo = math.floor(grid.t_start)
    t_hi = math.floor(grid.t_end)
    hist = histogram(back, CH_BACKWARD, setup.bin_width, (t_lo, t_hi), setup.n_pulses)
    pe = reconstruct_pe(hist, atom, setup)
    peak = int(np.argmax(pe.p_e))
    model_at_peak = float(traj.p_e_at(pe.bin_centers[peak]))
    sigma = max(float(pe.p_e_err[peak]), 1e-12)
    dev = abs(pe.p_e[peak] - traj.p_e_max) / sigma
    ok_pe = dev <= 3.0
    print(f"backward: reconstructed peak p_e={pe.p_e[peak]:.4g}+-{sigma:.2g} "
          f"model p_e_max={traj.p_e_max:.4g} ({dev:.2f} sigma) "
          f"[model at peak bin {model_at_peak:.4g}] -> {'PASS' if ok_pe else 'FAIL'}")

    fwd = simulate_forward(spec, setup)
    fhist = histogram(fwd, CH_FORWARD, setup.bin_width,
                      (math.floor(spec.start_time()), math.ceil(spec.end_time())),
                      setup.n_pulses)
    est = estimate_nbar(fhist, setup)
    dev_n = abs(est.nbar - spec.mean_photons) / max(est.std_error, 1e-12)
    ok_n = dev_n <= 2.0
    print(f"forward: nbar={est.nbar:.4g}+-{est.std_error:.3g} "
          f"truth {spec.mean_photons:.4g} ({dev_n:.2f} sigma) -> "
          f"{'PASS' if ok_n else 'FAIL'}")

    if ok_pe and ok_n:
        print("roundtrip PASS")
        return 0
    print("roundtrip FAIL")
    return 3


def _cmd_figure(args) -> int:
    files = figure_recipe(args.name, _out_dir(args), seed=args.seed,
                          full_scale=args.full_scale, plot=not args.no_plot)
    for f in files:
        print(f"wrote {f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulse-atom-sim",
        description="Single-atom excitation by shaped light pulses: "
                    "simulation, synthetic detection, and analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("overlap", help="overlap parameter from focusing strength")
    p.add_argument("--u", type=float, help="focusing strength w_L/f")
    p.add_argument("--waist-mm", type=float, help="input beam waist (mm)")
    p.add_argument("--focal-mm", type=float, help="lens focal length (mm)")
    p.set_defaults(func=_cmd_overlap)

    def add_atom_pulse_flags(p, with_shape=True):
        if with_shape:
            p.add_argument("--shape", choices=["exp", "square"])
        p.add_argument("--tau-ns", dest="tau_ns", type=float)
        p.add_argument("--nbar", type=float)
        p.add_argument("--eta-p", dest="eta_p", type=float)
        p.add_argument("--gamma-ns", dest="gamma_ns", type=float,
                       help="excited-state lifetime (ns)")
        p.add_argument("--detuning", type=float, help="detuning (rad/ns)")
        p.add_argument("--config", help="key=value config file")

    p = sub.add_parser("simulate", help="integrate P_e(t) for one pulse")
    add_atom_pulse_flags(p)
    p.add_argument("--dt-max", dest="dt_max", type=float, default=0.1)
    p.add_argument("--t-start", dest="t_start", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--out", help="trajectory CSV (t_ns,p_e,coherence)")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="P_e_max over a (tau, nbar) grid")
    add_atom_pulse_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("optimize-tau", help="pulse duration maximizing P_e_max")
    add_atom_pulse_flags(p)
    p.add_argument("--bracket", nargs=2, type=float, default=[5.0, 120.0],
                   metavar=("LO", "HI"))
    p.add_argument("--out", help="optional CSV output")
    p.set_defaults(func=_cmd_optimize_tau)

    p = sub.add_parser("detect", help="generate a synthetic timestamp file")
    p.add_argument("--setup", required=True, help="config file with [detection]")
    p.add_argument("--traj", help="trajectory CSV (backward channel)")
    p.add_argument("--channel", choices=["backward", "forward"], default="backward")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="timestamp file to write")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("analyze", help="histogram / P_e / fits from timestamps")
    p.add_argument("--setup", required=True, help="config file")
    p.add_argument("--in", dest="infile", required=True, help="timestamp file")
    p.add_argument("--channel", choices=["backward", "forward"], default="backward")
    p.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--fit-window", dest="fit_window", nargs=2, type=float,
                   metavar=("LO", "HI"))
    p.add_argument("--fit-direction", dest="fit_direction",
                   choices=["rising", "decaying"])
    p.add_argument("--out-prefix", dest="out_prefix", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("roundtrip",
                       help="simulate -> detect -> analyze -> compare, PASS/FAIL")
    add_atom_pulse_flags(p)
    p.add_argument("--n-pulses", dest="n_pulses", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_roundtrip)

    p = sub.add_parser("figure", help="reproduce a published-figure dataset")
    p.add_argument("name", choices=["fig3", "fig4", "fig5", "fig6"])
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--full-scale", dest="full_scale", action="store_true")
    p.add_argument("--no-plot", dest="no_plot", action="store_true")
    p.set_defaults(func=_cmd_figure)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, GridError, BinProbabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TimestampFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (NumericalError, PulseAtomSimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
