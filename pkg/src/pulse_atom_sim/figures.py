"""Figure recipes: desk-scale reruns of the published measurement pipelines.

Each recipe writes plottable CSV files plus a rendered PNG into the output
directory, and appends one JSON-lines provenance record per output file with
every parameter (including the seed) needed to regenerate it byte-identically.
Desk scale uses 1e6 pulses per Monte-Carlo channel; ``full_scale=True``
restores the experimental pulse counts at the cost of minutes of runtime.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402
from .analysis import fit_exponential, histogram, reconstruct_pe  # noqa: E402
from .detection import (  # noqa: E402
    CH_BACKWARD,
    CH_FORWARD,
    DetectionSetup,
    simulate_backward,
    simulate_forward,
)
from .dynamics import (  # noqa: E402
    AtomParams,
    PulseShape,
    PulseSpec,
    TimeGrid,
    solve_bloch,
)
from .errors import DomainError  # noqa: E402
from .sweep import (  # noqa: E402
    DEFAULT_NBAR_VALUES,
    DEFAULT_TAU_VALUES,
    SweepGrid,
    compare_shapes,
    sweep_pe_max,
)

_SOLVER_PROVENANCE = {"rtol": 1e-10, "atol": 1e-12}

FIG3_NBAR = 104.1
FIG3_FULL_BACKWARD_PULSES = 2_103_400
FIG3_FULL_FORWARD_PULSES = 15_000_000
FIG4_NBAR = 1300.0
FIG6_PARAMS = {"nbar_exp": 2.75, "nbar_sq": 2.10, "tau_exp": 25.0, "tau_sq": 60.0,
               "eta_p": 0.027}
DESK_PULSES = 1_000_000


def _write_csv(path: Path, header: str, columns: list[np.ndarray]) -> None:
    data = np.column_stack(columns)
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.10g")


def _log_provenance(out_dir: Path, recipe: str, files: list[Path], params: dict) -> None:
    record_base = {"recipe": recipe, "package_version": __version__,
                   "solver": _SOLVER_PROVENANCE, **params}
    with open(out_dir / "provenance.jsonl", "a") as fh:
        for f in files:
            fh.write(json.dumps({"file": f.name, **record_base}, sort_keys=True) + "\n")


def fig3(out_dir: str | Path, *, seed: int = 12345, full_scale: bool = False,
         plot: bool = True, n_pulses: int | None = None) -> list[Path]:
    """Exponential pulse at <N> ~ 104: forward reference histogram, backward
    fluorescence histogram, and the reconstructed P_e(t) with exponential fits."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atom = AtomParams.from_lifetime(eta_p=0.03)
    spec = PulseSpec(shape=PulseShape.RISING_EXP, tau=15.0, mean_photons=FIG3_NBAR)
    traj = solve_bloch(spec, atom, TimeGrid(spec.start_time(), 150.0, 0.1))

    n_back = n_pulses or (FIG3_FULL_BACKWARD_PULSES if full_scale else DESK_PULSES)
    n_fwd = n_pulses or (FIG3_FULL_FORWARD_PULSES if full_scale else DESK_PULSES)
    setup_back = DetectionSetup(n_pulses=n_back, seed=seed)
    setup_fwd = DetectionSetup(n_pulses=n_fwd, seed=seed)

    back = simulate_backward(traj, atom, setup_back)
    hist_back = histogram(back, CH_BACKWARD, 1.0, (-150.0, 150.0), n_back)
    pe = reconstruct_pe(hist_back, atom, setup_back)
    decay_fit = fit_exponential(hist_back, (2.0, 80.0), "decaying")

    fwd = simulate_forward(spec, setup_fwd)
    hist_fwd = histogram(fwd, CH_FORWARD, 1.0, (-150.0, 0.0), n_fwd)
    rise_fit = fit_exponential(hist_fwd, (-60.0, -1.0), "rising")

    files = []
    p = out_dir / "fig3a_pulse_hist.csv"
    _write_csv(p, "bin_center_ns,counts", [hist_fwd.bin_centers, hist_fwd.counts])
    files.append(p)
    p = out_dir / "fig3b_fluorescence_hist.csv"
    _write_csv(p, "bin_center_ns,counts", [hist_back.bin_centers, hist_back.counts])
    files.append(p)
    p = out_dir / "fig3b_pe.csv"
    _write_csv(p, "bin_center_ns,p_e,p_e_err", [pe.bin_centers, pe.p_e, pe.p_e_err])
    files.append(p)
    p = out_dir / "fig3_fits.csv"
    with open(p, "w") as fh:
        fh.write("fit,amplitude,tau_ns,tau_err_ns,window_lo_ns,window_hi_ns\n")
        for name, f in (("pulse_rise", rise_fit), ("fluorescence_decay", decay_fit)):
            fh.write(f"{name},{f.amplitude:.10g},{f.tau:.10g},{f.tau_err:.10g},"
                     f"{f.window[0]:.10g},{f.window[1]:.10g}\n")
    files.append(p)

    if plot:
        fig, axes = plt.subplots(2, 1, figsize=(6.4, 7.0), sharex=True)
        axes[0].semilogy(hist_fwd.bin_centers, np.maximum(hist_fwd.counts, 0.5), ".",
                         ms=3, label="forward reference")
        tt = np.linspace(-60, -1, 200)
        axes[0].semilogy(tt, rise_fit.amplitude * np.exp(tt / rise_fit.tau), "--",
                         label=f"rise fit tau={rise_fit.tau:.1f} ns")
        axes[0].set_ylabel("counts / 1 ns bin")
        axes[0].legend()
        axes[1].errorbar(pe.bin_centers, pe.p_e, yerr=pe.p_e_err, fmt=".", ms=3,
                         label="reconstructed $P_e$")
        axes[1].plot(traj.times, traj.p_e, "-", lw=1, label="model")
        axes[1].set_xlabel("time from pulse edge (ns)")
        axes[1].set_ylabel("$P_e$")
        axes[1].set_xlim(-100, 150)
        axes[1].legend()
        fig.tight_layout()
        p = out_dir / "fig3.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        files.append(p)

    _log_provenance(out_dir, "fig3", files, {
        "seed": seed, "nbar": FIG3_NBAR, "tau_ns": 15.0, "eta_p": 0.03,
        "n_pulses_backward": n_back, "n_pulses_forward": n_fwd,
        "decay_fit_tau_ns": decay_fit.tau, "rise_fit_tau_ns": rise_fit.tau,
    })
    return files


def fig4(out_dir: str | Path, *, seed: int = 12345, full_scale: bool = False,
         plot: bool = True) -> list[Path]:
    """Rabi oscillations at <N> ~ 1300 for square and exponential pulses."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atom = AtomParams.from_lifetime(eta_p=0.03)
    files = []
    trajs = {}
    for shape in (PulseShape.RISING_EXP, PulseShape.SQUARE):
        spec = PulseSpec(shape=shape, tau=15.0, mean_photons=FIG4_NBAR)
        traj = solve_bloch(spec, atom, TimeGrid(spec.start_time(), 100.0, 0.05))
        trajs[shape] = traj
        p = out_dir / f"fig4_{'exp' if shape is PulseShape.RISING_EXP else 'square'}.csv"
        _write_csv(p, "t_ns,p_e,coherence", [traj.times, traj.p_e, traj.coherence])
        files.append(p)

    if plot:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        ax.plot(trajs[PulseShape.SQUARE].times, trajs[PulseShape.SQUARE].p_e,
                label="square")
        ax.plot(trajs[PulseShape.RISING_EXP].times, trajs[PulseShape.RISING_EXP].p_e,
                label="rising exponential")
        ax.set_xlim(-60, 60)
        ax.set_xlabel("time from pulse edge (ns)")
        ax.set_ylabel("$P_e$")
        ax.legend()
        fig.tight_layout()
        p = out_dir / "fig4.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        files.append(p)

    _log_provenance(out_dir, "fig4", files, {
        "seed": seed, "nbar": FIG4_NBAR, "tau_ns": 15.0, "eta_p": 0.03,
    })
    return files


def fig5(out_dir: str | Path, *, seed: int = 12345, full_scale: bool = False,
         plot: bool = True, tau_values: tuple[float, ...] | None = None,
         nbar_values: tuple[float, ...] | None = None, n_workers: int = 1) -> list[Path]:
    """Saturation curves: P_e_max vs <N> for both shapes and several tau."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atom = AtomParams.from_lifetime(eta_p=0.03)
    taus = tuple(tau_values or DEFAULT_TAU_VALUES)
    nbars = tuple(nbar_values or DEFAULT_NBAR_VALUES)

    results = {}
    for shape in (PulseShape.RISING_EXP, PulseShape.SQUARE):
        grid = SweepGrid(nbar_values=nbars, tau_values=taus, shape=shape, atom=atom)
        results[shape] = sweep_pe_max(grid, n_workers=n_workers)

    files = []
    p = out_dir / "fig5.csv"
    with open(p, "w") as fh:
        fh.write("shape,tau_ns,nbar,pe_max,t_of_max_ns\n")
        for shape in (PulseShape.RISING_EXP, PulseShape.SQUARE):
            for pt in results[shape].points:
                fh.write(f"{pt.shape.value},{pt.tau:.10g},{pt.nbar:.10g},"
                         f"{pt.pe_max:.10g},{pt.t_of_max:.10g}\n")
    files.append(p)

    if plot:
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for shape, style in ((PulseShape.RISING_EXP, "-"), (PulseShape.SQUARE, "--")):
            for tau in taus:
                pts = [q for q in results[shape].points if q.tau == tau]
                ax.semilogx([q.nbar for q in pts], [q.pe_max for q in pts], style,
                            label=f"{shape.value} tau={tau:g} ns")
        ax.set_xlabel(r"mean photon number $\langle N\rangle$")
        ax.set_ylabel("$P_{e,max}$")
        ax.set_ylim(0, 1)
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        p = out_dir / "fig5.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        files.append(p)

    _log_provenance(out_dir, "fig5", files, {
        "seed": seed, "eta_p": 0.03, "tau_values": list(taus),
        "nbar_values": list(nbars),
        "failures": [list(map(str, f)) for r in results.values() for f in r.failures],
    })
    return files


def fig6(out_dir: str | Path, *, seed: int = 12345, full_scale: bool = False,
         plot: bool = True) -> list[Path]:
    """Shape comparison at matched photon number, eta_p = 0.027."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atom = AtomParams.from_lifetime(eta_p=FIG6_PARAMS["eta_p"])
    cmp = compare_shapes(FIG6_PARAMS["nbar_exp"], FIG6_PARAMS["nbar_sq"],
                         FIG6_PARAMS["tau_exp"], FIG6_PARAMS["tau_sq"], atom)
    files = []
    for name, traj in (("exp", cmp.exp_trajectory), ("square", cmp.square_trajectory)):
        p = out_dir / f"fig6_{name}.csv"
        _write_csv(p, "t_ns,p_e,coherence", [traj.times, traj.p_e, traj.coherence])
        files.append(p)

    if plot:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        ax.plot(cmp.exp_trajectory.times, cmp.exp_trajectory.p_e,
                label=f"exp tau={FIG6_PARAMS['tau_exp']:g} ns, "
                      f"<N>={FIG6_PARAMS['nbar_exp']:g}")
        ax.plot(cmp.square_trajectory.times, cmp.square_trajectory.p_e, "--",
                label=f"square tau={FIG6_PARAMS['tau_sq']:g} ns, "
                      f"<N>={FIG6_PARAMS['nbar_sq']:g}")
        ax.set_xlim(-150, 100)
        ax.set_xlabel("time from pulse edge (ns)")
        ax.set_ylabel("$P_e$")
        ax.legend()
        fig.tight_layout()
        p = out_dir / "fig6.png"
        fig.savefig(p, dpi=150)
        plt.close(fig)
        files.append(p)

    _log_provenance(out_dir, "fig6", files, {
        "seed": seed, **FIG6_PARAMS, "exp_wins": cmp.exp_wins,
        "pe_max_exp": cmp.exp_trajectory.p_e_max,
        "pe_max_square": cmp.square_trajectory.p_e_max,
    })
    return files


_RECIPES = {"fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6}


def figure_recipe(name: str, out_dir: str | Path, **kwargs) -> list[Path]:
    """Run one of the named figure pipelines; returns the written files."""
    try:
        recipe = _RECIPES[name]
    except KeyError:
        raise DomainError(f"unknown figure {name!r}; choose from {sorted(_RECIPES)}") from None
    return recipe(out_dir, **kwargs)
