"""Maps of the maximal excitation probability over (<N>, tau) grids and
optimization of the pulse duration.

Grid cells are independent pure computations; they can be farmed out to worker
processes, and results are always assembled in (shape, tau, nbar) order so the
output does not depend on completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    AtomParams,
    PulseShape,
    PulseSpec,
    TimeGrid,
    Trajectory,
    solve_bloch,
)
from .errors import DomainError, NoInteriorMaximumError, NumericalError, PulseAtomSimError

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_SWEEP_DT_MAX = 0.5
_POST_PULSE_LIFETIMES = 3.0

#: <N> and tau axes of the published saturation-curve families.
DEFAULT_NBAR_VALUES = tuple(np.logspace(-1, math.log10(2000.0), 25))
DEFAULT_TAU_VALUES = (5.0, 15.0, 25.0, 60.0, 150.0)


@dataclass(frozen=True)
class SweepGrid:
    nbar_values: tuple[float, ...]
    tau_values: tuple[float, ...]
    shape: PulseShape
    atom: AtomParams

    def __post_init__(self) -> None:
        nbar = tuple(float(x) for x in self.nbar_values)
        tau = tuple(float(x) for x in self.tau_values)
        if not nbar or not tau:
            raise DomainError("sweep grid axes must be non-empty")
        if any(x < 0.0 for x in nbar):
            raise DomainError("photon numbers must be >= 0")
        if any(x <= 0.0 for x in tau):
            raise DomainError("pulse durations must be positive")
        object.__setattr__(self, "nbar_values", nbar)
        object.__setattr__(self, "tau_values", tau)


@dataclass(frozen=True)
class SweepPoint:
    shape: PulseShape
    tau: float
    nbar: float
    pe_max: float
    t_of_max: float


@dataclass(frozen=True)
class SweepResult:
    points: tuple[SweepPoint, ...]
    failures: tuple[tuple[PulseShape, float, float, str], ...]
    provenance: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("shape,tau_ns,nbar,pe_max,t_of_max_ns\n")
            for p in self.points:
                fh.write(f"{p.shape.value},{p.tau:.10g},{p.nbar:.10g},"
                         f"{p.pe_max:.10g},{p.t_of_max:.10g}\n")


def pe_max_for(
    shape: PulseShape, tau: float, nbar: float, atom: AtomParams,
    *, dt_max: float = _SWEEP_DT_MAX, decay_override: float | None = None,
) -> tuple[float, float]:
    """(P_e_max, t_of_max) for one pulse, windowed over pulse + post-pulse decay.

    The window extends a few lifetimes past the pulse so the recorded maximum
    provably covers the whole pulse period; since P_e only decays once the
    drive is off, a post-pulse maximum would flag an integration failure and
    raises.
    """
    spec = PulseSpec(shape=shape, tau=tau, mean_photons=nbar)
    gamma_w = atom.gamma if decay_override is None else max(decay_override, atom.gamma_p)
    grid = TimeGrid(spec.start_time(),
                    spec.end_time() + _POST_PULSE_LIFETIMES / gamma_w, dt_max)
    traj = solve_bloch(spec, atom, grid, decay_override=decay_override)
    if decay_override is None and traj.t_of_max > spec.end_time() + dt_max + 1e-9:
        raise NumericalError(
            f"maximum found after the pulse (t={traj.t_of_max}); integration suspect"
        )
    return traj.p_e_max, traj.t_of_max


def _cell(args) -> tuple:
    shape, tau, nbar, atom, dt_max = args
    try:
        pe, t = pe_max_for(shape, tau, nbar, atom, dt_max=dt_max)
        return ("ok", shape, tau, nbar, pe, t)
    except PulseAtomSimError as exc:
        return ("err", shape, tau, nbar, str(exc))


def sweep_pe_max(
    grid: SweepGrid, *, dt_max: float = _SWEEP_DT_MAX, n_workers: int = 1,
) -> SweepResult:
    """P_e_max over the full (tau, nbar) grid; failed cells are reported, not fatal."""
    cells = [
        (grid.shape, tau, nbar, grid.atom, dt_max)
        for tau in grid.tau_values
        for nbar in grid.nbar_values
    ]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            raw = list(pool.map(_cell, cells, chunksize=8))
    else:
        raw = [_cell(c) for c in cells]

    points, failures = [], []
    for item in raw:
        if item[0] == "ok":
            _, shape, tau, nbar, pe, t = item
            points.append(SweepPoint(shape, tau, nbar, pe, t))
        else:
            _, shape, tau, nbar, msg = item
            failures.append((shape, tau, nbar, msg))
    points.sort(key=lambda p: (p.shape.value, p.tau, p.nbar))
    failures.sort(key=lambda f: (f[0].value, f[1], f[2]))
    return SweepResult(
        points=tuple(points), failures=tuple(failures),
        provenance={"dt_max": dt_max, "rtol": 1e-10, "atol": 1e-12,
                    "eta_p": grid.atom.eta_p, "gamma": grid.atom.gamma},
    )


def _golden_max(f, lo: float, hi: float, xtol: float) -> float:
    """Golden-section search for the maximizer of a unimodal f on [lo, hi]."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class OptimalTau:
    tau_star: float
    pe_max: float


def optimal_tau(
    shape: PulseShape, nbar: float, atom: AtomParams,
    bracket: tuple[float, float], *, n_coarse: int = 16, tau_tol: float = 0.5,
    dt_max: float = 0.2,
) -> OptimalTau:
    """Pulse duration maximizing P_e_max at fixed <N>.

    A coarse scan over the bracket must expose an interior maximum (otherwise
    :class:`NoInteriorMaximumError`); golden-section refinement then locates
    tau* to +-``tau_tol`` ns.
    """
    lo, hi = bracket
    if not (0.0 < lo < hi):
        raise DomainError(f"invalid bracket [{lo}, {hi}]")
    taus = np.linspace(lo, hi, n_coarse)
    values = [pe_max_for(shape, t, nbar, atom, dt_max=dt_max)[0] for t in taus]
    i = int(np.argmax(values))
    if i == 0 or i == len(taus) - 1:
        raise NoInteriorMaximumError(
            f"coarse scan is monotone over [{lo}, {hi}]; no interior maximum"
        )
    tau_star = _golden_max(
        lambda t: pe_max_for(shape, t, nbar, atom, dt_max=dt_max)[0],
        taus[i - 1], taus[i + 1], xtol=tau_tol,
    )
    pe_star = pe_max_for(shape, tau_star, nbar, atom, dt_max=dt_max)[0]
    return OptimalTau(tau_star=float(tau_star), pe_max=float(pe_star))


@dataclass(frozen=True)
class ShapeComparison:
    exp_trajectory: Trajectory
    square_trajectory: Trajectory
    exp_wins: bool


def compare_shapes(
    nbar_exp: float, nbar_sq: float, tau_exp: float, tau_sq: float,
    atom: AtomParams, *, dt_max: float = 0.1,
) -> ShapeComparison:
    """Side-by-side trajectories for the two envelope families."""
    trajs = []
    for shape, tau, nbar in ((PulseShape.RISING_EXP, tau_exp, nbar_exp),
                             (PulseShape.SQUARE, tau_sq, nbar_sq)):
        spec = PulseSpec(shape=shape, tau=tau, mean_photons=nbar)
        grid = TimeGrid(spec.start_time(),
                        spec.end_time() + _POST_PULSE_LIFETIMES / atom.gamma, dt_max)
        trajs.append(solve_bloch(spec, atom, grid))
    return ShapeComparison(
        exp_trajectory=trajs[0], square_trajectory=trajs[1],
        exp_wins=trajs[0].p_e_max > trajs[1].p_e_max,
    )
