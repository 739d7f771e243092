"""Two-level atom driven by a shaped coherent pulse.

Times are in ns, rates in 1/ns.  The pulse envelope xi(t) is normalized so that
integral xi(t)^2 dt = 1, and by convention the pulse edge (switch-off) sits at
t = 0 unless the spec carries an explicit ``t_end`` offset.  The drive enters
through the dynamical coupling g(t) = sqrt(Gamma_p * <N>) * xi(t) and the atom
evolves under the resonant optical Bloch equations with Rabi frequency
Omega(t) = 2 g(t):

    dP_e/dt = -Gamma P_e + Omega(t) s
    ds/dt   = -(Gamma/2) s - Omega(t) (P_e - 1/2) - Delta q
    dq/dt   = -(Gamma/2) q + Delta s

where s is the in-phase and q the quadrature coherence component (q stays zero
on resonance, Delta = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import DomainError, GridError, NumericalError

#: Excited-state lifetime of the closed Rb D2 cycling transition, ns.
DEFAULT_LIFETIME_NS = 26.24

#: The rising exponential is truncated where the envelope is e^-5 of its peak;
#: the missing tail contributes < 1e-4 to the intensity normalization.
EXP_TRUNCATION_TAUS = 10.0

_RTOL = 1e-10
_ATOL = 1e-12


class PulseShape(str, Enum):
    RISING_EXP = "exp"
    SQUARE = "square"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class AtomParams:
    """Free-space decay rate, mode overlap, and optional detuning (rad/ns)."""

    gamma: float
    eta_p: float = 0.03
    detuning: float = 0.0

    def __post_init__(self) -> None:
        if not self.gamma > 0.0:
            raise DomainError(f"decay rate must be positive, got {self.gamma}")
        if not 0.0 < self.eta_p <= 1.0:
            raise DomainError(f"overlap must be in (0, 1], got {self.eta_p}")

    @property
    def gamma_p(self) -> float:
        """Decay rate into the excitation mode, eta_p * gamma."""
        return self.eta_p * self.gamma

    @property
    def lifetime(self) -> float:
        return 1.0 / self.gamma

    @classmethod
    def from_lifetime(
        cls, lifetime_ns: float = DEFAULT_LIFETIME_NS, eta_p: float = 0.03,
        detuning: float = 0.0,
    ) -> "AtomParams":
        if not lifetime_ns > 0.0:
            raise DomainError(f"lifetime must be positive, got {lifetime_ns}")
        return cls(gamma=1.0 / lifetime_ns, eta_p=eta_p, detuning=detuning)


@dataclass(frozen=True)
class PulseSpec:
    """Envelope family, characteristic time tau (ns) and mean photon number <N>.

    ``samples`` is an (n, 2) array of (time, amplitude) pairs for the tabulated
    shape; it is re-normalized at construction so integral xi^2 dt = 1.
    ``t_end`` shifts the pulse edge away from the t = 0 convention.
    """

    shape: PulseShape
    tau: float
    mean_photons: float
    samples: np.ndarray | None = None
    t_end: float = 0.0

    def __post_init__(self) -> None:
        if not self.tau > 0.0:
            raise DomainError(f"pulse duration must be positive, got {self.tau}")
        if not self.mean_photons >= 0.0:
            raise DomainError(f"mean photon number must be >= 0, got {self.mean_photons}")
        if self.shape is PulseShape.TABULATED:
            if self.samples is None:
                raise DomainError("tabulated shape requires (time, amplitude) samples")
            samples = np.asarray(self.samples, dtype=float)
            if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 2:
                raise DomainError("samples must be an (n >= 2, 2) array")
            t = samples[:, 0]
            if np.any(np.diff(t) <= 0.0):
                raise GridError("sample times must be strictly increasing")
            norm = np.trapezoid(samples[:, 1] ** 2, t)
            if not norm > 0.0:
                raise DomainError("tabulated envelope has zero power")
            samples = samples.copy()
            samples[:, 1] /= math.sqrt(norm)
            samples.flags.writeable = False
            object.__setattr__(self, "samples", samples)
        elif self.samples is not None:
            raise DomainError(f"samples only apply to the tabulated shape, not {self.shape}")

    def start_time(self) -> float:
        """Effective turn-on time used for integration and detection windows."""
        if self.shape is PulseShape.RISING_EXP:
            return self.t_end - EXP_TRUNCATION_TAUS * self.tau
        if self.shape is PulseShape.SQUARE:
            return self.t_end - self.tau
        return float(self.samples[0, 0])

    def end_time(self) -> float:
        if self.shape is PulseShape.TABULATED:
            return float(self.samples[-1, 0])
        return self.t_end

    def edge_times(self) -> tuple[float, ...]:
        """Envelope discontinuities where the integrator restarts."""
        if self.shape is PulseShape.RISING_EXP:
            return (self.t_end,)
        if self.shape is PulseShape.SQUARE:
            return (self.t_end - self.tau, self.t_end)
        return (float(self.samples[0, 0]), float(self.samples[-1, 0]))


def envelope_value(spec: PulseSpec, t):
    """Envelope amplitude xi(t) in ns^-1/2; accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    tr = t - spec.t_end
    if spec.shape is PulseShape.RISING_EXP:
        out = np.where(tr <= 0.0, np.exp(np.minimum(tr, 0.0) / (2.0 * spec.tau)), 0.0)
        out = out / math.sqrt(spec.tau)
    elif spec.shape is PulseShape.SQUARE:
        out = np.where((tr >= -spec.tau) & (tr <= 0.0), 1.0 / math.sqrt(spec.tau), 0.0)
    else:
        out = np.interp(t, spec.samples[:, 0], spec.samples[:, 1], left=0.0, right=0.0)
    return out if out.ndim else float(out)


def envelope_squared_integral(spec: PulseSpec, a: float, b: float) -> float:
    """integral_a^b xi(t)^2 dt, exact for the analytic shapes."""
    if b <= a:
        return 0.0
    ar, br = a - spec.t_end, b - spec.t_end
    if spec.shape is PulseShape.RISING_EXP:
        hi = min(br, 0.0)
        if hi <= ar:
            return 0.0
        return math.exp(hi / spec.tau) - math.exp(ar / spec.tau)
    if spec.shape is PulseShape.SQUARE:
        lo, hi = max(ar, -spec.tau), min(br, 0.0)
        return max(hi - lo, 0.0) / spec.tau
    # tabulated: trapezoid on the sample grid itself, so the full-support
    # integral reproduces the normalization exactly
    inner = spec.samples[:, 0]
    ts = np.concatenate(([a], inner[(inner > a) & (inner < b)], [b]))
    return float(np.trapezoid(envelope_value(spec, ts) ** 2, ts))


def coupling(spec: PulseSpec, atom: AtomParams, t):
    """Dynamical coupling g(t) = sqrt(Gamma_p * <N>) * xi(t), in 1/ns."""
    return math.sqrt(atom.gamma_p * spec.mean_photons) * envelope_value(spec, t)


@dataclass(frozen=True)
class TimeGrid:
    """Integration window and output/step-size cap."""

    t_start: float
    t_end: float
    dt_max: float = 0.1

    def __post_init__(self) -> None:
        if not self.t_start < self.t_end:
            raise GridError(f"need t_start < t_end, got [{self.t_start}, {self.t_end}]")
        if not self.dt_max > 0.0:
            raise GridError(f"dt_max must be positive, got {self.dt_max}")


@dataclass(frozen=True)
class Trajectory:
    """Excited-state population P_e(t) and in-phase coherence on a time grid."""

    times: np.ndarray
    p_e: np.ndarray
    coherence: np.ndarray
    p_e_max: float
    t_of_max: float

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        p_e = np.asarray(self.p_e, dtype=float)
        coh = np.asarray(self.coherence, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise GridError("trajectory needs at least two time points")
        if np.any(np.diff(times) <= 0.0):
            raise GridError("trajectory times must be strictly increasing")
        if p_e.shape != times.shape or coh.shape != times.shape:
            raise GridError("p_e/coherence must match the time grid")
        if p_e.min() < -1e-8 or p_e.max() > 1.0 + 1e-8:
            raise NumericalError(
                f"P_e left [0, 1] beyond tolerance: [{p_e.min()}, {p_e.max()}]"
            )
        p_e = np.clip(p_e, 0.0, 1.0)
        for arr, name in ((times, "times"), (p_e, "p_e"), (coh, "coherence")):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "p_e_max", float(p_e.max()))
        object.__setattr__(self, "t_of_max", float(times[int(np.argmax(p_e))]))

    def p_e_at(self, t) -> np.ndarray:
        """Linear interpolation of P_e onto arbitrary times inside the grid."""
        return np.interp(t, self.times, self.p_e)


def _segments(spec: PulseSpec, grid: TimeGrid) -> list[tuple[float, float]]:
    cuts = [grid.t_start]
    for edge in spec.edge_times():
        if grid.t_start < edge < grid.t_end:
            cuts.append(edge)
    cuts.append(grid.t_end)
    cuts = sorted(set(cuts))
    return list(zip(cuts[:-1], cuts[1:]))


def solve_bloch(
    spec: PulseSpec,
    atom: AtomParams,
    grid: TimeGrid,
    *,
    initial_state: tuple[float, float] = (0.0, 0.0),
    decay_override: float | None = None,
    rtol: float = _RTOL,
    atol: float = _ATOL,
) -> Trajectory:
    """Integrate the optical Bloch equations over ``grid`` and locate the maximum.

    The atom starts in ``initial_state`` = (P_e, s) at ``grid.t_start`` (ground
    state by default).  ``decay_override`` replaces the decay rate in the
    damping terms only (the coupling keeps using ``atom.gamma_p``); passing 0.0
    gives the decay-free test mode.  The integrator is an adaptive embedded
    Runge-Kutta 4(5) pair restarted at envelope discontinuities; the grid point
    nearest the P_e maximum is refined on the dense interpolant and inserted
    into the returned arrays, so ``p_e_max == max(p_e)`` holds exactly.
    """
    if spec.mean_photons > 0.0 and grid.t_start > spec.start_time() + 1e-9:
        raise GridError(
            f"grid must start at or before the pulse turn-on "
            f"({grid.t_start} > {spec.start_time()})"
        )
    gamma_d = atom.gamma if decay_override is None else decay_override
    if gamma_d < 0.0:
        raise DomainError(f"decay override must be >= 0, got {gamma_d}")
    delta = atom.detuning
    amp = math.sqrt(atom.gamma_p * spec.mean_photons)

    if spec.shape is PulseShape.RISING_EXP:
        t_edge, inv2tau = spec.t_end, 0.5 / spec.tau
        sq_amp = None

        def omega(t: float) -> float:
            if t > t_edge:
                return 0.0
            return 2.0 * amp / math.sqrt(spec.tau) * math.exp((t - t_edge) * inv2tau)

    elif spec.shape is PulseShape.SQUARE:
        lo, hi = spec.t_end - spec.tau, spec.t_end
        sq_amp = 2.0 * amp / math.sqrt(spec.tau)

        def omega(t: float) -> float:
            return sq_amp if lo <= t <= hi else 0.0

    else:
        ts, xs = spec.samples[:, 0], spec.samples[:, 1]

        def omega(t: float) -> float:
            return 2.0 * amp * float(np.interp(t, ts, xs, left=0.0, right=0.0))

    def rhs(t: float, y: np.ndarray) -> list[float]:
        pe, s, q = y
        om = omega(t)
        return [
            -gamma_d * pe + om * s,
            -0.5 * gamma_d * s - om * (pe - 0.5) - delta * q,
            -0.5 * gamma_d * q + delta * s,
        ]

    y = np.array([initial_state[0], initial_state[1], 0.0], dtype=float)
    times_parts, pe_parts, s_parts = [], [], []
    dense = []  # (t_lo, t_hi, OdeSolution)
    for seg_lo, seg_hi in _segments(spec, grid):
        n = max(2, int(math.ceil((seg_hi - seg_lo) / grid.dt_max)) + 1)
        t_eval = np.linspace(seg_lo, seg_hi, n)
        sol = solve_ivp(
            rhs, (seg_lo, seg_hi), y, method="RK45", t_eval=t_eval,
            dense_output=True, rtol=rtol, atol=atol,
            max_step=min(grid.dt_max, seg_hi - seg_lo),
        )
        if not sol.success:
            raise NumericalError(f"step control failed on [{seg_lo}, {seg_hi}]: {sol.message}")
        dense.append((seg_lo, seg_hi, sol.sol))
        skip = 1 if times_parts else 0  # segment joints are duplicated
        times_parts.append(sol.t[skip:])
        pe_parts.append(sol.y[0, skip:])
        s_parts.append(sol.y[1, skip:])
        y = sol.y[:, -1]

    times = np.concatenate(times_parts)
    pe = np.concatenate(pe_parts)
    s = np.concatenate(s_parts)

    def pe_dense(t: float) -> float:
        for t_lo, t_hi, f in dense:
            if t_lo <= t <= t_hi:
                return float(f(t)[0])
        return float(dense[-1][2](t)[0])

    # Refine the maximum between grid points on the dense interpolant.
    i = int(np.argmax(pe))
    lo = times[max(i - 1, 0)]
    hi = times[min(i + 1, times.size - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda t: -pe_dense(t), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-7},
        )
        t_star = float(res.x)
        pe_star = -float(res.fun)
        if pe_star > pe[i] and abs(t_star - times[i]) > 1e-12:
            j = int(np.searchsorted(times, t_star))
            s_star = 0.0
            for t_lo, t_hi, f in dense:
                if t_lo <= t_star <= t_hi:
                    s_star = float(f(t_star)[1])
                    break
            times = np.insert(times, j, t_star)
            pe = np.insert(pe, j, pe_star)
            s = np.insert(s, j, s_star)

    return Trajectory(times=times, p_e=pe, coherence=s,
                      p_e_max=float(pe.max()), t_of_max=float(times[int(np.argmax(pe))]))


def default_grid(spec: PulseSpec, atom: AtomParams, *, decay_window: float = 5.0,
                 dt_max: float = 0.1) -> TimeGrid:
    """Window covering the pulse plus ``decay_window`` lifetimes of free decay."""
    return TimeGrid(spec.start_time(), spec.end_time() + decay_window / atom.gamma, dt_max)


def weak_field_oracle(
    spec: PulseSpec, atom: AtomParams, grid: TimeGrid | None = None,
) -> Trajectory:
    """First-order perturbative reference: P_e(t) = |int g(t') e^{-Gamma(t-t')/2} dt'|^2.

    Evaluated by direct quadrature on a fine fixed grid, independent of the ODE
    solver; intended for the weak-drive regime 4 * integral g^2 dt << 1.
    """
    if grid is None:
        grid = default_grid(spec, atom)
    dt = min(spec.tau, 1.0 / atom.gamma) / 400.0
    # fine grid that passes exactly through the envelope discontinuities,
    # where the first-order P_e(t) has its cusp
    parts = []
    for seg_lo, seg_hi in _segments(spec, grid):
        n = int(math.ceil((seg_hi - seg_lo) / dt)) + 1
        seg = np.linspace(seg_lo, seg_hi, max(n, 2))
        parts.append(seg if not parts else seg[1:])
    t = np.concatenate(parts)
    g = coupling(spec, atom, t)
    half = 0.5 * atom.gamma
    # integrating factor: a(t) = e^{-half t} * cumulative integral of g e^{half t'}
    weighted = g * np.exp(half * (t - t[0]))
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (weighted[1:] + weighted[:-1]) * np.diff(t))))
    a = np.exp(-half * (t - t[0])) * cum
    pe = a * a
    return Trajectory(times=t, p_e=pe, coherence=a,
                      p_e_max=float(pe.max()), t_of_max=float(t[int(np.argmax(pe))]))


def local_maxima(traj: Trajectory, min_prominence: float = 0.01) -> np.ndarray:
    """Indices of local maxima of P_e with at least ``min_prominence`` depth."""
    from scipy.signal import find_peaks

    peaks, _ = find_peaks(traj.p_e, prominence=min_prominence)
    return peaks


def oscillation_contrast(traj: Trajectory, min_prominence: float = 0.01) -> float:
    """Depth of the first Rabi dip: P_e at the first peak minus the following minimum."""
    peaks = local_maxima(traj, min_prominence)
    if peaks.size == 0:
        return 0.0
    first = peaks[0]
    nxt = peaks[1] if peaks.size > 1 else traj.p_e.size - 1
    trough = float(traj.p_e[first:nxt + 1].min())
    return float(traj.p_e[first]) - trough
