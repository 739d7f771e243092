"""Reconstruction of physics from timestamp streams.

Mirrors the experimental analysis chain: sort detections into time bins
relative to the pulse edge, estimate the mean photon number from the forward
rate, convert backward counts into the excitation probability

    P_e(t) = N_d(t) / (Gamma_p * dt * eta_r * N_T),

and fit exponentials to rising/decaying sections of the data.  No dead-time
correction is applied anywhere; the estimators instead warn when the operating
regime (r_d <~ 1%) that makes the bias negligible is left.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .detection import DetectionSetup, TimestampStream
from .dynamics import AtomParams
from .errors import DomainError, NumericalError

_FIT_MAX_ITER = 200
_FIT_RTOL = 1e-8

#: one-sided 68% Poisson upper limit for zero observed counts
_ZERO_COUNT_LIMIT = 1.84


@dataclass(frozen=True)
class Histogram:
    """Binned detection times relative to the pulse edge."""

    bin_edges: np.ndarray
    counts: np.ndarray
    n_pulses: int
    channel: int
    n_dropped: int = 0

    def __post_init__(self) -> None:
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0.0):
            raise DomainError("bin edges must be strictly increasing")
        if counts.shape != (edges.size - 1,):
            raise DomainError("counts must have one entry per bin")
        if counts.min(initial=0) < 0:
            raise DomainError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])


@dataclass(frozen=True)
class PeSeries:
    """Per-bin excitation probability with Poisson standard errors."""

    bin_centers: np.ndarray
    p_e: np.ndarray
    p_e_err: np.ndarray
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class NbarEstimate:
    nbar: float
    std_error: float
    r_d: float


@dataclass(frozen=True)
class ExpFit:
    """Weighted least-squares fit of A * exp(+-t / tau)."""

    amplitude: float
    tau: float
    window: tuple[float, float]
    residual_norm: float
    amplitude_err: float
    tau_err: float
    direction: str
    n_iterations: int


def histogram(
    stream: TimestampStream, channel: int, bin_width: float,
    t_range: tuple[float, float], n_pulses: int,
) -> Histogram:
    """Bin the events of one channel; out-of-range events are counted as dropped."""
    if not bin_width > 0.0:
        raise DomainError("bin width must be positive")
    lo, hi = t_range
    if not hi > lo:
        raise DomainError("histogram range must be non-empty")
    sel = stream.select_channel(channel)
    if len(sel) == 0:
        warnings.warn("histogramming an empty stream", stacklevel=2)
    n_bins = int(round((hi - lo) / bin_width))
    edges = lo + np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(sel.t_ns, bins=edges)
    dropped = len(sel) - int(counts.sum())
    return Histogram(bin_edges=edges, counts=counts.astype(np.int64),
                     n_pulses=n_pulses, channel=channel, n_dropped=dropped)


def estimate_nbar(
    hist: Histogram, setup: DetectionSetup, *, eta_l_err: float = 0.02,
) -> NbarEstimate:
    """Mean photon number from the forward rate: <N> = r_d / (eta_l * eta_ND2).

    The standard error combines Poisson counting statistics with the stated
    system-efficiency uncertainty in quadrature.
    """
    if hist.n_pulses <= 0:
        raise DomainError("histogram must carry a positive pulse count")
    denom = setup.eta_l * setup.nd2_transmission
    if not denom > 0.0:
        raise DomainError("eta_l * eta_ND2 must be positive to invert the rate")
    total = int(hist.counts.sum())
    r_d = total / hist.n_pulses
    if r_d > 0.01:
        warnings.warn(
            f"r_d={r_d:.3g} > 1%: dead time biases the photon-number estimate",
            stacklevel=2,
        )
    nbar = r_d / denom
    if total == 0:
        return NbarEstimate(nbar=0.0, r_d=0.0,
                            std_error=_ZERO_COUNT_LIMIT / (hist.n_pulses * denom))
    rel = math.sqrt(1.0 / total + (eta_l_err / setup.eta_l) ** 2)
    return NbarEstimate(nbar=nbar, std_error=nbar * rel, r_d=r_d)


def reconstruct_pe(hist: Histogram, atom: AtomParams, setup: DetectionSetup) -> PeSeries:
    """Excitation probability per bin, P_e = N_d / (Gamma_p * dt * eta_r * N_T)."""
    if not (atom.gamma_p > 0.0 and setup.eta_r > 0.0 and hist.n_pulses > 0):
        raise DomainError("Gamma_p, eta_r and N_T must all be positive")
    denom = atom.gamma_p * hist.bin_width * setup.eta_r * hist.n_pulses
    p_e = hist.counts / denom
    p_e_err = np.sqrt(hist.counts) / denom
    return PeSeries(
        bin_centers=hist.bin_centers, p_e=p_e, p_e_err=p_e_err,
        params={"gamma_p": atom.gamma_p, "bin_width": hist.bin_width,
                "eta_r": setup.eta_r, "n_pulses": hist.n_pulses},
    )


def _extract_xy(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, Histogram):
        return data.bin_centers, data.counts.astype(float)
    if isinstance(data, PeSeries):
        return data.bin_centers, np.asarray(data.p_e, dtype=float)
    t, y = data
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def fit_exponential(data, window: tuple[float, float], direction: str) -> ExpFit:
    """Fit A * exp(+t/tau) (``rising``) or A * exp(-t/tau) (``decaying``).

    Gauss-Newton with Levenberg damping and iteratively reweighted Poisson
    weights w = 1 / max(model, 1); the fixed point solves the Poisson
    maximum-likelihood score equation, so tau stays unbiased down to
    tens-of-counts bins (weighting by the observed counts instead pulls tau
    low by a few percent there).  Initial guess from a straight-line fit to
    log(counts).  Converged when the relative parameter change drops below
    1e-8; raises :class:`NumericalError` after 200 iterations.
    """
    if direction not in ("rising", "decaying"):
        raise DomainError(f"direction must be 'rising' or 'decaying', got {direction!r}")
    sign = 1.0 if direction == "rising" else -1.0
    t_all, y_all = _extract_xy(data)
    lo, hi = window
    if lo < t_all.min() - 1e-9 or hi > t_all.max() + 1e-9 or hi <= lo:
        raise DomainError(f"fit window [{lo}, {hi}] outside the data range")
    mask = (t_all >= lo) & (t_all <= hi)
    t, y = t_all[mask], y_all[mask]
    if int(np.count_nonzero(y > 0.0)) < 8:
        raise DomainError("degenerate window: need >= 8 bins with nonzero counts")

    # initial guess: straight-line fit to log(y) over the positive bins
    pos = y > 0.0
    slope, intercept = np.polyfit(t[pos], np.log(y[pos]), 1)
    tau = sign / slope if slope * sign > 0.0 else (hi - lo)
    amp = math.exp(intercept)

    def weighted_state(a: float, tt: float, sw: np.ndarray | None = None):
        m = a * np.exp(sign * t / tt)
        if sw is None:
            sw = np.sqrt(1.0 / np.maximum(m, 1.0))
        r = sw * (y - m)
        return m, sw, r, float(r @ r)

    lam = 0.0
    n_iter = 0
    for n_iter in range(1, _FIT_MAX_ITER + 1):
        m, sw, r, cost = weighted_state(amp, tau)
        jac = np.column_stack((sw * m / amp, sw * m * (-sign * t / tau**2)))
        jtj = jac.T @ jac
        jtr = jac.T @ r
        step_ok = False
        for _ in range(30):
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), jtr)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None:
                a_new, tau_new = amp + delta[0], tau + delta[1]
                if tau_new > 0.0 and a_new > 0.0:
                    # damping acceptance is judged at this iteration's weights
                    _, _, _, cost_new = weighted_state(a_new, tau_new, sw)
                    if cost_new <= cost * (1.0 + 1e-14):
                        step_ok = True
                        break
            lam = max(lam * 10.0, 1e-8)
        if not step_ok:
            raise NumericalError("exponential fit: no acceptable damped step found")
        rel_change = max(abs(delta[0] / a_new), abs(delta[1] / tau_new))
        amp, tau = float(a_new), float(tau_new)
        lam /= 10.0
        if rel_change < _FIT_RTOL:
            break
    else:
        raise NumericalError(f"exponential fit did not converge in {_FIT_MAX_ITER} iterations")

    m, sw, r, cost = weighted_state(amp, tau)
    jac = np.column_stack((sw * m / amp, sw * m * (-sign * t / tau**2)))
    try:
        cov = np.linalg.inv(jac.T @ jac)
        amp_err, tau_err = float(np.sqrt(cov[0, 0])), float(np.sqrt(cov[1, 1]))
    except np.linalg.LinAlgError:
        amp_err = tau_err = float("nan")
    return ExpFit(
        amplitude=float(amp), tau=float(tau), window=(float(lo), float(hi)),
        residual_norm=math.sqrt(cost), amplitude_err=amp_err, tau_err=tau_err,
        direction=direction, n_iterations=n_iter,
    )
