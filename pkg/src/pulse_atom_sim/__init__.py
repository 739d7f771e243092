"""Simulation and analysis of single-atom excitation by temporally shaped pulses."""

from .analysis import (
    ExpFit,
    Histogram,
    NbarEstimate,
    PeSeries,
    estimate_nbar,
    fit_exponential,
    histogram,
    reconstruct_pe,
)
from .detection import (
    CH_BACKWARD,
    CH_FORWARD,
    DetectionSetup,
    TimestampRecord,
    TimestampStream,
    read_timestamps,
    simulate_backward,
    simulate_forward,
    write_timestamps,
)
from .dynamics import (
    DEFAULT_LIFETIME_NS,
    AtomParams,
    PulseShape,
    PulseSpec,
    TimeGrid,
    Trajectory,
    coupling,
    default_grid,
    envelope_value,
    solve_bloch,
    weak_field_oracle,
)
from .optics import (
    FocusingGeometry,
    OverlapResult,
    overlap_from_focusing,
    upper_incomplete_gamma,
)
from .sweep import (
    OptimalTau,
    ShapeComparison,
    SweepGrid,
    SweepResult,
    compare_shapes,
    optimal_tau,
    sweep_pe_max,
)

__version__ = "0.1.0"
