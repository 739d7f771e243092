"""Monte-Carlo photodetection timestamps for the backward (fluorescence) and
forward (transmitted reference pulse) channels.

Sampling model: within each pulse the detection window is split into bins of
``bin_width``; each bin fires independently with its small per-bin probability
(backward: P_e(t) * Gamma_p * dt * eta_r; forward: <N> * eta_l * eta_ND2 times
the envelope intensity in the bin) and the detection time is placed uniformly
inside the bin.  Detector dead time then censors events on the same channel,
in wall-clock time across pulse boundaries (pulses are ``pulse_period`` apart).

Randomness is counter-based: every (pulse, channel) owns its own substream,
derived from the master seed by an avalanche hash of (seed, channel, pulse,
word index).  Generation is therefore reproducible and independent of how the
pulse range is partitioned across workers.

Detection times are quantized to 1/16 ns at generation time, matching the file
format, so write -> read round trips are exact.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .dynamics import AtomParams, PulseSpec, Trajectory, envelope_squared_integral
from .errors import BinProbabilityError, DomainError, TimestampFormatError

CH_BACKWARD = 0
CH_FORWARD = 1

_MAGIC = b"PATS"
_VERSION = 1
_HEADER = struct.Struct("<4sIQ")
_RECORD_DTYPE = np.dtype([
    ("pulse_index", "<u8"),
    ("channel", "u1"),
    ("pad", "u1", (3,)),
    ("t16", "<i4"),
])
assert _RECORD_DTYPE.itemsize == 16

_MAX_BIN_PROB = 0.1


class TimestampRecord(NamedTuple):
    pulse_index: int
    channel: int
    t_ns: float


@dataclass(frozen=True)
class DetectionSetup:
    """Efficiencies, attenuation, timing and RNG seed of the detection chain."""

    eta_r: float = 0.30
    eta_l: float = 0.30
    nd2_db: float = -43.0
    dead_time: float = 3000.0
    bin_width: float = 1.0
    pulse_period: float = 12000.0
    n_pulses: int = 1_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        # eta = 0 is allowed and simply produces no events.
        if not (0.0 <= self.eta_r <= 1.0 and 0.0 <= self.eta_l <= 1.0):
            raise DomainError("efficiencies must lie in [0, 1]")
        if self.nd2_db > 0.0:
            raise DomainError(f"ND attenuation must be <= 0 dB, got {self.nd2_db}")
        if self.dead_time < 0.0:
            raise DomainError("dead time must be >= 0")
        if not self.bin_width > 0.0:
            raise DomainError("bin width must be positive")
        if not self.pulse_period > 0.0:
            raise DomainError("pulse period must be positive")
        if self.n_pulses < 0:
            raise DomainError("pulse count must be >= 0")

    @property
    def nd2_transmission(self) -> float:
        return 10.0 ** (self.nd2_db / 10.0)


@dataclass
class TimestampStream:
    """Columnar event stream; times are relative to the pulse edge (ns)."""

    pulse_index: np.ndarray
    channel: np.ndarray
    t_ns: np.ndarray

    @classmethod
    def empty(cls) -> "TimestampStream":
        return cls(np.empty(0, np.uint64), np.empty(0, np.uint8), np.empty(0, float))

    @classmethod
    def concat(cls, streams: "list[TimestampStream]") -> "TimestampStream":
        if not streams:
            return cls.empty()
        return cls(
            np.concatenate([s.pulse_index for s in streams]),
            np.concatenate([s.channel for s in streams]),
            np.concatenate([s.t_ns for s in streams]),
        )

    def select_channel(self, channel: int) -> "TimestampStream":
        m = self.channel == channel
        return TimestampStream(self.pulse_index[m], self.channel[m], self.t_ns[m])

    def __len__(self) -> int:
        return int(self.pulse_index.size)

    def __getitem__(self, i: int) -> TimestampRecord:
        return TimestampRecord(int(self.pulse_index[i]), int(self.channel[i]),
                               float(self.t_ns[i]))

    def __iter__(self) -> Iterator[TimestampRecord]:
        for i in range(len(self)):
            yield self[i]


# ---------------------------------------------------------------------------
# counter-based substreams
# ---------------------------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_CHANNEL_SALT = np.uint64(0xD6E8FEB86659FD93)


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer: a bijective avalanche on uint64."""
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def _channel_key(seed: int, channel: int) -> np.uint64:
    base = (int(seed) + int(_CHANNEL_SALT) * (channel + 1)) & 0xFFFFFFFFFFFFFFFF
    return _mix64(np.array([base], np.uint64))[0]


def _uniforms(key: np.uint64, pulses: np.ndarray, words: np.ndarray) -> np.ndarray:
    """U[0,1) for every (pulse, word) pair; shapes broadcast."""
    h = _mix64(np.asarray(pulses, np.uint64) * _GOLDEN + key)
    v = _mix64(h ^ (np.asarray(words, np.uint64) + np.uint64(1)) * _GOLDEN)
    return (v >> np.uint64(11)) * (1.0 / (1 << 53))


def _quantize(t: np.ndarray) -> np.ndarray:
    """Snap times to the 1/16 ns grid (floor, so bin membership is preserved)."""
    return np.floor(t * 16.0) / 16.0


def _draw_events(
    key: np.uint64, pulse_lo: int, pulse_hi: int, edges: np.ndarray, p_bin: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin Bernoulli draws for pulses [pulse_lo, pulse_hi); returns (pulse, t)."""
    n_bins = p_bin.size
    bw = edges[1] - edges[0]
    out_pulse, out_t = [], []
    chunk = max(1, int(4_000_000 // max(n_bins, 1)))
    active = np.nonzero(p_bin > 0.0)[0]
    for lo in range(pulse_lo, pulse_hi, chunk):
        hi = min(lo + chunk, pulse_hi)
        pulses = np.arange(lo, hi, dtype=np.uint64)
        u = _uniforms(key, pulses[:, None], active[None, :].astype(np.uint64))
        rows, cols = np.nonzero(u < p_bin[active])
        if rows.size == 0:
            continue
        hit_pulse = pulses[rows]
        hit_bin = active[cols]
        # word n_bins + bin gives the within-bin position
        off = _uniforms(key, hit_pulse, hit_bin.astype(np.uint64) + np.uint64(n_bins))
        out_pulse.append(hit_pulse)
        out_t.append(_quantize(edges[hit_bin] + off * bw))
    if not out_pulse:
        return np.empty(0, np.uint64), np.empty(0, float)
    return np.concatenate(out_pulse), np.concatenate(out_t)


def _apply_dead_time(
    pulse: np.ndarray, t: np.ndarray, channel: int, setup: DetectionSetup,
) -> TimestampStream:
    """Censor same-channel events closer than ``dead_time`` in wall-clock order."""
    order = np.lexsort((t, pulse))
    pulse, t = pulse[order], t[order]
    if setup.dead_time > 0.0 and pulse.size:
        absolute = pulse.astype(float) * setup.pulse_period + t
        keep = np.zeros(pulse.size, dtype=bool)
        last = -np.inf
        for i, at in enumerate(absolute):
            if at - last >= setup.dead_time:
                keep[i] = True
                last = at
        pulse, t = pulse[keep], t[keep]
    ch = np.full(pulse.size, channel, np.uint8)
    return TimestampStream(pulse, ch, t)


def _bin_edges(t_lo: float, t_hi: float, bw: float) -> np.ndarray:
    lo = math.ceil(t_lo / bw)
    hi = math.floor(t_hi / bw)
    if hi <= lo:
        raise DomainError("detection window shorter than one bin")
    return np.arange(lo, hi + 1) * bw


def simulate_backward(
    traj: Trajectory, atom: AtomParams, setup: DetectionSetup,
    *, pulse_range: tuple[int, int] | None = None,
) -> TimestampStream:
    """Fluorescence events on APD1: per-bin probability P_e(t) * Gamma_p * dt * eta_r.

    ``traj`` must extend at least five lifetimes past its maximum so the decay
    tail is covered.  ``pulse_range`` restricts generation to a half-open pulse
    index window (used for partitioned generation); the default is all pulses.
    """
    if traj.times[-1] - traj.t_of_max < 5.0 / atom.gamma - 1e-9:
        raise DomainError(
            "trajectory must cover >= 5 lifetimes of decay past the excitation maximum"
        )
    edges = _bin_edges(traj.times[0], traj.times[-1], setup.bin_width)
    centers = edges[:-1] + 0.5 * setup.bin_width
    p_bin = traj.p_e_at(centers) * atom.gamma_p * setup.bin_width * setup.eta_r
    if p_bin.max(initial=0.0) > _MAX_BIN_PROB:
        raise BinProbabilityError(
            f"per-bin probability {p_bin.max():.3g} > {_MAX_BIN_PROB}; reduce bin_width"
        )
    lo, hi = pulse_range if pulse_range is not None else (0, setup.n_pulses)
    key = _channel_key(setup.seed, CH_BACKWARD)
    pulse, t = _draw_events(key, lo, hi, edges[:-1], p_bin)
    return _apply_dead_time(pulse, t, CH_BACKWARD, setup)


def simulate_forward(
    spec: PulseSpec, setup: DetectionSetup,
    *, pulse_range: tuple[int, int] | None = None,
) -> TimestampStream:
    """Transmitted reference pulse on APD2 (no atom in the trap).

    Per-pulse detection probability is r_d = <N> * eta_l * eta_ND2, distributed
    over bins according to the envelope intensity xi(t)^2.
    """
    scale = spec.mean_photons * setup.eta_l * setup.nd2_transmission
    r_d = scale  # integral of xi^2 over the full pulse is 1
    if r_d > 0.01:
        warnings.warn(
            f"expected detection fraction r_d={r_d:.3g} > 1%: dead time biases "
            "the rate estimate", stacklevel=2,
        )
    t_lo, t_hi = spec.start_time(), spec.end_time()
    edges = _bin_edges(t_lo - setup.bin_width, t_hi + setup.bin_width, setup.bin_width)
    p_bin = np.array([
        scale * envelope_squared_integral(spec, a, b)
        for a, b in zip(edges[:-1], edges[1:])
    ])
    if p_bin.max(initial=0.0) > _MAX_BIN_PROB:
        raise BinProbabilityError(
            f"per-bin probability {p_bin.max():.3g} > {_MAX_BIN_PROB}; reduce bin_width"
        )
    lo, hi = pulse_range if pulse_range is not None else (0, setup.n_pulses)
    key = _channel_key(setup.seed, CH_FORWARD)
    pulse, t = _draw_events(key, lo, hi, edges[:-1], p_bin)
    return _apply_dead_time(pulse, t, CH_FORWARD, setup)


# ---------------------------------------------------------------------------
# timestamp file format
# ---------------------------------------------------------------------------

def write_timestamps(stream: TimestampStream, path: str | Path) -> None:
    """Write the binary timestamp file (16-byte header + 16-byte records)."""
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["pulse_index"] = stream.pulse_index
    records["channel"] = stream.channel
    t16 = np.floor(stream.t_ns * 16.0)
    if t16.size and (t16.min() < np.iinfo(np.int32).min or t16.max() > np.iinfo(np.int32).max):
        raise DomainError("detection time out of range for the 1/16 ns i32 encoding")
    records["t16"] = t16.astype(np.int32)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, len(stream)))
        fh.write(records.tobytes())


def read_timestamps(path: str | Path) -> TimestampStream:
    """Read a timestamp file; raises :class:`TimestampFormatError` on corruption."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TimestampFormatError(
            f"file shorter than the {_HEADER.size}-byte header ({len(raw)} bytes)"
        )
    magic, version, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise TimestampFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise TimestampFormatError(f"unsupported format version {version}, expected {_VERSION}")
    payload = len(raw) - _HEADER.size
    n_full, leftover = divmod(payload, _RECORD_DTYPE.itemsize)
    if leftover:
        offset = _HEADER.size + n_full * _RECORD_DTYPE.itemsize
        raise TimestampFormatError(
            f"truncated record at byte offset {offset} (record {n_full})"
        )
    if n_full != count:
        raise TimestampFormatError(
            f"header promises {count} records but file holds {n_full}"
        )
    records = np.frombuffer(raw, dtype=_RECORD_DTYPE, offset=_HEADER.size, count=count)
    return TimestampStream(
        pulse_index=records["pulse_index"].astype(np.uint64),
        channel=records["channel"].astype(np.uint8),
        t_ns=records["t16"].astype(float) / 16.0,
    )
