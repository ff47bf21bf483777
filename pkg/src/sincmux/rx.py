"""Receiver: demultiplexing with a time-shifted sinc-pulse sequence, coherent
detection, sampling-instant extraction, reconstruction and symbol decisions."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .comb import SincSequenceSpec, check_grid, eval_sq, synth_sq
from .errors import ConfigurationError
from .tx import PayloadKind, level_indices_to_bits
from .waveform import Waveform, brickwall_filter, sinc_reconstruct


class FilterDomain(str, enum.Enum):
    BANDPASS = "bandpass"  # width df around the optical carrier, before detection
    LOWPASS = "lowpass"  # cutoff df/2 on I and Q after detection


@dataclass(frozen=True)
class RxConfig:
    target_shift: int = 0
    filter_domain: FilterDomain = FilterDomain.BANDPASS
    lo_phase_error: float = 0.0
    clock_phase_error: float = 0.0  # fraction of dT
    rescale_by_n: bool = True
    edge_periods: int = 1

    def __post_init__(self):
        object.__setattr__(self, "filter_domain", FilterDomain(self.filter_domain))
        if self.target_shift < 0:
            raise ConfigurationError("target_shift must be non-negative")
        if self.edge_periods < 0:
            raise ConfigurationError("edge_periods must be non-negative")


@dataclass(frozen=True, eq=False)
class DemuxResult:
    filtered_waveform: Waveform
    sample_instants: np.ndarray
    sample_values: np.ndarray
    scale: float
    shift_index: int


def _local_sequence(spec: SincSequenceSpec, grid: Waveform, clock_error: float) -> np.ndarray:
    if clock_error == 0:
        return synth_sq(spec, grid).samples
    return eval_sq(spec, grid.times, extra_delay=clock_error * spec.delta_t)


def _filter_iq(w: Waveform, width_hz: float) -> Waveform:
    # a real, even filter acts on I and Q independently
    i = brickwall_filter(w.with_samples(w.samples.real), width_hz).samples.real
    q = brickwall_filter(w.with_samples(w.samples.imag), width_hz).samples.real
    return w.with_samples(i + 1j * q)


def demultiplex(
    s: Waveform,
    spec: SincSequenceSpec,
    cfg: RxConfig | None = None,
    *,
    apply_filter: bool = True,
) -> Waveform:
    """Multiply by the sequence shifted to channel ``spec.shift_index`` and filter to ``df``.

    With ``apply_filter=False`` the raw product (triangular spectrum) is returned.
    """
    cfg = cfg or RxConfig(target_shift=spec.shift_index)
    if cfg.target_shift != spec.shift_index:
        raise ConfigurationError("RxConfig.target_shift disagrees with the sequence shift")
    check_grid(spec, s)
    product = s.with_samples(s.samples * _local_sequence(spec, s, cfg.clock_phase_error))
    if not apply_filter:
        return product
    if cfg.filter_domain is FilterDomain.BANDPASS:
        return brickwall_filter(product, spec.line_spacing)
    return _filter_iq(product, spec.line_spacing)


def coherent_detect(w: Waveform, lo_phase_error: float = 0.0) -> Waveform:
    """Complex I/Q output of a coherent receiver whose LO is off by ``lo_phase_error``."""
    if lo_phase_error == 0:
        return w
    return w.with_samples(w.samples * np.exp(-1j * lo_phase_error))


def receive_channel(s: Waveform, spec: SincSequenceSpec, cfg: RxConfig) -> Waveform:
    """Full receiver branch in the order the filter domain implies."""
    if cfg.filter_domain is FilterDomain.BANDPASS:
        return coherent_detect(demultiplex(s, spec, cfg), cfg.lo_phase_error)
    product = demultiplex(s, spec, cfg, apply_filter=False)
    return _filter_iq(coherent_detect(product, cfg.lo_phase_error), spec.line_spacing)


def sampling_instants(spec: SincSequenceSpec, grid: Waveform, edge_periods: int = 0) -> np.ndarray:
    """Channel peaks ``l dT + m T`` inside the window, dropping ``edge_periods`` at each end."""
    periods = int(round(grid.duration / spec.period))
    first = int(np.ceil((grid.t0 - spec.delay) / spec.period - 1e-9))
    m = np.arange(first + edge_periods, first + periods - edge_periods)
    return spec.delay + m * spec.period


def extract_samples(
    x: Waveform,
    spec: SincSequenceSpec,
    cfg: RxConfig | None = None,
) -> DemuxResult:
    cfg = cfg or RxConfig(target_shift=spec.shift_index)
    check_grid(spec, x)
    t_s = sampling_instants(spec, x, cfg.edge_periods)
    idx = np.array([x.index_of(t) for t in t_s], dtype=np.int64)
    scale = float(spec.n_lines) if cfg.rescale_by_n else 1.0
    return DemuxResult(x, t_s, x.samples[idx] * scale, scale, spec.shift_index)


def reconstruct_channel(res: DemuxResult, spec: SincSequenceSpec, method: str = "direct") -> Waveform:
    """Recovered channel waveform, in the same scale as ``res.sample_values``.

    ``direct`` returns the filtered demultiplexer output; ``sinc`` rebuilds the
    waveform from the sample values alone, at one sample per period.
    """
    grid = res.filtered_waveform
    if method == "direct":
        return grid.with_samples(grid.samples * res.scale)
    if method != "sinc":
        raise ConfigurationError(f"unknown reconstruction method {method!r}")
    periods = int(round(grid.duration / spec.period))
    periodic = res.sample_values.size == periods
    return sinc_reconstruct(res.sample_instants, res.sample_values, 1.0 / spec.period, grid, periodic=periodic)


@dataclass(frozen=True, eq=False)
class Decisions:
    levels: np.ndarray
    bits: np.ndarray
    indices: np.ndarray


def ook_threshold(power: np.ndarray, iterations: int = 20) -> float:
    """Midpoint between the two rail means of received power."""
    thr = 0.5 * (power.min() + power.max())
    for _ in range(iterations):
        hi, lo = power[power > thr], power[power <= thr]
        if not hi.size or not lo.size:
            break
        new = 0.5 * (hi.mean() + lo.mean())
        if new == thr:
            break
        thr = new
    return float(thr)


def decide_symbols(values, kind, *, ook_threshold_value: float | None = None) -> Decisions:
    """Nearest-level decisions; exact ties resolve toward the lower level.

    BPSK and four-level use the real part; OOK uses received power.
    """
    v = np.asarray(values)
    kind = PayloadKind(kind)
    if kind is PayloadKind.OOK:
        p = np.abs(v) ** 2
        thr = ook_threshold(p) if ook_threshold_value is None else ook_threshold_value
        idx = (p > thr).astype(np.int64)
    elif kind is PayloadKind.BPSK:
        idx = (v.real > 0).astype(np.int64)
    elif kind is PayloadKind.FOUR_LEVEL:
        idx = np.searchsorted(np.array([-2 / 3, 0.0, 2 / 3]), v.real, side="left").astype(np.int64)
    else:
        raise ConfigurationError(f"no symbol decision for {kind.value} payloads")
    return Decisions(kind.levels[idx], level_indices_to_bits(kind, idx), idx)
