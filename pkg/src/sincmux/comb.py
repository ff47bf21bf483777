"""Sinc-pulse sequences and their rectangular frequency combs.

A sequence with ``N`` (odd) lines and bandwidth ``B`` is evaluated from its
closed cosine-sum form

    sq(t) = (2/N) * (1/2 + sum_{k=1}^{(N-1)/2} cos(2 pi k B t / N))

so peaks, zero crossings and orthogonality hold to machine precision.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, ConfigurationError
from .waveform import Waveform, band_mask


@dataclass(frozen=True)
class SincSequenceSpec:
    n_lines: int
    bandwidth: float
    shift_index: int = 0

    def __post_init__(self):
        n = int(self.n_lines)
        if n != self.n_lines or n < 1 or n % 2 == 0:
            raise ConfigurationError(f"n_lines must be an odd positive integer, got {self.n_lines}")
        if not self.bandwidth > 0:
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if not 0 <= self.shift_index < n:
            raise ConfigurationError(f"shift_index must lie in [0, {n}), got {self.shift_index}")
        object.__setattr__(self, "n_lines", n)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))
        object.__setattr__(self, "shift_index", int(self.shift_index))

    @property
    def delta_t(self) -> float:
        """Peak-to-first-zero time 1/B."""
        return 1.0 / self.bandwidth

    @property
    def period(self) -> float:
        return self.n_lines / self.bandwidth

    @property
    def line_spacing(self) -> float:
        return self.bandwidth / self.n_lines

    @property
    def n_tones(self) -> int:
        return (self.n_lines - 1) // 2

    @property
    def delay(self) -> float:
        return self.shift_index * self.delta_t

    def shifted(self, shift_index: int) -> "SincSequenceSpec":
        return SincSequenceSpec(self.n_lines, self.bandwidth, shift_index)


def eval_sq(spec: SincSequenceSpec, t, extra_delay: float = 0.0):
    """Evaluate ``sq(t - l*dT - extra_delay)`` in closed form."""
    t = np.asarray(t, dtype=np.float64)
    # reduce to the fractional period first so large t keep full precision
    phase = np.mod((t - spec.delay - extra_delay) / spec.period, 1.0)
    k = np.arange(1, spec.n_tones + 1)
    acc = 0.5 + np.cos(2 * np.pi * np.multiply.outer(phase, k)).sum(axis=-1)
    out = (2.0 / spec.n_lines) * acc
    return float(out) if out.ndim == 0 else out


def sequence_grid(
    spec: SincSequenceSpec, periods: int, oversampling: int = 16, t0: float = 0.0
) -> Waveform:
    """Zero waveform at ``oversampling * B`` covering ``periods`` whole periods."""
    if periods < 1 or int(periods) != periods:
        raise ConfigurationError("periods must be a positive integer")
    if oversampling < 1 or int(oversampling) != oversampling:
        raise ConfigurationError("oversampling must be a positive integer")
    n = int(oversampling) * spec.n_lines * int(periods)
    return Waveform(np.zeros(n, dtype=np.complex128), oversampling * spec.bandwidth, t0)


def samples_per_delta_t(spec: SincSequenceSpec, grid: Waveform) -> int:
    """Whole number of grid samples in one dT; rejects grids where dT is fractional."""
    m = grid.sample_rate / spec.bandwidth
    mi = int(round(m))
    if mi < 1 or abs(m - mi) > 1e-9 * m:
        raise ConfigurationError(
            f"grid rate {grid.sample_rate} Hz is not an integer multiple of B={spec.bandwidth} Hz"
        )
    return mi


def check_grid(spec: SincSequenceSpec, grid: Waveform) -> int:
    """Validate that ``grid`` holds whole periods with integer-sample dT; returns samples per period."""
    m = samples_per_delta_t(spec, grid)
    per_period = m * spec.n_lines
    if len(grid) % per_period:
        raise ConfigurationError(
            f"grid of {len(grid)} samples is not a whole number of {per_period}-sample periods"
        )
    return per_period


def synth_sq(spec: SincSequenceSpec, grid: Waveform) -> Waveform:
    """Sample the sequence on ``grid``.

    The shifted sequence is an exact circular rotation of the unshifted one.
    """
    if grid.sample_rate < 2 * spec.bandwidth:
        raise AliasingError(f"grid rate {grid.sample_rate} Hz is below 2B = {2 * spec.bandwidth} Hz")
    check_grid(spec, grid)
    m = samples_per_delta_t(spec, grid)
    base = eval_sq(spec.shifted(0), grid.times)
    return grid.with_samples(np.roll(base, spec.shift_index * m))


@dataclass(frozen=True, eq=False)
class CombLines:
    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __len__(self) -> int:
        return self.frequencies.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["freq_hz", "re", "im"])
        for f, a in zip(self.frequencies, self.amplitudes):
            writer.writerow([repr(float(f)), repr(float(a.real)), repr(float(a.imag))])
        return buf.getvalue()


def comb_lines(spec: SincSequenceSpec) -> CombLines:
    n = spec.n_tones
    k = np.arange(-n, n + 1)
    freqs = k * spec.line_spacing
    # phase ramp of a delay l*dT, taken modulo one turn for accuracy
    turns = np.mod(k * spec.shift_index, spec.n_lines) / spec.n_lines
    amps = np.exp(-2j * np.pi * turns) / spec.n_lines
    return CombLines(freqs, amps)


def orthogonality_matrix(n_lines: int, bandwidth: float) -> np.ndarray:
    """Entry ``(k, l)`` is sequence ``l`` read at channel ``k``'s peak ``k*dT``."""
    base = SincSequenceSpec(n_lines, bandwidth)
    t = np.arange(n_lines) * base.delta_t
    return np.column_stack([eval_sq(base.shifted(l), t) for l in range(n_lines)])


def periodic_sinc(width_hz: float, grid: Waveform) -> Waveform:
    """``width * sinc(width * t)`` periodized over the grid window.

    Its DFT is exactly the rectangle of :func:`~sincmux.waveform.band_mask`,
    half-weight edges included.
    """
    df = grid.sample_rate / len(grid)
    freqs = np.fft.fftfreq(len(grid), grid.dt)
    spec = band_mask(freqs, width_hz, 0.0, df) * np.exp(2j * np.pi * freqs * grid.t0)
    return grid.with_samples(grid.sample_rate * np.fft.ifft(spec))


def multiplication_theorem_residual(spec: SincSequenceSpec, grid: Waveform) -> float:
    """Max of ``|sq(t) * (1/N) sinc(B t / N) - (1/N) sinc(B t)|`` over the grid.

    Both kernels are periodized on the window (circular convolution) and the
    identity is evaluated in units of ``B`` so the residual is dimensionless.
    """
    if spec.shift_index:
        raise ConfigurationError("the multiplication theorem is stated for the unshifted sequence")
    sq = synth_sq(spec, grid).samples
    narrow = periodic_sinc(spec.line_spacing, grid).samples / spec.bandwidth
    wide = periodic_sinc(spec.bandwidth, grid).samples / spec.bandwidth
    return float(np.max(np.abs(sq * narrow - wide / spec.n_lines)))
