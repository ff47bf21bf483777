"""Link quality measurements: EVM, BER, eye diagrams, power spectra and SINAD."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, RejectedInputError
from .waveform import Waveform


def align_gain(received, reference) -> complex:
    """Least-squares complex gain ``g`` with ``received ~ g * reference``."""
    r = np.asarray(received, dtype=np.complex128)
    a = np.asarray(reference, dtype=np.complex128)
    den = np.vdot(a, a).real
    if den == 0:
        return 1.0 + 0j
    return complex(np.vdot(a, r) / den)


def align_phase(received, reference) -> np.ndarray:
    """Rotate ``received`` by the single phase that maximizes its correlation with ``reference``."""
    r = np.asarray(received, dtype=np.complex128)
    phi = np.angle(np.vdot(np.asarray(reference, dtype=np.complex128), r))
    return r * np.exp(-1j * phi)


def evm(
    received,
    reference,
    normalization: str = "avg",
    *,
    transmitted=None,
    phase_align: bool = False,
) -> float:
    """RMS error vector magnitude in percent.

    ``reference`` is the ideal constellation.  Errors are taken against the
    ``transmitted`` symbols when given, otherwise against the nearest
    constellation point.  ``avg`` normalizes by the constellation's RMS
    amplitude, ``peak`` by its largest amplitude.
    """
    r = np.atleast_1d(np.asarray(received, dtype=np.complex128))
    c = np.atleast_1d(np.asarray(reference, dtype=np.complex128))
    if r.size == 0:
        raise RejectedInputError("EVM needs at least one received symbol")
    if c.size == 0:
        raise RejectedInputError("EVM needs a non-empty reference constellation")
    if transmitted is not None:
        ideal = np.asarray(transmitted, dtype=np.complex128)
        if ideal.shape != r.shape:
            raise RejectedInputError("transmitted and received symbol counts differ")
        if phase_align:
            r = align_phase(r, ideal)
    else:
        if phase_align:
            # decision-directed: align against the nearest points of the unrotated symbols
            r = align_phase(r, c[np.argmin(np.abs(r[:, None] - c[None, :]), axis=1)])
        ideal = c[np.argmin(np.abs(r[:, None] - c[None, :]), axis=1)]
    if normalization == "avg":
        norm = np.sqrt(np.mean(np.abs(c) ** 2))
    elif normalization == "peak":
        norm = np.max(np.abs(c))
    else:
        raise ConfigurationError(f"unknown EVM normalization {normalization!r}")
    return float(100 * np.sqrt(np.mean(np.abs(r - ideal) ** 2)) / norm)


class BerResult(NamedTuple):
    ratio: float
    errors: int
    count: int


def ber(tx_bits, rx_bits) -> BerResult:
    a = np.asarray(tx_bits, dtype=np.uint8)
    b = np.asarray(rx_bits, dtype=np.uint8)
    if a.shape != b.shape:
        raise RejectedInputError(f"bit streams differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        return BerResult(0.0, 0, 0)
    errors = int(np.count_nonzero(a != b))
    return BerResult(errors / a.size, errors, int(a.size))


# -- eye diagram -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EyeDiagram:
    counts: np.ndarray  # shape (t_bins, a_bins)
    time_edges: np.ndarray  # seconds within the two-symbol window
    amplitude_edges: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def opening(self, time_bin: Optional[int] = None) -> float:
        """Largest empty amplitude gap between occupied bins in one time column."""
        col = self.counts[self.counts.shape[0] // 2 if time_bin is None else time_bin]
        occupied = np.flatnonzero(col)
        if occupied.size < 2:
            return 0.0
        gap = int(np.max(np.diff(occupied))) - 1
        height = self.amplitude_edges[1] - self.amplitude_edges[0]
        return float(gap * height)

    def to_pgm(self) -> bytes:
        """Binary greymap, time across, amplitude upward, log-scaled intensity."""
        img = np.log1p(self.counts.T[::-1].astype(np.float64))
        if img.max() > 0:
            img = img / img.max()
        raster = np.round(255 * img).astype(np.uint8)
        h, w = raster.shape
        return f"P5\n{w} {h}\n255\n".encode("ascii") + raster.tobytes()


def eye_histogram(
    w: Waveform,
    symbol_period: float,
    bins: tuple[int, int] = (64, 64),
    *,
    component: str = "real",
    t_center: float = 0.0,
    amplitude_range: Optional[tuple[float, float]] = None,
) -> EyeDiagram:
    """Fold the waveform over two symbol periods into a 2-D count histogram.

    ``t_center`` is a symbol instant; it lands in the middle of the window.
    """
    sps_f = symbol_period * w.sample_rate
    sps_i = int(round(sps_f))
    if sps_i < 1 or abs(sps_f - sps_i) > 1e-9 * sps_f:
        raise ConfigurationError("symbol period must be a whole number of samples")
    if component == "real":
        y = w.samples.real
    elif component == "imag":
        y = w.samples.imag
    elif component == "power":
        y = np.abs(w.samples) ** 2
    else:
        raise ConfigurationError(f"unknown eye component {component!r}")
    span = 2 * sps_i
    n = np.arange(len(w))
    pos = np.mod(n - (w.index_of(t_center) - sps_i), span)
    t_bins, a_bins = bins
    if amplitude_range is None:
        lo, hi = float(y.min()), float(y.max())
        pad = 0.05 * (hi - lo) if hi > lo else 0.5
        amplitude_range = (lo - pad, hi + pad)
    counts, t_edges, a_edges = np.histogram2d(
        pos, y, bins=(t_bins, a_bins), range=((0, span), amplitude_range)
    )
    return EyeDiagram(counts.astype(np.int64), t_edges / w.sample_rate, a_edges)


# -- spectra -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    frequencies: np.ndarray
    density: np.ndarray  # power per Hz, integrates to the mean signal power
    db: np.ndarray  # relative to the peak

    @property
    def resolution(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def integrated_power(self) -> float:
        return float(self.density.sum() * self.resolution)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["freq_hz", "db"])
        for f, d in zip(self.frequencies, self.db):
            writer.writerow([repr(float(f)), repr(float(d))])
        return buf.getvalue()


def psd(w: Waveform, rbw: float) -> PowerSpectrum:
    """Welch-averaged periodogram (Hann, 50% overlap) at resolution ``rbw``."""
    bin_spacing = w.sample_rate / len(w)
    if rbw < bin_spacing * (1 - 1e-12):
        raise ConfigurationError(f"rbw {rbw} Hz is finer than the {bin_spacing} Hz bin spacing")
    nperseg = min(len(w), int(round(w.sample_rate / rbw)))
    f, p = sps.welch(
        w.samples, fs=w.sample_rate, window="hann", nperseg=nperseg,
        return_onesided=False, detrend=False, scaling="density",
    )
    f, p = np.fft.fftshift(f), np.fft.fftshift(p)
    peak = p.max()
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(np.maximum(p, peak * 1e-30) / peak) if peak > 0 else np.full_like(p, -300.0)
    return PowerSpectrum(f, p, db)


def sinad(w: Waveform, tone_hz: float, band_hz: Optional[float] = None) -> float:
    """Tone power over all other power within ``|f| <= band_hz / 2``, in dB.

    Both ``+tone_hz`` and ``-tone_hz`` count as the tone, so real and complex
    sinusoids are handled alike.
    """
    n = len(w)
    df = w.sample_rate / n
    k = tone_hz / df
    if abs(k - round(k)) > 1e-6:
        raise ConfigurationError(f"tone {tone_hz} Hz is not on the frequency grid")
    spec = np.abs(np.fft.fft(w.samples)) ** 2
    freqs = np.fft.fftfreq(n, w.dt)
    tone_idx = {int(round(k)) % n, (-int(round(k))) % n}
    in_band = np.ones(n, dtype=bool) if band_hz is None else np.abs(freqs) <= 0.5 * band_hz + 1e-9 * df
    is_tone = np.zeros(n, dtype=bool)
    is_tone[list(tone_idx)] = True
    p_tone = spec[is_tone].sum()
    p_rest = spec[in_band & ~is_tone].sum()
    if p_tone == 0:
        return float("-inf")
    # 300 dB ceiling for a numerically clean tone
    return float(10 * np.log10(p_tone / max(p_rest, p_tone * 1e-30)))


# -- report ------------------------------------------------------------------

@dataclass
class MetricsReport:
    channel: int
    kind: str
    evm_percent: Optional[float] = None
    evm_normalization: str = "avg"
    ber: Optional[float] = None
    bit_errors: int = 0
    bits_counted: int = 0
    sinad_db: Optional[float] = None
    reconstruction_error: Optional[float] = None
    eye: Optional[EyeDiagram] = field(default=None, repr=False)
    spectrum: Optional[PowerSpectrum] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "kind": self.kind,
            "evm_percent": self.evm_percent,
            "evm_normalization": self.evm_normalization,
            "ber": self.ber,
            "bit_errors": self.bit_errors,
            "bits_counted": self.bits_counted,
            "sinad_db": self.sinad_db,
            "reconstruction_error": self.reconstruction_error,
        }
