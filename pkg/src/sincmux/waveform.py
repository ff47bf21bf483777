"""Sampled complex baseband signals and the spectral toolbox built around them.

Every stage of the link exchanges :class:`Waveform` objects.  Signals live on
a uniform grid that is treated as one period of a periodic signal, so all
filtering is circular and exact on the grid.
"""

from __future__ import annotations

import csv
import io
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AliasingError, ConfigurationError, RejectedInputError

_HEADER = struct.Struct("<ddQ")
_EDGE_TOL = 1e-9
_MAX_KERNEL_ELEMENTS = 1 << 22


def rng_for(seed: int, label: str = "") -> np.random.Generator:
    """Independent, reproducible random stream for ``(seed, label)``."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled complex signal.

    ``samples[n]`` is the field value at ``t0 + n / sample_rate``.
    """

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.complex128)
        if x.ndim != 1 or x.size < 1:
            raise RejectedInputError("waveform needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(x)):
            raise RejectedInputError("waveform contains non-finite samples")
        if not (np.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise RejectedInputError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    @property
    def power(self) -> float:
        """Mean of ``|samples|**2``."""
        return float(np.mean(np.abs(self.samples) ** 2))

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def with_samples(self, samples) -> "Waveform":
        """New waveform on the same grid."""
        samples = np.asarray(samples)
        if samples.shape != self.samples.shape:
            raise ConfigurationError("replacement samples must keep the grid length")
        return Waveform(samples, self.sample_rate, self.t0)

    def zeros_like(self) -> "Waveform":
        return Waveform(np.zeros_like(self.samples), self.sample_rate, self.t0)

    def same_grid(self, other: "Waveform") -> bool:
        return (
            len(self) == len(other)
            and np.isclose(self.sample_rate, other.sample_rate, rtol=1e-12, atol=0)
            and abs(self.t0 - other.t0) <= 1e-6 * self.dt
        )

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        pos = (t - self.t0) * self.sample_rate
        idx = int(round(pos))
        if abs(pos - idx) > 1e-6:
            raise ConfigurationError(f"t={t!r} is not on the sample grid")
        return idx % len(self)

    # -- serialization -------------------------------------------------

    def to_bytes(self) -> bytes:
        body = np.empty(2 * len(self), dtype="<f8")
        body[0::2] = self.samples.real
        body[1::2] = self.samples.imag
        return _HEADER.pack(self.sample_rate, self.t0, len(self)) + body.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Waveform":
        if len(blob) < _HEADER.size:
            raise RejectedInputError("truncated waveform header")
        rate, t0, n = _HEADER.unpack_from(blob)
        body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if body.size != 2 * n:
            raise RejectedInputError(f"header declares {n} samples, body holds {body.size // 2}")
        return cls(body[0::2] + 1j * body[1::2], rate, t0)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Waveform":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "re", "im"])
        for t, v in zip(self.times, self.samples):
            writer.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class SpectrumView:
    """Unitary DFT of a waveform, ordered from negative to positive frequency."""

    bins: np.ndarray
    bin_spacing: float
    t0: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.complex128)
        if b.ndim != 1 or b.size < 1:
            raise RejectedInputError("spectrum needs a non-empty 1-D bin array")
        if not np.all(np.isfinite(b)):
            raise RejectedInputError("spectrum contains non-finite bins")
        if not self.bin_spacing > 0:
            raise RejectedInputError("bin_spacing must be positive")
        object.__setattr__(self, "bins", b)

    def __len__(self) -> int:
        return self.bins.size

    @property
    def sample_rate(self) -> float:
        return self.bin_spacing * self.bins.size

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.fftshift(np.fft.fftfreq(self.bins.size, 1.0 / self.sample_rate))

    @property
    def coefficients(self) -> np.ndarray:
        """Fourier-series amplitudes: a tone ``A exp(i 2 pi f t)`` gives ``A`` at ``f``."""
        return self.bins / np.sqrt(self.bins.size)

    def bin_index(self, freq: float) -> int:
        """Position of ``freq`` in :attr:`bins`; raises if it is not a grid frequency."""
        k = freq / self.bin_spacing
        kr = int(round(k))
        if abs(k - kr) > 1e-6:
            raise ConfigurationError(f"{freq!r} Hz is not on the frequency grid")
        n = self.bins.size
        return (kr % n + n // 2) % n


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise RejectedInputError("non-finite sample")


def dft(w: Waveform) -> SpectrumView:
    """Unitary DFT, so ``sum |samples|^2 == sum |bins|^2``."""
    _check_finite(w.samples)
    bins = np.fft.fftshift(np.fft.fft(w.samples, norm="ortho"))
    return SpectrumView(bins, w.sample_rate / len(w), w.t0)


def idft(s: SpectrumView) -> Waveform:
    _check_finite(s.bins)
    x = np.fft.ifft(np.fft.ifftshift(s.bins), norm="ortho")
    return Waveform(x, s.sample_rate, s.t0)


def band_mask(freqs: np.ndarray, width_hz: float, center_hz: float, bin_spacing: float) -> np.ndarray:
    """Rectangular response: 1 inside, 1/2 exactly on an edge, 0 outside."""
    offset = np.abs(freqs - center_hz) / bin_spacing
    half = 0.5 * width_hz / bin_spacing
    tol = _EDGE_TOL * max(1.0, half)
    mask = np.where(offset < half - tol, 1.0, 0.0)
    mask[np.abs(offset - half) <= tol] = 0.5
    return mask


def brickwall_filter(w: Waveform, width_hz: float, center_hz: float = 0.0) -> Waveform:
    """Ideal rectangular filter of total width ``width_hz`` around ``center_hz``.

    A bin landing exactly on the band edge is passed with weight 1/2.
    """
    nyq = 0.5 * w.sample_rate
    if not width_hz > 0:
        raise ConfigurationError(f"filter width must be positive, got {width_hz}")
    if 0.5 * width_hz + abs(center_hz) > nyq * (1 + 1e-12):
        raise ConfigurationError(
            f"band {center_hz} +/- {0.5 * width_hz} Hz exceeds the representable +/- {nyq} Hz"
        )
    freqs = np.fft.fftfreq(len(w), w.dt)
    mask = band_mask(freqs, width_hz, center_hz, w.sample_rate / len(w))
    return w.with_samples(np.fft.ifft(np.fft.fft(w.samples) * mask))


def apply_spectral_response(w: Waveform, response: np.ndarray) -> Waveform:
    """Multiply the spectrum by ``response`` given in unshifted FFT order."""
    return w.with_samples(np.fft.ifft(np.fft.fft(w.samples) * response))


def add_awgn(w: Waveform, noise_power: float, seed: int, label: str = "awgn") -> Waveform:
    """Add circularly-symmetric complex Gaussian noise of per-sample variance ``noise_power``."""
    if noise_power < 0:
        raise ConfigurationError(f"noise power must be non-negative, got {noise_power}")
    if noise_power == 0:
        return w
    rng = rng_for(seed, label)
    sigma = np.sqrt(noise_power / 2.0)
    noise = sigma * (rng.standard_normal(len(w)) + 1j * rng.standard_normal(len(w)))
    return w.with_samples(w.samples + noise)


def random_bandlimited(
    bandwidth_hz: float,
    duration_s: float,
    sample_rate: float,
    seed: int,
    *,
    real: bool = False,
    power: float = 1.0,
    t0: float = 0.0,
    label: str = "bandlimited",
) -> Waveform:
    """Periodic Gaussian test signal confined to ``|f| <= bandwidth_hz/2 - bin_spacing``.

    ``bandwidth_hz`` is the two-sided width, matching :func:`brickwall_filter`.
    The guard bin keeps the band edge empty.  The result has mean power ``power``.
    """
    if bandwidth_hz >= sample_rate:
        raise AliasingError(f"bandwidth {bandwidth_hz} Hz needs a sample rate above it, got {sample_rate}")
    if bandwidth_hz < 0:
        raise ConfigurationError("bandwidth must be non-negative")
    n_float = duration_s * sample_rate
    n = int(round(n_float))
    if n < 1 or abs(n_float - n) > 1e-6 * max(1.0, n_float):
        raise ConfigurationError("duration must hold a whole number of samples")
    df = sample_rate / n
    freqs = np.fft.fftfreq(n, 1.0 / sample_rate)
    limit = max(0.5 * bandwidth_hz - df, 0.0)
    keep = np.abs(freqs) <= limit * (1 + 1e-12) + 1e-9 * df
    rng = rng_for(seed, label)
    spec = np.zeros(n, dtype=np.complex128)
    k = int(np.count_nonzero(keep))
    spec[keep] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    x = np.fft.ifft(spec)
    if real:
        x = x.real.astype(np.complex128)
    p = np.mean(np.abs(x) ** 2)
    x = x * np.sqrt(power / p)
    return Waveform(x, sample_rate, t0)


def _dirichlet(x: np.ndarray, k: int) -> np.ndarray:
    """Periodic sinc with ``k`` samples per period, ``x`` in sample units."""
    xr = np.mod(x + 0.5 * k, k) - 0.5 * k
    den_arg = np.pi * xr / k
    small = np.abs(den_arg) < 1e-12
    safe = np.where(small, 1.0, den_arg)
    if k % 2:
        out = np.sin(np.pi * xr) / (k * np.sin(safe))
    else:
        out = np.sin(np.pi * xr) / (k * np.tan(safe))
    return np.where(small, 1.0, out)


def sinc_reconstruct(
    times,
    values,
    rate_hz: float,
    grid: Waveform,
    *,
    periodic: bool = True,
) -> Waveform:
    """Interpolate uniform samples with sinc pulses onto ``grid``.

    With ``periodic=True`` the samples must cover exactly one grid period and
    the kernel is the periodic sinc, which makes the reconstruction exact for
    periodic signals band-limited below ``rate_hz / 2``.  Otherwise the sum of
    ordinary sinc pulses is truncated to the samples given.
    """
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.complex128)
    if t.shape != v.shape or t.ndim != 1 or t.size < 1:
        raise RejectedInputError("times and values must be equal-length 1-D sequences")
    spacing = 1.0 / rate_hz
    if t.size > 1 and np.max(np.abs(np.diff(t) - spacing)) > 1e-6 * spacing:
        raise RejectedInputError("sample times are not uniformly spaced at 1/rate_hz")
    k = t.size
    if periodic and abs(k * spacing - grid.duration) > 1e-9 * grid.duration:
        raise ConfigurationError(
            f"{k} samples at {rate_hz} Hz do not span the grid period {grid.duration} s"
        )
    tg = grid.times
    out = np.empty(len(grid), dtype=np.complex128)
    step = max(1, _MAX_KERNEL_ELEMENTS // k)
    for start in range(0, tg.size, step):
        x = (tg[start:start + step, None] - t[None, :]) * rate_hz
        kern = _dirichlet(x, k) if periodic else np.sinc(x)
        out[start:start + step] = kern @ v
    return grid.with_samples(out)
