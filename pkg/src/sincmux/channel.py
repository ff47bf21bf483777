"""Linear fiber link: chromatic dispersion, loss, VOA and optical amplification.

Fiber defaults (D = 17 ps/(nm km), 0.2 dB/km) are assumed standard-SMF values,
not measured ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .waveform import Waveform, add_awgn, apply_spectral_response, brickwall_filter

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_WAVELENGTH_NM = 1550.116


@dataclass(frozen=True)
class FiberSpec:
    length_km: float = 0.0
    dispersion_ps_nm_km: float = 17.0
    attenuation_db_km: float = 0.2
    center_wavelength_nm: float = DEFAULT_WAVELENGTH_NM

    def __post_init__(self):
        if self.length_km < 0:
            raise ConfigurationError("fiber length must be non-negative")
        if self.attenuation_db_km < 0:
            raise ConfigurationError("fiber attenuation must be non-negative")

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in s^2/m."""
        lam = self.center_wavelength_nm * 1e-9
        d = self.dispersion_ps_nm_km * 1e-6  # ps/(nm km) -> s/m^2
        return -d * lam**2 / (2 * np.pi * SPEED_OF_LIGHT)

    @property
    def loss_db(self) -> float:
        return self.attenuation_db_km * self.length_km


@dataclass(frozen=True)
class VoaSpec:
    attenuation_db: float = 0.0
    insertion_loss_db: float = 4.0

    def __post_init__(self):
        if self.attenuation_db < 0 or self.insertion_loss_db < 0:
            raise ConfigurationError("VOA losses must be non-negative")


@dataclass(frozen=True)
class AmpSpec:
    gain_db: float = 0.0
    noise_power: float = 0.0
    filter_width_hz: Optional[float] = None

    def __post_init__(self):
        if self.noise_power < 0:
            raise ConfigurationError("amplifier noise power must be non-negative")


def dispersion_response(fiber: FiberSpec, n: int, sample_rate: float) -> np.ndarray:
    """Field transfer function in FFT order."""
    w = 2 * np.pi * np.fft.fftfreq(n, 1.0 / sample_rate)
    length_m = fiber.length_km * 1e3
    loss = 10 ** (-fiber.loss_db / 20)
    return loss * np.exp(-1j * (fiber.beta2 / 2) * w**2 * length_m)


def propagate_fiber(w: Waveform, fiber: FiberSpec) -> Waveform:
    if fiber.length_km == 0:
        return w
    if fiber.dispersion_ps_nm_km == 0:
        return w.with_samples(w.samples * 10 ** (-fiber.loss_db / 20))
    return apply_spectral_response(w, dispersion_response(fiber, len(w), w.sample_rate))


def apply_voa(w: Waveform, voa: VoaSpec) -> Waveform:
    total = voa.attenuation_db + voa.insertion_loss_db
    if total == 0:
        return w
    return w.with_samples(w.samples * 10 ** (-total / 20))


def amplify(w: Waveform, amp: AmpSpec, seed: int, label: str = "amplifier") -> Waveform:
    """Gain, then ASE-equivalent white noise, then the optional band-pass filter."""
    out = w if amp.gain_db == 0 else w.with_samples(w.samples * 10 ** (amp.gain_db / 20))
    out = add_awgn(out, amp.noise_power, seed, label)
    if amp.filter_width_hz is not None and amp.filter_width_hz < out.sample_rate:
        out = brickwall_filter(out, amp.filter_width_hz)
    return out


def normalize_power(w: Waveform, target_power: float) -> Waveform:
    """Scale the field to mean power ``target_power``."""
    p = w.power
    if p == 0:
        return w
    return w.with_samples(w.samples * np.sqrt(target_power / p))
