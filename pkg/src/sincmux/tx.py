"""Transmitter: test patterns, payload shaping, the electrical mixing network,
modulator models and the time-interleaving multiplexer."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .comb import SincSequenceSpec, check_grid, synth_sq
from .errors import CalibrationError, ConfigurationError, NyquistViolationError, RejectedInputError
from .waveform import Waveform, brickwall_filter

# spectral energy fraction tolerated beyond the per-channel limit
NYQUIST_LEAKAGE_TOL = 1e-20


# -- PRBS ------------------------------------------------------------------

@dataclass(frozen=True)
class PrbsSpec:
    order: int = 7
    seed: int = 0x7F

    def __post_init__(self):
        if self.order != 7:
            raise ConfigurationError("only PRBS-7 (x^7 + x^6 + 1) is supported")
        if not 0 < self.seed < 2**self.order:
            raise ConfigurationError(f"PRBS seed must be a nonzero {self.order}-bit state, got {self.seed}")


def prbs7(spec: PrbsSpec, n_bits: int, offset: int = 0) -> np.ndarray:
    """PRBS-7 bits from a Fibonacci LFSR with taps at stages 7 and 6.

    ``offset`` skips that many bits, so consecutive frames can continue one stream.
    """
    state = spec.seed
    period = np.empty(127, dtype=np.uint8)
    for i in range(127):
        bit = ((state >> 6) ^ (state >> 5)) & 1
        period[i] = bit
        state = ((state << 1) | bit) & 0x7F
    idx = (offset + np.arange(n_bits)) % 127
    return period[idx]


# -- payloads --------------------------------------------------------------

class PayloadKind(str, enum.Enum):
    OOK = "ook"
    BPSK = "bpsk"
    FOUR_LEVEL = "4level"
    ANALOG = "analog"

    @property
    def bits_per_symbol(self) -> int:
        return {"ook": 1, "bpsk": 1, "4level": 2, "analog": 0}[self.value]

    @property
    def levels(self) -> np.ndarray:
        return {
            "ook": np.array([0.0, 1.0]),
            "bpsk": np.array([-1.0, 1.0]),
            "4level": np.array([-1.0, -1 / 3, 1 / 3, 1.0]),
            "analog": np.array([]),
        }[self.value]


# Gray order for the two-amplitude BPSK levels -1, -1/3, +1/3, +1
_GRAY_4 = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)


def map_bits(kind: PayloadKind, bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    kind = PayloadKind(kind)
    if kind is PayloadKind.OOK:
        return bits.astype(np.float64)
    if kind is PayloadKind.BPSK:
        return 2.0 * bits - 1.0
    if kind is PayloadKind.FOUR_LEVEL:
        if bits.size % 2:
            raise RejectedInputError("four-level mapping needs an even number of bits")
        pairs = bits.reshape(-1, 2)
        sign = 2.0 * pairs[:, 0] - 1.0
        return sign * np.where(pairs[:, 1] == 1, 1 / 3, 1.0)
    raise ConfigurationError(f"{kind.value} payloads carry no bits")


def level_indices_to_bits(kind: PayloadKind, idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    kind = PayloadKind(kind)
    if kind in (PayloadKind.OOK, PayloadKind.BPSK):
        return idx.astype(np.uint8)
    if kind is PayloadKind.FOUR_LEVEL:
        return _GRAY_4[idx].reshape(-1)
    raise ConfigurationError(f"{kind.value} payloads carry no bits")


@dataclass(eq=False)
class ChannelPayload:
    """One channel's source: a symbol stream or an analog waveform."""

    kind: PayloadKind
    symbol_rate: float = 0.0
    symbols: np.ndarray = field(default_factory=lambda: np.zeros(0))
    analog_waveform: Optional[Waveform] = None
    baseband_limit: Optional[float] = None
    shaping: str = "sinc"
    bits: Optional[np.ndarray] = None

    def __post_init__(self):
        self.kind = PayloadKind(self.kind)
        self.symbols = np.asarray(self.symbols, dtype=np.float64)
        if self.shaping not in ("sinc", "nrz"):
            raise ConfigurationError(f"unknown pulse shaping {self.shaping!r}")
        if self.kind is PayloadKind.ANALOG:
            if self.analog_waveform is None:
                raise ConfigurationError("analog payload needs a waveform")
            return
        if not self.symbol_rate > 0:
            raise ConfigurationError("digital payload needs a positive symbol rate")
        allowed = self.kind.levels
        if self.symbols.size and not np.all(np.min(np.abs(self.symbols[:, None] - allowed), axis=1) < 1e-12):
            raise RejectedInputError(f"{self.kind.value} symbols must be drawn from {allowed.tolist()}")

    @classmethod
    def from_bits(cls, kind, bits, symbol_rate: float, **kw) -> "ChannelPayload":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(PayloadKind(kind), symbol_rate, map_bits(kind, bits), bits=bits, **kw)

    @classmethod
    def tone(cls, freq_hz: float, grid: Waveform, amplitude: float = 1.0, phase: float = 0.0, **kw):
        """Real sinusoid on ``grid``."""
        x = amplitude * np.cos(2 * np.pi * freq_hz * grid.times + phase)
        return cls(PayloadKind.ANALOG, analog_waveform=grid.with_samples(x), **kw)


def _resample(w: Waveform, grid: Waveform) -> Waveform:
    if w.same_grid(grid):
        return w
    if abs(w.duration - grid.duration) > 1e-9 * grid.duration or abs(w.t0 - grid.t0) > 1e-6 * grid.dt:
        raise ConfigurationError("analog payload must span the same window as the grid")
    # Fourier resampling of a periodic signal
    src = np.fft.fftshift(np.fft.fft(w.samples)) / len(w)
    n_src, n_dst = len(w), len(grid)
    dst = np.zeros(n_dst, dtype=np.complex128)
    keep = min(n_src, n_dst)
    s0, d0 = n_src // 2 - keep // 2, n_dst // 2 - keep // 2
    dst[d0:d0 + keep] = src[s0:s0 + keep]
    return grid.with_samples(np.fft.ifft(np.fft.ifftshift(dst)) * n_dst)


def out_of_band_fraction(w: Waveform, baseband_limit: float) -> float:
    """Energy fraction at ``|f| >= baseband_limit``, band edge included."""
    spec = np.abs(np.fft.fft(w.samples)) ** 2
    total = spec.sum()
    if total == 0:
        return 0.0
    freqs = np.abs(np.fft.fftfreq(len(w), w.dt))
    df = w.sample_rate / len(w)
    return float(spec[freqs >= baseband_limit - 1e-9 * df].sum() / total)


def shape_payload(
    payload: ChannelPayload,
    grid: Waveform,
    *,
    t_first: float = 0.0,
    baseband_limit: Optional[float] = None,
    strict: bool = True,
) -> Waveform:
    """Turn a payload into a waveform on ``grid``.

    Digital symbols sit at ``t_first + j / symbol_rate``.  ``sinc`` shaping is
    an ideal brick-wall at the symbol rate (zero ISI at the symbol instants);
    ``nrz`` holds each level for one symbol period.  If energy reaches the
    per-channel limit a :class:`NyquistViolationError` is raised, or only a
    warning when ``strict`` is false.
    """
    limit = baseband_limit if baseband_limit is not None else payload.baseband_limit
    if payload.kind is PayloadKind.ANALOG:
        out = _resample(payload.analog_waveform, grid)
    else:
        sps_f = grid.sample_rate / payload.symbol_rate
        sps = int(round(sps_f))
        if abs(sps_f - sps) > 1e-9 * sps_f:
            raise ConfigurationError("symbol period must be a whole number of samples")
        n_sym = len(grid) // sps
        if n_sym * sps != len(grid):
            raise ConfigurationError("grid must hold a whole number of symbols")
        if payload.symbols.size != n_sym:
            raise ConfigurationError(f"grid holds {n_sym} symbols, payload has {payload.symbols.size}")
        first = grid.index_of(t_first)
        x = np.zeros(len(grid), dtype=np.complex128)
        if payload.shaping == "sinc":
            x[(first + sps * np.arange(n_sym)) % len(grid)] = payload.symbols * sps
            out = brickwall_filter(grid.with_samples(x), payload.symbol_rate)
        else:
            held = np.repeat(payload.symbols, sps)
            out = grid.with_samples(np.roll(held, first - sps // 2))
    if limit is not None:
        frac = out_of_band_fraction(out, limit)
        if frac > NYQUIST_LEAKAGE_TOL:
            msg = f"{frac:.3g} of the payload energy lies at or beyond {limit} Hz"
            if strict:
                raise NyquistViolationError(msg)
            warnings.warn(msg, stacklevel=2)
    return out


# -- transmitter plan and electrical network ---------------------------------

class Architecture(str, enum.Enum):
    SINGLE = "single"
    CASCADED = "cascaded"


@dataclass(frozen=True)
class TxPlan:
    n_channels: int
    line_spacing: float
    architecture: Architecture = Architecture.SINGLE

    def __post_init__(self):
        SincSequenceSpec(self.n_channels, self.n_channels * self.line_spacing)
        object.__setattr__(self, "architecture", Architecture(self.architecture))

    @property
    def bandwidth(self) -> float:
        return self.n_channels * self.line_spacing

    @property
    def n_tones(self) -> int:
        return (self.n_channels - 1) // 2

    @property
    def rf_tones(self) -> np.ndarray:
        return self.line_spacing * np.arange(1, self.n_tones + 1)

    @property
    def phase_shifts(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_channels) / self.n_channels

    @property
    def baseband_limit(self) -> float:
        return self.bandwidth / (2 * self.n_channels)

    def spec(self, shift_index: int = 0) -> SincSequenceSpec:
        return SincSequenceSpec(self.n_channels, self.bandwidth, shift_index)


def _channel_waveforms(payloads, plan: TxPlan, grid: Waveform, strict: bool) -> list[Waveform]:
    out = []
    for l, p in enumerate(payloads):
        if isinstance(p, Waveform):
            out.append(p)
        else:
            out.append(shape_payload(
                p, grid, t_first=grid.t0 + l * plan.spec().delta_t,
                baseband_limit=plan.baseband_limit, strict=strict,
            ))
    return out


def build_drive_signal(payloads: Sequence, plan: TxPlan, grid: Waveform, *, strict: bool = True) -> Waveform:
    """Electrical drive: each channel mixed with ``n`` phase-shifted RF tones plus DC, then summed.

    Channel ``l`` gets ``1 + 2*sum_k cos(2 pi k df t - k*phi_l)``, i.e. ``N``
    times its shifted sinc-pulse sequence.  ``payloads`` may be
    :class:`ChannelPayload` objects or already shaped waveforms.
    """
    if plan.architecture is not Architecture.SINGLE:
        raise ConfigurationError("the electrical mixing network feeds a single modulator")
    if len(payloads) != plan.n_channels:
        raise ConfigurationError(f"expected {plan.n_channels} payloads, got {len(payloads)}")
    check_grid(plan.spec(), grid)
    waves = _channel_waveforms(payloads, plan, grid, strict)
    t = grid.times - grid.t0
    drive = np.zeros(len(grid), dtype=np.complex128)
    for l, (w, phi) in enumerate(zip(waves, plan.phase_shifts)):
        if not w.same_grid(grid):
            raise ConfigurationError(f"channel {l} waveform is not on the drive grid")
        mix = np.ones(len(grid))
        for k, f in enumerate(plan.rf_tones, start=1):
            mix += 2 * np.cos(2 * np.pi * f * t - k * phi)
        drive += w.samples * mix
    return grid.with_samples(drive)


# -- modulator -------------------------------------------------------------

class MzmMode(str, enum.Enum):
    IDEAL = "ideal"
    PHYSICAL = "physical"


@dataclass(frozen=True)
class MzmModel:
    """Mach-Zehnder modulator.

    ``ideal``: field = sqrt(P) * drive_scale * (drive + bias), an exact multiplier.
    ``physical``: field = sqrt(P) * cos(pi * (drive * drive_scale + bias) / (2 v_pi)).
    """

    v_pi: float = 1.0
    bias: float = 0.0
    drive_scale: float = 1.0
    mode: MzmMode = MzmMode.IDEAL

    def __post_init__(self):
        if not self.v_pi > 0:
            raise ConfigurationError("v_pi must be positive")
        object.__setattr__(self, "mode", MzmMode(self.mode))

    @classmethod
    def ideal(cls, n_lines: int) -> "MzmModel":
        """Multiplier that maps a unit payload's drive back to a unit-peak sequence."""
        return cls(bias=0.0, drive_scale=1.0 / n_lines, mode=MzmMode.IDEAL)

    @classmethod
    def null_biased(cls, drive_scale: float, v_pi: float = 1.0) -> "MzmModel":
        """Physical MZM at the transmission null, linear in field for small drive."""
        return cls(v_pi=v_pi, bias=v_pi, drive_scale=drive_scale, mode=MzmMode.PHYSICAL)


def modulate(carrier_power: float, drive: Waveform, model: MzmModel) -> Waveform:
    amp = np.sqrt(carrier_power)
    x = drive.samples
    if model.mode is MzmMode.IDEAL:
        return drive.with_samples(amp * model.drive_scale * (x + model.bias))
    if np.any(np.abs(x.imag) > 1e-12 * max(1.0, np.max(np.abs(x)))):
        raise RejectedInputError("a physical intensity modulator needs a real drive")
    arg = np.pi * (x.real * model.drive_scale + model.bias) / (2 * model.v_pi)
    return drive.with_samples(amp * np.cos(arg))


# -- comb calibration ------------------------------------------------------

_CAL_SAMPLES = 512


def _comb_coefficients(model: MzmModel, n_tones: int, bias: float, scale: float) -> np.ndarray:
    """Fourier-series lines of the modulator output over one RF period, index 0 = DC."""
    theta = 2 * np.pi * np.arange(_CAL_SAMPLES) / _CAL_SAMPLES
    drive = sum(np.cos(k * theta) for k in range(1, n_tones + 1))
    field = np.cos(np.pi * (drive * scale + bias) / (2 * model.v_pi))
    return np.fft.fft(field) / _CAL_SAMPLES


def comb_quality(model: MzmModel, n_tones: int, bias: float, scale: float) -> dict:
    """Line powers (ascending frequency) and figures of merit of a single-modulator comb."""
    c = _comb_coefficients(model, n_tones, bias, scale)
    k = np.fft.fftfreq(_CAL_SAMPLES, 1 / _CAL_SAMPLES).astype(int)
    p = np.abs(c) ** 2
    sel = np.abs(k) <= n_tones
    inband = p[sel][np.argsort(k[sel])]  # ascending frequency
    oob = p[np.abs(k) > n_tones]
    total_in = inband.sum()
    mean_in = inband.mean()
    return {
        "line_powers": inband,
        "variance": float(np.var(inband) / mean_in**2) if mean_in > 0 else np.inf,
        "out_of_band": float(oob.sum() / total_in) if total_in > 0 else np.inf,
        "worst_spur_dbc": float(10 * np.log10(oob.max() / inband.min())) if inband.min() > 0 else np.inf,
        "flatness_db": float(10 * np.log10(inband.max() / inband.min())) if inband.min() > 0 else np.inf,
        "efficiency": float(total_in),
    }


def calibrate_comb(
    model: MzmModel,
    n_tones: int,
    target_lines: Optional[int] = None,
    *,
    min_efficiency: float = 0.05,
    grid_points: int = 64,
) -> tuple[float, float]:
    """Find ``(bias, drive_scale)`` that turn ``n_tones`` equal RF tones into a flat comb.

    Minimizes normalized line-power variance plus relative out-of-band power
    over bias in (0, v_pi) and drive_scale in (0, 2], restricted to operating
    points whose in-band comb power is at least ``min_efficiency`` of the
    carrier.  Coarse grid search, then bounded Nelder-Mead refinement.
    """
    if model.mode is not MzmMode.PHYSICAL:
        raise ConfigurationError("calibration applies to the physical MZM model")
    if target_lines is not None and target_lines != 2 * n_tones + 1:
        raise ConfigurationError(f"{n_tones} tones make {2 * n_tones + 1} lines, not {target_lines}")
    if n_tones == 0:
        return 0.5 * model.v_pi, 0.0

    def cost(x):
        q = comb_quality(model, n_tones, x[0], x[1])
        shortfall = max(0.0, min_efficiency - q["efficiency"]) / min_efficiency
        return q["variance"] + q["out_of_band"] + 10.0 * shortfall

    biases = np.linspace(0, model.v_pi, grid_points + 2)[1:-1]
    scales = np.linspace(0, 2 * model.v_pi, grid_points + 1)[1:]
    costs = np.array([[cost((b, s)) for s in scales] for b in biases])
    i, j = np.unravel_index(np.argmin(costs), costs.shape)
    eps = 1e-9 * model.v_pi
    res = minimize(
        cost, x0=[biases[i], scales[j]], method="Nelder-Mead",
        bounds=[(eps, model.v_pi - eps), (eps, 2 * model.v_pi)],
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
    )
    bias, scale = float(res.x[0]), float(res.x[1])
    if comb_quality(model, n_tones, bias, scale)["flatness_db"] > 1.0:
        raise CalibrationError(f"no operating point gives a comb flat within 1 dB for {n_tones} tones")
    return bias, scale


# -- multiplexer and rate planning -------------------------------------------

def multiplex(payload_waveforms: Sequence[Waveform], specs: Sequence[SincSequenceSpec]) -> Waveform:
    """``s(t) = sum_k s_k(t) * sq(t - k dT)``."""
    if len(payload_waveforms) != len(specs) or not specs:
        raise ConfigurationError("need one sequence spec per payload")
    n, b = specs[0].n_lines, specs[0].bandwidth
    if any(s.n_lines != n or s.bandwidth != b for s in specs):
        raise ConfigurationError("all channels must share the same (N, B)")
    if len(specs) != n or sorted(s.shift_index for s in specs) != list(range(n)):
        raise ConfigurationError("shift indices must be a permutation of 0..N-1")
    grid = payload_waveforms[0]
    out = np.zeros(len(grid), dtype=np.complex128)
    for w, s in zip(payload_waveforms, specs):
        if not w.same_grid(grid):
            raise ConfigurationError("payload waveforms must share one grid")
        out += w.samples * synth_sq(s, grid).samples
    return grid.with_samples(out)


@dataclass(frozen=True)
class SymbolRatePlan:
    per_channel: Fraction
    combined: Fraction
    optical_bandwidth: Fraction


def plan_symbol_rate(architecture, b_m, n: int) -> SymbolRatePlan:
    """Maximum symbol rates for a modulator of RF bandwidth ``b_m``, in exact arithmetic."""
    architecture = Architecture(architecture)
    if int(n) != n or n < 3 or n % 2 == 0:
        raise ConfigurationError(f"N must be an odd integer >= 3, got {n}")
    b_m = Fraction(b_m)
    if b_m <= 0:
        raise ConfigurationError("modulator bandwidth must be positive")
    if architecture is Architecture.SINGLE:
        per = b_m / n
        return SymbolRatePlan(per, per * n, 2 * b_m)
    per = b_m / (n - 1)
    return SymbolRatePlan(per, per * n, Fraction(2 * n, n - 1) * b_m)
