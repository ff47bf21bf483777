"""End-to-end experiments: configuration, presets, frame loop, sweeps and artifacts.

A run is split into frames.  Each frame is one circular simulation window;
PRBS streams continue across frames and noise is drawn per frame from the
run seed, so long bit counts are reached at bounded memory.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import os
import re
import tempfile
import typing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .channel import AmpSpec, FiberSpec, VoaSpec, amplify, apply_voa, normalize_power, propagate_fiber
from .comb import SincSequenceSpec, comb_lines, sequence_grid
from .errors import ConfigurationError
from .metrics import MetricsReport, align_gain, ber, evm, eye_histogram, psd, sinad
from .rx import RxConfig, decide_symbols, demultiplex, extract_samples, receive_channel, reconstruct_channel
from .tx import (
    ChannelPayload,
    MzmModel,
    PayloadKind,
    PrbsSpec,
    TxPlan,
    build_drive_signal,
    modulate,
    prbs7,
    shape_payload,
)

SWEEP_VARIABLES = ("voa_attenuation", "fiber_length", "noise_power", "clock_phase_error")


# -- configuration -------------------------------------------------------------

@dataclass
class PayloadConfig:
    kind: str = "bpsk"
    symbol_rate: float = 4e9
    shaping: str = "sinc"
    prbs_seed: int = 0x7F
    tone_hz: float = 2e9
    amplitude: float = 1.0


@dataclass
class ModulatorConfig:
    mode: str = "ideal"
    v_pi: float = 1.0
    bias: Optional[float] = None  # ideal: 0, physical: v_pi (transmission null)
    drive_scale: Optional[float] = None  # ideal: 1/N, physical: 0.05

    def build(self, n_channels: int) -> MzmModel:
        if self.mode == "ideal":
            return MzmModel(
                v_pi=self.v_pi,
                bias=0.0 if self.bias is None else self.bias,
                drive_scale=1.0 / n_channels if self.drive_scale is None else self.drive_scale,
                mode="ideal",
            )
        if self.mode == "physical":
            return MzmModel(
                v_pi=self.v_pi,
                bias=self.v_pi if self.bias is None else self.bias,
                drive_scale=0.05 if self.drive_scale is None else self.drive_scale,
                mode="physical",
            )
        raise ConfigurationError(f"tx.modulator.mode: unknown mode {self.mode!r}")


@dataclass
class TxConfig:
    n_channels: int = 3
    line_spacing_hz: float = 8e9
    oversampling: int = 16
    window_samples: int = 2**18
    min_bits: int = 0
    max_frames: int = 400
    carrier_power: float = 1.0
    strict_nyquist: bool = True
    modulator: ModulatorConfig = field(default_factory=ModulatorConfig)
    payloads: list[PayloadConfig] = field(default_factory=list)


@dataclass
class ChannelConfig:
    fiber: FiberSpec = field(default_factory=FiberSpec)
    voa: VoaSpec = field(default_factory=VoaSpec)
    amp: AmpSpec = field(default_factory=AmpSpec)
    normalize_power: Optional[float] = None


@dataclass
class RxSettings:
    filter_domain: str = "bandpass"
    lo_phase_error: float = 0.0
    clock_phase_error: float = 0.0
    rescale_by_n: bool = True
    edge_periods: int = 1
    channels: Optional[list[int]] = None

    def for_channel(self, l: int) -> RxConfig:
        return RxConfig(
            target_shift=l,
            filter_domain=self.filter_domain,
            lo_phase_error=self.lo_phase_error,
            clock_phase_error=self.clock_phase_error,
            rescale_by_n=self.rescale_by_n,
            edge_periods=self.edge_periods,
        )


@dataclass
class MetricsConfig:
    evm_normalization: str = "avg"
    eye: bool = True
    eye_bins: list[int] = field(default_factory=lambda: [64, 64])
    psd: bool = True
    rbw_hz: float = 100e6
    save_waveforms: bool = False


@dataclass
class Expectations:
    max_ber: Optional[float] = None
    min_sinad_db: Optional[float] = None
    max_reconstruction_error: Optional[float] = None
    max_evm_percent: Optional[float] = None


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 1
    tx: TxConfig = field(default_factory=TxConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    rx: RxSettings = field(default_factory=RxSettings)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    expect: Expectations = field(default_factory=Expectations)
    output_dir: Optional[str] = None

    def validate(self) -> None:
        n = self.tx.n_channels
        try:
            TxPlan(n, self.tx.line_spacing_hz)
        except ConfigurationError as exc:
            raise ConfigurationError(f"tx: {exc}") from None
        if len(self.tx.payloads) != n:
            raise ConfigurationError(f"tx.payloads: expected {n} entries, got {len(self.tx.payloads)}")
        for i, p in enumerate(self.tx.payloads):
            try:
                PayloadKind(p.kind)
            except ValueError:
                raise ConfigurationError(f"tx.payloads[{i}].kind: unknown kind {p.kind!r}") from None
            if p.shaping not in ("sinc", "nrz"):
                raise ConfigurationError(f"tx.payloads[{i}].shaping: unknown shaping {p.shaping!r}")
        for i, c in enumerate(self.rx.channels or []):
            if not 0 <= c < n:
                raise ConfigurationError(f"rx.channels[{i}]: channel {c} outside 0..{n - 1}")
        if self.rx.filter_domain not in ("bandpass", "lowpass"):
            raise ConfigurationError(f"rx.filter_domain: unknown domain {self.rx.filter_domain!r}")
        if self.metrics.evm_normalization not in ("avg", "peak"):
            raise ConfigurationError(f"metrics.evm_normalization: unknown {self.metrics.evm_normalization!r}")
        if self.tx.oversampling < 2:
            raise ConfigurationError("tx.oversampling: must be at least 2")
        self.tx.modulator.build(n)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = _build(cls, data, "")
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config is not valid YAML: {exc}") from None
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a sign or dot (``8e9``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _build(tp, data, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    where = path or "<root>"
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if data is None:
            return None
        return _build(inner[0], data, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(data, dict):
            raise ConfigurationError(f"{where}: expected a mapping")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"{where}: unknown field(s) {', '.join(unknown)}")
        kwargs = {k: _build(hints[k], v, f"{path}.{k}" if path else k) for k, v in data.items()}
        try:
            return tp(**kwargs)
        except (ConfigurationError, ValueError, TypeError) as exc:
            raise ConfigurationError(f"{where}: {exc}") from None
    if origin is list:
        if not isinstance(data, list):
            raise ConfigurationError(f"{where}: expected a list")
        return [_build(args[0], v, f"{path}[{i}]") for i, v in enumerate(data)]
    if tp is float:
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise ConfigurationError(f"{where}: expected a number, got {data!r}")
        return float(data)
    if tp is int:
        if isinstance(data, bool) or not isinstance(data, int):
            raise ConfigurationError(f"{where}: expected an integer, got {data!r}")
        return data
    if tp is bool:
        if not isinstance(data, bool):
            raise ConfigurationError(f"{where}: expected true/false, got {data!r}")
        return data
    if tp is str:
        if not isinstance(data, str):
            raise ConfigurationError(f"{where}: expected a string, got {data!r}")
        return data
    raise ConfigurationError(f"{where}: unsupported field type {tp}")


# -- presets -------------------------------------------------------------------

def _link_payloads(*kinds: str) -> list[PayloadConfig]:
    seeds = (0x7F, 0x55, 0x2B)
    return [PayloadConfig(kind=k, prbs_seed=seeds[i % 3]) for i, k in enumerate(kinds)]


def _fig5(name: str, length_km: float, kinds: tuple, noise: float) -> ExperimentConfig:
    return ExperimentConfig(
        name=name,
        tx=TxConfig(min_bits=300_000, payloads=_link_payloads(*kinds),
                    modulator=ModulatorConfig(mode="physical")),
        channel=ChannelConfig(
            fiber=FiberSpec(length_km=length_km),
            amp=AmpSpec(noise_power=noise, filter_width_hz=125e9),
            normalize_power=1.0,
        ),
        expect=Expectations(max_ber=0.0),
    )


def preset(name: str) -> ExperimentConfig:
    """Desk-scale versions of the published experiments (N=3, df=8 GHz, 4 Gbaud PRBS-7)."""
    if name == "theorem-check":
        return ExperimentConfig(
            name=name,
            tx=TxConfig(payloads=_link_payloads("bpsk", "bpsk", "ook")),
            channel=ChannelConfig(voa=VoaSpec(insertion_loss_db=0.0)),
            expect=Expectations(max_ber=0.0, max_reconstruction_error=1e-6),
        )
    if name == "fig5a-5km":
        return _fig5(name, 5.0, ("bpsk", "bpsk", "ook"), 0.1)
    if name == "fig5b-10km":
        return _fig5(name, 10.0, ("bpsk", "bpsk", "ook"), 0.1)
    if name == "fig5c-4level":
        return _fig5(name, 5.0, ("4level", "4level", "4level"), 0.02)
    if name == "fig5-mixed":
        cfg = _fig5(name, 0.0, ("bpsk", "ook", "analog"), 1e-4)
        cfg.tx.modulator = ModulatorConfig(mode="physical", drive_scale=0.005)
        cfg.expect = Expectations(max_ber=0.0, min_sinad_db=40.0)
        return cfg
    if name == "fig5-mixed-5km":
        cfg = preset("fig5-mixed")
        cfg.name = name
        cfg.channel.fiber = FiberSpec(length_km=5.0)
        cfg.expect = Expectations(max_ber=0.0)
        return cfg
    if name == "fig5d-sweep":
        cfg = _fig5(name, 5.0, ("bpsk", "bpsk", "ook"), 0.0)
        cfg.tx.min_bits = 60_000
        cfg.channel.normalize_power = None
        cfg.channel.amp = AmpSpec(gain_db=20.0, noise_power=1.0, filter_width_hz=125e9)
        # OOK levels {0, 1} carry half the BPSK power; sqrt(2) equalizes average power
        cfg.tx.payloads[2].amplitude = math.sqrt(2.0)
        cfg.metrics = MetricsConfig(eye=False, psd=False)
        cfg.expect = Expectations()
        return cfg
    raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


PRESETS = ("theorem-check", "fig5a-5km", "fig5b-10km", "fig5c-4level", "fig5-mixed", "fig5-mixed-5km", "fig5d-sweep")

# values not taken from the published experiment, labeled in every report
_ASSUMED = (
    ("channel.fiber.dispersion_ps_nm_km", lambda c: c.channel.fiber.dispersion_ps_nm_km),
    ("channel.fiber.attenuation_db_km", lambda c: c.channel.fiber.attenuation_db_km),
    ("channel.amp.gain_db", lambda c: c.channel.amp.gain_db),
    ("channel.amp.noise_power", lambda c: c.channel.amp.noise_power),
    ("channel.normalize_power", lambda c: c.channel.normalize_power),
    ("tx.modulator", lambda c: dataclasses.asdict(c.tx.modulator)),
    ("tx.payloads.shaping", lambda c: [p.shaping for p in c.tx.payloads]),
    ("tx.oversampling", lambda c: c.tx.oversampling),
)


# -- frame planning --------------------------------------------------------------

@dataclass(frozen=True)
class FramePlan:
    plan: TxPlan
    periods: int
    grid_rate: float
    samples: int
    frames: int

    @property
    def spec(self) -> SincSequenceSpec:
        return self.plan.spec()

    def grid(self):
        return sequence_grid(self.spec, self.periods, int(round(self.grid_rate / self.plan.bandwidth)))


def plan_frames(cfg: ExperimentConfig) -> FramePlan:
    tx = cfg.tx
    plan = TxPlan(tx.n_channels, tx.line_spacing_hz)
    per_period = tx.oversampling * tx.n_channels
    step = 1
    for p in tx.payloads:
        if p.kind == "analog":
            ratio = Fraction(p.tone_hz / tx.line_spacing_hz).limit_denominator(10**6)
        else:
            ratio = Fraction(tx.line_spacing_hz / p.symbol_rate).limit_denominator(10**6)
            ratio = 1 / ratio
        step = math.lcm(step, ratio.denominator)
    periods = (tx.window_samples // per_period) // step * step
    if periods < max(step, 2 * cfg.rx.edge_periods + 1):
        raise ConfigurationError(
            f"tx.window_samples: {tx.window_samples} samples cannot hold whole symbols and tones"
        )
    frames = 1
    if tx.min_bits > 0:
        per_frame = []
        for p in tx.payloads:
            kind = PayloadKind(p.kind)
            if kind.bits_per_symbol:
                n_sym = int(round(periods / tx.line_spacing_hz * p.symbol_rate))
                usable = max(1, n_sym - 2 * int(math.ceil(cfg.rx.edge_periods * p.symbol_rate / tx.line_spacing_hz)))
                per_frame.append(usable * kind.bits_per_symbol)
        if per_frame:
            frames = min(tx.max_frames, int(math.ceil(tx.min_bits / min(per_frame))))
    return FramePlan(plan, periods, tx.oversampling * plan.bandwidth, periods * per_period, frames)


# -- running ---------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: Optional[float]
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    frames: FramePlan
    reports: list[MetricsReport]
    checks: list[Check]
    tx_spectrum: Optional[object] = None
    demux_spectrum: Optional[object] = None
    waveforms: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        fp = self.frames
        cfg = self.config
        return {
            "name": cfg.name,
            "seed": cfg.seed,
            "grid": {
                "n_channels": fp.plan.n_channels,
                "line_spacing_hz": fp.plan.line_spacing,
                "bandwidth_hz": fp.plan.bandwidth,
                "sample_rate_hz": fp.grid_rate,
                "samples_per_frame": fp.samples,
                "periods_per_frame": fp.periods,
                "frames": fp.frames,
            },
            "assumed_parameters": {k: get(cfg) for k, get in _ASSUMED},
            "channels": [r.to_dict() for r in self.reports],
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _transmit_channel(field_wf, ch: ChannelConfig, seed: int, frame: int):
    out = propagate_fiber(field_wf, ch.fiber)
    out = apply_voa(out, ch.voa)
    if ch.normalize_power is not None:
        out = normalize_power(out, ch.normalize_power)
    return amplify(out, ch.amp, seed, label=f"frame{frame}/amplifier")


class _ChannelAccumulator:
    def __init__(self, index: int, payload: PayloadConfig, normalization: str):
        self.index = index
        self.payload = payload
        self.kind = PayloadKind(payload.kind)
        self.normalization = normalization
        self.errors = 0
        self.bits = 0
        self.evm_sq = 0.0
        self.evm_n = 0
        self.sinad = None
        self.recon = 0.0
        self.eye = None


def run_experiment(cfg: ExperimentConfig, output_dir=None, *, write: bool = True) -> ExperimentResult:
    """Transmitter, channel, receiver and metrics for every requested channel.

    Writes ``report.json``, ``channels.csv`` and the optional eye/PSD/waveform
    artifacts when ``write`` is true and an output directory is known.
    """
    cfg.validate()
    fp = plan_frames(cfg)
    plan, spec, grid = fp.plan, fp.spec, fp.grid()
    n = plan.n_channels
    dt = spec.delta_t
    model = cfg.tx.modulator.build(n)
    rx_channels = cfg.rx.channels if cfg.rx.channels is not None else list(range(n))
    acc = {l: _ChannelAccumulator(l, cfg.tx.payloads[l], cfg.metrics.evm_normalization) for l in rx_channels}
    edge_t = cfg.rx.edge_periods * spec.period
    result = ExperimentResult(cfg, fp, [], [])

    for frame in range(fp.frames):
        waves, symbols, bits = [], {}, {}
        for l, p in enumerate(cfg.tx.payloads):
            kind = PayloadKind(p.kind)
            if kind is PayloadKind.ANALOG:
                payload = ChannelPayload.tone(p.tone_hz, grid, p.amplitude)
            else:
                n_sym = int(round(grid.duration * p.symbol_rate))
                nb = n_sym * kind.bits_per_symbol
                b = prbs7(PrbsSpec(seed=p.prbs_seed), nb, offset=frame * nb)
                payload = ChannelPayload.from_bits(kind, b, p.symbol_rate, shaping=p.shaping)
                symbols[l], bits[l] = payload.symbols, b
            shaped = shape_payload(
                payload, grid, t_first=grid.t0 + l * dt,
                baseband_limit=plan.baseband_limit, strict=cfg.tx.strict_nyquist,
            )
            if kind is not PayloadKind.ANALOG and p.amplitude != 1.0:
                shaped = shaped.with_samples(shaped.samples * p.amplitude)
            waves.append(shaped)
        drive = build_drive_signal(waves, plan, grid)
        tx_field = modulate(cfg.tx.carrier_power, drive, model)
        rx_in = _transmit_channel(tx_field, cfg.channel, cfg.seed, frame)
        if frame == 0:
            if cfg.metrics.psd:
                result.tx_spectrum = psd(tx_field, cfg.metrics.rbw_hz)
                first = rx_channels[0]
                result.demux_spectrum = psd(
                    demultiplex(rx_in, spec.shifted(first), cfg.rx.for_channel(first), apply_filter=False),
                    cfg.metrics.rbw_hz,
                )
            if cfg.metrics.save_waveforms:
                result.waveforms["drive"] = drive
                result.waveforms["tx_field"] = tx_field
                result.waveforms["rx_field"] = rx_in

        for l in rx_channels:
            a = acc[l]
            sl = spec.shifted(l)
            rcfg = cfg.rx.for_channel(l)
            x = receive_channel(rx_in, sl, rcfg)
            res = extract_samples(x, sl, rcfg)
            rec = reconstruct_channel(res, sl)
            if frame == 0 and cfg.metrics.save_waveforms:
                result.waveforms[f"rx_ch{l}"] = rec
            t_rel = rec.times - grid.t0
            interior = (t_rel >= edge_t) & (t_rel < grid.duration - edge_t)
            ref = waves[l].samples
            peak = np.max(np.abs(ref[interior]))
            if cfg.rx.rescale_by_n and peak > 0:
                err = float(np.max(np.abs(rec.samples[interior] - ref[interior])) / peak)
                a.recon = max(a.recon, err)
            if a.kind is PayloadKind.ANALOG:
                s = sinad(rec, cfg.tx.payloads[l].tone_hz, spec.line_spacing)
                a.sinad = s if a.sinad is None else min(a.sinad, s)
                continue
            p = cfg.tx.payloads[l]
            sym_t = l * dt + np.arange(symbols[l].size) / p.symbol_rate
            keep = (sym_t >= edge_t) & (sym_t < grid.duration - edge_t)
            idx = np.round((sym_t[keep]) * grid.sample_rate).astype(np.int64) % len(grid)
            y = rec.samples[idx]
            tx_sym = symbols[l][keep]
            g = align_gain(y, tx_sym)
            y = y / g
            dec = decide_symbols(y, a.kind)
            bps = a.kind.bits_per_symbol
            tx_bits = bits[l].reshape(-1, bps)[keep].reshape(-1)
            r = ber(tx_bits, dec.bits)
            a.errors += r.errors
            a.bits += r.count
            if a.kind is PayloadKind.OOK:
                e = evm(np.abs(y) ** 2, a.kind.levels, a.normalization, transmitted=tx_sym**2)
            else:
                e = evm(y, a.kind.levels, a.normalization, transmitted=tx_sym)
            a.evm_sq += e**2 * y.size
            a.evm_n += y.size
            if frame == 0 and cfg.metrics.eye:
                aligned = rec.with_samples(rec.samples / g)
                a.eye = eye_histogram(
                    aligned, 1.0 / p.symbol_rate, tuple(cfg.metrics.eye_bins),
                    component="power" if a.kind is PayloadKind.OOK else "real", t_center=l * dt,
                )

    for l in rx_channels:
        a = acc[l]
        rep = MetricsReport(channel=l, kind=a.kind.value, evm_normalization=a.normalization)
        if a.kind is PayloadKind.ANALOG:
            rep.sinad_db = a.sinad
        else:
            rep.bit_errors, rep.bits_counted = a.errors, a.bits
            rep.ber = a.errors / a.bits if a.bits else 0.0
            rep.evm_percent = math.sqrt(a.evm_sq / a.evm_n) if a.evm_n else None
            rep.eye = a.eye
        if cfg.rx.rescale_by_n:
            rep.reconstruction_error = a.recon
        result.reports.append(rep)
    result.checks = _evaluate(cfg.expect, result.reports)
    out = output_dir if output_dir is not None else cfg.output_dir
    if write and out is not None:
        write_artifacts(result, out)
    return result


def _evaluate(expect: Expectations, reports: list[MetricsReport]) -> list[Check]:
    checks = []
    for r in reports:
        if expect.max_ber is not None and r.ber is not None:
            checks.append(Check(f"ch{r.channel}.ber", r.ber, expect.max_ber, r.ber <= expect.max_ber))
        if expect.max_evm_percent is not None and r.evm_percent is not None:
            checks.append(Check(f"ch{r.channel}.evm_percent", r.evm_percent, expect.max_evm_percent,
                                r.evm_percent <= expect.max_evm_percent))
        if expect.min_sinad_db is not None and r.sinad_db is not None:
            checks.append(Check(f"ch{r.channel}.sinad_db", r.sinad_db, expect.min_sinad_db,
                                r.sinad_db >= expect.min_sinad_db))
        if expect.max_reconstruction_error is not None:
            v = r.reconstruction_error
            checks.append(Check(f"ch{r.channel}.reconstruction_error", v, expect.max_reconstruction_error,
                                v is not None and v <= expect.max_reconstruction_error))
    return checks


def _atomic_write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def channels_csv(reports: list[MetricsReport]) -> str:
    cols = ["channel", "kind", "ber", "bit_errors", "bits_counted", "evm_percent", "sinad_db", "reconstruction_error"]
    lines = [",".join(cols)]
    for r in reports:
        d = r.to_dict()
        lines.append(",".join("" if d[c] is None else repr(d[c]) if isinstance(d[c], float) else str(d[c]) for c in cols))
    return "\n".join(lines) + "\n"


def write_artifacts(result: ExperimentResult, output_dir) -> None:
    out = Path(output_dir)
    _atomic_write(out / "report.json", result.to_json())
    _atomic_write(out / "channels.csv", channels_csv(result.reports))
    _atomic_write(out / "config.yaml", result.config.to_yaml())
    _atomic_write(out / "comb_lines.csv", comb_lines(result.frames.spec).to_csv())
    for r in result.reports:
        if r.eye is not None:
            _atomic_write(out / f"eye_ch{r.channel}.pgm", r.eye.to_pgm())
    if result.tx_spectrum is not None:
        _atomic_write(out / "psd_tx.csv", result.tx_spectrum.to_csv())
    if result.demux_spectrum is not None:
        _atomic_write(out / "psd_demux.csv", result.demux_spectrum.to_csv())
    for name, wf in result.waveforms.items():
        _atomic_write(out / f"{name}.wfm", wf.to_bytes())


# -- sweeps ----------------------------------------------------------------------

@dataclass
class SweepSpec:
    variable: str
    values: list[float]
    repetitions: int = 1

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigurationError(f"sweep variable must be one of {', '.join(SWEEP_VARIABLES)}")
        if not self.values:
            raise ConfigurationError("sweep needs at least one value")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be at least 1")


def with_sweep_value(cfg: ExperimentConfig, variable: str, value: float) -> ExperimentConfig:
    c = copy.deepcopy(cfg)
    if variable == "voa_attenuation":
        c.channel.voa = dataclasses.replace(c.channel.voa, attenuation_db=value)
    elif variable == "fiber_length":
        c.channel.fiber = dataclasses.replace(c.channel.fiber, length_km=value)
    elif variable == "noise_power":
        c.channel.amp = dataclasses.replace(c.channel.amp, noise_power=value)
    elif variable == "clock_phase_error":
        c.rx.clock_phase_error = value
    else:
        raise ConfigurationError(f"unknown sweep variable {variable!r}")
    return c


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=keys).generate_state(1, np.uint64)[0])


def _sweep_point(args):
    cfg, i, rep, value, variable = args
    point = with_sweep_value(cfg, variable, value)
    point.seed = derive_seed(cfg.seed, i, rep)
    point.metrics.eye = False
    point.metrics.psd = False
    res = run_experiment(point, write=False)
    return i, rep, value, res.to_json(), [r.to_dict() for r in res.reports]


@dataclass
class SweepResult:
    sweep: SweepSpec
    rows: list[dict]

    def to_csv(self) -> str:
        cols = ["value", "repetition", "channel", "kind", "ber", "bit_errors", "bits_counted", "evm_percent", "sinad_db"]
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join("" if r[c] is None else repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def aggregate(self) -> dict:
        """Per (value, channel): pooled errors, bits and BER over repetitions."""
        out: dict = {}
        for r in self.rows:
            if r["bits_counted"] is None or r["ber"] is None:
                continue
            key = (r["value"], r["channel"])
            e, b = out.get(key, (0, 0))
            out[key] = (e + r["bit_errors"], b + r["bits_counted"])
        return {k: {"errors": e, "bits": b, "ber": e / b if b else 0.0} for k, (e, b) in out.items()}


def run_sweep(cfg: ExperimentConfig, sweep: SweepSpec, output_dir=None, *, workers: int = 1) -> SweepResult:
    cfg.validate()
    jobs = [(cfg, i, rep, float(v), sweep.variable)
            for i, v in enumerate(sweep.values) for rep in range(sweep.repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_sweep_point, jobs))
    else:
        done = [_sweep_point(j) for j in jobs]
    rows = []
    out = Path(output_dir) if output_dir is not None else (Path(cfg.output_dir) if cfg.output_dir else None)
    for i, rep, value, report_json, channel_rows in sorted(done, key=lambda d: (d[0], d[1])):
        if out is not None:
            _atomic_write(out / "points" / f"point_{i:03d}_rep{rep:02d}.json", report_json)
        for row in channel_rows:
            rows.append({"value": value, "repetition": rep, **row})
    result = SweepResult(sweep, rows)
    if out is not None:
        _atomic_write(out / "sweep.csv", result.to_csv())
        summary = {
            "variable": sweep.variable,
            "values": [float(v) for v in sweep.values],
            "repetitions": sweep.repetitions,
            "pooled": [
                {"value": k[0], "channel": k[1], **v} for k, v in sorted(result.aggregate().items())
            ],
        }
        _atomic_write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return result
