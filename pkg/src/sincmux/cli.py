"""Command-line entry point: ``sincmux run | sweep | plan | selftest | preset``.

Exit codes: 0 success, 1 configuration error, 2 a threshold check failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .comb import SincSequenceSpec, comb_lines, multiplication_theorem_residual, orthogonality_matrix, sequence_grid, synth_sq
from .errors import ConfigurationError
from .experiment import PRESETS, SWEEP_VARIABLES, ExperimentConfig, SweepSpec, preset, run_experiment, run_sweep
from .tx import plan_symbol_rate
from .waveform import dft

EXIT_OK, EXIT_CONFIG, EXIT_THRESHOLD = 0, 1, 2

EXAMPLE_CONFIG = """\
# sincmux experiment configuration.  Every field is optional; omitted fields
# take the defaults shown here.  Frequencies in Hz, lengths in km, powers linear.
name: example
seed: 1                      # drives every noise stream; same seed, same bytes
output_dir: null             # where `run` writes artifacts (overridden by --out)
tx:
  n_channels: 3              # odd N; bandwidth B = N * line_spacing_hz
  line_spacing_hz: 8.0e9     # comb line spacing (sequence repetition rate)
  oversampling: 16           # grid samples per 1/B
  window_samples: 262144     # frame size upper bound; trimmed to whole periods
  min_bits: 0                # keep adding frames until every digital channel counts this many bits
  max_frames: 400
  carrier_power: 1.0
  strict_nyquist: true       # false turns payload band-limit violations into warnings
  modulator:
    mode: ideal              # ideal (linear multiplier) or physical (cosine-field MZM)
    v_pi: 1.0
    bias: null               # ideal: 0, physical: v_pi (transmission null)
    drive_scale: null        # ideal: 1/N, physical: 0.05
  payloads:                  # exactly n_channels entries, channel l sampled at l/B
    - {kind: bpsk, symbol_rate: 4.0e9, shaping: sinc, prbs_seed: 127}
    - {kind: bpsk, symbol_rate: 4.0e9, shaping: sinc, prbs_seed: 85}
    - {kind: analog, tone_hz: 2.0e9, amplitude: 1.0}   # kinds: ook, bpsk, 4level, analog
channel:
  fiber: {length_km: 5.0, dispersion_ps_nm_km: 17.0, attenuation_db_km: 0.2, center_wavelength_nm: 1550.116}
  voa: {attenuation_db: 0.0, insertion_loss_db: 4.0}
  amp: {gain_db: 0.0, noise_power: 0.01, filter_width_hz: 125.0e9}
  normalize_power: 1.0       # rescale received power before the amplifier; null disables
rx:
  filter_domain: bandpass    # bandpass (df at the carrier) or lowpass (df/2 on I and Q)
  lo_phase_error: 0.0        # radians
  clock_phase_error: 0.0     # fraction of 1/B
  rescale_by_n: true         # undo the 1/N factor of the demultiplexer
  edge_periods: 1            # periods ignored at each window edge
  channels: null             # subset of channels to receive; null means all
metrics:
  evm_normalization: avg     # avg or peak constellation amplitude
  eye: true
  eye_bins: [64, 64]
  psd: true
  rbw_hz: 1.0e8
  save_waveforms: false      # binary dumps of drive, fields and recovered channels
expect:                      # failed checks give exit code 2
  max_ber: 0.0
  min_sinad_db: null         # e.g. 40.0; 5 km of dispersion caps this example near 20 dB
  max_reconstruction_error: null
  max_evm_percent: null
"""


def _load(source: str) -> ExperimentConfig:
    if source in PRESETS:
        return preset(source)
    path = Path(source)
    if not path.exists():
        raise ConfigurationError(f"{source}: no such config file or preset ({', '.join(PRESETS)})")
    return ExperimentConfig.load(path)


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"--values: expected comma-separated numbers, got {text!r}") from None


def selftest(out=None) -> bool:
    """Fast invariant checks on the core math; prints one line per check."""
    results = []
    worst = max(
        float(np.max(np.abs(orthogonality_matrix(n, 24e9) - np.eye(n)))) for n in range(1, 34, 2)
    )
    results.append(("orthogonality N<=33", worst, 1e-12))
    worst = 0.0
    for n in (1, 3, 9):
        spec = SincSequenceSpec(n, 24e9)
        bins = dft(synth_sq(spec, sequence_grid(spec, 4))).coefficients
        lines = comb_lines(spec)
        freq_idx = np.round(lines.frequencies / spec.line_spacing * 4).astype(int) + bins.size // 2
        spurs = np.delete(bins, freq_idx)
        worst = max(worst, float(np.max(np.abs(bins[freq_idx] - lines.amplitudes))), float(np.max(np.abs(spurs), initial=0.0)))
    results.append(("comb lines N in {1,3,9}", worst, 1e-10))
    worst = max(
        multiplication_theorem_residual(SincSequenceSpec(n, 24e9), sequence_grid(SincSequenceSpec(n, 24e9), 8, m))
        for n in (1, 3, 9) for m in (8, 16)
    )
    results.append(("multiplication theorem", worst, 1e-9))
    cfg = preset("theorem-check")
    cfg.metrics.eye = cfg.metrics.psd = False
    res = run_experiment(cfg, write=False)
    results.append(("end-to-end reconstruction", max(r.reconstruction_error for r in res.reports), 1e-6))
    ok = True
    for name, value, limit in results:
        passed = value <= limit
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.3e} (limit {limit:g})", file=out or sys.stdout)
    return ok


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; exit code 2 is reserved for failed checks
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sincmux", description="Sinc-pulse-sequence time-interleaving link simulator")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one experiment from a config file or preset name")
    r.add_argument("config", help=f"YAML config path or preset ({', '.join(PRESETS)})")
    r.add_argument("--out", help="artifact directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="override the config seed")

    s = sub.add_parser("sweep", help="repeat an experiment over one swept variable")
    s.add_argument("config")
    s.add_argument("--var", required=True, choices=SWEEP_VARIABLES)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.add_argument("--seed", type=int)

    pl = sub.add_parser("plan", help="maximum symbol rates for a modulator bandwidth")
    pl.add_argument("--arch", choices=("single", "cascaded"), default="single")
    pl.add_argument("--bm", type=float, required=True, help="modulator RF bandwidth in Hz")
    pl.add_argument("--n", type=int, required=True, help="number of channels (odd, >= 3)")

    sub.add_parser("selftest", help="run the invariant checks")

    ex = sub.add_parser("preset", help="print a preset (or the commented example) as YAML")
    ex.add_argument("name", nargs="?", help="preset name; omit for the commented example config")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            cfg = _load(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            res = run_experiment(cfg, args.out)
            for rep in res.reports:
                parts = [f"ch{rep.channel} {rep.kind:7s}"]
                if rep.ber is not None:
                    parts.append(f"BER {rep.ber:.3e} ({rep.bit_errors}/{rep.bits_counted})")
                if rep.evm_percent is not None:
                    parts.append(f"EVM {rep.evm_percent:.2f}%")
                if rep.sinad_db is not None:
                    parts.append(f"SINAD {rep.sinad_db:.1f} dB")
                if rep.reconstruction_error is not None:
                    parts.append(f"rec.err {rep.reconstruction_error:.2e}")
                print("  ".join(parts))
            for c in res.checks:
                print(f"{'PASS' if c.passed else 'FAIL'}  {c.name} = {c.value} (limit {c.threshold})")
            return EXIT_OK if res.passed else EXIT_THRESHOLD
        if args.verb == "sweep":
            cfg = _load(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            sweep = SweepSpec(args.var, _values(args.values), args.reps)
            res = run_sweep(cfg, sweep, args.out, workers=args.workers)
            sys.stdout.write(res.to_csv())
            return EXIT_OK
        if args.verb == "plan":
            if args.n % 2 == 0:
                parser.error(f"--n must be odd, got {args.n}")
            plan = plan_symbol_rate(args.arch, args.bm, args.n)
            print(f"architecture      {args.arch}")
            print(f"modulator BW      {args.bm:.6g} Hz")
            print(f"channels N        {args.n}")
            print(f"per-channel rate  {float(plan.per_channel):.6g} Bd  ({plan.per_channel})")
            print(f"combined rate     {float(plan.combined):.6g} Bd  ({plan.combined})")
            print(f"optical bandwidth {float(plan.optical_bandwidth):.6g} Hz  ({plan.optical_bandwidth})")
            return EXIT_OK
        if args.verb == "selftest":
            return EXIT_OK if selftest() else EXIT_THRESHOLD
        if args.verb == "preset":
            sys.stdout.write(EXAMPLE_CONFIG if args.name is None else _load(args.name).to_yaml())
            return EXIT_OK
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
