"""Acceptance criteria 1-9.  Each test records one PASS/FAIL line, then asserts."""

import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import norm

import conftest
from sincmux.comb import (
    SincSequenceSpec,
    multiplication_theorem_residual,
    orthogonality_matrix,
    sequence_grid,
    synth_sq,
)
from sincmux.experiment import SweepSpec, preset, run_experiment, run_sweep
from sincmux.metrics import ber
from sincmux.rx import RxConfig, decide_symbols, demultiplex
from sincmux.tx import MzmModel, TxPlan, build_drive_signal, map_bits, modulate, plan_symbol_rate
from sincmux.waveform import Waveform, add_awgn, dft, random_bandlimited


def record(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def interior(x):
    q = len(x) // 4
    return x[q: len(x) - q]


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_reconstruction():
    start = time.perf_counter()
    worst_err = worst_leak = 0.0
    for n in (3, 5, 7):
        plan = TxPlan(n, 8e9)
        grid = sequence_grid(plan.spec(), 64)
        model = MzmModel.ideal(n)
        for trial in range(20):
            seed = 1000 * n + trial
            waves = [random_bandlimited(plan.line_spacing, grid.duration, grid.sample_rate, seed=seed, label=f"ch{l}")
                     for l in range(n)]
            s = modulate(1.0, build_drive_signal(waves, plan, grid), model)
            for l in range(n):
                spec = plan.spec(l)
                x = demultiplex(s, spec, RxConfig(target_shift=l)).samples
                ref = waves[l].samples / n
                err = np.max(np.abs(interior(x - ref))) / np.max(np.abs(interior(ref)))
                worst_err = max(worst_err, err)
            # leakage: one channel active at a time, energy seen by every other branch
            for k in range(n):
                alone = [w if i == k else w.zeros_like() for i, w in enumerate(waves)]
                s_k = modulate(1.0, build_drive_signal(alone, plan, grid), model)
                e_k = np.sum(np.abs(interior(waves[k].samples / n)) ** 2)
                for l in range(n):
                    if l != k:
                        x = demultiplex(s_k, plan.spec(l), RxConfig(target_shift=l)).samples
                        worst_leak = max(worst_leak, np.sum(np.abs(interior(x)) ** 2) / e_k)
    elapsed = time.perf_counter() - start
    ok = worst_err <= 1e-6 and worst_leak <= 1e-10 and elapsed < 30
    record(1, ok, f"max interior error {worst_err:.2e} (<=1e-6), max leakage {worst_leak:.2e} (<=1e-10), "
                  f"{elapsed:.1f} s (<30 s)")
    assert ok


# -- 2 ---------------------------------------------------------------------------

def test_criterion_2_orthogonality():
    worst = max(np.max(np.abs(orthogonality_matrix(n, 24e9) - np.eye(n))) for n in range(1, 34, 2))
    ok = worst <= 1e-12
    record(2, ok, f"max |G - I| over odd N<=33 is {worst:.2e} (<=1e-12)")
    assert ok


# -- 3 ---------------------------------------------------------------------------

def test_criterion_3_fourier_pair():
    details, ok = [], True
    for n in (1, 3, 5, 9, 17, 33):
        spec = SincSequenceSpec(n, 24e9)
        view = dft(synth_sq(spec, sequence_grid(spec, 4)))
        mag = np.abs(view.coefficients)
        lines = np.flatnonzero(mag > 1e-10)
        expected = {view.bin_index(k * spec.line_spacing) for k in range(-(n // 2), n // 2 + 1)}
        flat = np.max(np.abs(mag[lines] - 1 / n)) if lines.size else np.inf
        spur = np.max(np.delete(mag, sorted(expected))) if mag.size > n else 0.0
        good = set(lines.tolist()) == expected and flat <= 1e-10 and spur <= 1e-10
        ok &= good
        details.append(f"N={n}: {lines.size} lines, flat {flat:.1e}, spur {spur:.1e}")
    record(3, ok, "; ".join(details))
    assert ok


# -- 4 ---------------------------------------------------------------------------

def test_criterion_4_multiplication_theorem():
    res = {(n, m): multiplication_theorem_residual(SincSequenceSpec(n, 24e9), sequence_grid(SincSequenceSpec(n, 24e9), 8, m))
           for n in (1, 3, 9) for m in (8, 16)}
    worst = max(res.values())
    ok = worst <= 1e-9
    record(4, ok, f"max residual {worst:.2e} over N in {{1,3,9}}, M in {{8,16}} (<=1e-9)")
    assert ok


# -- 5 ---------------------------------------------------------------------------

def test_criterion_5_symbol_rate_plan():
    bm = Fraction(100_000_000_000)
    single = plan_symbol_rate("single", bm, 3)
    cascaded = plan_symbol_rate("cascaded", bm, 3)
    tb = plan_symbol_rate("cascaded", 500e9, 3)
    checks = [
        single.combined == bm,
        single.optical_bandwidth == 2 * bm,
        cascaded.combined == Fraction(3, 2) * bm,
        tb.combined == Fraction(750_000_000_000),
        all(isinstance(v, Fraction) for v in (single.combined, cascaded.combined, tb.combined)),
    ]
    ok = all(checks)
    record(5, ok, f"single N=3 combined {single.combined}, optical {single.optical_bandwidth}; "
                  f"cascaded N=3 combined {cascaded.combined}; 500 GHz cascaded {tb.combined} Bd")
    assert ok


# -- 6 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def fig5a():
    return run_experiment(preset("fig5a-5km"), write=False)


@pytest.fixture(scope="module")
def fig5b():
    return run_experiment(preset("fig5b-10km"), write=False)


def test_criterion_6a_five_km_error_free(fig5a):
    digital = [r for r in fig5a.reports if r.ber is not None]
    ok = len(digital) == 3 and all(r.bit_errors == 0 and r.bits_counted >= 300_000 for r in digital)
    counts = ", ".join(f"ch{r.channel} {r.kind} {r.bit_errors}/{r.bits_counted}" for r in digital)
    record("6a", ok, f"5 km errors/bits: {counts} (0 errors over >=300000 bits)")
    assert ok


def test_criterion_6b_evm_grows_with_length(fig5a, fig5b):
    pairs = [(a.evm_percent, b.evm_percent) for a, b in zip(fig5a.reports, fig5b.reports)]
    ok = all(b > a for a, b in pairs)
    text = ", ".join(f"ch{i} {a:.2f}% -> {b:.2f}%" for i, (a, b) in enumerate(pairs))
    record("6b", ok, f"EVM 5 km -> 10 km: {text}")
    assert ok


def test_criterion_6c_mixed_analog_and_digital():
    res = run_experiment(preset("fig5-mixed"), write=False)
    analog = [r for r in res.reports if r.kind == "analog"]
    digital = [r for r in res.reports if r.ber is not None]
    ok = (len(analog) == 1 and analog[0].sinad_db >= 40 and len(digital) == 2
          and all(r.bit_errors == 0 and r.bits_counted >= 300_000 for r in digital))
    counts = ", ".join(f"ch{r.channel} {r.kind} {r.bit_errors}/{r.bits_counted}" for r in digital)
    record("6c", ok, f"2 GHz analog SINAD {analog[0].sinad_db:.1f} dB (>=40); digital {counts}")
    assert ok


# -- 7 ---------------------------------------------------------------------------

def test_criterion_7_ber_vs_attenuation(tmp_path):
    values = [float(v) for v in np.arange(0.0, 20.01, 2.5)]
    res = run_sweep(preset("fig5d-sweep"), SweepSpec("voa_attenuation", values), tmp_path)
    agg = res.aggregate()
    kinds = {r["channel"]: r["kind"] for r in res.rows}
    problems = []
    for ch in kinds:
        curve = [agg[(v, ch)]["ber"] for v in values]
        if any(b < a for a, b in zip(curve, curve[1:])):
            problems.append(f"ch{ch} not monotone {curve}")
    bpsk = [c for c, k in kinds.items() if k == "bpsk"]
    ook = [c for c, k in kinds.items() if k == "ook"]
    compared = 0
    for v in values:
        for b in bpsk:
            for o in ook:
                if agg[(v, b)]["errors"] >= 100 and agg[(v, o)]["errors"] >= 100:
                    compared += 1
                    if agg[(v, b)]["ber"] > agg[(v, o)]["ber"]:
                        problems.append(f"BPSK ch{b} above OOK ch{o} at {v} dB")
        p0, p1 = agg[(v, bpsk[0])], agg[(v, bpsk[1])]
        pooled = (p0["errors"] + p1["errors"]) / (p0["bits"] + p1["bits"])
        sigma = np.sqrt(pooled * (1 - pooled) * (1 / p0["bits"] + 1 / p1["bits"]))
        if abs(p0["ber"] - p1["ber"]) > 3 * sigma:
            problems.append(f"BPSK channels differ at {v} dB: {p0['ber']:.3e} vs {p1['ber']:.3e}")
    ok = not problems and compared > 0
    summary = ", ".join(f"{v:g} dB: " + "/".join(f"{agg[(v, c)]['ber']:.2e}" for c in sorted(kinds)) for v in values)
    record(7, ok, f"BER per channel {summary}; {compared} BPSK/OOK comparisons"
                  + (f"; problems: {'; '.join(problems)}" if problems else ""))
    assert ok


# -- 8 ---------------------------------------------------------------------------

def test_criterion_8_bpsk_awgn_anchor():
    n = 10**6
    bits = np.random.default_rng(8).integers(0, 2, n).astype(np.uint8)
    clean = Waveform(map_bits("bpsk", bits), 1.0)
    ok, parts = True, []
    for snr_db in (6, 8, 10):
        snr = 10 ** (snr_db / 10)
        rx = add_awgn(clean, 1 / snr, seed=snr_db)
        measured = ber(bits, decide_symbols(rx.samples, "bpsk").bits).ratio
        theory = norm.sf(np.sqrt(2 * snr))
        sigma = np.sqrt(theory * (1 - theory) / n)
        good = abs(measured - theory) <= 3 * sigma
        ok &= good
        parts.append(f"{snr_db} dB {measured:.3e} vs {theory:.3e} ({abs(measured - theory) / sigma:.2f} sigma)")
    record(8, ok, "; ".join(parts))
    assert ok


# -- 9 ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["theorem-check", "fig5c-4level"])
def test_criterion_9_determinism(name, tmp_path):
    cfg = preset(name)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    ok = bool(files) and all(same) and files == sorted(p.name for p in (tmp_path / "b").iterdir())
    record(9, ok, f"{name}: {sum(same)}/{len(files)} artifacts byte-identical across two runs with seed {cfg.seed}")
    assert ok
