"""Nyquist-sinc-sequence time-division multiplexing: simulation of the full optical link.

A comb of ``N`` equal lines spaced ``df`` apart is, in time, a train of sinc
pulses of bandwidth ``B = N * df``.  Multiplying ``N`` band-limited payloads by
the ``N`` time-shifted trains interleaves them without crosstalk; multiplying
the multiplex by one shifted train again and low-pass filtering recovers a
single channel.
"""

from .channel import AmpSpec, FiberSpec, VoaSpec, amplify, apply_voa, propagate_fiber
from .comb import SincSequenceSpec, comb_lines, eval_sq, orthogonality_matrix, sequence_grid, synth_sq
from .errors import AliasingError, ConfigurationError, RejectedInputError
from .experiment import ExperimentConfig, SweepSpec, preset, run_experiment, run_sweep
from .rx import RxConfig, decide_symbols, demultiplex, extract_samples, reconstruct_channel
from .tx import MzmModel, TxPlan, build_drive_signal, modulate, multiplex, plan_symbol_rate
from .waveform import Waveform, brickwall_filter, dft, idft

__version__ = "0.1.0"

__all__ = [
    "AliasingError", "AmpSpec", "ConfigurationError", "ExperimentConfig", "FiberSpec", "MzmModel",
    "RejectedInputError", "RxConfig", "SincSequenceSpec", "SweepSpec", "TxPlan", "VoaSpec", "Waveform",
    "amplify", "apply_voa", "brickwall_filter", "build_drive_signal", "comb_lines", "decide_symbols",
    "demultiplex", "dft", "eval_sq", "extract_samples", "idft", "modulate", "multiplex",
    "orthogonality_matrix", "plan_symbol_rate", "preset", "propagate_fiber", "reconstruct_channel",
    "run_experiment", "run_sweep", "sequence_grid", "synth_sq",
]
