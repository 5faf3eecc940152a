"""Noise-robust control pulses for a driven spin: synthesis, robustness maps,
randomized benchmarking and dynamical-decoupling sensing simulations."""

__version__ = "0.1.0"

from .pulses import (ErrorPoint, Waveform, Pulse, Delay, PulseSequence, square_pulse,
                     corpse, bb1, rotate_phase, sequence_propagator, read_waveform,
                     write_waveform)
from .quantum import propagate, state_fidelity, expectation_population
from .roc import RocConfig, RocResult, optimize, fitness, directional_derivative

__all__ = [
    "ErrorPoint", "Waveform", "Pulse", "Delay", "PulseSequence", "square_pulse", "corpse",
    "bb1", "rotate_phase", "sequence_propagator", "read_waveform", "write_waveform",
    "propagate", "state_fidelity", "expectation_population", "RocConfig", "RocResult",
    "optimize", "fitness", "directional_derivative",
]
