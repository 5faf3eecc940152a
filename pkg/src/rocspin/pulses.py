"""Piecewise-constant I/Q pulses and their propagators.

A :class:`Waveform` holds normalized in-phase/quadrature amplitudes per time
slice and the amplitude scale ``omega_max`` (rad/s). During a slice the
two-level Hamiltonian is::

    H = (Delta + delta0) Sz + omega_max (1 + delta1) (ux' Sx + uy' Sy)

where ``(ux', uy')`` is the slice control rotated by the segment phase plus
the phase error.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .quantum import SX, SY, SZ, propagate_eigh, su2_from_vector

TWO_PI = 2 * np.pi
DEFAULT_DT = 1e-9
DEFAULT_OMEGA = TWO_PI * 10e6
AMPLITUDE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Waveform:
    dt: float
    ux: np.ndarray
    uy: np.ndarray
    omega_max: float = DEFAULT_OMEGA
    label: str = ""

    def __post_init__(self):
        ux = np.atleast_1d(np.asarray(self.ux, dtype=float)).copy()
        uy = np.atleast_1d(np.asarray(self.uy, dtype=float)).copy()
        if ux.shape != uy.shape or ux.ndim != 1 or ux.size < 1:
            raise ValueError("ux and uy must be 1-D arrays of equal nonzero length")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.omega_max > 0:
            raise ValueError(f"omega_max must be positive, got {self.omega_max}")
        if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy))):
            raise ValueError("waveform amplitudes must be finite")
        peak = max(np.max(np.abs(ux)), np.max(np.abs(uy)))
        if peak > 1 + AMPLITUDE_TOL:
            raise ValueError(f"amplitude constraint violated: max |u| = {peak}")
        ux.flags.writeable = False
        uy.flags.writeable = False
        object.__setattr__(self, "ux", ux)
        object.__setattr__(self, "uy", uy)

    def __len__(self):
        return self.ux.size

    @property
    def duration(self):
        return self.ux.size * self.dt

    def amplitude(self):
        return np.hypot(self.ux, self.uy)

    def with_label(self, label):
        return Waveform(self.dt, self.ux, self.uy, self.omega_max, label)

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (self.dt == other.dt and self.omega_max == other.omega_max
                and np.array_equal(self.ux, other.ux)
                and np.array_equal(self.uy, other.uy))


@dataclass(frozen=True)
class ErrorPoint:
    """Deterministic control errors.

    ``delta0`` is the total detuning (rad/s, deterministic offset plus static
    error), ``delta1`` the fractional Rabi error and ``delta_phi`` the phase
    error in radians.
    """

    delta0: float = 0.0
    delta1: float = 0.0
    delta_phi: float = 0.0

    def __post_init__(self):
        for name in ("delta0", "delta1", "delta_phi"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.delta1 <= -1:
            raise ValueError(f"delta1 must exceed -1, got {self.delta1}")


ZERO_ERROR = ErrorPoint()


@dataclass(frozen=True)
class Pulse:
    waveform: Waveform
    phase: float = 0.0

    @property
    def duration(self):
        return self.waveform.duration


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"delay must be non-negative, got {self.duration}")


Segment = Union[Pulse, Delay]


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if not isinstance(seg, (Pulse, Delay)):
                raise TypeError(f"not a sequence segment: {seg!r}")

    @property
    def duration(self):
        return float(sum(seg.duration for seg in self.segments))

    @property
    def pulses(self):
        return [seg for seg in self.segments if isinstance(seg, Pulse)]

    def __add__(self, other):
        return PulseSequence(self.segments + tuple(other.segments))


# -- generators --------------------------------------------------------------

def _segments_to_slices(segments, omega, dt):
    """Turn ``(angle, phase)`` rotations into per-slice (ux, uy).

    Each rotation gets ``floor(angle / (omega dt))`` full-amplitude slices and,
    if needed, one partial-amplitude slice carrying the residual angle exactly.
    """
    ux, uy = [], []
    for angle, phase in segments:
        if not angle > 0:
            raise ValueError(f"rotation angle must be positive, got {angle}")
        exact = angle / (omega * dt)
        full = int(np.floor(exact + 1e-9))
        rest = exact - full
        amps = [1.0] * full
        if rest > 1e-9:
            amps.append(rest)
        c, s = np.cos(phase), np.sin(phase)
        ux.extend(a * c for a in amps)
        uy.extend(a * s for a in amps)
    return np.array(ux), np.array(uy)


def square_pulse(theta, phi=0.0, omega=DEFAULT_OMEGA, dt=DEFAULT_DT):
    """Constant-amplitude rotation ``(theta)_phi`` lasting ``theta / omega``."""
    if not (theta > 0 and omega > 0 and dt > 0):
        raise ValueError("theta, omega and dt must be positive")
    ux, uy = _segments_to_slices([(theta, phi)], omega, dt)
    return Waveform(dt, ux, uy, omega, label="square")


def corpse_angles(theta):
    k = np.arcsin(np.sin(theta / 2) / 2)
    return 2 * np.pi + theta / 2 - k, 2 * np.pi - 2 * k, theta / 2 - k


def corpse(theta, omega=DEFAULT_OMEGA, dt=DEFAULT_DT):
    """CORPSE ``(t1)_0 (t2)_pi (t3)_0``; compensates detuning to first order."""
    if not 0 < theta <= np.pi:
        raise ValueError(f"CORPSE needs 0 < theta <= pi, got {theta}")
    t1, t2, t3 = corpse_angles(theta)
    ux, uy = _segments_to_slices([(t1, 0.0), (t2, np.pi), (t3, 0.0)], omega, dt)
    return Waveform(dt, ux, uy, omega, label="corpse")


def bb1_phase(theta):
    return np.arccos(-theta / (4 * np.pi))


def bb1(theta, omega=DEFAULT_OMEGA, dt=DEFAULT_DT):
    """Symmetric BB1 ``(theta/2)_0 (pi)_phi (2pi)_3phi (pi)_phi (theta/2)_0``."""
    if not 0 < theta <= np.pi:
        raise ValueError(f"BB1 needs 0 < theta <= pi, got {theta}")
    phi = bb1_phase(theta)
    parts = [(theta / 2, 0.0), (np.pi, phi), (2 * np.pi, 3 * phi),
             (np.pi, phi), (theta / 2, 0.0)]
    ux, uy = _segments_to_slices(parts, omega, dt)
    return Waveform(dt, ux, uy, omega, label="bb1")


def rotate_phase(w, phi):
    """Rotate every (ux, uy) slice by ``phi`` in the I/Q plane."""
    c, s = np.cos(phi), np.sin(phi)
    return Waveform(w.dt, w.ux * c - w.uy * s, w.ux * s + w.uy * c,
                    w.omega_max, w.label)


# -- propagation -------------------------------------------------------------

def _as_error_arrays(err):
    if isinstance(err, ErrorPoint):
        return (np.asarray(err.delta0, float), np.asarray(err.delta1, float),
                np.asarray(err.delta_phi, float))
    d0, d1, dphi = err
    return tuple(np.asarray(v, dtype=float) for v in np.broadcast_arrays(d0, d1, dphi))


def slice_propagators(w, phase=0.0, delta0=0.0, delta1=0.0, delta_phi=0.0):
    """Per-slice SU(2) propagators, shape ``err_shape + (L, 2, 2)``.

    Error arguments may be arrays (a batch of error points) and broadcast.
    """
    delta0, delta1, delta_phi = (np.asarray(v, dtype=float)[..., None]
                                 for v in np.broadcast_arrays(delta0, delta1, delta_phi))
    ang = phase + delta_phi
    c, s = np.cos(ang), np.sin(ang)
    amp = w.omega_max * (1 + delta1)
    bx = amp * (w.ux * c - w.uy * s)
    by = amp * (w.ux * s + w.uy * c)
    bz = np.broadcast_to(delta0, bx.shape)
    return su2_from_vector(bx, by, bz, w.dt)


def chain(us):
    """Time-ordered product ``U_L ... U_1`` over axis -3 of a stack."""
    us = np.asarray(us)
    total = us[..., 0, :, :]
    for k in range(1, us.shape[-3]):
        total = us[..., k, :, :] @ total
    return total


def pulse_propagator(w, err=ZERO_ERROR, phase=0.0):
    """Propagator of one waveform. ``err`` is an ErrorPoint or a
    ``(delta0, delta1, delta_phi)`` tuple of broadcastable arrays."""
    d0, d1, dphi = _as_error_arrays(err)
    return chain(slice_propagators(w, phase, d0, d1, dphi))


def delay_propagator(duration, delta0=0.0):
    delta0 = np.asarray(delta0, dtype=float)
    return su2_from_vector(0.0, 0.0, delta0, duration)


def _electron_hamiltonians(w, phase, err, dim):
    ang = phase + err.delta_phi
    c, s = np.cos(ang), np.sin(ang)
    amp = w.omega_max * (1 + err.delta1)
    ux = w.ux * c - w.uy * s
    uy = w.ux * s + w.uy * c
    h = amp * (ux[:, None, None] * SX + uy[:, None, None] * SY) + err.delta0 * SZ
    if dim == 2:
        return h
    eye = np.eye(dim // 2)
    return np.einsum("lij,kn->likjn", h, eye).reshape(len(w), dim, dim)


def sequence_propagator(seq, err=ZERO_ERROR, drift=None):
    """Total unitary of ``seq`` under ``err``.

    Without ``drift`` this is the 2x2 electron propagator, and ``err`` may
    also be a tuple of error arrays giving a stack of propagators. With a
    Hermitian ``drift`` of dimension 2n the electron terms act as
    ``S (x) 1_n`` and the drift stays on during both pulses and delays.
    """
    if drift is None:
        d0, d1, dphi = _as_error_arrays(err)
        total = np.broadcast_to(np.eye(2, dtype=complex), d0.shape + (2, 2))
        for seg in seq.segments:
            if isinstance(seg, Delay):
                if seg.duration > 0:
                    total = delay_propagator(seg.duration, d0) @ total
            else:
                total = pulse_propagator(seg.waveform, (d0, d1, dphi), seg.phase) @ total
        return np.array(total)

    drift = np.asarray(drift, dtype=complex)
    dim = drift.shape[0]
    if drift.shape != (dim, dim) or dim % 2:
        raise ValueError(f"drift must be square with even dimension, got {drift.shape}")
    total = np.eye(dim, dtype=complex)
    for seg in seq.segments:
        total = segment_propagator(seg, err, drift) @ total
    return total


def segment_propagator(seg, err, drift):
    """4x4 (or 2n x 2n) propagator of one segment with the drift active."""
    dim = drift.shape[0]
    if isinstance(seg, Delay):
        if seg.duration == 0:
            return np.eye(dim, dtype=complex)
        h = drift + err.delta0 * np.kron(SZ, np.eye(dim // 2))
        return propagate_eigh(h, seg.duration)
    w = seg.waveform
    hs = _electron_hamiltonians(w, seg.phase, err, dim) + drift
    evals, evecs = np.linalg.eigh(hs)
    slices = (evecs * np.exp(-1j * evals * w.dt)[:, None, :]) @ np.swapaxes(evecs.conj(), -1, -2)
    return chain(slices)


# -- file format -------------------------------------------------------------

def write_waveform(w, path):
    path = Path(path)
    lines = [f"# dt_ns={w.dt * 1e9!r} omega_max_radps={w.omega_max!r}"]
    lines.extend(f"{x!r} {y!r}" for x, y in zip(w.ux.tolist(), w.uy.tolist()))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_waveform(path, label=None):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing waveform header")
    header = dict(item.split("=", 1) for item in text[0].lstrip("#").split())
    try:
        dt = float(header["dt_ns"]) * 1e-9
        omega = float(header["omega_max_radps"])
    except KeyError as exc:
        raise ValueError(f"{path}: header lacks {exc.args[0]}") from None
    rows = [line.split() for line in text[1:] if line.strip() and not line.startswith("#")]
    data = np.array(rows, dtype=float).reshape(-1, 2)
    return Waveform(dt, data[:, 0], data[:, 1], omega, label or Path(path).stem)


def transfer_population(w, err=ZERO_ERROR):
    """|1> population after applying ``w`` to |0>; broadcasts over error arrays."""
    u = pulse_propagator(w, err)
    return np.abs(u[..., 1, 0]) ** 2


def builtin_pulses(theta=np.pi, omega=DEFAULT_OMEGA, dt=DEFAULT_DT) -> dict:
    """Square, CORPSE and BB1 realizations of ``(theta)_0``."""
    return {
        "square": square_pulse(theta, 0.0, omega, dt),
        "corpse": corpse(theta, omega, dt),
        "bb1": bb1(theta, omega, dt),
    }


def concatenate(waveforms: Sequence[Waveform]):
    ws = list(waveforms)
    if not ws:
        raise ValueError("nothing to concatenate")
    dt, omega = ws[0].dt, ws[0].omega_max
    if any(w.dt != dt or w.omega_max != omega for w in ws):
        raise ValueError("waveforms must share dt and omega_max")
    return Waveform(dt, np.concatenate([w.ux for w in ws]),
                    np.concatenate([w.uy for w in ws]), omega)
