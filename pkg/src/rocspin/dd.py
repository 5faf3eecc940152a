"""Dynamical-decoupling spectroscopy of 13C nuclear spins near an NV electron.

The electron (levels |0>, |1>) and one nuclear spin-1/2 evolve under the
conditional hyperfine drift::

    H_free = |0><0| (x) wl Iz + |1><1| (x) ((wl + a_par) Iz + a_perp Ix)

which stays on during the finite-width pi pulses. The electron starts in
|0>, a (pi/2)_x pulse prepares |x>, the XY4/XY8 train follows, and a final
(pi/2)_x maps the unperturbed state to |1>. The nuclear spin starts
maximally mixed. The detection frequency is f = 1/(4 tau).
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from .pulses import (DEFAULT_DT, DEFAULT_OMEGA, Delay, ErrorPoint, Pulse, PulseSequence,
                     Waveform, segment_propagator, square_pulse)
from .quantum import KET0, P0, P1, SX, SZ

GAMMA_C13 = 2 * np.pi * 1.0705e3  # rad/s per gauss
XY4_PHASES = (0.0, np.pi / 2, 0.0, np.pi / 2)
XY8_PHASES = XY4_PHASES + tuple(reversed(XY4_PHASES))
SEQUENCES = {"XY4": XY4_PHASES, "XY8": XY8_PHASES}
# (omega_h / 2pi in Hz, theta in degrees) of the five identified 13C spins
TABLE_SPINS = ((360e3, 56.0), (46e3, 178.3), (152e3, 134.0), (107e3, 122.0), (67e3, 26.0))


class NotIsolatedError(ValueError):
    pass


@dataclass(frozen=True)
class NuclearSpinParams:
    omega_h: float  # rad/s
    theta: float  # rad
    omega_h_err: float = 0.0
    theta_err: float = 0.0

    def __post_init__(self):
        if self.omega_h < 0:
            raise ValueError("omega_h must be >= 0")
        if not 0 <= self.theta <= np.pi:
            raise ValueError("theta must lie in [0, pi]")

    @property
    def a_par(self):
        return self.omega_h * np.cos(self.theta)

    @property
    def a_perp(self):
        return self.omega_h * np.sin(self.theta)

    @classmethod
    def from_components(cls, a_par, a_perp):
        return cls(float(np.hypot(a_par, a_perp)), float(np.arctan2(abs(a_perp), a_par)))

    @classmethod
    def from_khz_deg(cls, omega_h_khz, theta_deg):
        return cls(2 * np.pi * omega_h_khz * 1e3, np.deg2rad(theta_deg))


def table_spins():
    return [NuclearSpinParams(2 * np.pi * w, np.deg2rad(t)) for w, t in TABLE_SPINS]


def square_family(omega=DEFAULT_OMEGA, dt=DEFAULT_DT):
    return {"pi": square_pulse(np.pi, 0.0, omega, dt), "pi2": square_pulse(np.pi / 2, 0.0, omega, dt)}


@dataclass(frozen=True)
class SensingConfig:
    spins: tuple = (NuclearSpinParams.from_components(2 * np.pi * 305e3, 2 * np.pi * 136e3),)
    b0_gauss: float = 510.0
    gamma_n: float = GAMMA_C13
    sequence: str = "XY4"
    repeats: int = 40
    family: dict = field(default_factory=square_family)
    err: ErrorPoint = ErrorPoint()
    f_min: float = 0.4e6
    f_max: float = 1.6e6
    points: int = 721

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.sequence not in SEQUENCES:
            raise ValueError(f"unknown sequence {self.sequence!r}")
        missing = [k for k in ("pi", "pi2") if not isinstance(self.family.get(k), Waveform)]
        if missing:
            raise ValueError(f"pulse family lacks {missing}")
        if not 0 < self.f_min < self.f_max or self.points < 2:
            raise ValueError("need 0 < f_min < f_max and at least two points")

    @property
    def omega_l(self):
        return self.gamma_n * self.b0_gauss

    @property
    def frequencies(self):
        return np.linspace(self.f_min, self.f_max, self.points)

    @property
    def taus(self):
        return 1 / (4 * self.frequencies)

    @property
    def pulse_count(self):
        return len(SEQUENCES[self.sequence]) * self.repeats


@dataclass
class Spectrum:
    frequency_axis: np.ndarray  # Hz
    population: np.ndarray
    tau_axis: np.ndarray = None
    peaks: list = field(default_factory=list)

    def __post_init__(self):
        self.frequency_axis = np.asarray(self.frequency_axis, float)
        self.population = np.asarray(self.population, float)
        if self.tau_axis is None:
            self.tau_axis = 1 / (4 * self.frequency_axis)
        if not len(self.frequency_axis) == len(self.population) == len(self.tau_axis):
            raise ValueError("spectrum axes differ in length")


def hyperfine_drift(spin, omega_l):
    """4x4 conditional drift, electron (x) nucleus ordering."""
    iz, ix = SZ, SX
    return np.kron(P0, omega_l * iz) + np.kron(P1, (omega_l + spin.a_par) * iz + spin.a_perp * ix)


def effective_frequency(spin, omega_l):
    """Mean of the two conditional nuclear precession frequencies (rad/s)."""
    return 0.5 * (omega_l + np.hypot(omega_l + spin.a_par, spin.a_perp))


def build_dd_sequence(kind, repeats, tau, family):
    """(pi/2)_x, the XY train with pulse-centre spacing 2 tau, then (pi/2)_x."""
    phases = SEQUENCES[kind]
    pi = family["pi"]
    half = 0.5 * pi.duration
    if tau < half:
        raise ValueError(f"tau={tau:.3g}s is shorter than half the pi pulse ({half:.3g}s)")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    segs = [Pulse(family["pi2"], 0.0)]
    for _ in range(repeats):
        segs.append(Delay(tau - half))
        for k, ph in enumerate(phases):
            if k:
                segs.append(Delay(2 * tau - 2 * half))
            segs.append(Pulse(pi, ph))
        segs.append(Delay(tau - half))
    segs.append(Pulse(family["pi2"], 0.0))
    return PulseSequence(tuple(segs))


def _single_spin_population(spin, cfg, taus=None):
    """|1> population of the electron for one nuclear spin, vectorized over tau."""
    taus = cfg.taus if taus is None else np.asarray(taus, float)
    pi = cfg.family["pi"]
    half = 0.5 * pi.duration
    if np.any(taus < half):
        raise ValueError("tau shorter than half the pi pulse")
    drift = hyperfine_drift(spin, cfg.omega_l)
    err = cfg.err
    pulses = [segment_propagator(Pulse(pi, ph), err, drift) for ph in SEQUENCES[cfg.sequence]]
    prep = segment_propagator(Pulse(cfg.family["pi2"], 0.0), err, drift)

    h_delay = drift + err.delta0 * np.kron(SZ, np.eye(2))
    evals, evecs = np.linalg.eigh(h_delay)

    def delays(t):
        phase = np.exp(-1j * np.multiply.outer(t, evals))
        return (evecs[None] * phase[:, None, :]) @ evecs.conj().T[None]

    edge = delays(taus - half)
    inner = delays(2 * taus - 2 * half)
    unit = edge
    for k, p in enumerate(pulses):
        if k:
            unit = inner @ unit
        unit = p[None] @ unit
    unit = edge @ unit
    total = prep[None] @ np.linalg.matrix_power(unit, cfg.repeats) @ prep[None]
    psi0 = np.kron(KET0, np.array([1, 0]))
    psi1 = np.kron(KET0, np.array([0, 1]))
    pop = 0.0
    for psi in (psi0, psi1):
        out = total @ psi
        pop = pop + 0.5 * (np.abs(out[:, 2]) ** 2 + np.abs(out[:, 3]) ** 2)
    return np.clip(pop, 0.0, 1.0)


def simulate_spectrum(cfg, taus=None):
    """Electron |1> population versus tau.

    Several spins are combined by multiplying their coherence signals
    ``2P - 1`` (independent-spin approximation, exact for ideal pulses).
    """
    taus = cfg.taus if taus is None else np.asarray(taus, float)
    if not cfg.spins:
        spins = [NuclearSpinParams(0.0, 0.0)]
    else:
        spins = list(cfg.spins)
    signal = np.ones_like(taus)
    for spin in spins:
        signal = signal * (2 * _single_spin_population(spin, cfg, taus) - 1)
    pop = np.clip(0.5 * (1 + signal), 0.0, 1.0)
    return Spectrum(1 / (4 * taus), pop, taus)


def detect_peaks(spec, prominence=0.05):
    """Dips deeper than ``prominence`` below their local baseline.

    Depth is the topographic prominence of the dip; positions are refined by
    a parabola through the minimum and its neighbours.
    """
    if not 0 < prominence < 1:
        raise ValueError("prominence must lie in (0, 1)")
    f = spec.frequency_axis
    p = spec.population
    idx, props = find_peaks(-p, prominence=prominence)
    peaks = []
    for i, depth in zip(idx, props["prominences"]):
        fi = f[i]
        if 0 < i < len(p) - 1:
            denom = p[i - 1] - 2 * p[i] + p[i + 1]
            if denom > 0:
                shift = 0.5 * (p[i - 1] - p[i + 1]) / denom
                fi = f[i] + shift * (f[i + 1] - f[i - 1]) / 2
        peaks.append((float(fi), float(depth)))
    return peaks


def deepest_in_window(peaks, center, half_width):
    """(frequency, depth) of the deepest peak within ``center +- half_width``, or None."""
    inside = [pk for pk in peaks if abs(pk[0] - center) <= half_width]
    return max(inside, key=lambda pk: pk[1]) if inside else None


def response_amplitude(spec, background, center, half_width):
    """Largest |P - P_background| within ``center +- half_width``.

    ``background`` is the spectrum of the same sequence without nuclear
    spins. When pulse errors pull the electron-only signal far from 1 the
    spin's imprint can raise the population instead of lowering it; this
    measure is blind to that sign.
    """
    if not np.allclose(spec.frequency_axis, background.frequency_axis):
        raise ValueError("spectra must share the frequency axis")
    win = np.abs(spec.frequency_axis - center) <= half_width
    if not win.any():
        return 0.0
    return float(np.max(np.abs(spec.population[win] - background.population[win])))


def linewidth(cfg, frequency):
    """Approximate dip width (Hz) of a filter of ``cfg.pulse_count`` pulses."""
    return 2 * frequency / cfg.pulse_count


def _resonant_a_par(f_hz, a_perp, omega_l):
    """a_par placing the k = 1 resonance at ``f_hz`` for a given a_perp."""
    w1 = 2 * (2 * np.pi * f_hz) - omega_l
    return np.sqrt(max(w1 ** 2 - a_perp ** 2, 0.0)) - omega_l


def _symmetry_centre(f, p, f0, width):
    """Frequency about which the dip pattern is most nearly mirror symmetric.

    Candidates stay close enough to the observed dip ``f0`` that it lies in
    the compared span; flat baseline alone is trivially symmetric.
    """
    half = 4 * width
    best = (np.inf, f0)
    for c in f0 + width * np.linspace(-3.5, 3.5, 141):
        if c - half < f[0] or c + half > f[-1]:
            continue
        x = np.linspace(0, half, 64)
        cost = np.mean((np.interp(c + x, f, p) - np.interp(c - x, f, p)) ** 2)
        if cost < best[0]:
            best = (cost, c)
    return best[1]


def fit_hyperfine(spec, peak, cfg, window_widths=6.0, min_depth=1e-4, max_residual=0.1):
    """Fit (omega_h, theta) of one spin to an isolated dip.

    Uses the single-spin forward model with ``cfg``'s sequence and pulses on
    the spectrum points within ``window_widths`` linewidths of the resonance
    centre, which is located from the mirror symmetry of the dip pattern. A
    strongly coupled spin splits its own dip into side lobes, so isolation is
    judged against the fitted model: the fit is rejected if the window holds
    structure (another spin's dip) that one spin cannot reproduce, i.e. if
    the largest residual exceeds ``max_residual`` times the dip depth.
    """
    f0, depth = peak
    if depth < min_depth:
        raise ValueError(f"dip at {f0 / 1e6:.4f} MHz too shallow to fit (depth {depth:.2g})")
    width = linewidth(cfg, f0)
    wide = np.abs(spec.frequency_axis - f0) <= 8 * width
    centre = _symmetry_centre(spec.frequency_axis[wide], spec.population[wide], f0, width)
    sel = np.abs(spec.frequency_axis - centre) <= window_widths * width
    if sel.sum() < 5:
        raise ValueError("too few spectrum points around the peak")
    taus = spec.tau_axis[sel]
    data = spec.population[sel]
    one = replace(cfg, spins=())

    def model(params):
        spin = NuclearSpinParams.from_components(params[0], abs(params[1]))
        return _single_spin_population(spin, one, taus)

    def residual(params):
        return model(params) - data

    # seed: a split dip is mirror symmetric about the resonance, so locate
    # the centre from the data, then scan a_perp (the lobe pattern repeats
    # in a_perp with a period set by the pulse count) with a_par tied to it
    step = 0.25 * 2 * np.pi * centre / cfg.pulse_count
    grid = np.union1d(2 * np.pi * np.geomspace(0.5e3, 500e3, 31),
                      np.arange(step, 2 * np.pi * 500e3, step))
    seeds = []
    for fc in centre + np.array([-0.5, 0.0, 0.5]) * width:
        for a_perp in grid:
            a_par = _resonant_a_par(fc, a_perp, cfg.omega_l)
            seeds.append((np.sum(residual((a_par, a_perp)) ** 2), a_par, a_perp))
    seeds.sort(key=lambda item: item[0])
    scale = 2 * np.pi * 1e3
    res = None
    for _, a_par, a_perp in seeds[:3]:
        trial = least_squares(lambda q: residual(q * scale), np.array([a_par, a_perp]) / scale,
                              xtol=1e-12, ftol=1e-14, gtol=1e-14, max_nfev=400)
        if res is None or trial.cost < res.cost:
            res = trial
    a_par, a_perp = res.x * scale
    a_perp = abs(a_perp)
    if a_perp < 1e-9:
        raise ValueError("fit found no transverse coupling")
    misfit = np.max(np.abs(res.fun))
    if misfit > max_residual * depth:
        f = spec.frequency_axis[sel]
        extra = detect_peaks(Spectrum(f, 1 - np.abs(res.fun), taus), 0.5 * misfit)
        where = ", ".join(f"{pk[0] / 1e6:.4f} MHz" for pk in extra) or "the window"
        raise NotIsolatedError(
            f"peak at {f0 / 1e6:.4f} MHz is not a single isolated resonance: "
            f"single-spin model misses {misfit:.3f} of population near {where}")
    spin = NuclearSpinParams.from_components(a_par, a_perp)
    # 1-sigma from the Jacobian in (a_par, a_perp), mapped to (omega_h, theta)
    dof = max(sel.sum() - 2, 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2 * scale ** 2
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    w = spin.omega_h
    jac = np.array([[a_par / w, a_perp / w], [-a_perp / w ** 2, a_par / w ** 2]])
    cov_p = jac @ cov @ jac.T
    err = np.sqrt(np.clip(np.diag(cov_p), 0, None))
    return NuclearSpinParams(spin.omega_h, spin.theta, float(err[0]), float(err[1]))


def write_spectrum_csv(spec, path):
    path = Path(path)
    lines = ["tau_s,f_hz,population"]
    lines.extend(f"{t:.12g},{f:.12g},{p:.9g}"
                 for t, f, p in zip(spec.tau_axis, spec.frequency_axis, spec.population))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_spectrum_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Spectrum(data[:, 1], data[:, 2], data[:, 0])


def write_peaks_json(peaks, path, extra=None):
    path = Path(path)
    body = {"peaks": [{"f_hz": f, "depth": d} for f, d in peaks]}
    if extra:
        body.update(extra)
    path.write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")
    return path
