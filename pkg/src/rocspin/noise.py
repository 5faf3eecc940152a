"""Quasi-static noise: Gaussian detuning, Lorentzian Rabi error.

Rates are angular (rad/s). Within one shot the errors are constant; across
shots they are drawn from the distributions below, and observables are
averaged over samples.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from .pulses import (Delay, ErrorPoint, Pulse, PulseSequence, sequence_propagator,
                     square_pulse)
from .quantum import KET0, as_density

CHUNK = 1 << 16
# guard against tan() overflow only; Lorentzian tails are otherwise kept
LORENTZ_GUARD = 5e3


@dataclass(frozen=True)
class GaussianDetuning:
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")

    @property
    def t2star(self):
        return np.inf if self.sigma == 0 else np.sqrt(2) / self.sigma


@dataclass(frozen=True)
class LorentzianRabi:
    gamma: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError("gamma must be >= 0")

    @property
    def t2prime(self):
        return np.inf if self.gamma == 0 else 1 / self.gamma


@dataclass(frozen=True)
class NoiseEnsemble:
    detuning: GaussianDetuning = GaussianDetuning(0.0)
    rabi: LorentzianRabi = LorentzianRabi(0.0)
    sample_count: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


@dataclass(frozen=True)
class ErrorSamples:
    """Arrays of error points, usable wherever an error tuple is accepted."""
    delta0: np.ndarray
    delta1: np.ndarray
    delta_phi: np.ndarray

    def __iter__(self):
        return iter((self.delta0, self.delta1, self.delta_phi))

    def __len__(self):
        return len(self.delta0)

    def points(self):
        return [ErrorPoint(float(a), float(b), float(c)) for a, b, c in zip(*self)]


def sigma_from_t2star(t2star):
    return np.sqrt(2) / t2star


def gamma_from_t2prime(t2prime):
    return 1 / t2prime


def sigma_from_mhz(sigma_mhz):
    """Angular standard deviation for a spread quoted in MHz (cycles)."""
    return 2 * np.pi * sigma_mhz * 1e6


def _streams(seed, n):
    """Independent generators, one per CHUNK of sample indices."""
    children = np.random.SeedSequence(seed).spawn((n + CHUNK - 1) // CHUNK)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _draw(seed, n):
    gauss = np.empty(n)
    unif = np.empty(n)
    for k, rng in enumerate(_streams(seed, n)):
        lo, hi = k * CHUNK, min(n, (k + 1) * CHUNK)
        gauss[lo:hi] = rng.standard_normal(hi - lo)
        unif[lo:hi] = rng.random(hi - lo)
    return gauss, unif


def sample_detuning(sigma, n, seed):
    return sigma * _draw(seed, n)[0]


def _lorentz(gamma, u):
    with np.errstate(over="ignore", invalid="ignore"):
        x = gamma * np.tan(np.pi * (u - 0.5))
    bound = LORENTZ_GUARD * gamma
    return np.clip(np.nan_to_num(x, nan=0.0, posinf=bound, neginf=-bound), -bound, bound)


def sample_lorentzian(gamma, n, seed):
    """Lorentzian samples (HWHM ``gamma``) by the inverse CDF."""
    return _lorentz(gamma, _draw(seed, n)[1])


def sample_error_points(ens, omega):
    """Deterministic error samples; ``delta1`` is fractional (divided by ``omega``)."""
    n = ens.sample_count
    gauss, unif = _draw(ens.seed, n)
    d0 = ens.detuning.sigma * gauss
    frac = _lorentz(ens.rabi.gamma, unif) / omega
    # the amplitude cannot go negative; such samples are folded at -1
    frac = np.maximum(frac, -1 + 1e-12)
    return ErrorSamples(d0, frac, np.zeros(n))


def fid_probability(t, delta, sigma):
    """|0> population after ideal pi/2 - t - pi/2, averaged over Gaussian detuning."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return 0.5 - 0.5 * np.exp(-0.5 * (sigma * t) ** 2) * np.cos(delta * t)


def rabi_decay_envelope(t, gamma):
    """Lorentzian average of cos(delta1 t): exp(-gamma t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return np.exp(-gamma * t)


def rabi_probability(t, omega, gamma):
    """Ensemble |0> population of a resonant Rabi drive."""
    return 0.5 + 0.5 * np.cos(omega * np.asarray(t, float)) * rabi_decay_envelope(t, gamma)


def _chunked_mean(fn, samples, t):
    """Mean over samples of fn(samples[:, None] * t) without a huge temporary."""
    t = np.asarray(t, dtype=float)
    acc = np.zeros_like(t)
    step = max(1, 2_000_000 // max(t.size, 1))
    for lo in range(0, samples.size, step):
        acc += fn(np.multiply.outer(samples[lo:lo + step], t)).sum(axis=0)
    return acc / samples.size


def fid_monte_carlo(t, delta, ens):
    """Sampled FID with ideal instantaneous pi/2 pulses."""
    d0 = sample_detuning(ens.detuning.sigma, ens.sample_count, ens.seed)
    t = np.asarray(t, dtype=float)
    # cos((D+d)t) = cos(Dt)cos(dt) - sin(Dt)sin(dt)
    c = _chunked_mean(np.cos, d0, t)
    s = _chunked_mean(np.sin, d0, t)
    return 0.5 - 0.5 * (np.cos(delta * t) * c - np.sin(delta * t) * s)


def rabi_monte_carlo(t, omega, ens):
    """Sampled resonant Rabi oscillation under Lorentzian amplitude noise."""
    d1 = sample_lorentzian(ens.rabi.gamma, ens.sample_count, ens.seed)
    t = np.asarray(t, dtype=float)
    c = _chunked_mean(np.cos, d1, t)
    s = _chunked_mean(np.sin, d1, t)
    return 0.5 + 0.5 * (np.cos(omega * t) * c - np.sin(omega * t) * s)


def fit_t2star(t, population, delta):
    """Fit ``1/2 - A/2 exp(-(t/T)^2) cos(D t)``; returns (T, T_err, D)."""
    t = np.asarray(t, float)
    y = np.asarray(population, float)

    def model(t, T, A, D):
        return 0.5 - 0.5 * A * np.exp(-(t / T) ** 2) * np.cos(D * t)

    t0 = max(t.max() / 3, 1e-12)
    p, cov = curve_fit(model, t, y, p0=[t0, 1.0, delta])
    return float(abs(p[0])), float(np.sqrt(cov[0, 0])), float(p[2])


def fit_t2prime(t, population, omega):
    """Fit ``1/2 + A/2 cos(omega t) exp(-t/T)`` with known drive; returns (T, T_err)."""
    t = np.asarray(t, float)
    y = np.asarray(population, float)

    def model(t, T, A):
        return 0.5 + 0.5 * A * np.cos(omega * t) * np.exp(-t / T)

    p, cov = curve_fit(model, t, y, p0=[max(t.max(), 1e-12), 1.0])
    return float(p[0]), float(np.sqrt(cov[0, 0]))


def ensemble_average_population(seq, ens, initial=KET0, level=0, omega=None):
    """Mean population of ``level`` after ``seq`` over the ensemble's error samples."""
    if not isinstance(seq, PulseSequence):
        raise TypeError("expected a PulseSequence")
    if omega is None:
        pulses = seq.pulses
        omega = pulses[0].waveform.omega_max if pulses else 1.0
    err = sample_error_points(ens, omega)
    u = sequence_propagator(seq, tuple(err))
    rho = as_density(initial)
    final = u @ rho @ np.swapaxes(u.conj(), -1, -2)
    return float(np.mean(final[..., level, level].real))


def fid_sequence(t, omega, dt):
    """Square pi/2 - delay - pi/2 sequence (finite-width pulses)."""
    half = square_pulse(np.pi / 2, 0.0, omega, dt)
    return PulseSequence((Pulse(half), Delay(t), Pulse(half)))
