"""Robust optimal control (ROC) pulse synthesis.

The fitness of a waveform ``u`` is the gate overlap with the target minus
weighted squared norms of the propagator's derivatives with respect to the
two noise channels, evaluated at zero noise::

    phi(u) = |Tr(U R^dag)|^2 / d^2 - sum_m sum_ij mu[m][i][j] ||D^(m)(V_i, V_j)||^2 / d

Channel 1 is detuning (generator Sz, noise amplitude delta0) and channel 2
the fractional Rabi error (generator omega * (ux Sx + uy Sy)). Derivatives are
taken with respect to the scaled amplitudes ``delta0 / eps1`` and
``delta1 / eps2`` so the weights are dimensionless.

Propagators and all their derivatives up to order ``m_max`` are carried as
*jets*: truncated polynomials in the two scaled noise amplitudes whose
coefficients are d x d matrices. A jet is represented by its block matrix of
left multiplication, which turns products of jets into matrix products and
lets ``expm`` of one block matrix yield a slice propagator together with all
of its noise derivatives exactly.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .pulses import DEFAULT_DT, DEFAULT_OMEGA, ErrorPoint, Waveform, pulse_propagator
from .quantum import SX, SY, SZ, rotation

log = logging.getLogger(__name__)

MAX_ORDER = 4


def _monomials(order):
    """Exponent pairs (k1, k2) of x1^k1 x2^k2 with k1 + k2 <= order."""
    return [(m - k, k) for m in range(order + 1) for k in range(m + 1)]


def _product_table(monos):
    index = {m: k for k, m in enumerate(monos)}
    table = []
    for a, ma in enumerate(monos):
        for b, mb in enumerate(monos):
            c = index.get((ma[0] + mb[0], ma[1] + mb[1]))
            if c is not None:
                table.append((a, b, c))
    return table


def default_weights():
    """Default penalty weights by derivative order.

    First order: both channels, no cross term. Orders two and three: a
    scalar applied to every pure and mixed derivative, which is what keeps
    the corners of a +-10% detuning x Rabi-error box flat.
    """
    return {1: [[1.0, 0.0], [0.0, 1.0]], 2: 0.5, 3: 0.1}


@dataclass
class RocConfig:
    target: np.ndarray = field(default_factory=lambda: rotation(np.pi, 0.0))
    slice_count: int = 200
    dt: float = DEFAULT_DT
    omega_max: float = DEFAULT_OMEGA
    epsilon1: float = 0.1 * DEFAULT_OMEGA
    epsilon2: float = 0.1
    m_max: int = 3
    mu: dict = field(default_factory=default_weights)
    max_iters: int = 1500
    fitness_goal: float = 0.99999
    step_init: float = 1e-3
    stall_window: int = 200
    stall_tol: float = 1e-12
    direction: str = "lbfgs"
    memory: int = 20
    smoothness: float = 0.0
    clamp_ends: bool = False
    seed: int = 0

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=complex)
        if self.slice_count < 2:
            raise ValueError("slice_count must be at least 2")
        if not 1 <= self.m_max <= MAX_ORDER:
            raise ValueError(f"m_max must be in 1..{MAX_ORDER}, got {self.m_max}")
        if self.direction not in ("lbfgs", "gradient"):
            raise ValueError(f"unknown search direction {self.direction!r}")
        if self.fitness_goal > 1:
            raise ValueError("fitness_goal cannot exceed 1")
        if not (self.dt > 0 and self.omega_max > 0):
            raise ValueError("dt and omega_max must be positive")
        mu = {int(k): np.asarray(v, dtype=float) for k, v in self.mu.items()}
        for order, w in mu.items():
            if order < 1 or np.any(w < 0):
                raise ValueError(f"mu[{order}] must be non-negative with order >= 1")
            if w.shape not in ((), (2, 2)) or (order > 2 and w.shape != ()):
                raise ValueError(f"mu[{order}] must be a 2x2 array (order <= 2) or a scalar")
        self.mu = mu


@dataclass
class RocResult:
    waveform: Waveform
    fitness_trace: list
    final_fitness: float
    converged: bool
    iterations: int = 0


class _Evaluator:
    """Jet algebra for one configuration: fitness and exact gradient."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.d = cfg.target.shape[0]
        if self.d != 2:
            raise ValueError("ROC synthesis is implemented for two-level targets")
        self.order = cfg.m_max
        self.monos = _monomials(self.order)
        self.n = len(self.monos)
        self.table = _product_table(self.monos)
        self.idx = {m: k for k, m in enumerate(self.monos)}
        self.terms = self._terms()
        size = self.n * self.d
        self.size = size
        # scaled noise generators per unit control
        self.b1 = -1j * cfg.dt * cfg.epsilon1 * SZ
        self.ax = -1j * cfg.dt * cfg.omega_max * SX
        self.ay = -1j * cfg.dt * cfg.omega_max * SY
        # block-matrix templates: X(u) = ux * Ex + uy * Ey + Z
        self.ex = self._rep({(0, 0): self.ax, (0, 1): cfg.epsilon2 * self.ax})
        self.ey = self._rep({(0, 0): self.ay, (0, 1): cfg.epsilon2 * self.ay})
        self.z = self._rep({(1, 0): self.b1})

    def _rep(self, coeffs):
        """Left-multiplication block matrix of a jet given as {monomial: block}."""
        d = self.d
        out = np.zeros((self.size, self.size), dtype=complex)
        for a, b, c in self.table:
            block = coeffs.get(self.monos[a])
            if block is not None:
                out[c * d:(c + 1) * d, b * d:(b + 1) * d] += block
        return out

    def generators(self, ux, uy):
        return ux[:, None, None] * self.ex + uy[:, None, None] * self.ey + self.z

    def total_jet(self, ux, uy):
        slices = expm(self.generators(ux, uy))
        col = slices[0][:, :self.d]
        for k in range(1, len(ux)):
            col = slices[k] @ col
        return col

    def coefficients(self, col):
        d = self.d
        return {m: col[k * d:(k + 1) * d] for m, k in self.idx.items()}

    def derivative(self, coeffs, channels):
        """Mixed derivative of the total propagator along ``channels``
        (tuple of channel indices 0/1) at zero noise."""
        if len(channels) == 0:
            return coeffs[(0, 0)]
        counts = [channels.count(0), channels.count(1)]
        mono = tuple(counts)
        if sum(mono) > self.order:
            raise ValueError(f"derivative order {sum(mono)} exceeds m_max={self.order}")
        factor = float(np.prod([math.factorial(c) for c in counts]))
        return factor * coeffs[mono]

    def _terms(self):
        """Penalty terms as (weight, [(monomial, derivative factor), ...]).

        A 2x2 weight matrix for order m <= 2 follows the channel-pair
        indexing; for m = 1 the off-diagonal entries weight the derivative
        along the summed direction V1 + V2. A scalar weight applies to every
        pure and mixed derivative of that order.
        """
        terms = []
        for order, w in sorted(self.cfg.mu.items()):
            if order > self.order:
                continue
            if w.shape == ():
                if w > 0:
                    for k2 in range(order + 1):
                        mono = (order - k2, k2)
                        fac = math.factorial(mono[0]) * math.factorial(mono[1])
                        terms.append((float(w), [(mono, float(fac))]))
                continue
            pure = [(order, 0), (0, order)]
            for i in range(2):
                if w[i, i] > 0:
                    terms.append((w[i, i], [(pure[i], float(math.factorial(order)))]))
            off = w[0, 1] + w[1, 0]
            if off > 0:
                if order == 1:
                    terms.append((off, [((1, 0), 1.0), ((0, 1), 1.0)]))
                else:
                    terms.append((off, [((1, 1), 1.0)]))
        return terms

    def fitness_from(self, coeffs, want_grad=False):
        d = self.d
        target = self.cfg.target
        u0 = coeffs[(0, 0)]
        t = np.trace(target.conj().T @ u0)
        phi = abs(t) ** 2 / d ** 2
        grads = {m: np.zeros((d, d), dtype=complex) for m in self.monos}
        grads[(0, 0)] += (2 / d ** 2) * t * target
        for weight, parts in self.terms:
            dmat = sum(f * coeffs[m] for m, f in parts)
            phi -= weight * np.real(np.vdot(dmat, dmat)) / d
            if want_grad:
                g = -(2 * weight / d) * dmat
                for m, f in parts:
                    grads[m] += f * g
        return (phi, grads) if want_grad else phi

    def smooth_penalty(self, ux, uy):
        s = self.cfg.smoothness
        if s <= 0:
            return 0.0, np.zeros_like(ux), np.zeros_like(uy)
        dx, dy = np.diff(ux), np.diff(uy)
        pen = s * (np.sum(dx ** 2) + np.sum(dy ** 2))
        gx = np.zeros_like(ux)
        gy = np.zeros_like(uy)
        gx[:-1] -= 2 * s * dx
        gx[1:] += 2 * s * dx
        gy[:-1] -= 2 * s * dy
        gy[1:] += 2 * s * dy
        return pen, gx, gy

    def fitness(self, ux, uy):
        phi = self.fitness_from(self.coefficients(self.total_jet(ux, uy)))
        return phi - self.smooth_penalty(ux, uy)[0]

    def fitness_and_gradient(self, ux, uy):
        d = self.d
        L = len(ux)
        gens = self.generators(ux, uy)
        slices = expm(gens)
        # forward first-block-columns C_l = R_{l-1}...R_1 [:, :d]
        cols = np.empty((L, self.size, d), dtype=complex)
        col = np.zeros((self.size, d), dtype=complex)
        col[:d] = np.eye(d)
        for k in range(L):
            cols[k] = col
            col = slices[k] @ col
        coeffs = self.coefficients(col)
        phi, grads = self.fitness_from(coeffs, want_grad=True)
        lam = np.concatenate([grads[m] for m in self.monos], axis=0)
        # backward adjoints Lambda_l = (R_L...R_{l+1})^H G
        lams = np.empty_like(cols)
        for k in range(L - 1, -1, -1):
            lams[k] = lam
            lam = slices[k].conj().T @ lam
        m_mats = lams @ np.swapaxes(cols.conj(), -1, -2)
        # Tr(M^H dexp_X[E]) = Tr(dexp_X[M^H] E); dexp via block exponential
        big = np.zeros((L, 2 * self.size, 2 * self.size), dtype=complex)
        big[:, :self.size, :self.size] = gens
        big[:, self.size:, self.size:] = gens
        big[:, :self.size, self.size:] = np.swapaxes(m_mats.conj(), -1, -2)
        k_mats = expm(big)[:, :self.size, self.size:]
        gx = np.real(np.einsum("lij,ji->l", k_mats, self.ex))
        gy = np.real(np.einsum("lij,ji->l", k_mats, self.ey))
        pen, px, py = self.smooth_penalty(ux, uy)
        return phi - pen, gx - px, gy - py


def _project(ux, uy, clamp_ends):
    amp = np.hypot(ux, uy)
    scale = np.where(amp > 1, 1 / np.maximum(amp, 1e-300), 1.0)
    ux, uy = ux * scale, uy * scale
    if clamp_ends:
        ux[[0, -1]] = 0.0
        uy[[0, -1]] = 0.0
    return ux, uy


def controlled_propagator(u, err=ErrorPoint()):
    """Single-pulse propagator; same physics as the pulse-model routines."""
    return pulse_propagator(u, err)


def directional_derivative(u, channels, order=None, epsilon1=1.0, epsilon2=1.0):
    """Mixed derivative of the pulse propagator at zero noise.

    ``channels`` is a sequence of channel indices (0 = detuning, 1 = Rabi
    error) whose length is the derivative order. With the default unit
    scales the derivative is with respect to delta0 (rad/s) and the
    fractional Rabi error delta1.
    """
    channels = tuple(int(c) for c in channels)
    if order is not None and order != len(channels):
        raise ValueError("order must equal the number of channels")
    if len(channels) > 2 or any(c not in (0, 1) for c in channels):
        raise ValueError(f"unsupported derivative channels {channels}")
    if len(u) == 0:
        return np.zeros((2, 2), dtype=complex)
    cfg = RocConfig(target=np.eye(2), slice_count=max(2, len(u)), dt=u.dt,
                    omega_max=u.omega_max, epsilon1=epsilon1, epsilon2=epsilon2,
                    m_max=max(1, len(channels)))
    ev = _Evaluator(cfg)
    coeffs = ev.coefficients(ev.total_jet(u.ux, u.uy))
    return ev.derivative(coeffs, channels)


def fitness(u, cfg):
    ev = _Evaluator(cfg)
    return float(ev.fitness(np.asarray(u.ux), np.asarray(u.uy)))


def fitness_gradient(u, cfg):
    """Return ``(phi, dphi/dux, dphi/duy)`` for waveform ``u``."""
    ev = _Evaluator(cfg)
    phi, gx, gy = ev.fitness_and_gradient(np.asarray(u.ux, float), np.asarray(u.uy, float))
    return float(phi), gx, gy


def initial_waveform(cfg, rng=None):
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    ux = rng.uniform(-0.1, 0.1, cfg.slice_count)
    uy = rng.uniform(-0.1, 0.1, cfg.slice_count)
    ux, uy = _project(ux, uy, cfg.clamp_ends)
    return Waveform(cfg.dt, ux, uy, cfg.omega_max, label="roc")


def _lbfgs_direction(grad, history):
    """Two-loop recursion for ascent: approximates -H^{-1} g of -phi."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(history):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if history:
        s, y, _ = history[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(history, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def optimize(cfg, initial=None, callback=None):
    """Gradient ascent on the ROC fitness with a backtracking line search.

    ``initial`` may be a Waveform, a seed, or None (use ``cfg.seed``). The
    search direction is the gradient preconditioned by a limited-memory
    quasi-Newton estimate (``cfg.direction == "lbfgs"``) or the raw gradient
    (``"gradient"``). Each step is projected back onto |u| <= 1 per slice.
    ``converged`` is True only if ``cfg.fitness_goal`` was reached.
    """
    if initial is None or isinstance(initial, (int, np.integer)):
        seed = cfg.seed if initial is None else int(initial)
        w0 = initial_waveform(cfg, np.random.default_rng(seed))
    else:
        w0 = initial
        if len(w0) != cfg.slice_count:
            raise ValueError("initial waveform length differs from slice_count")
    ev = _Evaluator(cfg)
    L = cfg.slice_count
    ux, uy = _project(np.array(w0.ux, float), np.array(w0.uy, float), cfg.clamp_ends)
    x = np.concatenate([ux, uy])
    phi, gx, gy = ev.fitness_and_gradient(ux, uy)
    g = np.concatenate([gx, gy])
    trace = [float(phi)]
    history = []
    grad_alpha = cfg.step_init
    stall = 0
    it = 0
    while it < cfg.max_iters and phi < cfg.fitness_goal:
        it += 1
        if not np.any(g):
            break
        direction = g
        alpha = grad_alpha
        use_qn = False
        if cfg.direction == "lbfgs" and history:
            direction = _lbfgs_direction(g, history)
            if np.dot(direction, g) <= 0:
                history.clear()
                direction = g
            else:
                alpha = 1.0
                use_qn = True
        accepted = False
        for _ in range(50):
            nx, ny = _project(x[:L] + alpha * direction[:L],
                              x[L:] + alpha * direction[L:], cfg.clamp_ends)
            new_phi = ev.fitness(nx, ny)
            step = np.concatenate([nx, ny]) - x
            # Armijo condition on the projected step
            if new_phi > phi and new_phi >= phi + 1e-4 * np.dot(g, step):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if history:
                history.clear()
                continue
            log.debug("line search failed at iteration %d", it)
            break
        improvement = new_phi - phi
        new_x = np.concatenate([nx, ny])
        phi, gx, gy = ev.fitness_and_gradient(nx, ny)
        new_g = np.concatenate([gx, gy])
        s_vec, y_vec = new_x - x, g - new_g
        sy = np.dot(s_vec, y_vec)
        if cfg.direction == "lbfgs" and sy > 1e-12 * np.dot(y_vec, y_vec):
            history.append((s_vec, y_vec, 1.0 / sy))
            if len(history) > cfg.memory:
                history.pop(0)
        if not use_qn:
            grad_alpha = alpha * 2.0
        x, g = new_x, new_g
        trace.append(float(phi))
        if callback is not None:
            callback(it, phi)
        stall = 0 if improvement > cfg.stall_tol else stall + 1
        if stall >= cfg.stall_window:
            break
    w = Waveform(cfg.dt, x[:L], x[L:], cfg.omega_max, label="roc")
    return RocResult(w, trace, float(phi), bool(phi >= cfg.fitness_goal), it)
