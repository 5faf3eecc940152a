"""Single-qubit randomized benchmarking with Pauli randomization.

Each computational gate is a Pauli ``exp(+-i sigma_b pi/2)`` (b in 0, x, y, z)
followed by a Clifford ``exp(+-i sigma_u pi/4)`` (u in x, y). A sequence of
length l is ``P_{l+2} R P_{l+1} G_l P_l ... G_1 P_1`` where R is a pi/2
rotation chosen so the ideal final state is |0> or |1>.

Physical pulses exist only for x/y rotations. z rotations are virtual: they
advance a frame phase that is subtracted from every later pulse, which leaves
the final populations exactly as if an instantaneous perfect z rotation had
been applied.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from .noise import NoiseEnsemble, sample_error_points
from .pulses import ErrorPoint, Waveform, delay_propagator, pulse_propagator
from .quantum import KET0, rotation, rz

AXES = {"x": 0.0, "y": np.pi / 2}
PAULI_AXES = ("0", "x", "y", "z")
CLIFFORD_AXES = ("x", "y")
DEFAULT_LENGTHS = (2, 4, 8, 16, 32, 64, 128)


@dataclass(frozen=True)
class RBGate:
    kind: str  # "pauli", "clifford" or "recovery"
    axis: str
    sign: int

    def __post_init__(self):
        allowed = {"pauli": PAULI_AXES, "clifford": CLIFFORD_AXES,
                   "recovery": ("x", "y", "z")}
        if self.kind not in allowed or self.axis not in allowed[self.kind]:
            raise ValueError(f"invalid gate {self.kind}/{self.axis}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def angle(self):
        """Rotation angle; exp(s i sigma_a theta/2) rotates by theta about -s*a."""
        return np.pi if self.kind == "pauli" else np.pi / 2

    def unitary(self):
        if self.axis == "0":
            return self.sign * np.eye(2, dtype=complex)
        sigma_angle = self.angle / 2
        gen = {"x": np.array([[0, 1], [1, 0]]), "y": np.array([[0, -1j], [1j, 0]]),
               "z": np.array([[1, 0], [0, -1]])}[self.axis]
        return np.cos(sigma_angle) * np.eye(2) + 1j * self.sign * np.sin(sigma_angle) * gen

    def __str__(self):
        return f"{'+' if self.sign > 0 else '-'}{self.axis}{'/2' if self.angle < np.pi else ''}"


@dataclass(frozen=True)
class RBSequence:
    gates: tuple
    length: int
    expected_final: int
    group: int = 0
    randomization: int = 0

    def ideal_unitary(self):
        u = np.eye(2, dtype=complex)
        for g in self.gates:
            u = g.unitary() @ u
        return u


@dataclass(frozen=True)
class RBFit:
    F_a: float
    d_if: float
    F_a_err: float
    d_if_err: float
    identifiable: bool = True

    def as_dict(self):
        return {"F_a": self.F_a, "F_a_err": self.F_a_err, "d_if": self.d_if,
                "d_if_err": self.d_if_err, "identifiable": self.identifiable}


@dataclass
class RBCurve:
    lengths: list
    mean_fidelities: list
    std_errors: list
    fit: Optional[RBFit] = None
    per_sequence: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise ValueError("lengths must be strictly increasing")


def _random_gate(rng, kind, axes):
    return RBGate(kind, axes[rng.integers(len(axes))], 1 if rng.integers(2) else -1)


def _bloch(psi):
    rho = np.outer(psi, psi.conj())
    return np.real([rho[0, 1] + rho[1, 0], 1j * (rho[0, 1] - rho[1, 0]), rho[0, 0] - rho[1, 1]])


def recovery_options(psi):
    """The pi/2 gates (among +-x, +-y, +-z) mapping ``psi`` to a sigma_z eigenstate."""
    options = []
    for axis in ("x", "y", "z"):
        for sign in (1, -1):
            g = RBGate("recovery", axis, sign)
            if abs(abs(_bloch(g.unitary() @ psi)[2]) - 1) < 1e-9:
                options.append(g)
    return options


def generate_rb_suite(lengths=DEFAULT_LENGTHS, n_groups=10, n_paulis=4, seed=0):
    """Randomized sequences for every (gate string, length, Pauli dressing).

    One random string of ``max(lengths)`` Clifford gates is drawn per group
    and truncated at each length.
    """
    lengths = [int(v) for v in lengths]
    if not lengths or any(v < 1 for v in lengths):
        raise ValueError("lengths must be positive")
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be strictly increasing")
    rng = np.random.default_rng(seed)
    suite = []
    for j in range(n_groups):
        cliffords = [_random_gate(rng, "clifford", CLIFFORD_AXES) for _ in range(lengths[-1])]
        for length in lengths:
            psi = KET0.copy()
            for g in cliffords[:length]:
                psi = g.unitary() @ psi
            options = recovery_options(psi)
            recovery = options[rng.integers(len(options))]
            for m in range(n_paulis):
                paulis = [_random_gate(rng, "pauli", PAULI_AXES) for _ in range(length + 2)]
                gates = [paulis[0]]
                for k in range(length):
                    gates.extend([cliffords[k], paulis[k + 1]])
                gates.extend([recovery, paulis[length + 1]])
                seq = RBSequence(tuple(gates), length, 0, j, m)
                final = seq.ideal_unitary() @ KET0
                p1 = abs(final[1]) ** 2
                if abs(p1 - round(p1)) > 1e-9:
                    raise AssertionError("recovery gate failed to reach a sigma_z eigenstate")
                suite.append(RBSequence(tuple(gates), length, int(round(p1)), j, m))
    return suite


def _pulse_for(gate):
    """(waveform key, I/Q phase) of the physical pulse realizing ``gate``."""
    key = "pi" if gate.kind == "pauli" else "pi2"
    # exp(s i sigma_a theta/2) rotates about -s*a
    phase = AXES[gate.axis] + (np.pi if gate.sign > 0 else 0.0)
    return key, phase


def _error_arrays(err, omega):
    if isinstance(err, NoiseEnsemble):
        pts = sample_error_points(err, omega)
        return pts.delta0, pts.delta1, pts.delta_phi
    if isinstance(err, ErrorPoint):
        err = (err.delta0, err.delta1, err.delta_phi)
    return tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in np.broadcast_arrays(*err))


def simulate_rb(suite, family, err=ErrorPoint(), idle_identity=False, depolarizing=0.0):
    """Average final-state fidelity per length.

    ``family`` maps "pi" and "pi2" to x-phase waveforms; other axes are
    obtained by I/Q phase rotation. ``err`` is an ErrorPoint, a NoiseEnsemble
    or a tuple of error arrays; fidelities are averaged over error samples.
    ``depolarizing`` applies a depolarizing channel of that strength after
    every computational gate (a test model, not a physical error source).
    """
    missing = [k for k in ("pi", "pi2") if not isinstance(family.get(k), Waveform)]
    if missing:
        raise ValueError(f"pulse family lacks waveforms for {missing}")
    omega = family["pi"].omega_max
    d0, d1, dphi = _error_arrays(err, omega)
    base = {k: pulse_propagator(family[k], (d0, d1, dphi)) for k in ("pi", "pi2")}
    idle = delay_propagator(family["pi"].duration, d0) if idle_identity else None

    cache = {}

    def physical(key, phase):
        tag = (key, round(phase % (2 * np.pi), 12))
        u = cache.get(tag)
        if u is None:
            r = rz(phase)
            u = r @ base[key] @ r.conj().T
            cache[tag] = u
        return u

    groups = {}
    for seq in suite:
        u = np.broadcast_to(np.eye(2, dtype=complex), d0.shape + (2, 2))
        frame = 0.0
        for g in seq.gates:
            if g.axis == "0":
                if idle is not None:
                    u = idle @ u
                continue
            if g.axis == "z":
                frame += -g.sign * g.angle
                continue
            key, phase = _pulse_for(g)
            u = physical(key, phase - frame) @ u
        amp = u[..., :, 0]
        fid = np.mean(np.abs(amp[..., seq.expected_final]) ** 2)
        if depolarizing:
            fid = 0.5 + (1 - depolarizing) ** seq.length * (fid - 0.5)
        groups.setdefault(seq.length, []).append(float(fid))

    lengths = sorted(groups)
    means = [float(np.mean(groups[k])) for k in lengths]
    errs = [float(np.std(groups[k], ddof=1) / np.sqrt(len(groups[k])))
            if len(groups[k]) > 1 else 0.0 for k in lengths]
    return RBCurve(lengths, means, errs, per_sequence=groups)


def rb_model(lengths, F_a, d_if):
    lengths = np.asarray(lengths, dtype=float)
    return 0.5 + 0.5 * (1 - d_if) * (2 * F_a - 1) ** lengths


def fit_rb(lengths, means, sigma=None):
    """Least-squares fit of the RB decay with 1-sigma parameter errors.

    ``F_a`` is bounded to [0.5, 1] and ``d_if`` to [0, 1]. If the data carry
    no decay information (e.g. constant 0.5) the result is flagged
    ``identifiable=False``.
    """
    x = np.asarray(lengths, dtype=float)
    y = np.asarray(means, dtype=float)
    if len(np.unique(x)) < 3:
        raise ValueError("need at least three distinct lengths")
    w = np.ones_like(y) if sigma is None else 1 / np.maximum(np.asarray(sigma, float), 1e-12)

    def residual(p):
        return w * (rb_model(x, *p) - y)

    def jac(p):
        F, d = p
        q = 2 * F - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            dq = np.where(x > 0, x * np.power(q, np.maximum(x - 1, 0)), 0.0)
        jf = 0.5 * (1 - d) * dq * 2
        jd = -0.5 * np.power(q, x)
        return (w[:, None] * np.column_stack([jf, jd]))

    # start from a log-linear estimate of the decay rate
    excess = np.clip(y - 0.5, 1e-12, None)
    slope = np.polyfit(x, np.log(excess), 1)[0] if np.all(y > 0.5) else -1.0
    q0 = float(np.clip(np.exp(slope), 0.0, 1.0))
    d0 = float(np.clip(1 - 2 * excess[0] / max(q0 ** x[0], 1e-12), 0, 1))
    best = None
    for start in ((0.5 + q0 / 2, d0), (0.999, 0.05), (0.9, 0.1)):
        start = (float(np.clip(start[0], 0.5, 1.0)), float(np.clip(start[1], 0.0, 1.0)))
        res = least_squares(residual, start, jac=jac, bounds=([0.5, 0.0], [1.0, 1.0]),
                            x_scale=[1e-3, 1e-1], xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=2000)
        if best is None or res.cost < best.cost:
            best = res
    F, d = best.x
    J = jac(best.x)
    dof = max(len(x) - 2, 1)
    s2 = 2 * best.cost / dof if sigma is None else max(2 * best.cost / dof, 1.0)
    identifiable = (1 - d) * (2 * F - 1) > 1e-6 and np.linalg.matrix_rank(J) == 2
    try:
        cov = np.linalg.inv(J.T @ J) * s2
        errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        errs = np.array([np.inf, np.inf])
        identifiable = False
    if not identifiable:
        errs = np.array([np.inf, np.inf])
    return RBFit(float(F), float(d), float(errs[0]), float(errs[1]), bool(identifiable))


def run_rb(family, err=ErrorPoint(), lengths=DEFAULT_LENGTHS, n_groups=10, n_paulis=4,
           seed=0, idle_identity=False):
    suite = generate_rb_suite(lengths, n_groups, n_paulis, seed)
    curve = simulate_rb(suite, family, err, idle_identity=idle_identity)
    curve.fit = fit_rb(curve.lengths, curve.mean_fidelities)
    return curve
