"""Small-dimension quantum linear algebra.

Spin operators on the two-level subspace follow S_k = sigma_k / 2 and all
Hamiltonians are in angular-frequency units (rad/s), so ``exp(-1j * H * dt)``
is dimensionless when ``dt`` is in seconds.
"""

import numpy as np

HERMITIAN_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

SX = SIGMA_X / 2
SY = SIGMA_Y / 2
SZ = SIGMA_Z / 2

# |1><1| on the electron, used by the conditional hyperfine Hamiltonian
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)


class NotHermitianError(ValueError):
    pass


def hermiticity_residual(h):
    h = np.asarray(h)
    return float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0


def is_unitary(u, tol=1e-10):
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))) <= tol


def pauli_coefficients(h):
    """Split a 2x2 Hermitian matrix as ``c*I + hx*Sx + hy*Sy + hz*Sz``.

    Works on stacks of shape (..., 2, 2). Returns real arrays (c, hx, hy, hz).
    """
    h = np.asarray(h)
    c = 0.5 * (h[..., 0, 0] + h[..., 1, 1]).real
    hz = (h[..., 0, 0] - h[..., 1, 1]).real
    hx = 2 * h[..., 1, 0].real
    hy = 2 * h[..., 1, 0].imag
    return c, hx, hy, hz


def su2_from_vector(hx, hy, hz, dt, c=0.0):
    """Closed-form ``exp(-1j*dt*(c*I + hx*Sx + hy*Sy + hz*Sz))`` with S = sigma/2.

    All arguments broadcast; the result has shape ``broadcast + (2, 2)``.
    Uses ``cos(a/2) I - i sin(a/2) n.sigma`` with ``a = |h| dt`` and a
    series-safe ``sin(x)/x`` so that ``|h| = 0`` needs no special casing.
    """
    hx, hy, hz, dt, c = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (hx, hy, hz, dt, c)))
    norm = np.sqrt(hx * hx + hy * hy + hz * hz)
    half = 0.5 * norm * dt
    cos = np.cos(half)
    # np.sinc(x) = sin(pi x)/(pi x); s * h_k = sin(a/2) n_k
    s = 0.5 * dt * np.sinc(half / np.pi)
    out = np.empty(hx.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = cos - 1j * s * hz
    out[..., 1, 1] = cos + 1j * s * hz
    out[..., 0, 1] = -1j * s * hx - s * hy
    out[..., 1, 0] = -1j * s * hx + s * hy
    if np.any(c != 0):
        out *= np.exp(-1j * c * dt)[..., None, None]
    return out


def propagate(h, dt):
    """Return ``exp(-1j * h * dt)`` for a 2x2 or 4x4 Hermitian ``h``.

    The two-level case uses the SU(2) closed form, larger dimensions a
    Hermitian eigendecomposition.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    residual = hermiticity_residual(h)
    if residual > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(h)))):
        raise NotHermitianError(f"Hermiticity residual {residual:.3g}")
    if h.shape[0] == 2:
        c, hx, hy, hz = pauli_coefficients(h)
        return su2_from_vector(hx, hy, hz, dt, c)
    return propagate_eigh(h, dt)


def propagate_eigh(h, dt):
    """``exp(-1j*h*dt)`` by Hermitian eigendecomposition; no input checks."""
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * evals * dt)) @ evecs.conj().T


def as_density(state):
    """Promote a state vector to a density matrix; pass matrices through."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    if state.ndim == 2 and state.shape[0] == state.shape[1]:
        return state
    raise ValueError(f"not a state: shape {state.shape}")


def _psd_sqrt(rho):
    evals, evecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ evecs.conj().T


def state_fidelity(rho, rho0):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) rho0 sqrt(rho)))**2``.

    Pure vectors are accepted for either argument; when both are pure the
    squared overlap is returned directly.
    """
    a = np.asarray(rho, dtype=complex)
    b = np.asarray(rho0, dtype=complex)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.ndim == 1 and b.ndim == 1:
        return float(min(1.0, abs(np.vdot(a, b)) ** 2))
    if a.ndim == 1 or b.ndim == 1:
        psi, other = (a, b) if a.ndim == 1 else (b, a)
        return float(np.clip(np.real(np.vdot(psi, as_density(other) @ psi)), 0.0, 1.0))
    root = _psd_sqrt(a)
    inner = root @ b @ root
    evals = np.clip(np.linalg.eigvalsh((inner + inner.conj().T) / 2), 0.0, None)
    return float(np.clip(np.sum(np.sqrt(evals)) ** 2, 0.0, 1.0))


def expectation_population(state, level):
    """Population of basis ``level`` (diagonal entry of the density matrix)."""
    state = np.asarray(state, dtype=complex)
    dim = state.shape[0]
    if not 0 <= level < dim:
        raise IndexError(f"level {level} out of range for dimension {dim}")
    if state.ndim == 1:
        return float(abs(state[level]) ** 2)
    return float(state[level, level].real)


def random_hermitian(rng, dim, scale=1.0):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (a + a.conj().T) / 2


def rotation(theta, phi=0.0):
    """Ideal rotation by ``theta`` about the equatorial axis at azimuth ``phi``."""
    return su2_from_vector(np.cos(phi), np.sin(phi), 0.0, theta)


def rz(theta):
    return su2_from_vector(0.0, 0.0, 1.0, theta)
