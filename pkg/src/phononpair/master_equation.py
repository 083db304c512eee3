"""Small dense Lindblad integrator used as an independent oracle.

Deliberately simple and self-contained: dense operators, fixed-step RK4, and
a brute-force steady state from the Liouvillian null space.  The trajectory
simulator must reproduce these unconditional results; sharing no operator
construction or stepping code with it is the point, so everything here is
built from scratch on purpose.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .params import DerivedParams


def annihilation(dim: int) -> np.ndarray:
    if dim < 2:
        raise ParameterError("need at least two levels")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)


def thermal_state(mean: float, dim: int) -> np.ndarray:
    """Truncated thermal density matrix with the given (untruncated) mean."""
    if mean < 0:
        raise ParameterError("mean occupancy must be >= 0")
    if mean == 0:
        pops = np.zeros(dim)
        pops[0] = 1.0
    else:
        pops = (mean / (1.0 + mean)) ** np.arange(dim) / (1.0 + mean)
        pops = pops / pops.sum()
    return np.diag(pops).astype(complex)


def pair_operators(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation operators of the two oscillators on the product space."""
    a = annihilation(n_max + 1)
    eye = np.eye(n_max + 1)
    return np.kron(a, eye), np.kron(eye, a)


def unconditional_system(
    d: DerivedParams, n_max: int, delta: float = 0.0
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Hamiltonian and collapse operators for the unmonitored pair.

    Detector labels never enter the unconditional dynamics: the beam splitter
    only reshuffles output channels, so each oscillator sees one downward
    channel at total rate gamma (n_th + 1) + a_minus and one upward channel
    at gamma n_th + a_plus.  H = delta c2^dag c2 in the frame rotating at the
    first oscillator's sideband.
    """
    c1, c2 = pair_operators(n_max)
    down = d.gamma * (d.n_th + 1.0) + d.a_minus
    up = d.gamma * d.n_th + d.a_plus
    collapse = [np.sqrt(down) * c1, np.sqrt(down) * c2]
    if up > 0:
        collapse += [np.sqrt(up) * c1.conj().T, np.sqrt(up) * c2.conj().T]
    h = delta * (c2.conj().T @ c2)
    return h, collapse


def lindblad_rhs(h: np.ndarray, collapse: list[np.ndarray]):
    """Right-hand side drho/dt for the given Hamiltonian and collapse set."""
    k = -1j * np.asarray(h, dtype=complex)
    for op in collapse:
        k -= 0.5 * (op.conj().T @ op)
    k_dag = k.conj().T
    daggers = [op.conj().T for op in collapse]

    def rhs(rho: np.ndarray) -> np.ndarray:
        out = k @ rho + rho @ k_dag
        for op, op_dag in zip(collapse, daggers):
            out += op @ rho @ op_dag
        return out

    return rhs

def evolve_fixed_step(
    h: np.ndarray,
    collapse: list[np.ndarray],
    rho0: np.ndarray,
    times: np.ndarray,
    dt: float,
) -> np.ndarray:
    """RK4-integrate the master equation, returning rho at the given times.

    `times` must start at 0 and increase; each interval is subdivided into
    fixed steps no longer than dt.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ParameterError("times must start at 0 and increase")
    rhs = lindblad_rhs(h, collapse)
    rho = np.array(rho0, dtype=complex)
    out = np.empty((len(times),) + rho.shape, dtype=complex)
    out[0] = rho
    for i in range(1, len(times)):
        span = times[i] - times[i - 1]
        n_steps = max(1, int(np.ceil(span / dt)))
        step = span / n_steps
        for _ in range(n_steps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * step * k1)
            k3 = rhs(rho + 0.5 * step * k2)
            k4 = rhs(rho + step * k3)
            rho = rho + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = rho
    return out


def steady_state(h: np.ndarray, collapse: list[np.ndarray]) -> np.ndarray:
    """Null vector of the dense Liouvillian, hermitized and trace-normalized."""
    dim = h.shape[0]
    eye = np.eye(dim)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op in collapse:
        opdop = op.conj().T @ op
        sup += np.kron(op, op.conj())
        sup -= 0.5 * (np.kron(opdop, eye) + np.kron(eye, opdop.T))
    vals, vecs = np.linalg.eig(sup)
    rho = vecs[:, np.argmin(np.abs(vals))].reshape(dim, dim)
    rho = (rho + rho.conj().T) / 2.0
    rho = rho / np.trace(rho).real
    return rho


def expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))
