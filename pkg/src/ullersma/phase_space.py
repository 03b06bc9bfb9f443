"""Canonical phase space of the discretised model.

A state is the real vector ``y = (A, Q0, Q1..QN, Pi, P0, P1..PN)``, each block
holding one value per field sample.  With ``dv`` the cell volume the
Hamiltonian is ``H = dv/2 * y^T Hm y`` and the Poisson bracket is
``{y_i, y_j} = J_ij / dv``, so Hamilton's equations read ``dy/dt = J Hm y``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model import DiscreteReservoir, omega_tilde_sq
from .units import eps0


@dataclass(frozen=True)
class Layout:
    """Index bookkeeping for the canonical vector."""

    M: int
    N: int

    @property
    def dim(self):
        return (4 + 2 * self.N) * self.M

    @property
    def half(self):
        return (2 + self.N) * self.M

    def block(self, name, n=None):
        M = self.M
        q = {"A": 0, "Q0": 1}
        p = {"Pi": 0, "P0": 1}
        if name in q:
            i = q[name]
        elif name in p:
            i = p[name] + (2 + self.N)
        elif name == "Q":
            i = 2 + n
        elif name == "P":
            i = 2 + self.N + 2 + n
        else:
            raise KeyError(name)
        return slice(i * M, (i + 1) * M)


def layout_of(geometry, reservoir):
    return Layout(geometry.size, reservoir.N)


@dataclass
class FieldState:
    """Canonical field means at time ``t``.

    ``Q`` and ``P`` have shape ``(N, M)``.
    """

    A: np.ndarray
    Pi: np.ndarray
    Q0: np.ndarray
    P0: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, M, N, t=0.0):
        z = lambda *s: np.zeros(s)
        return cls(z(M), z(M), z(M), z(M), z(N, M), z(N, M), t)

    @classmethod
    def from_vector(cls, y, layout, t=0.0):
        y = np.asarray(y)
        L = layout
        Q = np.array([y[L.block("Q", n)] for n in range(L.N)]).reshape(L.N, L.M)
        P = np.array([y[L.block("P", n)] for n in range(L.N)]).reshape(L.N, L.M)
        return cls(y[L.block("A")].copy(), y[L.block("Pi")].copy(),
                   y[L.block("Q0")].copy(), y[L.block("P0")].copy(), Q, P, t)

    @property
    def layout(self):
        return Layout(len(self.A), len(self.Q))

    def vector(self):
        return np.concatenate([self.A, self.Q0, *self.Q, self.Pi, self.P0, *self.P])

    @property
    def E(self):
        # the transverse 1D sector has no longitudinal polarisation part
        return -self.Pi / eps0


def symplectic_form(dim):
    n = dim // 2
    J = np.zeros((dim, dim))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def hamiltonian_matrix(geometry, medium, reservoir):
    """Symmetric positive-definite Hm with H = dv/2 y^T Hm y."""
    if not isinstance(reservoir, DiscreteReservoir):
        raise TypeError("phase space needs a discrete reservoir")
    L = layout_of(geometry, reservoir)
    M, N = L.M, L.N
    rho, alpha = medium.rho, medium.alpha
    beta = reservoir.profile(M)
    wt2 = omega_tilde_sq(medium, reservoir)
    H = np.zeros((L.dim, L.dim))
    b = L.block
    d = lambda v: np.diag(np.broadcast_to(v, (M,)).astype(float))
    H[b("A"), b("A")] = geometry.stiffness() + d(alpha**2 / rho)
    H[b("Pi"), b("Pi")] = d(1.0 / eps0)
    H[b("Q0"), b("Q0")] = d(rho * wt2)
    H[b("P0"), b("P0")] = d(1.0 / rho)
    H[b("A"), b("P0")] = H[b("P0"), b("A")] = d(alpha / rho)
    for n in range(N):
        H[b("Q", n), b("Q", n)] = d(rho * reservoir.omega[n]**2)
        H[b("P", n), b("P", n)] = d(1.0 / rho)
        H[b("Q0"), b("P", n)] = H[b("P", n), b("Q0")] = d(beta[n] / rho)
    return H


def generator(geometry, medium, reservoir):
    """Matrix of the linear flow dy/dt = K y."""
    Hm = hamiltonian_matrix(geometry, medium, reservoir)
    return symplectic_form(len(Hm)) @ Hm


def max_frequency(Hm):
    """Largest normal-mode frequency, the spectral norm of R J R^T."""
    R = linalg.cholesky(Hm)
    return float(np.linalg.norm(R @ symplectic_form(len(Hm)) @ R.T, 2))


def direct_frequencies(Hm):
    """Positive normal-mode frequencies from the Hermitian matrix i R J R^T."""
    R = linalg.cholesky(Hm)
    S = 1j * (R @ symplectic_form(len(Hm)) @ R.T)
    w = np.linalg.eigvalsh(S)
    return np.sort(w[w > 0])


def quadratic_energy(Hm, y, dv):
    return 0.5 * dv * float(y @ Hm @ y)


def raw_energy(state, geometry, medium, reservoir):
    """Term-by-term evaluation of the field-matter Hamiltonian density.

    Deliberately independent of :func:`hamiltonian_matrix`: the curl energy
    uses forward differences on the ring (twisted wrap) and the coupling
    terms are written out one by one.
    """
    A, Pi, Q0, P0 = state.A, state.Pi, state.Q0, state.P0
    rho, w0, al = medium.rho, medium.omega0, medium.alpha
    beta = reservoir.profile(len(A))
    wt2 = w0**2 + np.sum(beta**2, axis=0) / rho**2
    if hasattr(geometry, "dx"):
        Anext = np.r_[A[1:], -A[:1]]
        curl2 = ((Anext - A) / geometry.dx)**2
    else:
        curl2 = (geometry.q * A)**2
    dens = (Pi**2 / (2 * eps0) + curl2 / 2 + al**2 * A**2 / (2 * rho)
            + P0**2 / (2 * rho) + rho * wt2 * Q0**2 / 2 + al * A * P0 / rho)
    for n in range(reservoir.N):
        dens = dens + (state.P[n]**2 / (2 * rho) + rho * reservoir.omega[n]**2 * state.Q[n]**2 / 2
                       + beta[n] * Q0 * state.P[n] / rho)
    return float(geometry.cell_volume * np.sum(dens))
