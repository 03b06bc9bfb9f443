"""Time evolution of means and Gaussian covariances by normal-mode sums.

A mode vector ``a`` (canonical layout, see :mod:`phase_space`) evolves as
``a exp(-i Omega t)``; the real state is ``y(t) = sum_k c_k a_k e^{-i W_k t} + cc``
with coefficients ``c_k = i dv a_k^dagger J y(0)``.
"""
from dataclasses import dataclass
import warnings

import numpy as np

from .errors import CompletenessError, ConfigurationError, ProjectionError
from .model import Layered1D
from .phase_space import (FieldState, hamiltonian_matrix, max_frequency,
                          quadratic_energy, raw_energy, symplectic_form)
from .units import eps0

TAU_RECON = 1e-8
TAU_SYMP = 1e-8


@dataclass(frozen=True)
class ModeCoefficients:
    c: np.ndarray
    omega: np.ndarray


def _proj_matrix(table):
    """Rows i dv a_k^dagger J, so that c = P y."""
    A = table.amplitudes()
    J = symplectic_form(A.shape[0])
    return 1j * table.cell_volume * (A.conj().T @ J)


def project_initial(state0, table, tol=TAU_RECON):
    y = state0.vector()
    A = table.amplitudes()
    c = _proj_matrix(table) @ y
    back = 2.0 * np.real(A @ c)
    scale = max(np.max(np.abs(y)), 1e-300)
    res = float(np.max(np.abs(back - y)) / scale) if np.any(y) else float(np.max(np.abs(back)))
    if res > tol:
        raise ProjectionError(f"mode resummation misses the initial state by {res:.2e}", res)
    return ModeCoefficients(c, table.omega.copy())


def evolve_vector(coeffs, table, t):
    A = table.amplitudes()
    z = A @ (coeffs.c * np.exp(-1j * coeffs.omega * t))
    return 2.0 * z.real, float(np.max(np.abs((z + z.conj()).imag), initial=0.0))


def evolve_means(coeffs, table, t):
    y, _ = evolve_vector(coeffs, table, t)
    return FieldState.from_vector(y, table.layout, t)


def propagator_matrix(table, t):
    """Real linear map S(t) with y(t) = S(t) y(0)."""
    A = table.amplitudes()
    P = _proj_matrix(table)
    S = 2.0 * np.real((A * np.exp(-1j * table.omega * t)) @ P)
    return S


def propagator_row(table, t, index):
    """Row ``index`` of S(t): the map from y(0) to one component of y(t)."""
    A = table.amplitudes()
    return 2.0 * np.real((A[index] * np.exp(-1j * table.omega * t)) @ _proj_matrix(table))


def symplectic_defect(S):
    J = symplectic_form(len(S))
    return float(np.max(np.abs(S @ J @ S.T - J)))


def check_completeness(table):
    """Residual of S(0) = I; large values mean missing modes."""
    res = float(np.max(np.abs(propagator_matrix(table, 0.0) - np.eye(table.layout.dim))))
    if res > TAU_RECON:
        raise CompletenessError(f"mode set incomplete: |S(0) - I| = {res:.2e}")
    return res


# --------------------------------------------------------------------------
# energies

def hamiltonian_energy(state, geometry, medium, reservoir):
    return raw_energy(state, geometry, medium, reservoir)


def diagonal_energy(coeffs):
    return float(np.sum(coeffs.omega * np.abs(coeffs.c)**2))


# --------------------------------------------------------------------------
# independent integration of Hamilton's equations

@dataclass
class OdeRun:
    t: np.ndarray
    y: np.ndarray        # (times, dim)
    energy: np.ndarray
    dt: float

    @property
    def energy_drift(self):
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / abs(e0)) if e0 else 0.0


def taylor_step(K, dt, order=16):
    """Truncated exponential series for one step of dy/dt = K y."""
    n = len(K)
    T = np.eye(n)
    term = np.eye(n)
    for k in range(1, order + 1):
        term = term @ (dt * K) / k
        T = T + term
    return T


def evolve_ode_oracle(state0, times, geometry, medium, reservoir, dt=None, order=16):
    """Integrate dy/dt = J Hm y with a fixed-step explicit Taylor scheme.

    ``times`` must be non-negative multiples of a common output interval;
    the steps between outputs are composed by repeated squaring.
    """
    Hm = hamiltonian_matrix(geometry, medium, reservoir)
    K = symplectic_form(len(Hm)) @ Hm
    wmax = max_frequency(Hm)
    limit = 0.05 / wmax
    if dt is None:
        dt = limit
    if dt > limit * (1 + 1e-12):
        raise ConfigurationError(f"time step {dt:.3e} exceeds 0.05 / Omega_max = {limit:.3e}",
                                 "run.dt")
    times = np.atleast_1d(np.asarray(times, float))
    if np.any(times < 0) or np.any(np.diff(times) <= 0) and len(times) > 1:
        raise ConfigurationError("output times must be increasing and non-negative", "run.t")
    y = state0.vector().astype(float)
    dv = geometry.cell_volume
    out, en = [], []
    t_now = 0.0
    cache = {}
    for t in times:
        span = t - t_now
        if span > 0:
            nsteps = int(np.ceil(span / dt - 1e-9))
            h = span / nsteps
            key = round(h, 15)
            if key not in cache:
                cache[key] = taylor_step(K, h, order)
            T = cache[key]
            y = np.linalg.matrix_power(T, nsteps) @ y
        t_now = t
        out.append(y.copy())
        en.append(quadratic_energy(Hm, y, dv))
    return OdeRun(times, np.array(out), np.array(en), dt)


def hamilton_rhs(state, geometry, medium, reservoir):
    """dy/dt for a state, in canonical layout."""
    K = symplectic_form(state.layout.dim) @ hamiltonian_matrix(geometry, medium, reservoir)
    return K @ state.vector()


# --------------------------------------------------------------------------
# Gaussian covariances

@dataclass(frozen=True)
class CovarianceState:
    """Symmetrised second moments of the canonical fields (zero means)."""

    matrix: np.ndarray
    cell_volume: float
    t: float = 0.0

    def floor_defect(self):
        """Most negative eigenvalue of Sigma + i J / (2 dv) (0 when satisfied)."""
        J = symplectic_form(len(self.matrix))
        w = np.linalg.eigvalsh(self.matrix + 0.5j * J / self.cell_volume)
        scale = max(np.max(np.abs(w)), 1e-300)
        return float(max(-w[0], 0.0) / scale)


def vacuum_covariance(table):
    A = table.amplitudes()
    return CovarianceState(np.real(A @ A.conj().T), table.cell_volume)


def thermal_covariance(table, occupation):
    """Each normal mode with mean occupation n_k: sum (2 n_k + 1) Re a a^dagger."""
    A = table.amplitudes()
    n = np.broadcast_to(np.asarray(occupation, float), table.omega.shape)
    return CovarianceState(np.real((A * (2 * n + 1)) @ A.conj().T), table.cell_volume)


def reservoir_covariance(layout, medium, reservoir, cell_volume, energy):
    """Uncorrelated bath oscillators with mean energy ``energy(omega_n)`` each.

    Per site and channel <P_n^2> = rho E / dv and <Q_n^2> = E / (rho w_n^2 dv),
    so that each oscillator carries the energy E; everything else is zero.
    """
    S = np.zeros((layout.dim, layout.dim))
    rho = np.broadcast_to(medium.rho, (layout.M,))
    for n in range(layout.N):
        e = float(energy(reservoir.omega[n]))
        q = layout.block("Q", n)
        p = layout.block("P", n)
        idx_q = np.arange(q.start, q.stop)
        idx_p = np.arange(p.start, p.stop)
        S[idx_q, idx_q] = e / (rho * reservoir.omega[n]**2 * cell_volume)
        S[idx_p, idx_p] = rho * e / cell_volume
    return CovarianceState(S, cell_volume)


def covariance_evolve(cov, S, t=None, check_floor=False):
    out = CovarianceState(S @ cov.matrix @ S.T, cov.cell_volume, cov.t if t is None else t)
    if check_floor:
        d = out.floor_defect()
        if d > 1e-8:
            warnings.warn(f"uncertainty floor violated by {d:.2e} after evolution",
                          RuntimeWarning)
    return out


def extract_EE(cov, layout, x, x_prime):
    """<E(x) E(x')> from the Pi block, using E = -Pi / eps0 in the transverse sector."""
    pi = layout.block("Pi")
    return float(cov.matrix[pi.start + x, pi.start + x_prime] / eps0**2)


def sample_states(cov, count, seed):
    """Classical Gaussian samples with covariance ``cov.matrix``."""
    rng = np.random.default_rng(seed)
    return rng.multivariate_normal(np.zeros(len(cov.matrix)), cov.matrix, size=count,
                                   method="eigh")


# --------------------------------------------------------------------------
# derived fields

def electric_field(state):
    return -state.Pi / eps0


def displacement_field(state, medium):
    return eps0 * electric_field(state) - medium.alpha * state.Q0


def magnetic_field(state, geometry):
    """B = dA/dx on the ring (forward difference, twisted wrap)."""
    if not isinstance(geometry, Layered1D):
        raise TypeError("magnetic field diagnostic needs a 1D ring")
    A = state.A
    return (np.r_[A[1:], -A[:1]] - A) / geometry.dx


@dataclass(frozen=True)
class DivergenceCheck:
    status: str
    residual: float


def divergence_check(D, geometry):
    """D has no longitudinal part in the 1D transverse sector, so the check is empty."""
    if isinstance(geometry, Layered1D) or np.ndim(D) == 1:
        return DivergenceCheck("vacuous", 0.0)
    raise TypeError("divergence check only defined for the 1D transverse sector")
