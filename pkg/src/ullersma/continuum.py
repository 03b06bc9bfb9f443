"""Continuum bath: smearing, continuum Green function, dissipative dynamics,
decay rates, and the long-time field fluctuations.

Real-frequency boundary values f(w + i0) are taken either from the
closed-form Gaussian response (the Faddeeva function is entire, so the
upper-branch formula can be evaluated on the real axis directly) or from
adaptive quadrature at w + i eta, Richardson-extrapolated in eta.
"""
from dataclasses import dataclass
import warnings

import numpy as np
from scipy import integrate, optimize, signal

from .errors import (AccuracyError, ComparisonWindowError, ContinuationRangeError,
                     DomainError, ValidationError)
from .model import ContinuumReservoir, DiscreteReservoir, Layered1D, MediumProfile, PlaneWave
from .phase_space import FieldState
from .spectral import (BOUNDARY_ETAS, Branch, SpectralContext, hc_closed_form, hc_eval,
                       richardson_zero)
from .units import c, eps0

CLOSED = "closed"
QUADRATURE = "quadrature"


# --------------------------------------------------------------------------
# smearing

@dataclass(frozen=True)
class SmearingPlan:
    N: int
    omega_max: float

    @property
    def density(self):
        """Lambda = N / omega_max, oscillators per unit frequency."""
        return self.N / self.omega_max

    @property
    def omega(self):
        return np.arange(1, self.N + 1) / self.density

    @property
    def recurrence_time(self):
        return 2 * np.pi * self.density

    @property
    def guard(self):
        """Latest time at which a finite-N run stands in for the continuum."""
        return 0.5 * self.recurrence_time

    def sample(self, fn, sites):
        """Discrete oscillator values Lambda^{-1/2} f(w_n) from a continuum field."""
        if fn is None:
            return np.zeros((self.N, sites))
        vals = np.asarray(fn(self.omega), float).reshape(self.N, -1)
        return np.broadcast_to(vals, (self.N, sites)) / np.sqrt(self.density)


def smearing_plan(cont, N):
    if N < 8:
        raise ValidationError(f"smearing needs N >= 8, got {N}", "reservoir.smear_n")
    return SmearingPlan(int(N), float(cont.omega_max))


def smear_reservoir(cont, N):
    """Discrete reservoir w_n = n / Lambda, beta_n = Lambda^{-1/2} beta(w_n)."""
    plan = smearing_plan(cont, N)
    beta = cont.beta(plan.omega) / np.sqrt(plan.density)   # (N, sites)
    return DiscreteReservoir(plan.omega, beta)


# --------------------------------------------------------------------------
# continuum response on a geometry

def hc_values(medium, cont, z, branch=Branch.UPPER, method=CLOSED):
    """h_c at every site.  Real ``z`` on the upper branch means z + i0."""
    ctx = SpectralContext(medium, cont)
    branch = Branch(branch)
    real = np.imag(z) == 0
    if method == CLOSED:
        return np.atleast_1d(hc_closed_form(ctx, complex(z), branch))
    if method != QUADRATURE:
        raise DomainError(f"unknown evaluation method {method!r}")
    if real:
        if branch is Branch.CONTINUED:
            return np.atleast_1d(hc_eval(ctx, complex(z), branch))
        sgn = 1.0 if branch is Branch.UPPER else -1.0
        vals = [hc_eval(ctx, complex(z) + 1j * sgn * e, branch) for e in BOUNDARY_ETAS]
        return np.atleast_1d(richardson_zero(BOUNDARY_ETAS, vals))
    return np.atleast_1d(hc_eval(ctx, complex(z), branch))


def eps_c_values(medium, cont, z, branch=Branch.UPPER, method=CLOSED, hc=None):
    if hc is None:
        hc = hc_values(medium, cont, z, branch, method)
    return 1.0 - medium.alpha**2 / (eps0 * medium.rho * hc)


def epsilon_c_table(medium, cont, omegas, x=0, method=CLOSED):
    """Rows (w, Re eps_c(w + i0), Im eps_c(w + i0)) at site x."""
    rows = []
    for w in omegas:
        e = eps_c_values(medium, cont, float(w), Branch.UPPER, method)[x]
        rows.append((float(w), float(e.real), float(e.imag)))
    return np.array(rows)


def green_c(geometry, medium, cont, z, branch=Branch.UPPER, method=CLOSED, hc=None):
    """Continuum Green matrix c^2 L_c(z)^{-1} / dv with L_c = -K + diag(z^2 eps_c)."""
    if method == QUADRATURE and np.imag(z) == 0 and Branch(branch) is not Branch.CONTINUED:
        sgn = 1.0 if Branch(branch) is Branch.UPPER else -1.0
        vals = [green_c(geometry, medium, cont, complex(z) + 1j * sgn * e, branch, method)
                for e in BOUNDARY_ETAS]
        return richardson_zero(BOUNDARY_ETAS, vals)
    eps = eps_c_values(medium, cont, z, branch, method, hc)
    L = -geometry.stiffness() + np.diag(complex(z)**2 * eps)
    return c**2 * np.linalg.inv(L) / geometry.cell_volume


# --------------------------------------------------------------------------
# initial data and sources

@dataclass
class ContinuumState:
    """Initial fields with a continuum reservoir.

    ``Q`` / ``P`` map an array of bath frequencies to values of shape
    ``(len(w), sites)`` (or are None for an unexcited bath).
    """

    A: np.ndarray
    Pi: np.ndarray
    Q0: np.ndarray
    P0: np.ndarray
    Q: object = None
    P: object = None

    def discretize(self, plan):
        M = len(self.A)
        return FieldState(np.array(self.A, float), np.array(self.Pi, float),
                          np.array(self.Q0, float), np.array(self.P0, float),
                          np.array(plan.sample(self.Q, M)), np.array(plan.sample(self.P, M)))


@dataclass(frozen=True)
class ContinuumSources:
    j_em: np.ndarray
    j_d: np.ndarray
    j_r: np.ndarray


def continuum_sources(state, medium, w, wp=None):
    """Source vectors of the continuum solution at (w, w')."""
    j_em = (-1j * eps0 * w * state.A + state.Pi + medium.alpha * state.Q0) / c**2
    j_d = (1j * w**2 * state.Q0 - w * state.P0 / medium.rho) / c**2
    M = len(state.A)
    if wp is None or (state.Q is None and state.P is None):
        j_r = np.zeros(M, complex)
    else:
        Q = _field_at(state.Q, wp, M)
        P = _field_at(state.P, wp, M)
        j_r = (1j * wp**2 * Q - w * P / medium.rho) / c**2
    return ContinuumSources(j_em, j_d, j_r)


def _field_at(fn, w, M):
    if fn is None:
        return np.zeros(M)
    return np.broadcast_to(np.asarray(fn(np.atleast_1d(w)), float).reshape(-1, M)[0], (M,))


# --------------------------------------------------------------------------
# dissipative evolution of the electric field

def _pv_reservoir(state, medium, cont, w):
    """PV int_0^wmax dw' beta(w') (i w'^2 Q(w'), P(w')) / (w^2 - w'^2), per site."""
    M = len(state.A)
    out_q, out_p = np.zeros(M), np.zeros(M)
    kw = dict(weight="cauchy", wvar=w, epsabs=1e-13, epsrel=1e-10, limit=400)
    for x in range(M):
        def g(wp, fn, power):
            b = cont.beta(np.atleast_1d(wp))[0, x % len(cont.amplitude)]
            return -b * wp**power * _field_at(fn, wp, M)[x] / (wp + w)
        if state.Q is not None:
            out_q[x] = integrate.quad(g, 0.0, cont.omega_max, args=(state.Q, 2), **kw)[0]
        if state.P is not None:
            out_p[x] = integrate.quad(g, 0.0, cont.omega_max, args=(state.P, 0), **kw)[0]
    return out_q, out_p


def _breakpoints(cont, pieces=96):
    return list(np.linspace(0.0, cont.omega_max, pieces + 1)[1:-1])


def evolve_continuum_E(geometry, medium, cont, state, times, method=CLOSED, epsrel=1e-9,
                       guard=None):
    """E(x, t) of the continuum model from real-frequency integrals.

    The three contributions come from the field sources, the dielectric
    sources and the bath sources; the bath term's (w, w') integral is split
    into a principal value and the residue at w' = w.  ``guard`` (optional)
    rejects times beyond a comparison window.
    """
    times = np.atleast_1d(np.asarray(times, float))
    if np.any(times < 0):
        raise DomainError("continuum evolution is formulated for t >= 0")
    if guard is not None and np.any(times >= guard):
        raise ComparisonWindowError(f"t up to {times.max()} exceeds the recurrence guard {guard}")
    dv = geometry.cell_volume
    alpha, rho = medium.alpha, medium.rho
    has_bath = state.Q is not None or state.P is not None

    def integrand(w):
        hc = hc_values(medium, cont, w, Branch.UPPER, method)
        G = green_c(geometry, medium, cont, w, Branch.UPPER, method, hc=hc if method == CLOSED else None)
        if method == QUADRATURE:
            hc = hc_values(medium, cont, w, Branch.UPPER, method)
        Gh = G / hc[None, :]
        src = continuum_sources(state, medium, w, w if has_bath else None)
        v = (w / (np.pi * eps0)) * (G.imag @ (dv * src.j_em))
        v = v - (w / (np.pi * 1j * eps0)) * (Gh.imag @ (dv * alpha * src.j_d))
        if has_bath:
            pq, pp = _pv_reservoir(state, medium, cont, w)
            pv = (1j * pq - w * pp / rho) / c**2
            b = cont.beta(np.atleast_1d(w))[0]
            res = -np.pi / (2 * w) * b * src.j_r
            v = v + (w**2 / (np.pi * eps0)) * (Gh.imag @ (dv * alpha / rho * pv)
                                                + Gh.real @ (dv * alpha / rho * res))
        ph = np.exp(-1j * np.outer(times, w))
        z = ph * v[None, :]
        return np.concatenate([z.real.ravel(), z.imag.ravel()])

    val, err = integrate.quad_vec(integrand, 1e-12, cont.omega_max, epsrel=epsrel,
                                  epsabs=1e-13, points=_breakpoints(cont), limit=4000)
    n = len(times) * geometry.size
    E = 2.0 * val[:n].reshape(len(times), geometry.size)
    if err > 1e-6 * max(np.max(np.abs(val)), 1e-12):
        raise AccuracyError(f"frequency quadrature error estimate {err:.2e}", err)
    return E


# --------------------------------------------------------------------------
# decay rates from the continued dispersion relation

@dataclass
class DecayEstimate:
    pole: complex
    residual: float                  # |z^2 eps_c(z) - c^2 q^2| by continued quadrature
    fit_rate: float = None
    fit_frequency: float = None
    fit_rms: float = None

    @property
    def rate(self):
        return -self.pole.imag

    @property
    def frequency(self):
        return self.pole.real


def single_site(medium, cont):
    """One-site copies of a homogeneous medium and bath."""
    md = MediumProfile(medium.rho[:1], medium.omega0[:1], medium.alpha[:1])
    return md, ContinuumReservoir(cont.cutoff, cont.amplitude[:1], cont.omega_max)


def _dispersion(medium, cont, q):
    md, cont = single_site(medium, cont)
    ctx = SpectralContext(md, cont, 0)
    a2 = md.alpha[0]**2 / (eps0 * md.rho[0])

    def F(z):
        # (z^2 - c^2 q^2) h_c - z^2 alpha^2 / (eps0 rho): zero set equals that of
        # z^2 eps_c - c^2 q^2 away from zeros of h_c, and F is entire
        return (z**2 - c**2 * q**2) * hc_closed_form(ctx, z, Branch.CONTINUED) - z**2 * a2
    return md, ctx, F


def polariton_guesses(q, medium, cont=None):
    """Lossless two-level polariton frequencies used to seed the pole search."""
    a2 = medium.alpha[0]**2 / (eps0 * medium.rho[0])
    w0 = medium.omega0[0]**2
    b = c**2 * q**2 + w0 + a2
    disc = np.sqrt(b**2 - 4 * c**2 * q**2 * w0)
    return np.sqrt([(b - disc) / 2, (b + disc) / 2])


def find_pole(q, medium, cont, guess):
    """Complex root of z^2 eps_c(z) = c^2 q^2 on the continued sheet near ``guess``."""
    md, ctx, F = _dispersion(medium, cont, q)
    z0 = complex(guess) - 1e-3j * abs(guess)
    z1 = complex(guess) - 2e-2j * abs(guess)
    f0, f1 = F(z0), F(z1)
    for _ in range(100):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        z0, f0 = z1, f1
        z1, f1 = z2, F(z2)
        if abs(z1 - z0) <= 1e-15 * abs(z1):
            break
    z = z1
    gam = cont.strip_halfwidth
    if not (-gam < z.imag < 0):
        raise ContinuationRangeError(
            f"pole {z} outside the continuation strip -{gam} < Im z < 0")
    with warnings.catch_warnings():
        # slow poles sit close to the real axis where the shifted contour is stiff;
        # the residual below is the accuracy measure
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        hc = hc_eval(ctx, z, Branch.CONTINUED)
    eps = 1.0 - md.alpha[0]**2 / (eps0 * md.rho[0] * hc)
    resid = abs(z**2 * eps - c**2 * q**2)
    return DecayEstimate(complex(z), float(resid))


def decay_rate(q, medium, cont, which="all"):
    """Poles of the transverse continuum dispersion at wavenumber q.

    ``which`` is 'lower', 'upper' or 'all' (list of both polariton poles).
    """
    if not medium.is_homogeneous() or np.ptp(cont.amplitude) > 0:
        raise DomainError("decay_rate needs a homogeneous medium")
    g = polariton_guesses(q, medium)
    out = [find_pole(q, medium, cont, x) for x in g]
    if which == "lower":
        return out[0]
    if which == "upper":
        return out[1]
    return out


def band_pulse(table, center, width, x=0):
    """Mode coefficients of a field pulse at sample ``x`` filtered to a frequency band.

    c_k = conj(E_k(x)) exp(-(W_k - center)^2 / (2 width^2)), so the field
    spectrum is the local density of states times a Gaussian window.  A
    window narrower than the polariton splitting excites one resonance.
    """
    from .evolution import ModeCoefficients
    A = table.amplitudes()
    Ek = -A[table.layout.block("Pi")][x] / eps0
    f = np.exp(-(table.omega - center)**2 / (2 * width**2))
    return ModeCoefficients(np.conj(Ek) * f, table.omega.copy())


def measure_decay(q, medium, cont, estimate, N=512, width=0.25, center=None, samples=1500):
    """Fit a damped cosine to the field of a large-N smeared run.

    The run starts from :func:`band_pulse` centred on the lossless polariton
    nearest to ``estimate``; the fit skips the window transient (t < 3/width)
    and stops at the recurrence guard or after six e-folds.
    """
    from .evolution import evolve_vector
    from .modes import direct_spectrum
    medium, cont = single_site(medium, cont)
    plan = smearing_plan(cont, N)
    geom = PlaneWave(q)
    table = direct_spectrum(geom, medium, smear_reservoir(cont, N))
    if center is None:
        g = polariton_guesses(q, medium)
        center = g[np.argmin(np.abs(g - estimate.frequency))]
    coeffs = band_pulse(table, center, width)
    t0 = 3.0 / width
    t1 = min(0.95 * plan.guard, t0 + 6.0 / estimate.rate)
    if t1 <= t0:
        raise ComparisonWindowError("recurrence guard leaves no fitting window")
    ts = np.linspace(t0, t1, samples)
    pi = table.layout.block("Pi")
    E = np.array([-evolve_vector(coeffs, table, t)[0][pi][0] / eps0 for t in ts])
    _, g_fit, w_fit, _, rms = fit_damped_cosine(ts, E)
    return DecayEstimate(estimate.pole, estimate.residual, g_fit, w_fit, rms)


def fit_damped_cosine(t, y):
    """Least-squares fit of A exp(-g t) cos(W t + phi); returns (A, g, W, phi, rms)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    z = signal.hilbert(y)
    env = np.abs(z)
    lo, hi = len(t) // 10, len(t) - len(t) // 10
    g0 = -np.polyfit(t[lo:hi], np.log(env[lo:hi] + 1e-300), 1)[0]
    W0 = np.polyfit(t[lo:hi], np.unwrap(np.angle(z[lo:hi])), 1)[0]
    A0 = env[lo] * np.exp(g0 * t[lo])

    def model(tt, A, g, W, phi):
        return A * np.exp(-g * tt) * np.cos(W * tt + phi)
    best = None
    for ph in np.linspace(-np.pi, np.pi, 8, endpoint=False):
        try:
            p, _ = optimize.curve_fit(model, t, y, p0=[A0, g0, W0, ph], maxfev=20000)
        except RuntimeError:
            continue
        rms = float(np.sqrt(np.mean((model(t, *p) - y)**2)) / np.sqrt(np.mean(y**2)))
        if best is None or rms < best[-1]:
            best = (*p, rms)
    if best is None:
        raise AccuracyError("damped-cosine fit did not converge")
    A, g, W, phi, rms = best
    if A < 0:
        A, phi = -A, phi + np.pi
    return float(A), float(g), abs(float(W)), float(phi), float(rms)


# --------------------------------------------------------------------------
# long-time behaviour

def asymptotic_E(geometry, medium, cont, times, plan=None, state=None, Qn=None, Pn=None,
                 method=CLOSED):
    """Long-time field sustained by the bath.

    E ~ -int dw e^{-i w t - i phi} sqrt(w rho Im eps_c / (2 pi eps0)) G_c(w) j_R(w, w) + cc,
    phi = arg h_c(w + i0).  The bath data are either continuum fields
    (``state.Q``, ``state.P``, integrated adaptively) or discrete oscillator
    values ``Qn``, ``Pn`` of shape (N, sites) on the smearing grid of
    ``plan``, in which case the integral is the matching Riemann sum.
    """
    times = np.atleast_1d(np.asarray(times, float))
    dv = geometry.cell_volume
    M = geometry.size

    def weight_vec(w, Q, P):
        hc = hc_values(medium, cont, w, Branch.UPPER, method)
        G = green_c(geometry, medium, cont, w, Branch.UPPER, method,
                    hc=hc if method == CLOSED else None)
        ieps = (medium.alpha**2 * hc.imag / (eps0 * medium.rho * np.abs(hc)**2))
        amp = np.sqrt(np.maximum(w * medium.rho * ieps / (2 * np.pi * eps0), 0.0))
        jr = (1j * w**2 * Q - w * P / medium.rho) / c**2
        return G @ (dv * amp * np.exp(-1j * np.angle(hc)) * jr)

    if Qn is not None or Pn is not None:
        if plan is None:
            raise DomainError("discrete bath data need the smearing plan")
        lam = plan.density
        Qn = np.zeros((plan.N, M)) if Qn is None else np.asarray(Qn)
        Pn = np.zeros((plan.N, M)) if Pn is None else np.asarray(Pn)
        E = np.zeros((len(times), M))
        for n, w in enumerate(plan.omega):
            v = weight_vec(w, np.sqrt(lam) * Qn[n], np.sqrt(lam) * Pn[n]) / lam
            E += -2.0 * np.real(np.exp(-1j * w * times)[:, None] * v[None, :])
        return E
    if state is None or (state.Q is None and state.P is None):
        return np.zeros((len(times), M))

    def integrand(w):
        v = weight_vec(w, _field_at(state.Q, w, M), _field_at(state.P, w, M))
        z = np.exp(-1j * np.outer(times, w)) * v[None, :]
        return np.concatenate([z.real.ravel(), z.imag.ravel()])
    val, _ = integrate.quad_vec(integrand, 1e-12, cont.omega_max, epsrel=1e-9, epsabs=1e-13,
                                points=_breakpoints(cont), limit=4000)
    return -2.0 * val[:len(times) * M].reshape(len(times), M)


def fluctuation_integral(geometry, medium, cont, energy, method=CLOSED, epsrel=1e-9):
    """Long-time <E(x) E(x')> fed by a bath with mean oscillator energy ``energy(w)``.

    C = int_0^inf dw (1 / (pi eps0 c^4)) w^3 sum_x'' dv G(x, x'') G*(x'', x')
        Im eps_c(x'') H(w; x'') + cc.
    The isotropic average of the three-dimensional tensor model contributes a
    factor 1/3; a single transverse polarisation carries the full weight.
    """
    dv = geometry.cell_volume
    M = geometry.size
    pts = sorted(set(_breakpoints(cont)) | set(getattr(energy, "edges", ())))

    def integrand(w):
        hc = hc_values(medium, cont, w, Branch.UPPER, method)
        G = green_c(geometry, medium, cont, w, Branch.UPPER, method,
                    hc=hc if method == CLOSED else None)
        ieps = medium.alpha**2 * hc.imag / (eps0 * medium.rho * np.abs(hc)**2)
        H = np.broadcast_to(np.asarray(energy(w), float), (M,))
        K = (G * (dv * ieps * H)[None, :]) @ np.conj(G)
        return (w**3 / (np.pi * eps0 * c**4) * 2.0 * K.real).ravel()

    val, err = integrate.quad_vec(integrand, 1e-12, cont.omega_max, epsrel=epsrel,
                                  epsabs=1e-14, points=pts, limit=4000)
    if err > 1e-6 * max(np.max(np.abs(val)), 1e-12):
        raise AccuracyError(f"frequency quadrature error estimate {err:.2e}", err)
    return val.reshape(M, M)


def plane_wave_blocks(geometry):
    """(q~, basis columns) pairs diagonalising a homogeneous ring."""
    if not isinstance(geometry, Layered1D):
        raise DomainError("plane-wave decomposition needs a 1D ring")
    B = geometry.plane_waves()
    qt = geometry.discrete_wavenumbers()
    return [(float(qt[m]), B[:, 2 * m:2 * m + 2]) for m in range(len(qt))]


def band_energy(low, high, level=1.0):
    """Flat mean oscillator energy on [low, high], zero elsewhere."""
    def energy(w):
        w = np.asarray(w, float)
        return np.where((w >= low) & (w <= high), level, 0.0)
    energy.edges = (low, high)
    return energy


def dynamic_plateau(geometry, medium, cont, energy, times, N=512):
    """Time-averaged <E(x) E(x')> of a large-N smeared run with a thermal bath.

    The homogeneous ring decouples into plane-wave blocks; each block is
    evolved from uncorrelated bath oscillators carrying ``energy(w_n)`` and
    quiet fields, and the field covariance is averaged over ``times``.
    """
    from .evolution import _proj_matrix, reservoir_covariance
    from .modes import direct_spectrum
    if not medium.is_homogeneous() or np.ptp(cont.amplitude) > 0:
        raise DomainError("plane-wave decomposition needs a homogeneous medium")
    plan = smearing_plan(cont, N)
    times = np.atleast_1d(np.asarray(times, float))
    if np.any(times >= plan.guard):
        raise ComparisonWindowError(
            f"t up to {times.max()} exceeds the recurrence guard {plan.guard}")
    site, cont = single_site(medium, cont)
    res = smear_reservoir(cont, N)
    C = np.zeros((geometry.size, geometry.size))
    for q, B in plane_wave_blocks(geometry):
        block = PlaneWave(q)
        table = direct_spectrum(block, site, res)
        cov0 = reservoir_covariance(table.layout, site, res, 1.0, energy)
        pi = table.layout.block("Pi").start
        A, P = table.amplitudes()[pi], _proj_matrix(table)
        rows = 2.0 * np.real((A[None, :] * np.exp(-1j * np.outer(times, table.omega))) @ P)
        cq = np.mean(np.einsum("ti,ij,tj->t", rows, cov0.matrix, rows)) / eps0**2
        C += cq * (B @ B.T)
    return C
