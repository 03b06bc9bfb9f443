"""Matter response functions h, eps and their continuum counterparts.

All functions accept a :class:`SpectralContext`.  With ``ctx.x = None`` the
result is an array over every site of the medium, otherwise a scalar for the
requested site.
"""
from dataclasses import dataclass
import enum
import functools

import numpy as np
from scipy import integrate, optimize, special

from .errors import (AccuracyError, BracketingError, DielectricPoleError, DomainError,
                     PoleProximityError)
from .model import ContinuumReservoir, DiscreteReservoir, omega_tilde_sq
from .units import eps0

TAU_POLE = 1e-8
TAU_QUAD = 1e-10


class Branch(enum.Enum):
    UPPER = "upper"
    LOWER = "lower"
    CONTINUED = "continued"


@dataclass(frozen=True)
class SpectralContext:
    medium: object
    reservoir: object
    x: int = None

    def __post_init__(self):
        if self.x is not None and not 0 <= self.x < self.medium.size:
            raise IndexError(f"site {self.x} out of range")

    @property
    def sites(self):
        return slice(None) if self.x is None else self.x

    def field(self, arr):
        return np.asarray(arr)[..., self.sites]

    def at(self, x):
        return SpectralContext(self.medium, self.reservoir, x)


def _pole_terms(ctx):
    """(omega_n, beta_n^2 omega_n^2 / rho^2 per site) for a discrete bath."""
    res = ctx.reservoir
    if not isinstance(res, DiscreteReservoir):
        raise DomainError("operation needs a discrete reservoir")
    beta = res.profile(ctx.medium.size)
    b = beta**2 * res.omega[:, None]**2 / ctx.medium.rho**2
    return res.omega, ctx.field(b)


def _check_poles(omega, z):
    if len(omega) == 0:
        return
    gaps = np.diff(omega)
    spacing = np.minimum(np.r_[gaps, np.inf], np.r_[np.inf, gaps])
    spacing = np.where(np.isfinite(spacing), spacing, omega)
    zz = complex(z)
    d = np.minimum(np.abs(zz - omega), np.abs(zz + omega))
    bad = np.nonzero(d < TAU_POLE * spacing)[0]
    if len(bad):
        n = bad[0]
        raise PoleProximityError(f"z={zz} within guard band of reservoir pole "
                                 f"omega_{n + 1}={omega[n]}", omega[n])


def h_eval(ctx, z, guard=True):
    """z^2 - w~0^2 + sum_n beta_n^2 w_n^2 / (rho^2 (w_n^2 - z^2)).

    ``guard=False`` skips the pole guard band, for frequencies that are
    known roots (a normal mode may sit arbitrarily close to a weakly
    coupled bath pole).
    """
    omega, b = _pole_terms(ctx)
    if guard:
        _check_poles(omega, z)
    wt = ctx.field(omega_tilde_sq(ctx.medium, ctx.reservoir))
    z2 = complex(z)**2 if np.iscomplexobj(z) or isinstance(z, complex) else float(z)**2
    if len(omega) == 0:
        return z2 - wt
    w2 = omega**2
    tail = np.tensordot(1.0 / (w2 - z2), b, axes=(0, 0))
    return z2 - wt + tail


def dh_dz2(ctx, z, guard=True):
    """Exact derivative dh/d(z^2) = 1 + sum_n b_n / (w_n^2 - z^2)^2."""
    omega, b = _pole_terms(ctx)
    if guard:
        _check_poles(omega, z)
    z2 = complex(z)**2 if isinstance(z, complex) or np.iscomplexobj(z) else float(z)**2
    if len(omega) == 0:
        return np.ones_like(ctx.field(ctx.medium.rho)) if ctx.x is None else 1.0
    return 1.0 + np.tensordot(1.0 / (omega**2 - z2)**2, b, axes=(0, 0))


def epsilon_eval(ctx, z, h=None):
    """Dielectric function 1 - alpha^2 / (eps0 rho h).

    Bath poles are removable here (1/h -> 0), so h is evaluated unguarded.
    """
    if h is None:
        h = h_eval(ctx, z, guard=False)
    alpha, rho = ctx.field(ctx.medium.alpha), ctx.field(ctx.medium.rho)
    scale = np.abs(np.asarray(z))**2 + ctx.field(omega_tilde_sq(ctx.medium, ctx.reservoir))
    # only a numerically exact zero is fatal here; guard bands in s are the
    # responsibility of the caller, who knows the local pole spacing
    small = (np.abs(h) < 64 * np.finfo(float).eps * scale) & (alpha != 0)
    if np.any(small):
        raise DielectricPoleError(f"z={z} at a pole of the dielectric function", z)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - np.where(alpha != 0, alpha**2 / (eps0 * rho * h), 0.0)
    return out


def ds2eps_ds2(ctx, s, h=None):
    """d(s^2 eps)/d(s^2) from the exact rational expression."""
    if h is None:
        h = h_eval(ctx, s, guard=False)
    eps = epsilon_eval(ctx, s, h)
    alpha, rho = ctx.field(ctx.medium.alpha), ctx.field(ctx.medium.rho)
    return eps + s**2 * alpha**2 * dh_dz2(ctx, s, guard=False) / (eps0 * rho * h**2)


def ds2eps_ds(ctx, s, h=None):
    """d(s^2 eps)/ds = 2 s d(s^2 eps)/d(s^2)."""
    return 2.0 * s * ds2eps_ds2(ctx, s, h)


# --------------------------------------------------------------------------
# zeros of h

@functools.lru_cache(maxsize=4096)
def _site_zeros(w0sq, omega, b):
    """Positive zeros of h for one site; ``b`` holds the pole strengths.

    Works in u = s^2.  A weakly coupled oscillator puts its zero within
    rounding distance of its pole; such zeros are solved for in the offset
    variable d = |u - pole| so the pole term b/d keeps full precision.
    """
    active = [(w, bn) for w, bn in zip(omega, b) if bn != 0.0]
    wt = w0sq + sum(bn / w**2 for w, bn in active)
    poles = np.array([w**2 for w, _ in active])
    strengths = np.array([bn for _, bn in active])

    def h(u):
        return u - wt + np.sum(strengths / (poles - u))

    def offset_h(j, sign):
        # h at u = poles[j] + sign * d, with the singular term kept exact
        others = np.arange(len(poles)) != j
        pj, bj = poles[j], strengths[j]

        def f(d):
            u = pj + sign * d
            return (u - wt + np.sum(strengths[others] / (poles[others] - u))
                    - sign * bj / d)
        return f

    edges = [0.0] + list(poles)
    zeros = []
    for j, lo in enumerate(edges):
        hi = edges[j + 1] if j + 1 < len(edges) else None
        a = lo * (1 + 1e-13) if j else 0.0
        if hi is None:
            b_ = max(2 * wt, 2 * a, 1.0)
            while h(b_) <= 0:
                b_ *= 2
        else:
            b_ = hi * (1 - 1e-13)
        ha, hb = h(a), h(b_)
        if ha < 0 < hb:
            u = optimize.brentq(h, a, b_, xtol=1e-300, rtol=1e-15, maxiter=500)
        elif ha >= 0 and j:
            f = offset_h(j - 1, +1.0)
            u = lo + optimize.brentq(f, 1e-300, a - lo, xtol=1e-300, rtol=1e-15, maxiter=2000)
        elif hb <= 0 and hi is not None:
            f = offset_h(j, -1.0)
            u = hi - optimize.brentq(f, 1e-300, hi - b_, xtol=1e-300, rtol=1e-15,
                                     maxiter=2000)
        else:
            raise BracketingError("no sign change of h in interval", (np.sqrt(a), np.sqrt(b_)))
        zeros.append(np.sqrt(u))
    return tuple(zeros)


def h_zeros(ctx):
    """Sorted positive zeros of h at site ``ctx.x`` (one zero per pole interval)."""
    if ctx.x is None:
        raise DomainError("h_zeros needs a single site")
    omega, b = _pole_terms(ctx)
    w0sq = float(ctx.medium.omega0[ctx.x])**2
    return np.array(_site_zeros(w0sq, tuple(map(float, omega)),
                                tuple(map(float, np.atleast_1d(b)))))


def all_h_zeros(medium, reservoir):
    """List of zero arrays, one per site."""
    return [h_zeros(SpectralContext(medium, reservoir, x)) for x in range(medium.size)]


def zero_table(medium, reservoir):
    """h-zeros as a (sites, K) array padded with NaN."""
    zs = all_h_zeros(medium, reservoir)
    k = max((len(z) for z in zs), default=0)
    out = np.full((len(zs), k), np.nan)
    for x, z in enumerate(zs):
        out[x, :len(z)] = z
    return out


def h_near_zero(ctx, anchor, offset, zeros):
    """h at s = anchor + offset for all sites, exact in the offset.

    On sites with a zero z at ``anchor``, h = (s^2 - z^2) * dh with dh the
    divided difference of h in s^2, so a root resolved more finely than a
    double near the zero still yields an accurate h.  ``zeros`` comes from
    :func:`zero_table`.
    """
    s = anchor + offset
    h = np.array(h_eval(ctx, s, guard=False), dtype=float)
    if zeros.size == 0 or anchor <= 0:
        return h
    match = np.abs(zeros - anchor) <= 1e-12 * anchor
    rows = np.nonzero(match.any(axis=1))[0]
    if len(rows) == 0:
        return h
    z = np.where(match[rows], zeros[rows], 0.0).sum(axis=1)
    omega, b = _pole_terms(ctx)
    dh = np.ones(len(rows))
    if len(omega):
        w2 = omega[:, None]**2
        dh = dh + np.sum(b[:, rows] / ((w2 - s**2) * (w2 - z**2)), axis=0)
    h[rows] = (anchor - z + offset) * (anchor + z + offset) * dh
    return h


# --------------------------------------------------------------------------
# continuum bath

def _cont(ctx):
    if not isinstance(ctx.reservoir, ContinuumReservoir):
        raise DomainError("operation needs a continuum reservoir")
    return ctx.reservoir


def _site_list(ctx):
    return range(ctx.medium.size) if ctx.x is None else [ctx.x]


def _amp(res, x):
    return res.amplitude[x % len(res.amplitude)]


def _cquad(f, a, b, points=None, epsrel=TAU_QUAD):
    kw = dict(epsabs=0.0, epsrel=epsrel, limit=2000)
    if points is not None:
        pts = sorted(p for p in points if a < p < b)
        if pts:
            kw["points"] = pts
    re, er = integrate.quad(lambda w: f(w).real, a, b, full_output=0, **kw)[:2]
    im, ei = integrate.quad(lambda w: f(w).imag, a, b, full_output=0, **kw)[:2]
    return complex(re, im), abs(complex(er, ei))


def _check_quad(val, err, scale):
    if err > max(10 * TAU_QUAD * max(abs(val), scale), 1e-14):
        raise AccuracyError(f"quadrature did not converge (error estimate {err:.3e})", err)


def hc_eval(ctx, z, branch=Branch.UPPER):
    """Continuum response function on the requested branch, by quadrature.

    UPPER / LOWER integrate the spectral representation over the bath band;
    CONTINUED uses the shifted-contour form valid in |Im z| < cutoff / 2.
    """
    res = _cont(ctx)
    z = complex(z)
    branch = Branch(branch)
    if branch is Branch.UPPER and not z.imag > 0:
        raise DomainError("upper branch needs Im z > 0")
    if branch is Branch.LOWER and not z.imag < 0:
        raise DomainError("lower branch needs Im z < 0")
    gam = res.strip_halfwidth
    if branch is Branch.CONTINUED and not abs(z.imag) < gam:
        raise DomainError(f"continued branch needs |Im z| < {gam}")
    wc, wmax = res.cutoff, res.omega_max
    out = []
    for x in _site_list(ctx):
        rho, w0 = ctx.medium.rho[x], ctx.medium.omega0[x]
        b2 = _amp(res, x)**2
        if b2 == 0:
            out.append(z**2 - w0**2)
            continue
        if branch is Branch.CONTINUED:
            # line Im w = -gam, param w = u - i gam over the whole axis
            def f(u):
                w = u - 1j * gam
                return np.exp(-w**2 / wc**2) / (w**2 - z**2)
            ext = wmax + 2 * gam
            pts = [abs(z.real) + d for d in (-gam, 0, gam)]
            pts += [-p for p in pts]
            val, err = _cquad(f, -ext, ext, points=pts)
            _check_quad(val, err, np.sqrt(np.pi) * wc / (gam**2 + abs(z)**2))
            hc = (z**2 - w0**2 + b2 * z**2 * val / (2 * rho**2)
                  + 1j * np.pi * z * b2 * np.exp(-z**2 / wc**2) / (2 * rho**2))
        else:
            eta = abs(z.imag)
            def f(w):
                return np.exp(-w**2 / wc**2) / (w**2 - z**2)
            pts = [z.real + k * eta for k in (-10, -1, 0, 1, 10)]
            val, err = _cquad(f, 0.0, wmax, points=pts)
            _check_quad(val, err, np.sqrt(np.pi) * wc)
            hc = z**2 - w0**2 + b2 * z**2 * val / rho**2
        out.append(hc)
    return out[0] if ctx.x is not None else np.array(out)


def hc_closed_form(ctx, z, branch=Branch.UPPER):
    """Gaussian-bath h_c through the Faddeeva function (oracle and fast path).

    int_0^inf exp(-w^2/wc^2)/(w^2 - z^2) dw = i pi w(z/wc) / (2 z) for Im z > 0,
    and the Faddeeva function is entire, which gives the continuation.
    """
    res = _cont(ctx)
    z = np.asarray(z, complex)
    branch = Branch(branch)
    zz = np.conj(z) if branch is Branch.LOWER else z
    rho = ctx.field(ctx.medium.rho)
    w0 = ctx.field(ctx.medium.omega0)
    b2 = ctx.field(np.broadcast_to(res.amplitude**2, ctx.medium.rho.shape))
    zz_ = zz[..., None] if ctx.x is None else zz
    g = zz_**2 - w0**2 + 1j * np.pi * b2 * zz_ * special.wofz(zz_ / res.cutoff) / (2 * rho**2)
    return np.conj(g) if branch is Branch.LOWER else g


def richardson_zero(etas, values):
    """Extrapolate samples f(eta_i) to eta -> 0 with Neville's scheme."""
    etas = np.asarray(etas, float)
    p = [np.asarray(v, complex) for v in values]
    n = len(etas)
    for k in range(1, n):
        p = [(etas[i + k] * p[i] - etas[i] * p[i + 1]) / (etas[i + k] - etas[i])
             for i in range(n - k)]
    return p[0]


BOUNDARY_ETAS = (1e-2, 1e-3, 1e-4)


def hc_boundary(ctx, w, etas=BOUNDARY_ETAS, evaluator=None):
    """Real-axis boundary value h_c(w + i0) by extrapolation in the offset."""
    evaluator = evaluator or hc_eval
    sgn = 1.0
    vals = [evaluator(ctx, w + 1j * sgn * e, Branch.UPPER) for e in etas]
    return richardson_zero(etas, vals)


def epsilon_c(ctx, z, branch=Branch.UPPER, evaluator=None):
    evaluator = evaluator or hc_closed_form
    hc = evaluator(ctx, z, branch)
    alpha, rho = ctx.field(ctx.medium.alpha), ctx.field(ctx.medium.rho)
    return 1.0 - alpha**2 / (eps0 * rho * hc)


# --------------------------------------------------------------------------
# algebraic identities

def check_h_identities(ctx, s, s_prime):
    """Residuals of the two-frequency bath-sum identity at (s, s') and of the
    diagonal identity at s; both relative to the size of the terms."""
    omega, b = _pole_terms(ctx)
    wt = ctx.field(omega_tilde_sq(ctx.medium, ctx.reservoir))
    hs, hp = h_eval(ctx, s), h_eval(ctx, s_prime)
    w2 = omega[:, None] if ctx.x is None else omega
    w2 = w2**2
    lhs = np.sum(b * (w2 - s * s_prime) / ((w2 - s**2) * (w2 - s_prime**2)), axis=0)
    rhs = (s * hs + s_prime * hp) / (s + s_prime) - s**2 - s_prime**2 + s * s_prime + wt
    scale = np.maximum.reduce(np.broadcast_arrays(np.abs(lhs), np.abs(rhs), np.abs(wt),
                                                  s**2 + s_prime**2))
    r1 = np.max(np.abs(lhs - rhs) / scale)
    lhs2 = np.sum(b * (w2 + s**2) / (w2 - s**2)**2, axis=0)
    dsh = hs + 2 * s**2 * dh_dz2(ctx, s)
    rhs2 = dsh - 3 * s**2 + wt
    scale2 = np.maximum.reduce(np.broadcast_arrays(np.abs(lhs2), np.abs(rhs2), np.abs(wt),
                                                   3 * s**2))
    r2 = np.max(np.abs(lhs2 - rhs2) / scale2)
    return float(r1), float(r2)
