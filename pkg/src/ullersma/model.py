"""Geometries, matter and bath parameterisations, model assembly.

Spatial discretisations expose the same small surface used everywhere else:

``size``         number of field samples (grid points or 1 for a plane wave)
``cell_volume``  quadrature weight of one sample, so <u, v> = dv * sum(u v)
``stiffness()``  symmetric positive-definite matrix for c^2 curl curl

The 1D ring uses a twisted (antiperiodic) wrap, u(x + L) = -u(x).  This keeps
the boundary-free partial integrations of a periodic box while removing the
uniform zero mode of the Laplacian, which otherwise produces a free-drifting
gauge sector with no positive normal-mode frequency.
"""
from dataclasses import dataclass, field
import itertools

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, ValidationError
from .units import c

# exp(-w^2/wc^2) <= 1e-12 beyond this multiple of the cutoff
GAUSSIAN_TAIL = float(np.sqrt(12.0 * np.log(10.0)))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Layered1D:
    """Uniform ring of ``points`` cells on ``[0, length)``; cell centres are
    ``(i + 1/2) * dx``."""

    length: float
    points: int
    periodic: bool = True

    def __post_init__(self):
        if not self.length > 0:
            raise ValidationError("domain length must be positive", "geometry.length")
        if self.points < 16 or self.points % 2:
            raise ValidationError(
                f"grid point count must be even and >= 16, got {self.points}",
                "geometry.points",
            )
        if not self.periodic:
            raise ValidationError("only closed (periodic) rings are supported",
                                  "geometry.periodic")

    @property
    def size(self):
        return self.points

    @property
    def dx(self):
        return self.length / self.points

    @property
    def cell_volume(self):
        return self.dx

    @property
    def x(self):
        return (np.arange(self.points) + 0.5) * self.dx

    def stiffness(self):
        """c^2 times minus the second difference with the twisted wrap."""
        m, h2 = self.points, self.dx**2
        k = np.zeros((m, m))
        i = np.arange(m)
        k[i, i] = 2.0
        k[i[:-1], i[:-1] + 1] = -1.0
        k[i[:-1] + 1, i[:-1]] = -1.0
        k[0, m - 1] = k[m - 1, 0] = 1.0
        return c**2 * k / h2

    def wavenumbers(self):
        """Continuum wavenumbers q = pi (2m + 1) / L, one per |q| pair."""
        m = np.arange(self.points // 2)
        return np.pi * (2 * m + 1) / self.length

    def discrete_wavenumbers(self):
        """Lattice-dispersed q~ with q~^2 = 4 sin^2(q dx / 2) / dx^2."""
        q = self.wavenumbers()
        return 2.0 * np.sin(q * self.dx / 2.0) / self.dx

    def plane_waves(self):
        """Real orthonormal plane-wave basis, columns ordered as (cos, sin) per |q|."""
        cols, x = [], self.x
        norm = np.sqrt(2.0 / self.length)
        for q in self.wavenumbers():
            cols.append(norm * np.cos(q * x))
            cols.append(norm * np.sin(q * x))
        return np.column_stack(cols)


@dataclass(frozen=True)
class PlaneWave:
    """One transverse plane-wave amplitude of a homogeneous medium.

    The field variables are the plane-wave coefficients, so the block has a
    single sample with unit weight and stiffness c^2 q^2.
    """

    q: float

    def __post_init__(self):
        if not self.q > 0:
            raise ValidationError("wavenumber must be positive", "q")

    size = 1
    cell_volume = 1.0

    def stiffness(self):
        return np.array([[c**2 * self.q**2]])


@dataclass(frozen=True)
class Homogeneous3D:
    box: float
    m_max: int

    def __post_init__(self):
        if not self.box > 0:
            raise ValidationError("box side must be positive", "geometry.box")
        if self.m_max < 1:
            raise ValidationError("m_max must be >= 1", "geometry.m_max")

    size = 1
    cell_volume = 1.0

    def wavevectors(self):
        """All lattice vectors 2 pi m / L with 0 < max|m_j| <= m_max."""
        r = range(-self.m_max, self.m_max + 1)
        out = [m for m in itertools.product(r, r, r) if any(m)]
        return np.array(out, dtype=int), 2 * np.pi * np.array(out, float) / self.box

    def blocks(self):
        """Yield (m, q_vec, PlaneWave) for every lattice vector."""
        ms, qs = self.wavevectors()
        for m, q in zip(ms, qs):
            yield tuple(m), q, PlaneWave(float(np.linalg.norm(q)))


@dataclass(frozen=True)
class MediumProfile:
    rho: np.ndarray
    omega0: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        rho, w0, al = (np.atleast_1d(np.asarray(v, float))
                       for v in (self.rho, self.omega0, self.alpha))
        n = max(len(rho), len(w0), len(al))
        rho, w0, al = (np.broadcast_to(v, (n,)) for v in (rho, w0, al))
        if np.any(rho <= 0):
            raise ValidationError("mass density must be positive", "medium.rho")
        if np.any(w0 <= 0):
            raise ValidationError("bare frequency must be positive", "medium.omega0")
        if np.any(al < 0):
            raise ValidationError("coupling must be non-negative", "medium.alpha")
        object.__setattr__(self, "rho", _frozen(rho))
        object.__setattr__(self, "omega0", _frozen(w0))
        object.__setattr__(self, "alpha", _frozen(al))

    @property
    def size(self):
        return len(self.rho)

    @classmethod
    def uniform(cls, size, rho, omega0, alpha):
        return cls(np.full(size, rho), np.full(size, omega0), np.full(size, alpha))

    def is_homogeneous(self):
        return all(np.ptp(a) == 0 for a in (self.rho, self.omega0, self.alpha))


@dataclass(frozen=True)
class DiscreteReservoir:
    """N bath oscillators; frequencies are spatially constant, couplings
    ``beta[n, site]`` may vary."""

    omega: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omega, float))
        b = np.asarray(self.beta, float)
        if w.ndim != 1:
            raise ValidationError("frequencies must be a 1D sequence", "reservoir.omega")
        if len(w) and (w[0] <= 0 or np.any(np.diff(w) <= 0)):
            raise ValidationError("reservoir frequencies must be positive and strictly "
                                  "increasing", "reservoir.omega")
        if b.ndim == 1:
            b = b[:, None]
        if len(w) == 0:
            b = np.zeros((0, b.shape[1] if b.ndim == 2 and b.size else 1))
        if b.shape[0] != len(w):
            raise ValidationError("one coupling profile per oscillator required",
                                  "reservoir.beta")
        object.__setattr__(self, "omega", _frozen(w))
        object.__setattr__(self, "beta", _frozen(b))

    @property
    def N(self):
        return len(self.omega)

    @classmethod
    def empty(cls, size=1):
        return cls(np.zeros(0), np.zeros((0, size)))

    def profile(self, size):
        """Couplings broadcast to ``(N, size)``."""
        return np.broadcast_to(self.beta, (self.N, size))


@dataclass(frozen=True)
class ContinuumReservoir:
    """Gaussian spectral coupling beta(w; x) = b(x) exp(-w^2 / (2 wc^2))."""

    cutoff: float
    amplitude: np.ndarray
    omega_max: float = None
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ConfigurationError(f"unknown coupling family {self.family!r}",
                                     "reservoir.family")
        if not self.cutoff > 0:
            raise ValidationError("cutoff must be positive", "reservoir.cutoff")
        object.__setattr__(self, "amplitude",
                           _frozen(np.atleast_1d(np.asarray(self.amplitude, float))))
        if self.omega_max is None:
            object.__setattr__(self, "omega_max", GAUSSIAN_TAIL * self.cutoff)
        elif self.omega_max < GAUSSIAN_TAIL * self.cutoff * (1 - 1e-12):
            raise ValidationError("omega_max too small for the Gaussian tail tolerance",
                                  "reservoir.omega_max")

    @property
    def strip_halfwidth(self):
        return 0.5 * self.cutoff

    def beta(self, w):
        """Coupling at (possibly complex) frequency; shape ``w.shape + (sites,)``."""
        w = np.asarray(w)[..., None]
        return self.amplitude * np.exp(-w**2 / (2 * self.cutoff**2))

    def beta_sq(self, w):
        w = np.asarray(w)[..., None]
        return self.amplitude**2 * np.exp(-w**2 / self.cutoff**2)

    def coupling_integral(self):
        """Closed form of int_0^inf beta^2 dw per site."""
        return self.amplitude**2 * np.sqrt(np.pi) * self.cutoff / 2.0

    def profile(self, size):
        return np.broadcast_to(self.amplitude, (size,))


def omega_tilde_sq(medium, reservoir, x=None):
    """w0^2 + sum_n beta_n^2 / rho^2 at site ``x`` (all sites when None).

    For a continuum bath the sum becomes the integral of beta^2 / rho^2.
    """
    sl = slice(None) if x is None else x
    if isinstance(reservoir, ContinuumReservoir):
        extra = np.broadcast_to(reservoir.coupling_integral(), medium.rho.shape)
        val = medium.omega0**2 + extra / medium.rho**2
    else:
        beta = reservoir.profile(medium.size)
        val = medium.omega0**2 + np.sum(beta**2, axis=0) / medium.rho**2
    return val[sl]


def omega_tilde_sq_quadrature(medium, reservoir, x=0):
    """Independent quadrature of the continuum shift, used as an oracle."""
    rho = medium.rho[x]
    f = lambda w: reservoir.beta_sq(w)[..., x % len(reservoir.amplitude)] / rho**2
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return medium.omega0[x]**2 + val


def sample_profile(values, edges, geometry):
    """Piecewise-constant sampling on cell centres.

    ``edges`` are interior layer boundaries as fractions of the domain
    length; layer j covers the half-open interval [e_{j-1}, e_j).
    """
    values = np.atleast_1d(np.asarray(values, float))
    edges = np.atleast_1d(np.asarray(edges if edges is not None else [], float))
    if len(values) == 1:
        return np.full(geometry.size, values[0])
    if len(values) != len(edges) + 1:
        raise ConfigurationError(
            f"{len(values)} layer values need {len(values) - 1} edges, got {len(edges)}")
    if np.any(np.diff(edges) <= 0) or np.any((edges <= 0) | (edges >= 1)):
        raise ConfigurationError("layer edges must be increasing fractions in (0, 1)")
    frac = geometry.x / geometry.length
    return values[np.searchsorted(edges, frac, side="right")]


@dataclass(frozen=True)
class Model:
    geometry: object
    medium: MediumProfile
    reservoir: object
    continuum: ContinuumReservoir = None
    meta: dict = field(default_factory=dict, compare=False)


def build_model(config):
    """Assemble geometry, medium and reservoir from a parsed :class:`RunConfig`."""
    from .config import RunConfig  # local import keeps model free of I/O

    if not isinstance(config, RunConfig):
        config = RunConfig.from_dict(config)
    g = config.section("geometry")
    kind = g.get("kind", "layered1d")
    if kind == "layered1d":
        geometry = Layered1D(g.float("length"), g.int("points"))
    elif kind == "homogeneous3d":
        geometry = Homogeneous3D(g.float("box"), g.int("m_max"))
    elif kind == "planewave":
        geometry = PlaneWave(g.float("q"))
    else:
        raise ConfigurationError(f"unknown geometry kind {kind!r}", "geometry.kind")

    md = config.section("medium")
    edges = md.floats("layer_edges", default=[])
    if isinstance(geometry, Layered1D):
        prof = lambda key: sample_profile(md.floats(key), edges, geometry)
    else:
        def prof(key):
            v = md.floats(key)
            if len(v) != 1:
                raise ConfigurationError("homogeneous geometries need scalar parameters",
                                         f"medium.{key}")
            return np.array(v)
    medium = MediumProfile(prof("rho"), prof("omega0"), prof("alpha"))

    r = config.section("reservoir")
    rkind = r.get("kind", "discrete")
    continuum = None
    if rkind == "discrete":
        omega = r.floats("omega", default=[])
        if r.has("beta_layers"):
            rows = [np.array([float(v) for v in part.split(",")])
                    for part in r.get("beta_layers").split(";") if part.strip()]
            per_layer = np.array(rows)  # (layers, N)
            if per_layer.shape[1] != len(omega):
                raise ConfigurationError("beta_layers rows need one entry per oscillator",
                                         "reservoir.beta_layers")
            beta = np.stack([sample_profile(per_layer[:, n], edges, geometry)
                             for n in range(len(omega))]) if len(omega) else None
        else:
            b = r.floats("beta", default=[])
            if len(b) != len(omega):
                raise ConfigurationError("beta needs one entry per oscillator",
                                         "reservoir.beta")
            beta = np.array(b)[:, None] * np.ones((1, geometry.size))
        reservoir = (DiscreteReservoir(omega, beta) if len(omega)
                     else DiscreteReservoir.empty(geometry.size))
    elif rkind == "continuum":
        amp = md_amp = r.floats("amplitude")
        if isinstance(geometry, Layered1D):
            md_amp = sample_profile(amp, edges, geometry)
        continuum = ContinuumReservoir(r.float("cutoff"), md_amp,
                                       r.float("omega_max", default=None))
        from .continuum import smear_reservoir
        reservoir = smear_reservoir(continuum, r.int("smear_n", default=128))
    else:
        raise ConfigurationError(f"unknown reservoir kind {rkind!r}", "reservoir.kind")
    return Model(geometry, medium, reservoir, continuum)
