"""Normal modes of the field-matter system.

The mode condition is lambda(k, s) = 0 for the eigenvalues of the real
symmetric operator L(s) = -K + diag(s^2 eps(s; x)), K the stiffness matrix.
Between consecutive poles of eps every sorted eigenvalue increases strictly
with s, so roots are bracketed by counting negative eigenvalues.  Sites with
alpha = 0 (and bath oscillators with beta_n = 0) carry matter modes that do
not couple to the field; those are added in closed form.
"""
from dataclasses import dataclass, field
import enum
import warnings

import numpy as np
from scipy import linalg, optimize

from .errors import (BranchCrossingError, CrossValidationError, DomainError,
                     PoleBandError, ResonanceError, SpectralCountError)
from .model import DiscreteReservoir, Layered1D, MediumProfile, PlaneWave
from .phase_space import Layout, hamiltonian_matrix, symplectic_form
from .spectral import (TAU_POLE, SpectralContext, _site_zeros, ds2eps_ds, epsilon_eval,
                       h_eval, h_near_zero, h_zeros, zero_table)
from .units import c, eps0

TAU_ORTH = 1e-10        # per grid point
TAU_XVAL = 1e-8
TAU_GREEN = 1e-8
OVERLAP_MIN = 0.9
POLE_GAP = 1e-7         # sampling offset from a pole, relative to the local pole spacing
CLUSTER_RTOL = 1e-8


# --------------------------------------------------------------------------
# poles of eps

@dataclass(frozen=True)
class Pole:
    value: float
    sites: tuple
    spacing: float

    @property
    def multiplicity(self):
        return len(self.sites)


def pole_set(medium, reservoir):
    """Distinct poles of eps over coupled sites (alpha > 0), ascending."""
    raw = []
    for x in range(medium.size):
        if medium.alpha[x] > 0:
            for p in h_zeros(SpectralContext(medium, reservoir, x)):
                raw.append((float(p), x))
    raw.sort()
    groups = []
    for p, x in raw:
        if groups and abs(p - groups[-1][0]) <= 1e-12 * p:
            groups[-1][1].append(x)
        else:
            groups.append((p, [x]))
    vals = np.array([g[0] for g in groups])
    out = []
    for i, (p, xs) in enumerate(groups):
        gaps = [p]
        if i:
            gaps.append(p - vals[i - 1])
        if i + 1 < len(vals):
            gaps.append(vals[i + 1] - p)
        out.append(Pole(p, tuple(sorted(xs)), min(gaps)))
    return out


# --------------------------------------------------------------------------
# operator and eigenproblem

@dataclass(frozen=True)
class OperatorMatrix:
    s: complex
    matrix: np.ndarray
    slope: np.ndarray     # diagonal of d(s^2 eps)/ds, real s only
    cell_volume: float


def _check_band(poles, s):
    for p in poles:
        if abs(s - p.value) < TAU_POLE * p.spacing:
            raise PoleBandError(f"s={s} inside the guard band of the pole {p.value}",
                                p.sites)


def assemble_operator(geometry, medium, reservoir, s, poles=None):
    """L(s) = -K + diag(s^2 eps(s; x)) for real s > 0 or complex s."""
    ctx = SpectralContext(medium, reservoir)
    if poles is None:
        poles = pole_set(medium, reservoir)
    real = not np.iscomplexobj(s) or np.imag(s) == 0
    if real:
        s = float(np.real(s))
        if not s > 0:
            raise DomainError("operator assembly needs s > 0")
        _check_band(poles, s)
    eps = epsilon_eval(ctx, s)
    L = -geometry.stiffness() + np.diag(s**2 * eps)
    slope = ds2eps_ds(ctx, s) if real else None
    return OperatorMatrix(s, L, slope, geometry.cell_volume)


@dataclass(frozen=True)
class Eigenpairs:
    s: float
    lam: np.ndarray   # descending
    u: np.ndarray     # columns, <u, u> = dv * sum |u|^2 = 1
    cell_volume: float

    def orthonormality_residual(self):
        dv = self.cell_volume
        return float(np.max(np.abs(dv * self.u.T @ self.u - np.eye(len(self.lam)))))

    def completeness_residual(self):
        dv = self.cell_volume
        return float(np.max(np.abs(dv * self.u @ self.u.T - np.eye(len(self.lam)))))

    def rayleigh_residual(self, op):
        dv = self.cell_volume
        rq = dv * np.einsum("ik,ij,jk->k", self.u, op.matrix, self.u)
        scale = max(np.max(np.abs(self.lam)), 1.0)
        return float(np.max(np.abs(rq - self.lam)) / scale)


def eigensolve_at(op):
    w, v = linalg.eigh(op.matrix)
    w, v = w[::-1], v[:, ::-1]
    v = v / np.sqrt(op.cell_volume)
    return Eigenpairs(float(np.real(op.s)), w, v, op.cell_volume)


# --------------------------------------------------------------------------
# branch tracking

@dataclass
class BranchTable:
    """Eigenvalue branches lambda(k, s) on a sampled s grid.

    ``lam[i, k]`` and ``u[i][:, k]`` follow branch k; ``gap_after[i]`` marks a
    pole between samples i and i+1.
    """

    geometry: object
    medium: MediumProfile
    reservoir: DiscreteReservoir
    s: np.ndarray
    lam: np.ndarray
    u: list
    gap_after: np.ndarray
    poles: list
    flagged: list = field(default_factory=list)

    @property
    def size(self):
        return self.lam.shape[1]

    @property
    def s_max(self):
        return float(self.s[-1])

    def pole_crossings(self, k, s_max=None):
        out = []
        for i in np.nonzero(self.gap_after)[0]:
            if s_max is not None and self.s[i + 1] > s_max:
                break
            if self.lam[i, k] > 0 > self.lam[i + 1, k]:
                out.append(0.5 * (self.s[i] + self.s[i + 1]))
        return out

    def sign_changes(self, k, s_max=None):
        n = 0
        for i in range(len(self.s) - 1):
            if self.gap_after[i] or (s_max is not None and self.s[i + 1] > s_max):
                continue
            if self.lam[i, k] < 0 <= self.lam[i + 1, k]:
                n += 1
        return n


def _clusters(w, tol):
    groups, cur = [], [0]
    for i in range(1, len(w)):
        if abs(w[i] - w[i - 1]) <= tol:
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    return [g for g in groups if len(g) > 1]


def _eig_sorted(geometry, medium, reservoir, poles, s):
    op = assemble_operator(geometry, medium, reservoir, s, poles)
    w, v = linalg.eigh(op.matrix)
    return w, v


def _link(prev_u, w, v):
    """Match eigenvectors v (columns) to the previous branch vectors."""
    tol = 1e-11 * max(np.max(np.abs(w)), 1.0)
    v = v.copy()
    for g in _clusters(w, tol):
        # rotate inside a degenerate cluster to follow the previous vectors
        W = v[:, g].T @ prev_u
        sel = np.argsort(-np.linalg.norm(W, axis=0))[:len(g)]
        Y, _, Zt = np.linalg.svd(W[:, sel])
        v[:, g] = v[:, g] @ (Y @ Zt)
    O = np.abs(prev_u.T @ v)
    rows, cols = optimize.linear_sum_assignment(-O)
    ov = O[rows, cols]
    v = v[:, cols]
    signs = np.sign(np.sum(prev_u * v, axis=0))
    signs[signs == 0] = 1.0
    return w[cols], v * signs, ov


def default_s_grid(geometry, medium, reservoir, poles=None, per_interval=12):
    """Sample points per pole interval, clustered towards the poles."""
    if poles is None:
        poles = pole_set(medium, reservoir)
    kmax = np.linalg.eigvalsh(geometry.stiffness())[-1]
    top = max([p.value for p in poles] + [np.sqrt(kmax)])
    s_max = 1.25 * top + 1e-3
    while True:
        try:
            w = np.linalg.eigvalsh(assemble_operator(geometry, medium, reservoir, s_max,
                                                     poles).matrix)
        except PoleBandError:
            s_max *= 1.01
            continue
        if w[0] > 0:
            break
        s_max *= 2.0
    edges = [0.0] + [p.value for p in poles] + [s_max]
    offs = [None] + [POLE_GAP * p.spacing for p in poles] + [None]
    intervals = []
    for j in range(len(edges) - 1):
        a, b = edges[j], edges[j + 1]
        lo = a + offs[j] if offs[j] else min(1e-6 * b, 1e-6)
        hi = b - offs[j + 1] if offs[j + 1] else b
        t = 0.5 * (1 - np.cos(np.pi * np.linspace(0, 1, per_interval)))
        pts = list(lo + (hi - lo) * t)
        for d, sgn, base in ((offs[j], 1, lo), (offs[j + 1], -1, hi)):
            if d:
                k = 10.0
                while k * d < 0.25 * (hi - lo):
                    pts.append(base + sgn * k * d)
                    k *= 10.0
        intervals.append(np.unique(pts))
    return intervals


def track_branches(geometry, medium, reservoir, s_grid=None, min_step=1e-12):
    """Follow every eigenvalue branch by maximal eigenvector overlap.

    ``s_grid`` is a list of sample arrays, one per pole interval (as from
    :func:`default_s_grid`); links with overlap below 0.9 are refined by
    bisection down to a relative step of ``min_step``.
    """
    poles = pole_set(medium, reservoir)
    if s_grid is None:
        s_grid = default_s_grid(geometry, medium, reservoir, poles)
    elif np.ndim(s_grid[0]) == 0:
        s_grid = [np.asarray(s_grid, float)]
    S, LAM, U, GAP, flagged = [], [], [], [], []
    prev = None
    for j, pts in enumerate(s_grid):
        queue = list(pts)
        first = True
        while queue:
            s = queue[0]
            w, v = _eig_sorted(geometry, medium, reservoir, poles, s)
            if prev is None:
                lam, vec, ov = w, v, np.ones(len(w))
            else:
                lam, vec, ov = _link(prev, w, v)
                if ov.min() < OVERLAP_MIN and not first and s - S[-1] > min_step * s:
                    queue.insert(0, 0.5 * (S[-1] + s))
                    continue
                if ov.min() < OVERLAP_MIN:
                    kbad = int(np.argmin(ov))
                    flagged.append((float(s), kbad, float(ov[kbad])))
                    if ov.min() < 0.5 and not first:
                        raise BranchCrossingError(
                            f"ambiguous eigenvector matching near s={s}", float(s))
            if S:
                GAP.append(first)
            S.append(float(s))
            LAM.append(lam)
            U.append(vec / np.sqrt(geometry.cell_volume))
            prev = vec
            queue.pop(0)
            first = False
    GAP.append(False)
    return BranchTable(geometry, medium, reservoir, np.array(S), np.array(LAM), U,
                       np.array(GAP, bool), poles, flagged)


def count_zeros_poles(branches, k, s_max=None):
    """(zeros, poles) of branch k on (0, s_max) from the tracked samples."""
    return branches.sign_changes(k, s_max), len(branches.pole_crossings(k, s_max))


# --------------------------------------------------------------------------
# mode table

@dataclass
class ModeTable:
    """Normal modes; ``kind`` is 'field' for lambda-roots and 'matter' for
    modes that do not involve the field.

    For matter modes ``k = -1``, ``u`` is zero and ``site`` / ``channel``
    locate the oscillator (channel 0 is the dielectric, n >= 1 bath n).
    """

    geometry: object
    medium: MediumProfile
    reservoir: DiscreteReservoir
    omega: np.ndarray
    k: np.ndarray
    l: np.ndarray
    u: np.ndarray          # (M, modes)
    dlam_ds: np.ndarray
    weight: np.ndarray
    kind: np.ndarray
    site: np.ndarray
    channel: np.ndarray
    tallies: dict = field(default_factory=dict)
    shift: "RootShift" = field(default=None, repr=False)
    _amps: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.omega)

    @property
    def layout(self):
        return Layout(self.geometry.size, self.reservoir.N)

    @property
    def cell_volume(self):
        return self.geometry.cell_volume

    def field_modes(self):
        return np.nonzero(self.kind == "field")[0]

    def amplitudes(self):
        """Complex mode vectors in canonical layout, one column per mode."""
        if self._amps is None:
            cols = [amplitudes_from_mode(self, i).vector() for i in range(len(self))]
            self._amps = np.array(cols).T if cols else np.zeros((self.layout.dim, 0))
        return self._amps

    def with_weights(self, weight):
        """Copy with replaced weights (used for fault injection)."""
        return ModeTable(self.geometry, self.medium, self.reservoir, self.omega, self.k,
                         self.l, self.u, self.dlam_ds, np.asarray(weight), self.kind,
                         self.site, self.channel, dict(self.tallies), self.shift)


@dataclass(frozen=True)
class RootShift:
    """Mode frequencies as anchor + offset, the anchor being the nearest pole
    of eps; ``zeros`` is the per-site table of h-zeros."""

    anchor: np.ndarray
    offset: np.ndarray
    zeros: np.ndarray

    def take(self, order):
        return RootShift(self.anchor[order], self.offset[order], self.zeros)


def assemble_shifted(geometry, medium, reservoir, anchor, offset, zeros):
    """L(s) at s = anchor + offset with h resolved in the offset.

    Close to a pole of eps the field profile varies much faster with s than
    a double can follow; working in the offset keeps L, its slope and the
    matter amplitudes mutually consistent.
    """
    ctx = SpectralContext(medium, reservoir)
    s = anchor + offset
    h = h_near_zero(ctx, anchor, offset, zeros)
    eps = epsilon_eval(ctx, s, h)
    L = -geometry.stiffness() + np.diag(s**2 * eps)
    return OperatorMatrix(s, L, ds2eps_ds(ctx, s, h), geometry.cell_volume)


def _anchor(poles, lo, hi):
    """Nearest pole value to the interval [lo, hi] (0 without poles)."""
    if not poles:
        return 0.0
    vals = np.array([p.value for p in poles])
    dist = np.maximum(np.maximum(lo - vals, vals - hi), 0.0)
    return float(vals[np.argmin(dist)])


def _off_bath_pole(reservoir, a, d):
    """Move a + d a few ulps off a bath frequency it hits exactly; eps is
    finite there but its rational form evaluates as inf / inf."""
    w = np.asarray(reservoir.omega, float)
    while np.any(w == a + d):
        r = np.nextafter(np.nextafter(a + d, np.inf), np.inf)
        d = float(r - a)
    return d


def _root_vectors(geometry, medium, reservoir, a, d, count, zeros):
    """Eigenvectors for the root ``a + d`` of multiplicity ``count``.

    The (numerically) degenerate null space of L is found from the
    eigenvalue cluster nearest zero; inside it the pencil (V^T L V, V^T L' V)
    splits residual near-degeneracies and makes the vectors orthogonal with
    respect to L', which decouples the corresponding normal modes.
    """
    for _ in range(4):
        d = _off_bath_pole(reservoir, a, d)
        op = assemble_shifted(geometry, medium, reservoir, a, d, zeros)
        w, v = linalg.eigh(op.matrix)
        j0 = int(np.argmin(np.abs(w)))
        tol = 1e-11 * max(np.max(np.abs(w)), 1.0)
        idx = [j for j in range(len(w)) if abs(w[j] - w[j0]) <= tol]
        if len(idx) < count:
            idx = list(np.argsort(np.abs(w))[:count])
        V = v[:, idx]
        A = V.T @ op.matrix @ V
        B = V.T @ (op.slope[:, None] * V)
        mu, W = linalg.eigh(A, B)
        offsets = d - mu
        # Newton step on the pencil; stop once the shift is at rounding level
        if np.max(np.abs(mu)) <= 1e-15 * max(abs(d), 1e-300) or \
                np.max(np.abs(mu)) <= 1e-16 * (a + d):
            break
        d = float(np.mean(offsets))
    vecs = V @ W
    dv = geometry.cell_volume
    vecs = vecs / np.sqrt(dv * np.sum(vecs**2, axis=0))
    out = []
    for dd, u in zip(offsets, vecs.T):
        if u[np.argmax(np.abs(u))] < 0:
            u = -u
        slope = dv * float(u @ (op.slope * u))
        out.append((a, _off_bath_pole(reservoir, a, float(dd)), u, slope))
    return out


def _dark_modes(medium, reservoir):
    """(Omega, site, channel) for matter oscillators decoupled from the field."""
    out = []
    beta = reservoir.profile(medium.size)
    for x in range(medium.size):
        inactive = [n for n in range(reservoir.N) if beta[n, x] == 0]
        for n in inactive:
            out.append((float(reservoir.omega[n]), x, n + 1))
        if medium.alpha[x] == 0:
            for p in h_zeros(SpectralContext(medium, reservoir, x)):
                out.append((float(p), x, 0))
    return out


def find_mode_frequencies(branches):
    """All normal modes from a :class:`BranchTable`, plus the uncoupled matter modes."""
    g, md, res = branches.geometry, branches.medium, branches.reservoir
    poles = branches.poles
    S, LAM = branches.s, branches.lam
    M = branches.size
    zeros = zero_table(md, res)
    raw = []   # (anchor, offset, pair index)
    for i in range(len(S) - 1):
        if branches.gap_after[i]:
            continue
        n0 = int(np.sum(LAM[i] < 0))
        n1 = int(np.sum(LAM[i + 1] < 0))
        if n1 > n0:
            raise SpectralCountError("eigenvalue count increased between poles",
                                     {"s": (S[i], S[i + 1]), "neg": (n0, n1)})
        a = _anchor(poles, S[i], S[i + 1])
        for j in range(n1, n0):
            def f(d, j=j):
                d = _off_bath_pole(res, a, d)
                return np.linalg.eigvalsh(
                    assemble_shifted(g, md, res, a, d, zeros).matrix)[j]
            lo, hi = S[i] - a, S[i + 1] - a
            if f(hi) == 0:
                d = hi
            else:
                d = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=300)
            raw.append((a, d, i))
    raw.sort(key=lambda t: t[0] + t[1])

    # degenerate roots are found once per sorted eigenvalue; solve each
    # multiplet together so its eigenvectors come out L'-orthogonal
    modes = []
    i0 = 0
    while i0 < len(raw):
        a, d0 = raw[i0][0], raw[i0][1]
        i1 = i0 + 1
        while i1 < len(raw) and (raw[i1][0] + raw[i1][1]) - (raw[i1 - 1][0] + raw[i1 - 1][1]) \
                <= CLUSTER_RTOL * (raw[i1][0] + raw[i1][1]):
            i1 += 1
        sols = _root_vectors(g, md, res, a, d0, 1, zeros)
        n = min(len(sols), i1 - i0)
        sols = sols[:n]
        if n > 1:
            dm = float(np.mean([(t[0] - a) + t[1] for t in raw[i0:i0 + n]]))
            sols = _root_vectors(g, md, res, a, dm, n, zeros)
        sols.sort(key=lambda t: t[1])
        for (aa, dd, u, slope), (_, _, pair) in zip(sols, raw[i0:i0 + n]):
            modes.append((aa, dd, u, slope, pair))
        i0 += n

    # attach branch labels by overlap with the tracked vectors
    k_of = np.full(len(modes), -1)
    by_pair = {}
    for m, (_, _, _, _, pair) in enumerate(modes):
        by_pair.setdefault(pair, []).append(m)
    dv = g.cell_volume
    for pair, ms in by_pair.items():
        cand = [k for k in range(M) if LAM[pair, k] < 0 <= LAM[pair + 1, k]]
        if len(cand) != len(ms):
            cand = list(range(M))
        Ub = branches.u[pair][:, cand]
        O = np.abs(np.array([dv * modes[m][2] @ Ub for m in ms]))
        rows, cols = optimize.linear_sum_assignment(-O)
        for r_, c_ in zip(rows, cols):
            k_of[ms[r_]] = cand[c_]

    tallies = {}
    for k in range(M):
        z = int(np.sum(k_of == k))
        p = len(branches.pole_crossings(k))
        tallies[k] = (z, p)
    bad = {k: t for k, t in tallies.items() if t[0] - t[1] != 1}
    if bad:
        raise SpectralCountError(f"{len(bad)} branches violate zeros - poles = 1 on s > 0",
                                 bad)

    anchor = np.array([m[0] for m in modes])
    offset = np.array([m[1] for m in modes])
    omega = anchor + offset
    if np.any(omega <= 0):
        raise SpectralCountError("non-positive mode frequency")
    slopes = np.array([m[3] for m in modes])
    if np.any(slopes <= 0):
        raise SpectralCountError("non-positive dlambda/ds at a root",
                                 {"negative": list(np.nonzero(slopes <= 0)[0])})
    U = np.array([m[2] for m in modes]).T if modes else np.zeros((M, 0))
    l = np.zeros(len(modes), int)
    for k in range(M):
        idx = np.nonzero(k_of == k)[0]
        l[idx[np.argsort(omega[idx])]] = np.arange(len(idx))

    dark = _dark_modes(md, res)
    nd = len(dark)
    table = ModeTable(
        g, md, res,
        omega=np.r_[omega, [d[0] for d in dark]],
        k=np.r_[k_of, np.full(nd, -1)],
        l=np.r_[l, np.zeros(nd, int)],
        u=np.hstack([U, np.zeros((M, nd))]),
        dlam_ds=np.r_[slopes, np.full(nd, np.nan)],
        weight=np.r_[np.sqrt(1.0 / eps0) * omega / np.sqrt(slopes), np.zeros(nd)],
        kind=np.array(["field"] * len(modes) + ["matter"] * nd),
        site=np.r_[np.full(len(modes), -1), [d[1] for d in dark]].astype(int),
        channel=np.r_[np.full(len(modes), -1), [d[2] for d in dark]].astype(int),
        tallies=tallies,
        shift=RootShift(np.r_[anchor, [d[0] for d in dark]], np.r_[offset, np.zeros(nd)],
                        zeros),
    )
    expected = (res.N + 2) * M
    if len(table) != expected:
        raise SpectralCountError(f"found {len(table)} modes, expected {expected}",
                                 {"field": len(modes), "matter": nd})
    order = np.lexsort((table.k, table.omega))
    return _reorder(table, order)


def _reorder(t, order):
    return ModeTable(t.geometry, t.medium, t.reservoir, t.omega[order], t.k[order],
                     t.l[order], t.u[:, order], t.dlam_ds[order], t.weight[order],
                     t.kind[order], t.site[order], t.channel[order], t.tallies,
                     None if t.shift is None else t.shift.take(order))


def solve_modes(geometry, medium, reservoir):
    return find_mode_frequencies(track_branches(geometry, medium, reservoir))


# --------------------------------------------------------------------------
# amplitudes

@dataclass
class AmplitudeBundle:
    """Mode amplitudes: a1 (Pi), a2 (A), a3 (P0), a4 (Q0), a5[n] (P_n), a6[n] (Q_n)."""

    omega: float
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray
    a5: np.ndarray
    a6: np.ndarray

    def vector(self):
        return np.concatenate([self.a2, self.a4, *self.a6, self.a1, self.a3, *self.a5])

    def residual(self, geometry, medium, reservoir):
        """Max residual of the first-order mode equations, relative to the terms."""
        Hm = hamiltonian_matrix(geometry, medium, reservoir)
        a = self.vector()
        lhs = -1j * self.omega * a
        rhs = symplectic_form(len(a)) @ (Hm @ a)
        scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), 1e-300)
        return float(np.max(np.abs(lhs - rhs)) / scale)


def mode_h(table, i):
    """h at the frequency of mode ``i``, resolved in the root offset when known."""
    ctx = SpectralContext(table.medium, table.reservoir)
    if table.shift is None:
        return h_eval(ctx, table.omega[i], guard=False)
    sh = table.shift
    return h_near_zero(ctx, sh.anchor[i], sh.offset[i], sh.zeros)


def amplitudes_from_mode(table, i):
    """Canonical amplitude families of mode ``i`` (field or matter)."""
    md, res = table.medium, table.reservoir
    M, N = table.geometry.size, res.N
    W = table.omega[i]
    rho, alpha = md.rho, md.alpha
    beta = res.profile(M)
    wn = res.omega[:, None]
    z = lambda *s: np.zeros(s, complex)
    if table.kind[i] == "field":
        e = table.weight[i] * table.u[:, i]
        h = mode_h(table, i)
        with np.errstate(divide="ignore", invalid="ignore"):
            ah = np.where(alpha != 0, alpha / h, 0.0)
        a1 = -eps0 * e + 0j
        a2 = -1j * e / W
        a3 = 1j * alpha * e / W - 1j * W * ah * e
        a4 = ah * e / rho + 0j
        a5 = ah * beta * wn**2 * e / (rho * (W**2 - wn**2)) + 0j
        a6 = 1j * ah * beta * W * e / (rho**2 * (W**2 - wn**2))
        return AmplitudeBundle(W, a1, a2, a3, a4, a5.reshape(N, M), a6.reshape(N, M))
    x, ch = table.site[i], table.channel[i]
    a1, a2, a3, a4, a5, a6 = z(M), z(M), z(M), z(M), z(N, M), z(N, M)
    if ch == 0:
        a4[x] = 1.0
        a3[x] = -1j * W * rho[x]
        d = W**2 - res.omega**2
        a5[:, x] = beta[:, x] * res.omega**2 / d
        a6[:, x] = 1j * beta[:, x] * W / (rho[x] * d)
    else:
        a6[ch - 1, x] = 1.0
        a5[ch - 1, x] = -1j * W * rho[x]
    b = AmplitudeBundle(W, a1, a2, a3, a4, a5, a6)
    v = b.vector()
    norm = symplectic_norm(v, table.geometry.cell_volume)
    k = 1.0 / np.sqrt(norm)
    return AmplitudeBundle(W, a1 * k, a2 * k, a3 * k, a4 * k, a5 * k, a6 * k)


def symplectic_norm(a, dv):
    """i dv a^dagger J a, equal to 1 for a correctly normalised mode."""
    n = len(a) // 2
    q, p = a[:n], a[n:]
    return float(np.real(1j * dv * (np.vdot(q, p) - np.vdot(p, q))))


# --------------------------------------------------------------------------
# homogeneous media

def _site_medium(medium, x=0):
    return MediumProfile(medium.rho[x:x + 1], medium.omega0[x:x + 1], medium.alpha[x:x + 1])


def _site_reservoir(reservoir, x=0):
    if not reservoir.N:
        return DiscreteReservoir.empty(1)
    return DiscreteReservoir(reservoir.omega, reservoir.beta[:, x:x + 1])


def homogeneous_dispersion(q, polarization, medium, reservoir):
    """Positive mode frequencies of a homogeneous medium at wavenumber ``q``.

    Transverse: roots of Omega^2 eps(Omega) = c^2 q^2 (N+2 of them for q > 0,
    none coupled to the field when alpha = 0 beyond Omega = c q).  At q = 0
    the transverse roots coincide with the longitudinal ones (Omega = 0 is
    excluded).  Longitudinal: roots of eps(Omega) = 0 (N+1 of them).
    """
    if not medium.is_homogeneous():
        raise DomainError("homogeneous_dispersion needs a homogeneous medium")
    md = _site_medium(medium)
    res = _site_reservoir(reservoir)
    if polarization == "longitudinal" or q == 0:
        if md.alpha[0] == 0:
            return np.array([])
        w0sq = md.omega0[0]**2 + md.alpha[0]**2 / (eps0 * md.rho[0])
        b = res.beta[:, 0]**2 * res.omega**2 / md.rho[0]**2 if res.N else np.zeros(0)
        return np.array(_site_zeros(float(w0sq), tuple(map(float, res.omega)),
                                    tuple(map(float, b))))
    if polarization != "transverse":
        raise DomainError(f"unknown polarization {polarization!r}")
    table = solve_modes(PlaneWave(float(q)), md, res)
    return np.sort(table.omega[table.kind == "field"])


# --------------------------------------------------------------------------
# independent first-order eigenproblem

@dataclass
class DirectSpectrum:
    """Normal modes from the first-order system; usable wherever a
    :class:`ModeTable` is accepted for evolution."""

    geometry: object
    reservoir: DiscreteReservoir
    omega: np.ndarray
    vectors: np.ndarray     # canonical layout, normalised like mode amplitudes

    def __len__(self):
        return len(self.omega)

    @property
    def layout(self):
        return Layout(self.geometry.size, self.reservoir.N)

    @property
    def cell_volume(self):
        return self.geometry.cell_volume

    def amplitudes(self):
        return self.vectors


def direct_spectrum(geometry, medium, reservoir):
    """Positive-frequency eigenpairs of the full first-order system.

    With Hm = R^T R the generator J Hm is similar to R J R^T, and i R J R^T is
    Hermitian; its positive eigenvalues are the mode frequencies.
    """
    Hm = hamiltonian_matrix(geometry, medium, reservoir)
    R = linalg.cholesky(Hm)
    J = symplectic_form(len(Hm))
    w, v = linalg.eigh(1j * (R @ J @ R.T))
    pos = w > 0
    w, v = w[pos], v[:, pos]
    a = linalg.solve_triangular(R, v) * np.sqrt(w / geometry.cell_volume)
    return DirectSpectrum(geometry, reservoir, w, a)


def direct_spectrum_blocks(geometry, medium, reservoir):
    """Direct spectrum of a homogeneous ring, one plane-wave block at a time.

    Every canonical field of the ring is expanded in the orthonormal cos/sin
    basis; each basis function carries a copy of the single-wavenumber
    system, whose mode vectors are spread back onto the grid.
    """
    if not isinstance(geometry, Layered1D) or not medium.is_homogeneous():
        raise DomainError("block reduction needs a homogeneous 1D ring")
    beta = reservoir.profile(geometry.size)
    if np.any(beta != beta[:, :1]):
        raise DomainError("block reduction needs site-independent couplings")
    site = _site_medium(medium)
    res = _site_reservoir(reservoir)
    B = geometry.plane_waves()
    qt = geometry.discrete_wavenumbers()
    omegas, cols = [], []
    for m, q in enumerate(qt):
        d = direct_spectrum(PlaneWave(float(q)), site, res)
        for j in (2 * m, 2 * m + 1):
            omegas.append(d.omega)
            # component c of the block vector multiplies basis column j
            cols.append(np.kron(d.vectors, B[:, j:j + 1]))
    w = np.concatenate(omegas)
    a = np.hstack(cols)
    order = np.argsort(w, kind="stable")
    return DirectSpectrum(geometry, reservoir, w[order], a[:, order])


def cross_validate(table, direct=None, tol=TAU_XVAL):
    """One-to-one comparison of mode-table and direct frequencies."""
    if direct is None:
        direct = direct_spectrum(table.geometry, table.medium, table.reservoir)
    a = np.sort(table.omega)
    b = np.sort(direct.omega)
    if len(a) != len(b):
        raise CrossValidationError(f"{len(a)} table modes vs {len(b)} direct modes",
                                   list(a) if len(a) > len(b) else list(b))
    rel = np.abs(a - b) / b
    bad = np.nonzero(rel > tol)[0]
    if len(bad):
        raise CrossValidationError(f"{len(bad)} frequencies disagree beyond {tol}",
                                   [(a[i], b[i]) for i in bad])
    return float(rel.max()) if len(rel) else 0.0


# --------------------------------------------------------------------------
# Green function

class GreenMethod(enum.Enum):
    DIRECT = "direct"
    SPECTRAL = "spectral"


@dataclass(frozen=True)
class GreenEvaluation:
    z: complex
    G: np.ndarray
    method: GreenMethod
    cell_volume: float

    def residual(self, geometry, medium, reservoir):
        """max |c^-2 L(z) G dv - I| relative to one."""
        L = assemble_operator(geometry, medium, reservoir, self.z).matrix
        R = L @ self.G * self.cell_volume / c**2 - np.eye(len(L))
        return float(np.max(np.abs(R)))


def greens_function(geometry, medium, reservoir, z, method=GreenMethod.DIRECT):
    """Resolvent kernel G(z; x, x') with c^-2 L(z) G = I / dv."""
    method = GreenMethod(method)
    z = complex(z)
    if z.imag == 0:
        z = z.real
    L = assemble_operator(geometry, medium, reservoir, z).matrix
    dv = geometry.cell_volume
    if method is GreenMethod.DIRECT:
        try:
            with warnings.catch_warnings():
                # an exactly singular pivot is reported below as a resonance
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                lu = linalg.lu_factor(L, check_finite=True)
        except linalg.LinAlgError:
            lu = None
        if lu is None or np.min(np.abs(np.diag(lu[0]))) < 1e-14 * np.max(np.abs(L)):
            raise ResonanceError(f"operator singular at z={z}", _nearest_eig(L, z))
        G = c**2 * linalg.lu_solve(lu, np.eye(len(L))) / dv
    else:
        lam, V = linalg.eig(L)
        if np.min(np.abs(lam)) < 1e-14 * np.max(np.abs(lam)):
            raise ResonanceError(f"operator singular at z={z}", _nearest_eig(L, z))
        G = c**2 * (V / lam) @ linalg.inv(V) / dv
    return GreenEvaluation(z, G, method, dv)


def _nearest_eig(L, z):
    return complex(np.min(np.abs(np.linalg.eigvals(L))))
