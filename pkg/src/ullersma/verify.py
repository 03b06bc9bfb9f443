"""Identity suite: commutation sum rules, residue sums, Green-function
symmetries, inequalities, diagonalisation and the zero/pole count.

Every check returns :class:`CheckResult` records; :func:`run_all` collects
them into a :class:`Report` that renders as JSON or as a text table.
"""
from dataclasses import dataclass, field
import json

import numpy as np

from .config import RunConfig, parse_config
from .errors import ConfigurationError
from .evolution import divergence_check
from .model import Layered1D, build_model
from .modes import (GreenMethod, ModeTable, count_zeros_poles,
                    direct_spectrum, direct_spectrum_blocks, find_mode_frequencies,
                    greens_function, mode_h, pole_set, track_branches)
from .phase_space import FieldState, hamiltonian_matrix, raw_energy
from .spectral import SpectralContext, all_h_zeros, ds2eps_ds2, h_eval
from .units import eps0

PASS, FAIL, VACUOUS = "pass", "fail", "vacuous"
TAU_CCR = 1e-6          # per grid point
TAU_IDENT = 1e-8
TAU_GREEN = 1e-8


@dataclass
class CheckResult:
    name: str
    status: str
    residual: float
    tolerance: float
    context: dict = field(default_factory=dict)

    @classmethod
    def judge(cls, name, residual, tolerance, **context):
        residual = float(residual)
        status = PASS if residual <= tolerance else FAIL
        return cls(name, status, residual, float(tolerance), context)

    @classmethod
    def vacuous(cls, name, **context):
        return cls(name, VACUOUS, 0.0, 0.0, context)

    @property
    def ok(self):
        return self.status != FAIL


# --------------------------------------------------------------------------
# mode data shared by the sum rules

@dataclass
class FieldData:
    """Per-mode field profiles for the sum rules.

    ``e`` is the mode electric field (M, modes), ``eh`` = e / h(Omega) and,
    when the modes come from branch roots, ``u`` / ``dlam`` are the branch
    eigenvectors and slopes used in the residue form.
    """

    omega: np.ndarray
    e: np.ndarray
    eh: np.ndarray
    u: np.ndarray = None
    dlam: np.ndarray = None
    h: np.ndarray = None

    def u_over_h(self, active):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(active[:, None], self.u / self.h, 0.0)


def field_data(modes, medium):
    A = modes.amplitudes()
    L = modes.layout
    alpha, rho = medium.alpha, medium.rho
    if isinstance(modes, ModeTable):
        f = modes.field_modes()
        W = modes.omega[f]
        e = -A[L.block("Pi")][:, f] / eps0
        H = np.array([mode_h(modes, i) for i in f]).T.reshape(len(alpha), -1)
        with np.errstate(divide="ignore", invalid="ignore"):
            eh = np.where(alpha[:, None] != 0, e / H, 0.0)
        return FieldData(W, e, eh, modes.u[:, f], modes.dlam_ds[f], H)
    # first-order modes: a4 = alpha e / (rho h) gives e / h without dividing by h
    W = modes.omega
    e = -A[L.block("Pi")] / eps0
    with np.errstate(divide="ignore", invalid="ignore"):
        eh = np.where(alpha[:, None] != 0, rho[:, None] * A[L.block("Q0")] / alpha[:, None], 0.0)
    return FieldData(W, e, eh)


def _worst(R):
    i, j = np.unravel_index(int(np.argmax(np.abs(R))), R.shape)
    return [int(i), int(j)]


def check_commutators(modes, medium, tol=None):
    """Mode sums that reproduce the canonical commutators and their residue forms."""
    g = modes.geometry
    M, dv = g.size, g.cell_volume
    tol = TAU_CCR * M if tol is None else tol
    d = field_data(modes, medium)
    W, e, eh = d.omega, d.e, d.eh
    I = np.eye(M)
    out = []

    # [A, Pi]: sum eps0 / W e*(x') e(x) + cc = delta / dv
    S = 2 * eps0 * np.real((e / W) @ e.conj().T)
    R = S * dv - I
    out.append(CheckResult.judge("ccr_field", np.max(np.abs(R)), tol, worst=_worst(R)))

    # residue form of the same sum on the eigenvalue branches
    if d.u is not None:
        S = (d.u * (2 * W / d.dlam)) @ d.u.T
        form = "branch"
    else:
        S = 2 * eps0 * np.real((e / W) @ e.conj().T)
        form = "amplitude"
    R = S * dv - I
    out.append(CheckResult.judge("residue_field", np.max(np.abs(R)), tol,
                                 worst=_worst(R), form=form))

    act = medium.alpha > 0
    if not act.any():
        for name in ("ccr_matter", "residue_mixed", "residue_matter"):
            out.append(CheckResult.vacuous(name, reason="no coupled dielectric sites"))
        return out
    al, rho = medium.alpha, medium.rho
    ix = np.ix_(act, act)

    # [Q0, P0]: sum a(x) a(x') (e/h)*(x') / (rho(x') W) [W^2 (e/h)(x) - e(x)] + cc
    left = al[:, None] * (W**2 * eh - e)
    right = al[:, None] * eh / (rho[:, None] * W)
    S = 2 * np.real(left @ right.conj().T)
    R = (S * dv - I)[ix]
    out.append(CheckResult.judge("ccr_matter", np.max(np.abs(R)), tol, worst=_worst(R)))

    # mixed residue sum vanishes for every x and coupled x'
    if d.u is not None:
        S = (d.u * (W / d.dlam)) @ d.u_over_h(act).T
    else:
        S = eps0 * np.real((e / W) @ eh.conj().T)
    R = (S * dv)[:, act]
    out.append(CheckResult.judge("residue_mixed", np.max(np.abs(R)), tol, worst=_worst(R)))

    # matter residue sum equals (eps0 rho / alpha^2) delta
    if d.u is not None:
        uh = d.u_over_h(act)
        S = (uh * (2 * W**3 / d.dlam)) @ uh.T
    else:
        S = 2 * eps0 * np.real((eh * W) @ eh.conj().T)
    target = np.diag(np.where(act, eps0 * rho / np.where(act, al, 1.0)**2, 0.0))
    scale = np.max(np.abs(target))
    R = ((S * dv - target) / scale)[ix]
    out.append(CheckResult.judge("residue_matter", np.max(np.abs(R)), tol, worst=_worst(R)))
    return out


# --------------------------------------------------------------------------
# diagonalisation

def check_diagonalization(modes, medium, trials=100, seed=0, tol=TAU_IDENT):
    """Energy of random mode superpositions and the cross terms of the double sum."""
    g, res = modes.geometry, modes.reservoir
    dv = g.cell_volume
    A = modes.amplitudes()
    W = modes.omega
    Hm = hamiltonian_matrix(g, medium, res)
    HA = Hm @ A
    # dv a_k^dagger Hm a_k' = W_k delta and dv a_k^T Hm a_k' = 0
    G1 = dv * (A.conj().T @ HA) - np.diag(W)
    G2 = dv * (A.T @ HA)
    scale = np.max(W)
    cross = max(np.max(np.abs(G1)), np.max(np.abs(G2))) / scale
    i1, i2 = _worst(G1), _worst(G2)
    pair = i1 if np.max(np.abs(G1)) >= np.max(np.abs(G2)) else i2
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        c = (rng.standard_normal(len(W)) + 1j * rng.standard_normal(len(W))) / np.sqrt(2)
        y = 2.0 * np.real(A @ c)
        state = FieldState.from_vector(y, modes.layout)
        h_raw = raw_energy(state, g, medium, res)
        h_modes = float(np.sum(W * np.abs(c)**2))
        worst = max(worst, abs(h_raw - h_modes) / h_modes)
    return [CheckResult.judge("diagonalization", worst, tol, trials=trials, seed=seed),
            CheckResult.judge("cross_terms", cross, tol,
                              modes=[int(pair[0]), int(pair[1])])]


# --------------------------------------------------------------------------
# Green function symmetries

def default_z_samples(scale=1.0):
    """Purely imaginary, generic and mirrored (+-Re z) complex frequencies."""
    base = [0.7j, 0.35 + 0.2j, -0.35 + 0.2j, 1.3 + 0.05j, -1.3 + 0.05j, 0.9 - 0.3j,
            2.1 + 0.4j, -2.1 + 0.4j, 0.2 + 1.5j, 1.7 - 0.02j]
    return [scale * z for z in base]


def check_green_symmetries(geometry, medium, reservoir, zs=None, tol=TAU_GREEN):
    """[G(-z*)]* = G(z) and G^T = G at complex frequencies."""
    zs = default_z_samples() if zs is None else zs
    conj_res, recip_res = [], []
    for z in zs:
        G = greens_function(geometry, medium, reservoir, z, GreenMethod.DIRECT).G
        Gm = greens_function(geometry, medium, reservoir, -np.conj(z), GreenMethod.DIRECT).G
        scale = np.max(np.abs(G))
        conj_res.append(float(np.max(np.abs(np.conj(Gm) - G)) / scale))
        recip_res.append(float(np.max(np.abs(G.T - G)) / scale))
    kc, kr = int(np.argmax(conj_res)), int(np.argmax(recip_res))
    return [CheckResult.judge("green_conjugation", conj_res[kc], tol, z=str(zs[kc])),
            CheckResult.judge("green_reciprocity", recip_res[kr], tol, z=str(zs[kr]))]


# --------------------------------------------------------------------------
# inequalities

def _off_pole_s(medium, reservoir, count, top):
    """Real sample points in (0, top) kept away from every h-zero."""
    zeros = np.sort(np.concatenate([np.atleast_1d(z) for z in all_h_zeros(medium, reservoir)]
                                   + [np.zeros(0)]))
    s = np.linspace(top / count, top, count) * (1 - 0.123 / count)
    if len(zeros):
        for i, v in enumerate(s):
            j = np.argmin(np.abs(zeros - v))
            if abs(zeros[j] - v) < 1e-3 * max(v, 1.0):
                s[i] = v + 2e-3 * max(v, 1.0)
    return s


def check_inequalities(geometry, medium, reservoir, samples=50, tol=1e-10):
    """Sign conditions on h, d(s^2 eps)/ds^2 and the eigenvalues lambda(k, z)."""
    from .modes import assemble_operator
    ctx = SpectralContext(medium, reservoir)
    out = []
    act = medium.alpha > 0
    top = 1.5 * max(np.max(medium.omega0), np.max(reservoir.omega, initial=0.0),
                    np.sqrt(np.max(np.linalg.eigvalsh(geometry.stiffness()))))

    # |Im h(z)| > |Im z^2| off the real axis
    zs = [1 + 0.1j] + [complex(x, y) for x, y in zip(np.linspace(0.2, top, 9),
                                                     np.linspace(0.05, 0.6, 9))]
    margin = min(float(np.min(np.abs(np.imag(h_eval(ctx, z))) - abs((z * z).imag)))
                 / abs((z * z).imag) for z in zs)
    out.append(CheckResult.judge("imag_h_bound", max(0.0, -margin), tol, margin=margin))

    # h(ib) < -omega0^2 on the imaginary axis
    bs = np.linspace(0.1, top, samples)
    margin = min(float(np.min(-medium.omega0**2 - np.real(h_eval(ctx, 1j * b)))) for b in bs)
    out.append(CheckResult.judge("imaginary_axis_h", max(0.0, -margin), tol, margin=margin))

    # d(s^2 eps)/d(s^2) > 1 on coupled sites
    if act.any():
        s = _off_pole_s(medium, reservoir, samples, top)
        margin = min(float(np.min(ds2eps_ds2(ctx, v)[act] - 1.0)) for v in s)
        out.append(CheckResult.judge("slope_bound", max(0.0, -margin), tol, margin=margin))
    else:
        out.append(CheckResult.vacuous("slope_bound", reason="no coupled dielectric sites"))

    # |Im lambda(k, z)| >= |Im z^2| just above the real axis
    poles = pole_set(medium, reservoir)
    worst = np.inf
    for v in _off_pole_s(medium, reservoir, 10, top):
        z = complex(v, 1e-4 * v)
        lam = np.linalg.eigvals(assemble_operator(geometry, medium, reservoir, z, poles).matrix)
        worst = min(worst, float(np.min(np.abs(lam.imag)) / abs((z * z).imag) - 1.0))
    out.append(CheckResult.judge("imag_lambda_bound", max(0.0, -worst), 1e-6, margin=worst))

    # lambda(k, ib) real and negative
    worst_re, worst_im = -np.inf, 0.0
    for b in bs[::5]:
        lam = np.linalg.eigvals(assemble_operator(geometry, medium, reservoir, 1j * b,
                                                  poles).matrix)
        worst_re = max(worst_re, float(np.max(lam.real)))
        worst_im = max(worst_im, float(np.max(np.abs(lam.imag)) / np.max(np.abs(lam))))
    out.append(CheckResult.judge("imaginary_axis_lambda",
                                 max(worst_im, 0.0 if worst_re < 0 else np.inf), tol,
                                 max_real=worst_re))
    return out


# --------------------------------------------------------------------------
# zero / pole count

def check_argument_principle(branches):
    """zeros - poles = 1 per branch on s > 0, i.e. 2 with the mirror image."""
    tallies = {k: count_zeros_poles(branches, k) for k in range(branches.size)}
    diff = {k: 2 * (z - p) for k, (z, p) in tallies.items()}
    resid = max(abs(d - 2) for d in diff.values())
    zeros = sum(2 * z for z, _ in tallies.values())
    poles = sum(2 * p for _, p in tallies.values())
    return CheckResult.judge("argument_principle", resid, 0.0,
                             mirrored_difference=sorted(set(diff.values())),
                             zeros=zeros, poles=poles)


def check_divergence(geometry):
    d = divergence_check(np.zeros(geometry.size), geometry)
    if d.status == "vacuous":
        return CheckResult.vacuous("divergence", reason="transverse 1D sector")
    return CheckResult.judge("divergence", d.residual, TAU_IDENT)


# --------------------------------------------------------------------------
# suite

@dataclass
class Report:
    results: list
    context: dict

    @property
    def ok(self):
        return all(r.ok for r in self.results)

    def to_json(self):
        return json.dumps({"context": self.context,
                           "checks": [{"check": r.name, "status": r.status,
                                       "residual": r.residual, "tolerance": r.tolerance,
                                       "context": r.context} for r in self.results]},
                          indent=2, sort_keys=True)

    def table(self):
        lines = [f"{'check':<24}{'status':<10}{'residual':>14}{'tolerance':>14}"]
        for r in self.results:
            lines.append(f"{r.name:<24}{r.status:<10}{r.residual:>14.3e}{r.tolerance:>14.3e}")
        return "\n".join(lines)


def mode_source(model):
    """Normal modes plus tracked branches for a model.

    Smeared baths put weakly coupled roots inside the pole guard bands, so
    their modes come from the first-order system (plane-wave blocks on a
    homogeneous ring); discrete baths use the branch roots.
    """
    g, md, res = model.geometry, model.medium, model.reservoir
    branches = track_branches(g, md, res)
    if model.continuum is None:
        return find_mode_frequencies(branches), branches, "branch"
    if isinstance(g, Layered1D) and md.is_homogeneous():
        return direct_spectrum_blocks(g, md, res), branches, "direct-blocks"
    return direct_spectrum(g, md, res), branches, "direct"


CHECK_GROUPS = ("commutators", "diagonalization", "green", "inequalities",
                "argument_principle", "divergence")


def run_all(config, seed=None, tolerance_scale=1.0, corrupt_weight=None, only=None):
    """Run the checks (all groups, or those named in ``only``) on a configuration.

    ``corrupt_weight`` (default: the ``run.corrupt_weight`` key) scales one
    mode weight by 1.01, a deliberate fault the commutator sums must catch.
    """
    if isinstance(config, str):
        config = parse_config(config)
    elif not isinstance(config, RunConfig):
        config = RunConfig.from_dict(config)
    groups = CHECK_GROUPS if only is None else tuple(only)
    unknown = [x for x in groups if x not in CHECK_GROUPS]
    if unknown:
        raise ConfigurationError(f"unknown check {unknown[0]!r}; choose from "
                                 f"{', '.join(CHECK_GROUPS)}", "checks")
    run = config.section("run")
    if corrupt_weight is None:
        corrupt_weight = run.bool("corrupt_weight", False)
    model = build_model(config)
    g, md, res = model.geometry, model.medium, model.reservoir
    seed = config.seed(seed)
    modes, branches, source = mode_source(model)
    if corrupt_weight:
        if not isinstance(modes, ModeTable):
            raise ConfigurationError("weight corruption needs a discrete bath",
                                     "run.corrupt_weight")
        w = modes.weight.copy()
        w[modes.field_modes()[0]] *= 1.01
        modes = modes.with_weights(w)
    tol = lambda name, default: config.tolerance(name, default, tolerance_scale)
    results = []
    if "commutators" in groups:
        results += check_commutators(modes, md, tol("ccr", TAU_CCR * g.size))
    if "diagonalization" in groups:
        results += check_diagonalization(modes, md, trials=run.int("trials", 100), seed=seed,
                                         tol=tol("diagonalization", TAU_IDENT))
    if "green" in groups:
        results += check_green_symmetries(g, md, res, tol=tol("green", TAU_GREEN))
    if "inequalities" in groups:
        results += check_inequalities(g, md, res, tol=tol("inequality", 1e-10))
    if "argument_principle" in groups:
        results.append(check_argument_principle(branches))
    if "divergence" in groups:
        results.append(check_divergence(g))
    context = {"geometry": type(g).__name__, "M": g.size, "N": res.N, "seed": seed,
               "modes": source, "config": config.digest(), "fault": bool(corrupt_weight)}
    for r in results:
        r.context.setdefault("M", g.size)
        r.context.setdefault("N", res.N)
    return Report(results, context)
