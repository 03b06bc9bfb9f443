"""Command-line front end: ``ullersma {modes,evolve,continuum,verify}``.

Exit codes: 0 success, 1 a verification check failed, 2 configuration
error, 3 numerical error.  Errors are reported on stderr as JSON.
"""
import argparse
import csv
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigurationError, NumericalError, UllersmaError
from .model import Layered1D, PlaneWave, build_model

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


# --------------------------------------------------------------------------
# output helpers

class Writer:
    """Writes CSV / JSON files that carry the tool version and config hash."""

    def __init__(self, out, config, timestamp=True):
        self.out = out
        self.meta = {"tool": "ullersma", "version": __version__, "config": config.digest()}
        if timestamp:
            self.meta["generated"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        os.makedirs(out, exist_ok=True)

    def csv(self, name, columns, rows):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in self.meta.items()) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return path

    def json(self, name, payload):
        path = os.path.join(self.out, name)
        with open(path, "w") as fh:
            json.dump({"meta": self.meta, **payload}, fh, indent=2, sort_keys=True,
                      default=_jsonable)
            fh.write("\n")
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def _positions(geometry):
    return geometry.x if isinstance(geometry, Layered1D) else np.zeros(geometry.size)


# --------------------------------------------------------------------------
# commands

def cmd_modes(config, writer, args):
    from .modes import DirectSpectrum, count_zeros_poles
    from .units import eps0
    from .verify import mode_source
    model = build_model(config)
    modes, branches, source = mode_source(model)
    g = model.geometry
    dv = g.cell_volume
    if isinstance(modes, DirectSpectrum):
        # weights and profiles from the field part of first-order modes
        e = -modes.amplitudes()[modes.layout.block("Pi")] / eps0
        weight = np.sqrt(dv * np.sum(np.abs(e)**2, axis=0))
        ph = np.exp(-1j * np.angle(e[np.argmax(np.abs(e), axis=0), np.arange(e.shape[1])]))
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(weight > 0, np.real(e * ph) / weight, 0.0)
            dlam = np.where(weight > 0, modes.omega**2 / (eps0 * weight**2), np.nan)
        k = l = np.full(len(modes), -1)
    else:
        weight, u, dlam, k, l = modes.weight, modes.u, modes.dlam_ds, modes.k, modes.l
    writer.csv("modes.csv", ["mode", "k", "l", "Omega", "dlambda_ds", "weight"],
               [(i, int(k[i]), int(l[i]), modes.omega[i], dlam[i], weight[i])
                for i in range(len(modes))])
    x = _positions(g)
    writer.csv("eigenvectors.csv", ["mode"] + [f"x={_fmt(v)}" for v in x],
               [[i] + list(u[:, i]) for i in range(len(modes))])
    tallies = {k_: list(count_zeros_poles(branches, k_)) for k_ in range(branches.size)}
    print(json.dumps({"modes": len(modes), "source": source,
                      "expected": (model.reservoir.N + 2) * g.size,
                      "zeros_poles_per_branch": tallies}, sort_keys=True))
    return EXIT_OK


def _initial_state(config, model, modes, seed):
    from .phase_space import FieldState
    from .units import eps0
    run = config.section("run")
    g = model.geometry
    M, N = g.size, model.reservoir.N
    kind = run.get("initial", "pulse")
    state = FieldState.zeros(M, N)
    if kind == "pulse":
        amp = run.float("amplitude", 1.0)
        if isinstance(g, Layered1D):
            x0 = run.float("center", 0.5) * g.length
            w = run.float("width", 0.05) * g.length
            state.Pi = -eps0 * amp * np.exp(-(g.x - x0)**2 / (2 * w**2))
        else:
            state.Pi = -eps0 * amp * np.ones(M)
    elif kind == "random":
        rng = np.random.default_rng(seed)
        A = modes.amplitudes()
        c = (rng.standard_normal(len(modes)) + 1j * rng.standard_normal(len(modes))) / np.sqrt(2)
        state = FieldState.from_vector(2.0 * np.real(A @ c), modes.layout)
    else:
        raise ConfigurationError(f"unknown initial state {kind!r}", "run.initial")
    return state


def cmd_evolve(config, writer, args):
    from .evolution import (diagonal_energy, displacement_field, evolve_means,
                            hamiltonian_energy, project_initial)
    from .verify import mode_source
    model = build_model(config)
    g, md, res = model.geometry, model.medium, model.reservoir
    run = config.section("run")
    seed = config.seed(args.seed) if run.get("initial", "pulse") == "random" else None
    modes, _, _ = mode_source(model)
    state0 = _initial_state(config, model, modes, seed)
    coeffs = project_initial(state0, modes)
    t_max = run.float("t_max", 50.0 / float(np.min(modes.omega)))
    steps = run.int("steps", 200)
    if not t_max > 0 or steps < 1:
        raise ConfigurationError("t_max must be positive and steps >= 1", "run.t_max")
    times = np.linspace(0.0, t_max, steps + 1)
    x = _positions(g)
    h_diag = diagonal_energy(coeffs)
    rows, energy = [], []
    for t in times:
        s = state0 if t == 0 else evolve_means(coeffs, modes, t)
        D = displacement_field(s, md)
        for i in range(g.size):
            rows.append((t, i, x[i], s.A[i], s.Pi[i], s.Q0[i], s.P0[i], s.E[i], D[i]))
        energy.append((t, hamiltonian_energy(s, g, md, res), h_diag))
    writer.csv("fields_t.csv", ["t", "point", "x", "A", "Pi", "Q0", "P0", "E", "D"], rows)
    writer.csv("energy.csv", ["t", "H_raw", "H_diag"], energy)
    return EXIT_OK


def cmd_continuum(config, writer, args):
    from . import continuum as C
    model = build_model(config)
    cont = model.continuum
    if cont is None:
        raise ConfigurationError("continuum command needs reservoir.kind = continuum",
                                 "reservoir.kind")
    g, md = model.geometry, model.medium
    run = config.section("run")
    top = run.float("omega_top", cont.omega_max)
    npts = run.int("omega_points", 200)
    omegas = np.linspace(top / npts, top, npts)
    sites = [0] if md.is_homogeneous() else range(g.size)
    rows = [(x, *r) for x in sites for r in C.epsilon_c_table(md, cont, omegas, x)]
    writer.csv("epsilon_c.csv", ["point", "omega", "re_eps_c", "im_eps_c"], rows)

    if not md.is_homogeneous():
        writer.json("decay.json", {"skipped": "decay rates need a homogeneous medium"})
        writer.csv("fluctuations.csv", ["x", "x_prime", "quadrature", "dynamic"], [])
        return EXIT_OK
    if isinstance(g, PlaneWave):
        q = g.q
    else:
        q = float(g.discrete_wavenumbers()[0])
    q = run.float("q", q)
    fit_n = run.int("fit_n", 512)
    width = run.float("fit_width", 0.25)
    decays = []
    for name, est in zip(("lower", "upper"), C.decay_rate(q, md, cont)):
        fit = C.measure_decay(q, md, cont, est, N=fit_n, width=width)
        decays.append({"branch": name, "pole": complex(est.pole), "rate": est.rate,
                       "pole_residual": est.residual, "fit_rate": fit.fit_rate,
                       "fit_frequency": fit.fit_frequency, "fit_rms": fit.fit_rms,
                       "rate_error": abs(fit.fit_rate - est.rate) / est.rate,
                       "frequency_error": abs(fit.fit_frequency - est.frequency) / est.frequency})
    writer.json("decay.json", {"q": q, "N": fit_n, "poles": decays})

    lo, hi = run.floats("band", [0.2 * cont.cutoff, 0.9 * cont.cutoff])
    energy = C.band_energy(lo, hi, run.float("energy_level", 1.0))
    C57 = C.fluctuation_integral(g, md, cont, energy)
    rows = []
    if isinstance(g, Layered1D):
        plan = C.smearing_plan(cont, run.int("plateau_n", 512))
        f0, f1 = run.floats("plateau_window", [0.4, 0.95])
        times = np.linspace(f0 * plan.guard, f1 * plan.guard, run.int("plateau_samples", 171))
        Cd = C.dynamic_plateau(g, md, cont, energy, times, N=plan.N)
    else:
        Cd = np.full_like(C57, np.nan)
    for i in range(g.size):
        for j in range(i, g.size):
            rows.append((i, j, C57[i, j], Cd[i, j]))
    writer.csv("fluctuations.csv", ["x", "x_prime", "quadrature", "dynamic"], rows)
    return EXIT_OK


def cmd_verify(config, writer, args):
    from .verify import run_all
    only = args.checks.split(",") if args.checks else None
    report = run_all(config, seed=args.seed, tolerance_scale=args.tolerance_scale, only=only)
    writer.json("report.json", json.loads(report.to_json()))
    print(report.table())
    return EXIT_OK if report.ok else EXIT_CHECK


COMMANDS = {"modes": cmd_modes, "evolve": cmd_evolve, "continuum": cmd_continuum,
            "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="ullersma",
                                description="Normal-mode laboratory for a dissipative "
                                            "dielectric coupled to the radiation field.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI configuration file")
        s.add_argument("--out", default=None, help="output directory (default: run.out or .)")
        s.add_argument("--seed", type=int, default=None, help="override run.seed")
        s.add_argument("--no-timestamp", action="store_true",
                       help="omit the generation time from output headers")
        s.add_argument("--tolerance-scale", type=float, default=1.0,
                       help="multiply every check tolerance")
        if name == "verify":
            s.add_argument("--checks", default=None,
                           help="comma-separated subset of check groups")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigurationError("seed must be non-negative", "run.seed")
        out = args.out or config.section("run").get("out", ".")
        writer = Writer(out, config, timestamp=not args.no_timestamp)
        return COMMANDS[args.command](config, writer, args)
    except OSError as exc:
        _report(exc, None)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        _report(exc, exc.key)
        return EXIT_CONFIG
    except (NumericalError, UllersmaError, np.linalg.LinAlgError, FloatingPointError) as exc:
        _report(exc, None)
        return EXIT_NUMERIC


def _report(exc, key):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "key": key}),
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
