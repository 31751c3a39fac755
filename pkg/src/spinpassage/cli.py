"""Command-line experiments writing CSV outputs and a JSON manifest per run.

Energies are in units of alpha and times in units of 1/alpha; ``--alpha``
rescales both.  Exit codes: 0 success, 2 configuration error, 3 numerical
convergence error, 4 capability error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import re
import sys
import warnings

import numpy as np
import scipy

from . import __version__
from .control import (
    adiabatic_threshold,
    perturbative_excitation,
    synthesize_optimized_path,
)
from .dynamics import (
    MAX_DYNAMICS_SITES,
    CouplingSchedule,
    evolve,
    prepare_dimer_state,
)
from .exceptions import CapabilityError, ConfigurationError, ConvergenceError
from .experiments import (
    duration_for_error,
    error_sweep,
    map_tasks,
    velocity_grid,
)
from .lattice import (
    HubbardParams,
    hubbard_to_bb,
    load_duration_table,
    scattering_to_ctilde,
    stage_config,
    superlattice_potential,
    timescale_estimate,
    write_duration_table,
)
from .spectral import inverse_n_fit, minimal_gap, spectral_profile
from .spin_ops import MAX_SPECTRAL_SITES, BBParams

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_CAPABILITY = 0, 2, 3, 4
_PI_RE = re.compile(r"^\s*([+-]?[0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+]+))?\s*$")


class UsageError(ConfigurationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_theta(text):
    """Angle in radians from '-0.5pi', '-pi/2', 'pi' or a plain number of radians."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace("π", "pi")
    m = _PI_RE.match(s)
    if m:
        coef = m.group(1)
        if coef in ("", "+"):
            val = 1.0
        elif coef == "-":
            val = -1.0
        else:
            val = float(coef)
        if m.group(2):
            val /= float(m.group(2))
        return val * math.pi
    try:
        return float(s)
    except ValueError:
        raise ConfigurationError(f"theta: cannot parse {text!r}") from None


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _default_workers():
    return os.cpu_count() or 1


def _positive(name, value):
    if not value > 0:
        raise ConfigurationError(f"{name}: must be positive, got {value!r}")
    return value


def _check_dynamics(ns):
    for n in ns:
        if n > MAX_DYNAMICS_SITES:
            raise CapabilityError(f"n: dynamics limited to N <= {MAX_DYNAMICS_SITES}, got {n}")


def _check_spectra(ns):
    for n in ns:
        if n > MAX_SPECTRAL_SITES:
            raise CapabilityError(f"n: spectra limited to N <= {MAX_SPECTRAL_SITES}, got {n}")


def _params(args, n):
    return BBParams(n, args.theta, args.alpha, args.field_h, args.bond_form)


# --------------------------------------------------------------------------
# commands; each returns (list of output paths, summary dict)


def cmd_profiles(args):
    ns = _int_list(args.n)
    _check_spectra(ns)
    xs = None if args.points is None else np.linspace(-1.0, 1.0, args.points)
    outputs, summary = [], {}
    for n in ns:
        prof = spectral_profile(_params(args, n), xs, args.m, n_jobs=args.workers)
        path = os.path.join(args.outdir, f"profile_N{n}.csv")
        prof.to_csv(path)
        outputs.append(path)
        summary[f"N{n}"] = {
            "min_gap": float(prof.gap.min()),
            "max_coupling": float(prof.coupling.max()),
            "adiabatic_threshold": adiabatic_threshold(prof),
        }
    return outputs, summary


def _schedule(args, n, T):
    if args.schedule == "linear":
        return CouplingSchedule.linear(T)
    if args.schedule == "optimized":
        prof = spectral_profile(_params(args, n), n_jobs=args.workers)
        return synthesize_optimized_path(prof, T).schedule()
    if args.schedule == "file":
        if not args.path_csv:
            raise ConfigurationError("path_csv: required with --schedule file")
        data = np.loadtxt(args.path_csv, delimiter=",", skiprows=1, ndmin=2)
        t, x = data[:, 0], data[:, 1]
        if abs(t[-1] - T) > 1e-9 * T:
            t = t * (T / t[-1])
        return CouplingSchedule.table(t, x)
    raise ConfigurationError(f"schedule: unknown kind {args.schedule!r}")


def cmd_transfer(args):
    ns = _int_list(args.n)
    if len(ns) != 1:
        raise ConfigurationError("n: transfer takes a single chain length")
    n = ns[0]
    _check_dynamics(ns)
    T = _positive("T", float(args.T))
    params = _params(args, n)
    sched = _schedule(args, n, T)
    psi0 = prepare_dimer_state(params, "left_free", args.phi)
    rec = evolve(params, sched, psi0, n_steps=args.steps, method=args.method)
    stem = f"transfer_N{n}_T{T:g}_{args.schedule}"
    csv_path = os.path.join(args.outdir, stem + ".csv")
    side = os.path.join(args.outdir, stem + ".json")
    rec.to_csv(csv_path)
    rec.write_sidecar(side)
    return [csv_path, side], {"fidelity": rec.fidelity, "error": rec.error, "norm_drift": rec.norm_drift}


def cmd_sweep_velocity(args):
    ns = _int_list(args.n)
    _check_dynamics(ns)
    if args.durations is not None:
        durations = {n: _float_list(args.durations) for n in ns}
    else:
        durations = {n: velocity_grid(n, _float_list(args.velocities)) for n in ns}
    rows = error_sweep(
        ns, durations, args.schedule, args.theta, args.alpha, args.method, args.workers, args.bond_form
    )
    path = os.path.join(args.outdir, f"error_velocity_{args.schedule}.csv")
    header = ["n_sites", "T", "velocity", "error", "fidelity", "overlap", "norm_drift"]
    write_rows(path, header, [[r[k] for k in header] for r in rows])
    outputs, summary = [path], {"points": len(rows)}
    if args.thresholds:
        tasks = [(n, eps) for n in ns for eps in _float_list(args.thresholds)]
        found = map_tasks(_threshold_task, [(n, eps, args) for n, eps in tasks], args.workers)
        table = [(n, args.schedule, eps, T * args.alpha) for (n, eps), (T, _) in zip(tasks, found)]
        tpath = os.path.join(args.outdir, f"durations_{args.schedule}.csv")
        write_duration_table(table, tpath)
        outputs.append(tpath)
        summary["durations"] = [
            {"n_sites": n, "error_threshold": eps, "t_alpha": ta} for n, _, eps, ta in table
        ]
    return outputs, summary


def _threshold_task(task):
    n, eps, args = task
    return duration_for_error(
        n, eps, args.schedule, theta=args.theta, alpha=args.alpha, method=args.method,
        bond_form=args.bond_form,
    )


def cmd_pplus(args):
    ns = _int_list(args.n)
    if len(ns) != 1:
        raise ConfigurationError("n: pplus takes a single chain length")
    n = ns[0]
    _check_spectra(ns)
    if args.durations is not None:
        Ts = _float_list(args.durations)
    else:
        Ts = list(np.linspace(args.t_min, args.t_max, args.t_count))
    for T in Ts:
        _positive("durations", T)
    prof = spectral_profile(_params(args, n), n_jobs=args.workers)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = [perturbative_excitation(prof, T) for T in Ts]
    header, rows = ["T", "p_plus"], [[T, v] for T, v in zip(Ts, p)]
    if args.exact:
        _check_dynamics(ns)
        params = _params(args, n)
        exact = []
        for T in Ts:
            rec = evolve(params, CouplingSchedule.linear(T), prepare_dimer_state(params), method=args.method)
            exact.append(1.0 - rec.overlap)
        header.append("p_exact")
        rows = [r + [e] for r, e in zip(rows, exact)]
    path = os.path.join(args.outdir, f"pplus_N{n}.csv")
    write_rows(path, header, rows)
    return [path], {"points": len(Ts)}


def cmd_optimize_path(args):
    ns = _int_list(args.n)
    if len(ns) != 1:
        raise ConfigurationError("n: optimize-path takes a single chain length")
    n = ns[0]
    _check_spectra(ns)
    T = _positive("T", float(args.T))
    prof = spectral_profile(_params(args, n), n_jobs=args.workers)
    path = synthesize_optimized_path(prof, T, n_knots=args.knots)
    prof_path = os.path.join(args.outdir, f"profile_N{n}.csv")
    out = os.path.join(args.outdir, f"path_N{n}_T{T:g}.csv")
    prof.to_csv(prof_path)
    path.to_csv(out)
    return [prof_path, out], {"amplitude": path.amplitude}


def cmd_potential(args):
    stages = ["a", "b", "c"] if args.stage == "all" else [args.stage]
    # positions in units of lambda
    xs = np.linspace(args.x_min, args.x_max, args.points)
    outputs = []
    for st in stages:
        cfg = stage_config(st, args.i_half, args.i_full, args.wavelength)
        v = superlattice_potential(cfg, xs)
        path = os.path.join(args.outdir, f"potential_stage_{st}.csv")
        write_rows(path, ["x_over_lambda", "V"], zip(xs, v))
        outputs.append(path)
    return outputs, {"stages": stages}


def cmd_gap_scaling(args):
    ns = sorted(_int_list(args.n))
    _check_spectra(ns)
    for n in ns:
        if n % 2 == 0:
            raise ConfigurationError(f"n: chain lengths must be odd, got {n}")
    results = map_tasks(_gap_task, [(n, args) for n in ns], args.workers)
    scaling = [(n, g) for n, (_, g) in zip(ns, results)]
    path = os.path.join(args.outdir, "gap_scaling.csv")
    write_rows(path, ["n_sites", "x_min", "gap_min"], [(n, x, g) for n, (x, g) in zip(ns, results)])
    summary = {}
    if len(ns) >= 3:
        slope, intercept, r2 = inverse_n_fit(scaling)
        summary = {"fit_slope": slope, "fit_intercept": intercept, "r_squared": r2}
    return [path], summary


def _gap_task(task):
    n, args = task
    return minimal_gap(_params(args, n))


def cmd_timescale(args):
    table = None if args.table is None else load_duration_table(args.table)
    rows = []
    for J in _float_list(args.J):
        rows.append((J, timescale_estimate(J, int(args.n), args.error, args.schedule, table)))
    path = os.path.join(args.outdir, "timescale.csv")
    write_rows(path, ["J", "duration_s"], rows)
    return [path], {"durations_s": [d for _, d in rows]}


def cmd_mapping(args):
    if args.ctilde2 is not None:
        ct = float(args.ctilde2)
    else:
        ct = scattering_to_ctilde(args.a0, args.a2)
    hp = HubbardParams(args.tunneling, args.c0, ct * args.c0)
    alpha, theta = hubbard_to_bb(hp)
    path = os.path.join(args.outdir, "mapping.txt")
    with open(path, "w") as fh:
        fh.write(f"ctilde2 = {ct:.17g}\n")
        fh.write(f"alpha = {alpha:.17g}\n")
        fh.write(f"theta = {theta:.17g}\n")
        fh.write(f"theta_over_pi = {theta / math.pi:.17g}\n")
    return [path], {"ctilde2": ct, "alpha": alpha, "theta": theta}


COMMANDS = {
    "profiles": cmd_profiles,
    "transfer": cmd_transfer,
    "sweep-velocity": cmd_sweep_velocity,
    "pplus": cmd_pplus,
    "optimize-path": cmd_optimize_path,
    "potential": cmd_potential,
    "gap-scaling": cmd_gap_scaling,
    "timescale": cmd_timescale,
    "mapping": cmd_mapping,
}


# --------------------------------------------------------------------------
# parser


def _add_chain(p, n_default):
    p.add_argument("--n", default=n_default, help="chain length(s), comma separated")
    p.add_argument("--theta", type=parse_theta, default=-math.pi / 2,
                   help="bond angle, e.g. -0.5pi or radians")
    p.add_argument("--alpha", type=float, default=1.0, help="overall energy scale")
    p.add_argument("--field-h", type=float, default=0.0, help="uniform field in units of alpha")
    p.add_argument("--bond-form", choices=("normalized", "raw"), default="normalized")


def build_parser():
    parser = _Parser(prog="spinpassage", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    subs = {}

    def add(name, help_text, n_default="3", chain=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--outdir", default="out")
        p.add_argument("--config", help="JSON file of option values; command-line flags win")
        p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
        if chain:
            _add_chain(p, n_default)
        subs[name] = p
        return p

    p = add("profiles", "gap and coupling profiles")
    p.add_argument("--m", type=int, default=1, help="magnetization sector")
    p.add_argument("--points", type=int, default=None, help="uniform grid size (default: refined grid)")

    for name, help_text, n_default in (
        ("transfer", "single transfer with population timeline", "5"),
        ("sweep-velocity", "transfer error against mean velocity", "5,7,9"),
    ):
        p = add(name, help_text, n_default)
        p.add_argument("--schedule", choices=("linear", "optimized") + (("file",) if name == "transfer" else ()),
                       default="linear")
        p.add_argument("--method", choices=("cfet4", "midpoint", "dop853"), default="cfet4")
        if name == "transfer":
            p.add_argument("--T", type=float, default=80.0, help="duration in 1/alpha")
            p.add_argument("--phi", type=int, choices=(1, 0, -1), default=1)
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--path-csv", default=None, help="t,x table for --schedule file")
        else:
            p.add_argument("--velocities", default="5,10,20,40,80", help="mean velocities T/(N-1)")
            p.add_argument("--durations", default=None, help="explicit durations (overrides velocities)")
            p.add_argument("--thresholds", default=None, help="also find durations reaching these errors")

    p = add("pplus", "first-order excitation against duration")
    p.add_argument("--durations", default=None)
    p.add_argument("--t-min", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=100.0)
    p.add_argument("--t-count", type=int, default=199)
    p.add_argument("--exact", action="store_true", help="add full-propagation excitation")
    p.add_argument("--method", choices=("cfet4", "midpoint", "dop853"), default="cfet4")

    p = add("optimize-path", "Blackman-shaped schedule", "7")
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--knots", type=int, default=4001)

    p = add("potential", "superlattice potential per protocol stage", chain=False)
    p.add_argument("--stage", choices=("a", "b", "c", "all"), default="all")
    p.add_argument("--i-half", type=float, default=1.0)
    p.add_argument("--i-full", type=float, default=0.5)
    p.add_argument("--wavelength", type=float, default=1.0)
    p.add_argument("--x-min", type=float, default=0.0)
    p.add_argument("--x-max", type=float, default=2.0)
    p.add_argument("--points", type=int, default=401)

    p = add("gap-scaling", "minimal gap against chain length", "3,5,7,9,11")

    p = add("timescale", "protocol duration in seconds", chain=False)
    p.add_argument("--n", type=int, default=9)
    p.add_argument("--J", default="100,200", help="spin coupling(s) in 1/s")
    p.add_argument("--error", type=float, default=1e-2)
    p.add_argument("--schedule", choices=("linear", "optimized"), default="optimized")
    p.add_argument("--table", default=None, help="duration table CSV (default: shipped table)")

    p = add("mapping", "Bose-Hubbard to spin-1 couplings", chain=False)
    p.add_argument("--a0", type=float, default=46.0)
    p.add_argument("--a2", type=float, default=52.0)
    p.add_argument("--ctilde2", type=float, default=None, help="c2/c0 directly (overrides a0, a2)")
    p.add_argument("--tunneling", type=float, default=0.05)
    p.add_argument("--c0", type=float, default=1.0)

    return parser, subs


def _apply_config(sub_parser, path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"config: cannot read {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config: top level must be an object")
    actions = {a.dest: a for a in sub_parser._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest in ("config", "help") or dest not in actions:
            raise ConfigurationError(f"config.{key}: unknown option")
        action = actions[dest]
        if action.type is not None and not isinstance(value, (list, dict)):
            try:
                value = action.type(value)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"config.{key}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise ConfigurationError(f"config.{key}: {value!r} not in {list(action.choices)}")
        defaults[dest] = value
    sub_parser.set_defaults(**defaults)
    return cfg


def _join_values(argv):
    # '-0.5pi' looks like an option to argparse; bind it to its flag
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--theta":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def parse_args(argv):
    argv = _join_values(argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    cfg = None
    if args.config:
        cfg = _apply_config(subs[args.command], args.config)
        args = parser.parse_args(argv)
    if args.workers is None:
        args.workers = _default_workers()
    if args.workers < 1:
        raise ConfigurationError("workers: must be at least 1")
    if hasattr(args, "alpha"):
        _positive("alpha", args.alpha)
    return args, cfg


def _manifest(args, argv, cfg, outputs, summary):
    options = {k: v for k, v in sorted(vars(args).items()) if k not in ("workers",)}
    return {
        "command": args.command,
        "argv": list(argv),
        "options": options,
        "config_file": cfg,
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "tolerances": {
            "eigensolver_residual": 1e-8,
            "degeneracy": 1e-8,
            "krylov": 1e-12,
            "norm_drift_limit": 1e-6,
            "shooting_endpoint": 1e-8,
            "shooting_rtol": 1e-12,
        },
        "outputs": [os.path.basename(p) for p in outputs],
        "summary": summary,
    }


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, cfg = parse_args(argv)
        os.makedirs(args.outdir, exist_ok=True)
        outputs, summary = COMMANDS[args.command](args)
        name = f"manifest_{args.command}.json"
        with open(os.path.join(args.outdir, name), "w") as fh:
            json.dump(_manifest(args, argv, cfg, outputs, summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
        for p in outputs:
            print(p)
        return EXIT_OK
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigurationError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
