"""Transfer-error sweeps shared by the CLI and the acceptance suite."""

from __future__ import annotations

import functools
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .control import synthesize_optimized_path
from .dynamics import CouplingSchedule, evolve, prepare_dimer_state
from .exceptions import ConfigurationError
from .spectral import spectral_profile
from .spin_ops import BBParams

SCHEDULE_KINDS = ("linear", "optimized")


@functools.lru_cache(maxsize=32)
def optimized_template(n_sites, theta=-np.pi / 2, alpha=1.0, bond_form="normalized"):
    """Optimized path for unit duration; rescale with ``OptimizedPath.rescaled``."""
    params = BBParams(n_sites, theta, alpha, bond_form=bond_form)
    profile = spectral_profile(params)
    return synthesize_optimized_path(profile, 1.0)


def make_schedule(kind, T, n_sites, theta=-np.pi / 2, alpha=1.0, bond_form="normalized"):
    if kind == "linear":
        return CouplingSchedule.linear(T)
    if kind == "optimized":
        return optimized_template(n_sites, theta, alpha, bond_form).rescaled(T).schedule()
    raise ConfigurationError(f"schedule must be one of {SCHEDULE_KINDS}, got {kind!r}")


def run_transfer(n_sites, T, kind="linear", theta=-np.pi / 2, alpha=1.0, phi=1, method="cfet4",
                 n_steps=None, field_h=0.0, bond_form="normalized"):
    params = BBParams(n_sites, theta, alpha, field_h, bond_form)
    schedule = make_schedule(kind, T, n_sites, theta, alpha, bond_form)
    psi0 = prepare_dimer_state(params, "left_free", phi)
    return evolve(params, schedule, psi0, n_steps=n_steps, method=method)


def _error_task(task):
    n_sites, T, kind, theta, alpha, method, bond_form = task
    rec = run_transfer(n_sites, T, kind, theta, alpha, method=method, bond_form=bond_form)
    return {
        "n_sites": n_sites,
        "T": float(T),
        "velocity": float(T) / (n_sites - 1),
        "schedule": kind,
        "error": rec.error,
        "fidelity": rec.fidelity,
        "overlap": rec.overlap,
        "norm_drift": rec.norm_drift,
    }


def map_tasks(func, tasks, workers=1):
    """Apply ``func`` to ``tasks`` with results in input order."""
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) < 2:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


def error_sweep(n_list, durations, kind="linear", theta=-np.pi / 2, alpha=1.0, method="cfet4",
                workers=1, bond_form="normalized"):
    """Transfer error for every (N, T); ``durations`` maps N to a list of T or is one list."""
    tasks = []
    for n in n_list:
        ts = durations[n] if isinstance(durations, dict) else durations
        tasks.extend((int(n), float(T), kind, theta, alpha, method, bond_form) for T in ts)
    return map_tasks(_error_task, tasks, workers)


def duration_for_error(n_sites, target, kind="optimized", grid=None, theta=-np.pi / 2, alpha=1.0,
                       rel_tol=1e-3, method="cfet4", bond_form="normalized"):
    """Shortest duration T (in the scanned range) beyond which the error stays below ``target``.

    Scans ``grid`` (ascending T) for the first point after which every
    sampled error is below target, then bisects between it and its
    predecessor to relative precision ``rel_tol``.  Returns (T, error at T).
    """
    if grid is None:
        grid = [5.0 * (n_sites - 1) * 2**k for k in range(10)]
    grid = sorted(float(T) for T in grid)

    def err(T):
        return run_transfer(n_sites, T, kind, theta, alpha, method=method, bond_form=bond_form).error

    errors = []
    for T in grid:
        errors.append(err(T))
        # stop two points after first success to guard against a lone interference dip
        ok = [e < target for e in errors]
        if len(ok) >= 2 and ok[-1] and ok[-2]:
            break
    ok = [e < target for e in errors]
    if not ok[-1]:
        raise ConfigurationError(f"error {errors[-1]:.3g} still above {target} at T={grid[len(errors) - 1]}")
    k = len(ok) - 1
    while k > 0 and ok[k - 1]:
        k -= 1
    hi, e_hi = grid[k], errors[k]
    if k == 0:
        return hi, e_hi
    lo = grid[k - 1]
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        e_mid = err(mid)
        if e_mid < target:
            hi, e_hi = mid, e_mid
        else:
            lo = mid
    return hi, e_hi


def velocity_grid(n_sites, velocities):
    """Durations T = v (N - 1) for mean velocities v."""
    return [float(v) * (n_sites - 1) for v in velocities]


def log_slope(xs, ys):
    """Least-squares slope of log(y) against x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


def is_finite_positive(values):
    return all(math.isfinite(v) and v > 0 for v in values)
