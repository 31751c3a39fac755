"""Adiabaticity diagnostics and Blackman-shaped schedule synthesis.

Profiles are anything exposing ``gap_at(x)`` and ``coupling_at(x)``
(normally a :class:`~spinpassage.spectral.SpectralProfile`).
"""

from __future__ import annotations

import bisect
import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq

from .dynamics import CouplingSchedule
from .exceptions import ConfigurationError, ConvergenceError, FirstOrderBreakdownWarning
from .spectral import SpectralProfile

BLACKMAN_COEFFS = (0.42, 0.5, 0.08)
ENDPOINT_TOL = 1e-8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def adiabatic_threshold(profile):
    """max_x c(x) / min_x Delta(x) over the sampled profile."""
    gap = np.asarray(profile.gap)
    if gap.size == 0 or np.any(gap <= 0):
        raise ConfigurationError("profile must be non-empty with a positive gap")
    return float(np.max(profile.coupling) / np.min(gap))


def blackman_window(tau):
    """0.42 - 0.5 cos(2 pi tau) + 0.08 cos(4 pi tau) on [0, 1]."""
    tau = np.asarray(tau, dtype=float)
    a0, a1, a2 = BLACKMAN_COEFFS
    out = a0 - a1 * np.cos(2 * np.pi * tau) + a2 * np.cos(4 * np.pi * tau)
    # the three coefficients sum to one, so the endpoints are zero up to rounding
    return np.where((tau <= 0) | (tau >= 1), 0.0, np.maximum(out, 0.0))


def blackman_integral(tau):
    """Antiderivative of the window from 0 to tau."""
    tau = np.asarray(tau, dtype=float)
    a0, a1, a2 = BLACKMAN_COEFFS
    return a0 * tau - a1 * np.sin(2 * np.pi * tau) / (2 * np.pi) + a2 * np.sin(4 * np.pi * tau) / (4 * np.pi)


def _panel_nodes(a, b):
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * _GL_NODES, half * _GL_WEIGHTS


def perturbative_excitation(profile, T, schedule: Optional[CouplingSchedule] = None, n_panels=None):
    """First-order excitation probability

        p(T) = | int_0^T dt exp(i int_0^t Delta(x(t')) dt') c(x(t)) dx/dt |^2

    by composite 10-point Gauss-Legendre quadrature.  The inner phase is
    integrated exactly per panel and, for each outer node, by a second
    Gauss-Legendre rule on [panel start, node].  Values above one are
    returned unclamped with a :class:`FirstOrderBreakdownWarning`.
    """
    if not T > 0:
        raise ConfigurationError(f"T must be positive, got {T!r}")
    if schedule is None:
        schedule = CouplingSchedule.linear(T)
    elif abs(schedule.duration - T) > 1e-12 * T:
        raise ConfigurationError("schedule duration differs from T")
    if n_panels is None:
        phase_total = T * float(np.max(profile.gap))
        n_panels = max(400, int(np.ceil(phase_total / 0.5)))
    edges = np.linspace(0.0, T, n_panels + 1)

    def gap_t(t):
        return profile.gap_at(schedule(t))

    # phase at panel starts
    panel_phase = np.empty(n_panels)
    nodes = np.empty((n_panels, _GL_NODES.size))
    weights = np.empty_like(nodes)
    for j in range(n_panels):
        nodes[j], weights[j] = _panel_nodes(edges[j], edges[j + 1])
        panel_phase[j] = np.sum(weights[j] * gap_t(nodes[j]))
    start_phase = np.concatenate([[0.0], np.cumsum(panel_phase)[:-1]])

    # inner integrals from panel start to each node, all at once
    a = edges[:-1, None, None]
    tn = nodes[:, :, None]
    half = 0.5 * (tn - a)
    inner_t = 0.5 * (tn + a) + half * _GL_NODES[None, None, :]
    inner = np.sum(half * _GL_WEIGHTS[None, None, :] * gap_t(inner_t), axis=2)
    phase = start_phase[:, None] + inner

    x_nodes = schedule(nodes)
    integrand = np.exp(1j * phase) * profile.coupling_at(x_nodes) * schedule.velocity(nodes)
    amp = np.sum(weights * integrand)
    p = float(abs(amp) ** 2)
    if p > 1:
        warnings.warn(
            f"first-order excitation estimate {p:.3g} exceeds one; perturbation theory has broken down",
            FirstOrderBreakdownWarning,
            stacklevel=2,
        )
    return p


@dataclass(frozen=True, eq=False)
class OptimizedPath:
    """Dense (t, x, dx/dt) knot table from x(0) = +1 to x(T) = -1."""

    duration: float
    t: np.ndarray
    x: np.ndarray
    dxdt: np.ndarray
    tau: np.ndarray
    amplitude: float
    profile_ref: dict

    def schedule(self):
        return CouplingSchedule.table(self.t, self.x, self.dxdt)

    def rescaled(self, T):
        """Same path shape stretched to duration T (x(tau) does not depend on T)."""
        factor = T / self.duration
        t = self.t * factor
        t[-1] = T
        return OptimizedPath(float(T), t, self.x, self.dxdt / factor, self.tau, self.amplitude, self.profile_ref)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "x"])
            for t, x in zip(self.t, self.x):
                writer.writerow([f"{t:.17g}", f"{x:.17g}"])


def _window_scalar(tau):
    if tau <= 0.0 or tau >= 1.0:
        return 0.0
    a0, a1, a2 = BLACKMAN_COEFFS
    return max(a0 - a1 * math.cos(2 * math.pi * tau) + a2 * math.cos(4 * math.pi * tau), 0.0)


class _ScalarPiecewise:
    """Fast scalar evaluation of a scipy piecewise polynomial (clamped to its domain)."""

    def __init__(self, ppoly):
        self.breaks = [float(b) for b in ppoly.x]
        self.coeffs = [tuple(float(v) for v in col) for col in ppoly.c.T]
        self.last = len(self.coeffs) - 1

    def __call__(self, x):
        lo, hi = self.breaks[0], self.breaks[-1]
        x = lo if x < lo else hi if x > hi else x
        k = min(bisect.bisect_right(self.breaks, x) - 1, self.last)
        dx = x - self.breaks[k]
        acc = 0.0
        for coef in self.coeffs[k]:
            acc = acc * dx + coef
        return acc


def _scalar_functions(profile):
    if isinstance(profile, SpectralProfile):
        return _ScalarPiecewise(profile.coupling_interpolant), _ScalarPiecewise(profile.gap_interpolant)
    return (lambda x: float(profile.coupling_at(x))), (lambda x: float(profile.gap_at(x)))


def _shoot(profile, amplitude, rtol, dense=False):
    coupling, gap = _scalar_functions(profile)

    if dense:
        def rhs(tau, y):
            x = min(max(y[0], -1.0), 1.0)
            return [-amplitude * _window_scalar(tau) / coupling(x), 1.0 / gap(x)]
        y0 = [1.0, 0.0]
    else:
        def rhs(tau, y):
            x = min(max(y[0], -1.0), 1.0)
            return [-amplitude * _window_scalar(tau) / coupling(x)]
        y0 = [1.0]

    return solve_ivp(rhs, (0.0, 1.0), y0, method="RK45", rtol=rtol, atol=1e-13, dense_output=dense)


def synthesize_optimized_path(profile, T, n_knots=4001, rtol=1e-12, max_bisections=100):
    """Schedule whose u(tau) = c(x) dx/dtau is a Blackman window in the phase variable.

    Stage one integrates dx/dtau = -A u0(tau) / c(x), x(0) = 1, and shoots on
    A (Brent's safeguarded bisection) until x(1) = -1 within 1e-8.  Stage two
    integrates s(tau) = int dtau / Delta(x) alongside and maps tau to physical
    time t = T s(tau) / s(1).
    """
    if not T > 0:
        raise ConfigurationError(f"T must be positive, got {T!r}")
    xs = np.asarray(profile.x_samples)
    if xs[0] > -1 + 1e-12 or xs[-1] < 1 - 1e-12:
        raise ConfigurationError("profile must cover [-1, 1]")
    c = np.asarray(profile.coupling)
    if np.any(c <= 0) or np.any(np.asarray(profile.gap) <= 0):
        raise ConfigurationError("profile coupling and gap must be positive for path synthesis")

    def miss(amplitude):
        return _shoot(profile, amplitude, rtol).y[0, -1] + 1.0

    # x(1) decreases monotonically with A; start from the trapezoid estimate of
    # int c dx / int u0 dtau and widen until the root is bracketed
    guess = trapezoid(c, xs) / BLACKMAN_COEFFS[0]
    lo, hi = 0.98 * guess, 1.02 * guess
    for _ in range(60):
        if miss(lo) > 0:
            break
        lo *= 0.5
    else:
        raise ConvergenceError("could not bracket the shooting amplitude")
    for _ in range(60):
        if miss(hi) < 0:
            break
        hi *= 2.0
    else:
        raise ConvergenceError("could not bracket the shooting amplitude")
    try:
        amplitude, info = brentq(
            miss, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=max_bisections, full_output=True, disp=False
        )
    except ValueError as exc:
        raise ConvergenceError(str(exc)) from exc
    residual = abs(miss(amplitude))
    if not info.converged or residual > ENDPOINT_TOL:
        raise ConvergenceError(
            f"shooting did not reach x(1) = -1 within {max_bisections} iterations", residual=residual
        )

    sol = _shoot(profile, amplitude, rtol, dense=True)
    tau = np.linspace(0.0, 1.0, n_knots)
    x_tau, s_tau = sol.sol(tau)
    x_tau[0] = 1.0
    if abs(x_tau[-1] + 1) > ENDPOINT_TOL:
        raise ConvergenceError("path endpoint misses x = -1", residual=abs(x_tau[-1] + 1))
    if np.any(np.diff(x_tau) >= 0):
        raise ConvergenceError("synthesized path is not strictly decreasing")
    x_tau = np.clip(x_tau, -1.0, 1.0)
    s1 = s_tau[-1]
    t = T * s_tau / s1
    t[0], t[-1] = 0.0, T
    dxdt = -amplitude * blackman_window(tau) / profile.coupling_at(x_tau) * s1 * profile.gap_at(x_tau) / T
    ref = {
        "n_sites": int(getattr(profile, "n_sites", 0)),
        "theta": float(getattr(profile, "theta", float("nan"))),
        "alpha": float(getattr(profile, "alpha", 1.0)),
        "n_samples": int(len(xs)),
    }
    return OptimizedPath(float(T), t, x_tau, dxdt, tau, float(amplitude), ref)
