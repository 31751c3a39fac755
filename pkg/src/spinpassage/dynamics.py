"""Dimer initial states, time propagation under H(x(t)) and transfer diagnostics.

Times are in units of 1/alpha when ``alpha = 1``; in general the
Hamiltonian carries alpha explicitly and hbar = 1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .exceptions import CapabilityError, ConfigurationError, NormDriftError
from .krylov import expm_krylov
from .spin_ops import (
    BBParams,
    SectorBasis,
    modulated_hamiltonian,
    sector_basis,
    singlet,
)

MAX_DYNAMICS_SITES = 9
MAX_FULL_BASIS_SITES = 7
N_SAMPLES = 201
NORM_DRIFT_LIMIT = 1e-6

_GAUSS = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
# fourth-order commutator-free weights for the two Gauss-point exponentials
_CF_WEIGHTS = ((3 - 2 * np.sqrt(3)) / 12, (3 + 2 * np.sqrt(3)) / 12)

UP = np.array([1.0, 0.0, 0.0])
ZERO = np.array([0.0, 1.0, 0.0])
DOWN = np.array([0.0, 0.0, 1.0])


def site_state(phi):
    """Normalize a site state given as m in {+1, 0, -1} or a 3-amplitude vector."""
    if np.isscalar(phi):
        if phi not in (1, 0, -1):
            raise ConfigurationError(f"site state must be +1, 0 or -1, got {phi!r}")
        vec = np.zeros(3, dtype=complex)
        vec[1 - int(phi)] = 1.0
        return vec
    vec = np.asarray(phi, dtype=complex)
    if vec.shape != (3,):
        raise ConfigurationError("site state amplitudes must have length 3")
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ConfigurationError("site state amplitudes must not all vanish")
    return vec / norm


def _definite_m(phi_vec):
    nz = np.nonzero(np.abs(phi_vec) > 1e-14)[0]
    return int(1 - nz[0]) if len(nz) == 1 else None


# --------------------------------------------------------------------------
# schedules


@dataclass(frozen=True, eq=False)
class CouplingSchedule:
    """Control path x(t) on [0, duration].

    ``kind`` is "linear" (x = (T - 2t)/T), "table" (interpolated knots,
    cubic Hermite if derivatives are supplied, monotone cubic otherwise) or
    "constant".
    """

    kind: Literal["linear", "table", "constant"]
    duration: float
    t: Optional[np.ndarray] = None
    x: Optional[np.ndarray] = None
    dxdt: Optional[np.ndarray] = None
    value: float = 1.0
    _interp: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigurationError(f"schedule duration must be positive, got {self.duration!r}")
        if self.kind == "table":
            t = np.asarray(self.t, dtype=float)
            x = np.asarray(self.x, dtype=float)
            if t.ndim != 1 or t.shape != x.shape or len(t) < 2:
                raise ConfigurationError("table schedule needs matching 1-d t and x arrays")
            if np.any(np.diff(t) <= 0):
                raise ConfigurationError("table times must be strictly increasing")
            T = self.duration
            if abs(t[0]) > 1e-9 * T or abs(t[-1] - T) > 1e-9 * T:
                raise ConfigurationError("table times must span [0, duration]")
            if np.any(np.abs(x) > 1 + 1e-9):
                raise ConfigurationError("table x values must lie in [-1, 1]")
            if abs(x[0] - 1) > 1e-8 or abs(x[-1] + 1) > 1e-8:
                raise ConfigurationError("table schedule must run from x=+1 to x=-1")
            if np.any(np.diff(x) > 1e-12):
                raise ConfigurationError("table x values must be non-increasing")
            x = np.clip(x, -1.0, 1.0)
            object.__setattr__(self, "t", t)
            object.__setattr__(self, "x", x)
            if self.dxdt is not None:
                d = np.asarray(self.dxdt, dtype=float)
                object.__setattr__(self, "dxdt", d)
                interp = CubicHermiteSpline(t, x, d)
            else:
                interp = PchipInterpolator(t, x)
            object.__setattr__(self, "_interp", interp)
        elif self.kind == "constant":
            if abs(self.value) > 1:
                raise ConfigurationError("constant x must lie in [-1, 1]")
        elif self.kind != "linear":
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def linear(cls, duration):
        return cls("linear", float(duration))

    @classmethod
    def constant(cls, value, duration):
        return cls("constant", float(duration), value=float(value))

    @classmethod
    def table(cls, t, x, dxdt=None):
        t = np.asarray(t, dtype=float)
        return cls("table", float(t[-1]), t, x, dxdt)

    def __call__(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        if self.kind == "linear":
            return (self.duration - 2 * t) / self.duration
        if self.kind == "constant":
            return np.full_like(t, self.value)
        return np.clip(self._interp(t), -1.0, 1.0)

    def velocity(self, t):
        """dx/dt."""
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return np.full_like(t, -2.0 / self.duration)
        if self.kind == "constant":
            return np.zeros_like(t)
        return self._interp.derivative()(np.clip(t, 0.0, self.duration))

    def describe(self):
        out = {"kind": self.kind, "duration": float(self.duration)}
        if self.kind == "constant":
            out["value"] = float(self.value)
        if self.kind == "table":
            out["n_knots"] = int(len(self.t))
        return out


# --------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: SectorBasis
    amplitudes: np.ndarray
    phi: Optional[np.ndarray] = None

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def to_full(self):
        """Amplitudes in the full 3**N product basis, indexed by product code."""
        full = np.zeros(3**self.basis.n_sites, dtype=complex)
        full[self.basis.codes] = self.amplitudes
        return full


def _dimer_tensor(n_sites, side, phi_vec):
    """Product-code-indexed amplitudes of the dimer state."""
    s = singlet().reshape(3, 3)
    # tensor axes ordered site 1 .. N (digit index)
    if side == "left_free":
        factors = [phi_vec] + [s] * ((n_sites - 1) // 2)
    else:
        factors = [s] * ((n_sites - 1) // 2) + [phi_vec]
    tensor = factors[0]
    for f in factors[1:]:
        tensor = np.multiply.outer(tensor, f)
    # code = sum d_i 3^(i-1): site 1 is the fastest axis, i.e. the last in C order
    return np.transpose(tensor).reshape(-1)


def prepare_dimer_state(params: BBParams, side="left_free", phi=1, full_basis=False):
    """Singlet-paired chain with one free spin in state ``phi``.

    ``left_free``: |phi>_1 |s>_23 ... |s>_{N-1,N}; ``right_free``:
    |s>_12 ... |s>_{N-2,N-1} |phi>_N.  A definite-m ``phi`` lives in the
    sector M = m; superpositions need ``full_basis=True`` (N <= 7).
    """
    n = params.n_sites
    if n % 2 == 0:
        raise ConfigurationError(f"dimer states need an odd chain length, got N={n}")
    if side not in ("left_free", "right_free"):
        raise ConfigurationError(f"side must be 'left_free' or 'right_free', got {side!r}")
    phi_vec = site_state(phi)
    m = _definite_m(phi_vec)
    if full_basis:
        if n > MAX_FULL_BASIS_SITES:
            raise CapabilityError(f"full-basis states limited to N <= {MAX_FULL_BASIS_SITES}")
        basis = sector_basis(n, None)
    elif m is None:
        raise ConfigurationError(
            "phi mixes magnetizations; pass full_basis=True (N <= 7) or transfer each "
            "component in its own sector"
        )
    else:
        basis = sector_basis(n, m)
    full = _dimer_tensor(n, side, phi_vec)
    amps = full[basis.codes].astype(complex)
    return StateVector(basis, amps, phi_vec)


def site_densities(state: StateVector):
    """Reduced density matrices of all sites, shape (N, 3, 3)."""
    n = state.basis.n_sites
    if state.basis.magnetization is not None:
        probs = np.abs(state.amplitudes) ** 2
        out = np.zeros((n, 3, 3), dtype=complex)
        for i in range(n):
            out[i][np.diag_indices(3)] = np.bincount(
                state.basis.digits[:, i], weights=probs, minlength=3
            )
        return out
    tensor = state.to_full().reshape((3,) * n)
    out = np.empty((n, 3, 3), dtype=complex)
    for i in range(n):
        # C-order axis k carries site n - k
        mat = np.moveaxis(tensor, n - 1 - i, 0).reshape(3, -1)
        out[i] = mat @ mat.conj().T
    return out


def reduced_density(state: StateVector, site):
    """Reduced density matrix of ``site`` (1-based)."""
    n = state.basis.n_sites
    if not 1 <= site <= n:
        raise ConfigurationError(f"site must be in [1, {n}], got {site}")
    return site_densities(state)[site - 1]


def site_populations(state: StateVector, phi=1):
    """p_i = <phi| rho_i |phi> for every site."""
    phi_vec = site_state(phi)
    rhos = site_densities(state)
    return np.einsum("a,iab,b->i", phi_vec.conj(), rhos, phi_vec).real


# --------------------------------------------------------------------------
# propagation


@dataclass(frozen=True, eq=False)
class TransferRecord:
    times: np.ndarray
    site_populations: np.ndarray
    norms: np.ndarray
    final_state: StateVector
    fidelity: float
    overlap: float
    norm_drift: float
    params: BBParams
    schedule: CouplingSchedule
    method: str = "cfet4"
    n_steps: int = 0

    @property
    def error(self):
        return 1.0 - self.fidelity

    def to_csv(self, path):
        n = self.site_populations.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"p_{i}" for i in range(1, n + 1)] + ["norm"])
            for t, pops, nrm in zip(self.times, self.site_populations, self.norms):
                writer.writerow([f"{t:.17g}"] + [f"{p:.17g}" for p in pops] + [f"{nrm:.17g}"])

    def summary(self):
        return {
            "fidelity": float(self.fidelity),
            "error": float(self.error),
            "overlap": float(self.overlap),
            "norm_drift": float(self.norm_drift),
            "method": self.method,
            "n_steps": int(self.n_steps),
            "params": self.params.describe(),
            "schedule": self.schedule.describe(),
        }

    def write_sidecar(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def default_steps(duration, alpha=1.0, n_samples=N_SAMPLES):
    """10 sub-steps per unit of alpha*T, at least 1000, rounded to the output grid."""
    steps = max(1000, math.ceil(10 * duration * max(alpha, 1e-300)))
    per = n_samples - 1
    return per * math.ceil(steps / per)


def target_state(params: BBParams, state: StateVector):
    """Right-free dimer state carrying ``state.phi`` in the basis of ``state``."""
    phi = state.phi if state.phi is not None else UP
    full = _dimer_tensor(params.n_sites, "right_free", phi)
    return full[state.basis.codes]


def transfer_fidelity(state: StateVector, phi=None, params: Optional[BBParams] = None):
    """Fidelity <phi| rho_N |phi> of the last site.

    With ``params`` also returns the stricter full-state overlap
    |<psi_target|psi>|^2 as a second value.
    """
    phi_vec = site_state(phi) if phi is not None else (state.phi if state.phi is not None else UP)
    rho = site_densities(state)[-1]
    fid = float(np.real(phi_vec.conj() @ rho @ phi_vec))
    if params is None:
        return fid
    tgt = target_state(params, StateVector(state.basis, state.amplitudes, phi_vec))
    return fid, float(abs(np.vdot(tgt, state.amplitudes)) ** 2)


def evolve(
    params: BBParams,
    schedule: CouplingSchedule,
    psi0: StateVector,
    n_steps=None,
    method="cfet4",
    n_samples=N_SAMPLES,
    krylov_tol=1e-12,
):
    """Propagate i d/dt psi = H(x(t)) psi over [0, schedule.duration].

    Methods: "cfet4" (default; fourth-order commutator-free pair of Krylov
    exponentials per step, H sampled at the two Gauss points), "midpoint"
    (one Krylov exponential per step at the midpoint) and "dop853" (adaptive
    Runge-Kutta, rtol 1e-12).  Populations are sampled on ``n_samples``
    uniformly spaced times including 0 and T.
    """
    if params.n_sites > MAX_DYNAMICS_SITES:
        raise CapabilityError(f"dynamics limited to N <= {MAX_DYNAMICS_SITES}, got N={params.n_sites}")
    if psi0.basis.n_sites != params.n_sites:
        raise ConfigurationError("initial state and params disagree on n_sites")
    if method not in ("cfet4", "midpoint", "dop853"):
        raise ConfigurationError(f"unknown propagation method {method!r}")
    if abs(psi0.norm - 1) > 1e-8:
        raise ConfigurationError(f"initial state must be normalized (norm={psi0.norm!r})")
    T = schedule.duration
    per = n_samples - 1
    if n_steps is None:
        n_steps = default_steps(T, params.alpha, n_samples)
    if n_steps < 100:
        raise ConfigurationError("n_steps must be at least 100")
    if n_steps % per:
        n_steps = per * math.ceil(n_steps / per)

    mh = modulated_hamiltonian(params, psi0.basis)
    base, slope = mh.base, mh.slope
    phi = psi0.phi if psi0.phi is not None else UP
    times = np.linspace(0.0, T, n_samples)

    def record(psi):
        st = StateVector(psi0.basis, psi, phi)
        return site_populations(st, phi), np.linalg.norm(psi)

    psi = psi0.amplitudes.astype(complex)
    pops, norms = [], []
    p, nrm = record(psi)
    pops.append(p)
    norms.append(nrm)

    if method == "dop853":
        def rhs(t, y):
            x = float(schedule(t))
            return -1j * (base @ y + x * (slope @ y))

        sol = solve_ivp(rhs, (0.0, T), psi, method="DOP853", t_eval=times, rtol=1e-12, atol=1e-14)
        if not sol.success:
            raise NormDriftError(f"integrator failed: {sol.message}")
        for k in range(1, n_samples):
            p, nrm = record(sol.y[:, k])
            pops.append(p)
            norms.append(nrm)
        psi = sol.y[:, -1]
    else:
        dt = T / n_steps
        stride = n_steps // per
        for step in range(n_steps):
            t0 = step * dt
            if method == "midpoint":
                x_mid = float(schedule(t0 + 0.5 * dt))
                psi = expm_krylov(lambda v: base @ v + x_mid * (slope @ v), psi, dt, krylov_tol)
            else:
                x1 = float(schedule(t0 + _GAUSS[0] * dt))
                x2 = float(schedule(t0 + _GAUSS[1] * dt))
                w1, w2 = _CF_WEIGHTS
                # each exponential carries half of base; slope weights from the Gauss points
                for xe in (2 * (w2 * x1 + w1 * x2), 2 * (w1 * x1 + w2 * x2)):
                    psi = expm_krylov(
                        lambda v, xe=xe: base @ v + xe * (slope @ v), psi, 0.5 * dt, krylov_tol
                    )
            if (step + 1) % stride == 0:
                p, nrm = record(psi)
                pops.append(p)
                norms.append(nrm)
                if abs(nrm - 1) > NORM_DRIFT_LIMIT:
                    raise NormDriftError(
                        f"norm drift {abs(nrm - 1):.2e} at t={t0 + dt:.4g}; use more steps"
                    )

    norms = np.array(norms)
    drift = float(np.max(np.abs(norms - 1)))
    if drift > NORM_DRIFT_LIMIT:
        raise NormDriftError(f"norm drift {drift:.2e} exceeds {NORM_DRIFT_LIMIT}; use more steps")
    final = StateVector(psi0.basis, psi, phi)
    pops = np.array(pops)
    fid = float(pops[-1, -1])
    overlap = float(abs(np.vdot(target_state(params, final), psi)) ** 2)
    return TransferRecord(
        times, pops, norms, final, fid, overlap, drift, params, schedule, method, int(n_steps)
    )


def mirror_symmetry_deviation(record: TransferRecord):
    """max over i, t of |p_i(t) - p_{N+1-i}(T - t)| on the uniform output grid."""
    pops = np.asarray(record.site_populations)
    times = np.asarray(record.times)
    if not np.allclose(np.diff(times), times[1] - times[0], rtol=1e-9, atol=0):
        raise ConfigurationError("mirror symmetry needs a uniform time grid")
    return float(np.max(np.abs(pops - pops[::-1, ::-1])))


def adiabatic_record(params: BBParams, schedule: CouplingSchedule, phi=1, n_samples=N_SAMPLES):
    """Record built from instantaneous sector ground states (perfectly adiabatic)."""
    from .spectral import lowest_eigenpairs

    phi_vec = site_state(phi)
    m = _definite_m(phi_vec)
    if m is None:
        raise ConfigurationError("adiabatic record needs a definite-m phi")
    basis = sector_basis(params.n_sites, m)
    mh = modulated_hamiltonian(params, basis)
    times = np.linspace(0.0, schedule.duration, n_samples)
    pops, states = [], []
    for t in times:
        vec = lowest_eigenpairs(mh.at(float(schedule(t))), 1)[0].vector
        st = StateVector(basis, vec.astype(complex), phi_vec)
        pops.append(site_populations(st, phi_vec))
        states.append(st)
    pops = np.array(pops)
    final = states[-1]
    return TransferRecord(
        times, pops, np.ones(n_samples), final, float(pops[-1, -1]),
        float(abs(np.vdot(target_state(params, final), final.amplitudes)) ** 2),
        0.0, params, schedule, "adiabatic", 0,
    )


# --------------------------------------------------------------------------
# field-induced phase


@dataclass(frozen=True)
class PhaseResult:
    phase: float
    correction_angle: float
    fidelity_a: float
    fidelity_b: float


def _wrap(angle):
    """Map to (-pi, pi]."""
    wrapped = math.remainder(angle, 2 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def accumulated_phase(params, state: StateVector):
    """Phase phi with <psi_target|psi> = |...| exp(-i phi)."""
    amp = np.vdot(target_state(params, state), state.amplitudes)
    return -float(np.angle(amp))


def differential_phase(params: BBParams, phi_a, phi_b, schedule: CouplingSchedule, n_steps=None, method="cfet4"):
    """Dynamical-phase difference between transfers of two definite-m states.

    With a constant field the difference is alpha*h*(M_a - M_b)*T (wrapped).
    ``correction_angle`` is the rotation angle beta per unit of m such that
    exp(i beta Jz) on the last site undoes the relative phase.
    """
    vec_a, vec_b = site_state(phi_a), site_state(phi_b)
    ma, mb = _definite_m(vec_a), _definite_m(vec_b)
    if ma is None or mb is None:
        raise ConfigurationError("differential_phase needs definite-m states phi_a and phi_b")
    _check_gap_along_path(params, schedule, ma)
    _check_gap_along_path(params, schedule, mb)
    results = []
    for vec in (vec_a, vec_b):
        psi0 = prepare_dimer_state(params, "left_free", vec)
        rec = evolve(params, schedule, psi0, n_steps=n_steps, method=method)
        results.append((accumulated_phase(params, rec.final_state), rec.fidelity))
    (pa, fa), (pb, fb) = results
    phase = _wrap(pa - pb)
    correction = _wrap(phase / (ma - mb)) if ma != mb else 0.0
    return PhaseResult(phase, correction, fa, fb)


def phase_correction_unitary(angle):
    """exp(i angle Jz) on a single site."""
    return np.diag(np.exp(1j * angle * np.array([1.0, 0.0, -1.0])))


def apply_last_site(state: StateVector, unitary):
    """Apply a 3x3 unitary to the last site of a full-basis state."""
    if state.basis.magnetization is not None and not np.allclose(unitary, np.diag(np.diag(unitary))):
        raise ConfigurationError("non-diagonal site unitaries need a full-basis state")
    n = state.basis.n_sites
    if state.basis.magnetization is not None:
        digits = state.basis.digits[:, n - 1]
        return StateVector(state.basis, state.amplitudes * np.diag(unitary)[digits], state.phi)
    tensor = state.to_full().reshape((3,) * n)
    # site N is C-order axis 0
    tensor = np.tensordot(unitary, tensor, axes=([1], [0]))
    return StateVector(state.basis, tensor.reshape(-1)[state.basis.codes], state.phi)


def _check_gap_along_path(params, schedule, magnetization, n_points=9):
    from .spectral import gap_profile

    xs = np.unique(schedule(np.linspace(0.0, schedule.duration, n_points)))
    gaps = gap_profile(params, xs, magnetization)
    if np.any(gaps <= 1e-8 * max(params.alpha, 1e-300)):
        raise ConfigurationError("sector gap collapses along the path; field too strong")
