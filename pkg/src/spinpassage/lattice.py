"""Cold-atom realization: Bose-Hubbard to spin-1 couplings, superlattice potentials,
and conversion of dimensionless protocol durations to seconds.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .exceptions import ConfigurationError

POLE_TOL = 1e-6
MAX_TUNNELING_RATIO = 0.3
WARN_TUNNELING_RATIO = 0.1


@dataclass(frozen=True)
class HubbardParams:
    tunneling: float
    c0: float
    c2: float

    def __post_init__(self):
        if self.c0 == 0:
            raise ConfigurationError("c0 must be non-zero")
        ratio = abs(self.tunneling / self.c0)
        if ratio > MAX_TUNNELING_RATIO:
            raise ConfigurationError(
                f"|t/c0| = {ratio:.3g} exceeds {MAX_TUNNELING_RATIO}; second-order mapping invalid"
            )
        if ratio > WARN_TUNNELING_RATIO:
            warnings.warn(f"|t/c0| = {ratio:.3g} is not small; mapping is only qualitative", stacklevel=2)

    @property
    def ctilde2(self):
        return self.c2 / self.c0


def effective_coefficients(hp: HubbardParams):
    """(bilinear, biquadratic) coefficients of the second-order spin Hamiltonian."""
    ct = hp.ctilde2
    if abs(1 + ct) < POLE_TOL or abs(1 - 2 * ct) < POLE_TOL:
        raise ConfigurationError(f"c2/c0 = {ct!r} sits on a pole of the effective Hamiltonian")
    pref = -2 * hp.tunneling**2 / hp.c0
    bilinear = pref / (1 + ct)
    biquadratic = pref / 3 * (1 / (1 + ct) + 2 / (1 - 2 * ct))
    return bilinear, biquadratic


def hubbard_to_bb(hp: HubbardParams):
    """Return (alpha, theta) with alpha * (cos theta, sin theta) = (bilinear, biquadratic)."""
    a, b = effective_coefficients(hp)
    return float(np.hypot(a, b)), float(np.arctan2(b, a))


def scattering_to_ctilde(a0, a2):
    """c2/c0 from the spin-0 and spin-2 scattering lengths (g_S proportional to a_S)."""
    denom = a0 + 2 * a2
    if denom == 0:
        raise ConfigurationError("a0 + 2*a2 must be non-zero")
    return (a2 - a0) / denom


@dataclass(frozen=True)
class SuperlatticeConfig:
    intensity_half: float
    intensity_full: float
    phase_full: float = 0.0
    wavelength: float = 1.0

    def __post_init__(self):
        if self.intensity_half < 0 or self.intensity_full < 0:
            raise ConfigurationError("laser intensities must be non-negative")
        if not self.wavelength > 0:
            raise ConfigurationError("wavelength must be positive")


STAGES = {
    "a": SuperlatticeConfig(1.0, 0.5, np.pi / 2),
    "b": SuperlatticeConfig(1.0, 0.0, np.pi / 2),
    "c": SuperlatticeConfig(1.0, 0.5, 0.0),
}


def stage_config(stage, intensity_half=1.0, intensity_full=0.5, wavelength=1.0):
    """Configuration for protocol stage a (start), b (uniform) or c (end)."""
    if stage not in STAGES:
        raise ConfigurationError(f"stage must be one of a, b, c; got {stage!r}")
    phase = STAGES[stage].phase_full
    full = 0.0 if stage == "b" else intensity_full
    return SuperlatticeConfig(intensity_half, full, phase, wavelength)


def superlattice_potential(cfg: SuperlatticeConfig, positions):
    """I_half cos^2(2 pi x / (lambda/2)) + I_full cos^2(2 pi x / lambda + phi_full)."""
    x = np.asarray(positions, dtype=float)
    lam = cfg.wavelength
    return cfg.intensity_half * np.cos(2 * np.pi * x / (lam / 2)) ** 2 + cfg.intensity_full * np.cos(
        2 * np.pi * x / lam + cfg.phase_full
    ) ** 2


# --------------------------------------------------------------------------
# durations

TABLE_FIELDS = ("n_sites", "schedule", "error_threshold", "t_alpha")


def load_duration_table(path=None):
    """Rows of (n_sites, schedule, error_threshold, t_alpha).

    Defaults to the table shipped with the package.
    """
    if path is None:
        ref = resources.files("spinpassage") / "data" / "transfer_times.csv"
        text = ref.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    for rec in csv.DictReader(text.splitlines()):
        rows.append(
            (int(rec["n_sites"]), rec["schedule"], float(rec["error_threshold"]), float(rec["t_alpha"]))
        )
    return rows


def write_duration_table(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_FIELDS)
        for n, sched, eps, ta in sorted(rows):
            writer.writerow([n, sched, f"{eps:.17g}", f"{ta:.17g}"])


def timescale_estimate(J_per_second, n_sites, target_error, schedule="optimized", table=None):
    """Protocol duration in seconds: (T * alpha) / J for the tabulated entry."""
    if not J_per_second > 0:
        raise ConfigurationError("J must be positive")
    rows = load_duration_table() if table is None else table
    for n, sched, eps, t_alpha in rows:
        if n == n_sites and sched == schedule and np.isclose(eps, target_error, rtol=1e-9):
            return t_alpha / J_per_second
    available = ", ".join(f"(N={n}, {s}, eps={e:g})" for n, s, e, _ in rows)
    raise ConfigurationError(
        f"no simulated entry for N={n_sites}, {schedule}, eps={target_error:g}; available: {available}"
    )
