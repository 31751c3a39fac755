"""Low-lying spectra, gap and non-adiabatic coupling profiles.

The gap is taken between the ground and first excited state of a fixed
magnetization sector.  The coupling is

    c(x) = |<psi1| dH/dx |psi0>| / Delta(x),

and when the first excited level is (near-)degenerate the norm of the
projection of dH/dx |psi0> onto the whole degenerate cluster is used, which
does not depend on how the solver picked vectors inside the cluster.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as sla
from scipy import stats
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .exceptions import CapabilityError, ConfigurationError, ConvergenceError
from .spin_ops import (
    MAX_SPECTRAL_SITES,
    BBParams,
    SparseHamiltonian,
    modulated_hamiltonian,
    sector_basis,
)

DENSE_LIMIT = 600
DEGENERACY_TOL = 1e-8
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class EigenPair:
    energy: float
    vector: np.ndarray


def _fix_sign(vec):
    k = np.argmax(np.abs(vec))
    return vec if vec[k] >= 0 else -vec


def _eigsh(mat, k):
    dim = mat.shape[0]
    if dim <= DENSE_LIMIT or k >= dim - 1:
        dense = mat.toarray() if hasattr(mat, "toarray") else np.asarray(mat)
        vals, vecs = np.linalg.eigh(dense)
        return vals[:k], vecs[:, :k]
    v0 = np.random.default_rng(0).standard_normal(dim)
    try:
        vals, vecs = sla.eigsh(mat, k=k, which="SA", v0=v0, tol=0, maxiter=50 * dim)
    except sla.ArpackNoConvergence as exc:
        raise ConvergenceError(
            f"eigensolver did not converge for k={k} (dim={dim})", residual=float("nan")
        ) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    resid = np.linalg.norm(mat @ vecs - vecs * vals, axis=0).max()
    if resid > RESIDUAL_TOL * max(1.0, np.abs(vals).max()):
        raise ConvergenceError(f"eigensolver residual {resid:.3e} above tolerance", residual=resid)
    return vals, vecs


def lowest_eigenpairs(H, k=1):
    """The k lowest eigenpairs of a SparseHamiltonian (or any symmetric matrix).

    Vectors are orthonormal and signed so their largest-magnitude entry is
    positive.
    """
    mat = H.matrix if isinstance(H, SparseHamiltonian) else H
    dim = mat.shape[0]
    if not 1 <= k <= dim:
        raise ConfigurationError(f"k must be in [1, {dim}], got {k}")
    vals, vecs = _eigsh(mat, k)
    return [EigenPair(float(e), _fix_sign(vecs[:, j])) for j, e in enumerate(vals)]


def _gap_and_coupling(base, slope, x, need_coupling=True, alpha=1.0):
    mat = (base + x * slope).tocsr()
    dim = mat.shape[0]
    if dim < 2:
        raise ConfigurationError("sector has a single state; no gap defined")
    tol = DEGENERACY_TOL * max(alpha, 1e-300)
    k = min(dim, 8 if need_coupling else 2)
    while True:
        vals, vecs = _eigsh(mat, k)
        gap = vals[1] - vals[0]
        if not need_coupling:
            return gap, np.nan
        cluster = np.abs(vals - vals[1]) < tol
        cluster[0] = False
        if k == dim or not cluster[-1]:
            break
        k = min(dim, 2 * k)
    if gap < 1e-10 * max(alpha, 1e-300):
        raise ConvergenceError(f"gap {gap:.3e} at x={x} is numerically zero", residual=gap)
    proj = vecs[:, cluster].T @ (slope @ vecs[:, 0])
    return gap, float(np.linalg.norm(proj) / gap)


def default_x_grid():
    """201 uniform points on [-1, 1] plus 50 extra points on [-0.1, 0.1]."""
    coarse = np.linspace(-1.0, 1.0, 201)
    fine = np.linspace(-0.1, 0.1, 52)[1:-1]
    return np.unique(np.round(np.concatenate([coarse, fine]), 15))


def _sweep_worker(task):
    params, magnetization, xs, need_coupling = task
    mh = modulated_hamiltonian(params, sector_basis(params.n_sites, magnetization))
    return [_gap_and_coupling(mh.base, mh.slope, x, need_coupling, params.alpha) for x in xs]


def _sweep(params, x_samples, magnetization, need_coupling, n_jobs):
    if params.n_sites > MAX_SPECTRAL_SITES:
        raise CapabilityError(
            f"spectra limited to N <= {MAX_SPECTRAL_SITES}, got N={params.n_sites}"
        )
    xs = np.asarray(x_samples, dtype=float)
    if np.any(np.abs(xs) > 1.0):
        raise ConfigurationError("x samples must lie in [-1, 1]")
    if n_jobs is None or n_jobs <= 1 or len(xs) < 2:
        out = _sweep_worker((params, magnetization, xs, need_coupling))
    else:
        chunks = [c for c in np.array_split(xs, n_jobs) if len(c)]
        tasks = [(params, magnetization, c, need_coupling) for c in chunks]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            out = [r for part in pool.map(_sweep_worker, tasks) for r in part]
    gaps = np.array([g for g, _ in out])
    couplings = np.array([c for _, c in out])
    return gaps, couplings


def gap_profile(params: BBParams, x_samples, magnetization=1, n_jobs=1):
    """Delta(x) = E1 - E0 within the given magnetization sector."""
    return _sweep(params, x_samples, magnetization, False, n_jobs)[0]


def coupling_profile(params: BBParams, x_samples, magnetization=1, n_jobs=1):
    """c(x) per unit x; independent of alpha."""
    return _sweep(params, x_samples, magnetization, True, n_jobs)[1]


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    """Sampled gap and coupling curves with monotone cubic interpolants."""

    x_samples: np.ndarray
    gap: np.ndarray
    coupling: np.ndarray
    n_sites: int = 0
    theta: float = float("nan")
    alpha: float = 1.0
    magnetization: int = 1
    _gap_interp: PchipInterpolator = field(init=False, repr=False)
    _coupling_interp: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        xs = np.asarray(self.x_samples, dtype=float)
        gap = np.asarray(self.gap, dtype=float)
        cpl = np.asarray(self.coupling, dtype=float)
        if not (xs.shape == gap.shape == cpl.shape) or xs.ndim != 1 or len(xs) < 2:
            raise ConfigurationError("x_samples, gap and coupling must be 1-d of equal length >= 2")
        if np.any(np.diff(xs) <= 0):
            raise ConfigurationError("x_samples must be strictly increasing")
        if np.any(gap <= 0):
            raise ConfigurationError("gap must be positive at every sample")
        if np.any(cpl < 0):
            raise ConfigurationError("coupling must be non-negative")
        object.__setattr__(self, "x_samples", xs)
        object.__setattr__(self, "gap", gap)
        object.__setattr__(self, "coupling", cpl)
        object.__setattr__(self, "_gap_interp", PchipInterpolator(xs, gap))
        object.__setattr__(self, "_coupling_interp", PchipInterpolator(xs, cpl))

    @property
    def gap_interpolant(self):
        return self._gap_interp

    @property
    def coupling_interpolant(self):
        return self._coupling_interp

    def gap_at(self, x):
        x = np.clip(x, self.x_samples[0], self.x_samples[-1])
        return self._gap_interp(x)

    def coupling_at(self, x):
        x = np.clip(x, self.x_samples[0], self.x_samples[-1])
        return self._coupling_interp(x)

    def scaled(self, alpha_factor):
        """Same chain at alpha * alpha_factor: gap scales, coupling does not."""
        return SpectralProfile(
            self.x_samples, self.gap * alpha_factor, self.coupling,
            self.n_sites, self.theta, self.alpha * alpha_factor, self.magnetization,
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "gap", "coupling"])
            for row in zip(self.x_samples, self.gap, self.coupling):
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, **meta):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], **meta)


def spectral_profile(params: BBParams, x_samples=None, magnetization=1, n_jobs=1):
    """Gap and coupling on a grid (default: :func:`default_x_grid`)."""
    xs = default_x_grid() if x_samples is None else np.sort(np.asarray(x_samples, float))
    gaps, couplings = _sweep(params, xs, magnetization, True, n_jobs)
    return SpectralProfile(
        xs, gaps, couplings, params.n_sites, params.theta, params.alpha, magnetization
    )


def three_site_gap(x, alpha=1.0):
    """Closed-form N=3 gap at theta=-pi/2 in the normalized bond form."""
    x = np.asarray(x, dtype=float)
    return alpha / 3 * np.sqrt(1 + 8 * x**2)


def three_site_coupling(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(2.0) / (1 + 8 * x**2)


def three_site_profile(x_samples=None, alpha=1.0):
    """Closed-form N=3 profile sampled on a grid."""
    xs = default_x_grid() if x_samples is None else np.asarray(x_samples, float)
    return SpectralProfile(
        xs, three_site_gap(xs, alpha), three_site_coupling(xs), 3, -np.pi / 2, alpha, 1
    )


def minimal_gap(params: BBParams, magnetization=1, window=0.2, n_grid=41):
    """Minimum of Delta(x) over |x| <= window: grid search then bounded refinement.

    Returns (x_min, gap_min).
    """
    mh = modulated_hamiltonian(params, sector_basis(params.n_sites, magnetization))

    def gap(x):
        return _gap_and_coupling(mh.base, mh.slope, float(x), False, params.alpha)[0]

    xs = np.linspace(-window, window, n_grid)
    gaps = np.array([gap(x) for x in xs])
    j = int(np.argmin(gaps))
    lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, n_grid - 1)]
    res = minimize_scalar(gap, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    if res.fun < gaps[j]:
        return float(res.x), float(res.fun)
    return float(xs[j]), float(gaps[j])


def min_gap_scaling(n_list, theta=-np.pi / 2, alpha=1.0, bond_form="normalized"):
    """List of (N, minimal gap) sorted by N; every N must be odd and <= 11."""
    out = []
    for n in sorted(n_list):
        if n % 2 == 0:
            raise ConfigurationError(f"chain length must be odd, got {n}")
        if n > MAX_SPECTRAL_SITES:
            raise CapabilityError(f"spectra limited to N <= {MAX_SPECTRAL_SITES}, got N={n}")
        params = BBParams(n, theta, alpha, bond_form=bond_form)
        out.append((int(n), minimal_gap(params)[1]))
    return out


def inverse_n_fit(scaling):
    """Least-squares fit gap_min = slope / N + intercept.

    Returns (slope, intercept, r_squared).
    """
    ns = np.array([n for n, _ in scaling], dtype=float)
    gaps = np.array([g for _, g in scaling])
    res = stats.linregress(1.0 / ns, gaps)
    return float(res.slope), float(res.intercept), float(res.rvalue**2)
