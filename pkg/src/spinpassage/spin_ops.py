"""Spin-1 operators, magnetization-sector bases and the modulated chain Hamiltonian.

Single-site basis ordering is (+1, 0, -1) <-> digit (0, 1, 2).  A product
configuration of N sites is encoded as the base-3 little-endian integer
``code = sum_i d_i * 3**(i-1)`` with site 1 the least significant digit.
Sector bases list their configurations in ascending code order.

Two-site operators are 9x9 matrices over the pair index ``3*d_left + d_right``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import CapabilityError, ConfigurationError

MAX_SPECTRAL_SITES = 11
DROP_TOL = 1e-14

BondForm = Literal["normalized", "raw"]

_SQ2 = np.sqrt(2.0)
_JZ = np.diag([1.0, 0.0, -1.0])
_JPLUS = np.array([[0.0, _SQ2, 0.0], [0.0, 0.0, _SQ2], [0.0, 0.0, 0.0]])
_JMINUS = _JPLUS.T.copy()


@dataclass(frozen=True)
class BBParams:
    """Physical configuration of a bilinear-biquadratic spin-1 chain.

    ``field_h`` is dimensionless; the field term is ``alpha * field_h * sum_i Jz_i``.

    ``bond_form`` selects the two-site energy convention.  ``"raw"`` uses
    ``cos(theta) (J.J) + sin(theta) (J.J)^2`` verbatim.  ``"normalized"`` shifts
    and rescales that operator so its spectrum spans [-1, 0]; at
    ``theta = -pi/2`` this is exactly ``-P0``, the form in which the three-site
    closed-form gap ``(alpha/3) sqrt(1 + 8 x^2)`` holds.
    """

    n_sites: int
    theta: float = -np.pi / 2
    alpha: float = 1.0
    field_h: float = 0.0
    bond_form: BondForm = "normalized"

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ConfigurationError(f"n_sites must be an integer >= 2, got {self.n_sites!r}")
        if not self.alpha >= 0:
            raise ConfigurationError(f"alpha must be non-negative, got {self.alpha!r}")
        if self.bond_form not in ("normalized", "raw"):
            raise ConfigurationError(f"unknown bond_form {self.bond_form!r}")

    def describe(self):
        return {
            "n_sites": int(self.n_sites),
            "theta": float(self.theta),
            "alpha": float(self.alpha),
            "field_h": float(self.field_h),
            "bond_form": self.bond_form,
        }


def spin1_matrices():
    """Return (Jx, Jy, Jz) as complex 3x3 arrays in the (+1, 0, -1) basis."""
    jx = (_JPLUS + _JMINUS) / 2
    jy = (_JPLUS - _JMINUS) / 2j
    return jx.astype(complex), jy.astype(complex), _JZ.astype(complex)


def spin_dot():
    """Two-site J1.J2 as a real 9x9 matrix."""
    return np.kron(_JZ, _JZ) + 0.5 * (np.kron(_JPLUS, _JMINUS) + np.kron(_JMINUS, _JPLUS))


def two_site_projectors():
    """Projectors (P0, P1, P2) of two spin-1s onto total spin S = 0, 1, 2.

    Built from the eigendecomposition of J1.J2, whose eigenvalue on the
    total-spin-S manifold is S(S+1)/2 - 2.
    """
    vals, vecs = np.linalg.eigh(spin_dot())
    projectors = []
    for s in (0, 1, 2):
        level = s * (s + 1) / 2 - 2
        cols = vecs[:, np.abs(vals - level) < 1e-9]
        p = cols @ cols.T
        p[np.abs(p) < DROP_TOL] = 0.0
        projectors.append(p)
    return tuple(projectors)


def bb_coefficients(theta):
    """(lambda0, lambda1, lambda2) of the bond Hamiltonian in projector form."""
    c, s = np.cos(theta), np.sin(theta)
    return (-2 * c + 4 * s, -c + s, c + s)


def two_site_hbb(theta):
    """cos(theta) J1.J2 + sin(theta) (J1.J2)^2 as sum_S lambda_S P_S."""
    lams = bb_coefficients(theta)
    return sum(lam * p for lam, p in zip(lams, two_site_projectors()))


def bond_operator(theta, form: BondForm = "normalized"):
    """Two-site term entering the chain Hamiltonian for the given convention."""
    h = two_site_hbb(theta)
    if form == "raw":
        return h
    if form != "normalized":
        raise ConfigurationError(f"unknown bond_form {form!r}")
    lams = bb_coefficients(theta)
    lo, hi = min(lams), max(lams)
    return (h - hi * np.eye(9)) / (hi - lo)


def singlet():
    """Two-site singlet (|1,-1> + |-1,1> - |0,0>)/sqrt(3) as a 9-vector."""
    s = np.zeros(9)
    s[0 * 3 + 2] = 1.0
    s[2 * 3 + 0] = 1.0
    s[1 * 3 + 1] = -1.0
    return s / np.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Product configurations of ``n_sites`` spin-1s with fixed total Jz.

    ``magnetization`` is None for the full 3**N product basis.
    """

    n_sites: int
    magnetization: Optional[int]
    codes: np.ndarray
    digits: np.ndarray
    index_map: dict = field(repr=False)

    def __len__(self):
        return len(self.codes)

    @property
    def dim(self):
        return len(self.codes)

    @property
    def states(self):
        """Configurations as tuples of m values, site 1 first."""
        return [tuple(int(v) for v in row) for row in 1 - self.digits]

    @property
    def site_m(self):
        """(dim, N) array of m values."""
        return 1 - self.digits.astype(np.int64)

    def index(self, config: Sequence[int]):
        """Ordinal of a configuration given as m values (site 1 first)."""
        return self.index_map[encode(config)]

    def lookup(self, codes):
        """Vectorized ordinal lookup; returns -1 where a code is absent."""
        codes = np.asarray(codes, dtype=np.int64)
        idx = np.searchsorted(self.codes, codes)
        idx = np.minimum(idx, len(self.codes) - 1)
        found = self.codes[idx] == codes
        return np.where(found, idx, -1)


def encode(config: Sequence[int]):
    """Product-state index of a configuration of m values."""
    code = 0
    for i, m in enumerate(config):
        if m not in (1, 0, -1):
            raise ConfigurationError(f"site value must be +1, 0 or -1, got {m!r}")
        code += (1 - m) * 3**i
    return code


def _all_digits(n_sites):
    codes = np.arange(3**n_sites, dtype=np.int64)
    digits = (codes[:, None] // (3 ** np.arange(n_sites, dtype=np.int64))) % 3
    return codes, digits.astype(np.int8)


def sector_basis(n_sites, magnetization: Optional[int] = None):
    """Enumerate the sector of total magnetization ``magnetization``.

    ``magnetization=None`` returns the complete product basis.
    """
    if int(n_sites) != n_sites or n_sites < 1:
        raise ConfigurationError(f"n_sites must be a positive integer, got {n_sites!r}")
    if n_sites > MAX_SPECTRAL_SITES:
        raise CapabilityError(f"n_sites={n_sites} exceeds the exact-method limit of {MAX_SPECTRAL_SITES}")
    if magnetization is not None and abs(magnetization) > n_sites:
        raise ConfigurationError(f"|magnetization| must be <= n_sites={n_sites}, got {magnetization}")
    codes, digits = _all_digits(n_sites)
    if magnetization is not None:
        keep = (1 - digits.astype(np.int64)).sum(axis=1) == magnetization
        codes, digits = codes[keep], digits[keep]
    index_map = {int(c): k for k, c in enumerate(codes)}
    return SectorBasis(int(n_sites), magnetization, codes, digits, index_map)


def full_basis(n_sites):
    return sector_basis(n_sites, None)


def two_site_operator(basis: SectorBasis, op, site_a, site_b):
    """Embed a 9x9 operator acting on sites (site_a, site_b) into ``basis``.

    Sites are 1-based; ``site_a`` carries the left factor of the pair index.
    Elements leaving the basis (magnetization changing) are rejected.
    """
    n = basis.n_sites
    if not (1 <= site_a <= n and 1 <= site_b <= n) or site_a == site_b:
        raise ConfigurationError(f"invalid site pair ({site_a}, {site_b}) for N={n}")
    op = np.asarray(op, dtype=float)
    a = basis.digits[:, site_a - 1].astype(np.int64)
    b = basis.digits[:, site_b - 1].astype(np.int64)
    pair = 3 * a + b
    wa, wb = 3 ** (site_a - 1), 3 ** (site_b - 1)
    rows, cols, vals = [], [], []
    for target in range(9):
        amp = op[target, pair]
        nz = np.nonzero(np.abs(amp) > DROP_TOL)[0]
        if nz.size == 0:
            continue
        ta, tb = divmod(target, 3)
        new = basis.codes[nz] + (ta - a[nz]) * wa + (tb - b[nz]) * wb
        idx = basis.lookup(new)
        if np.any(idx < 0):
            raise ConfigurationError("operator does not conserve the basis sector")
        rows.append(idx)
        cols.append(nz)
        vals.append(amp[nz])
    dim = basis.dim
    if not rows:
        return sp.csr_matrix((dim, dim))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    mat.sum_duplicates()
    mat.data[np.abs(mat.data) < DROP_TOL] = 0.0
    mat.eliminate_zeros()
    return mat


def bond_matrices(params: BBParams, basis: SectorBasis):
    """Bond operators H^(i,i+1) for i = 1..N-1 embedded in ``basis``."""
    _check_match(params, basis)
    h2 = bond_operator(params.theta, params.bond_form)
    return [two_site_operator(basis, h2, i, i + 1) for i in range(1, basis.n_sites)]


def magnetization_diagonal(basis: SectorBasis):
    """Diagonal of total Jz in ``basis``."""
    return basis.site_m.sum(axis=1).astype(float)


def total_spin_squared(basis: SectorBasis):
    """Casimir J_tot^2 = 2N + 2 sum_{i<j} J_i.J_j within ``basis``."""
    n = basis.n_sites
    jj = spin_dot()
    mat = sp.identity(basis.dim, format="csr") * (2.0 * n)
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            mat = mat + 2.0 * two_site_operator(basis, jj, i, j)
    return mat.tocsr()


def _check_match(params, basis):
    if basis.n_sites != params.n_sites:
        raise ConfigurationError(
            f"basis has {basis.n_sites} sites but params.n_sites={params.n_sites}"
        )


@dataclass(frozen=True, eq=False)
class ModulatedHamiltonian:
    """H(x) = base + x * slope in a fixed basis.

    ``slope`` is dH/dx = alpha * sum_i (-1)^i / 2 * H^(i,i+1); it does not
    depend on x.
    """

    params: BBParams
    basis: SectorBasis
    base: sp.csr_matrix
    slope: sp.csr_matrix

    def at(self, x):
        _check_x(x)
        return (self.base + x * self.slope).tocsr()


def modulated_hamiltonian(params: BBParams, basis: SectorBasis):
    bonds = bond_matrices(params, basis)
    dim = basis.dim
    odd = sp.csr_matrix((dim, dim))
    even = sp.csr_matrix((dim, dim))
    for i, bmat in enumerate(bonds, start=1):
        if i % 2:
            odd = odd + bmat
        else:
            even = even + bmat
    alpha = params.alpha
    base = 0.5 * alpha * (odd + even)
    if params.field_h:
        base = base + sp.diags(alpha * params.field_h * magnetization_diagonal(basis))
    slope = 0.5 * alpha * (even - odd)
    return ModulatedHamiltonian(params, basis, _clean(base), _clean(slope))


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    basis: SectorBasis
    matrix: sp.csr_matrix
    params: BBParams
    x: float

    @property
    def dim(self):
        return self.basis.dim


def build_hamiltonian(params: BBParams, x, basis: SectorBasis):
    """Assemble alpha * sum_i (1 + (-1)^i x)/2 * H^(i,i+1) + alpha*h*sum_i Jz_i.

    Bond labels are 1-based, so x = +1 keeps the bonds (2,3), (4,5), ...
    and x = -1 keeps (1,2), (3,4), ...
    """
    _check_x(x)
    _check_match(params, basis)
    bonds = bond_matrices(params, basis)
    mat = sp.csr_matrix((basis.dim, basis.dim))
    for i, bmat in enumerate(bonds, start=1):
        weight = (1 + (-1) ** i * x) / 2
        if weight != 0.0:
            mat = mat + weight * bmat
    mat = params.alpha * mat
    if params.field_h:
        mat = mat + sp.diags(params.alpha * params.field_h * magnetization_diagonal(basis))
    return SparseHamiltonian(basis, _clean(mat), params, float(x))


def _check_x(x):
    if not -1.0 <= x <= 1.0:
        raise ConfigurationError(f"coupling parameter x must lie in [-1, 1], got {x!r}")


def _clean(mat):
    mat = sp.csr_matrix(mat)
    mat.sum_duplicates()
    mat.data[np.abs(mat.data) < DROP_TOL] = 0.0
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def dump_matrix(mat, fh):
    """Write nonzeros as ``row col value`` lines with 17 significant digits."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        fh.write(f"{r} {c} {v:.17g}\n")
