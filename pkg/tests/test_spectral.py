import numpy as np
import pytest
import scipy.sparse.linalg as sla

from spinpassage.control import adiabatic_threshold
from spinpassage.exceptions import CapabilityError, ConfigurationError
from spinpassage.spectral import (
    SpectralProfile,
    _eigsh,
    coupling_profile,
    default_x_grid,
    gap_profile,
    inverse_n_fit,
    lowest_eigenpairs,
    minimal_gap,
    spectral_profile,
    three_site_coupling,
    three_site_gap,
    three_site_profile,
)
from spinpassage.spin_ops import (
    BBParams,
    build_hamiltonian,
    modulated_hamiltonian,
    sector_basis,
    total_spin_squared,
)


def test_default_grid():
    xs = default_x_grid()
    assert xs[0] == -1.0 and xs[-1] == 1.0
    assert np.all(np.diff(xs) > 0)
    assert np.sum(np.abs(xs) <= 0.1 + 1e-12) > 50


@pytest.mark.parametrize("n", [3, 5])
def test_sparse_and_dense_eigensolvers_agree(n):
    params = BBParams(n, -0.3)
    H = build_hamiltonian(params, 0.2, sector_basis(n, 1)).matrix
    dense = np.linalg.eigvalsh(H.toarray())[:3]
    sparse = np.sort(sla.eigsh(H, k=3, which="SA", v0=np.ones(H.shape[0]), tol=0)[0])
    ours = [p.energy for p in lowest_eigenpairs(H, 3)]
    assert np.allclose(ours, dense, atol=1e-9)
    assert np.allclose(sparse, dense, atol=1e-9)


def test_arpack_path_matches_dense():
    # N=7 sector (dim 357) with the dense cutoff bypassed
    H = build_hamiltonian(BBParams(7), 0.1, sector_basis(7, 1)).matrix
    dense = np.linalg.eigvalsh(H.toarray())[:4]
    v0 = np.random.default_rng(0).standard_normal(H.shape[0])
    vals = np.sort(sla.eigsh(H, k=4, which="SA", v0=v0, tol=0)[0])
    assert np.allclose(vals, dense, atol=1e-9)


def test_eigenvectors_signed_and_orthonormal():
    H = build_hamiltonian(BBParams(5), 0.3, sector_basis(5, 1)).matrix
    pairs = lowest_eigenpairs(H, 4)
    V = np.column_stack([p.vector for p in pairs])
    assert np.allclose(V.T @ V, np.eye(4), atol=1e-10)
    for p in pairs:
        assert p.vector[np.argmax(np.abs(p.vector))] > 0
        assert np.linalg.norm(H @ p.vector - p.energy * p.vector) < 1e-9


def test_large_sector_uses_sparse_solver():
    H = build_hamiltonian(BBParams(9), 0.0, sector_basis(9, 1)).matrix
    vals, vecs = _eigsh(H, 2)
    assert np.linalg.norm(H @ vecs - vecs * vals, axis=0).max() < 1e-8


def test_k_validation():
    H = build_hamiltonian(BBParams(3), 0.0, sector_basis(3, 1)).matrix
    with pytest.raises(ConfigurationError):
        lowest_eigenpairs(H, 0)
    with pytest.raises(ConfigurationError):
        lowest_eigenpairs(H, 7)


def test_three_site_profiles_closed_form():
    xs = np.linspace(-1, 1, 201)
    params = BBParams(3)
    assert np.allclose(gap_profile(params, xs), three_site_gap(xs), atol=1e-10, rtol=0)
    assert np.allclose(coupling_profile(params, xs), three_site_coupling(xs), atol=1e-10, rtol=0)


def test_three_site_threshold():
    prof = three_site_profile(np.linspace(-1, 1, 201), alpha=2.0)
    assert adiabatic_threshold(prof) == pytest.approx(3 * np.sqrt(2) / 2.0, rel=1e-12)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_profiles_even_in_x(n):
    xs = np.linspace(0.05, 1.0, 9)
    params = BBParams(n)
    prof_pos = spectral_profile(params, xs)
    prof_neg = spectral_profile(params, -xs)
    assert np.allclose(prof_pos.gap, prof_neg.gap[::-1], atol=1e-9)
    assert np.allclose(prof_pos.coupling, prof_neg.coupling[::-1], atol=1e-7)


@pytest.mark.parametrize("alpha", [0.5, 3.0])
def test_alpha_scaling_of_profiles(alpha):
    xs = np.linspace(-1, 1, 11)
    base = spectral_profile(BBParams(5), xs)
    scaled = spectral_profile(BBParams(5, alpha=alpha), xs)
    assert np.allclose(scaled.gap, alpha * base.gap, rtol=1e-9)
    assert np.allclose(scaled.coupling, base.coupling, rtol=1e-7)
    via_method = base.scaled(alpha)
    assert np.allclose(via_method.gap, scaled.gap, rtol=1e-9)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_coupling_bound(n):
    xs = np.linspace(-1, 1, 41)
    prof = spectral_profile(BBParams(n), xs)
    assert np.all(prof.coupling <= (n - 1) / prof.gap)


@pytest.mark.parametrize("n", [3, 5, 7])
def test_first_excited_state_is_triplet(n):
    basis = sector_basis(n, 1)
    mh = modulated_hamiltonian(BBParams(n), basis)
    s2 = total_spin_squared(basis)
    for x in (-0.9, -0.2, 0.0, 0.5):
        pairs = lowest_eigenpairs(mh.at(x), 2)
        # ground and first excited state both carry total spin 1
        for pair in pairs:
            v = pair.vector
            assert v @ (s2 @ v) == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("n", [3, 5, 7, 9])
def test_unique_ground_state(n):
    mh = modulated_hamiltonian(BBParams(n), sector_basis(n, 1))
    for x in (-1.0, 0.0, 0.7):
        e = [p.energy for p in lowest_eigenpairs(mh.at(x), 2)]
        assert e[1] - e[0] > 1e-3


def test_degenerate_cluster_coupling_stable_at_ends():
    # at x = +-1 the first excited level is degenerate; the cluster norm must still match
    xs = np.array([-1.0, -0.999, 0.999, 1.0])
    prof = spectral_profile(BBParams(5), xs)
    assert abs(prof.coupling[0] - prof.coupling[1]) < 1e-2
    assert abs(prof.coupling[2] - prof.coupling[3]) < 1e-2


def test_profile_csv_round_trip(tmp_path):
    prof = spectral_profile(BBParams(5), np.linspace(-1, 1, 21))
    path = tmp_path / "profile.csv"
    prof.to_csv(path)
    assert path.read_text().splitlines()[0] == "x,gap,coupling"
    back = SpectralProfile.from_csv(path)
    assert np.array_equal(back.gap, prof.gap)
    assert np.array_equal(back.coupling, prof.coupling)
    assert np.array_equal(back.x_samples, prof.x_samples)


def test_profile_interpolant_clips_and_matches_samples():
    prof = three_site_profile(np.linspace(-1, 1, 41))
    assert np.allclose(prof.gap_at(prof.x_samples), prof.gap)
    assert prof.gap_at(1.5) == pytest.approx(prof.gap[-1])
    mid = 0.5 * (prof.x_samples[3] + prof.x_samples[4])
    assert prof.gap_at(mid) == pytest.approx(three_site_gap(mid), rel=1e-4)


def test_profile_validation():
    with pytest.raises(ConfigurationError):
        SpectralProfile(np.array([0.0, 1.0]), np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ConfigurationError):
        SpectralProfile(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ConfigurationError):
        gap_profile(BBParams(3), [1.2])


def test_capability_limit():
    with pytest.raises(CapabilityError):
        gap_profile(BBParams(13), [0.0])


def test_parallel_sweep_matches_serial():
    xs = np.linspace(-1, 1, 8)
    serial = spectral_profile(BBParams(5), xs, n_jobs=1)
    parallel = spectral_profile(BBParams(5), xs, n_jobs=2)
    assert np.array_equal(serial.gap, parallel.gap)


def test_minimal_gap_at_symmetric_point():
    x, gap = minimal_gap(BBParams(3))
    assert abs(x) < 1e-5
    assert gap == pytest.approx(1 / 3, abs=1e-9)


def test_inverse_n_fit_exact_data():
    data = [(n, 2.0 / n + 0.1) for n in (3, 5, 7, 9)]
    slope, intercept, r2 = inverse_n_fit(data)
    assert slope == pytest.approx(2.0)
    assert intercept == pytest.approx(0.1)
    assert r2 == pytest.approx(1.0)
