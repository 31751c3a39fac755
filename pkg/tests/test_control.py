import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from spinpassage.control import (
    OptimizedPath,
    adiabatic_threshold,
    blackman_integral,
    blackman_window,
    perturbative_excitation,
    synthesize_optimized_path,
)
from spinpassage.dynamics import CouplingSchedule
from spinpassage.exceptions import ConfigurationError, FirstOrderBreakdownWarning
from spinpassage.spectral import SpectralProfile, three_site_coupling, three_site_gap, three_site_profile

FINE = np.linspace(-1, 1, 2001)


class ExactThreeSite:
    """Closed-form three-site profile without interpolation error."""

    def __init__(self, alpha=1.0):
        self.alpha = alpha
        self.x_samples = FINE
        self.gap = three_site_gap(FINE, alpha)
        self.coupling = three_site_coupling(FINE)

    def gap_at(self, x):
        return three_site_gap(x, self.alpha)

    def coupling_at(self, x):
        return three_site_coupling(x)


def test_window_values():
    assert blackman_window(0.0) == 0.0
    assert blackman_window(1.0) == 0.0
    assert blackman_window(0.5) == pytest.approx(1.0)
    assert blackman_window(-0.2) == 0.0 and blackman_window(1.3) == 0.0
    assert blackman_integral(1.0) == pytest.approx(0.42)
    tau = np.linspace(0.01, 0.99, 50)
    h = 1e-6
    deriv = (blackman_integral(tau + h) - blackman_integral(tau - h)) / (2 * h)
    assert np.allclose(deriv, blackman_window(tau), atol=1e-8)
    assert np.all(blackman_window(np.linspace(0, 1, 1001)) >= 0)


def test_adiabatic_threshold_three_site():
    prof = three_site_profile(np.linspace(-1, 1, 201))
    assert adiabatic_threshold(prof) == pytest.approx(3 * math.sqrt(2), rel=1e-12)


# --------------------------------------------------------------------------
# first-order excitation


def _x_form_oracle(T, alpha=1.0):
    """|int_{-1}^{1} c(x) exp(i (T/2) int_x^1 Delta) dx|^2 with closed-form Delta integral."""
    k = 2 * math.sqrt(2)

    def F(x):
        return 0.5 * x * math.sqrt(1 + 8 * x * x) + math.asinh(k * x) / (2 * k)

    def phase(x):
        return 0.5 * T * alpha / 3 * (F(1.0) - F(x))

    def part(fn):
        return quad(lambda x: math.sqrt(2) / (1 + 8 * x * x) * fn(phase(x)), -1, 1,
                    limit=2000, epsabs=1e-14, epsrel=1e-13)[0]

    return part(math.cos) ** 2 + part(math.sin) ** 2


@pytest.mark.filterwarnings("ignore::spinpassage.exceptions.FirstOrderBreakdownWarning")
@pytest.mark.parametrize("T", [5.0, 20.0, 50.0, 100.0])
def test_excitation_matches_x_form_quadrature(T):
    p = perturbative_excitation(ExactThreeSite(), T)
    assert p == pytest.approx(_x_form_oracle(T), abs=1e-10)


def test_excitation_panel_doubling_converges():
    prof = ExactThreeSite()
    a = perturbative_excitation(prof, 60.0, n_panels=400)
    b = perturbative_excitation(prof, 60.0, n_panels=800)
    assert abs(a - b) < 1e-12


def test_excitation_zero_coupling():
    class Flat(ExactThreeSite):
        def coupling_at(self, x):
            return np.zeros_like(np.asarray(x, dtype=float))

    assert perturbative_excitation(Flat(), 10.0) == 0.0


def test_excitation_vanishes_for_slow_schedules():
    assert perturbative_excitation(ExactThreeSite(), 2000.0) < 1e-6


def test_excitation_breakdown_warning():
    # sudden limit: |int c dx|^2 = atan(2 sqrt2)^2 > 1
    with pytest.warns(FirstOrderBreakdownWarning):
        p = perturbative_excitation(ExactThreeSite(), 1e-3)
    assert p == pytest.approx(math.atan(2 * math.sqrt(2)) ** 2, rel=1e-4)


def test_excitation_rejects_bad_duration():
    with pytest.raises(ConfigurationError):
        perturbative_excitation(ExactThreeSite(), 0.0)
    with pytest.raises(ConfigurationError):
        perturbative_excitation(ExactThreeSite(), 5.0, CouplingSchedule.linear(6.0))


def test_excitation_time_alpha_scaling():
    # p depends only on alpha*T
    a = perturbative_excitation(ExactThreeSite(alpha=2.0), 15.0)
    b = perturbative_excitation(ExactThreeSite(alpha=1.0), 30.0)
    assert a == pytest.approx(b, abs=1e-12)


# --------------------------------------------------------------------------
# optimized path


def _constant_profile(c0=0.7, g0=0.4):
    xs = np.linspace(-1, 1, 11)
    return SpectralProfile(xs, np.full_like(xs, g0), np.full_like(xs, c0))


def test_path_for_constant_profile_is_closed_form():
    c0, g0, T = 0.7, 0.4, 30.0
    path = synthesize_optimized_path(_constant_profile(c0, g0), T)
    assert path.amplitude == pytest.approx(2 * c0 / 0.42, rel=1e-9)
    # constant gap: t is proportional to tau; x = 1 - 2 U0(tau)/0.42
    assert np.allclose(path.t, T * path.tau, atol=1e-8)
    assert np.allclose(path.x, 1 - 2 * blackman_integral(path.tau) / 0.42, atol=1e-8)


def test_path_amplitude_matches_closed_form_area():
    prof = three_site_profile(FINE)
    path = synthesize_optimized_path(prof, 50.0)
    assert path.amplitude == pytest.approx(math.atan(2 * math.sqrt(2)) / 0.42, rel=1e-6)
    # C(x(tau)) = A U0(tau) with C(x) = int_x^1 c = (atan k - atan kx) / 2
    k = 2 * math.sqrt(2)
    area = 0.5 * (math.atan(k) - np.arctan(k * path.x))
    assert np.allclose(area, path.amplitude * blackman_integral(path.tau), atol=1e-6)


def test_path_shape_properties():
    prof = three_site_profile(FINE)
    T = 40.0
    path = synthesize_optimized_path(prof, T)
    assert path.x[0] == 1.0 and abs(path.x[-1] + 1) < 1e-8
    assert path.t[0] == 0.0 and path.t[-1] == T
    assert np.all(np.diff(path.x) < 0)
    assert np.all(np.diff(path.t) > 0)
    assert abs(path.dxdt[0]) < 1e-12 and abs(path.dxdt[-1]) < 1e-12
    assert np.all(path.dxdt <= 0)
    # derivative column agrees with finite differences of the knots
    fd = np.gradient(path.x, path.t)
    assert np.max(np.abs(fd[5:-5] - path.dxdt[5:-5])) < 1e-4


def test_path_schedule_interpolation():
    path = synthesize_optimized_path(three_site_profile(FINE), 40.0)
    sched = path.schedule()
    assert np.allclose(sched(path.t), path.x, atol=1e-12)
    mid = 0.5 * (path.t[:-1] + path.t[1:])
    lin = 0.5 * (path.x[:-1] + path.x[1:])
    assert np.max(np.abs(sched(mid) - lin)) < 1e-6


def test_path_rescaling_matches_direct_synthesis():
    prof = three_site_profile(FINE)
    direct = synthesize_optimized_path(prof, 80.0)
    scaled = synthesize_optimized_path(prof, 20.0).rescaled(80.0)
    assert np.allclose(direct.t, scaled.t, rtol=1e-12, atol=1e-10)
    assert np.allclose(direct.x, scaled.x)
    assert np.allclose(direct.dxdt, scaled.dxdt, atol=1e-12)


def test_optimized_beats_linear_first_order():
    prof = ExactThreeSite()
    prof_s = three_site_profile(FINE)
    for T in (30.0, 60.0):
        sched = synthesize_optimized_path(prof_s, T).schedule()
        assert perturbative_excitation(prof, T, sched) < perturbative_excitation(prof, T)


def test_path_rejects_bad_profiles():
    xs = np.linspace(-1, 1, 5)
    zero_c = SpectralProfile(xs, np.ones(5), np.array([1.0, 1.0, 0.0, 1.0, 1.0]))
    with pytest.raises(ConfigurationError):
        synthesize_optimized_path(zero_c, 10.0)
    short = SpectralProfile(np.linspace(-0.5, 0.5, 5), np.ones(5), np.ones(5))
    with pytest.raises(ConfigurationError):
        synthesize_optimized_path(short, 10.0)
    with pytest.raises(ConfigurationError):
        synthesize_optimized_path(_constant_profile(), -1.0)


def test_path_csv(tmp_path):
    path = synthesize_optimized_path(_constant_profile(), 10.0, n_knots=101)
    out = tmp_path / "path.csv"
    path.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x" and len(lines) == 102
    assert isinstance(path, OptimizedPath)


def test_no_warnings_in_normal_synthesis():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        synthesize_optimized_path(three_site_profile(FINE), 25.0)
