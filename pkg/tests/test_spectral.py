import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from sojourn_lab import partial_waves as pw
from sojourn_lab import spectral as sp
from sojourn_lab.partial_waves import PhaseShiftTable
from sojourn_lab.potentials import PotentialSpec

SPEC = PotentialSpec()


@pytest.fixture(scope="module")
def table02():
    return pw.build_table(SPEC, 0.2, tolerances=pw.TableOptions(delta_floor=1e-8))


# -- gamma exponent and Gamma constant -----------------------------------------------------

def test_gamma_exponent_examples():
    assert sp.gamma_exponent(2, 3.0) == 0.5
    assert sp.gamma_exponent(3, 5.0) == 0.5
    with pytest.warns(sp.OutOfScopeWarning):
        assert sp.gamma_exponent(2, 2.0) == 1.0
    with pytest.raises(ValueError):
        sp.gamma_exponent(2, 2.0, strict=True)
    with pytest.raises(ValueError):
        sp.gamma_exponent(2, 1.0)


def test_gamma_half():
    q = sp.gamma_quadrature(0.5)
    assert abs(q - math.sqrt(2 * math.pi) * (-1 + 1j)) < 1e-10
    with mp.workdps(30):
        f = lambda t: (mp.expj(t) - 1) * t ** -1.5
        # on [1, inf) the non-oscillatory -t^(-3/2) part integrates to -2
        ref = mp.quad(f, [0, 1]) + mp.quadosc(lambda t: mp.expj(t) * t ** -1.5, [1, mp.inf], omega=1) - 2
    assert abs(q - complex(ref)) < 1e-10


def test_gamma_third():
    ref = 3j * math.gamma(2 / 3) * np.exp(1j * math.pi / 3)
    assert abs(sp.gamma_closed_form(1 / 3) - ref) < 1e-14
    assert abs(sp.gamma_quadrature(1 / 3) - ref) < 1e-8 * abs(ref)


@pytest.mark.parametrize("g", [1 / 3, 0.5, 2 / 3, 0.9])
def test_gamma_conjugation(g):
    assert abs(sp.gamma_quadrature(g, sign=-1) - sp.gamma_quadrature(g).conjugate()) < 1e-14
    assert abs(sp.gamma_constant(g) - sp.gamma_closed_form(g)) < 1e-8 * abs(sp.gamma_closed_form(g))


def test_gamma_out_of_range():
    for g in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            sp.gamma_closed_form(g)


# -- predicted constants --------------------------------------------------------------------

def test_predicted_constants_zero():
    p = sp.predicted_constants(0.0, 2, 3.0)
    assert p.a1 == 0 and p.a2 == 0 and p.c == 0


def test_predicted_constants_reference_family():
    p = sp.predicted_constants(-1.0, 2, 3.0)
    assert p.a1 == 0.0
    with mp.workdps(30):
        # substitute u = 1/e^2: int_0^inf (e^{-iu} - 1) u^(-3/2) du / 2
        f = lambda u: (mp.expj(-u) - 1) * u ** -1.5 / 2
        line = mp.quad(f, [0, 1]) + mp.quadosc(lambda u: mp.expj(-u) * u ** -1.5 / 2, [1, mp.inf], omega=1) - 1
    direct = 2 * 2 * math.pi * complex(line)
    assert abs(p.c - direct) < 1e-9 * abs(direct)
    assert abs(p.c_direct - direct) < 1e-9 * abs(direct)
    assert abs(p.c) == pytest.approx(2 * 2 * math.pi * math.sqrt(math.pi), rel=1e-12)
    assert p.prefactor == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    assert p.trace_limit(3) == pytest.approx(p.c * math.sqrt(3) / (2 * math.pi), rel=1e-14)
    assert p.trace_limit(-3) == p.trace_limit(3).conjugate()


def test_predicted_constants_profile_matches_constant():
    p0 = sp.predicted_constants(-1.0, 2, 3.0)
    p1 = sp.predicted_constants(lambda y, e: -1.0, 2, 3.0)
    assert p1.c == pytest.approx(p0.c, rel=1e-12)


def _profile(y, e):
    # direction-dependent profile taking both signs
    return 0.4 + math.cos(math.atan2(y[1], y[0]))


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_predicted_constants_homogeneity(lam):
    p = sp.predicted_constants(_profile, 2, 3.0)
    q = sp.predicted_constants(lambda y, e: lam * _profile(y, e), 2, 3.0)
    s = lam ** p.gamma
    assert q.a1 == pytest.approx(s * p.a1, rel=1e-8)
    assert q.a2 == pytest.approx(s * p.a2, rel=1e-8)
    assert abs(q.c - s * p.c) <= 1e-8 * abs(p.c)


def test_predicted_constants_mixed_sign_and_three_dimensions():
    p = sp.predicted_constants(_profile, 2, 3.0)
    assert p.a1 > 0 and p.a2 > 0
    assert abs(p.c - (p.a1 * p.Gamma + p.a2 * p.Gamma.conjugate())) < 1e-10 * abs(p.c)
    p3 = sp.predicted_constants(-0.7, 3, 5.0)
    assert p3.gamma == 0.5 and p3.a1 == 0
    assert abs(p3.c_direct - p3.c) < 1e-6 * abs(p3.c)


def test_predicted_constants_scope():
    with pytest.raises(ValueError):
        sp.predicted_constants(-1.0, 2, 2.0)


def test_radial_phase_integral_against_quadrature():
    with mp.workdps(30):
        f = lambda u: (mp.expj(0.8 * u) - 1) * u ** -1.5 / 2
        ref = mp.quad(f, [0, 1]) + mp.quadosc(lambda u: mp.expj(0.8 * u) * u ** -1.5 / 2, [1, mp.inf], omega=0.8) - 1
    assert abs(sp.radial_phase_integral(0.8, 2, 3.0) - complex(ref)) < 1e-12


# -- empirical measure and traces -----------------------------------------------------------

def test_build_mu_h_examples():
    m = sp.build_mu_h(PhaseShiftTable.empty(0.1, 2), 3.0)
    assert m.weight.size == 0 and m.total_variation_bound() == 0.0
    t = PhaseShiftTable.from_entries(1.0, 2, [1], [math.pi / 4])
    m = sp.build_mu_h(t, 3.0)
    assert m.exponent == 1.5
    np.testing.assert_allclose(m.angles, [math.pi / 2])
    np.testing.assert_array_equal(m.weight, [2.0])


def test_total_variation_finite(table02):
    m = sp.build_mu_h(table02, 3.0)
    tv = m.total_variation_bound()
    assert math.isfinite(tv) and tv > 0
    assert np.all(m.weight > 0)
    assert np.all((m.angles >= 0) & (m.angles < 2 * math.pi))


def test_trace_single_atom():
    t = PhaseShiftTable.from_entries(1.0, 2, [0], [math.pi / 2])
    assert sp.trace_power(t, 1) == pytest.approx(-2.0, abs=1e-15)
    with pytest.raises(ValueError):
        sp.trace_power(t, 0)


def test_trace_conjugate_and_bound(table02):
    tv = math.fsum(table02.mult * np.abs(np.exp(2j * table02.delta) - 1))
    for k in range(1, 5):
        a, b = sp.trace_power(table02, k), sp.trace_power(table02, -k)
        assert a == b.conjugate()
        assert abs(a) <= k * tv + 2 * k * table02.tail_bound


def test_trace_linearisation_guard():
    t = pw.build_table(SPEC, 0.2, tolerances=pw.TableOptions(delta_floor=1e-8))
    t.delta[-1] = 0.01
    with pytest.raises(ValueError):
        sp.trace_power(t, 1)


def test_mu_pair_examples(table02):
    m = sp.AtomicCircleMeasure(1.0, 1.5, np.array([math.pi]), np.array([1.0]))
    f = sp.TestFunction(lambda t: np.exp(1j * t) - 1, 1.0)
    assert sp.mu_pair(m, f).value == pytest.approx(-2.0, abs=1e-15)
    mu = sp.build_mu_h(table02, 3.0)
    for k in (1, 2, -3):
        pair = sp.mu_pair(mu, sp.power_test_function(k)).value
        ref = mu.scale * sp.trace_power(table02, k)
        assert abs(pair - ref) <= 1e-13 * abs(ref)


def test_weighted_norm_guard(table02):
    mu = sp.build_mu_h(table02, 3.0)
    with pytest.raises(sp.WeightedNormError):
        sp.mu_pair(mu, sp.TestFunction(lambda t: np.ones_like(t, dtype=complex), 1.0, name="one"))
    with pytest.raises(sp.WeightedNormError):
        sp.mu_pair(mu, sp.TestFunction(lambda t: 3 * (np.exp(1j * t) - 1), 1.0))


def test_weighted_basket_norms():
    t = np.linspace(-math.pi, math.pi, 2001)[1:]
    t = t[t != 0]
    for f in sp.weighted_basket():
        ratio = np.abs(f.func(t) / (np.exp(1j * t) - 1))
        assert np.max(ratio) == pytest.approx(1.0, rel=1e-12)


# -- sectors ---------------------------------------------------------------------------------

def test_sector_count_examples():
    assert sp.sector_count(PhaseShiftTable.empty(0.1, 2), 1.0, 2.0)[0] == 0
    t = PhaseShiftTable.from_entries(1.0, 2, [0, 1], [3 * math.pi / 4, math.pi / 6], mult=[1, 2])
    assert sp.sector_count(t, math.pi / 4, math.pi / 2)[0] == 2
    n, scaled = sp.sector_count(t, math.pi / 4, 7 * math.pi / 4, h=0.5, alpha=3.0)
    assert n == 3 and scaled == pytest.approx(3 * 0.5 ** 1.5)
    for bad in [(0.0, 1.0), (2.0, 1.0), (1.0, 2 * math.pi)]:
        with pytest.raises(ValueError):
            sp.sector_count(t, *bad)


def test_sector_mass_examples():
    zero = sp.HomogeneousMeasureParams.from_densities(0.0, 0.0, 0.5)
    assert sp.predicted_sector_mass(zero, 1.0, 2.0) == 0.0
    p = sp.HomogeneousMeasureParams.from_densities(1.0, 0.0, 0.5)
    first = 2 * ((math.pi / 2) ** -0.5 - math.pi ** -0.5)
    assert first == pytest.approx(0.4675, abs=2e-4)
    m = sp.predicted_sector_mass(p, math.pi / 2, math.pi)
    with mp.workdps(30):
        ref = 2 * (2 * mp.pi) ** -0.5 * (mp.zeta(0.5, 0.25) - mp.zeta(0.5, 0.5))
    assert m == pytest.approx(float(ref), rel=1e-10)
    assert m > first


def test_sector_mass_mirror_and_additivity():
    p = sp.HomogeneousMeasureParams.from_densities(0.7, 0.3, 0.5)
    q = sp.HomogeneousMeasureParams.from_densities(0.3, 0.7, 0.5)
    a, b, c = 0.4, 2.0, 5.1
    whole = sp.predicted_sector_mass(p, a, c)
    assert whole == pytest.approx(sp.predicted_sector_mass(p, a, b) + sp.predicted_sector_mass(p, b, c), rel=1e-12)
    assert sp.predicted_sector_mass(p, a, b) == pytest.approx(
        sp.predicted_sector_mass(q, 2 * math.pi - b, 2 * math.pi - a), rel=1e-12)


@pytest.mark.parametrize("branch", [(1.0, 0.0), (0.0, 1.0), (0.6, 0.25)])
@pytest.mark.parametrize("gamma", [0.5, 1 / 3])
def test_fourier_identity(branch, gamma):
    p = sp.HomogeneousMeasureParams.from_densities(*branch, gamma)
    for k in range(1, 6):
        a = sp.homogeneous_fourier_pairing(p, k)
        b = sp.homogeneous_fourier_closed(p, k)
        assert abs(a - b) <= 1e-6 * abs(b)


# -- dyadic annuli ---------------------------------------------------------------------------

def test_annulus_examples():
    rep = sp.dyadic_annulus_counts(PhaseShiftTable.empty(0.1, 2), 0.1, 3.0, 2)
    assert np.all(rep.counts == 0)
    delta = math.asin(0.15)  # |exp(2 i delta) - 1| = 0.3
    t = PhaseShiftTable.from_entries(1.0, 2, [0], [delta])
    rep = sp.dyadic_annulus_counts(t, 1.0, 3.0, 2)
    assert rep.counts[2] == 1 and rep.counts.sum() == 1
    # boundaries: distance exactly 0.5 belongs to p = 2
    t = PhaseShiftTable.from_entries(1.0, 2, [0], [math.asin(0.25)])
    assert sp.dyadic_annulus_counts(t, 1.0, 3.0, 2).counts[2] == 1


def test_annulus_constant_limit():
    p = sp.HomogeneousMeasureParams.from_densities(0.3, 0.5, 0.5)
    lim = (p.c1 + p.c2) * (1 - 2 ** -p.gamma) / p.gamma
    assert sp.predicted_annulus_constant(p, 24) == pytest.approx(lim, rel=1e-5)


# -- convergence report ----------------------------------------------------------------------

def test_convergence_report_zero_potential():
    zero = PotentialSpec(strength=0.0)
    sweep = [(h, pw.build_table(zero, h)) for h in (0.1, 0.05, 0.025)]
    params = sp.predicted_constants(0.0, 2, 3.0)
    rep = sp.convergence_report(sweep, params, k_max=3, sectors=[(1.0, 2.0)])
    assert rep.passed
    assert all(r.limit == 0 and r.predicted == 0 for r in rep.traces)


def test_convergence_report_preconditions():
    params = sp.predicted_constants(-1.0, 2, 3.0)
    zero = PhaseShiftTable.empty(0.1, 2)
    with pytest.raises(ValueError):
        sp.convergence_report([(0.1, zero), (0.05, zero)], params)
    with pytest.raises(ValueError):
        sp.convergence_report([(0.05, zero), (0.1, zero), (0.2, zero)], params)


def test_convergence_report_coarse_sweep(table02):
    tabs = [(0.2, table02)] + [(h, pw.build_table(SPEC, h, tolerances=pw.TableOptions(delta_floor=1e-8)))
                               for h in (0.141, 0.1)]
    params = sp.predicted_constants(-1.0, 2, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = sp.convergence_report(tabs, params, k_max=2)
    assert rep.conjugate_ok
    k1 = rep.traces[0]
    devs = np.abs(k1.scaled - k1.predicted)
    # deviation from the prediction shrinks as h decreases
    assert devs[-1] < devs[0]
