import numpy as np
import pytest

from cvplab.schwarzschild import (
    AveragingReport,
    MetricPerturbation,
    ProfileError,
    averaging_check,
    averaging_decay,
    bounded_line_integral,
    constant_c,
    d12p_line_integrals,
    diagonal_tracefree_perturbation,
    exponential_profile,
    gaussian_profile,
    bump_profile,
    mass_MR,
    mass_closed_form,
    mass_curve,
    profile_by_name,
    pure_trace_perturbation,
    shear_tracefree_perturbation,
    tracefree_vanishing,
    uniform_segment_perturbation,
)

THREE_PI = 3.0 * np.pi


def test_constant_c_unit_gaussian():
    c = constant_c(gaussian_profile(1.0))
    np.testing.assert_allclose(c, THREE_PI, rtol=1e-8)


def test_constant_c_scales_linearly_with_amplitude():
    c1 = constant_c(gaussian_profile(1.0, amplitude=1.0))
    c2 = constant_c(gaussian_profile(1.0, amplitude=2.0))
    np.testing.assert_allclose(c2, 2 * c1, rtol=1e-10)


def test_constant_c_width_scaling():
    # dimensional analysis: c has dimension width^6 for a unit-amplitude
    # profile (the spec example's w^5 miscounts the |y|^2 d^4y measure)
    w = 1.7
    c = constant_c(gaussian_profile(w))
    np.testing.assert_allclose(c, THREE_PI * w ** 6, rtol=1e-8)


def test_constant_c_positive_for_bump():
    assert constant_c(bump_profile(1.0)) > 0


def test_generic_reduction_matches_closed_form():
    # exercise the numeric static/tail fallbacks against the closed forms
    gauss = gaussian_profile(1.0)
    generic = gaussian_profile(1.0)
    object.__setattr__(generic, "static_radial", None)
    object.__setattr__(generic, "tail_moment", None)
    s = np.array([0.3, 1.0, 2.5])
    np.testing.assert_allclose(generic.static(s), gauss.static(s), rtol=1e-9)
    np.testing.assert_allclose(generic.tail(s), gauss.tail(s), rtol=1e-8)


def test_mass_closed_form_gaussian():
    for ms in (0.05, 0.1):
        val = mass_closed_form(gaussian_profile(1.0), ms)
        np.testing.assert_allclose(val, THREE_PI * ms, rtol=1e-8)
    assert mass_closed_form(gaussian_profile(1.0), 0.0) == 0.0


def test_mass_MR_zero_mass_and_linearity():
    profile = gaussian_profile(1.0)
    assert mass_MR(12.0, profile, 0.0) == 0.0
    a = mass_MR(12.0, profile, 0.05)
    b = mass_MR(12.0, profile, 0.10)
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12)


def test_mass_MR_approaches_closed_form():
    profile = gaussian_profile(1.0)
    ms = 0.1
    closed = mass_closed_form(profile, ms)
    for r in (10.0, 15.0, 20.0):
        np.testing.assert_allclose(mass_MR(r, profile, ms), closed, rtol=1e-3)
    curve = mass_curve(profile, ms, np.array([10.0, 12.0, 16.0, 20.0]))
    assert curve.drift < 1e-3 * abs(closed)


def test_averaging_zero_profile():
    zero = gaussian_profile(1.0, amplitude=0.0)
    rep = averaging_check(zero, radius=12.0, window=10.0)
    assert rep.lhs == 0.0 and rep.rhs == 0.0


def test_averaging_gap_decays_like_inverse_window():
    profile = gaussian_profile(1.0)
    decay = averaging_decay(profile, radius=14.0,
                            windows=np.array([15.0, 30.0, 60.0]))
    assert 0.8 <= decay.exponent <= 1.2, decay


def test_averaging_window_doubling_halves_gap():
    profile = gaussian_profile(1.0)
    g1 = averaging_check(profile, radius=14.0, window=20.0).gap
    g2 = averaging_check(profile, radius=14.0, window=40.0).gap
    np.testing.assert_allclose(g1 / g2, 2.0, rtol=0.25)


def test_d12p_zero_perturbation():
    zero = uniform_segment_perturbation(np.zeros((4, 4)), radius=2.0)
    v1, v2 = d12p_line_integrals([0, 0, 0, 0.5], [0, 1.0, 0, 0], zero)
    np.testing.assert_allclose(v1, 0.0)
    np.testing.assert_allclose(v2, 0.0)


def test_d12p_constant_segment_closed_form():
    h0 = np.zeros((4, 4))
    h0[0, 0] = 2.0
    h0[1, 1] = h0[2, 2] = h0[3, 3] = -1.0
    radius = 3.0
    pert = uniform_segment_perturbation(h0, radius=radius)
    x4 = np.array([0.2, -0.5, 0.0, 0.0])
    y4 = np.array([-0.1, 0.5, 0.0, 0.0])
    xi = y4 - x4
    v1, v2 = d12p_line_integrals(x4, y4, pert)
    # the support meets the line for alpha in [lo, hi] by the quadratic
    xs, d = x4[1:], (y4 - x4)[1:]
    b = float(xs @ d)
    dd = float(d @ d)
    c0 = float(xs @ xs) - radius ** 2
    lo = (-b - np.sqrt(b * b - dd * c0)) / dd
    hi = (-b + np.sqrt(b * b - dd * c0)) / dd
    # closed form: (1/4) h0 xi * (int eps(alpha)) over [lo, hi]
    np.testing.assert_allclose(v1, 0.25 * (h0 @ xi) * (hi + lo), rtol=1e-10)
    np.testing.assert_allclose(v2, 0.25 * (h0 @ xi) * ((hi - 1.0) + (lo - 1.0) + 2.0 * 0.0
                                                       if lo < 1.0 < hi else 0.0),
                               atol=1e-10)


def test_d12p_difference_reproduces_bounded_integral():
    pert = diagonal_tracefree_perturbation(amplitude=0.7, radius=2.5)
    x4 = np.array([0.0, -0.8, 0.3, 0.1])
    y4 = np.array([0.4, 0.9, -0.2, 0.2])
    v1, v2 = d12p_line_integrals(x4, y4, pert)
    bounded = bounded_line_integral(x4, y4, pert)
    np.testing.assert_allclose(v1 - v2, bounded, rtol=1e-8, atol=1e-12)


def test_d12p_rejects_spatially_coincident():
    pert = diagonal_tracefree_perturbation()
    with pytest.raises(ProfileError):
        d12p_line_integrals([0, 0.1, 0.1, 0.1], [1.0, 0.1, 0.1, 0.1], pert)


def test_tracefree_vanishing_and_structure():
    profile = gaussian_profile(1.0)
    control = tracefree_vanishing(pure_trace_perturbation(1.0, 1.0), profile)
    assert abs(control.value) > 0
    # c constant for the unit gaussian: int_0^inf b^2 Ls(b) db = pi
    np.testing.assert_allclose(control.c_constant, np.pi, rtol=1e-6)
    assert control.j_offpattern <= 1e-6 * control.j_norm
    for pert in (diagonal_tracefree_perturbation(1.0, 1.0),
                 shear_tracefree_perturbation(1.0, 1.0)):
        rep = tracefree_vanishing(pert, profile)
        assert abs(rep.value) <= 1e-3 * abs(control.value)


def test_profile_by_name():
    assert profile_by_name("gaussian", 2.0).width == 2.0
    with pytest.raises(ProfileError):
        profile_by_name("nope")
