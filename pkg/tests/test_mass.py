import numpy as np
import pytest

from cvplab.fixtures import orbit_system, perturbed_pair, random_system
from cvplab.mass import (
    MassError,
    VolumeMatchError,
    nonlinear_sli,
    spatial_integral_form,
    total_mass_excised,
    total_mass_general,
    total_mass_matched,
    unitary_invariance_check,
)
from cvplab.measure import Exhaustion, correlations


def pair(seed=0, equal_volume=False, kappa=0.0):
    return perturbed_pair(seed=seed, n_points=8, kappa=kappa,
                          equal_volume=equal_volume)


def test_nonlinear_sli_self_vanishes():
    sys1 = random_system(seed=0, n_points=6)
    omega = np.array([0, 2, 3])
    assert nonlinear_sli(sys1, sys1, omega, omega) == pytest.approx(0.0, abs=1e-12)


def test_nonlinear_sli_full_supports():
    tilde, base = pair(seed=1)
    full_t = np.arange(len(tilde.measure))
    full_b = np.arange(len(base.measure))
    assert nonlinear_sli(tilde, base, full_t, full_b) == 0.0


def test_nonlinear_sli_equals_correlation_difference():
    tilde, base = pair(seed=2)
    exh_t = Exhaustion.from_radius(tilde)
    exh_b = Exhaustion.from_radius(base)
    omega_t = exh_t.subsets(tilde)[1]
    omega_b = exh_b.subsets(base)[2]
    gamma = nonlinear_sli(tilde, base, omega_t, omega_b)
    # oracle: gamma = nu~(Omega~) - nu(Omega) by Tonelli re-summation
    corr = correlations(base, tilde)
    nu_t = float(np.sum((corr.n_tilde_values * tilde.weights)[omega_t]))
    nu_b = float(np.sum((corr.n_values * base.weights)[omega_b]))
    np.testing.assert_allclose(gamma, nu_t - nu_b, rtol=1e-10)


def test_total_mass_self_is_zero():
    sys1 = random_system(seed=3, n_points=7)
    rep = total_mass_general(sys1, sys1)
    np.testing.assert_allclose(rep.value, 0.0, atol=1e-10)
    np.testing.assert_allclose(rep.partials[-1], 0.0, atol=1e-10)


def test_mass_path_equivalence_and_antisymmetry():
    tilde, base = pair(seed=4, equal_volume=True)
    rep_gen = total_mass_general(tilde, base)
    spatial = spatial_integral_form(tilde, base)
    rep_match = total_mass_matched(tilde, base)
    scale = 1.0 + abs(spatial)
    assert abs(rep_gen.value - spatial) <= 1e-10 * scale
    assert abs(rep_match.value - spatial) <= 1e-10 * scale
    # antisymmetry via the spatial form
    np.testing.assert_allclose(spatial_integral_form(base, tilde), -spatial,
                               rtol=0, atol=1e-12 * scale)


def test_two_point_mass_hand_evaluation():
    tilde, base = perturbed_pair(seed=5, n_points=2)
    from cvplab.measure import cross_kappa_table

    k = cross_kappa_table(tilde, base)   # rows: tilde, cols: base
    s = base.s_param
    wt, wb = tilde.weights, base.weights
    n_tilde = np.array([k[0] @ wb, k[1] @ wb])
    n_base = np.array([wt @ k[:, 0], wt @ k[:, 1]])
    by_hand = (wt[0] * (n_tilde[0] - s) + wt[1] * (n_tilde[1] - s)
               - wb[0] * (n_base[0] - s) - wb[1] * (n_base[1] - s))
    np.testing.assert_allclose(spatial_integral_form(tilde, base), by_hand,
                               rtol=1e-12)


def test_mass_exhaustion_independence():
    tilde, base = pair(seed=6)
    rep1 = total_mass_general(tilde, base)
    rng = np.random.default_rng(0)
    center = int(rng.integers(0, len(base.measure)))
    exh_b = Exhaustion.from_radius(base, center_index=center, n_cuts=4)
    exh_t = Exhaustion.from_radius(tilde, center_index=center, n_cuts=5)
    rep2 = total_mass_general(tilde, base, exh_t, exh_b)
    np.testing.assert_allclose(rep1.value, rep2.value, rtol=1e-12, atol=1e-12)


def test_matched_requires_equal_volumes():
    tilde, base = pair(seed=7, equal_volume=False)
    with pytest.raises(VolumeMatchError):
        total_mass_matched(tilde, base)


def test_excision_identity():
    tilde, base = pair(seed=8)
    rng = np.random.default_rng(1)
    inner_t = rng.choice(len(tilde.measure), size=2, replace=False)
    inner_b = rng.choice(len(base.measure), size=3, replace=False)
    m_exc = total_mass_excised(tilde, base, inner_t, inner_b)
    m_gen = total_mass_general(tilde, base).value
    s = base.s_param
    vol_it = float(np.sum(tilde.weights[inner_t]))
    vol_ib = float(np.sum(base.weights[inner_b]))
    expected = m_gen + s * (vol_it - vol_ib)
    np.testing.assert_allclose(m_exc, expected, rtol=1e-10,
                               atol=1e-10 * (1 + abs(expected)))


def test_excision_empty_and_equal_volume():
    tilde, base = pair(seed=9)
    m_gen = total_mass_general(tilde, base).value
    np.testing.assert_allclose(total_mass_excised(tilde, base, [], []), m_gen,
                               rtol=1e-12, atol=1e-12)


def test_unitary_invariance():
    tilde, base = orbit_pair(seed=10)
    lam, vec = tilde.group.eig
    # W generated in H's eigenbasis commutes with the time evolution
    theta = np.exp(1j * np.linspace(0.3, 1.1, len(lam)))
    w_mat = (vec * theta) @ vec.conj().T
    rep = unitary_invariance_check(tilde, base, w_mat)
    assert rep.commutator_norm < 1e-10
    assert rep.mass_gap <= 1e-10 * (1 + abs(rep.mass_original))
    # W = exp(i theta H) is a group element: the mass is exactly invariant
    # (the windowed partials shift by edge effects and are diagnostics only)
    w_group = tilde.group.unitary(-0.7)
    rep2 = unitary_invariance_check(tilde, base, w_group)
    assert rep2.mass_gap <= 1e-10 * (1 + abs(rep2.mass_original))


def orbit_pair(seed=0):
    tilde, base = perturbed_pair(seed=seed, n_points=6)
    return tilde, base


def test_unitary_noncommuting_flagged():
    tilde, base = pair(seed=11)
    rng = np.random.default_rng(2)
    z = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    w_mat = np.linalg.qr(z)[0]
    rep = unitary_invariance_check(tilde, base, w_mat)
    assert rep.commutator_norm > 1e-3


def test_shared_parameter_guard():
    tilde, base = pair(seed=12)
    bad = tilde.with_s(tilde.s_param + 1.0)
    with pytest.raises(MassError):
        total_mass_general(bad, base)


def test_mass_report_serialization(tmp_path):
    tilde, base = pair(seed=13)
    rep = total_mass_general(tilde, base)
    doc = rep.to_json()
    assert '"value"' in doc
    csv_path = tmp_path / "cuts.csv"
    rep.write_csv(csv_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("cut_index")
    assert len(lines) == len(rep.partials) + 1
