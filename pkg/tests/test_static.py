import numpy as np
import pytest

from cvplab.kernel import KernelSpec, validate_point
from cvplab.static import (
    QuadratureSpec,
    StaticGroup,
    StaticKernel,
    TailToleranceError,
    orbit_point,
    refinement_gap,
    static_boundedness,
    static_kappa_lagrangian,
    static_lagrangian,
)

SPEC = KernelSpec(spin_dimension=1)


def make_group(rng, f=4):
    z = rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f))
    v = np.linalg.qr(z)[0]
    lam = np.sort(rng.uniform(0.5, 2.5, f))
    return StaticGroup(generator=(v * lam) @ v.conj().T)


def make_point(rng, f=4, n=1, spec=SPEC):
    z = rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f))
    q = np.linalg.qr(z)[0]
    lam = np.zeros(f)
    lam[:n] = 1.0 + rng.uniform(0, 1, n)
    lam[n:2 * n] = -1.0 - rng.uniform(0, 1, n)
    return validate_point((q[:, :2 * n] * lam[:2 * n]) @ q[:, :2 * n].conj().T, spec)


QUAD = QuadratureSpec(half_width=8.0, node_count=48, tail_tolerance=float("inf"))


def test_orbit_point_identity_at_zero():
    rng = np.random.default_rng(0)
    g = make_group(rng)
    x = make_point(rng)
    y = orbit_point(x, 0.0, g, SPEC)
    np.testing.assert_allclose(y.matrix, x.matrix, atol=1e-14)


def test_orbit_point_commuting_case():
    rng = np.random.default_rng(1)
    g = StaticGroup(generator=np.diag([1.0, 2.0, 3.0, 4.0]))
    x = validate_point(np.diag([1.5, -1.0, 0.0, 0.0]), SPEC)
    y = orbit_point(x, 2.7, g, SPEC)
    np.testing.assert_allclose(y.matrix, x.matrix, atol=1e-12)


def test_orbit_point_preserves_spectrum():
    rng = np.random.default_rng(2)
    for _ in range(5):
        g = make_group(rng)
        x = make_point(rng)
        t = rng.uniform(-3, 3)
        y = orbit_point(x, t, g, SPEC)
        np.testing.assert_allclose(np.sort(y.cached_spectrum),
                                   np.sort(x.cached_spectrum), atol=1e-10)


def test_static_lagrangian_zero_for_invariant_orthogonal_ranges():
    # x and y supported on complementary invariant blocks of a diagonal H:
    # the product vanishes along the whole orbit
    g = StaticGroup(generator=np.diag([1.0, 1.3, 2.1, 2.9]))
    x = validate_point(np.diag([1.0, -1.0, 0.0, 0.0]), SPEC)
    y = validate_point(np.diag([0.0, 0.0, 2.0, -1.0]), SPEC)
    quad = QuadratureSpec(half_width=8.0, node_count=48, tail_tolerance=1e-12)
    assert static_lagrangian(x, y, g, quad, SPEC) == 0.0
    assert static_boundedness(x, y, g, quad, SPEC) == 0.0


def test_central_generator_fails_tail_check():
    g = StaticGroup(generator=1.7 * np.eye(4))
    rng = np.random.default_rng(3)
    x = make_point(rng)
    y = make_point(rng)
    quad = QuadratureSpec(half_width=8.0, node_count=48, tail_tolerance=1e-6)
    with pytest.raises(TailToleranceError):
        static_lagrangian(x, y, g, quad, SPEC)


def test_static_symmetry_against_doubled_nodes():
    rng = np.random.default_rng(4)
    g = make_group(rng)
    x = make_point(rng)
    y = make_point(rng)
    a = static_lagrangian(x, y, g, QUAD, SPEC)
    b = static_lagrangian(y, x, g, QUAD, SPEC)
    fine = QuadratureSpec(half_width=8.0, node_count=96, tail_tolerance=float("inf"))
    ref = static_lagrangian(x, y, g, fine, SPEC)
    tol = max(abs(a - ref), 1e-10)
    assert abs(a - b) <= max(10 * tol, 1e-9 * (1 + abs(a)))


def test_static_boundedness_symmetry():
    rng = np.random.default_rng(5)
    g = make_group(rng)
    x = make_point(rng)
    y = make_point(rng)
    a = static_boundedness(x, y, g, QUAD, SPEC)
    b = static_boundedness(y, x, g, QUAD, SPEC)
    assert abs(a - b) <= 1e-9 * (1 + abs(a))
    assert a >= 0


def test_kappa_additivity():
    rng = np.random.default_rng(6)
    g = make_group(rng)
    x = make_point(rng)
    y = make_point(rng)
    spec = KernelSpec(spin_dimension=1, kappa=0.07)
    total = static_kappa_lagrangian(x, y, g, QUAD, spec)
    lag = static_lagrangian(x, y, g, QUAD, spec)
    bnd = static_boundedness(x, y, g, QUAD, spec)
    np.testing.assert_allclose(total, lag + 0.07 * bnd, rtol=1e-12)
    np.testing.assert_allclose(
        static_kappa_lagrangian(x, y, g, QUAD, spec, kappa=0.0), lag, rtol=1e-14)


def test_conjugation_invariance():
    rng = np.random.default_rng(7)
    g = make_group(rng)
    x = make_point(rng)
    y = make_point(rng)
    s = 1.3
    xs = orbit_point(x, s, g, SPEC)
    ys = orbit_point(y, s, g, SPEC)
    a = static_kappa_lagrangian(x, y, g, QUAD, SPEC)
    b = static_kappa_lagrangian(xs, ys, g, QUAD, SPEC)
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_doubling_nodes_within_error_estimate():
    rng = np.random.default_rng(8)
    g = make_group(rng)
    x = make_point(rng)
    y = make_point(rng)
    gap = refinement_gap(x, y, g, QUAD, SPEC)
    fine = QuadratureSpec(half_width=8.0, node_count=96, tail_tolerance=float("inf"))
    a = static_lagrangian(x, y, g, QUAD, SPEC)
    b = static_lagrangian(x, y, g, fine, SPEC)
    assert abs(a - b) <= max(2 * gap, 1e-12 * (1 + abs(a)))


def test_engine_matches_reference_ops():
    rng = np.random.default_rng(9)
    g = make_group(rng)
    pts = [make_point(rng) for _ in range(4)]
    engine = StaticKernel(SPEC, g, QUAD)
    lag, bnd, _ = engine.cross_tables(pts, pts, check_tail=False)
    for i in range(4):
        for j in range(4):
            np.testing.assert_allclose(
                lag[i, j], static_lagrangian(pts[i], pts[j], g, QUAD, SPEC),
                rtol=1e-12, atol=1e-14)
    # probe path agrees with the double-compression path
    probes = np.stack([p.matrix for p in pts])
    lag2, bnd2, _ = engine.probe_rows(probes, pts)
    np.testing.assert_allclose(lag2, lag, rtol=1e-9, atol=1e-11)
    np.testing.assert_allclose(bnd2, bnd, rtol=1e-9, atol=1e-11)
