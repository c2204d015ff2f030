"""Deterministic construction of desk-scale systems for tests and the CLI.

Two families matter:

* random systems - generic points; the t-orbit of a finite-dimensional
  unitary group is almost periodic, so their time integrands do not decay
  and the quadrature window [-T, T] is the model.  Tail tolerances are
  set loose for these fixtures (the tail estimate stays available as a
  diagnostic); all identity checks are exact for the windowed kernel.

* cyclic orbit systems - the support is one orbit of a finite cyclic
  subgroup generated in the eigenbasis of H.  ell_kappa is constant on
  the support by symmetry and the weak EL equations hold exactly along
  every commutator jet whose generator is diagonal in that basis, which
  makes them exact critical measures for conservation-law checks.
"""

from __future__ import annotations

import numpy as np

from .kernel import KernelSpec, OperatorPoint, validate_point
from .measure import DiscreteMeasure, StaticSystem
from .static import QuadratureSpec, StaticGroup

# Generic finite-dimensional orbits are almost periodic: their t-integrands
# do not decay, so desk fixtures run the windowed quadrature with the tail
# gate disabled (the estimate remains available as a diagnostic).
DESK_TAIL_TOLERANCE = float("inf")


def haar_unitary(rng: np.random.Generator, f: int) -> np.ndarray:
    z = rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_point(rng: np.random.Generator, spec: KernelSpec, f: int,
                 scale: float = 1.0) -> OperatorPoint:
    """Random point with full signature (n, n) and, when the constraint is
    on, exact trace."""
    n = spec.spin_dimension
    u = haar_unitary(rng, f)
    lam = np.zeros(f)
    lam[:n] = scale * (1.0 + rng.uniform(0.2, 1.0, n))
    lam[n:2 * n] = -scale * (1.0 + rng.uniform(0.2, 1.0, n))
    if spec.trace_constant is not None:
        lam[:2 * n] += (spec.trace_constant - lam.sum()) / (2 * n)
        if np.any(lam[:n] <= 0) or np.any(lam[n:2 * n] >= 0):
            lam[:n] = np.abs(lam[:n]) + 0.5
            lam[n:2 * n] = -np.abs(lam[n:2 * n]) - 0.5
            lam[:2 * n] += (spec.trace_constant - lam.sum()) / (2 * n)
    x = (u[:, :2 * n] * lam[:2 * n]) @ u[:, :2 * n].conj().T
    return validate_point(x, spec)


def default_quadrature(half_width: float = 8.0, node_count: int = 48,
                       tail_tolerance: float = DESK_TAIL_TOLERANCE) -> QuadratureSpec:
    return QuadratureSpec(half_width=half_width, node_count=node_count,
                          tail_tolerance=tail_tolerance)


def random_system(seed: int = 0, n_points: int = 8, f: int = 4, spin: int = 1,
                  kappa: float = 0.0, trace_constant: float | None = 1.0,
                  quadrature: QuadratureSpec | None = None,
                  calibrate: bool = True) -> StaticSystem:
    rng = np.random.default_rng(seed)
    spec = KernelSpec(spin_dimension=spin, kappa=kappa, trace_constant=trace_constant)
    v = haar_unitary(rng, f)
    hlam = np.sort(rng.uniform(0.4, 3.0, f))
    group = StaticGroup(generator=(v * hlam) @ v.conj().T)
    pts = tuple(random_point(rng, spec, f) for _ in range(n_points))
    weights = rng.uniform(0.5, 1.5, n_points)
    system = StaticSystem(
        kernel=spec, group=group,
        quadrature=quadrature or default_quadrature(),
        measure=DiscreteMeasure(points=pts, weights=weights),
    )
    if calibrate:
        from .optimize import calibrate_s

        system = calibrate_s(system)
    return system


def orbit_system(seed: int = 0, n_points: int = 8, f: int = 6, spin: int = 1,
                 kappa: float = 0.0, trace_constant: float | None = 1.0,
                 quadrature: QuadratureSpec | None = None,
                 diagonal_basis: bool = True) -> tuple[StaticSystem, np.ndarray]:
    """Cyclic orbit measure; returns the system and the orbit generator A
    (integer-diagonal in the H eigenbasis, so V = exp(2 pi i A / N) has
    V^N = 1 and [A, H] = 0)."""
    rng = np.random.default_rng(seed)
    spec = KernelSpec(spin_dimension=spin, kappa=kappa, trace_constant=trace_constant)
    v = np.eye(f, dtype=complex) if diagonal_basis else haar_unitary(rng, f)
    hlam = np.sort(rng.uniform(0.4, 3.0, f))
    group = StaticGroup(generator=(v * hlam) @ v.conj().T)
    ints = rng.integers(-3, 4, f).astype(float)
    while np.all(ints == ints[0]):
        ints = rng.integers(-3, 4, f).astype(float)
    a_gen = (v * ints) @ v.conj().T
    theta = 2.0 * np.pi / n_points
    step_u = (v * np.exp(1j * theta * ints)) @ v.conj().T
    x0 = random_point(rng, spec, f)
    pts = []
    cur = x0.matrix
    for _ in range(n_points):
        pts.append(validate_point(cur, spec))
        cur = step_u @ cur @ step_u.conj().T
    system = StaticSystem(
        kernel=spec, group=group,
        quadrature=quadrature or default_quadrature(),
        measure=DiscreteMeasure(points=tuple(pts), weights=np.ones(n_points)),
    )
    from .optimize import calibrate_s

    return calibrate_s(system), a_gen


def perturbed_pair(seed: int = 0, n_points: int = 10, f: int = 4, spin: int = 1,
                   kappa: float = 0.0, amplitude: float = 0.05,
                   equal_volume: bool = False,
                   quadrature: QuadratureSpec | None = None) -> tuple[StaticSystem, StaticSystem]:
    """A random system S and a nearby S~ sharing (kappa, s); S~ moves the
    points by a small tangent shift and jitters the weights."""
    rng = np.random.default_rng(seed)
    base = random_system(seed=seed, n_points=n_points, f=f, spin=spin, kappa=kappa,
                         quadrature=quadrature)
    pts = []
    for p in base.points:
        b = rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f))
        b = 0.5 * (b + b.conj().T)
        shifted = p.matrix + amplitude * b
        from .kernel import retract

        pts.append(retract(shifted, base.kernel,
                           trace_to=base.kernel.trace_constant))
    weights = base.weights * rng.uniform(0.8, 1.2, n_points)
    if equal_volume:
        weights *= base.measure.total_volume / weights.sum()
    tilde = StaticSystem(
        kernel=base.kernel, group=base.group, quadrature=base.quadrature,
        measure=DiscreteMeasure(points=tuple(pts), weights=weights),
        s_param=base.s_param,
    )
    return tilde, base
