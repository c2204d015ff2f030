"""Equations of linearized gravity, the positive-mass identity and
kappa-family finite differencing.

The linear system pairs test jets against a solution basis through the
second-variation operator; scalar unit test jets enforce the pointwise
equations, so the solved field satisfies the strong form up to the
least-squares residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import (
    Jet,
    commutator_jet,
    coordinate_jet,
    d1_matrix,
    delta_values,
    ell_kappa_jet_rows,
    gamma_sli,
    scalar_unit_jet,
    zero_jet,
)
from .measure import Exhaustion, StaticSystem


class LinGravError(ValueError):
    pass


@dataclass(frozen=True)
class EllInfinityEstimate:
    value: float
    shell_means: np.ndarray
    drift: float


def estimate_ell_infinity(system: StaticSystem, exhaustion: Exhaustion | None = None,
                          shell_fraction: float = 0.2) -> EllInfinityEstimate:
    """Weighted mean of ell_kappa over the outermost exhaustion shell, with
    the shell-to-shell drift reported."""
    if exhaustion is None:
        exhaustion = Exhaustion.from_radius(system)
    ek = system.ell_kappa_values()
    w = system.weights
    subs = exhaustion.subsets(system)
    means = []
    prev = np.zeros(0, dtype=int)
    for sub in subs:
        shell = np.setdiff1d(sub, prev)
        if len(shell):
            means.append(float(np.sum(ek[shell] * w[shell]) / np.sum(w[shell])))
        prev = sub
    means = np.array(means)
    order = exhaustion.order
    total = float(np.sum(w))
    acc, outer = 0.0, []
    for idx in order[::-1]:
        outer.append(idx)
        acc += w[idx]
        if acc >= shell_fraction * total:
            break
    outer = np.array(outer, dtype=int)
    value = float(np.sum(ek[outer] * w[outer]) / np.sum(w[outer]))
    drift = float(np.max(np.abs(np.diff(means)))) if len(means) > 1 else 0.0
    return EllInfinityEstimate(value=value, shell_means=means, drift=drift)


def default_solution_basis(system: StaticSystem, directions_per_point: int = 4,
                           seed: int = 7) -> list[Jet]:
    """Per-point tangent jets along a deterministic set of Hermitian
    directions (no scalar components)."""
    from .kernel import project_tangent

    rng = np.random.default_rng(seed)
    f = system.group.dim
    traceless = system.kernel.trace_constant is not None
    dirs = []
    for _ in range(directions_per_point):
        b = rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f))
        dirs.append(0.5 * (b + b.conj().T))
    basis = []
    n = len(system.measure)
    for i in range(n):
        for b in dirs:
            u = np.zeros((n, f, f), dtype=complex)
            u[i] = project_tangent(b, system.points[i], traceless=traceless)
            basis.append(Jet(scalars=np.zeros(n), directions=u))
    return basis


def default_test_basis(system: StaticSystem) -> list[Jet]:
    """Scalar unit jets: they enforce the pointwise equations
    Delta v(x) = -(ell(x) - ell_inf) directly.  Vector test jets may be
    added by the caller; their rows go through the nested pairing."""
    return [scalar_unit_jet(system, i) for i in range(len(system.measure))]


@dataclass(frozen=True)
class LinGravSystem:
    """Assembled pairing matrix and right-hand side of the linearized
    equations, with the ridge parameter used in the solve."""

    matrix: np.ndarray
    rhs: np.ndarray
    ell_infinity: float
    regularization: float


@dataclass(frozen=True)
class LinGravSolution:
    jet: Jet
    coefficients: np.ndarray
    residual_norm: float
    relative_residual: float
    rank: int
    assembled: LinGravSystem


def _pairing_row(system: StaticSystem, test_jet: Jet, field_values: np.ndarray,
                 fd_rows: np.ndarray) -> float:
    """Measure-integrated pairing of a test jet against precomputed
    pointwise values: sum_x w(x) [a_u(x) field(x) + D_u field(x)]."""
    w = system.weights
    return float(np.sum(w * (test_jet.scalars * field_values + fd_rows)))


def assemble_lingrav(system: StaticSystem, test_basis: list[Jet],
                     solution_basis: list[Jet], ell_inf: float,
                     step: float = 1e-4,
                     regularization: float | None = None) -> LinGravSystem:
    """Matrix M[a, b] = <u_a, Delta v_b> and rhs_a = -grad_{u_a}(ell - ell_inf),
    both integrated against the measure.

    Scalar test jets reduce to the pointwise quantities Delta v(x) and
    -(ell(x) - ell_inf); test jets with vector components pay for the
    nested second-derivative pairing."""
    from .jets import laplacian_pairing

    w = system.weights
    ek = system.ell_kappa_values()
    n = len(system.measure)
    delta_cols = [delta_values(system, v, step=step) for v in solution_basis]
    rows = []
    rhs = []
    for u in test_basis:
        d_u = d1_matrix(system, u, step=step) @ w     # pure D_u of ell_kappa
        rhs.append(-float(np.sum(w * (u.scalars * (ek - ell_inf) + d_u))))
        has_vector = bool(np.max(np.abs(u.directions)) > 1e-15) if len(u) else False
        if not has_vector:
            row = [float(np.sum(w * u.scalars * col)) for col in delta_cols]
        else:
            row = [
                float(np.sum(w * np.array([
                    laplacian_pairing(u, v, system, i, step=step) for i in range(n)
                ])))
                for v in solution_basis
            ]
        rows.append(row)
    matrix = np.array(rows)
    if regularization is None:
        scale = float(np.max(np.abs(matrix))) if matrix.size else 1.0
        regularization = 1e-10 * max(scale, 1e-300)
    return LinGravSystem(matrix=matrix, rhs=np.array(rhs), ell_infinity=ell_inf,
                         regularization=regularization)


def solve_lingrav(system: StaticSystem, test_basis: list[Jet] | None = None,
                  solution_basis: list[Jet] | None = None,
                  ell_inf: float | None = None, step: float = 1e-4,
                  regularization: float | None = None) -> LinGravSolution:
    """Ridge least-squares solution of <u, Delta v> = -grad_u (ell - ell_inf).

    Non-uniqueness is expected (inner solutions span a null space); the
    minimum-norm solution is returned together with the residual."""
    if test_basis is None:
        test_basis = default_test_basis(system)
    if solution_basis is None:
        solution_basis = default_solution_basis(system)
    if ell_inf is None:
        ell_inf = estimate_ell_infinity(system).value
    assembled = assemble_lingrav(system, test_basis, solution_basis, ell_inf,
                                 step=step, regularization=regularization)
    m, r = assembled.matrix, assembled.rhs
    ridge = assembled.regularization
    n_basis = m.shape[1]
    stacked = np.vstack([m, ridge * np.eye(n_basis)])
    target = np.concatenate([r, np.zeros(n_basis)])
    coeffs, _, rank, _ = np.linalg.lstsq(stacked, target, rcond=None)
    resid = float(np.linalg.norm(m @ coeffs - r))
    rnorm = float(np.linalg.norm(r))
    jet = zero_jet(system)
    for c, v in zip(coeffs, solution_basis):
        jet = jet + v.scaled(float(c))
    return LinGravSolution(
        jet=jet, coefficients=coeffs, residual_norm=resid,
        relative_residual=resid / rnorm if rnorm > 0 else resid,
        rank=int(rank), assembled=assembled,
    )


@dataclass(frozen=True)
class ProposinhomReport:
    """Per-cut gap between the surface layer integral of the solved field
    and the enclosed integral of ell - ell_inf."""

    cut_volumes: np.ndarray
    gamma_values: np.ndarray
    enclosed_values: np.ndarray
    gaps: np.ndarray
    bound: float

    @property
    def final_gap(self) -> float:
        return float(self.gaps[-1]) if len(self.gaps) else 0.0


def prposinhom_check(system: StaticSystem, solution: LinGravSolution | Jet,
                     exhaustion: Exhaustion | None = None,
                     ell_inf: float | None = None, step: float = 1e-4,
                     fd_tolerance: float | None = None) -> ProposinhomReport:
    """Check lim gamma^Omega(v) = sum_Omega w (ell - ell_inf) per cut."""
    if exhaustion is None:
        exhaustion = Exhaustion.from_radius(system)
    if isinstance(solution, LinGravSolution):
        jet = solution.jet
        resid = solution.residual_norm
        if ell_inf is None:
            ell_inf = solution.assembled.ell_infinity
    else:
        jet = solution
        resid = 0.0
        if ell_inf is None:
            ell_inf = estimate_ell_infinity(system).value
    ek = system.ell_kappa_values()
    w = system.weights
    d1 = d1_matrix(system, jet, step=step)
    gammas, encl, vols = [], [], []
    for sub in exhaustion.subsets(system):
        gammas.append(gamma_sli(system, sub, jet, step=step, d1=d1))
        encl.append(float(np.sum(w[sub] * (ek[sub] - ell_inf))))
        vols.append(float(np.sum(w[sub])))
    gammas = np.array(gammas)
    encl = np.array(encl)
    if fd_tolerance is None:
        fd_tolerance = fd_tolerance_estimate(system, jet, step)
    vol = float(np.sum(w))
    return ProposinhomReport(
        cut_volumes=np.array(vols),
        gamma_values=gammas,
        enclosed_values=encl,
        gaps=np.abs(gammas - encl),
        bound=resid * vol + 10.0 * fd_tolerance,
    )


def fd_tolerance_estimate(system: StaticSystem, jet: Jet, step: float) -> float:
    """Scale of the finite-difference truncation and round-off error in
    surface-layer sums: O(h^2) curvature error plus eigenvalue noise / h,
    amplified by the double sum of weights."""
    scale = system.ell_scale()
    vol = float(np.sum(system.weights))
    jet_norm = float(np.max(np.abs(jet.directions))) if len(jet) else 0.0
    per_term = (step ** 2 + 1e-13 / step) * scale * max(jet_norm, 1.0)
    return per_term * vol


def mass_identity(tilde: StaticSystem, coupling: float,
                  ell_inf: float | None = None) -> float:
    """g * sum w~ (ell~ - ell~_inf): nonnegative under the local energy
    condition with positive coupling."""
    if ell_inf is None:
        ell_inf = estimate_ell_infinity(tilde).value
    ek = tilde.ell_kappa_values()
    return float(coupling * np.sum(tilde.weights * (ek - ell_inf)))


@dataclass(frozen=True)
class EnergyConditionReport:
    holds: bool
    worst_violation: float
    worst_index: int
    ell_infinity: float


def local_energy_check(tilde: StaticSystem, ell_inf: float | None = None,
                       tolerance: float = 1e-12) -> EnergyConditionReport:
    """min over the support of (ell~ - ell~_inf) with the minimizer."""
    if ell_inf is None:
        ell_inf = estimate_ell_infinity(tilde).value
    gaps = tilde.ell_kappa_values() - ell_inf
    idx = int(np.argmin(gaps)) if len(gaps) else -1
    worst = float(gaps[idx]) if len(gaps) else 0.0
    scale = tilde.ell_scale()
    return EnergyConditionReport(
        holds=worst >= -tolerance * max(scale, 1.0),
        worst_violation=worst,
        worst_index=idx,
        ell_infinity=ell_inf,
    )


class FamilyEvaluationError(LinGravError):
    """The kappa-family maps are not defined at a required tau node."""


@dataclass(frozen=True)
class KappaFamily:
    """One-parameter point maps for the base and tilde systems.

    `base_maps` / `tilde_maps` are callables tau -> (N, f, f) arrays of
    transported points; alternatively dictionaries {tau: array} when the
    maps come from paired system files (an error is raised for missing
    tau nodes)."""

    base_maps: object
    tilde_maps: object

    def points_at(self, which: str, tau: float) -> np.ndarray:
        maps = self.base_maps if which == "base" else self.tilde_maps
        if callable(maps):
            return np.asarray(maps(tau), dtype=complex)
        key_match = [k for k in maps if abs(k - tau) <= 1e-12]
        if not key_match:
            raise FamilyEvaluationError(
                f"family map not defined at tau = {tau:.6g}"
            )
        return np.asarray(maps[key_match[0]], dtype=complex)


@dataclass(frozen=True)
class KappaFamilyReport:
    tau: float
    linearized: float
    nonlinear: float
    nonlinear_half: float
    agreement_ratio: float
    measured_order: float
    w_jet_norm: float


def kappa_family_consistency(tilde: StaticSystem, base: StaticSystem,
                             family: KappaFamily, coupling: float,
                             tau: float = 1e-3,
                             omega: np.ndarray | None = None,
                             step: float = 1e-4) -> KappaFamilyReport:
    """Compare the linearized surface layer integral of w = g (v~ - v)
    against the exact nonlinear surface layer integral of the transported
    measure at finite tau; the gap scales as O(tau^2).

    v and v~ are central differences of the family maps at tau = 0; the
    supports must be index-identified."""
    n = len(base.measure)
    if len(tilde.measure) != n:
        raise LinGravError("kappa families need index-identified supports")
    if omega is None:
        omega = Exhaustion.from_radius(base).subsets(base)[0]

    def velocity(which: str, at: float) -> np.ndarray:
        plus = family.points_at(which, +at)
        minus = family.points_at(which, -at)
        return (plus - minus) / (2.0 * at)

    v_base = velocity("base", tau)
    v_tilde = velocity("tilde", tau)
    w_dirs = coupling * (v_tilde - v_base)
    w_dirs = 0.5 * (w_dirs + np.conj(np.transpose(w_dirs, (0, 2, 1))))
    w_jet = Jet(scalars=np.zeros(n), directions=w_dirs)
    linearized = gamma_sli(base, omega, w_jet, step=step)

    def nonlinear(at: float) -> float:
        f_t = family.points_at("tilde", at)
        f_b = family.points_at("base", at)
        f_t0 = family.points_at("tilde", 0.0)
        f_b0 = family.points_at("base", 0.0)
        probes = np.stack([
            base.points[i].matrix
            + coupling * ((f_t[i] - f_t0[i]) - (f_b[i] - f_b0[i]))
            for i in range(n)
        ])
        probes = 0.5 * (probes + np.conj(np.transpose(probes, (0, 2, 1))))
        lag, bnd, _ = base.engine.probe_rows(probes, list(base.points))
        rows = lag + base.kernel.kappa * bnd
        mask = np.zeros(n, dtype=bool)
        mask[np.asarray(omega, dtype=int)] = True
        w = base.weights
        wmat = np.outer(w, w)
        diff = rows - rows.T
        return float(np.sum(diff[np.ix_(mask, ~mask)] * wmat[np.ix_(mask, ~mask)]))

    nl_tau = nonlinear(tau)
    nl_half = nonlinear(tau / 2.0)
    err_tau = abs(nl_tau - tau * linearized)
    err_half = abs(nl_half - (tau / 2.0) * linearized)
    if err_half > 0 and err_tau > 0:
        order = float(np.log2(err_tau / err_half))
    else:
        order = float("inf")
    denom = tau * linearized
    ratio = nl_tau / denom if denom != 0 else float("nan")
    return KappaFamilyReport(
        tau=tau, linearized=linearized, nonlinear=nl_tau, nonlinear_half=nl_half,
        agreement_ratio=ratio, measured_order=order,
        w_jet_norm=float(np.max(np.abs(w_dirs))) if w_dirs.size else 0.0,
    )
