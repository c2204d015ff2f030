"""Jets and derivative operations on the static kernel.

A jet is a per-support-point scalar plus a Hermitian tangent direction.
All derivatives are 2nd-order central differences in the ambient operator
space; directions are projected onto the tangent space of the fixed-rank
manifold (and the trace slice when the constraint is on).  Commutator
jets carry their generator so probes can follow the exact unitary orbit,
which keeps the symmetry cancellations at round-off level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import OperatorPoint, project_tangent, retract
from .measure import Exhaustion, MeasureError, StaticSystem


class JetError(ValueError):
    pass


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class FDScheme:
    """2nd-order central differences with relative step `step`."""

    step: float = 1e-4

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ValueError("step must be positive")


@dataclass(frozen=True)
class Jet:
    """Per-point scalar components and Hermitian direction matrices.

    `generator` is set for commutator jets u(x) = i [A, x]; derivative
    probes then move along the exact conjugation orbit exp(ihA) x exp(-ihA).
    """

    scalars: np.ndarray
    directions: np.ndarray
    generator: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        a = np.asarray(self.scalars, dtype=float)
        u = np.asarray(self.directions, dtype=complex)
        if u.ndim != 3 or u.shape[1] != u.shape[2]:
            raise JetError(f"directions must be (N, f, f), got {u.shape}")
        if len(a) != u.shape[0]:
            raise JetError("scalars and directions must have equal length")
        herm_gap = np.max(np.abs(u - np.conj(np.transpose(u, (0, 2, 1))))) if u.size else 0.0
        if herm_gap > 1e-10 * max(1.0, float(np.max(np.abs(u))) if u.size else 1.0):
            raise JetError("directions must be Hermitian")
        object.__setattr__(self, "scalars", a)
        object.__setattr__(self, "directions", u)

    def __len__(self) -> int:
        return len(self.scalars)

    @property
    def is_scalar_free(self) -> bool:
        return bool(np.all(self.scalars == 0.0))

    def __add__(self, other: "Jet") -> "Jet":
        return Jet(scalars=self.scalars + other.scalars,
                   directions=self.directions + other.directions)

    def scaled(self, factor: float) -> "Jet":
        return Jet(scalars=factor * self.scalars, directions=factor * self.directions)


def zero_jet(system: StaticSystem) -> Jet:
    n, f = len(system.measure), system.group.dim
    return Jet(scalars=np.zeros(n), directions=np.zeros((n, f, f), dtype=complex))


def scalar_unit_jet(system: StaticSystem, index: int) -> Jet:
    jet = zero_jet(system)
    a = jet.scalars.copy()
    a[index] = 1.0
    return Jet(scalars=a, directions=jet.directions)


def commutator_jet(generator: np.ndarray, system: StaticSystem,
                   staticity_tol: float = 1e-8) -> Jet:
    """Jet (0, i[A, x]) at every support point; A must commute with H."""
    a = np.asarray(generator, dtype=complex)
    a = 0.5 * (a + a.conj().T)
    h = system.group.generator
    comm = np.linalg.norm(a @ h - h @ a, 2)
    scale = max(1.0, np.linalg.norm(a, 2) * np.linalg.norm(h, 2))
    if comm > staticity_tol * scale:
        raise JetError(
            f"generator does not commute with the time evolution: "
            f"||[A,H]|| = {comm:.3e}"
        )
    dirs = np.stack([1j * (a @ p.matrix - p.matrix @ a) for p in system.points])
    return Jet(scalars=np.zeros(len(system.measure)), directions=dirs, generator=a)


def coordinate_jet(direction: np.ndarray, system: StaticSystem) -> Jet:
    """The same ambient Hermitian direction at every point, projected onto
    the tangent space (and trace slice when the constraint is on)."""
    traceless = system.kernel.trace_constant is not None
    dirs = np.stack([project_tangent(direction, p, traceless=traceless)
                     for p in system.points])
    return Jet(scalars=np.zeros(len(system.measure)), directions=dirs)


def random_jet(system: StaticSystem, seed: int = 0, scalar_amplitude: float = 0.0) -> Jet:
    rng = np.random.default_rng(seed)
    f = system.group.dim
    traceless = system.kernel.trace_constant is not None
    dirs = []
    for p in system.points:
        b = rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f))
        b = 0.5 * (b + b.conj().T)
        dirs.append(project_tangent(b, p, traceless=traceless))
    scalars = scalar_amplitude * rng.normal(size=len(system.measure))
    return Jet(scalars=scalars, directions=np.stack(dirs))


def test_jet_basis(system: StaticSystem, include_scalars: bool = True,
                   n_commutator: int | None = None,
                   n_coordinate: int = 2) -> list[Jet]:
    """Default test-jet family: scalar unit jets, commutator jets from
    spectral projectors of H, and a few fixed coordinate directions."""
    jets: list[Jet] = []
    if include_scalars:
        jets.extend(scalar_unit_jet(system, i) for i in range(len(system.measure)))
    lam, vec = system.group.eig
    f = system.group.dim
    m = min(f, 4) if n_commutator is None else n_commutator
    for k in range(m):
        proj = np.outer(vec[:, k], vec[:, k].conj())
        jet = commutator_jet(proj, system)
        if np.max(np.abs(jet.directions)) > 1e-14:
            jets.append(jet)
    rng = np.random.default_rng(2024)
    for _ in range(n_coordinate):
        b = rng.normal(size=(f, f)) + 1j * rng.normal(size=(f, f))
        jets.append(coordinate_jet(0.5 * (b + b.conj().T), system))
    return jets


def default_test_jets(system: StaticSystem) -> list[Jet]:
    """Residual test jets: derivative-bearing only (scalars are covered by
    the ell_kappa spread term of the residual)."""
    return test_jet_basis(system, include_scalars=False)


def _probe_pairs(point: OperatorPoint, direction: np.ndarray,
                 generator: np.ndarray | None, step: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Probe matrices (x_+, x_-) and the effective parameter step h such
    that (f(x_+) - f(x_-)) / (2 h) approximates the derivative along the
    stored direction."""
    x = point.matrix
    if generator is not None:
        h = step / max(np.linalg.norm(generator, 2), 1e-12)
        lam, vec = np.linalg.eigh(generator)
        up = (vec * np.exp(1j * h * lam)) @ vec.conj().T
        return up @ x @ up.conj().T, up.conj().T @ x @ up, h
    norm = np.linalg.norm(direction)
    if norm == 0:
        return x.copy(), x.copy(), step
    h = step * max(np.linalg.norm(x, 2), 1e-12) / norm
    return x + h * direction, x - h * direction, h


def kernel_rows(system: StaticSystem, matrices: np.ndarray) -> np.ndarray:
    """kappa-Lagrangian rows of probe matrices against the support."""
    lag, bnd, _ = system.engine.probe_rows(np.asarray(matrices, dtype=complex),
                                           list(system.points))
    return lag + system.kernel.kappa * bnd


def d1_matrix(system: StaticSystem, jet: Jet, step: float = 1e-4) -> np.ndarray:
    """D1[i, j] = directional derivative of L_kappa(x_i, x_j) in the first
    slot along jet.directions[i].  The second-slot derivative is D1.T-like
    by kernel symmetry: D2[i, j] = D1[j, i]."""
    n = len(system.measure)
    if n == 0:
        return np.zeros((0, 0))
    probes, steps = [], []
    for i, p in enumerate(system.points):
        xp, xm, h = _probe_pairs(p, jet.directions[i], jet.generator, step)
        probes.extend([xp, xm])
        steps.append(h)
    rows = kernel_rows(system, np.stack(probes))
    d1 = np.empty((n, n))
    for i in range(n):
        d1[i] = (rows[2 * i] - rows[2 * i + 1]) / (2.0 * steps[i])
    return d1


def ell_kappa_jet_rows(system: StaticSystem, jet: Jet, step: float = 1e-4,
                       base: float | None = None) -> np.ndarray:
    """nabla_u ell_kappa on the support: a(x) (ell_kappa(x) - base) + D_u ell_kappa.

    `base` defaults to the support infimum, making the rows insensitive to
    the calibration of s."""
    ek = system.ell_kappa_values()
    if base is None:
        base = float(np.min(ek)) if len(ek) else 0.0
    d1 = d1_matrix(system, jet, step=step)
    deriv = d1 @ system.weights
    return jet.scalars * (ek - base) + deriv


def nabla(jet_scalar: float, jet_direction: np.ndarray, func, x: np.ndarray,
          step: float = 1e-4) -> float:
    """a f(x) + D_u f(x) for a scalar field on matrices, by central FD."""
    x = np.asarray(x, dtype=complex)
    norm = np.linalg.norm(jet_direction)
    if norm == 0:
        return float(jet_scalar * func(x))
    h = step * max(np.linalg.norm(x, 2), 1e-12) / norm
    plus = func(x + h * jet_direction)
    minus = func(x - h * jet_direction)
    return float(jet_scalar * func(x) + (plus - minus) / (2.0 * h))


_DL_WHICH = ("D1", "D2", "D1+D2", "D1-D2")


def dL(system: StaticSystem, x: OperatorPoint, y: OperatorPoint,
       u_at_x: np.ndarray, v_at_y: np.ndarray, which: str = "D1",
       step: float = 1e-4) -> float:
    """Directional derivatives of the static kappa-Lagrangian in the
    indicated slots; mixed choices are sums of the two slot derivatives."""
    if which not in _DL_WHICH:
        raise JetError(f"which must be one of {_DL_WHICH}")
    engine = system.engine

    def kappa_value(mat: np.ndarray, point: OperatorPoint) -> float:
        lag, bnd, _ = engine.probe_rows(mat[None], [point])
        return float(lag[0, 0] + system.kernel.kappa * bnd[0, 0])

    d1 = d2 = 0.0
    if which in ("D1", "D1+D2", "D1-D2"):
        norm = np.linalg.norm(u_at_x)
        if norm > 0:
            h = step * max(np.linalg.norm(x.matrix, 2), 1e-12) / norm
            d1 = (kappa_value(x.matrix + h * u_at_x, y)
                  - kappa_value(x.matrix - h * u_at_x, y)) / (2.0 * h)
    if which in ("D2", "D1+D2", "D1-D2"):
        norm = np.linalg.norm(v_at_y)
        if norm > 0:
            h = step * max(np.linalg.norm(y.matrix, 2), 1e-12) / norm
            d2 = (kappa_value(y.matrix + h * v_at_y, x)
                  - kappa_value(y.matrix - h * v_at_y, x)) / (2.0 * h)
    if which == "D1":
        return float(d1)
    if which == "D2":
        return float(d2)
    if which == "D1+D2":
        return float(d1 + d2)
    return float(d1 - d2)


def laplacian_pairing(u: Jet, v: Jet, system: StaticSystem, index: int,
                      step: float = 1e-4) -> float:
    """<u, Delta v>(x_i) = nabla_u ( sum_j w_j (nabla_1v + nabla_2v)
    L_kappa(x, y_j) - b(x) s ), outer derivative by central FD.

    Outer probes are retracted onto the rank-2n manifold so that the inner
    slot-2 probes always face a valid low-rank point."""
    w = system.weights
    kappa_k = system.kappa_table()
    b = v.scalars

    def f_v(point: OperatorPoint, krow: np.ndarray) -> float:
        # scalar parts of nabla_1v + nabla_2v against the fixed support
        val = float(((b[index] + b) * krow) @ w)
        # D1 part: probe the first slot along v(x_i)
        norm = np.linalg.norm(v.directions[index])
        if norm > 0:
            h = step * max(np.linalg.norm(point.matrix, 2), 1e-12) / norm
            rows = kernel_rows(system, np.stack([
                point.matrix + h * v.directions[index],
                point.matrix - h * v.directions[index],
            ]))
            val += float(((rows[0] - rows[1]) / (2.0 * h)) @ w)
        # D2 part: probe each second slot along v(y_j)
        probes, steps_j, idxs = [], [], []
        for j, q in enumerate(system.points):
            norm_j = np.linalg.norm(v.directions[j])
            if norm_j == 0:
                continue
            hj = step * max(np.linalg.norm(q.matrix, 2), 1e-12) / norm_j
            probes.extend([q.matrix + hj * v.directions[j],
                           q.matrix - hj * v.directions[j]])
            steps_j.append(hj)
            idxs.append(j)
        if probes:
            lag, bnd, _ = system.engine.probe_rows(np.stack(probes), [point])
            vals = (lag + system.kernel.kappa * bnd)[:, 0]
            for m, j in enumerate(idxs):
                val += w[j] * (vals[2 * m] - vals[2 * m + 1]) / (2.0 * steps_j[m])
        return val - b[index] * system.s_param

    x = system.points[index]
    base_row = kappa_k[index]
    center = f_v(x, base_row)
    out = u.scalars[index] * center
    norm_u = np.linalg.norm(u.directions[index])
    if norm_u > 0:
        xp, xm, h = _probe_pairs(x, u.directions[index], u.generator, step)
        pp = retract(xp, system.kernel)
        pm = retract(xm, system.kernel)
        row_p = kernel_rows(system, pp.matrix[None])[0]
        row_m = kernel_rows(system, pm.matrix[None])[0]
        out += (f_v(pp, row_p) - f_v(pm, row_m)) / (2.0 * h)
    return float(out)


def gamma_sli(system: StaticSystem, omega: np.ndarray, jet: Jet,
              step: float = 1e-4, d1: np.ndarray | None = None) -> float:
    """Surface layer integral sum_{x in Omega} sum_{y not in Omega}
    w w (nabla_1u - nabla_2u) L_kappa(x, y)."""
    n = len(system.measure)
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(omega, dtype=int)] = True
    if d1 is None:
        d1 = d1_matrix(system, jet, step=step)
    k = system.kappa_table()
    a = jet.scalars
    w = system.weights
    integrand = (a[:, None] - a[None, :]) * k + d1 - d1.T
    wmat = np.outer(w, w)
    return float(np.sum(integrand[np.ix_(mask, ~mask)] * wmat[np.ix_(mask, ~mask)]))


@dataclass(frozen=True)
class ConservationReport:
    """Per-cut gaps of the conserved surface layer integral together with
    the linearized-equation residual of the jet."""

    cut_volumes: np.ndarray
    gamma_values: np.ndarray
    expected_values: np.ndarray
    gaps: np.ndarray
    linearized_residual: float

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gaps)) if len(self.gaps) else 0.0


def delta_values(system: StaticSystem, jet: Jet, step: float = 1e-4,
                 d1: np.ndarray | None = None) -> np.ndarray:
    """(Delta u)(x_i) tested against scalar unit jets:
    sum_j w_j (nabla_1u + nabla_2u) L_kappa(x_i, x_j) - a(x_i) s."""
    if d1 is None:
        d1 = d1_matrix(system, jet, step=step)
    k = system.kappa_table()
    a = jet.scalars
    w = system.weights
    integrand = (a[:, None] + a[None, :]) * k + d1 + d1.T
    return integrand @ w - a * system.s_param


def conservation_check(system: StaticSystem, jet: Jet, exhaustion: Exhaustion,
                       step: float = 1e-4) -> ConservationReport:
    """Gap |gamma^Omega(u) - s * sum_Omega w a| at every cut, plus the
    Delta-residual of the jet (the identity is exact only for linearized
    solutions on critical measures)."""
    d1 = d1_matrix(system, jet, step=step)
    w = system.weights
    subsets = exhaustion.subsets(system)
    gammas, expected, vols = [], [], []
    for sub in subsets:
        gammas.append(gamma_sli(system, sub, jet, step=step, d1=d1))
        expected.append(system.s_param * float(np.sum(w[sub] * jet.scalars[sub])))
        vols.append(float(np.sum(w[sub])))
    gammas = np.array(gammas)
    expected = np.array(expected)
    resid = delta_values(system, jet, step=step, d1=d1)
    return ConservationReport(
        cut_volumes=np.array(vols),
        gamma_values=gammas,
        expected_values=expected,
        gaps=np.abs(gammas - expected),
        linearized_residual=float(np.max(np.abs(resid))) if len(resid) else 0.0,
    )


# ---------------------------------------------------------------------------
# support graphs, discrete divergence and the divergence solve


@dataclass(frozen=True)
class SupportGraph:
    """Weighted neighbor graph on the support: edges (i, j) with i < j,
    edge direction matrices x_j - x_i, and the node weights of the measure."""

    edges: np.ndarray
    node_weights: np.ndarray
    directions: np.ndarray
    boundary_node: int | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_weights)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def incidence(self) -> np.ndarray:
        """B[e, i] = -1 and B[e, j] = +1 for edge e = (i, j); the graph
        gradient of a scalar eta is B @ eta."""
        b = np.zeros((self.n_edges, self.n_nodes))
        for e, (i, j) in enumerate(self.edges):
            b[e, i] = -1.0
            b[e, j] = 1.0
        return b

    def check_connected(self) -> None:
        seen = {0}
        frontier = [0]
        adj: dict[int, list[int]] = {i: [] for i in range(self.n_nodes)}
        for i, j in self.edges:
            adj[int(i)].append(int(j))
            adj[int(j)].append(int(i))
        while frontier:
            cur = frontier.pop()
            for nxt in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        if len(seen) != self.n_nodes:
            raise GraphError("support graph is disconnected")


def build_graph(system: StaticSystem, k: int | None = None,
                boundary_node: int | None = None) -> SupportGraph:
    """k-nearest-neighbor graph in the operator-norm metric."""
    pts = system.points
    n = len(pts)
    if n < 2:
        raise GraphError("need at least two support points")
    k = min(6, n - 1) if k is None else min(k, n - 1)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = np.linalg.norm(pts[i].matrix - pts[j].matrix, 2)
            dist[i, j] = dist[j, i] = d
    edges = set()
    for i in range(n):
        order = np.argsort(dist[i])
        picked = [j for j in order if j != i][:k]
        for j in picked:
            edges.add((min(i, j), max(i, j)))
    edges = np.array(sorted(edges), dtype=int)
    dirs = np.stack([pts[j].matrix - pts[i].matrix for i, j in edges])
    graph = SupportGraph(edges=edges, node_weights=system.weights.copy(),
                         directions=dirs, boundary_node=boundary_node)
    graph.check_connected()
    return graph


def path_graph(system: StaticSystem) -> SupportGraph:
    n = len(system.measure)
    edges = np.array([(i, i + 1) for i in range(n - 1)], dtype=int)
    dirs = np.stack([system.points[j].matrix - system.points[i].matrix
                     for i, j in edges])
    return SupportGraph(edges=edges, node_weights=system.weights.copy(),
                        directions=dirs)


def divergence(flows: np.ndarray, graph: SupportGraph,
               boundary_flux: float = 0.0) -> np.ndarray:
    """Discrete divergence of an edge flow, defined through the weighted
    adjoint of the graph gradient:

        sum_i w_i (div f)_i eta_i = - sum_e f_e (B eta)_e

    so that div f = -(1/w) B^T f.  A designated boundary node carries the
    outgoing flux of the asymptotic end."""
    flows = np.asarray(flows, dtype=float)
    if len(flows) != graph.n_edges:
        raise GraphError("flow length does not match the edge count")
    div = -(graph.incidence().T @ flows) / graph.node_weights
    if graph.boundary_node is not None and boundary_flux:
        div[graph.boundary_node] -= boundary_flux / graph.node_weights[graph.boundary_node]
    return div


def point_field_to_flows(field: np.ndarray, graph: SupportGraph) -> np.ndarray:
    """Project a per-point tangent field (Hermitian matrices) onto edge
    flows by pairing the edge mean of the field with the unit edge
    direction in the Frobenius inner product."""
    field = np.asarray(field, dtype=complex)
    flows = np.empty(graph.n_edges)
    for e, (i, j) in enumerate(graph.edges):
        d = graph.directions[e]
        norm = np.linalg.norm(d)
        if norm == 0:
            flows[e] = 0.0
            continue
        mean = 0.5 * (field[i] + field[j])
        flows[e] = float(np.real(np.vdot(d, mean)) / norm)
    return flows


@dataclass(frozen=True)
class DivergenceSolution:
    flows: np.ndarray
    residual: float
    boundary_flux: float
    graph: SupportGraph

    def divergence(self) -> np.ndarray:
        return divergence(self.flows, self.graph, boundary_flux=self.boundary_flux)

    def point_field(self) -> np.ndarray:
        """Least-squares per-point reconstruction of the edge flow as
        ambient directions (diagnostic; divergences are exact only for the
        edge-flow representation)."""
        g = self.graph
        f = g.directions.shape[-1]
        out = np.zeros((g.n_nodes, f, f), dtype=complex)
        counts = np.zeros(g.n_nodes)
        for e, (i, j) in enumerate(g.edges):
            d = g.directions[e]
            norm = np.linalg.norm(d)
            if norm == 0:
                continue
            contrib = self.flows[e] * d / norm
            out[i] += contrib
            out[j] += contrib
            counts[i] += 1
            counts[j] += 1
        counts[counts == 0] = 1.0
        return out / counts[:, None, None]


def solve_divergence(target: np.ndarray, graph: SupportGraph,
                     tol: float = 1e-10) -> DivergenceSolution:
    """Minimum-norm edge flow with div f = a.

    Requires sum_i w_i a_i = 0, unless the graph designates a boundary
    node for the asymptotic end; the boundary then absorbs the imbalance
    (discrete Gauss theorem: the outgoing flux equals sum w a)."""
    graph.check_connected()
    a = np.asarray(target, dtype=float)
    if len(a) != graph.n_nodes:
        raise GraphError("target length does not match the node count")
    w = graph.node_weights
    total = float(np.sum(w * a))
    boundary_flux = 0.0
    rhs = -(w * a)
    if abs(total) > tol * max(1.0, float(np.sum(np.abs(w * a)))):
        if graph.boundary_node is None:
            raise GraphError(
                f"sum w a = {total:.3e} is nonzero and no asymptotic-end "
                f"boundary node is designated"
            )
        boundary_flux = -total
        rhs = rhs.copy()
        rhs[graph.boundary_node] -= boundary_flux
    bt = graph.incidence().T
    flows, *_ = np.linalg.lstsq(bt, rhs, rcond=None)
    sol = DivergenceSolution(flows=flows, residual=0.0,
                             boundary_flux=boundary_flux, graph=graph)
    resid = float(np.max(np.abs(sol.divergence() - a)))
    return DivergenceSolution(flows=flows, residual=resid,
                              boundary_flux=boundary_flux, graph=graph)


def inner_solution_jet(target_scalars: np.ndarray, system: StaticSystem,
                       graph: SupportGraph | None = None) -> tuple[Jet, DivergenceSolution]:
    """Jet (div v, v) whose scalar component matches `target_scalars`
    through the divergence solve; directions are the per-point
    reconstruction of the edge flow."""
    if graph is None:
        graph = build_graph(system)
    sol = solve_divergence(np.asarray(target_scalars, dtype=float), graph)
    field = sol.point_field()
    traceless = system.kernel.trace_constant is not None
    dirs = np.stack([project_tangent(field[i], p, traceless=traceless)
                     for i, p in enumerate(system.points)])
    jet = Jet(scalars=sol.divergence(), directions=dirs)
    return jet, sol
