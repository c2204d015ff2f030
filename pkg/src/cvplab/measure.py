"""Discrete static measures and the functions built from them.

A StaticSystem bundles a discrete measure (points + weights) with the
kernel parameters, group generator and quadrature spec.  The pair tables
L(x_i, x_j) and T(x_i, x_j) are computed once and cached; everything else
(ell, correlation measures, EL residuals, surface layer integrals) is a
weighted reduction of those tables in a fixed index order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .kernel import KernelSpec, OperatorPoint, validate_point
from .static import QuadratureSpec, StaticGroup, StaticKernel


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely many quotient representatives with positive weights."""

    points: tuple[OperatorPoint, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.points):
            raise MeasureError("weights and points must have equal length")
        if np.any(w <= 0):
            raise MeasureError("weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_volume(self) -> float:
        return float(np.sum(self.weights))

    def check_distinct(self, tol: float = 1e-12) -> None:
        """Points must be pairwise distinct as matrices (cheap stand-in for
        distinctness modulo the group orbit)."""
        for i in range(len(self.points)):
            for j in range(i + 1, len(self.points)):
                gap = np.linalg.norm(self.points[i].matrix - self.points[j].matrix)
                if gap <= tol * max(1.0, np.linalg.norm(self.points[i].matrix)):
                    raise MeasureError(f"points {i} and {j} coincide")


@dataclass(frozen=True)
class StaticSystem:
    """A discrete measure together with its kernel and Lagrange data."""

    kernel: KernelSpec
    group: StaticGroup
    quadrature: QuadratureSpec
    measure: DiscreteMeasure
    s_param: float = 0.0
    inner_region: tuple[int, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.inner_region is not None:
            idx = tuple(int(i) for i in self.inner_region)
            if any(i < 0 or i >= len(self.measure) for i in idx):
                raise MeasureError("inner_region index out of range")
            object.__setattr__(self, "inner_region", idx)

    @property
    def points(self) -> tuple[OperatorPoint, ...]:
        return self.measure.points

    @property
    def weights(self) -> np.ndarray:
        return self.measure.weights

    @property
    def engine(self) -> StaticKernel:
        if "engine" not in self._cache:
            self._cache["engine"] = StaticKernel(self.kernel, self.group, self.quadrature)
        return self._cache["engine"]

    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cached support-pair tables (L, T_bound, tails)."""
        if "tables" not in self._cache:
            pts = list(self.points)
            self._cache["tables"] = self.engine.cross_tables(pts, pts, check_tail=False)
        return self._cache["tables"]

    def kappa_table(self) -> np.ndarray:
        lag, bnd, _ = self.tables()
        return lag + self.kernel.kappa * bnd

    def max_tail(self) -> float:
        return float(np.max(self.tables()[2])) if len(self.measure) else 0.0

    def check_tails(self) -> None:
        if self.max_tail() > self.quadrature.tail_tolerance:
            from .static import TailToleranceError

            raise TailToleranceError(
                f"worst pair tail {self.max_tail():.3e} exceeds tolerance "
                f"{self.quadrature.tail_tolerance:.3e}"
            )

    def ell_values(self) -> np.ndarray:
        """ell on the support: sum_j w_j L(x_i, x_j) - s."""
        lag, _, _ = self.tables()
        return lag @ self.weights - self.s_param

    def frak_t_values(self) -> np.ndarray:
        _, bnd, _ = self.tables()
        return bnd @ self.weights

    def ell_kappa_values(self) -> np.ndarray:
        return self.kappa_table() @ self.weights - self.s_param

    def ell_scale(self) -> float:
        """Natural magnitude of ell-like quantities: action per unit volume."""
        vol = self.measure.total_volume
        if vol == 0:
            return 1.0
        act = float(self.weights @ self.kappa_table() @ self.weights)
        return max(act / vol, 1e-300)

    def with_measure(self, measure: DiscreteMeasure) -> "StaticSystem":
        return StaticSystem(kernel=self.kernel, group=self.group,
                            quadrature=self.quadrature, measure=measure,
                            s_param=self.s_param, inner_region=self.inner_region)

    def with_s(self, s_param: float) -> "StaticSystem":
        sys2 = StaticSystem(kernel=self.kernel, group=self.group,
                            quadrature=self.quadrature, measure=self.measure,
                            s_param=s_param, inner_region=self.inner_region)
        if "tables" in self._cache:
            sys2._cache["tables"] = self._cache["tables"]
        if "engine" in self._cache:
            sys2._cache["engine"] = self._cache["engine"]
        return sys2


def _probe_tables(system: StaticSystem, x) -> tuple[float, float]:
    """Static (L-row, T-row) of a single point or matrix against the support,
    contracted with the weights."""
    if isinstance(x, OperatorPoint):
        mat = x.matrix
    else:
        mat = np.asarray(x, dtype=complex)
    lag, bnd, _ = system.engine.probe_rows(mat[None], list(system.points))
    return float(lag[0] @ system.weights), float(bnd[0] @ system.weights)


def ell(x, system: StaticSystem) -> float:
    """ell(x) = sum_j w_j L(x, y_j) - s for any admissible x."""
    lag, _ = _probe_tables(system, x)
    return lag - system.s_param


def frak_t(x, system: StaticSystem) -> float:
    """t(x) = sum_j w_j T(x, y_j) >= 0."""
    _, bnd = _probe_tables(system, x)
    return bnd


def ell_kappa(x, system: StaticSystem) -> float:
    """ell + kappa * t; identical to sum_j w_j L_kappa(x, y_j) - s."""
    lag, bnd = _probe_tables(system, x)
    return lag + system.kernel.kappa * bnd - system.s_param


@dataclass(frozen=True)
class ElResidual:
    """Deviation of a system from the weak EL equations."""

    scalar_gap: float
    jet_gap: float
    scale: float

    @property
    def total(self) -> float:
        return self.scalar_gap + self.jet_gap

    @property
    def relative(self) -> float:
        return self.total / self.scale


def el_residual(system: StaticSystem, test_jets=None, step: float = 1e-4) -> ElResidual:
    """max |ell_kappa - inf ell_kappa| on the support plus the largest
    test-jet directional derivative of ell_kappa (central differences).

    Scalar-jet rows use ell_kappa relative to the support infimum, which
    makes the residual independent of the calibration of s.
    """
    from . import jets as jets_mod

    ek = system.ell_kappa_values()
    base = float(np.min(ek)) if len(ek) else 0.0
    scalar_gap = float(np.max(np.abs(ek - base))) if len(ek) else 0.0
    if test_jets is None:
        test_jets = jets_mod.default_test_jets(system)
    jet_gap = 0.0
    for jet in test_jets:
        rows = jets_mod.ell_kappa_jet_rows(system, jet, step=step, base=base)
        if len(rows):
            jet_gap = max(jet_gap, float(np.max(np.abs(rows))))
    return ElResidual(scalar_gap=scalar_gap, jet_gap=jet_gap, scale=system.ell_scale())


@dataclass(frozen=True)
class CorrelationData:
    """n, n-tilde and the induced correlation measure weights."""

    n_values: np.ndarray
    n_tilde_values: np.ndarray
    nu_weights: np.ndarray
    nu_tilde_weights: np.ndarray

    @property
    def nu_total(self) -> float:
        return float(np.sum(self.nu_weights))

    @property
    def nu_tilde_total(self) -> float:
        return float(np.sum(self.nu_tilde_weights))


def cross_kappa_table(system: StaticSystem, other: StaticSystem) -> np.ndarray:
    """Cached kappa-Lagrangian matrix K[i, j] = L_k(x_i, y~_j)."""
    key = ("cross", id(other))
    if key not in system._cache:
        lag, bnd, _ = system.engine.cross_tables(list(system.points), list(other.points),
                                                 check_tail=False)
        system._cache[key] = lag + system.kernel.kappa * bnd
    return system._cache[key]


def correlations(system: StaticSystem, other: StaticSystem) -> CorrelationData:
    """n(x_i) = sum_j w~_j L_k(x_i, y~_j) and the tilde counterpart."""
    if len(other.measure) == 0:
        n_vals = np.zeros(len(system.measure))
        nt_vals = np.zeros(0)
    else:
        k = cross_kappa_table(system, other)
        n_vals = k @ other.weights
        nt_vals = k.T @ system.weights
    return CorrelationData(
        n_values=n_vals,
        n_tilde_values=nt_vals,
        nu_weights=n_vals * system.weights,
        nu_tilde_weights=nt_vals * other.weights if len(other.measure) else np.zeros(0),
    )


@dataclass(frozen=True)
class Exhaustion:
    """Nested subsets of the support ordered by a radius function, with
    increasing cumulative-volume cut points."""

    order: np.ndarray
    cut_points: np.ndarray

    def __post_init__(self) -> None:
        order = np.asarray(self.order, dtype=int)
        cuts = np.asarray(self.cut_points, dtype=float)
        if len(set(order.tolist())) != len(order):
            raise MeasureError("order must be a permutation")
        if np.any(np.diff(cuts) <= 0):
            raise MeasureError("cut_points must be strictly increasing")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "cut_points", cuts)

    @classmethod
    def from_radius(cls, system: StaticSystem, center_index: int = 0,
                    n_cuts: int = 6, radius=None) -> "Exhaustion":
        """Order by operator-norm distance from a designated center point
        (user-overridable radius function)."""
        pts = system.points
        if radius is None:
            center = pts[center_index].matrix
            radii = np.array([np.linalg.norm(p.matrix - center, 2) for p in pts])
        else:
            radii = np.array([radius(p) for p in pts])
        order = np.argsort(radii, kind="stable")
        w = system.weights[order]
        cum = np.cumsum(w)
        total = cum[-1]
        targets = np.linspace(total / n_cuts, total, n_cuts)
        cuts = sorted({float(cum[np.searchsorted(cum, t - 1e-12)]) for t in targets})
        return cls(order=order, cut_points=np.array(cuts))

    def subsets(self, system: StaticSystem) -> list[np.ndarray]:
        """Index arrays Omega_1 subset Omega_2 subset ... (union = support)."""
        w = system.weights[self.order]
        cum = np.cumsum(w)
        out = []
        for cut in self.cut_points:
            k = int(np.searchsorted(cum, cut - 1e-12)) + 1
            out.append(np.sort(self.order[:k]))
        if len(out) == 0 or len(out[-1]) != len(system.measure):
            out.append(np.sort(self.order))
        return out

    def validate(self, system: StaticSystem) -> None:
        subs = self.subsets(system)
        for a, b in zip(subs[:-1], subs[1:]):
            if not set(a.tolist()) <= set(b.tolist()):
                raise MeasureError("exhaustion subsets are not nested")
        if set(subs[-1].tolist()) != set(range(len(system.measure))):
            raise MeasureError("exhaustion does not cover the support")


@dataclass(frozen=True)
class ClosenessReport:
    """Integrability sums of Def-style asymptotic closeness, with a
    per-shell breakdown along an exhaustion."""

    deviation_sum: float
    deviation_sum_tilde: float
    shell_sums: np.ndarray
    shell_sums_tilde: np.ndarray
    diverging: bool


def asymptotic_closeness(system: StaticSystem, other: StaticSystem,
                         exhaustion: Exhaustion | None = None,
                         exhaustion_tilde: Exhaustion | None = None) -> ClosenessReport:
    """sum w |n - s| and sum w~ |n~ - s| with shell diagnostics.

    On finite systems both sums are finite; the shells flag whether the
    outermost contributions still grow (a divergence trend)."""
    corr = correlations(system, other)
    s = system.s_param
    dev = np.abs(corr.n_values - s) * system.weights
    dev_t = np.abs(corr.n_tilde_values - s) * other.weights

    def shells(dev_arr, sys_, exh):
        if len(dev_arr) == 0:
            return np.zeros(0)
        if exh is None:
            exh = Exhaustion.from_radius(sys_)
        subs = exh.subsets(sys_)
        sums, prev = [], np.zeros(0, dtype=int)
        for sub in subs:
            new = np.setdiff1d(sub, prev)
            sums.append(float(np.sum(dev_arr[new])))
            prev = sub
        return np.array(sums)

    sh = shells(dev, system, exhaustion)
    sh_t = shells(dev_t, other, exhaustion_tilde)
    diverging = False
    for arr in (sh, sh_t):
        if len(arr) >= 3 and arr[-1] > arr[-2] > arr[-3] > 0:
            diverging = True
    return ClosenessReport(
        deviation_sum=float(np.sum(dev)),
        deviation_sum_tilde=float(np.sum(dev_t)),
        shell_sums=sh,
        shell_sums_tilde=sh_t,
        diverging=diverging,
    )


def pushforward(point_map, system: StaticSystem) -> StaticSystem:
    """Move every support point through `point_map`, keep the weights.

    Images are validated against the kernel invariants."""
    new_pts = []
    for p in system.points:
        img = point_map(p.matrix)
        new_pts.append(validate_point(img, system.kernel))
    return system.with_measure(DiscreteMeasure(points=tuple(new_pts),
                                               weights=system.weights.copy()))


SCHEMA_TAG = "cvp-system/1"


def _complex_to_json(a: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(a, dtype=complex)]


def _complex_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


class SchemaError(ValueError):
    pass


def save_system(path: str | Path, system: StaticSystem) -> None:
    doc = {
        "schema": SCHEMA_TAG,
        "ambient_dim": system.group.dim,
        "spin_dim": system.kernel.spin_dimension,
        "kappa": system.kernel.kappa,
        "trace_constant": system.kernel.trace_constant,
        "s_param": system.s_param,
        "generator": _complex_to_json(system.group.generator),
        "points": [_complex_to_json(p.matrix) for p in system.points],
        "weights": [float(w) for w in system.weights],
        "inner_region": list(system.inner_region) if system.inner_region else [],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_system(path: str | Path, quadrature: QuadratureSpec | None = None) -> StaticSystem:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read system file {path}: {exc}") from exc
    if doc.get("schema") != SCHEMA_TAG:
        raise SchemaError(f"unsupported schema tag {doc.get('schema')!r}")
    required = ("ambient_dim", "spin_dim", "kappa", "s_param", "generator",
                "points", "weights")
    for key in required:
        if key not in doc:
            raise SchemaError(f"missing field {key!r}")
    spec = KernelSpec(
        spin_dimension=int(doc["spin_dim"]),
        kappa=float(doc["kappa"]),
        trace_constant=(None if doc.get("trace_constant") is None
                        else float(doc["trace_constant"])),
    )
    gen = _complex_from_json(doc["generator"])
    if gen.shape != (doc["ambient_dim"], doc["ambient_dim"]):
        raise SchemaError("generator shape does not match ambient_dim")
    group = StaticGroup(generator=gen)
    pts = []
    for k, rows in enumerate(doc["points"]):
        mat = _complex_from_json(rows)
        if mat.shape != gen.shape:
            raise SchemaError(f"point {k} has shape {mat.shape}")
        pts.append(validate_point(mat, spec))
    inner = tuple(int(i) for i in doc.get("inner_region", [])) or None
    if quadrature is None:
        quadrature = QuadratureSpec(half_width=10.0, node_count=48,
                                    tail_tolerance=float("inf"))
    return StaticSystem(
        kernel=spec, group=group, quadrature=quadrature,
        measure=DiscreteMeasure(points=tuple(pts), weights=np.array(doc["weights"])),
        s_param=float(doc["s_param"]), inner_region=inner,
    )
