"""One-parameter unitary group action and the static (time-integrated)
Lagrangian, boundedness function and kappa-Lagrangian on quotient points.

Every quotient point is stored as its t = 0 representative.  The time
integrals run over [-T, T] with composite Gauss-Legendre panels mirrored
about t = 0; a geometric fit to the outermost panels gives a tail bound
that must pass the configured tolerance for a value to be accepted.

The StaticKernel engine batches the t-orbit products: with the generator
eigendecomposition H = V diag(h) V^*, the compression of x (U_t y U_t^-1)
needs only the 2n x 2n matrices C_t = (Qx^* V) diag(e^{-i t h}) (V^* Qy),
so no f x f exponential is ever formed per node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernel import (
    DimensionMismatch,
    KernelSpec,
    OperatorPoint,
    _eigvals,
    lagrangian_from_moduli,
    validate_point,
    weight_sq_from_moduli,
)
from .quadrature import QuadratureError, gauss_legendre, tail_from_panels_batch

_GL_ORDER = 8


class TailToleranceError(QuadratureError):
    """The decay-fit tail of a t-integral exceeds the allowed tolerance."""


def _combine_tails(lag_tail: np.ndarray, bnd_tail: np.ndarray, kappa: float) -> np.ndarray:
    """Tail of the kappa-Lagrangian; avoids 0 * inf when kappa vanishes."""
    if kappa == 0.0:
        return lag_tail
    return lag_tail + kappa * bnd_tail


@dataclass(frozen=True)
class StaticGroup:
    """Hermitian generator H of the unitary group U_t = exp(-i t H)."""

    generator: np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.generator, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DimensionMismatch(f"generator must be square, got {h.shape}")
        if np.linalg.norm(h - h.conj().T, 2) > 1e-10 * max(1.0, np.linalg.norm(h, 2)):
            raise ValueError("generator must be Hermitian")
        object.__setattr__(self, "generator", 0.5 * (h + h.conj().T))

    @cached_property
    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        lam, vec = np.linalg.eigh(self.generator)
        return lam, vec

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    def unitary(self, t: float) -> np.ndarray:
        lam, vec = self.eig
        return (vec * np.exp(-1j * t * lam)) @ vec.conj().T


@dataclass(frozen=True)
class QuadratureSpec:
    """Discretization of the t-integrals.

    half_width      T of the window [-T, T].
    node_count      nodes per half-axis (composite panels of order 8).
    tail_tolerance  maximum admissible decay-fit tail estimate.
    """

    half_width: float
    node_count: int = 48
    tail_tolerance: float = 1e-6

    def __post_init__(self) -> None:
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.node_count < 3:
            raise ValueError("node_count must be at least 3")
        if self.tail_tolerance <= 0:
            raise ValueError("tail_tolerance must be positive")

    @property
    def panels(self) -> int:
        return max(2, self.node_count // _GL_ORDER)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric node/weight arrays on [-T, T], panel-contiguous."""
        edges = np.linspace(0.0, self.half_width, self.panels + 1)
        xs, ws = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            x, w = gauss_legendre(lo, hi, _GL_ORDER)
            xs.append(x)
            ws.append(w)
        pos = np.concatenate(xs)
        wp = np.concatenate(ws)
        return np.concatenate([-pos[::-1], pos]), np.concatenate([wp[::-1], wp])


def orbit_point(x: OperatorPoint, t: float, group: StaticGroup,
                spec: KernelSpec) -> OperatorPoint:
    """U_t x U_t^{-1}; the spectrum is preserved by construction."""
    if x.dim != group.dim:
        raise DimensionMismatch(f"point dim {x.dim} vs group dim {group.dim}")
    u = group.unitary(t)
    return validate_point(u @ x.matrix @ u.conj().T, spec)


@dataclass(frozen=True)
class PairValue:
    """Time-integrated Lagrangian and boundedness values for one pair."""

    lagrangian: float
    boundedness: float
    tail: float
    refinement_gap: float = 0.0

    def kappa_value(self, kappa: float) -> float:
        return self.lagrangian + kappa * self.boundedness


class StaticKernel:
    """Batched evaluator of the static kernel over a fixed point set.

    Nodes of one integral are evaluated together; sums over nodes use
    numpy's pairwise reduction in a fixed order, so results are
    reproducible bit-for-bit.
    """

    def __init__(self, spec: KernelSpec, group: StaticGroup,
                 quadrature: QuadratureSpec):
        self.spec = spec
        self.group = group
        self.quadrature = quadrature
        self._t, self._w = quadrature.nodes()
        lam, vec = group.eig
        self._hlam = lam
        self._hvec = vec
        # phases[k, a] = exp(-i t_k h_a)
        self._phases = np.exp(-1j * np.outer(self._t, lam))

    @property
    def two_n(self) -> int:
        return 2 * self.spec.spin_dimension

    def point_data(self, points: list[OperatorPoint]) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (N, f, 2n) eigenbases rotated into the H-eigenbasis and
        the matching (N, 2n) signed eigenvalues."""
        basis = np.stack([self._hvec.conj().T @ p.basis for p in points])
        signed = np.stack([p.signed for p in points])
        return basis, signed

    def _moduli_cross(self, ba, sa, bb, sb) -> np.ndarray:
        """|eigenvalues| of the compressed products, shape (Na, Nb, T, 2n)."""
        # C[i,j,k] = (V^*Qa_i)^* E_k (V^*Qb_j);  S = C^* diag(sa) C diag(sb)
        c = np.einsum("ifa,kf,jfb->ijkab", ba.conj(), self._phases, bb,
                      optimize=True)
        s = np.einsum("ijkca,ic,ijkcb,jb->ijkab", c.conj(), sa, c, sb,
                      optimize=True)
        return np.abs(_eigvals(s))

    def _integrate(self, integrand: np.ndarray,
                   want_tails: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
        """Weighted t-sum plus the per-pair tail estimate.

        integrand has shape (..., T); panel sums are recovered by reshaping
        the node axis, and the outer positive-side panels feed the fit.
        """
        values = integrand @ self._w
        if not want_tails:
            return values, None
        panels = self.quadrature.panels
        blocks = (integrand * self._w).reshape(integrand.shape[:-1] + (2 * panels, _GL_ORDER))
        sums = blocks.sum(axis=-1)
        flat = sums.reshape(-1, 2 * panels)
        neg = tail_from_panels_batch(flat[:, :panels][:, ::-1])
        pos = tail_from_panels_batch(flat[:, panels:])
        return values, (neg + pos).reshape(integrand.shape[:-1])

    def cross_tables(self, points_a: list[OperatorPoint],
                     points_b: list[OperatorPoint],
                     check_tail: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Matrices (L, T_bound, tail) of static values for all pairs."""
        ba, sa = self.point_data(points_a)
        bb, sb = self.point_data(points_b)
        moduli = self._moduli_cross(ba, sa, bb, sb)
        lag = lagrangian_from_moduli(moduli, self.spec.spin_dimension)
        bound = weight_sq_from_moduli(moduli)
        lag_v, lag_tail = self._integrate(lag)
        bnd_v, bnd_tail = self._integrate(bound)
        tails = _combine_tails(lag_tail, bnd_tail, self.spec.kappa)
        if check_tail and np.any(tails > self.quadrature.tail_tolerance):
            worst = float(np.max(tails))
            raise TailToleranceError(
                f"tail estimate {worst:.3e} exceeds tolerance "
                f"{self.quadrature.tail_tolerance:.3e}"
            )
        return lag_v, bnd_v, tails

    def probe_rows(self, probes: np.ndarray, points: list[OperatorPoint],
                   check_tail: bool = False, want_tails: bool = False
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        """Static (L, T_bound, tail) of arbitrary Hermitian probe matrices
        against prepared points, shape (P, N).

        Probes need not satisfy the signature constraint: the compression
        runs through the point side, which always has rank <= 2n.  Tails
        are skipped by default (probe rows sit in derivative hot loops).
        """
        probes = np.asarray(probes, dtype=complex)
        if probes.ndim == 2:
            probes = probes[None]
        bb, sb = self.point_data(points)
        # rotate probes into the H-eigenbasis: X -> V^* X V
        xr = np.einsum("fa,pfg,gb->pab", self._hvec.conj(), probes, self._hvec,
                       optimize=True)
        # M[p,j,k] = (E_k V^*Qb_j)^* X_p (E_k V^*Qb_j);  S = M diag(sb)
        eb = np.einsum("kf,jfb->jkfb", self._phases, bb, optimize=True)
        m = np.einsum("jkfa,pfg,jkgb->pjkab", eb.conj(), xr, eb, optimize=True)
        s = m * sb[None, :, None, None, :]
        moduli = np.abs(_eigvals(s))
        lag = lagrangian_from_moduli(moduli, self.spec.spin_dimension)
        bound = weight_sq_from_moduli(moduli)
        want = want_tails or check_tail
        lag_v, lag_tail = self._integrate(lag, want_tails=want)
        bnd_v, bnd_tail = self._integrate(bound, want_tails=want)
        tails = _combine_tails(lag_tail, bnd_tail, self.spec.kappa) if want else None
        if check_tail and np.any(tails > self.quadrature.tail_tolerance):
            raise TailToleranceError(
                f"tail estimate {float(np.max(tails)):.3e} exceeds tolerance "
                f"{self.quadrature.tail_tolerance:.3e}"
            )
        return lag_v, bnd_v, tails

    def pair_value(self, x: OperatorPoint, y: OperatorPoint,
                   check_tail: bool = True) -> PairValue:
        lag, bnd, tail = self.cross_tables([x], [y], check_tail=check_tail)
        return PairValue(lagrangian=float(lag[0, 0]), boundedness=float(bnd[0, 0]),
                         tail=float(tail[0, 0]))


def _halved(quadrature: QuadratureSpec) -> QuadratureSpec:
    return QuadratureSpec(half_width=quadrature.half_width,
                          node_count=max(3, quadrature.node_count // 2),
                          tail_tolerance=quadrature.tail_tolerance)


def _pair(x, y, group, quadrature, spec, check_tail=True) -> PairValue:
    engine = StaticKernel(spec, group, quadrature)
    return engine.pair_value(x, y, check_tail=check_tail)


def static_lagrangian(x: OperatorPoint, y: OperatorPoint, group: StaticGroup,
                      quadrature: QuadratureSpec, spec: KernelSpec) -> float:
    """Integral over t of L(x, U_t y U_t^{-1}); symmetric in (x, y).

    Raises TailToleranceError when the decay fit of the outermost panels
    does not certify integrability (e.g. a central generator).
    """
    value = _pair(x, y, group, quadrature, spec)
    if value.tail > quadrature.tail_tolerance:
        raise TailToleranceError(
            f"tail estimate {value.tail:.3e} exceeds tolerance "
            f"{quadrature.tail_tolerance:.3e}"
        )
    return value.lagrangian


def static_boundedness(x: OperatorPoint, y: OperatorPoint, group: StaticGroup,
                       quadrature: QuadratureSpec, spec: KernelSpec) -> float:
    """Integral over t of |x (U_t y U_t^{-1})|^2; symmetric, nonnegative."""
    value = _pair(x, y, group, quadrature, spec)
    if value.tail > quadrature.tail_tolerance:
        raise TailToleranceError(
            f"tail estimate {value.tail:.3e} exceeds tolerance "
            f"{quadrature.tail_tolerance:.3e}"
        )
    return value.boundedness


def static_kappa_lagrangian(x: OperatorPoint, y: OperatorPoint, group: StaticGroup,
                            quadrature: QuadratureSpec, spec: KernelSpec,
                            kappa: float | None = None) -> float:
    """static_lagrangian + kappa * static_boundedness."""
    value = _pair(x, y, group, quadrature, spec)
    if value.tail > quadrature.tail_tolerance:
        raise TailToleranceError(
            f"tail estimate {value.tail:.3e} exceeds tolerance "
            f"{quadrature.tail_tolerance:.3e}"
        )
    k = spec.kappa if kappa is None else kappa
    return value.kappa_value(k)


def refinement_gap(x: OperatorPoint, y: OperatorPoint, group: StaticGroup,
                   quadrature: QuadratureSpec, spec: KernelSpec) -> float:
    """|value - value at halved node_count| for the kappa-Lagrangian; part of
    the reported error estimate."""
    full = _pair(x, y, group, quadrature, spec, check_tail=False)
    half = _pair(x, y, group, _halved(quadrature), spec, check_tail=False)
    return abs(full.kappa_value(spec.kappa) - half.kappa_value(spec.kappa))
