"""Operator points and the pointwise causal Lagrangians.

A point is a self-adjoint matrix with at most n positive and at most n
negative eigenvalues.  The Lagrangian of a pair is built from the complex
eigenvalues of the (non-symmetric) product xy, which has rank at most 2n.
Eigenvalues of products are therefore computed on 2n-dimensional
compressions rather than on the full ambient matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class KernelError(ValueError):
    """Base class for invariant violations of operator points."""


class DimensionMismatch(KernelError):
    pass


class HermiticityViolation(KernelError):
    pass


class SignatureViolation(KernelError):
    pass


class TraceViolation(KernelError):
    pass


class EigensolverError(RuntimeError):
    """Eigenvalue computation failed to converge."""


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of the pointwise kernel.

    spin_dimension  n: at most n positive / n negative eigenvalues per point.
    kappa           multiplier of the boundedness term |xy|^2.
    trace_constant  fixed local trace c; None disables the trace constraint.
    signature_tolerance  absolute rank cutoff; None means 1e-9 * ||x||.
    """

    spin_dimension: int
    kappa: float = 0.0
    trace_constant: float | None = None
    signature_tolerance: float | None = None

    def __post_init__(self) -> None:
        if self.spin_dimension < 1:
            raise ValueError("spin_dimension must be >= 1")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.trace_constant is not None and self.trace_constant == 0:
            raise ValueError("trace_constant must be nonzero when set")
        if self.signature_tolerance is not None and self.signature_tolerance < 0:
            raise ValueError("signature_tolerance must be nonnegative")

    def tolerance_for(self, matrix: np.ndarray) -> float:
        if self.signature_tolerance is not None:
            return self.signature_tolerance
        scale = float(np.linalg.norm(matrix, 2)) if matrix.size else 0.0
        return 1e-9 * max(scale, 1e-300)


@dataclass(frozen=True)
class OperatorPoint:
    """A validated point: the matrix plus its cached spectral data.

    `basis` holds the eigenvectors of the up-to-2n nonzero eigenvalues
    (zero-padded columns when the rank is lower), `signed` the matching
    real eigenvalues.  These drive all product-eigenvalue compressions.
    """

    matrix: np.ndarray
    cached_spectrum: np.ndarray
    basis: np.ndarray = field(repr=False)
    signed: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.signed))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues of a product xy, padded with zeros to length 2n."""

    eigenvalues: np.ndarray

    @property
    def moduli(self) -> np.ndarray:
        return np.abs(self.eigenvalues)


def validate_point(matrix: np.ndarray, spec: KernelSpec) -> OperatorPoint:
    """Check the point invariants and cache the spectral decomposition.

    Raises HermiticityViolation, SignatureViolation or TraceViolation with
    the violated quantity in the message.
    """
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    tol = spec.tolerance_for(a)
    herm_gap = float(np.linalg.norm(a - a.conj().T, 2)) if a.size else 0.0
    if herm_gap > tol:
        raise HermiticityViolation(
            f"matrix is not Hermitian: ||A - A^*|| = {herm_gap:.3e} > {tol:.3e}"
        )
    a = 0.5 * (a + a.conj().T)
    try:
        lam, vec = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(f"eigh failed: {exc}") from exc
    n = spec.spin_dimension
    n_pos = int(np.count_nonzero(lam > tol))
    n_neg = int(np.count_nonzero(lam < -tol))
    if n_pos > n or n_neg > n:
        raise SignatureViolation(
            f"signature ({n_pos},{n_neg}) exceeds the allowed ({n},{n})"
        )
    if spec.trace_constant is not None:
        tr = float(np.trace(a).real)
        if abs(tr - spec.trace_constant) > max(tol, 1e-9 * abs(spec.trace_constant)):
            raise TraceViolation(
                f"trace {tr:.12g} differs from the constant {spec.trace_constant:.12g}"
            )
    order = np.argsort(-np.abs(lam))
    keep = [i for i in order if abs(lam[i]) > tol][: 2 * n]
    basis = np.zeros((a.shape[0], 2 * n), dtype=complex)
    signed = np.zeros(2 * n)
    for slot, i in enumerate(keep):
        basis[:, slot] = vec[:, i]
        signed[slot] = lam[i]
    return OperatorPoint(matrix=a, cached_spectrum=lam, basis=basis, signed=signed)


def product_eigenvalues(x: OperatorPoint, y: OperatorPoint, spec: KernelSpec) -> np.ndarray:
    """Complex eigenvalues of xy on the 2n-dimensional compression.

    The nonzero spectrum of xy equals that of G^* Lx G Ly with
    G = Qx^* Qy, which is exact because rank(xy) <= 2n.
    """
    if x.dim != y.dim:
        raise DimensionMismatch(f"ambient dimensions differ: {x.dim} vs {y.dim}")
    g = x.basis.conj().T @ y.basis
    small = (g.conj().T * x.signed) @ g * y.signed
    lam = _eigvals(small)
    out = np.zeros(2 * spec.spin_dimension, dtype=complex)
    out[: len(lam)] = lam
    return out


def _eigvals(a: np.ndarray) -> np.ndarray:
    """Eigenvalues of a small dense non-Hermitian matrix (batched-friendly)."""
    m = a.shape[-1]
    if m == 1:
        return a[..., 0, 0]
    if m == 2:
        tr = a[..., 0, 0] + a[..., 1, 1]
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        sq = np.sqrt(tr * tr - 4.0 * det + 0j)
        return np.stack([(tr + sq) / 2.0, (tr - sq) / 2.0], axis=-1)
    try:
        return np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(f"eigvals failed: {exc}") from exc


def eigen_product(x: OperatorPoint, y: OperatorPoint, spec: KernelSpec) -> SpectralData:
    """Spectral data of the operator product xy (padded to 2n entries)."""
    return SpectralData(eigenvalues=product_eigenvalues(x, y, spec))


def lagrangian_from_moduli(moduli: np.ndarray, n: int) -> np.ndarray:
    """(1/4n) sum_{i,j} (|l_i| - |l_j|)^2 written as sum a^2 - (sum a)^2 / 2n.

    Tiny negative round-off is clamped to zero; anything beyond round-off
    would indicate a broken identity and is asserted against upstream.
    """
    a = np.asarray(moduli)
    val = np.sum(a * a, axis=-1) - np.sum(a, axis=-1) ** 2 / (2.0 * n)
    return np.maximum(val, 0.0)


def weight_sq_from_moduli(moduli: np.ndarray) -> np.ndarray:
    """Squared spectral weight |xy|^2 = (sum_j |l_j|)^2."""
    return np.sum(np.asarray(moduli), axis=-1) ** 2


def causal_lagrangian(x: OperatorPoint, y: OperatorPoint, spec: KernelSpec) -> float:
    """L(x,y) = (1/4n) sum_{i,j} (|l_i| - |l_j|)^2, nonnegative and symmetric."""
    data = eigen_product(x, y, spec)
    return float(lagrangian_from_moduli(data.moduli, spec.spin_dimension))


def spectral_weight_sq(x: OperatorPoint, y: OperatorPoint, spec: KernelSpec) -> float:
    """|xy|^2 with |xy| the sum of the eigenvalue moduli of the product."""
    data = eigen_product(x, y, spec)
    return float(weight_sq_from_moduli(data.moduli))


def kappa_lagrangian(x: OperatorPoint, y: OperatorPoint, spec: KernelSpec) -> float:
    """L(x,y) + kappa |xy|^2."""
    data = eigen_product(x, y, spec)
    a = data.moduli
    return float(
        lagrangian_from_moduli(a, spec.spin_dimension)
        + spec.kappa * weight_sq_from_moduli(a)
    )


def project_tangent(direction: np.ndarray, point: OperatorPoint,
                    traceless: bool = False) -> np.ndarray:
    """Project a Hermitian direction onto the tangent space of the fixed-rank
    manifold at `point` (kills the block orthogonal to the range), optionally
    onto the fixed-trace slice as well."""
    d = np.asarray(direction, dtype=complex)
    d = 0.5 * (d + d.conj().T)
    q = point.basis
    rng_proj = q @ q.conj().T
    perp = np.eye(point.dim) - rng_proj
    d = d - perp @ d @ perp
    if traceless:
        r = max(point.rank, 1)
        d = d - (np.trace(d).real / r) * rng_proj
    return d


def retract(matrix: np.ndarray, spec: KernelSpec,
            trace_to: float | None = None) -> OperatorPoint:
    """Nearest valid point: keep the n most positive / n most negative
    eigenvalues, drop the rest, optionally shift the kept ones to restore
    the trace.  Used for finite-difference probes and optimizer steps."""
    a = np.asarray(matrix, dtype=complex)
    a = 0.5 * (a + a.conj().T)
    lam, vec = np.linalg.eigh(a)
    n = spec.spin_dimension
    order_desc = np.argsort(-lam)
    pos = [i for i in order_desc[:n] if lam[i] > 0]
    order_asc = np.argsort(lam)
    neg = [i for i in order_asc[:n] if lam[i] < 0]
    keep = pos + neg
    kept = lam[keep]
    if trace_to is not None and len(kept):
        kept = kept + (trace_to - kept.sum()) / len(kept)
    q = vec[:, keep]
    x = (q * kept) @ q.conj().T if len(keep) else np.zeros_like(a)
    from dataclasses import replace as dc_replace

    # the trace constraint is enforced only when a target trace is given;
    # probe retractions legitimately live off the trace slice
    return validate_point(x, dc_replace(spec, trace_constant=trace_to))
