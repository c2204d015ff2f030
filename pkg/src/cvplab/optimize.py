"""Critical measures of the static action under the volume and trace
constraints, plus calibration of s and the two-parameter rescaling map.

The minimizer alternates an exponentiated-gradient step on the weights
(keeps positivity, renormalized to the fixed volume) with projected
gradient steps on the points: the gradient is assembled by central
differences over an orthonormal tangent basis, the step is retracted onto
the fixed-trace (n, n)-signature slice, and backtracking enforces a
monotone non-increase of the action across accepted steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernel import OperatorPoint, project_tangent, retract, validate_point
from .measure import DiscreteMeasure, ElResidual, StaticSystem, el_residual


def action(system: StaticSystem) -> float:
    """Full double sum sum_ij w_i w_j L_kappa(x_i, x_j), diagonal included."""
    if len(system.measure) == 0:
        return 0.0
    k = system.kappa_table()
    w = system.weights
    return float(w @ k @ w)


def calibrate_s(system: StaticSystem) -> StaticSystem:
    """Set s so that min over the support of ell_kappa is exactly zero."""
    if len(system.measure) == 0:
        return system
    k = system.kappa_table()
    return system.with_s(float(np.min(k @ system.weights)))


def rescale(system: StaticSystem, lam: float, sigma: float) -> StaticSystem:
    """Two-parameter rescaling: points x -> lam x, weights w -> sigma w.

    The Lagrange data transforms as c -> lam c and s -> sigma lam^4 s;
    kappa is dimensionless and unchanged."""
    if lam <= 0 or sigma <= 0:
        raise ValueError("rescaling parameters must be positive")
    from dataclasses import replace as dc_replace

    spec = system.kernel
    new_spec = dc_replace(
        spec,
        trace_constant=None if spec.trace_constant is None else lam * spec.trace_constant,
    )
    pts = tuple(
        OperatorPoint(matrix=lam * p.matrix, cached_spectrum=lam * p.cached_spectrum,
                      basis=p.basis, signed=lam * p.signed)
        for p in system.points
    )
    return StaticSystem(
        kernel=new_spec, group=system.group, quadrature=system.quadrature,
        measure=DiscreteMeasure(points=pts, weights=sigma * system.weights),
        s_param=sigma * lam**4 * system.s_param,
        inner_region=system.inner_region,
    )


def _canonical_hermitian_basis(f: int) -> list[np.ndarray]:
    """Fixed orthonormal Hermitian basis of the ambient f x f space."""
    out = []
    for a in range(f):
        e = np.zeros((f, f), dtype=complex)
        e[a, a] = 1.0
        out.append(e)
        for b in range(a + 1, f):
            e = np.zeros((f, f), dtype=complex)
            e[a, b] = e[b, a] = 1.0 / np.sqrt(2.0)
            out.append(e)
            e = np.zeros((f, f), dtype=complex)
            e[a, b] = 1j / np.sqrt(2.0)
            e[b, a] = -1j / np.sqrt(2.0)
            out.append(e)
    return out


def _tangent_basis(point: OperatorPoint, traceless: bool) -> list[np.ndarray]:
    """Orthonormal real basis of the tangent space at a fixed-rank point:
    Hermitian block on the range plus range/kernel cross terms, projected
    off the trace direction when the constraint is on."""
    q = point.basis
    f = point.dim
    r = q.shape[1]
    cols = [q[:, a] for a in range(r) if np.linalg.norm(q[:, a]) > 0.5]
    r = len(cols)
    basis: list[np.ndarray] = []
    for a in range(r):
        basis.append(np.outer(cols[a], cols[a].conj()))
        for b in range(a + 1, r):
            e = np.outer(cols[a], cols[b].conj())
            basis.append((e + e.conj().T) / np.sqrt(2.0))
            basis.append((1j * e + (1j * e).conj().T) / np.sqrt(2.0))
    qmat = np.stack(cols, axis=1)
    perp = np.eye(f) - qmat @ qmat.conj().T
    lamp, vecp = np.linalg.eigh(perp)
    kernel_cols = [vecp[:, i] for i in range(f) if lamp[i] > 0.5]
    for a in range(r):
        for k in kernel_cols:
            e = np.outer(k, cols[a].conj())
            basis.append((e + e.conj().T) / np.sqrt(2.0))
            basis.append((1j * e + (1j * e).conj().T) / np.sqrt(2.0))
    if traceless:
        tr_dir = qmat @ qmat.conj().T / np.sqrt(r)
        out = []
        for b in basis:
            b = b - np.trace(b @ tr_dir.conj().T).real * tr_dir
            nrm = np.linalg.norm(b)
            if nrm > 1e-12:
                out.append(b / nrm)
        basis = out
    return basis


@dataclass
class MinimizeConfig:
    iterations: int = 400
    weight_step: float = 0.5
    point_step: float = 0.2
    fd_step: float = 1e-5
    anneal_temperature: float = 0.0
    seed: int = 0
    tolerance: float = 1e-5
    backtracks: int = 8
    # quasi-Newton polish on an exactly-feasible chart (spin dimension 1);
    # the alternating descent alone stalls far from stationarity on these
    # ill-conditioned landscapes
    polish: bool = True
    polish_maxiter: int = 800


@dataclass
class MinimizeResult:
    system: StaticSystem
    residual: ElResidual
    action_history: list[float] = field(default_factory=list)
    rejected_steps: int = 0
    iterations_run: int = 0

    @property
    def action(self) -> float:
        return self.action_history[-1] if self.action_history else 0.0


def _kappa_row(system_like, engine, points, probe, kappa) -> np.ndarray:
    lag, bnd, _ = engine.probe_rows(probe[None], points)
    return (lag + kappa * bnd)[0]


def _point_gradients(engine, points, w, kappa, bases, fd_step):
    """Action gradients over the per-point tangent bases, one batched probe
    call for all (point, direction, sign) triples.

    Returns the coefficient arrays and the assembled gradient matrices."""
    probes, steps, slots = [], [], []
    for i, basis in enumerate(bases):
        xnorm = max(np.linalg.norm(points[i].matrix, 2), 1e-12)
        h = fd_step * xnorm
        for d in basis:
            probes.append(points[i].matrix + h * d)
            probes.append(points[i].matrix - h * d)
            steps.append(h)
            slots.append(i)
    lag, bnd, _ = engine.probe_rows(np.stack(probes), points)
    rows = (lag + kappa * bnd) @ w
    coeffs: list[np.ndarray] = [np.zeros(len(b)) for b in bases]
    fill = [0] * len(points)
    for m, i in enumerate(slots):
        c = (rows[2 * m] - rows[2 * m + 1]) / (2.0 * steps[m]) * (2.0 * w[i])
        coeffs[i][fill[i]] = c
        fill[i] += 1
    grads = []
    for i, basis in enumerate(bases):
        g = np.zeros_like(points[i].matrix)
        for c, d in zip(coeffs[i], basis):
            g = g + c * d
        grads.append(g)
    return coeffs, grads


def action_gradient(engine, points, w, kappa) -> list[np.ndarray]:
    """Exact ambient gradients dS/dx_i of the action, one per point.

    Writes the compression of x (U_t y U_t^-1) in the form linear in x,
    S_t = A^* X A diag(sy) with A = E_t (V^* Qy), and chains through the
    closed-form eigenvalues of the 2x2 (spin 1) or small (general) blocks;
    causal-boundary nodes (degenerate discriminant) carry zero sensitivity,
    matching the kink structure of the Lagrangian."""
    n_pts = len(points)
    f = engine.group.dim
    two_n = engine.two_n
    if two_n != 2:
        raise NotImplementedError("analytic action gradient requires spin 1")
    bb, sb = engine.point_data(points)          # (N, f, 2), (N, 2)
    phases = engine._phases                     # (T, f)
    tw = engine._w
    hvec = engine._hvec
    x_rot = np.stack([hvec.conj().T @ p.matrix @ hvec for p in points])
    a_jt = np.einsum("tf,jfb->jtfb", phases, bb)          # E_t V^*Q_j
    # S[i,j,t] = A_jt^* X_i A_jt diag(s_j)
    m = np.einsum("jtfa,ifg,jtgb->ijtab", a_jt.conj(), x_rot, a_jt,
                  optimize=True)
    s = m * sb[:, None, None, :]
    s00, s01 = s[..., 0, 0], s[..., 0, 1]
    s10, s11 = s[..., 1, 0], s[..., 1, 1]
    tr = s00 + s11
    det = s00 * s11 - s01 * s10
    sq = np.sqrt(tr * tr - 4.0 * det + 0j)
    lam_p = (tr + sq) / 2.0
    lam_m = (tr - sq) / 2.0
    a_p = np.abs(lam_p)
    a_m = np.abs(lam_m)
    # dk/da for k = (a_p - a_m)^2 / 2 + kappa (a_p + a_m)^2
    kp = (a_p - a_m) + 2.0 * kappa * (a_p + a_m)
    km = -(a_p - a_m) + 2.0 * kappa * (a_p + a_m)
    safe_p = np.where(a_p > 1e-300, a_p, 1.0)
    safe_m = np.where(a_m > 1e-300, a_m, 1.0)
    cp = np.where(a_p > 1e-300, kp * lam_p.conj() / safe_p, 0.0)
    cm = np.where(a_m > 1e-300, km * lam_m.conj() / safe_m, 0.0)
    sq_safe = np.where(np.abs(sq) > 1e-14 * (np.abs(tr) + 1.0), sq, np.inf)
    # holomorphic derivatives of lam_+/- w.r.t. the entries of S
    d_tr_p = (1.0 + (tr - 2.0 * s11) / sq_safe) / 2.0
    d_tr_m = (1.0 - (tr - 2.0 * s11) / sq_safe) / 2.0
    d11_p = (1.0 + (tr - 2.0 * s00) / sq_safe) / 2.0
    d11_m = (1.0 - (tr - 2.0 * s00) / sq_safe) / 2.0
    c00 = cp * d_tr_p + cm * d_tr_m
    c11 = cp * d11_p + cm * d11_m
    c01 = (cp - cm) * s10 / sq_safe
    c10 = (cp - cm) * s01 / sq_safe
    # dk = Re tr(C^T dS), dS = A^* dX A diag(s_j):
    # grad_X += A (diag(s_j) C^T) A^*
    # build C^T, then fold the eigenvalue diagonal: (diag(s) C^T)_{ab} = s_a C_{ba}
    cmat = np.empty_like(s)
    cmat[..., 0, 0] = c00
    cmat[..., 0, 1] = c10
    cmat[..., 1, 0] = c01
    cmat[..., 1, 1] = c11
    folded = sb[None, :, None, :, None] * cmat
    # weight by w_j and the quadrature weights, sum over j and t
    wt = np.einsum("j,t->jt", w, tw)
    grad_rot = np.einsum("jt,jtfa,ijtab,jtgb->ifg", wt, a_jt, folded,
                         a_jt.conj(), optimize=True)
    grads = []
    for i in range(n_pts):
        g = hvec @ grad_rot[i] @ hvec.conj().T
        g = g + g.conj().T           # Re tr(D G) with D Hermitian
        grads.append(w[i] * g)       # dS/dx_i = 2 w_i sum_j w_j D1 k
    return grads


def minimize(system: StaticSystem, config: MinimizeConfig | None = None) -> MinimizeResult:
    """Projected descent over weights and points at fixed total volume.

    The point update is a joint projected-gradient step over all points
    (gradient by central differences on the tangent bases, step retracted
    onto the fixed-trace signature slice) with a Barzilai-Borwein step
    guess and backtracking; accepted steps never increase the action.
    Infeasible steps (signature violated by every candidate) are rejected
    and counted."""
    cfg = config or MinimizeConfig()
    rng = np.random.default_rng(cfg.seed)
    spec = system.kernel
    engine = system.engine
    kappa = spec.kappa
    traceless = spec.trace_constant is not None
    n_pts = len(system.points)

    points: list[OperatorPoint] = list(system.points)
    w = system.weights.copy()
    vol = float(w.sum())

    def full_table(pts: list[OperatorPoint]) -> np.ndarray:
        lag, bnd, _ = engine.cross_tables(pts, pts, check_tail=False)
        return lag + kappa * bnd

    k_table = full_table(points)
    act = float(w @ k_table @ w)
    history = [act]
    rejected = 0
    eta = cfg.point_step
    eta_w = cfg.weight_step
    prev_x: np.ndarray | None = None
    prev_g: np.ndarray | None = None
    it = 0

    for it in range(1, cfg.iterations + 1):
        # -- weight step: exponentiated gradient at fixed volume
        g = 2.0 * (k_table @ w)
        center = float(w @ g) / vol
        scale = max(float(np.max(np.abs(g - center))), 1e-300)
        for _ in range(cfg.backtracks):
            trial = w * np.exp(-eta_w * (g - center) / scale)
            trial *= vol / trial.sum()
            new_act = float(trial @ k_table @ trial)
            if new_act <= act + 1e-15 * (1 + abs(act)):
                w = trial
                act = new_act
                eta_w = min(eta_w * 1.3, 4.0)
                break
            eta_w *= 0.5

        # -- joint point step
        if 2 * spec.spin_dimension == 2:
            raw = action_gradient(engine, points, w, kappa)
            grads = [project_tangent(g, p, traceless=traceless)
                     for g, p in zip(raw, points)]
        else:
            bases = [_tangent_basis(p, traceless) for p in points]
            _, grads = _point_gradients(engine, points, w, kappa, bases, cfg.fd_step)
        gnorm = float(np.sqrt(sum(np.linalg.norm(g) ** 2 for g in grads)))
        if cfg.anneal_temperature > 0 and gnorm > 0:
            temp = cfg.anneal_temperature * (1.0 - it / cfg.iterations)
            for i, p in enumerate(points):
                b = rng.normal(size=p.matrix.shape) + 1j * rng.normal(size=p.matrix.shape)
                noise = project_tangent(0.5 * (b + b.conj().T), p, traceless=traceless)
                grads[i] = grads[i] + temp * gnorm / max(n_pts, 1) * noise
        if gnorm > 0:
            x_now = np.stack([p.matrix for p in points])
            g_now = np.stack(grads)
            if prev_x is not None:
                # Barzilai-Borwein step from gauge-free matrix differences
                s_vec = x_now - prev_x
                y_vec = g_now - prev_g
                sy = float(np.real(np.vdot(s_vec, y_vec)))
                ss = float(np.real(np.vdot(s_vec, s_vec)))
                if sy > 0 and ss > 0:
                    bb = ss / sy
                    if np.isfinite(bb) and bb > 0:
                        eta = min(max(bb, 1e-7), 50.0)
            accepted = False
            for _ in range(cfg.backtracks):
                try:
                    trial_pts = [
                        retract(points[i].matrix - eta * grads[i], spec,
                                trace_to=spec.trace_constant)
                        for i in range(n_pts)
                    ]
                except Exception:
                    eta *= 0.5
                    continue
                if any(p.rank < 2 * spec.spin_dimension for p in trial_pts):
                    eta *= 0.5
                    continue
                trial_table = full_table(trial_pts)
                new_act = float(w @ trial_table @ w)
                if new_act <= act + 1e-15 * (1 + abs(act)):
                    prev_x = x_now
                    prev_g = g_now
                    points = trial_pts
                    k_table = trial_table
                    act = new_act
                    eta = min(eta * 1.6, 50.0)
                    accepted = True
                    break
                eta *= 0.5
            if not accepted:
                rejected += 1
                prev_x = None
                prev_g = None
        history.append(act)
        if it > 10:
            gscale = max(act / vol, 1e-300)
            grad_rel = gnorm / max(float(np.sum(w)), 1e-300) / gscale
            spread = (float(np.max(g)) - float(np.min(g))) / (2.0 * gscale)
            if grad_rel < cfg.tolerance and spread < cfg.tolerance:
                break

    final = StaticSystem(
        kernel=spec, group=system.group, quadrature=system.quadrature,
        measure=DiscreteMeasure(points=tuple(points), weights=w),
        inner_region=system.inner_region,
    )
    if cfg.polish and spec.spin_dimension == 1:
        polished, extra_hist = _polish_spin1(final, maxiter=cfg.polish_maxiter)
        if extra_hist and extra_hist[-1] <= history[-1] + 1e-12 * (1 + abs(history[-1])):
            final = polished
            history.extend(extra_hist)
        refined = _fd_stationarity_polish(final, fd_step=1e-4)
        if refined is not None:
            final = refined
            lag_f, bnd_f, _ = engine.cross_tables(list(final.points),
                                                  list(final.points), check_tail=False)
            kf = lag_f + kappa * bnd_f
            history.append(float(final.weights @ kf @ final.weights))
    final = calibrate_s(final)
    residual = el_residual(final)
    return MinimizeResult(system=final, residual=residual, action_history=history,
                          rejected_steps=rejected, iterations_run=it)


def _fd_stationarity_polish(system: StaticSystem, fd_step: float = 1e-4,
                            max_nfev: int = 4000) -> StaticSystem | None:
    """Drive the central-difference EL residual field itself to zero.

    The node-discretized Lagrangian is only piecewise smooth: quadrature
    nodes crossing causal boundaries put kinks into the action, and its
    minimizers sit in kink corners where one-sided slopes do not vanish.
    The EL residual, however, is defined through central differences at a
    fixed relative step, i.e. it measures stationarity of the implicitly
    h-mollified landscape.  This stage solves for a zero of that FD field
    (Gauss-Newton least squares over the same exactly-feasible chart as
    the quasi-Newton polish), which is the point the residual certifies.

    Spin dimension 1 only; returns None when not applicable."""
    from scipy.optimize import least_squares

    spec = system.kernel
    if spec.spin_dimension != 1:
        return None
    engine = system.engine
    f = system.group.dim
    n_pts = len(system.points)
    c = spec.trace_constant
    vol = system.measure.total_volume
    kappa = spec.kappa
    traceless = c is not None
    per_point = 4 * f + (1 if c is not None else 2)

    def frame_of(point: OperatorPoint):
        lam, vec = np.linalg.eigh(point.matrix)
        hi, lo = int(np.argmax(lam)), int(np.argmin(lam))
        return (np.stack([vec[:, hi], vec[:, lo]], axis=1),
                float(lam[hi]), float(-lam[lo]))

    x0 = np.empty(n_pts * per_point + n_pts)
    for i, p in enumerate(system.points):
        z, alpha, beta = frame_of(p)
        base = i * per_point
        x0[base:base + 2 * f] = z.real.T.ravel()
        x0[base + 2 * f:base + 4 * f] = z.imag.T.ravel()
        x0[base + 4 * f] = np.log(max(beta, 1e-12))
        if c is None:
            x0[base + 4 * f + 1] = np.log(max(alpha, 1e-12))
    x0[n_pts * per_point:] = np.log(system.weights)

    def chart_point(params: np.ndarray, i: int) -> OperatorPoint:
        base = i * per_point
        re = params[base:base + 2 * f].reshape(2, f).T
        im = params[base + 2 * f:base + 4 * f].reshape(2, f).T
        z = re + 1j * im
        q, r = np.linalg.qr(z)
        d = np.diagonal(r)
        q = q * (d.conj() / np.abs(d))
        beta = np.exp(params[base + 4 * f])
        alpha = (c + beta) if c is not None else np.exp(params[base + 4 * f + 1])
        signed = np.array([alpha, -beta])
        return OperatorPoint(matrix=(q * signed) @ q.conj().T,
                             cached_spectrum=signed, basis=q, signed=signed)

    def unpack(params):
        pts = [chart_point(params, i) for i in range(n_pts)]
        logits = params[n_pts * per_point:]
        shifted = np.exp(logits - np.max(logits))
        return pts, vol * shifted / shifted.sum()

    # gauge-free FD directions: canonical Hermitian basis, tangent-projected
    # per point inside the field (the projector QQ^* varies smoothly, unlike
    # eigh-derived bases whose degenerate columns jump under tiny changes)
    canon = _canonical_hermitian_basis(f)

    def residual_field(params: np.ndarray) -> np.ndarray:
        pts, w = unpack(params)
        lag, bnd, _ = engine.cross_tables(pts, pts, check_tail=False)
        k = lag + kappa * bnd
        ell_k = k @ w
        mean = float(w @ ell_k) / vol
        rows = [ell_k - mean]
        probes, steps = [], []
        for i, p in enumerate(pts):
            xnorm = max(np.linalg.norm(p.matrix, 2), 1e-12)
            rng_proj = p.basis @ p.basis.conj().T
            perp = np.eye(f) - rng_proj
            for d0 in canon:
                d = d0 - perp @ d0 @ perp
                if traceless:
                    d = d - (np.trace(d).real / 2.0) * rng_proj
                nrm = np.linalg.norm(d)
                if nrm < 1e-12:
                    d = np.zeros_like(d0)
                    h = fd_step * xnorm
                else:
                    d = d / nrm
                    h = fd_step * xnorm
                probes.append(p.matrix + h * d)
                probes.append(p.matrix - h * d)
                steps.append(h)
        lag_p, bnd_p, _ = engine.probe_rows(np.stack(probes), pts)
        vals = (lag_p + kappa * bnd_p) @ w
        fd_rows = [(vals[2 * m] - vals[2 * m + 1]) / (2.0 * steps[m])
                   for m in range(len(steps))]
        rows.append(np.array(fd_rows))
        return np.concatenate(rows)

    try:
        start_norm = float(np.max(np.abs(residual_field(x0))))
        sol = least_squares(residual_field, x0, method="trf",
                            max_nfev=max_nfev, xtol=1e-14, ftol=1e-14, gtol=1e-14)
        end_norm = float(np.max(np.abs(sol.fun)))
    except Exception:
        return None
    if not np.isfinite(end_norm) or end_norm >= start_norm:
        return None
    pts, w = unpack(sol.x)
    validated = tuple(validate_point(p.matrix, spec) for p in pts)
    return StaticSystem(
        kernel=spec, group=system.group, quadrature=system.quadrature,
        measure=DiscreteMeasure(points=validated, weights=w),
        inner_region=system.inner_region,
    )


def _polish_spin1(system: StaticSystem, maxiter: int = 800
                  ) -> tuple[StaticSystem, list[float]]:
    """Quasi-Newton refinement on an exactly-feasible chart for n = 1.

    Weights are vol * softmax(theta); each point is a Q Lambda Q^* frame
    with Q from a QR factorization (gauge-fixed to positive diagonal) and
    eigenvalues (c + beta, -beta), beta = exp(v) > 0, so the trace and
    signature constraints hold identically in the chart."""
    from scipy.optimize import minimize as scipy_minimize

    spec = system.kernel
    engine = system.engine
    f = system.group.dim
    n_pts = len(system.points)
    c = spec.trace_constant
    vol = system.measure.total_volume
    kappa = spec.kappa

    def frame_of(point: OperatorPoint) -> tuple[np.ndarray, float, float]:
        lam, vec = np.linalg.eigh(point.matrix)
        hi, lo = int(np.argmax(lam)), int(np.argmin(lam))
        z = np.stack([vec[:, hi], vec[:, lo]], axis=1)
        return z, float(lam[hi]), float(-lam[lo])

    # pack: per point Re Z (f*2), Im Z (f*2), log beta [, log alpha]; then
    # weight logits
    per_point = 4 * f + (1 if c is not None else 2)
    x0 = np.empty(n_pts * per_point + n_pts)
    for i, p in enumerate(system.points):
        z, alpha, beta = frame_of(p)
        base = i * per_point
        x0[base:base + 2 * f] = z.real.T.ravel()
        x0[base + 2 * f:base + 4 * f] = z.imag.T.ravel()
        x0[base + 4 * f] = np.log(max(beta, 1e-12))
        if c is None:
            x0[base + 4 * f + 1] = np.log(max(alpha, 1e-12))
    x0[n_pts * per_point:] = np.log(system.weights)

    def chart_point(params: np.ndarray, i: int) -> OperatorPoint:
        base = i * per_point
        re = params[base:base + 2 * f].reshape(2, f).T
        im = params[base + 2 * f:base + 4 * f].reshape(2, f).T
        z = re + 1j * im
        q, r = np.linalg.qr(z)
        d = np.diagonal(r)
        q = q * (d.conj() / np.abs(d))
        beta = np.exp(params[base + 4 * f])
        alpha = (c + beta) if c is not None else np.exp(params[base + 4 * f + 1])
        signed = np.array([alpha, -beta])
        mat = (q * signed) @ q.conj().T
        return OperatorPoint(matrix=mat, cached_spectrum=signed, basis=q,
                             signed=signed)

    def unpack(params: np.ndarray) -> tuple[list[OperatorPoint], np.ndarray]:
        pts = [chart_point(params, i) for i in range(n_pts)]
        logits = params[n_pts * per_point:]
        shifted = np.exp(logits - np.max(logits))
        w = vol * shifted / shifted.sum()
        return pts, w

    def value_and_grad(params: np.ndarray) -> tuple[float, np.ndarray]:
        pts, w = unpack(params)
        lag, bnd, _ = engine.cross_tables(pts, pts, check_tail=False)
        k = lag + kappa * bnd
        val = float(w @ k @ w)
        gmats = action_gradient(engine, pts, w, kappa)
        grad = np.zeros_like(params)
        eps = 1e-7
        # chart Jacobian by cheap finite differences of the chart map only
        for i in range(n_pts):
            base = i * per_point
            for m in range(per_point):
                pp = params.copy()
                pp[base + m] += eps
                pm = params.copy()
                pm[base + m] -= eps
                dx = (chart_point(pp, i).matrix - chart_point(pm, i).matrix) / (2 * eps)
                grad[base + m] = float(np.real(np.vdot(dx, gmats[i])))
        gw = 2.0 * (k @ w)
        inner = float(np.sum(gw * w))
        grad[n_pts * per_point:] = w * gw - w * inner / vol
        return val, grad

    result = scipy_minimize(
        value_and_grad, x0, method="L-BFGS-B", jac=True,
        options={"maxiter": maxiter, "maxfun": 4 * maxiter,
                 "ftol": 1e-18, "gtol": 1e-12},
    )
    pts, w = unpack(result.x)
    validated = tuple(validate_point(p.matrix, spec) for p in pts)
    polished = StaticSystem(
        kernel=spec, group=system.group, quadrature=system.quadrature,
        measure=DiscreteMeasure(points=validated, weights=w),
        inner_region=system.inner_region,
    )
    return polished, [float(result.fun)]
