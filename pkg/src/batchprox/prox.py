"""Regularized model subproblem solvers.

Each outer iteration minimizes ``model(x) + ||x - center||^2 / (2 alpha)``.
For the linear model this is a (projected) gradient step; for the truncated
model it is the clipped Polyak step; for the average-of-truncated model it
reduces to a box-constrained QP in the dual; the full proximal model gets an
exact per-loss solver (linear system, box QP, or damped Newton).

Dual of the average-of-truncated subproblem: with per-sample gradients
G = [g_1 ... g_m] and shifted values v_i = F(x;s_i) - inf F(.;s_i),

    maximize  -(alpha/2) lam' G'G lam + lam' v   s.t.  0 <= lam <= 1/m,

and the primal update is x+ = center - alpha * G lam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry, models, problems


class InnerSolveError(RuntimeError):
    """An inner solver failed to reach its tolerance within budget."""


class DegenerateSampleError(ValueError):
    """Zero model subgradient with value above the lower bound."""


@dataclass(eq=False)
class BoxQP:
    Q: np.ndarray
    v: np.ndarray
    alpha: float
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), self.v.shape).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), self.v.shape).copy()
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if np.any(self.lo > self.hi):
            raise ValueError("box bounds must satisfy lo <= hi")

    def objective(self, lam: np.ndarray) -> float:
        return float(-0.5 * self.alpha * lam @ self.Q @ lam + lam @ self.v)

    def kkt_residual(self, lam: np.ndarray) -> float:
        """Componentwise stationarity residual of the box-constrained maximum."""
        g = self.v - self.alpha * (self.Q @ lam)
        at_lo = lam <= self.lo
        at_hi = lam >= self.hi
        res = np.abs(g)
        res[at_lo] = np.maximum(g[at_lo], 0.0)
        res[at_hi] = np.maximum(-g[at_hi], 0.0)
        return float(res.max()) if res.size else 0.0


@dataclass
class BoxQPInfo:
    sweeps: int
    residual: float
    converged: bool


@dataclass(eq=False)
class ProxResult:
    x_next: np.ndarray
    lam: np.ndarray | None = None
    duality_gap: float = 0.0
    inner_iterations: int = 0
    converged: bool = True


def solve_box_qp(qp: BoxQP, tol: float = 1e-9, max_sweeps: int = 20_000):
    """Cyclic coordinate ascent with exact clipped 1-d maximization.

    Falls back to projected gradient with diminishing steps when a diagonal
    entry of Q vanishes (the 1-d subproblems are then linear).  Returns
    (lam, BoxQPInfo); non-convergence is flagged, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = qp.v.size
    lam = np.clip(np.zeros(m), qp.lo, qp.hi)
    if m == 0:
        return lam, BoxQPInfo(0, 0.0, True)
    diag = np.diag(qp.Q).copy()
    if np.any(diag <= 0.0):
        return _box_qp_projected_gradient(qp, lam, tol, max_sweeps)

    q = qp.Q @ lam  # maintained as Q lam
    a = qp.alpha
    for sweep in range(1, max_sweeps + 1):
        for i in range(m):
            li = lam[i]
            target = (qp.v[i] - a * (q[i] - diag[i] * li)) / (a * diag[i])
            new = min(max(target, qp.lo[i]), qp.hi[i])
            if new != li:
                q += qp.Q[:, i] * (new - li)
                lam[i] = new
        res = qp.kkt_residual(lam)
        if res <= tol:
            return lam, BoxQPInfo(sweep, res, True)
    return lam, BoxQPInfo(max_sweeps, qp.kkt_residual(lam), False)


def _box_qp_projected_gradient(qp: BoxQP, lam, tol, max_iters):
    # Base step from the curvature scale; diminishing 1/sqrt(t) decay.
    row_scale = float(np.abs(qp.Q).sum(axis=1).max())
    s0 = 1.0 / (qp.alpha * row_scale + 1.0)
    best = lam.copy()
    best_res = qp.kkt_residual(lam)
    for t in range(1, max_iters + 1):
        g = qp.v - qp.alpha * (qp.Q @ lam)
        lam = np.clip(lam + (s0 / math.sqrt(t)) * g, qp.lo, qp.hi)
        res = qp.kkt_residual(lam)
        if res < best_res:
            best, best_res = lam.copy(), res
        if res <= tol:
            return lam, BoxQPInfo(t, res, True)
    return best, BoxQPInfo(max_iters, best_res, False)


# ---------------------------------------------------------------------------
# Model steps


def linear_step(h, dom, x_k, gbar, alpha):
    """Linear-model prox step; delegates to the mirror machinery."""
    return geometry.mirror_linear_step(h, dom, x_k, gbar, alpha)


def truncated_step(x_k, fbar, gbar, lam_lb, alpha):
    """Clipped Polyak step x - min{alpha, (fbar - lam_lb)/||g||^2} g.

    ``alpha`` may be ``inf`` (pure Polyak stepping).  A zero gradient is
    only admissible when the value already sits at the lower bound.
    """
    if not alpha > 0:
        raise ValueError("stepsize must be positive")
    x_k = np.asarray(x_k, dtype=float)
    gbar = np.asarray(gbar, dtype=float)
    gap = fbar - lam_lb
    gsq = float(gbar @ gbar)
    if gsq == 0.0:
        if gap > 1e-12 * (1.0 + abs(fbar)):
            raise DegenerateSampleError(
                "zero model gradient with value above the lower bound"
            )
        return x_k.copy()
    t = min(alpha, max(gap, 0.0) / gsq)
    return x_k - t * gbar


def pam_step(x_k, model: models.BatchModel, alpha, tol: float = 1e-9) -> ProxResult:
    """Prox step on the average of per-sample truncated models via the dual
    box QP over [0, 1/m]."""
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("pam_step needs a finite positive stepsize")
    x_k = np.asarray(x_k, dtype=float)
    G = model.grads
    m = model.m
    if m == 1:
        # Single truncated piece: the dual collapses to the Polyak step.
        g = G[:, 0]
        val = model.values[0] + float(g @ (x_k - model.anchor))
        x_next = truncated_step(x_k, val, g, model.infs[0], alpha)
        gsq = float(g @ g)
        lam = np.array([min(max(val - model.infs[0], 0.0) / (alpha * gsq), 1.0)
                        if gsq > 0 else 0.0])
        return ProxResult(x_next, lam=lam, duality_gap=0.0, inner_iterations=0)
    # Affine piece values at the prox center, relative to the per-sample floor.
    shift = G.T @ (x_k - model.anchor)
    c = model.values - model.infs + shift
    qp = BoxQP(Q=G.T @ G, v=c, alpha=alpha, lo=np.zeros(m), hi=np.full(m, 1.0 / m))
    lam, info = solve_box_qp(qp, tol=tol)
    x_next = x_k - alpha * (G @ lam)

    d = x_next - x_k
    primal = float(np.maximum(c + G.T @ d, 0.0).mean()) + float(d @ d) / (2 * alpha)
    gap = primal - qp.objective(lam)
    if not info.converged:
        raise InnerSolveError(
            f"box QP did not converge (residual {info.residual:.3e})"
        )
    return ProxResult(x_next, lam=lam, duality_gap=gap,
                      inner_iterations=info.sweeps, converged=True)


def prox_step_linreg(x_k, A_b, b_b, alpha) -> np.ndarray:
    """Exact minimizer of (1/2m)||Ax - b||^2 + ||x - x_k||^2/(2 alpha).

    Solves the m x m system (Woodbury) when m < n, else the n x n normal
    system; the operator I/alpha + A'A/m is always positive definite.
    """
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("prox_step_linreg needs a finite positive stepsize")
    x_k = np.asarray(x_k, dtype=float)
    A_b = np.atleast_2d(np.asarray(A_b, dtype=float))
    b_b = np.atleast_1d(np.asarray(b_b, dtype=float))
    m, n = A_b.shape
    c = 1.0 / alpha
    rhs = c * x_k + A_b.T @ b_b / m
    if m < n:
        u = np.linalg.solve(m * c * np.eye(m) + A_b @ A_b.T, A_b @ rhs)
        x = (rhs - A_b.T @ u) / c
    else:
        x = np.linalg.solve(c * np.eye(n) + A_b.T @ A_b / m, rhs)
    resid = c * (x - x_k) + A_b.T @ (A_b @ x - b_b) / m
    if float(np.linalg.norm(resid)) > 1e-10 * (1.0 + float(np.linalg.norm(x_k))) * max(c, 1.0):
        raise InnerSolveError("linear prox stationarity residual too large")
    return x


def prox_step_absreg(x_k, A_b, b_b, alpha, tol: float = 1e-9) -> ProxResult:
    """Full prox step for (1/2m)||Ax - b||_1 via the dual box QP over
    [-1/(2m), 1/(2m)]; x+ = x_k - alpha A' lam."""
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("prox_step_absreg needs a finite positive stepsize")
    x_k = np.asarray(x_k, dtype=float)
    A_b = np.atleast_2d(np.asarray(A_b, dtype=float))
    b_b = np.atleast_1d(np.asarray(b_b, dtype=float))
    m = A_b.shape[0]
    c = 0.5 / m
    r = A_b @ x_k - b_b
    qp = BoxQP(Q=A_b @ A_b.T, v=r, alpha=alpha, lo=np.full(m, -c), hi=np.full(m, c))
    lam, info = solve_box_qp(qp, tol=tol)
    x_next = x_k - alpha * (A_b.T @ lam)
    d = x_next - x_k
    primal = float(np.abs(A_b @ x_next - b_b).sum()) * c + float(d @ d) / (2 * alpha)
    gap = primal - qp.objective(lam)
    if not info.converged:
        raise InnerSolveError(
            f"box QP did not converge (residual {info.residual:.3e})"
        )
    return ProxResult(x_next, lam=lam, duality_gap=gap,
                      inner_iterations=info.sweeps, converged=True)


def prox_step_logistic(x_k, A_b, b_b, alpha, tol: float = 1e-9,
                       max_newton: int = 100) -> ProxResult:
    """Full prox step for (1/2m) sum log(1+exp(-b <a,x>)) by damped Newton.

    For m < n the problem is reduced to the batch row space
    x = x_k + A' w; otherwise Newton runs directly in x.  Stops when the
    gradient of the prox objective drops below tol.
    """
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError("prox_step_logistic needs a finite positive stepsize")
    x_k = np.asarray(x_k, dtype=float)
    A_b = np.atleast_2d(np.asarray(A_b, dtype=float))
    b_b = np.atleast_1d(np.asarray(b_b, dtype=float))
    m, n = A_b.shape

    def loss_terms(x):
        u = b_b * (A_b @ x)
        val = float(np.logaddexp(0.0, -u).sum()) / (2 * m)
        s = _expit(-u)
        grad = A_b.T @ (-0.5 * b_b * s) / m
        w = 0.5 * s * (1.0 - s) / m  # Hessian weights (b^2 = 1)
        return val, grad, w

    def objective(x):
        u = b_b * (A_b @ x)
        d = x - x_k
        return float(np.logaddexp(0.0, -u).sum()) / (2 * m) + float(d @ d) / (2 * alpha)

    x = x_k.copy()
    iters = 0
    for iters in range(1, max_newton + 1):
        val, grad, w = loss_terms(x)
        full_grad = grad + (x - x_k) / alpha
        gnorm = float(np.linalg.norm(full_grad))
        if gnorm <= tol:
            break
        if m < n:
            # Newton step restricted to x_k + span(rows of A); the gradient
            # already lies in that span.
            H = (A_b * w[:, np.newaxis]) @ A_b.T + (A_b @ A_b.T) / alpha
            rhs = A_b @ full_grad
            try:
                u = np.linalg.solve(H, rhs)
            except np.linalg.LinAlgError:
                u = np.linalg.lstsq(H, rhs, rcond=None)[0]
            step = -A_b.T @ u
        else:
            H = (A_b.T * w) @ A_b + np.eye(n) / alpha
            step = -np.linalg.solve(H, full_grad)
        # Armijo backtracking
        f0 = objective(x)
        slope = float(full_grad @ step)
        t = 1.0
        while objective(x + t * step) > f0 + 1e-4 * t * slope and t > 1e-12:
            t *= 0.5
        x = x + t * step
    else:
        val, grad, w = loss_terms(x)
        gnorm = float(np.linalg.norm(grad + (x - x_k) / alpha))
        # (1/alpha)-strong convexity turns the gradient norm into a gap bound.
        return ProxResult(x, duality_gap=0.5 * alpha * gnorm ** 2,
                          inner_iterations=max_newton, converged=gnorm <= tol)
    return ProxResult(x, duality_gap=0.5 * alpha * gnorm ** 2,
                      inner_iterations=iters, converged=True)


def _expit(t):
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ---------------------------------------------------------------------------
# Dispatch for the outer loops


def solve_model_prox(model: models.BatchModel, center, alpha,
                     tol: float = 1e-9) -> ProxResult:
    """Minimize model + ||x - center||^2/(2 alpha) over all of R^n.

    ``center`` may differ from the model anchor (the accelerated iteration
    centers the prox term at the auxiliary sequence); affine values are
    shifted to the center accordingly.
    """
    center = np.asarray(center, dtype=float)
    strat = model.strategy
    if strat.scheme == models.ITERATE_AVERAGE:
        raise ValueError("iterate averaging is handled by the optimizer loop")
    if strat.scheme == models.AVERAGE_OF_TRUNCATED:
        return pam_step(center, model, alpha, tol=tol)
    if strat.kind == models.LINEAR:
        if not (alpha > 0 and math.isfinite(alpha)):
            raise ValueError("linear model needs a finite positive stepsize")
        return ProxResult(center - alpha * model.gbar)
    if strat.kind == models.TRUNCATED:
        val_c = model.anchor_value + float(model.gbar @ (center - model.anchor))
        return ProxResult(truncated_step(center, val_c, model.gbar,
                                         model.lower_bound, alpha))
    if strat.kind == models.FULL_PROX:
        return _full_prox_step(model, center, alpha, tol)
    raise ValueError(f"unsupported strategy for prox dispatch: {strat}")


def _full_prox_step(model, center, alpha, tol) -> ProxResult:
    inst, idx = model.inst, model.batch
    if model.m == 1:
        x = single_sample_prox(inst, center[np.newaxis, :], idx, alpha)
        return ProxResult(x[0])
    if inst.kind == problems.LINREG:
        return ProxResult(prox_step_linreg(center, inst.A[idx], inst.b[idx], alpha))
    if inst.kind == problems.ABSREG:
        return prox_step_absreg(center, inst.A[idx], inst.b[idx], alpha, tol=tol)
    if inst.kind == problems.LOGISTIC:
        return prox_step_logistic(center, inst.A[idx], inst.b[idx], alpha, tol=tol)
    if inst.kind == problems.HALFSPACE:
        return _halfspace_batch_prox(inst, center, idx, alpha, tol)
    raise ValueError(
        f"no batch full-prox solver for {inst.kind!r}; use m=1 or another model"
    )


def _halfspace_batch_prox(inst, center, idx, alpha, tol) -> ProxResult:
    # Halfspace distances are globally max{affine, 0}, so the exact prox of
    # the batch average is the PAM dual with signed affine values.
    rows = inst.A[idx]
    nrm = inst.row_norms[idx]
    G = (rows / nrm[:, np.newaxis]).T
    c = (rows @ center - inst.b[idx]) / nrm
    m = idx.size
    qp = BoxQP(Q=G.T @ G, v=c, alpha=alpha, lo=np.zeros(m), hi=np.full(m, 1.0 / m))
    lam, info = solve_box_qp(qp, tol=tol)
    x_next = center - alpha * (G @ lam)
    d = x_next - center
    primal = float(np.maximum(c + G.T @ d, 0.0).mean()) + float(d @ d) / (2 * alpha)
    if not info.converged:
        raise InnerSolveError("halfspace prox QP did not converge")
    return ProxResult(x_next, lam=lam, duality_gap=primal - qp.objective(lam),
                      inner_iterations=info.sweeps)


# ---------------------------------------------------------------------------
# Vectorized single-sample prox solves (iterate averaging)


def single_sample_prox(inst, centers: np.ndarray, idx: np.ndarray, alpha) -> np.ndarray:
    """Exact per-sample full-prox solutions from per-sample centers.

    ``centers`` has shape (m, n) (one prox center per sample; iterate
    averaging passes m copies of the same point).  All solves reduce to
    one-dimensional problems along the sample direction.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    idx = np.asarray(idx, dtype=int)
    if inst.kind == problems.TWOPOINT:
        return _twopoint_single_prox(inst, centers, idx, alpha)
    rows = inst.A[idx]
    r = np.einsum("ij,ij->i", rows, centers) - inst.b[idx]
    asq = np.einsum("ij,ij->i", rows, rows)
    safe_asq = np.where(asq > 0, asq, 1.0)

    if inst.kind == problems.LINREG:
        if not math.isfinite(alpha):
            raise ValueError("full prox with infinite stepsize is not supported")
        t = alpha * r / (1.0 + alpha * asq)
    elif inst.kind == problems.ABSREG:
        if not math.isfinite(alpha):
            raise ValueError("full prox with infinite stepsize is not supported")
        lam = np.clip(r / (alpha * safe_asq), -0.5, 0.5)
        t = alpha * lam
    elif inst.kind == problems.HALFSPACE:
        nrm = np.sqrt(safe_asq)
        d0 = np.maximum(r, 0.0) / nrm
        step = np.minimum(alpha, d0) if math.isfinite(alpha) else d0
        t = step / nrm
    elif inst.kind == problems.LOGISTIC:
        if not math.isfinite(alpha):
            raise ValueError("full prox with infinite stepsize is not supported")
        az = np.einsum("ij,ij->i", rows, centers)
        t = _logistic_single_prox_t(inst.b[idx], az, asq, alpha)
    elif inst.kind == problems.POWER:
        if not math.isfinite(alpha):
            raise ValueError("full prox with infinite stepsize is not supported")
        t = _power_single_prox_t(r, asq, alpha, inst.gamma)
    else:
        raise ValueError(f"no single-sample prox for kind {inst.kind!r}")
    return centers - t[:, np.newaxis] * rows


def _twopoint_single_prox(inst, centers, idx, alpha):
    out = centers.copy()
    informative = idx == 1
    if not np.any(informative):
        return out
    r = centers[informative, 0] - inst.sign * inst.radius
    if inst.gamma == 0.0 and not math.isfinite(alpha):
        out[informative, 0] = inst.sign * inst.radius
        return out
    if not math.isfinite(alpha):
        raise ValueError("infinite stepsize only supported for gamma = 0 here")
    t = _power_single_prox_t(r, np.ones_like(r), alpha, inst.gamma)
    out[informative, 0] -= t
    return out


def _logistic_single_prox_t(b, az, asq, alpha, iters: int = 80):
    """Bisection for t with x = z - t a minimizing the single-sample
    logistic prox; az = <a, z>.  The stationarity function is strictly
    increasing in t and the root lies in [-alpha/2, alpha/2]."""
    lo = np.full(b.shape, -0.5 * alpha)
    hi = np.full(b.shape, 0.5 * alpha)

    def phi(t):
        # Stationarity of the 1-d prox along a: t/alpha + (b/2) expit(-u) = 0.
        u = b * (az - t * asq)
        return t / alpha + 0.5 * b * _expit(-u)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = phi(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def _power_single_prox_t(r, asq, alpha, gamma, iters: int = 100):
    """Bisection for the 1-d power-loss prox along the sample direction.

    Finds t with  -|r - t*asq|^gamma sign(r - t*asq) + t/alpha = 0 scaled by
    asq; the solution lies between 0 and r/asq.
    """
    safe = np.where(asq > 0, asq, 1.0)
    lo = np.minimum(0.0, r / safe)
    hi = np.maximum(0.0, r / safe)

    def psi(t):
        res = r - t * asq
        return t / alpha - np.abs(res) ** gamma * np.sign(res)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        neg = psi(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    out = 0.5 * (lo + hi)
    return np.where(asq > 0, out, 0.0)


def pia_step(inst, x_k, idx, kind: str, alpha) -> np.ndarray:
    """Iterate-averaging update: solve the m single-sample prox subproblems
    from the same point and average the solutions."""
    x_k = np.asarray(x_k, dtype=float)
    idx = np.asarray(idx, dtype=int)
    m = idx.size
    if kind == models.LINEAR:
        if not (alpha > 0 and math.isfinite(alpha)):
            raise ValueError("linear model needs a finite positive stepsize")
        _, grads, _ = problems.batch_losses(inst, x_k, idx)
        return x_k - alpha * grads.mean(axis=1)
    if kind == models.TRUNCATED:
        vals, grads, infs = problems.batch_losses(inst, x_k, idx)
        gsq = np.einsum("ji,ji->i", grads, grads)
        gap = vals - infs
        if np.any((gsq == 0) & (gap > 1e-12 * (1.0 + np.abs(vals)))):
            raise DegenerateSampleError("zero per-sample gradient above its infimum")
        ratio = np.where(gsq > 0, gap / np.where(gsq > 0, gsq, 1.0), 0.0)
        t = np.minimum(alpha, np.maximum(ratio, 0.0))
        return x_k - (grads * t).mean(axis=1)
    if kind == models.FULL_PROX:
        centers = np.broadcast_to(x_k, (m, x_k.size))
        return single_sample_prox(inst, centers, idx, alpha).mean(axis=0)
    raise ValueError(f"unknown per-sample model kind: {kind!r}")


# ---------------------------------------------------------------------------
# Polyhedron projection (used to measure distances to halfspace intersections)


def project_polyhedron(A, b, x, tol: float = 1e-10, max_sweeps: int = 50_000):
    """Euclidean projection onto {y : Ay <= b} via the nonnegative dual QP."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    viol = A @ x - b
    if np.all(viol <= 0):
        return x.copy()
    # Only constraints that could be active matter; keep it simple and exact.
    qp = BoxQP(Q=A @ A.T, v=viol, alpha=1.0,
               lo=np.zeros(b.size), hi=np.full(b.size, np.inf))
    lam, info = solve_box_qp(qp, tol=tol, max_sweeps=max_sweeps)
    if not info.converged:
        raise InnerSolveError("polyhedron projection QP did not converge")
    return x - A.T @ lam
