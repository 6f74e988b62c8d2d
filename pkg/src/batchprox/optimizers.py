"""Outer iterations: base model-based loop, iterate averaging, and the
accelerated three-term loop, with stepsize schedules and run recording.

Every run is a pure function of (instance, configuration, RNG state); two
runs with identical inputs produce bitwise-identical records.  Passing
``full_batch=True`` (or m equal to the dataset size) uses the whole dataset
deterministically each step, which is the noiseless sigma_0 = 0 regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry, models, problems, prox

POLY_DECAY = "poly"
SMOOTHNESS_ADAPTIVE = "smooth"

STATUS_CONVERGED = "converged"
STATUS_BUDGET = "budget"
STATUS_DIVERGED = "diverged"
STATUS_INNERFAIL = "innerfail"

_DIVERGENCE_FACTOR = 1e8
_INNER_RETRIES = 2


@dataclass(frozen=True)
class StepSchedule:
    """Stepsize schedule.

    ``poly``:   alpha_k = alpha0 * k^(-beta), beta in [0, 1]
    ``smooth``: alpha_k = 1 / (L + eta0 * k^power), power in {0, 1/2}
    """

    kind: str
    alpha0: float = 1.0
    beta: float = 0.5
    L: float = 0.0
    eta0: float = 0.0
    power: float = 0.5

    def __post_init__(self):
        if self.kind == POLY_DECAY:
            if not self.alpha0 > 0:
                raise ValueError("alpha0 must be positive")
            if not 0.0 <= self.beta <= 1.0:
                raise ValueError("beta must lie in [0, 1]")
        elif self.kind == SMOOTHNESS_ADAPTIVE:
            if self.L < 0 or self.eta0 < 0 or self.L + self.eta0 <= 0:
                raise ValueError("need L, eta0 >= 0 with L + eta0 > 0")
            if self.power not in (0.0, 0.5):
                raise ValueError("power must be 0 or 1/2")
        else:
            raise ValueError(f"unknown schedule kind: {self.kind!r}")

    def alpha(self, k: int) -> float:
        if self.kind == POLY_DECAY:
            if self.beta == 0.0:
                return self.alpha0
            return self.alpha0 * k ** (-self.beta)
        return 1.0 / (self.L + self.eta(k))

    def eta(self, k: int) -> float:
        if self.kind == POLY_DECAY:
            raise ValueError("eta is defined for smoothness-adaptive schedules")
        if self.power == 0.0:
            return self.eta0
        return self.eta0 * math.sqrt(k)


def poly_decay(alpha0: float, beta: float = 0.5) -> StepSchedule:
    return StepSchedule(POLY_DECAY, alpha0=alpha0, beta=beta)


def smoothness_adaptive(L: float, eta0: float, power: float = 0.5) -> StepSchedule:
    return StepSchedule(SMOOTHNESS_ADAPTIVE, L=L, eta0=eta0, power=power)


@dataclass(frozen=True)
class ThetaSchedule:
    """Momentum schedule theta_k = 2/(k+2): theta_0 = 1, non-increasing, and
    (1-theta_k)/theta_k^2 <= 1/theta_{k-1}^2 (verified numerically up to
    k = 10^6 on construction)."""

    check_horizon: int = 1_000_000

    def __post_init__(self):
        ks = np.arange(1, self.check_horizon + 1, dtype=float)
        th = 2.0 / (ks + 2.0)
        prev = 2.0 / (ks + 1.0)
        if self.theta(0) != 1.0:
            raise AssertionError("theta_0 must equal 1")
        if np.any((1.0 - th) / th**2 > 1.0 / prev**2 + 1e-12):
            raise AssertionError("theta schedule violates its recursion bound")

    def theta(self, k: int) -> float:
        return 2.0 / (k + 2.0)


@dataclass(frozen=True)
class Regularizer:
    """Composite term r(x): zero or (mu/2)||x||^2."""

    mu: float = 0.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")

    def value(self, x) -> float:
        if self.mu == 0.0:
            return 0.0
        x = np.asarray(x, dtype=float)
        return 0.5 * self.mu * float(x @ x)


def zero_regularizer() -> Regularizer:
    return Regularizer(0.0)


def squared_l2(mu: float) -> Regularizer:
    return Regularizer(mu)


@dataclass
class RecordOptions:
    stride: int = 1
    record_average: bool = True
    record_distance: bool = False
    snapshot_stride: int = 0  # 0 disables iterate snapshots


@dataclass(eq=False)
class RunRecord:
    ks: np.ndarray
    gaps: np.ndarray
    avg_gaps: np.ndarray | None
    dists: np.ndarray | None
    samples: np.ndarray
    status: str
    k_converged: int | None
    x_final: np.ndarray
    x_avg_final: np.ndarray | None
    f_star: float
    initial_gap: float
    config: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)


class _Recorder:
    def __init__(self, inst, opts: RecordOptions, m_eff: int, f_star: float):
        self.inst = inst
        self.opts = opts
        self.m_eff = m_eff
        self.f_star = f_star
        self.ks, self.gaps, self.avg_gaps, self.dists = [], [], [], []
        self.snapshots = []

    def due(self, k: int, last: bool) -> bool:
        return last or k % max(self.opts.stride, 1) == 0

    def record(self, k: int, x, x_avg):
        gap = problems.objective_value(self.inst, x) - self.f_star
        self.ks.append(k)
        self.gaps.append(gap)
        if self.opts.record_average and x_avg is not None:
            self.avg_gaps.append(
                problems.objective_value(self.inst, x_avg) - self.f_star
            )
        if self.opts.record_distance:
            self.dists.append(problems.distance_to_optimum(self.inst, x))
        if self.opts.snapshot_stride and k % self.opts.snapshot_stride == 0:
            self.snapshots.append((k, np.array(x)))
        return gap

    def finish(self, status, k_conv, x, x_avg, initial_gap, config) -> RunRecord:
        return RunRecord(
            ks=np.array(self.ks, dtype=int),
            gaps=np.array(self.gaps),
            avg_gaps=np.array(self.avg_gaps) if self.avg_gaps else None,
            dists=np.array(self.dists) if self.dists else None,
            samples=np.array(self.ks, dtype=int) * self.m_eff,
            status=status,
            k_converged=k_conv,
            x_final=np.array(x),
            x_avg_final=np.array(x_avg) if x_avg is not None else None,
            f_star=self.f_star,
            initial_gap=initial_gap,
            config=dict(config),
            snapshots=self.snapshots,
        )


def _prepare(inst, m, x0, full_batch):
    if m < 1:
        raise ValueError("batch size must be at least 1")
    full = full_batch or (inst.sample_probabilities is None and m == inst.N)
    m_eff = inst.N if full else m
    x = np.zeros(inst.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    x = geometry.project_domain(inst.domain, x)
    f_star = problems.reference_optimum(inst).f_star
    return x, m_eff, full, f_star


def _draw(inst, m, rng, full):
    if full:
        return np.arange(inst.N)
    return problems.sample_batch(inst, m, rng)


def run_base(
    inst: problems.ProblemInstance,
    strategy: models.BatchStrategy,
    schedule: StepSchedule,
    m: int,
    n_steps: int,
    epsilon: float,
    rng: np.random.Generator,
    record: RecordOptions | None = None,
    x0=None,
    h: geometry.DistanceGenerator | None = None,
    full_batch: bool = False,
    inner_tol: float = 1e-9,
    debug_checks: bool = False,
) -> RunRecord:
    """Base model-based loop: sample a batch, build the model at x_k, solve
    the prox subproblem with alpha_k, and record the objective gap.

    Non-Euclidean geometries are supported for the linear model (the exact
    mirror step); other models require the Euclidean geometry, and on
    constrained domains their unconstrained prox solve is followed by a
    projection.
    """
    if n_steps < 1 or epsilon <= 0:
        raise ValueError("need n_steps >= 1 and epsilon > 0")
    if strategy.scheme == models.ITERATE_AVERAGE:
        return run_pia(inst, strategy.kind, schedule, m, n_steps, epsilon, rng,
                       record=record, x0=x0, full_batch=full_batch)
    opts = record if record is not None else RecordOptions()
    x, m_eff, full, f_star = _prepare(inst, m, x0, full_batch)
    hgen = h if h is not None else geometry.euclidean(inst.n)
    geometry.check_compatible(hgen, inst.domain)
    if hgen.kind != geometry.EUCLIDEAN and not (
        strategy.scheme == models.MODEL_OF_AVERAGE and strategy.kind == models.LINEAR
    ):
        raise ValueError("non-Euclidean geometry requires the linear model")
    _check_infinite_alpha(strategy, schedule)

    config = {"method": strategy.method_id, "m": m_eff, "schedule": schedule,
              "epsilon": epsilon, "full_batch": full}
    rec = _Recorder(inst, opts, m_eff, f_star)
    x_avg = x.copy() if opts.record_average else None
    gap0 = rec.record(0, x, x_avg)
    if gap0 <= epsilon:
        return rec.finish(STATUS_CONVERGED, 0, x, x_avg, gap0, config)

    status, k_conv = STATUS_BUDGET, None
    for k in range(1, n_steps + 1):
        alpha = schedule.alpha(k)
        x_new, ok = _model_step(inst, strategy, x, m, alpha, rng, full,
                                hgen, inner_tol, debug_checks)
        if not ok:
            status = STATUS_INNERFAIL
            x = x_new
            break
        x = x_new
        if x_avg is not None:
            x_avg += (x - x_avg) / k  # running mean of x_2 .. x_{k+1}
        if rec.due(k, k == n_steps):
            gap = rec.record(k, x, x_avg)
            if gap <= epsilon:
                status, k_conv = STATUS_CONVERGED, k
                break
            if not math.isfinite(gap) or gap > _DIVERGENCE_FACTOR * max(gap0, 1e-12):
                status = STATUS_DIVERGED
                break
    return rec.finish(status, k_conv, x, x_avg, gap0, config)


def _model_step(inst, strategy, x, m, alpha, rng, full, hgen, inner_tol, debug):
    """One prox step; returns (x_next, ok)."""
    for attempt in range(_INNER_RETRIES + 1):
        idx = _draw(inst, m, rng, full)
        model = models.build_batch_model(inst, x, idx, strategy)
        try:
            if strategy.scheme == models.MODEL_OF_AVERAGE and strategy.kind == models.LINEAR:
                x_next = prox.linear_step(hgen, inst.domain, x, model.gbar, alpha)
            else:
                res = prox.solve_model_prox(model, x, alpha, tol=inner_tol)
                x_next = geometry.project_domain(inst.domain, res.x_next)
            if debug:
                _debug_step_checks(model, x, x_next, alpha, rng)
            return x_next, True
        except (prox.InnerSolveError, prox.DegenerateSampleError):
            if attempt == _INNER_RETRIES:
                return x, False
    return x, False  # pragma: no cover


def _debug_step_checks(model, center, x_plus, alpha, rng, n_probes: int = 3,
                       tol: float = 1e-8):
    """Optimality of the prox solve via the minimizer inequality: for any y,
    model(x+) + psi(x+) <= model(y) + psi(y) - ||y - x+||^2/(2 alpha)."""
    if not math.isfinite(alpha):
        alpha = 1e12
    lhs = float(models.evaluate_model(model, x_plus))
    lhs += float((x_plus - center) @ (x_plus - center)) / (2 * alpha)
    anchor_val = model.anchor_value
    if lhs > anchor_val + tol * (1.0 + abs(anchor_val)):
        raise AssertionError("prox step failed to descend on the model")
    probes = x_plus + rng.standard_normal((n_probes, x_plus.size))
    for y in probes:
        rhs = float(models.evaluate_model(model, y))
        rhs += float((y - center) @ (y - center)) / (2 * alpha)
        rhs -= float((y - x_plus) @ (y - x_plus)) / (2 * alpha)
        if lhs > rhs + tol * (1.0 + abs(rhs)):
            raise AssertionError("prox step violates the minimizer inequality")


def _check_infinite_alpha(strategy, schedule):
    if schedule.kind == POLY_DECAY and math.isinf(schedule.alpha0):
        truncated = (
            strategy.kind == models.TRUNCATED
            and strategy.scheme in (models.MODEL_OF_AVERAGE, models.ITERATE_AVERAGE)
        )
        if not truncated:
            raise ValueError(
                "infinite stepsize is only supported for truncated models"
            )
        if schedule.beta != 0.0:
            raise ValueError("infinite stepsize requires beta = 0")


def run_pia(
    inst: problems.ProblemInstance,
    per_sample_model: str,
    schedule: StepSchedule,
    m: int,
    n_steps: int,
    epsilon: float,
    rng: np.random.Generator,
    record: RecordOptions | None = None,
    x0=None,
    full_batch: bool = False,
) -> RunRecord:
    """Iterate averaging: per step, solve the m single-sample prox
    subproblems from the same point and average the solutions."""
    if n_steps < 1 or epsilon <= 0:
        raise ValueError("need n_steps >= 1 and epsilon > 0")
    if per_sample_model not in models.MODEL_KINDS:
        raise ValueError(f"unknown per-sample model: {per_sample_model!r}")
    _check_infinite_alpha(models.pia(per_sample_model), schedule)
    opts = record if record is not None else RecordOptions()
    x, m_eff, full, f_star = _prepare(inst, m, x0, full_batch)

    config = {"method": "pia", "pia_kind": per_sample_model, "m": m_eff,
              "schedule": schedule, "epsilon": epsilon, "full_batch": full}
    rec = _Recorder(inst, opts, m_eff, f_star)
    x_avg = x.copy() if opts.record_average else None
    gap0 = rec.record(0, x, x_avg)
    if gap0 <= epsilon:
        return rec.finish(STATUS_CONVERGED, 0, x, x_avg, gap0, config)

    status, k_conv = STATUS_BUDGET, None
    for k in range(1, n_steps + 1):
        alpha = schedule.alpha(k)
        idx = _draw(inst, m, rng, full)
        try:
            x = geometry.project_domain(
                inst.domain, prox.pia_step(inst, x, idx, per_sample_model, alpha)
            )
        except (prox.InnerSolveError, prox.DegenerateSampleError):
            status = STATUS_INNERFAIL
            break
        if x_avg is not None:
            x_avg += (x - x_avg) / k
        if rec.due(k, k == n_steps):
            gap = rec.record(k, x, x_avg)
            if gap <= epsilon:
                status, k_conv = STATUS_CONVERGED, k
                break
            if not math.isfinite(gap) or gap > _DIVERGENCE_FACTOR * max(gap0, 1e-12):
                status = STATUS_DIVERGED
                break
    return rec.finish(status, k_conv, x, x_avg, gap0, config)


def run_accelerated(
    inst: problems.ProblemInstance,
    strategy: models.BatchStrategy,
    schedule: StepSchedule,
    m: int,
    n_steps: int,
    epsilon: float,
    rng: np.random.Generator,
    theta: ThetaSchedule | None = None,
    reg: Regularizer | None = None,
    record: RecordOptions | None = None,
    x0=None,
    conservative_alpha: bool = False,
    full_batch: bool = False,
    inner_tol: float = 1e-9,
) -> RunRecord:
    """Three-term accelerated iteration:

        y_k     = (1 - theta_k) x_k + theta_k z_k
        z_{k+1} = argmin model_at_y + r + ||. - z_k||^2 / (2 alpha_k)
        x_{k+1} = (1 - theta_k) x_k + theta_k z_{k+1}

    With a smoothness-adaptive schedule the stepsize is
    alpha_k = 1/(L theta_k + eta_k) (the tightest admissible choice); pass
    ``conservative_alpha=True`` for the looser 1/(L + eta_k) choice.  A squared-l2
    regularizer folds analytically into the prox term.

    Iterate averaging composes with this wrapper but does not enjoy the
    accelerated guarantee.
    """
    if n_steps < 1 or epsilon <= 0:
        raise ValueError("need n_steps >= 1 and epsilon > 0")
    theta = theta if theta is not None else _STANDARD_THETA
    reg = reg if reg is not None else zero_regularizer()
    opts = record if record is not None else RecordOptions()
    x, m_eff, full, f_star = _prepare(inst, m, x0, full_batch)
    if schedule.kind == POLY_DECAY and math.isinf(schedule.alpha0):
        raise ValueError("the accelerated loop requires finite stepsizes")

    config = {"method": strategy.method_id, "accelerated": True, "m": m_eff,
              "schedule": schedule, "epsilon": epsilon, "full_batch": full,
              "mu": reg.mu}
    rec = _Recorder(inst, opts, m_eff, f_star)
    x_avg = x.copy() if opts.record_average else None
    gap0 = rec.record(0, x, x_avg)
    if gap0 <= epsilon:
        return rec.finish(STATUS_CONVERGED, 0, x, x_avg, gap0, config)

    z = x.copy()
    status, k_conv = STATUS_BUDGET, None
    for k in range(n_steps):
        th = theta.theta(k)
        y = (1.0 - th) * x + th * z
        if schedule.kind == SMOOTHNESS_ADAPTIVE:
            eta_k = schedule.eta0 * math.sqrt(k + 1)
            alpha = 1.0 / (schedule.L + eta_k) if conservative_alpha else \
                1.0 / (schedule.L * th + eta_k)
            if not math.isfinite(alpha):
                raise ValueError("L and eta0 cannot both vanish")
        else:
            alpha = schedule.alpha(k + 1)
        z_new, ok = _accel_z_step(inst, strategy, y, z, m, alpha, reg, rng,
                                  full, inner_tol)
        if not ok:
            status = STATUS_INNERFAIL
            break
        z = z_new
        x = (1.0 - th) * x + th * z
        if x_avg is not None:
            x_avg += (x - x_avg) / (k + 1)
        if rec.due(k + 1, k + 1 == n_steps):
            # Recorded gaps are for f alone; a nonzero regularizer only
            # shapes the z-subproblem.
            gap = rec.record(k + 1, x, x_avg)
            if gap <= epsilon:
                status, k_conv = STATUS_CONVERGED, k + 1
                break
            if not math.isfinite(gap) or gap > _DIVERGENCE_FACTOR * max(gap0, 1e-12):
                status = STATUS_DIVERGED
                break
    return rec.finish(status, k_conv, x, x_avg, gap0, config)


def _accel_z_step(inst, strategy, y, z, m, alpha, reg, rng, full, inner_tol):
    # Fold (mu/2)||x||^2 + ||x-z||^2/(2 alpha) into a single quadratic:
    # effective stepsize alpha/(1+alpha*mu), effective center z/(1+alpha*mu).
    if reg.mu > 0.0:
        scale = 1.0 + alpha * reg.mu
        alpha_eff, center = alpha / scale, z / scale
    else:
        alpha_eff, center = alpha, z
    for attempt in range(_INNER_RETRIES + 1):
        idx = _draw(inst, m, rng, full)
        try:
            if strategy.scheme == models.ITERATE_AVERAGE:
                centers = np.broadcast_to(center, (idx.size, center.size))
                if strategy.kind == models.FULL_PROX:
                    z_parts = prox.single_sample_prox(inst, centers, idx, alpha_eff)
                    z_new = z_parts.mean(axis=0)
                else:
                    z_new = _pia_z_from_y(inst, y, center, idx, strategy.kind,
                                          alpha_eff)
            else:
                model = models.build_batch_model(inst, y, idx, strategy)
                res = prox.solve_model_prox(model, center, alpha_eff, tol=inner_tol)
                z_new = res.x_next
            return geometry.project_domain(inst.domain, z_new), True
        except (prox.InnerSolveError, prox.DegenerateSampleError):
            if attempt == _INNER_RETRIES:
                return z, False
    return z, False  # pragma: no cover


def _pia_z_from_y(inst, y, center, idx, kind, alpha):
    """Per-sample linear/truncated models anchored at y, prox centered at
    ``center``, solved independently and averaged."""
    vals, grads, infs = problems.batch_losses(inst, y, idx)
    shift = grads.T @ (center - y)
    if kind == models.LINEAR:
        return center - alpha * grads.mean(axis=1)
    gsq = np.einsum("ji,ji->i", grads, grads)
    gap = vals - infs + shift
    ratio = np.where(gsq > 0, np.maximum(gap, 0.0) / np.where(gsq > 0, gsq, 1.0), 0.0)
    t = np.minimum(alpha, ratio)
    return center - (grads * t).mean(axis=1)


_STANDARD_THETA = ThetaSchedule()


def time_to_epsilon(record: RunRecord, epsilon: float):
    """Samples consumed at the first recorded gap <= epsilon (None if the
    trace never crosses; granularity is the record stride).  A trace that
    starts converged reports one batch."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    hit = np.nonzero(record.gaps <= epsilon)[0]
    if hit.size == 0:
        return None
    s = int(record.samples[hit[0]])
    m_eff = int(record.config.get("m", 1))
    return max(s, m_eff)


def smoothness_constant(inst: problems.ProblemInstance) -> float:
    """Gradient Lipschitz constant of the empirical objective (smooth losses
    only): lambda_max(A'A)/N for linear regression, lambda_max(A'A)/(8N)
    for the half-weighted logistic loss."""
    if inst.kind == problems.LINREG:
        s = np.linalg.svd(inst.A, compute_uv=False)[0]
        return float(s * s) / inst.N
    if inst.kind == problems.LOGISTIC:
        s = np.linalg.svd(inst.A, compute_uv=False)[0]
        return float(s * s) / (8.0 * inst.N)
    if inst.kind == problems.POWER and inst.gamma == 1.0:
        s = np.linalg.svd(inst.A, compute_uv=False)[0]
        return float(s * s) / inst.N
    raise ValueError(f"{inst.kind} objective is nonsmooth; no L available")


def suggested_eta0(sigma0: float, m: int, R: float, accelerated: bool = False) -> float:
    """Variance-adapted eta0 default: sigma0/(sqrt(m) R) for the base
    loop and sigma0*sqrt(m)/R for the accelerated one."""
    if accelerated:
        return sigma0 * math.sqrt(m) / R
    return sigma0 / (math.sqrt(m) * R)
