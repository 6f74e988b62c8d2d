"""Synthetic stochastic convex problems with known or solvable optima.

Loss conventions (per-sample; the empirical objective averages these over
the dataset):

* ``linreg``     F(x; (a,b)) = (1/2)(<a,x> - b)^2
* ``absreg``     F(x; (a,b)) = (1/2)|<a,x> - b|
* ``logistic``   F(x; (a,b)) = (1/2) log(1 + exp(-b <a,x>)),  b in {-1,+1}
* ``halfspace``  F(x; i)     = dist(x, {y : <a_i,y> <= b_i})
* ``power``      F(x; (a,b)) = |<a,x> - b|^(1+gamma) / (1+gamma)
* ``twopoint``   one-dimensional two-atom family: the sample is 0 with
  probability 1-delta (zero loss) and v with probability delta, where
  F(x; v) = |x - v*R|^(1+gamma) / (1+gamma) and v in {-1,+1} is fixed at
  generation.

The 1/2 weight on linreg/absreg/logistic makes the empirical objective
(1/2N)||Ax-b||^2, (1/2N)||Ax-b||_1, and (1/2N) sum log(1+exp(.)).  The
weight rescales smoothness and gradient-variance constants but not the
relative behavior of the methods.  All losses are nonnegative with
per-sample infimum 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import geometry

LINREG = "linreg"
ABSREG = "absreg"
LOGISTIC = "logistic"
HALFSPACE = "halfspace"
POWER = "power"
TWOPOINT = "twopoint"

KINDS = (LINREG, ABSREG, LOGISTIC, HALFSPACE, POWER, TWOPOINT)

NOISE_NONE = "none"
NOISE_GAUSSIAN = "gaussian"
NOISE_LAPLACE = "laplace"
NOISE_FLIP = "flip"


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = NOISE_NONE
    sigma: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in (NOISE_NONE, NOISE_GAUSSIAN, NOISE_LAPLACE, NOISE_FLIP):
            raise ValueError(f"unknown noise kind: {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("flip probability must lie in [0, 1]")

    def label(self) -> str:
        if self.kind == NOISE_NONE:
            return "none"
        if self.kind == NOISE_FLIP:
            return f"flip{self.p:g}"
        return f"{self.kind}{self.sigma:g}"


@dataclass
class OptimumInfo:
    f_star: float
    x_star: np.ndarray | None
    method: str  # "closed_form" or "high_accuracy_solve"
    tolerance: float
    converged: bool = True


@dataclass(eq=False)
class ProblemInstance:
    kind: str
    A: np.ndarray  # N x n data matrix (two atoms' loss parameters for twopoint)
    b: np.ndarray
    noise: NoiseSpec
    domain: geometry.Domain
    n: int
    N: int
    x_planted: np.ndarray | None = None
    gamma: float = 0.0
    delta: float = 0.0
    radius: float = 0.0
    sign: int = 1  # twopoint atom sign v
    params: dict = field(default_factory=dict)
    row_norms: np.ndarray | None = None
    flips_applied: int = 0
    _reference: OptimumInfo | None = field(default=None, repr=False)

    @property
    def sample_probabilities(self) -> np.ndarray | None:
        """Categorical sampling law; None means uniform over the dataset."""
        if self.kind == TWOPOINT:
            return np.array([1.0 - self.delta, self.delta])
        return None

    def to_config(self) -> dict:
        """JSON-serializable description; matrices are regenerated from it."""
        return dict(self.params)


def generate_problem(
    kind: str,
    N: int = 1000,
    n: int = 40,
    sigma: float = 0.0,
    p: float = 0.0,
    cond: float = 1.0,
    gamma: float = 0.0,
    delta: float = 0.1,
    radius: float = 1.0,
    seed: int = 0,
    domain: geometry.Domain | None = None,
) -> ProblemInstance:
    """Draw a synthetic instance; rows of A and the planted point are iid
    standard normal, with post-hoc singular-value rescaling to a geometric
    ramp spanning the requested condition number."""
    if kind not in KINDS:
        raise ValueError(f"unknown problem kind: {kind!r}")
    if kind == TWOPOINT:
        return _generate_twopoint(delta, radius, gamma, seed)
    if N < 1 or n < 1:
        raise ValueError("N and n must be positive")
    if cond < 1.0:
        raise ValueError("condition number must be >= 1")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("power exponent gamma must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    A = rng.standard_normal((N, n))
    x_star = rng.standard_normal(n)
    if cond > 1.0 and min(N, n) > 1:
        A = _rescale_condition(A, cond)

    dom = domain if domain is not None else geometry.all_space()
    params = {
        "kind": kind, "N": N, "n": n, "sigma": sigma, "p": p, "cond": cond,
        "gamma": gamma, "delta": delta, "radius": radius, "seed": seed,
    }
    flips = 0

    if kind == LINREG:
        noise = NoiseSpec(NOISE_GAUSSIAN, sigma=sigma) if sigma > 0 else NoiseSpec()
        b = A @ x_star
        if sigma > 0:
            b = b + sigma * rng.standard_normal(N)
    elif kind == ABSREG:
        noise = NoiseSpec(NOISE_LAPLACE, sigma=sigma) if sigma > 0 else NoiseSpec()
        b = A @ x_star
        if sigma > 0:
            b = b + sigma * rng.laplace(0.0, 1.0, N)
    elif kind == LOGISTIC:
        noise = NoiseSpec(NOISE_FLIP, p=p) if p > 0 else NoiseSpec()
        b = np.sign(A @ x_star)
        b[b == 0] = 1.0
        if p > 0:
            flip = rng.random(N) < p
            b = np.where(flip, -b, b)
            flips = int(flip.sum())
    elif kind == HALFSPACE:
        # Margins keep the planted point in the interior of every halfspace,
        # certifying a nonempty intersection.
        noise = NoiseSpec()
        margins = rng.uniform(0.1, 1.0, N)
        b = A @ x_star + margins
    elif kind == POWER:
        noise = NoiseSpec()
        b = A @ x_star
    else:  # pragma: no cover
        raise AssertionError(kind)

    inst = ProblemInstance(
        kind=kind, A=A, b=b, noise=noise, domain=dom, n=n, N=N,
        x_planted=x_star, gamma=gamma, params=params, flips_applied=flips,
    )
    if kind == HALFSPACE:
        inst.row_norms = np.linalg.norm(A, axis=1)
    return inst


def from_config(config: dict) -> ProblemInstance:
    return generate_problem(**config)


def make_custom_linreg(A, b, x_planted=None,
                       domain: geometry.Domain | None = None) -> ProblemInstance:
    """Least-squares instance from explicit data (controlled spectra,
    hand-built examples).  Consistency (b = A x_planted) marks it noiseless."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    N, n = A.shape
    if b.shape != (N,):
        raise ValueError("b must have one entry per row of A")
    # Marking the noise kind routes reference_optimum to the solver path
    # unless the planted point certifies interpolation.
    noise = NoiseSpec(NOISE_GAUSSIAN, sigma=0.0)
    if x_planted is not None:
        x_planted = np.asarray(x_planted, dtype=float)
        if np.allclose(A @ x_planted, b, atol=1e-12):
            noise = NoiseSpec()
    return ProblemInstance(
        kind=LINREG, A=A, b=b, noise=noise,
        domain=domain if domain is not None else geometry.all_space(),
        n=n, N=N, x_planted=x_planted,
        params={"kind": LINREG, "custom": True, "N": N, "n": n},
    )


def _generate_twopoint(delta: float, radius: float, gamma: float, seed: int) -> ProblemInstance:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    v = int(rng.choice([-1, 1]))
    params = {"kind": TWOPOINT, "delta": delta, "radius": radius,
              "gamma": gamma, "seed": seed}
    # Atom 0 carries zero loss; atom 1 is the informative sample v.
    return ProblemInstance(
        kind=TWOPOINT, A=np.zeros((2, 1)), b=np.zeros(2), noise=NoiseSpec(),
        domain=geometry.all_space(), n=1, N=2,
        x_planted=np.array([v * radius], dtype=float),
        gamma=gamma, delta=delta, radius=radius, sign=v, params=params,
    )


def _rescale_condition(A: np.ndarray, cond: float) -> np.ndarray:
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    r = s.size
    ramp = s[0] * cond ** (-np.arange(r) / (r - 1))
    return (U * ramp) @ Vt


# ---------------------------------------------------------------------------
# Loss evaluation


def batch_losses(inst: ProblemInstance, x: np.ndarray, idx: np.ndarray):
    """Per-sample values, subgradients, and infima for a batch of indices.

    Returns (values (m,), grads (n, m), infs (m,)).  Subgradients use the
    sign-0 convention at kinks.  All per-sample infima are 0 by
    construction.
    """
    idx = np.asarray(idx, dtype=int)
    if idx.size == 0:
        raise ValueError("empty batch")
    if int(idx.min()) < 0 or int(idx.max()) >= inst.N:
        raise IndexError("sample index out of range")
    x = np.asarray(x, dtype=float)

    if inst.kind == TWOPOINT:
        return _twopoint_losses(inst, x, idx)

    rows = inst.A[idx]
    infs = np.zeros(idx.size)
    if inst.kind == LINREG:
        r = rows @ x - inst.b[idx]
        return 0.5 * r * r, rows.T * r, infs
    if inst.kind == ABSREG:
        r = rows @ x - inst.b[idx]
        return 0.5 * np.abs(r), rows.T * (0.5 * np.sign(r)), infs
    if inst.kind == LOGISTIC:
        u = inst.b[idx] * (rows @ x)
        vals = 0.5 * np.logaddexp(0.0, -u)
        return vals, rows.T * (-0.5 * inst.b[idx] * _expit(-u)), infs
    if inst.kind == HALFSPACE:
        nrm = inst.row_norms[idx]
        viol = rows @ x - inst.b[idx]
        active = viol > 0
        vals = np.where(active, viol, 0.0) / nrm
        grads = rows.T * (active / nrm)
        return vals, grads, infs
    if inst.kind == POWER:
        r = rows @ x - inst.b[idx]
        g = inst.gamma
        vals = np.abs(r) ** (1.0 + g) / (1.0 + g)
        return vals, rows.T * (np.abs(r) ** g * np.sign(r)), infs
    raise AssertionError(inst.kind)  # pragma: no cover


def _twopoint_losses(inst: ProblemInstance, x: np.ndarray, idx: np.ndarray):
    g = inst.gamma
    r = x[0] - inst.sign * inst.radius
    val1 = np.abs(r) ** (1.0 + g) / (1.0 + g)
    grad1 = np.abs(r) ** g * np.sign(r)
    informative = idx == 1
    vals = np.where(informative, val1, 0.0)
    grads = np.where(informative, grad1, 0.0)[np.newaxis, :]
    return vals, grads, np.zeros(idx.size)


def _expit(t):
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def loss_eval(inst: ProblemInstance, x: np.ndarray, i: int):
    """(value, subgradient, per-sample infimum) of sample i at x."""
    vals, grads, infs = batch_losses(inst, x, np.array([i]))
    return float(vals[0]), grads[:, 0].copy(), float(infs[0])


def batch_objective(inst: ProblemInstance, x: np.ndarray, idx: np.ndarray) -> float:
    vals, _, _ = batch_losses(inst, x, idx)
    return float(vals.mean())


def objective_value(inst: ProblemInstance, x: np.ndarray) -> float:
    """Population objective: the dataset average, or the exact two-atom
    expectation for the two-point family."""
    x = np.asarray(x, dtype=float)
    if inst.kind == TWOPOINT:
        g = inst.gamma
        r = abs(float(x[0]) - inst.sign * inst.radius)
        return inst.delta * r ** (1.0 + g) / (1.0 + g)
    vals, _, _ = batch_losses(inst, x, np.arange(inst.N))
    return float(vals.mean())


def sample_batch(inst: ProblemInstance, m: int, rng: np.random.Generator) -> np.ndarray:
    """m indices drawn iid from the instance's sampling law (uniform with
    replacement for dataset problems)."""
    if m < 1:
        raise ValueError("batch size must be at least 1")
    probs = inst.sample_probabilities
    if probs is None:
        return rng.integers(0, inst.N, size=m)
    return rng.choice(inst.N, size=m, p=probs)


# ---------------------------------------------------------------------------
# Reference optima


def reference_optimum(inst: ProblemInstance) -> OptimumInfo:
    """f* (and x* when unique/known), cached on the instance.

    Interpolation instances return 0 directly.  Noisy linear regression is
    solved by least squares; noisy absolute regression by an LP; noisy
    logistic regression by a quasi-Newton solve run to tight gradient
    tolerance.
    """
    if inst._reference is not None:
        return inst._reference
    info = _compute_reference(inst)
    inst._reference = info
    return info


def _compute_reference(inst: ProblemInstance) -> OptimumInfo:
    if inst.kind == TWOPOINT:
        return OptimumInfo(0.0, inst.x_planted.copy(), "closed_form", 0.0)
    if inst.kind in (POWER, HALFSPACE):
        x = inst.x_planted.copy() if inst.kind == POWER else None
        return OptimumInfo(0.0, x, "closed_form", 0.0)
    if inst.kind == LINREG:
        if inst.noise.kind == NOISE_NONE:
            return OptimumInfo(0.0, inst.x_planted.copy(), "closed_form", 0.0)
        xhat, *_ = np.linalg.lstsq(inst.A, inst.b, rcond=None)
        resid = inst.A.T @ (inst.A @ xhat - inst.b) / inst.N
        return OptimumInfo(objective_value(inst, xhat), xhat, "closed_form",
                           float(np.linalg.norm(resid)))
    if inst.kind == ABSREG:
        if inst.noise.kind == NOISE_NONE:
            return OptimumInfo(0.0, inst.x_planted.copy(), "closed_form", 0.0)
        return _absreg_reference(inst)
    if inst.kind == LOGISTIC:
        margins = inst.b * (inst.A @ inst.x_planted)
        if np.all(margins > 0):
            # Separable: every per-sample infimum (0) is approached along
            # t * x_planted, so inf f = 0 though no minimizer exists.
            return OptimumInfo(0.0, None, "closed_form", 0.0)
        return _logistic_reference(inst)
    raise AssertionError(inst.kind)  # pragma: no cover


def _absreg_reference(inst: ProblemInstance) -> OptimumInfo:
    # min (1/2N) sum t_i  s.t.  t >= Ax - b, t >= b - Ax
    N, n = inst.N, inst.n
    c = np.concatenate([np.zeros(n), np.full(N, 0.5 / N)])
    A_ub = np.block([[inst.A, -np.eye(N)], [-inst.A, -np.eye(N)]])
    b_ub = np.concatenate([inst.b, -inst.b])
    res = scipy.optimize.linprog(
        c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (n + N), method="highs"
    )
    if not res.success:
        return OptimumInfo(objective_value(inst, np.zeros(n)), None,
                           "high_accuracy_solve", np.inf, converged=False)
    x = res.x[:n]
    return OptimumInfo(objective_value(inst, x), x, "high_accuracy_solve", 1e-10)


def _logistic_reference(inst: ProblemInstance) -> OptimumInfo:
    A, b, N = inst.A, inst.b, inst.N

    def fun(x):
        u = b * (A @ x)
        return float(np.logaddexp(0.0, -u).sum()) / (2.0 * N)

    def jac(x):
        u = b * (A @ x)
        return A.T @ (-0.5 * b * _expit(-u)) / N

    res = scipy.optimize.minimize(
        fun, np.zeros(inst.n), jac=jac, method="L-BFGS-B",
        options={"maxiter": 50_000, "ftol": 0.0, "gtol": 1e-13},
    )
    gnorm = float(np.linalg.norm(jac(res.x)))
    return OptimumInfo(fun(res.x), res.x, "high_accuracy_solve", gnorm,
                       converged=gnorm <= 1e-8)


def distance_to_optimum(inst: ProblemInstance, x: np.ndarray) -> float:
    """Euclidean distance to the optimal set.

    Supported whenever the optimal set is a known point or, for the
    halfspace-intersection problem, the feasible polyhedron (computed by an
    exact projection).
    """
    x = np.asarray(x, dtype=float)
    if inst.kind == HALFSPACE:
        from .prox import project_polyhedron
        proj = project_polyhedron(inst.A, inst.b, x)
        return float(np.linalg.norm(x - proj))
    info = reference_optimum(inst)
    if info.x_star is None:
        raise ValueError(f"optimal set of {inst.kind} instance is not a point")
    return float(np.linalg.norm(x - info.x_star))


# ---------------------------------------------------------------------------
# Orthogonal-column streaming regression (lower-bound construction)


@dataclass(eq=False)
class OrthColRegression:
    """Streaming noiseless regression revealing random orthogonal projections.

    Each round draws m distinct columns of a fixed orthogonal U and reveals
    A = sqrt(n/m) * [u_i1 ... u_im]^T together with b = A x_star, so that
    E[A^T A] = I.  The Bayes posterior mean under the Gaussian prior zeroes
    out the unobserved coordinates of x_star in the U basis.
    """

    U: np.ndarray
    x_star: np.ndarray
    n: int
    m: int
    R: float

    def draw_round(self, rng: np.random.Generator):
        idx = rng.choice(self.n, size=self.m, replace=False)
        A = np.sqrt(self.n / self.m) * self.U[:, idx].T
        return A, A @ self.x_star, idx

    def coords(self) -> np.ndarray:
        """x_star expressed in the U basis."""
        return self.U.T @ self.x_star


def make_orthcol_regression(n: int, m: int, R: float, seed: int,
                            use_identity: bool = False) -> OrthColRegression:
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    if R <= 0:
        raise ValueError("R must be positive")
    rng = np.random.default_rng(seed)
    if use_identity:
        U = np.eye(n)
    else:
        U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    x_star = (R / np.sqrt(n)) * rng.standard_normal(n)
    return OrthColRegression(U=U, x_star=x_star, n=n, m=m, R=R)
