"""Lower-bound laboratory: simulable versions of the hardness constructions.

``orthcol``: streaming regression revealing random orthogonal projections.
The Bayes-optimal estimator zeroes the unobserved coordinates in the fixed
orthogonal basis, and its risk admits the closed form R^2 (1 - m/n)^k; the
rank of the observed subspace follows E[r_k | r_{k-1}] = (1-m/n) r_{k-1} + m.

``twopoint``: the one-dimensional two-atom family on which no method can
beat a (1 - delta)^k decay of squared distance; running the pure Polyak
step (truncated model, infinite stepsize) shows an algorithm tracking that
envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import models, optimizers, problems

__all__ = ["OrthColReport", "TwoPointReport", "orthcol_lab", "twopoint_lab"]


@dataclass
class OrthColReport:
    n: int
    m: int
    R: float
    trials: int
    rounds: np.ndarray
    empirical_risk: np.ndarray
    closed_form_risk: np.ndarray
    mean_rank: np.ndarray
    predicted_rank: np.ndarray

    def max_relative_error(self, k_max: int | None = None) -> float:
        sel = slice(None) if k_max is None else slice(0, k_max)
        emp = self.empirical_risk[sel]
        ref = self.closed_form_risk[sel]
        return float(np.max(np.abs(emp - ref) / ref))


def orthcol_lab(n: int, m: int, rounds: int, trials: int, R: float = 1.0,
                seed: int = 0) -> OrthColReport:
    """Simulate the posterior-mean risk of the orthogonal-column stream.

    The risk after k rounds is the prior mass on unobserved basis
    coordinates, so only the coordinate values and the observed index sets
    matter; E[A'A] = I and the data matrices themselves are exercised by
    the generator's tests.
    """
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    rng = np.random.default_rng(seed + 1)
    coord_var = R**2 / n

    risks = np.zeros((trials, rounds))
    ranks = np.zeros((trials, rounds))
    for t in range(trials):
        coords = np.sqrt(coord_var) * rng.standard_normal(n)
        observed = np.zeros(n, dtype=bool)
        for k in range(rounds):
            idx = rng.choice(n, size=m, replace=False)
            observed[idx] = True
            # Posterior mean reveals observed coordinates exactly.
            risks[t, k] = float((coords[~observed] ** 2).sum())
            ranks[t, k] = int(observed.sum())

    ks = np.arange(1, rounds + 1)
    closed = R**2 * (1.0 - m / n) ** ks
    pred_rank = n - n * (1.0 - m / n) ** ks
    return OrthColReport(
        n=n, m=m, R=R, trials=trials, rounds=ks,
        empirical_risk=risks.mean(axis=0),
        closed_form_risk=closed,
        mean_rank=ranks.mean(axis=0),
        predicted_rank=pred_rank,
    )


@dataclass
class TwoPointReport:
    delta: float
    gamma: float
    R: float
    trials: int
    rounds: np.ndarray
    mean_sq_dist: np.ndarray
    envelope: np.ndarray            # R^2 (1 - delta)^k lower-bound decay
    empirical_log_factor: float     # fitted per-step log decay of E[dist^2]
    envelope_log_factor: float      # log(1 - delta)

    @property
    def respects_lower_bound(self) -> bool:
        """An algorithm cannot decay faster than the envelope (within MC
        slack checked by the caller)."""
        return self.empirical_log_factor >= self.envelope_log_factor


def twopoint_lab(lambda1: float, gamma: float, rounds: int, trials: int,
                 R: float = 1.0, seed: int = 0) -> TwoPointReport:
    """Run pure Polyak stepping on the two-point family with
    delta = (1+gamma)^2 lambda1 and compare the squared-distance decay with
    the unimprovable envelope."""
    delta = (1.0 + gamma) ** 2 * lambda1
    if not 0.0 < delta < 1.0:
        raise ValueError("need (1+gamma)^2 * lambda1 in (0, 1)")
    sq = np.zeros((trials, rounds + 1))
    schedule = optimizers.poly_decay(math.inf, beta=0.0)
    for t in range(trials):
        inst = problems.generate_problem(
            "twopoint", delta=delta, gamma=gamma, radius=R, seed=seed + 7 * t
        )
        rng = np.random.default_rng(
            np.random.SeedSequence((seed, t, 12345)).generate_state(1)[0]
        )
        rec = optimizers.run_base(
            inst, models.pma(), schedule, m=1, n_steps=rounds,
            epsilon=1e-300, rng=rng,
            record=optimizers.RecordOptions(stride=1, record_average=False,
                                            record_distance=True),
        )
        d = rec.dists
        if d.size < rounds + 1:  # converged early; distance stays put after
            d = np.concatenate([d, np.full(rounds + 1 - d.size, d[-1])])
        sq[t] = d[: rounds + 1] ** 2

    mean_sq = sq.mean(axis=0)
    ks = np.arange(rounds + 1)
    envelope = R**2 * (1.0 - delta) ** ks
    positive = mean_sq > 0
    slope = _fit_log_slope(ks[positive], mean_sq[positive])
    return TwoPointReport(
        delta=delta, gamma=gamma, R=R, trials=trials, rounds=ks,
        mean_sq_dist=mean_sq, envelope=envelope,
        empirical_log_factor=slope,
        envelope_log_factor=math.log(1.0 - delta),
    )


def _fit_log_slope(ks, values) -> float:
    if ks.size < 2:
        return 0.0
    slope, _ = np.polyfit(np.asarray(ks, dtype=float), np.log(values), 1)
    return float(slope)
