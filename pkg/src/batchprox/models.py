"""Convex lower models of batch-averaged losses.

A batch model anchors at the current iterate and satisfies three
conditions: it is convex (C.i), it lower-bounds the batch-averaged loss
while matching it exactly at the anchor (C.ii), and the truncated/proximal
variants additionally stay above the averaged per-sample infimum (C.iii).

Strategies:

* ``sgm``   linear model of the batch average (minibatch subgradient),
* ``pma``   truncated (Polyak) model of the batch average,
* ``pam``   average of per-sample truncated models,
* ``prox``  the batch-averaged loss itself,
* ``pia``   per-sample models solved independently then averaged (handled
  by the optimizer loop; its single-sample models are batch models with
  m = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import problems

LINEAR = "linear"
TRUNCATED = "truncated"
FULL_PROX = "full_prox"

MODEL_KINDS = (LINEAR, TRUNCATED, FULL_PROX)

MODEL_OF_AVERAGE = "model_of_average"
AVERAGE_OF_TRUNCATED = "average_of_truncated"
ITERATE_AVERAGE = "iterate_average"


@dataclass(frozen=True)
class BatchStrategy:
    scheme: str
    kind: str = TRUNCATED

    def __post_init__(self):
        if self.scheme not in (MODEL_OF_AVERAGE, AVERAGE_OF_TRUNCATED, ITERATE_AVERAGE):
            raise ValueError(f"unknown batching scheme: {self.scheme!r}")
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind: {self.kind!r}")

    @property
    def method_id(self) -> str:
        if self.scheme == AVERAGE_OF_TRUNCATED:
            return "pam"
        if self.scheme == ITERATE_AVERAGE:
            return "pia"
        return {LINEAR: "sgm", TRUNCATED: "pma", FULL_PROX: "prox"}[self.kind]


def sgm() -> BatchStrategy:
    return BatchStrategy(MODEL_OF_AVERAGE, LINEAR)


def pma() -> BatchStrategy:
    return BatchStrategy(MODEL_OF_AVERAGE, TRUNCATED)


def pam() -> BatchStrategy:
    return BatchStrategy(AVERAGE_OF_TRUNCATED)


def full_prox() -> BatchStrategy:
    return BatchStrategy(MODEL_OF_AVERAGE, FULL_PROX)


def pia(kind: str = TRUNCATED) -> BatchStrategy:
    return BatchStrategy(ITERATE_AVERAGE, kind)


def strategy_from_id(method_id: str, pia_kind: str = TRUNCATED) -> BatchStrategy:
    table = {"sgm": sgm(), "pma": pma(), "pam": pam(), "prox": full_prox()}
    if method_id == "pia":
        return pia(pia_kind)
    if method_id not in table:
        raise ValueError(f"unknown method id: {method_id!r}")
    return table[method_id]


@dataclass(eq=False)
class BatchModel:
    """Model of the batch-averaged loss anchored at ``anchor``.

    ``values``/``grads``/``infs`` hold the per-sample data at the anchor;
    ``lower_bound`` is the averaged per-sample infimum.  The model keeps a
    reference to the instance and batch so the full-prox variant can
    evaluate the true averaged loss.
    """

    strategy: BatchStrategy
    anchor: np.ndarray
    anchor_value: float
    gbar: np.ndarray           # averaged subgradient at the anchor
    values: np.ndarray         # per-sample losses at the anchor (m,)
    grads: np.ndarray          # per-sample subgradients (n, m)
    infs: np.ndarray           # per-sample infima (m,)
    lower_bound: float
    inst: problems.ProblemInstance
    batch: np.ndarray

    @property
    def m(self) -> int:
        return int(self.batch.size)


def build_batch_model(
    inst: problems.ProblemInstance,
    x: np.ndarray,
    batch: np.ndarray,
    strategy: BatchStrategy,
) -> BatchModel:
    batch = np.asarray(batch, dtype=int)
    if batch.size == 0:
        raise ValueError("empty batch")
    x = np.asarray(x, dtype=float)
    values, grads, infs = problems.batch_losses(inst, x, batch)
    inv_m = 1.0 / batch.size
    return BatchModel(
        strategy=strategy,
        anchor=x.copy(),
        anchor_value=float(np.add.reduce(values)) * inv_m,
        gbar=np.add.reduce(grads, axis=1) * inv_m,
        values=values,
        grads=grads,
        infs=infs,
        lower_bound=float(np.add.reduce(infs)) * inv_m,
        inst=inst,
        batch=batch,
    )


def evaluate_model(model: BatchModel, y: np.ndarray) -> float | np.ndarray:
    """Model value at y; y may carry leading batch dimensions (..., n)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = y[np.newaxis, :] if single else y.reshape(-1, y.shape[-1])
    if Y.shape[-1] != model.anchor.size:
        raise ValueError("dimension mismatch between model and query point")
    out = _evaluate_many(model, Y)
    if single:
        return float(out[0])
    return out.reshape(y.shape[:-1])


def _evaluate_many(model: BatchModel, Y: np.ndarray) -> np.ndarray:
    strat = model.strategy
    D = Y - model.anchor  # (P, n)
    if strat.scheme == AVERAGE_OF_TRUNCATED:
        # (P, m) affine pieces, truncated per sample
        aff = model.values + D @ model.grads
        return np.maximum(aff, model.infs).mean(axis=1)
    if strat.kind == LINEAR:
        return model.anchor_value + D @ model.gbar
    if strat.kind == TRUNCATED:
        aff = model.anchor_value + D @ model.gbar
        return np.maximum(aff, model.lower_bound)
    # full prox: the model is the batch-averaged loss itself
    vals = np.empty(Y.shape[0])
    for i in range(Y.shape[0]):
        vals[i] = problems.batch_objective(model.inst, Y[i], model.batch)
    return vals


@dataclass
class ConditionReport:
    c1_ok: bool
    c2_ok: bool
    c3_ok: bool
    worst_violation: float
    convexity_violation: float
    lower_bound_violation: float   # max of model - batch loss over probes
    anchor_violation: float
    floor_violation: float         # max of lower_bound - model over probes


def check_model_conditions(
    inst: problems.ProblemInstance,
    model: BatchModel,
    n_probes: int,
    rng: np.random.Generator | None = None,
    convexity_tol: float = 1e-9,
    lower_tol: float = 1e-9,
    anchor_tol: float = 1e-12,
    floor_tol: float = 1e-9,
) -> ConditionReport:
    """Empirically verify the model conditions at Gaussian probes around the
    anchor (scaled by ||anchor|| + 1 to cover local and far behavior)."""
    if n_probes < 1:
        raise ValueError("need at least one probe")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = model.anchor.size
    scale = float(np.linalg.norm(model.anchor)) + 1.0
    probes = model.anchor + scale * rng.standard_normal((n_probes, n))

    mvals = np.asarray(evaluate_model(model, probes))
    fvals = np.array([problems.batch_objective(inst, p, model.batch) for p in probes])

    lb_viol = float(np.max(mvals - fvals))
    floor_viol = 0.0
    if model.strategy.scheme == AVERAGE_OF_TRUNCATED or model.strategy.kind in (
        TRUNCATED, FULL_PROX,
    ):
        floor_viol = float(np.max(model.lower_bound - mvals))
    anchor_viol = abs(float(evaluate_model(model, model.anchor)) - model.anchor_value)

    # Convexity along random segments between probe pairs.
    half = n_probes // 2
    cvx_viol = 0.0
    if half >= 1:
        U, W = probes[:half], probes[half:2 * half]
        t = rng.random(half)[:, np.newaxis]
        mid = np.asarray(evaluate_model(model, t * U + (1.0 - t) * W))
        chord = t[:, 0] * mvals[:half] + (1.0 - t[:, 0]) * mvals[half:2 * half]
        cvx_viol = float(np.max(mid - chord))

    report = ConditionReport(
        c1_ok=cvx_viol <= convexity_tol,
        c2_ok=lb_viol <= lower_tol and anchor_viol <= anchor_tol,
        c3_ok=floor_viol <= floor_tol,
        worst_violation=max(cvx_viol, lb_viol, anchor_viol, floor_viol),
        convexity_violation=cvx_viol,
        lower_bound_violation=lb_viol,
        anchor_violation=anchor_viol,
        floor_violation=floor_viol,
    )
    return report
