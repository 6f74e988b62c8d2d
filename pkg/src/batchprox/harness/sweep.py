"""Sweep execution over (problem, method, alpha0, m, cond, seed) grids.

Every cell derives its RNG stream from a stable 64-bit hash of the master
seed and the cell coordinates, so results are independent of execution
order and parallelism degree.  Cells sharing a problem instance (same
problem/cond/seed) are grouped so the instance and its reference optimum
are computed once.
"""

from __future__ import annotations

import hashlib
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import models, optimizers
from .config import MethodSpec, ProblemSpec, SweepConfig
from .results import CellResult


def stable_seed(*parts) -> int:
    """64-bit seed from a canonical string of the parts (stable across
    processes and sessions, unlike hash())."""
    key = "|".join(
        format(p, ".17g") if isinstance(p, float) else str(p) for p in parts
    )
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _instance_seed(master: int, prob: ProblemSpec, cond: float, seed: int) -> int:
    return stable_seed("instance", master, prob.kind, prob.N, prob.n,
                       prob.sigma, prob.p, prob.gamma, prob.delta, prob.radius,
                       cond, seed)


def _cell_seed(master: int, prob: ProblemSpec, cond: float, seed: int,
               ms: MethodSpec, m: int, alpha0: float) -> int:
    return stable_seed("cell", master, prob.kind, cond, seed, ms.method,
                       ms.accelerated, ms.schedule_kind, m, alpha0)


def _schedule(ms: MethodSpec, alpha0: float, inst):
    if ms.schedule_kind == "poly":
        return optimizers.poly_decay(alpha0, ms.beta)
    L = optimizers.smoothness_constant(inst)
    # alpha0 rescales the eta ramp so the grid still sweeps aggressiveness.
    return optimizers.smoothness_adaptive(L, eta0=1.0 / alpha0, power=ms.power)


def run_cell(prob: ProblemSpec, ms: MethodSpec, inst, cond: float, m: int,
             alpha0: float, seed: int, config: SweepConfig) -> CellResult:
    rng = np.random.default_rng(
        _cell_seed(config.master_seed, prob, cond, seed, ms, m, alpha0)
    )
    n_steps = max(1, config.sample_budget // m)
    record = optimizers.RecordOptions(stride=config.record_stride,
                                      record_average=False)
    kwargs = dict(m=m, n_steps=n_steps, rng=rng, record=record)
    strategy = models.strategy_from_id(ms.method)

    try:
        schedule = _schedule(ms, alpha0, inst)
        eps_abs = config.epsilon * _initial_gap(inst)
        if ms.accelerated:
            rec = optimizers.run_accelerated(inst, strategy, schedule,
                                             epsilon=eps_abs, **kwargs)
        else:
            rec = optimizers.run_base(inst, strategy, schedule,
                                      epsilon=eps_abs, **kwargs)
        status = rec.status
        k_conv = rec.k_converged
        final_gap = float(rec.gaps[-1])
    except Exception:
        status, k_conv, final_gap = optimizers.STATUS_INNERFAIL, None, float("nan")
    samples = None if k_conv is None else max(k_conv * m, m)
    return CellResult(
        problem=prob.label(), noise=prob.noise_label(), cond=float(cond),
        method=ms.method, accelerated=ms.accelerated, m=int(m),
        alpha0=float(alpha0), seed=int(seed),
        k_to_eps=(None if k_conv is None else max(k_conv, 1)),
        samples_to_eps=samples, final_gap=final_gap, status=status,
    )


def _initial_gap(inst) -> float:
    from .. import problems

    ref = problems.reference_optimum(inst)
    gap0 = problems.objective_value(inst, np.zeros(inst.n)) - ref.f_star
    return max(gap0, 1e-300)


def _run_instance_group(args):
    config, prob, cond, seed = args
    inst = prob.instantiate(cond, _instance_seed(config.master_seed, prob,
                                                 cond, seed))
    out = []
    for ms in config.methods:
        for m in config.m_grid:
            for alpha0 in config.alpha0_grid:
                out.append(run_cell(prob, ms, inst, cond, m, alpha0, seed,
                                    config))
    return out


def execute_sweep(config: SweepConfig, jobs: int = 1, progress=None):
    """Run every grid cell; per-cell failures become status rows, never
    abort the sweep.  Returns canonically sorted CellResult rows."""
    config.validate()
    groups = [
        (config, prob, cond, seed)
        for prob in config.problems
        for cond in config.cond_grid
        for seed in range(config.seeds)
    ]
    progress = progress if progress is not None else _stderr_progress
    rows = []
    if jobs <= 1:
        for i, group in enumerate(groups):
            rows.extend(_run_instance_group(group))
            progress(i + 1, len(groups))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, chunk in enumerate(pool.map(_run_instance_group, groups)):
                rows.extend(chunk)
                progress(i + 1, len(groups))
    rows.sort(key=lambda r: r.sort_key())
    return rows


def _stderr_progress(done: int, total: int):
    print(f"\rsweep: {done}/{total} instance groups", end="", file=sys.stderr)
    if done == total:
        print(file=sys.stderr)
