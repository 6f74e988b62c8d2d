"""Shared oracles for the test suite."""

import numpy as np

from batchprox import models


def grid_minimize(fun, center, half_width, resolution=1e-3):
    """Dense-grid minimization oracle over a box around ``center``.

    Expands the box until the argmin is strictly interior (sound for the
    strongly convex prox objectives).  Returns the grid argmin.
    """
    center = np.asarray(center, dtype=float)
    hw = half_width
    for _ in range(8):
        axes = [np.arange(c - hw, c + hw + resolution / 2, resolution)
                for c in center]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        vals = fun(pts)
        i = int(np.argmin(vals))
        best = pts[i]
        if np.all(np.abs(best - center) < hw - resolution):
            return best
        center, hw = best, hw * 2
    raise AssertionError("grid oracle failed to bracket the minimizer")


def primal_fn(model, center, alpha):
    def fun(pts):
        mv = np.asarray(models.evaluate_model(model, pts))
        d = pts - center
        return mv + (d * d).sum(axis=1) / (2 * alpha)

    return fun
