"""Evaluation quantities and the (m, gamma) grid search.

The grid search mirrors the subsampling experiment protocol: for every
subsample size m and repetition, draw a fresh plan from a seed derived
from (seed, m, repetition), fit on those rows, and score on the
validation set.  Cell seeds are pre-derived, so results cannot depend on
evaluation order; the Gram tensor is reused across the gamma axis because
it does not depend on gamma.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .model import Standardizer, _finish_fit, nystrom_sample, predict
from .kernels import build_packed_gram
from .solver import solve_dual

__all__ = [
    "EvalReport",
    "GridRow",
    "best_cell",
    "derive_cell_seed",
    "grid_search",
    "mse",
    "write_grid_csv",
]

GRID_CSV_COLUMNS = ("m", "gamma", "rep", "train_mse", "val_mse", "gram_seconds", "solve_seconds")


@dataclass(frozen=True)
class EvalReport:
    mse: float
    count: int
    true_positives: int | None = None
    false_positives: int | None = None
    gram_seconds: float = 0.0
    solve_seconds: float = 0.0


@dataclass(frozen=True)
class GridRow:
    m: int
    gamma: float
    rep: int
    train_mse: float
    val_mse: float
    gram_seconds: float
    solve_seconds: float


def mse(pred, y):
    """Mean squared residual, sum((pred - y)^2) / len(y)."""
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape != y.shape or pred.ndim != 1:
        raise ValueError(f"incompatible shapes pred {pred.shape}, y {y.shape}")
    if pred.size == 0:
        raise ValueError("mse needs at least one prediction")
    diff = pred - y
    return float(diff @ diff) / pred.size


def derive_cell_seed(seed, m, rep):
    """Per-cell seed, a pure function of (seed, m, rep)."""
    return int(np.random.SeedSequence([int(seed), int(m), int(rep)]).generate_state(1)[0])


def grid_search(train, val, kernel, gammas, ms, cfg, seed, repetitions=1):
    """One GridRow per (m, gamma, repetition), deterministic for the seed.

    Every cell fits on a subsample of the training rows and reports MSE on
    the full training set and on the validation set, plus the Gram-build
    and solve wall times.
    """
    if not gammas or not ms:
        raise ValueError("gamma and m grids must be non-empty")
    rows = []
    for m in ms:
        for rep in range(repetitions):
            plan = nystrom_sample(train.n, m, derive_cell_seed(seed, m, rep))
            X_sub = train.X[plan.indices]
            y_sub = train.y[plan.indices]
            standardizer = Standardizer.fit(X_sub)
            points_std = standardizer.transform(X_sub)
            t0 = time.perf_counter()
            gram = build_packed_gram(kernel, points_std)
            gram_seconds = time.perf_counter() - t0
            for gamma in gammas:
                t1 = time.perf_counter()
                solution = solve_dual(gram, y_sub, replace(cfg, gamma=gamma))
                solve_seconds = time.perf_counter() - t1
                model = _finish_fit(
                    kernel, points_std, solution, standardizer,
                    gram_seconds, solve_seconds,
                )
                rows.append(
                    GridRow(
                        m=int(m),
                        gamma=float(gamma),
                        rep=rep,
                        train_mse=mse(predict(model, train.X), train.y),
                        val_mse=mse(predict(model, val.X), val.y),
                        gram_seconds=gram_seconds,
                        solve_seconds=solve_seconds,
                    )
                )
    return rows


def best_cell(rows):
    """argmin by val_mse; ties break toward smaller m, then smaller gamma."""
    return min(rows, key=lambda r: (r.val_mse, r.m, r.gamma))


def write_grid_csv(rows, fh):
    writer = csv.writer(fh)
    writer.writerow(GRID_CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [r.m, repr(r.gamma), r.rep, repr(r.train_mse), repr(r.val_mse),
             repr(r.gram_seconds), repr(r.solve_seconds)]
        )
