"""End-to-end estimator: subsample, build the Gram tensor, solve, predict.

Training standardizes the retained rows feature-wise (responses stay
raw), builds the packed Gram tensor on them and minimizes the dual.  For
the linear kernel the primal weights come straight from the representer
formula w = J_q(X~^T alpha), giving O(d) prediction and the weight vector
that feature selection thresholds at twice its standard deviation.

Prediction for a general kernel evaluates

    f(x) = sum over (q-1)-tuples of retained points of
           k(x_i1, ..., x_iq-1, x) * alpha_i1 * ... * alpha_iq-1

folded over canonical (q-1)-tuples with multiplicity weights, the same
trick the packed Gram layout uses; cost grows as C(m+q-2, q-1)*d, fine
for desk-scale m.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataFormatError,
    RangeError,
    ShapeError,
    SubsampleError,
    UnsupportedKernelError,
)
from .kernels import EXP_SUM_LIMIT, TensorKernelSpec, build_packed_gram
from .solver import duality_map, solve_dual
from .symtensor import IndexScheme

__all__ = [
    "Model",
    "NystromPlan",
    "SelectionReport",
    "Standardizer",
    "fit",
    "load_model",
    "nystrom_sample",
    "predict",
    "predict_generic",
    "predict_linear_fast",
    "save_model",
    "select_features",
]

_PREDICT_CHUNK = 1 << 15


@dataclass(frozen=True)
class Standardizer:
    """Per-feature mean/std fitted on the retained rows."""

    means: np.ndarray
    stds: np.ndarray

    @classmethod
    def fit(cls, X):
        means = X.mean(axis=0)
        stds = X.std(axis=0)
        stds = np.where(stds == 0.0, 1.0, stds)  # constant columns pass through
        return cls(means=means, stds=stds)

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.means.shape[0]:
            raise ShapeError(
                f"expected feature dimension {self.means.shape[0]}, got {X.shape[-1]}"
            )
        return (X - self.means) / self.stds


@dataclass(frozen=True)
class NystromPlan:
    """Uniform without-replacement subsample of the training rows."""

    n_train: int
    m: int
    seed: int
    indices: np.ndarray


def nystrom_sample(n_train, m, seed):
    """Draw m of n_train row indices, sorted; deterministic per seed."""
    n_train = int(n_train)
    m = int(m)
    if n_train < 1:
        raise SubsampleError(f"n_train must be >= 1, got {n_train}")
    if not 1 <= m <= n_train:
        raise SubsampleError(f"subsample size must lie in [1, {n_train}], got {m}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), n_train, m]))
    indices = np.sort(rng.choice(n_train, size=m, replace=False))
    return NystromPlan(n_train=n_train, m=m, seed=int(seed), indices=indices)


@dataclass(frozen=True)
class Model:
    """Fitted estimator.

    retained_points live in standardized space; weights are present
    exactly for the linear kernel and equal J_q(X~^T alpha).
    """

    kernel: TensorKernelSpec
    retained_points: np.ndarray
    alpha: np.ndarray
    standardizer: Standardizer
    weights: np.ndarray | None = None
    gram_seconds: float = 0.0
    solve_seconds: float = 0.0
    converged: bool = True
    iters_run: int = 0

    @property
    def m(self):
        return self.retained_points.shape[0]

    @property
    def d(self):
        return self.retained_points.shape[1]


def _finish_fit(kernel, points_std, solution, standardizer, gram_seconds, solve_seconds):
    weights = None
    if kernel.family == "linear":
        weights = duality_map(points_std.T @ solution.alpha, kernel.q)
    return Model(
        kernel=kernel,
        retained_points=points_std,
        alpha=solution.alpha,
        standardizer=standardizer,
        weights=weights,
        gram_seconds=gram_seconds,
        solve_seconds=solve_seconds,
        converged=solution.converged,
        iters_run=solution.iters_run,
    )


def fit(X_train, y_train, kernel, cfg, plan=None):
    """Fit on the rows selected by ``plan`` (all rows when plan is None)."""
    X = np.asarray(X_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"incompatible shapes X {X.shape}, y {y.shape}")
    if plan is None:
        plan = nystrom_sample(X.shape[0], X.shape[0], seed=cfg.seed)
    if plan.n_train != X.shape[0]:
        raise SubsampleError(
            f"plan was drawn for n_train={plan.n_train}, data has {X.shape[0]} rows"
        )
    rows = plan.indices
    standardizer = Standardizer.fit(X[rows])
    points_std = standardizer.transform(X[rows])
    t0 = time.perf_counter()
    gram = build_packed_gram(kernel, points_std)
    t1 = time.perf_counter()
    solution = solve_dual(gram, y[rows], cfg)
    t2 = time.perf_counter()
    return _finish_fit(kernel, points_std, solution, standardizer, t1 - t0, t2 - t1)


def _tuple_products(model, scheme):
    """Per-slot alpha products and row products over canonical (q-1)-tuples."""
    idx = scheme.index_matrix()
    aprod = model.alpha[idx[:, 0]].copy()
    for k in range(1, scheme.order):
        aprod *= model.alpha[idx[:, k]]
    weights = scheme.multiplicities().astype(np.float64) * aprod
    return idx, weights


def _apply_family_batch(spec, sums):
    if spec.family == "linear":
        return sums
    if spec.family == "polynomial":
        return np.power(sums, spec.degree)
    if np.any(np.abs(sums) > EXP_SUM_LIMIT):
        raise RangeError(
            f"exponential kernel sum exceeds the overflow guard of {EXP_SUM_LIMIT}"
        )
    return np.exp(sums)


def _predict_generic_batch(model, X_std):
    q = model.kernel.q
    scheme = IndexScheme(model.m, q - 1)
    idx, weights = _tuple_products(model, scheme)
    pts = model.retained_points
    out = np.zeros(X_std.shape[0])
    for start in range(0, len(idx), _PREDICT_CHUNK):
        block = idx[start : start + _PREDICT_CHUNK]
        rowprod = pts[block[:, 0]].copy()
        for k in range(1, q - 1):
            rowprod *= pts[block[:, k]]
        sums = rowprod @ X_std.T  # (chunk, batch) kernel pre-sums
        out += weights[start : start + _PREDICT_CHUNK] @ _apply_family_batch(
            model.kernel, sums
        )
    return out


def predict_generic(model, x):
    """Kernel-sum prediction for one point; works for every family."""
    x_std = model.standardizer.transform(np.asarray(x, dtype=np.float64))
    if x_std.ndim != 1:
        raise ShapeError(f"expected a single d-vector, got shape {x_std.shape}")
    return float(_predict_generic_batch(model, x_std[None, :])[0])


def predict_linear_fast(model, x):
    """<w, standardize(x)>; linear kernel only, O(d)."""
    if model.weights is None:
        raise UnsupportedKernelError(
            f"fast linear prediction needs a linear kernel, got {model.kernel.family!r}"
        )
    x_std = model.standardizer.transform(np.asarray(x, dtype=np.float64))
    if x_std.ndim != 1:
        raise ShapeError(f"expected a single d-vector, got shape {x_std.shape}")
    return float(model.weights @ x_std)


def predict(model, X):
    """Batch prediction, routed to the fast path for linear kernels."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X_std = model.standardizer.transform(np.atleast_2d(X))
    if model.weights is not None:
        out = X_std @ model.weights
    else:
        out = _predict_generic_batch(model, X_std)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class SelectionReport:
    """Features whose |weight| clears twice the weight standard deviation."""

    threshold: float
    selected: np.ndarray
    degenerate: bool = False
    true_positives: int | None = None
    false_positives: int | None = None


def select_features(model, truth=None):
    """Adaptive thresholding of the recovered weights at 2 * std.

    The std is the population standard deviation of all d weight entries
    (mean included).  Selection uses strict inequality; in the degenerate
    std = 0 case every nonzero entry is selected and the report is
    flagged.  ``truth`` is an optional iterable of true support indices.
    """
    if model.weights is None:
        raise UnsupportedKernelError(
            f"feature selection needs a linear kernel, got {model.kernel.family!r}"
        )
    w = model.weights
    std = float(w.std())
    threshold = 2.0 * std
    degenerate = std == 0.0
    if degenerate:
        selected = np.flatnonzero(np.abs(w) > 0.0)
    else:
        selected = np.flatnonzero(np.abs(w) > threshold)
    tp = fp = None
    if truth is not None:
        truth_set = set(int(i) for i in truth)
        tp = sum(1 for j in selected if int(j) in truth_set)
        fp = len(selected) - tp
    return SelectionReport(
        threshold=threshold,
        selected=selected,
        degenerate=degenerate,
        true_positives=tp,
        false_positives=fp,
    )


def save_model(model, path):
    """Serialize a model as a single JSON document.

    Floats use Python's shortest round-trip decimal form (17 significant
    digits always suffice), so loading reproduces the model exactly.
    """
    doc = {
        "kernel": model.kernel.family,
        "q": model.kernel.q,
        "means": [float(v) for v in model.standardizer.means],
        "stds": [float(v) for v in model.standardizer.stds],
        "retained_points": [[float(v) for v in row] for row in model.retained_points],
        "alpha": [float(v) for v in model.alpha],
    }
    if model.kernel.degree is not None:
        doc["degree"] = model.kernel.degree
    if model.weights is not None:
        doc["weights"] = [float(v) for v in model.weights]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    kernel = TensorKernelSpec(
        family=doc["kernel"], q=int(doc["q"]), degree=doc.get("degree")
    )
    weights = np.array(doc["weights"]) if "weights" in doc else None
    if (weights is not None) != (kernel.family == "linear"):
        raise DataFormatError(
            f"{path}: weights must be present exactly for linear kernels"
        )
    return Model(
        kernel=kernel,
        retained_points=np.array(doc["retained_points"], dtype=np.float64),
        alpha=np.array(doc["alpha"], dtype=np.float64),
        standardizer=Standardizer(
            means=np.array(doc["means"], dtype=np.float64),
            stds=np.array(doc["stds"], dtype=np.float64),
        ),
        weights=weights,
    )
