"""Dual solver for the kernelized l^p-regularized least-squares problem.

The dual objective over coefficients alpha is

    F(alpha) = (1/q) * sum K[i1..iq] alpha_i1 ... alpha_iq
             + ||alpha||^2 / (2*gamma) - <y, alpha>

a convex polynomial of degree q, minimized by gradient descent with Armijo
backtracking.  The degree-q term has no global Lipschitz gradient, so a
fixed step is unsafe; backtracking keeps every accepted step a strict
descent and the whole run deterministic.

For q = 2 with a linear kernel the minimizer solves the ridge system
(X X^T + I/gamma) alpha = y, available in closed form as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericError, ShapeError
from .symtensor import contract_gradient, contract_objective

__all__ = [
    "DualSolution",
    "TrainConfig",
    "conjugate_exponent",
    "dual_gradient",
    "dual_objective",
    "duality_map",
    "krr_closed_form",
    "solve_dual",
]

# line searches below this step have hit float resolution; descending
# further is not certifiable
MIN_STEP = 1e-20


@dataclass(frozen=True)
class TrainConfig:
    """Solver settings.

    gamma is the regularization weight (the dual carries 1/(2*gamma), so
    larger gamma means weaker regularization).  The 40-iteration default
    budget is enough for stable weights; rel_tol stops earlier when the
    objective plateaus.
    """

    gamma: float
    max_iters: int = 40
    rel_tol: float = 1e-9
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError(f"backtrack_factor must be in (0, 1), got {self.backtrack_factor}")
        if not 0 < self.armijo_c < 1:
            raise ValueError(f"armijo_c must be in (0, 1), got {self.armijo_c}")
        if not self.initial_step > 0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")


@dataclass(frozen=True)
class DualSolution:
    """Result of solve_dual: coefficients plus the accepted-objective trace."""

    alpha: np.ndarray
    objective_trace: np.ndarray
    iters_run: int
    converged: bool


def duality_map(u, exponent):
    """Componentwise sign(u) * |u|**(exponent - 1); maps 0 to 0.

    This is the gradient of (1/e)*||.||_e^e.  The maps for conjugate
    exponents p and q (1/p + 1/q = 1) compose to the identity; for even
    integer exponents it reduces to the odd power u**(e-1).
    """
    if not exponent > 1:
        raise ValueError(f"duality map exponent must be > 1, got {exponent}")
    u = np.asarray(u, dtype=np.float64)
    return np.sign(u) * np.abs(u) ** (exponent - 1.0)


def conjugate_exponent(q):
    """p with 1/p + 1/q = 1, e.g. 4/3 for q = 4."""
    if not q > 1:
        raise ValueError(f"exponent must be > 1, got {q}")
    return q / (q - 1.0)


def _check_vectors(tensor, y, alpha):
    y = np.ascontiguousarray(y, dtype=np.float64)
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    if y.shape != (tensor.n,) or alpha.shape != (tensor.n,):
        raise ShapeError(
            f"y and alpha must have shape ({tensor.n},), got {y.shape} and {alpha.shape}"
        )
    return y, alpha


def dual_objective(tensor, y, gamma, alpha):
    """F(alpha) = contraction/q + ||alpha||^2/(2 gamma) - <y, alpha>."""
    y, alpha = _check_vectors(tensor, y, alpha)
    return (
        contract_objective(tensor, alpha)
        + float(alpha @ alpha) / (2.0 * gamma)
        - float(y @ alpha)
    )


def dual_gradient(tensor, y, gamma, alpha):
    """grad F(alpha) = contraction gradient + alpha/gamma - y."""
    y, alpha = _check_vectors(tensor, y, alpha)
    return contract_gradient(tensor, alpha) + alpha / gamma - y


def solve_dual(tensor, y, cfg):
    """Minimize the dual objective from alpha = 0.

    Each iteration takes a gradient step with Armijo backtracking: step
    eta is accepted once F(alpha - eta*g) <= F(alpha) - c*eta*||g||^2,
    with the search starting at min(initial_step, 2 * last accepted eta).
    Stops at max_iters or when the accepted objective change falls below
    rel_tol * max(1, |F|).  Fully deterministic for fixed inputs.
    """
    y, alpha = _check_vectors(tensor, y, np.zeros(tensor.n))
    f = dual_objective(tensor, y, cfg.gamma, alpha)
    if not np.isfinite(f):
        raise NumericError("dual objective is non-finite at alpha = 0")
    trace = [f]
    converged = False
    eta = cfg.initial_step
    for it in range(1, cfg.max_iters + 1):
        g = dual_gradient(tensor, y, cfg.gamma, alpha)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite dual gradient at iteration {it}")
        gg = float(g @ g)
        if gg == 0.0:
            converged = True
            break
        eta = min(cfg.initial_step, 2.0 * eta)
        accepted = False
        while eta >= MIN_STEP:
            candidate = alpha - eta * g
            f_new = dual_objective(tensor, y, cfg.gamma, candidate)
            # an overlong trial step can overflow the degree-q term; treat
            # that as a failed probe rather than an error
            if np.isfinite(f_new) and f_new <= f - cfg.armijo_c * eta * gg:
                accepted = True
                break
            eta *= cfg.backtrack_factor
        if not accepted:
            break
        delta = f - f_new
        alpha, f = candidate, f_new
        trace.append(f)
        if abs(delta) <= cfg.rel_tol * max(1.0, abs(f)):
            converged = True
            break
    return DualSolution(
        alpha=alpha,
        objective_trace=np.array(trace),
        iters_run=len(trace) - 1,
        converged=converged,
    )


def krr_closed_form(X, y, gamma):
    """Ridge dual coefficients: solve (X X^T + I/gamma) alpha = y.

    The system matrix is symmetric positive definite for any gamma > 0, so
    a Cholesky-backed solve applies.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"incompatible shapes X {X.shape}, y {y.shape}")
    H = X @ X.T + np.eye(X.shape[0]) / gamma
    try:
        return scipy.linalg.solve(H, y, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"ridge system solve failed: {exc}") from exc
