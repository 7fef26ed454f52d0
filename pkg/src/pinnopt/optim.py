"""Kernel-space natural-gradient optimizers.

The regularized Gauss-Newton direction (J^T J + lam I)^{-1} J^T r is
computed in sample space as J^T (J J^T + lam I)^{-1} r, so every linear
solve is N x N instead of P x P. SPRING layers momentum on top of the
same solve: it shifts the residual by the previous direction, adds the
shift back, and bias-corrects, with the applied update capped by a
norm constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.linalg import cho_solve, ldl

LINE_SEARCH_GRID = tuple(2.0**-i for i in range(31))


class IndefiniteKernelError(np.linalg.LinAlgError):
    pass


@dataclass
class KernelSystem:
    """Damped kernel K = J J^T with a cached Cholesky factor of K + lam I."""

    kernel: np.ndarray
    lam: float
    chol: np.ndarray  # lower triangular

    def solve(self, v: np.ndarray) -> np.ndarray:
        return cho_solve((self.chol, True), v)


def _cholesky_or_pivot_error(mat: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        _, d, _ = ldl(mat)
        pivot = float(np.diag(d).min())
        raise IndefiniteKernelError(
            f"indefinite kernel: smallest pivot {pivot:.6e}"
        ) from None


def build_kernel(jac: np.ndarray, lam: float) -> KernelSystem:
    """Form K = J J^T (symmetrized) and factor K + lam I."""
    if lam < 0:
        raise ValueError("damping must be >= 0")
    kernel = jac @ jac.T
    kernel = 0.5 * (kernel + kernel.T)
    shifted = kernel + lam * np.eye(kernel.shape[0])
    chol = _cholesky_or_pivot_error(shifted)
    return KernelSystem(kernel=kernel, lam=lam, chol=chol)


def kernel_with_retry(jac: np.ndarray, lam: float) -> KernelSystem:
    # kernels are near-singular early in training; retry once at 10x damping
    try:
        return build_kernel(jac, lam)
    except IndefiniteKernelError:
        return build_kernel(jac, 10.0 * lam)


def engdw_direction(jac: np.ndarray, r: np.ndarray, lam: float) -> np.ndarray:
    """Natural-gradient direction J^T (J J^T + lam I)^{-1} r."""
    if lam <= 0:
        raise ValueError("damping must be > 0")
    system = kernel_with_retry(jac, lam)
    return jac.T @ system.solve(r)


def bias_correction(mu: float, k: int) -> float:
    """Momentum bias factor 1/sqrt(1 - mu^(2k)) applied at step k."""
    return 1.0 / math.sqrt(1.0 - mu ** (2 * k))


@dataclass
class OptimizerState:
    """Iteration state of the momentum natural-gradient scheme."""

    phi_prev: np.ndarray  # previous direction, zero at start
    mu: float  # momentum in [0, 1)
    lam: float  # damping
    norm_constraint: float = 1e-3  # C; applied step capped at sqrt(C)
    k: int = 1  # current step index, starts at 1

    @classmethod
    def initial(cls, n_params: int, mu: float, lam: float,
                norm_constraint: float = 1e-3) -> "OptimizerState":
        return cls(phi_prev=np.zeros(n_params), mu=mu, lam=lam,
                   norm_constraint=norm_constraint)


def spring_step(state: OptimizerState, jac: np.ndarray, r: np.ndarray,
                solve: Optional[Callable[[np.ndarray], np.ndarray]] = None
                ) -> tuple[np.ndarray, OptimizerState]:
    """One momentum natural-gradient direction.

    Shift the residual by the previous direction, solve in sample space,
    add the shift back, bias-correct, and store the corrected direction
    for the next shift. `solve` overrides the damped-kernel solve (used
    by the sketched variant); it must apply an approximation of
    (J J^T + lam I)^{-1}.
    """
    if not 0.0 <= state.mu < 1.0:
        raise ValueError(f"momentum must be in [0, 1), got {state.mu}")
    if state.k < 1:
        raise ValueError("step index must be >= 1; the bias factor is undefined at 0")

    zeta = r - state.mu * (jac @ state.phi_prev)
    if solve is None:
        solve = kernel_with_retry(jac, state.lam).solve
    delta = jac.T @ solve(zeta)
    phi = (delta + state.mu * state.phi_prev) / math.sqrt(1.0 - state.mu ** (2 * state.k))
    return phi, replace(state, phi_prev=phi, k=state.k + 1)


def constrained_update(theta: np.ndarray, phi: np.ndarray, eta: float,
                       norm_constraint: float) -> np.ndarray:
    """theta - phi * min(eta, sqrt(C)/||phi||)."""
    norm = np.linalg.norm(phi)
    if norm == 0.0:
        return theta.copy()
    return theta - phi * min(eta, math.sqrt(norm_constraint) / norm)


class LineSearchResult(NamedTuple):
    eta: float
    loss: float
    stalled: bool


def line_search(loss_at: Callable[[np.ndarray], float], theta: np.ndarray,
                phi: np.ndarray) -> LineSearchResult:
    """Grid search over eta in {1, 1/2, ..., 2^-30} for theta - eta*phi.

    Ties break toward larger eta; if every candidate loss is non-finite
    the search reports a stall with eta = 0.
    """
    if not np.all(np.isfinite(phi)):
        raise ValueError("direction contains non-finite entries")
    if not np.any(phi):
        raise ValueError("direction is zero")
    best = LineSearchResult(eta=0.0, loss=math.inf, stalled=True)
    for eta in LINE_SEARCH_GRID:
        loss = loss_at(theta - eta * phi)
        if math.isfinite(loss) and loss < best.loss:
            best = LineSearchResult(eta=eta, loss=loss, stalled=False)
    return best


def sgd_step(theta: np.ndarray, grad: np.ndarray, lr: float, momentum: float,
             buffer: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Heavy-ball step: buf <- momentum*buf + grad, theta <- theta - lr*buf."""
    buffer = momentum * buffer + grad
    return theta - lr * buffer, buffer


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, n_params: int) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params))


def adam_step(theta: np.ndarray, grad: np.ndarray, lr: float, state: AdamState,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8
              ) -> tuple[np.ndarray, AdamState]:
    """Standard bias-corrected Adam update."""
    b1, b2 = betas
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta, AdamState(m=m, v=v, t=t)
