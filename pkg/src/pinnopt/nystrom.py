"""Randomized Nyström approximation of PSD operators and diagnostics.

The production path never forms or decomposes the operator: it sketches
with a Gaussian test matrix, embeds a tiny spectral shift nu so the l x l
Gram stays positive definite, and factors everything with Cholesky and
triangular solves. The returned pair (B, L) supports fast regularized
inverse-apply through the Woodbury identity:

    (B B^T + lam I)^{-1} v = v/lam - (1/lam) B (L^{-T} (L^{-1} (B^T v)))

The classic SVD-based construction is kept as a dense oracle for tests
and benchmarking comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular


class SketchDegenerateError(np.linalg.LinAlgError):
    pass


@dataclass
class NystromApprox:
    """Factor pair of a shifted Nyström approximation A_hat = B B^T."""

    b: np.ndarray  # (n, l)
    chol: np.ndarray  # (l, l) lower Cholesky factor of B^T B + lam I
    lam: float
    nu: float  # embedded shift: B B^T approximates A + nu I
    sketch_size: int

    def dense(self) -> np.ndarray:
        return self.b @ self.b.T


@dataclass
class Spectrum:
    """Eigenvalues of a PSD matrix, descending, clamped at zero."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        self.eigenvalues = np.sort(np.maximum(ev, 0.0))[::-1]


def nystrom_gpu_efficient(
    apply_a: Callable[[np.ndarray], np.ndarray],
    n: int,
    sketch_size: int,
    lam: float,
    rng: Optional[np.random.Generator] = None,
    omega: Optional[np.ndarray] = None,
) -> NystromApprox:
    """Cholesky-only randomized Nyström approximation of a PSD operator.

    `apply_a` multiplies the operator against an (n, l) block. The test
    matrix is not orthonormalized and no SVD is taken; instead the result
    approximates A + nu I for nu = eps * ||A Omega||_F. A failed Cholesky
    of the sketch Gram is retried once with a fresh test matrix.
    """
    if not 1 <= sketch_size <= n:
        raise ValueError(f"sketch size must be in [1, {n}], got {sketch_size}")
    if lam <= 0:
        raise ValueError("regularizer must be > 0")
    if omega is None and rng is None:
        raise ValueError("either rng or omega is required")

    attempts = 1 if omega is not None else 2
    for _ in range(attempts):
        om = omega if omega is not None else rng.standard_normal((n, sketch_size))
        y = apply_a(om)
        nu = float(np.finfo(np.float64).eps * np.linalg.norm(y, "fro"))
        y_nu = y + nu * om
        gram = om.T @ y_nu
        gram = 0.5 * (gram + gram.T)
        try:
            c = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            continue
        b = solve_triangular(c, y_nu.T, lower=True).T  # B = Y_nu C^{-T}
        inner = b.T @ b + lam * np.eye(sketch_size)
        chol = np.linalg.cholesky(0.5 * (inner + inner.T))
        return NystromApprox(b=b, chol=chol, lam=lam, nu=nu, sketch_size=sketch_size)
    raise SketchDegenerateError(
        "sketch degenerate: Cholesky of the sketch Gram failed on retry"
    )


def nystrom_inv_apply(approx: NystromApprox, v: np.ndarray) -> np.ndarray:
    """Apply (B B^T + lam I)^{-1} via the stored Woodbury factors."""
    t = approx.b.T @ v
    t = solve_triangular(approx.chol, t, lower=True)
    t = solve_triangular(approx.chol.T, t, lower=False)
    return (v - approx.b @ t) / approx.lam


@dataclass
class StableNystromFactors:
    """Eigen-form U diag(lam_hat) U^T of the stable Nyström approximation."""

    u: np.ndarray  # (n, l)
    lam_hat: np.ndarray  # (l,)
    nu: float


def nystrom_stable_factors(
    a: np.ndarray,
    sketch_size: int,
    rng: Optional[np.random.Generator] = None,
    omega: Optional[np.ndarray] = None,
) -> StableNystromFactors:
    """Classic stable Nyström (QR + shift + Cholesky + SVD), eigen factors.

    Oracle/benchmark path only: takes a dense PSD matrix; the shift is
    subtracted back out of the eigenvalues.
    """
    n = a.shape[0]
    if not 1 <= sketch_size <= n:
        raise ValueError(f"sketch size must be in [1, {n}], got {sketch_size}")
    if omega is None:
        if rng is None:
            raise ValueError("either rng or omega is required")
        omega = rng.standard_normal((n, sketch_size))
    q, _ = np.linalg.qr(omega)
    y = a @ q
    nu = float(np.finfo(np.float64).eps * np.linalg.norm(y, "fro"))
    y_nu = y + nu * q
    gram = q.T @ y_nu
    gram = 0.5 * (gram + gram.T)
    c = np.linalg.cholesky(gram)
    b = solve_triangular(c, y_nu.T, lower=True).T
    u, sig, _ = np.linalg.svd(b, full_matrices=False)
    lam_hat = np.maximum(sig**2 - nu, 0.0)
    return StableNystromFactors(u=u, lam_hat=lam_hat, nu=nu)


def nystrom_stable(
    a: np.ndarray,
    sketch_size: int,
    rng: Optional[np.random.Generator] = None,
    omega: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Dense matrix form of the stable Nyström approximation."""
    f = nystrom_stable_factors(a, sketch_size, rng=rng, omega=omega)
    return (f.u * f.lam_hat) @ f.u.T


def nystrom_stable_inv_apply(factors: StableNystromFactors, lam: float,
                             v: np.ndarray) -> np.ndarray:
    """Apply (U diag(lam_hat) U^T + lam I)^{-1} from the eigen factors."""
    coeff = 1.0 / (factors.lam_hat + lam) - 1.0 / lam
    return v / lam + factors.u @ (coeff * (factors.u.T @ v))


def randomized_direction(
    jac: np.ndarray,
    zeta: np.ndarray,
    lam: float,
    sketch_size: int,
    rng: Optional[np.random.Generator] = None,
    omega: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Sketch-and-solve direction J^T (nys(J J^T) + lam I)^{-1} zeta.

    The kernel is never materialized: sketch products go through the
    factored matvec J (J^T block) at O(N P l) cost.
    """
    n = jac.shape[0]
    approx = nystrom_gpu_efficient(
        lambda block: jac @ (jac.T @ block), n, sketch_size, lam, rng=rng, omega=omega
    )
    return jac.T @ nystrom_inv_apply(approx, zeta)


def kernel_spectrum(kernel: np.ndarray, sym_tol: float = 1e-10) -> Spectrum:
    """Full symmetric eigendecomposition, clamped at zero, descending."""
    scale = max(np.abs(kernel).max(), 1.0)
    if np.abs(kernel - kernel.T).max() > sym_tol * scale:
        raise ValueError("kernel matrix is not symmetric")
    return Spectrum(np.linalg.eigvalsh(kernel))


def effective_dimension(spectrum: Spectrum, lam: float) -> float:
    """Smooth eigenvalue count sum_i lam_i / (lam_i + lam)."""
    if lam <= 0:
        raise ValueError("regularizer must be > 0")
    ev = spectrum.eigenvalues
    return float(np.sum(ev / (ev + lam)))
