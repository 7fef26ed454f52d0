"""PDE benchmarks: residual rules, collocation sampling, and L2 evaluation.

Each problem exposes its interior residual both as a value and as
per-sample jet coefficients (the linearization of the residual in
(u, grads, diag2) at the current jets), which is exactly what the
reverse pass needs to build residual Jacobian rows. For nonlinear
residuals the coefficients depend on the current gradients.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .jets import JetBatch, JetCoeffs, forward_jets, scalar_pullback
from .mlp import MlpParams, forward_values

ResidualRule = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, JetCoeffs]]
ExactJets = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]

# how boundary samples are distributed for a problem
BND_SPATIAL = "spatial"
BND_INITIAL_AND_SPATIAL = "initial_and_spatial"
BND_INITIAL_ONLY = "initial_only"


@dataclass
class PdeProblem:
    name: str
    input_dim: int
    has_time: bool
    lo: np.ndarray
    hi: np.ndarray
    residual: ResidualRule  # (x, u, grads, diag2) -> (values, coeffs)
    boundary_data: Callable[[np.ndarray], np.ndarray]  # g on boundary/initial rows
    forcing: Callable[[np.ndarray], np.ndarray]
    exact_solution: Callable[[np.ndarray], np.ndarray]
    exact_jets: Optional[ExactJets] = None  # analytic (u*, grad u*, diag d2 u*)
    boundary_split: str = BND_SPATIAL

    @property
    def spatial_axes(self) -> range:
        return range(1, self.input_dim) if self.has_time else range(self.input_dim)


@dataclass
class Batch:
    x_int: np.ndarray  # (N_int, d)
    x_bnd: np.ndarray  # (N_bnd, d)
    bnd_kind: np.ndarray  # per-row tag: "spatial" | "initial"
    w_int: float  # 1/sqrt(N_int)
    w_bnd: float  # 1/sqrt(N_bnd)


@dataclass
class ResidualSystem:
    r: np.ndarray  # (N,)
    jac: np.ndarray  # (N, P)
    loss: float
    n_interior: int = 0


def _open_uniform(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray, n: int) -> np.ndarray:
    """Uniform samples strictly inside the box [lo, hi]."""
    d = lo.size
    x = rng.uniform(lo, hi, size=(n, d))
    # rng.uniform includes lo; redraw the (measure-zero) boundary hits
    for _ in range(100):
        on_edge = (x == lo) | (x == hi)
        if not on_edge.any():
            return x
        x[on_edge] = rng.uniform(np.broadcast_to(lo, x.shape)[on_edge],
                                 np.broadcast_to(hi, x.shape)[on_edge])
    raise RuntimeError("could not draw points strictly inside the box")


def _sample_faces(rng: np.random.Generator, lo: np.ndarray, hi: np.ndarray,
                  axes: list[int], n: int, d: int) -> np.ndarray:
    """n points on the faces of the box restricted to `axes`, face chosen uniformly."""
    x = rng.uniform(lo, hi, size=(n, d))
    face = rng.integers(0, 2 * len(axes), size=n)
    for i in range(n):
        axis = axes[face[i] // 2]
        x[i, axis] = hi[axis] if face[i] % 2 else lo[axis]
    return x


def sample_batch(problem: PdeProblem, rng: np.random.Generator,
                 n_interior: int, n_boundary: int,
                 weight_interior: float = 1.0, weight_boundary: float = 1.0) -> Batch:
    """Draw one collocation batch: uniform interior, face-uniform boundary.

    Time-dependent problems split the boundary budget evenly between the
    t=0 slab and the spatial boundary; initial-condition-only problems put
    the whole budget at t=0. The optional weights are domain-measure
    multipliers on the squared-loss terms (1 by default, so the residual
    scalings are exactly 1/sqrt(N)).
    """
    if n_interior < 1 or n_boundary < 1:
        raise ValueError("batch sizes must be >= 1")
    if weight_interior <= 0 or weight_boundary <= 0:
        raise ValueError("measure weights must be > 0")
    lo, hi, d = problem.lo, problem.hi, problem.input_dim
    x_int = _open_uniform(rng, lo, hi, n_interior)

    spatial = list(problem.spatial_axes)
    if problem.boundary_split == BND_SPATIAL:
        x_bnd = _sample_faces(rng, lo, hi, spatial, n_boundary, d)
        kind = np.full(n_boundary, "spatial")
    elif problem.boundary_split == BND_INITIAL_ONLY:
        x_bnd = rng.uniform(lo, hi, size=(n_boundary, d))
        x_bnd[:, 0] = lo[0]
        kind = np.full(n_boundary, "initial")
    elif problem.boundary_split == BND_INITIAL_AND_SPATIAL:
        n_init = (n_boundary + 1) // 2
        x_init = rng.uniform(lo, hi, size=(n_init, d))
        x_init[:, 0] = lo[0]
        x_sp = _sample_faces(rng, lo, hi, spatial, n_boundary - n_init, d)
        x_bnd = np.vstack([x_init, x_sp])
        kind = np.concatenate([np.full(n_init, "initial"),
                               np.full(n_boundary - n_init, "spatial")])
    else:
        raise ValueError(f"unknown boundary split {problem.boundary_split!r}")

    return Batch(x_int=x_int, x_bnd=x_bnd, bnd_kind=kind,
                 w_int=np.sqrt(weight_interior / n_interior),
                 w_bnd=np.sqrt(weight_boundary / n_boundary))


def residual_vector(problem: PdeProblem, params: MlpParams, batch: Batch) -> np.ndarray:
    """Scaled residuals without the Jacobian (cheap path for loss-only evals)."""
    jets = forward_jets(params, batch.x_int, with_time_axis=problem.has_time)
    r_int, _ = problem.residual(batch.x_int, jets.u, jets.grads, jets.diag2)
    u_bnd = forward_values(params, batch.x_bnd)
    r_bnd = u_bnd - problem.boundary_data(batch.x_bnd)
    return np.concatenate([batch.w_int * r_int, batch.w_bnd * r_bnd])


def batch_loss(problem: PdeProblem, params: MlpParams, batch: Batch) -> float:
    r = residual_vector(problem, params, batch)
    return 0.5 * float(r @ r)


def assemble_residual(problem: PdeProblem, params: MlpParams, batch: Batch) -> ResidualSystem:
    """Residual vector, its exact parameter Jacobian, and the batch loss."""
    jets = forward_jets(params, batch.x_int, with_time_axis=problem.has_time)
    r_int, coeffs = problem.residual(batch.x_int, jets.u, jets.grads, jets.diag2)
    jac_int = scalar_pullback(params, jets, coeffs)

    jets_bnd = forward_jets(params, batch.x_bnd, with_time_axis=problem.has_time)
    r_bnd = jets_bnd.u - problem.boundary_data(batch.x_bnd)
    jac_bnd = scalar_pullback(
        params, jets_bnd, JetCoeffs.values_only(len(r_bnd), problem.input_dim)
    )

    r = np.concatenate([batch.w_int * r_int, batch.w_bnd * r_bnd])
    jac = np.vstack([batch.w_int * jac_int, batch.w_bnd * jac_bnd])
    return ResidualSystem(r=r, jac=jac, loss=0.5 * float(r @ r), n_interior=len(r_int))


def eval_points(problem: PdeProblem, rng: np.random.Generator, n: int) -> np.ndarray:
    """Fixed evaluation set, uniform over the problem box."""
    return rng.uniform(problem.lo, problem.hi, size=(n, problem.input_dim))


def l2_error(problem: PdeProblem, params: MlpParams, points: np.ndarray,
             detail: bool = False):
    """Relative L2 error against the exact solution on a fixed point set.

    Falls back to the absolute RMS (flagged when detail=True) if the exact
    solution vanishes identically on the set.
    """
    u = forward_values(params, points)
    u_star = problem.exact_solution(points)
    num = np.linalg.norm(u - u_star)
    den = np.linalg.norm(u_star)
    if den == 0.0:
        value, relative = num / np.sqrt(len(points)), False
    else:
        value, relative = num / den, True
    return (float(value), relative) if detail else float(value)


# ---------------------------------------------------------------------------
# problem constructors


def make_poisson(d: int, variant: str = "cosine") -> PdeProblem:
    """-lap(u) = f on the unit box, Dirichlet data from the manufactured solution.

    cosine:   u*(x) = sum_i cos(pi x_i),  f = pi^2 u*
    harmonic: u*(x) = sum_i x_{2i-1} x_{2i}, f = 0 (even d only)
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    lo, hi = np.zeros(d), np.ones(d)

    if variant in ("cosine", "cos"):
        def exact(x):
            return np.cos(np.pi * x).sum(axis=1)

        def forcing(x):
            return np.pi**2 * np.cos(np.pi * x).sum(axis=1)

        def exact_jets(x):
            return (exact(x), -np.pi * np.sin(np.pi * x), -np.pi**2 * np.cos(np.pi * x))

        name = f"poisson{d}d_cos"
    elif variant == "harmonic":
        if d % 2:
            raise ValueError("harmonic variant needs even dimension")

        def exact(x):
            return (x[:, 0::2] * x[:, 1::2]).sum(axis=1)

        def forcing(x):
            return np.zeros(len(x))

        def exact_jets(x):
            g = np.empty_like(x)
            g[:, 0::2] = x[:, 1::2]
            g[:, 1::2] = x[:, 0::2]
            return (exact(x), g, np.zeros_like(x))

        name = f"poisson{d}d_harmonic"
    else:
        raise ValueError(f"unknown Poisson variant {variant!r}")

    def residual(x, u, grads, diag2):
        n = len(u)
        coeffs = JetCoeffs.zeros(n, d)
        coeffs.c_h = -np.ones((n, d))
        return -diag2.sum(axis=1) - forcing(x), coeffs

    return PdeProblem(
        name=name, input_dim=d, has_time=False, lo=lo, hi=hi,
        residual=residual, boundary_data=exact, forcing=forcing,
        exact_solution=exact, exact_jets=exact_jets, boundary_split=BND_SPATIAL,
    )


def make_heat(kappa: float = 0.25) -> PdeProblem:
    """4+1d heat equation du/dt = kappa lap_x(u) on [0,1] x [0,1]^4.

    Initial data sum_i sin(2 x_i); spatial boundary and exact solution
    exp(-t) sum_i sin(2 x_i) (exact for kappa = 1/4).
    """
    d = 5
    lo, hi = np.zeros(d), np.ones(d)

    def exact(x):
        return np.exp(-x[:, 0]) * np.sin(2.0 * x[:, 1:]).sum(axis=1)

    def exact_jets(x):
        decay = np.exp(-x[:, 0])
        u = decay * np.sin(2.0 * x[:, 1:]).sum(axis=1)
        g = np.empty_like(x)
        g[:, 0] = -u
        g[:, 1:] = 2.0 * decay[:, None] * np.cos(2.0 * x[:, 1:])
        h = np.empty_like(x)
        h[:, 0] = u
        h[:, 1:] = -4.0 * decay[:, None] * np.sin(2.0 * x[:, 1:])
        return u, g, h

    def residual(x, u, grads, diag2):
        n = len(u)
        coeffs = JetCoeffs.zeros(n, d)
        coeffs.c_g[:, 0] = 1.0
        coeffs.c_h[:, 1:] = -kappa
        return grads[:, 0] - kappa * diag2[:, 1:].sum(axis=1), coeffs

    return PdeProblem(
        name="heat4+1d", input_dim=d, has_time=True, lo=lo, hi=hi,
        residual=residual, boundary_data=exact,
        forcing=lambda x: np.zeros(len(x)),
        exact_solution=exact, exact_jets=exact_jets,
        boundary_split=BND_INITIAL_AND_SPATIAL,
    )


def fokker_planck_variance(t: np.ndarray) -> np.ndarray:
    """Per-axis variance of the Gaussian reference density at time t."""
    return np.exp(-t) + (1.0 - np.exp(-t)) * 2.0


def make_log_fokker_planck() -> PdeProblem:
    """9+1d Fokker-Planck in log space on [0,1] x [-5,5]^9.

    dq/dt - d/2 - (1/2) grad(q).x - |grad(q)|^2 - lap(q) = 0 with
    q(0, .) = log of a standard normal density; the residual is nonlinear
    in grad(q), so the jet coefficients are its linearization at the
    current gradients.
    """
    d_sp = 9
    d = d_sp + 1
    lo = np.concatenate([[0.0], -5.0 * np.ones(d_sp)])
    hi = np.concatenate([[1.0], 5.0 * np.ones(d_sp)])

    def exact(x):
        s = fokker_planck_variance(x[:, 0])
        sq = (x[:, 1:] ** 2).sum(axis=1)
        return -0.5 * d_sp * np.log(2.0 * np.pi * s) - sq / (2.0 * s)

    def exact_jets(x):
        s = fokker_planck_variance(x[:, 0])
        ds = np.exp(-x[:, 0])  # d/dt of the variance
        sq = (x[:, 1:] ** 2).sum(axis=1)
        u = -0.5 * d_sp * np.log(2.0 * np.pi * s) - sq / (2.0 * s)
        g = np.empty_like(x)
        g[:, 0] = -0.5 * d_sp * ds / s + sq * ds / (2.0 * s**2)
        g[:, 1:] = -x[:, 1:] / s[:, None]
        h = np.zeros_like(x)
        # second t-derivative never enters the residual; keep the exact value anyway
        h[:, 0] = (-0.5 * d_sp * (-ds * s - ds * ds) / s**2
                   + sq * (-ds * s**2 - ds * 2.0 * s * ds) / (2.0 * s**4))
        h[:, 1:] = -1.0 / s[:, None]
        return u, g, h

    def residual(x, u, grads, diag2):
        n = len(u)
        gx = grads[:, 1:]
        vals = (grads[:, 0] - 0.5 * d_sp
                - 0.5 * (gx * x[:, 1:]).sum(axis=1)
                - (gx**2).sum(axis=1)
                - diag2[:, 1:].sum(axis=1))
        coeffs = JetCoeffs.zeros(n, d)
        coeffs.c_g[:, 0] = 1.0
        coeffs.c_g[:, 1:] = -0.5 * x[:, 1:] - 2.0 * gx
        coeffs.c_h[:, 1:] = -1.0
        return vals, coeffs

    return PdeProblem(
        name="logfp9+1d", input_dim=d, has_time=True, lo=lo, hi=hi,
        residual=residual, boundary_data=exact,
        forcing=lambda x: np.zeros(len(x)),
        exact_solution=exact, exact_jets=exact_jets,
        boundary_split=BND_INITIAL_ONLY,
    )


_POISSON_NAME = re.compile(r"^poisson(\d+)d_(cos|cosine|harmonic)$")


def make_problem(name: str) -> PdeProblem:
    """Problem lookup by config name (poisson{d}d_{cos|harmonic}, heat4+1d, logfp9+1d)."""
    if name == "heat4+1d":
        return make_heat()
    if name == "logfp9+1d":
        return make_log_fokker_planck()
    m = _POISSON_NAME.match(name)
    if m:
        return make_poisson(int(m.group(1)), m.group(2))
    raise ValueError(f"unknown problem {name!r}")
