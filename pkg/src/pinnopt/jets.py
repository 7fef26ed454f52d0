"""Second-order jet propagation through tanh MLPs and its reverse pass.

For each sample and each input axis e_j the forward pass carries a 2-jet
(u, du/dv, d2u/dv2) with v = e_j through every layer:

    linear:  (u, g, h) -> (W u + b, W g, W h)
    tanh:    (u, g, h) -> (s, s' g, s'' g^2 + s' h)       s = tanh(u)

Summing the per-axis second derivatives gives the exact Laplacian at the
cost of d independent jets. Every intermediate needed to differentiate a
scalar of (u, grads, diag2) with respect to the parameters is recorded on
a tape; `scalar_pullback` runs the exact reverse sweep over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mlp import MlpParams


@dataclass(frozen=True)
class Jet2:
    """Scalar 2-jet: value, first and second directional derivative."""

    value: float
    d1: float
    d2: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.value, self.d1, self.d2)):
            raise ValueError(f"jet entries must be finite: {self}")


@dataclass
class _LayerTape:
    # inputs of the layer's linear map
    a_prev: np.ndarray  # (N, w_in)
    g_prev: np.ndarray  # (N, d, w_in)
    h_prev: np.ndarray  # (N, d, w_in)
    # tanh-side intermediates; None on the final (affine) layer
    s: Optional[np.ndarray] = None  # tanh(z), (N, w_out)
    gz: Optional[np.ndarray] = None  # (N, d, w_out)
    hz: Optional[np.ndarray] = None  # (N, d, w_out)


@dataclass
class JetBatch:
    """Propagated jets for a batch: values, gradients, per-axis second derivatives."""

    u: np.ndarray  # (N,)
    grads: np.ndarray  # (N, d)
    diag2: np.ndarray  # (N, d)
    tape: Optional[list[_LayerTape]] = field(default=None, repr=False)
    time_axis: Optional[int] = None

    @property
    def n_samples(self) -> int:
        return self.u.shape[0]

    @property
    def n_axes(self) -> int:
        return self.grads.shape[1]

    def laplacian(self) -> np.ndarray:
        """Sum of second directional derivatives over all input axes."""
        return self.diag2.sum(axis=1)

    def spatial_laplacian(self) -> np.ndarray:
        """Laplacian over spatial axes only (skips the flagged time axis)."""
        if self.time_axis is None:
            return self.laplacian()
        keep = [j for j in range(self.n_axes) if j != self.time_axis]
        return self.diag2[:, keep].sum(axis=1)

    def replay(self, params: MlpParams) -> "JetBatch":
        """Re-run the forward pass from the tape's recorded inputs."""
        if self.tape is None:
            raise ValueError("jet batch has no tape to replay")
        x = self.tape[0].a_prev
        return forward_jets(params, x, with_time_axis=self.time_axis is not None)


@dataclass
class JetCoeffs:
    """Per-sample weights of the scalar s_i = c_u u_i + c_g . grads_i + c_h . diag2_i."""

    c_u: np.ndarray  # (N,)
    c_g: np.ndarray  # (N, d)
    c_h: np.ndarray  # (N, d)

    @classmethod
    def zeros(cls, n: int, d: int) -> "JetCoeffs":
        return cls(np.zeros(n), np.zeros((n, d)), np.zeros((n, d)))

    @classmethod
    def values_only(cls, n: int, d: int) -> "JetCoeffs":
        c = cls.zeros(n, d)
        c.c_u = np.ones(n)
        return c


def forward_jets(params: MlpParams, x: np.ndarray, with_time_axis: bool = False) -> JetBatch:
    """Propagate axis-aligned 2-jets through the network, recording a tape.

    Returns exact values, input gradients, and per-axis second directional
    derivatives for every row of `x`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"x must be 2-d, got shape {x.shape}")
    n, d = x.shape
    if d != params.arch.input_dim:
        raise ValueError(f"x has {d} columns, network expects {params.arch.input_dim}")

    a = x
    # one jet per input axis: g starts as the axis direction, h as zero
    g = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    h = np.zeros((n, d, d))

    layers = params.unflatten()
    tape: list[_LayerTape] = []
    for i, (w, b) in enumerate(layers):
        rec = _LayerTape(a_prev=a, g_prev=g, h_prev=h)
        z = a @ w.T + b
        gz = g @ w.T
        hz = h @ w.T
        if i < len(layers) - 1:
            s = np.tanh(z)
            sp = 1.0 - s * s
            spp = -2.0 * s * sp
            rec.s, rec.gz, rec.hz = s, gz, hz
            a = s
            g = sp[:, None, :] * gz
            h = spp[:, None, :] * gz * gz + sp[:, None, :] * hz
        else:
            a, g, h = z, gz, hz
        tape.append(rec)

    return JetBatch(
        u=a[:, 0],
        grads=g[:, :, 0],
        diag2=h[:, :, 0],
        tape=tape,
        time_axis=0 if with_time_axis else None,
    )


def scalar_pullback(params: MlpParams, jets: JetBatch, coeffs: JetCoeffs) -> np.ndarray:
    """Per-sample parameter gradients of c_u*u + c_g.grads + c_h.diag2.

    Returns the (N, P) matrix whose row i is the gradient of the scalar
    s_i with respect to the flat parameter vector, by an exact reverse
    sweep over the recorded jet computation.
    """
    if jets.tape is None:
        raise ValueError("jet batch has no tape; rerun forward_jets")
    n, d = jets.n_samples, jets.n_axes
    c_u = np.asarray(coeffs.c_u, dtype=np.float64)
    c_g = np.asarray(coeffs.c_g, dtype=np.float64)
    c_h = np.asarray(coeffs.c_h, dtype=np.float64)
    if c_u.shape != (n,) or c_g.shape != (n, d) or c_h.shape != (n, d):
        raise ValueError(
            f"coeff shapes {c_u.shape}, {c_g.shape}, {c_h.shape} do not match batch ({n}, {d})"
        )

    layers = params.unflatten()
    arch = params.arch
    jac = np.empty((n, arch.n_params))

    # adjoint seeds at the (width-1) output
    abar = c_u[:, None]
    gbar = c_g[:, :, None]
    hbar = c_h[:, :, None]

    offsets = []
    off = 0
    for n_out, n_in in arch.layer_shapes():
        offsets.append(off)
        off += (n_in + 1) * n_out

    last = len(layers) - 1
    for i in range(last, -1, -1):
        w, _ = layers[i]
        rec = jets.tape[i]
        if i < last:
            s, gz, hz = rec.s, rec.gz, rec.hz
            sp = 1.0 - s * s
            spp = -2.0 * s * sp
            sppp = sp * (6.0 * s * s - 2.0)
            sp_b = sp[:, None, :]
            spp_b = spp[:, None, :]
            zbar = (
                abar * sp
                + (gbar * spp_b * gz).sum(axis=1)
                + (hbar * (sppp[:, None, :] * gz * gz + spp_b * hz)).sum(axis=1)
            )
            gzbar = gbar * sp_b + 2.0 * hbar * spp_b * gz
            hzbar = hbar * sp_b
        else:
            zbar, gzbar, hzbar = abar, gbar, hbar

        w_grad = np.einsum("no,ni->noi", zbar, rec.a_prev)
        w_grad += np.einsum("njo,nji->noi", gzbar, rec.g_prev)
        w_grad += np.einsum("njo,nji->noi", hzbar, rec.h_prev)

        n_out, n_in = w.shape
        o = offsets[i]
        jac[:, o : o + n_out * n_in] = w_grad.reshape(n, n_out * n_in)
        jac[:, o + n_out * n_in : o + (n_in + 1) * n_out] = zbar

        if i > 0:
            abar = zbar @ w
            gbar = gzbar @ w
            hbar = hzbar @ w

    return jac
