"""Property-based checks of the structural invariants."""

import math

import numpy as np
from hypothesis import given, settings, strategies as st

from pinnopt.mlp import MlpArchitecture, MlpParams, flatten_layers
from pinnopt.nystrom import Spectrum, effective_dimension
from pinnopt.optim import constrained_update

widths = st.lists(st.integers(1, 12), min_size=1, max_size=3)


@settings(max_examples=50, deadline=None)
@given(widths=widths, seed=st.integers(0, 2**31 - 1))
def test_flatten_unflatten_roundtrip(widths, seed):
    arch = MlpArchitecture((3, *widths, 1))
    rng = np.random.default_rng(seed)
    params = MlpParams(arch, rng.normal(size=arch.n_params))
    rebuilt = flatten_layers(arch, params.unflatten())
    assert np.array_equal(rebuilt.theta, params.theta)


@settings(max_examples=50, deadline=None)
@given(
    eigs=st.lists(st.floats(0.0, 1e6, allow_nan=False), min_size=1, max_size=30),
    exponents=st.lists(st.integers(-12, 3), min_size=2, max_size=6, unique=True),
)
def test_effective_dimension_bounded_and_monotone(eigs, exponents):
    spec = Spectrum(np.array(eigs))
    n = len(eigs)
    lams = [10.0**e for e in sorted(exponents)]
    values = [effective_dimension(spec, lam) for lam in lams]
    assert all(0.0 <= v <= n for v in values)
    top = spec.eigenvalues[0]
    for (lam_a, a), b in zip(zip(lams, values), values[1:]):
        assert b <= a
        # strictness needs lam resolvable against the spectrum in floats
        if top > 0 and lam_a >= 100 * np.finfo(np.float64).eps * top:
            assert b < a
        if top == 0:
            assert b == a == 0.0


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    eta=st.floats(1e-6, 10.0),
    c=st.floats(1e-8, 10.0),
    scale=st.floats(1e-6, 1e6),
)
def test_constrained_update_norm_bound(seed, eta, c, scale):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=5)
    phi = rng.normal(size=5) * scale
    step = np.linalg.norm(constrained_update(theta, phi, eta, c) - theta)
    full = eta * np.linalg.norm(phi)
    # recovering the step by subtraction costs a few ulps of ||theta||
    slack = 1e-12 * np.linalg.norm(theta)
    assert step <= full * (1 + 1e-9) + slack
    assert step <= max(full, math.sqrt(c)) * (1 + 1e-9) + slack
