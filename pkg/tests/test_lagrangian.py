import math

import numpy as np
import pytest

from conftest import EPS, fd_gradient, fd_hessian, random_stencil, smooth_eta_derivs, stencil_fn

from chms.errors import NonMonotone
from chms.lagrangian import (
    Stencil,
    continuous_density,
    eval_L,
    eval_from_parts,
    grad_L,
    grad_from_parts,
    hess_L,
    hess_full_from_parts,
    stencil_parts,
)


def test_eval_examples():
    assert eval_L(Stencil(0, 1, 1, 0, 1, 1)) == 0.0
    assert eval_L(Stencil(0, 1, 2, 1, 1, 1)) == pytest.approx(0.5, abs=1e-15)
    assert eval_L(Stencil(0, 0.5, 1.0, 0.3, 1, 1)) == pytest.approx(0.0625, abs=1e-15)


def test_eval_rejects_flat_bottom_edge():
    with pytest.raises(NonMonotone):
        eval_L(Stencil(0.0, 0.0, 1.0, 0.5, 1, 1))
    with pytest.raises(NonMonotone):
        eval_L(Stencil(0.0, 5e-9, 1.0, 0.5, 1, 1))  # below the 1e-8*h cutoff


def test_grad_example():
    g = grad_L(Stencil(0, 0.5, 1.0, 0.3, 1, 1))
    assert g.g4 == pytest.approx(-0.25, abs=1e-15)


def test_grad_components_sum_to_zero(rng):
    for _ in range(300):
        s = random_stencil(rng, h=rng.uniform(0.5, 2.0), k=rng.uniform(0.5, 2.0))
        g = grad_L(s)
        scale = sum(abs(v) for v in (g.g1, g.g2, g.g3, g.g4))
        assert abs(g.g1 + g.g2 + g.g3 + g.g4) <= 8.0 * EPS * max(scale, 1.0)


def test_grad_matches_finite_differences(rng):
    for _ in range(200):
        h, k = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
        s = random_stencil(rng, h, k)
        g = grad_L(s).as_array()
        fd = fd_gradient(stencil_fn(h, k), [s.y1, s.y2, s.y3, s.y4])
        assert np.max(np.abs(fd - g)) <= 1e-7 * max(1.0, np.max(np.abs(g)))


def test_hess_symmetric_and_row_sums(rng):
    for _ in range(300):
        s = random_stencil(rng)
        m = hess_L(s).matrix
        assert np.array_equal(m, m.T)
        scale = np.max(np.abs(m))
        assert np.max(np.abs(m @ np.ones(4))) <= 16.0 * EPS * max(scale, 1.0)


def test_hess_matches_finite_differences(rng):
    for _ in range(100):
        h, k = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
        s = random_stencil(rng, h, k)
        m = hess_L(s).matrix
        fd = fd_hessian(stencil_fn(h, k), [s.y1, s.y2, s.y3, s.y4])
        assert np.max(np.abs(fd - m)) <= 1e-5 * max(1.0, np.max(np.abs(m)))


def test_translation_invariance(rng):
    for _ in range(200):
        s = random_stencil(rng)
        c = rng.uniform(-2.0, 2.0)
        shifted = Stencil(s.y1 + c, s.y2 + c, s.y3 + c, s.y4 + c, s.h, s.k)
        base = eval_L(s)
        assert abs(eval_L(shifted) - base) <= 1e-13 * max(1.0, abs(base))


def test_density_examples():
    assert continuous_density(1.0, 0.0, 0.0) == 0.0
    assert continuous_density(1.0, 0.7, 0.0) == pytest.approx(0.245, abs=1e-15)
    assert continuous_density(2.0, 1.0, 1.0) == pytest.approx(1.25, abs=1e-15)
    with pytest.raises(NonMonotone):
        continuous_density(0.0, 1.0, 1.0)
    with pytest.raises(NonMonotone):
        continuous_density(-1.0, 1.0, 1.0)


def test_discrete_lagrangian_consistent_with_density():
    """Forward-difference sampling converges to the density at first order."""
    alpha, x, t = 0.3, 1.3, 0.7
    d = smooth_eta_derivs(x, t, alpha)
    target = continuous_density(d["eta_x"], d["eta_t"], d["eta_tx"])

    def sampled_error(h, k):
        def eta(xx, tt):
            return xx + alpha * math.sin(xx - tt)

        s = Stencil(
            eta(x, t), eta(x + h, t), eta(x + h, t + k), eta(x, t + k), h, k
        )
        return abs(eval_L(s) - target)

    e1 = sampled_error(0.02, 0.02)
    e2 = sampled_error(0.01, 0.01)
    assert e1 / e2 >= 2.0**0.8


def test_array_kernels_match_scalar(rng):
    h, k = 0.7, 0.4
    stencils = [random_stencil(rng, h, k) for _ in range(64)]
    y = np.array([[s.y1, s.y2, s.y3, s.y4] for s in stencils]).T
    a, b, c = stencil_parts(y[0], y[1], y[2], y[3], h, k)
    ev = eval_from_parts(a, b, c)
    g1, g2, g3, g4 = grad_from_parts(a, b, c, h, k)
    hess = hess_full_from_parts(a, b, c, h, k)
    for n, s in enumerate(stencils):
        assert ev[n] == pytest.approx(eval_L(s), rel=1e-14)
        g = grad_L(s)
        assert (g1[n], g2[n], g3[n], g4[n]) == pytest.approx(
            (g.g1, g.g2, g.g3, g.g4), rel=1e-13, abs=1e-14
        )
        assert np.allclose(hess[n], hess_L(s).matrix, rtol=1e-13, atol=1e-13)
