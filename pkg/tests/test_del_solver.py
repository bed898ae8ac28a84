import numpy as np
import pytest

from conftest import TWO_PI, cosine_u0, random_section

from chms.del_solver import (
    EXPANDED_SCALE,
    Section,
    SolverConfig,
    action_sum,
    advance_row,
    del_residual,
    del_residual_expanded,
    del_residual_row,
    evolve,
    initialize,
    solve_cyclic_tridiagonal,
    step,
)
from chms.errors import BadInitialData, NonMonotone, OutOfRange, SingularJacobian
from chms.grid import GridSpec, classify_region
from chms.lagrangian import jacobian_bands


def o1_grid(n_space=16, n_time=6):
    """Order-one spacings keep exact-solution floors at machine precision."""
    return GridSpec(n_space, n_time, 1.0, 0.5, float(n_space))


def interior_points(g):
    return [(i, j) for j in range(1, g.n_time - 1) for i in range(g.n_space)]


def test_rest_and_uniform_residuals_vanish():
    g = o1_grid()
    for s in (Section.identity(g), Section.uniform_translation(g, 0.3)):
        worst = max(abs(del_residual(s, p)) for p in interior_points(g))
        assert worst <= 1e-13


def test_affine_sections_are_exact():
    g = o1_grid()
    for c, b in [(0.4, 0.0), (-0.2, 1.5), (0.0, -0.7)]:
        s = Section.uniform_translation(g, c, offset=b)
        worst = max(abs(del_residual(s, p)) for p in interior_points(g))
        assert worst <= 1e-12


def test_row_residual_matches_pointwise(rng):
    g = o1_grid(n_space=9, n_time=5)
    s = random_section(g, rng)
    for j in range(1, g.n_time - 1):
        row = del_residual_row(s, j)
        for i in range(g.n_space):
            assert row[i] == pytest.approx(del_residual(s, (i, j)), rel=1e-12, abs=1e-12)


def test_residual_is_action_gradient(rng):
    g = o1_grid(n_space=8, n_time=5)
    for _ in range(20):
        s = random_section(g, rng)
        i = int(rng.integers(0, g.n_space))
        j = int(rng.integers(1, g.n_time - 1))
        window = classify_region(j - 1, j + 1, g)
        step_size = np.finfo(float).eps ** (1.0 / 3.0)

        def patch_action(value):
            d = s.displacement.copy()
            d[j, i] = value - i * g.h
            return action_sum(Section(g, d), window)

        base = s.y(i, j)
        fd = (patch_action(base + step_size) - patch_action(base - step_size)) / (2 * step_size)
        res = del_residual(s, (i, j))
        assert abs(fd - res) <= 1e-7 * max(1.0, abs(res))


def test_expanded_form_matches_gradient(rng):
    g = o1_grid(n_space=8, n_time=5)
    for _ in range(20):
        s = random_section(g, rng)
        for p in [(0, 1), (3, 2), (7, 3)]:
            raw = del_residual(s, p)
            expanded = del_residual_expanded(s, p)
            assert expanded == pytest.approx(EXPANDED_SCALE * raw, rel=1e-10, abs=1e-12)


def test_residual_requires_interior_point():
    g = o1_grid()
    s = Section.identity(g)
    with pytest.raises(OutOfRange):
        del_residual(s, (0, 0))
    with pytest.raises(OutOfRange):
        del_residual_expanded(s, (0, g.n_time - 1))


def test_action_examples():
    g = o1_grid(n_space=10, n_time=4)
    region = classify_region(0, 3, g)
    assert action_sum(Section.identity(g), region) == 0.0
    c = 0.4
    s = Section.uniform_translation(g, c)
    n_rects = len(region.rectangles())
    # every stencil has slope 1, velocity c, zero mixed difference
    assert action_sum(s, region) == pytest.approx(n_rects * c * c / 2.0, rel=1e-12)


def test_action_uniform_unit_spacings():
    g = GridSpec(10, 4, 1.0, 1.0, 10.0)
    c = 0.4
    region = classify_region(0, 3, g)
    s = Section.uniform_translation(g, c)
    assert action_sum(s, region) == pytest.approx(len(region.rectangles()) * c * c / 2.0, rel=1e-12)


def test_initialize_examples():
    h = TWO_PI / 64
    g = GridSpec.from_circle(64, 2, TWO_PI, 0.01 / h)  # k = 0.01
    assert g.k == pytest.approx(0.01)
    rest = initialize(lambda x: np.zeros_like(x), g)
    assert np.allclose(rest.displacement, 0.0)
    uni = initialize(lambda x: np.full_like(x, 0.25), g)
    assert np.allclose(uni.displacement[1], g.k * 0.25)
    cos = initialize(cosine_u0(0.1, TWO_PI), g)
    inc = np.diff(np.append(cos.row_y(1), cos.row_y(1)[0] + TWO_PI))
    assert inc.min() > g.h - g.k * 0.1 * g.h - 1e-12


def test_initialize_rejects_violent_kick():
    g = GridSpec.from_circle(16, 2, TWO_PI, 4.0)  # huge timestep
    with pytest.raises(BadInitialData):
        initialize(cosine_u0(2.0, TWO_PI), g)


def test_step_rest_converges_at_initial_guess():
    g = o1_grid(n_space=12, n_time=2)
    s = Section.identity(g)
    new_row, stats = step(s)
    assert stats.iterations == 0
    assert np.allclose(new_row, s.row_y(1), atol=1e-14)


def test_step_uniform_converges_at_initial_guess():
    g = o1_grid(n_space=12, n_time=2)
    c = 0.3
    s = Section.uniform_translation(g, c)
    new_row, stats = step(s)
    assert stats.iterations == 0
    assert np.allclose(new_row, s.xs() + 2 * c * g.k, atol=1e-12)


def test_evolve_zero_steps_returns_input():
    g = o1_grid(n_space=12, n_time=2)
    s = Section.uniform_translation(g, 0.2)
    out = evolve(s, 0)
    assert out.ok and out.section.grid.n_time == 2
    assert np.array_equal(out.section.displacement, s.displacement)


def test_evolve_uniform_exact_over_many_steps():
    g = GridSpec(16, 2, 1.0, 0.5, 16.0)
    c = 0.3
    res = evolve(Section.uniform_translation(g, c), 50)
    assert res.ok
    s = res.section
    t = g.k * np.arange(s.grid.n_time)
    assert np.max(np.abs(s.displacement - c * t[:, None])) <= 1e-11
    assert max(st.residual_norm for st in res.steps) <= 1e-12
    assert all(st.iterations == 0 for st in res.steps)


def test_newton_iteration_bound_on_reference_run(cosine_run_64):
    stats = cosine_run_64.result.steps
    assert len(stats) == 100
    assert max(st.iterations for st in stats) <= 8
    # accepted residuals sit at the attainable floating-point floor
    assert max(st.residual_norm for st in stats) <= 1e-9


def test_jacobian_matches_finite_differences(rng):
    g = o1_grid(n_space=8, n_time=3)
    s = random_section(g, rng)
    ym1, y0, yp1 = s.row_y(0), s.row_y(1), s.row_y(2)
    n, h, k = g.n_space, g.h, g.k

    def residual(next_row):
        d = s.displacement.copy()
        d[2] = next_row - s.xs()
        return del_residual_row(Section(g, d), 1)

    e = yp1 - y0
    lower, diag, upper = jacobian_bands(
        (np.roll(y0, -1) + np.where(np.arange(n) == n - 1, g.domain_length, 0) - y0) / h,
        e / k,
        (np.roll(e, -1) - e) / (h * k),
        h,
        k,
    )
    dense = np.zeros((n, n))
    idx = np.arange(n)
    dense[idx, idx] = diag
    dense[idx, (idx + 1) % n] = upper
    dense[idx, (idx - 1) % n] = lower
    fd = np.zeros((n, n))
    eps_fd = 1e-6
    for m in range(n):
        up, down = yp1.copy(), yp1.copy()
        up[m] += eps_fd
        down[m] -= eps_fd
        fd[:, m] = (residual(up) - residual(down)) / (2 * eps_fd)
    assert np.max(np.abs(fd - dense)) <= 1e-6 * max(1.0, np.max(np.abs(dense)))


def test_cyclic_tridiagonal_solver(rng):
    for n in (5, 16, 300):
        lower = rng.uniform(-1.0, 1.0, n)
        upper = rng.uniform(-1.0, 1.0, n)
        diag = 4.0 + rng.uniform(0.0, 1.0, n)  # diagonally dominant
        rhs = rng.standard_normal(n)
        x = solve_cyclic_tridiagonal(lower, diag, upper, rhs)
        dense = np.zeros((n, n))
        idx = np.arange(n)
        dense[idx, idx] = diag
        dense[idx, (idx + 1) % n] = upper
        dense[idx, (idx - 1) % n] = lower
        assert np.max(np.abs(dense @ x - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_cyclic_tridiagonal_singular():
    n = 12
    with pytest.raises(SingularJacobian):
        solve_cyclic_tridiagonal(np.zeros(n), np.zeros(n), np.zeros(n), np.ones(n))


def test_wave_breaking_reported():
    g = GridSpec.from_circle(32, 2, TWO_PI, 0.25)
    res = evolve(initialize(cosine_u0(3.0, TWO_PI), g), 100)
    assert not res.ok
    assert res.failure.error in ("NonMonotone", "MaxItersExceeded")
    assert res.section.grid.n_time < 102  # partial trajectory returned
    assert len(res.steps) == res.section.grid.n_time - 2


def test_backward_marching_is_first_order_not_exact():
    """Marching the reflected rows backwards reproduces the earlier row
    only up to the forward-difference asymmetry (third order per step
    locally), except on affine solutions where it is exact."""
    g = GridSpec(16, 2, 1.0, 0.5, 16.0)
    s = Section.uniform_translation(g, 0.3)
    res = evolve(s, 4)
    tr = res.section
    back, _ = advance_row(tr.row_y(3), tr.row_y(2), g, SolverConfig())
    assert np.max(np.abs(back - tr.row_y(1))) <= 1e-11

    g2 = GridSpec.from_circle(32, 2, TWO_PI, 0.25)
    res2 = evolve(initialize(cosine_u0(0.1, TWO_PI), g2), 16)
    tr2 = res2.section
    j = 8
    back2, _ = advance_row(tr2.row_y(j + 1), tr2.row_y(j), g2, SolverConfig())
    misfit = np.max(np.abs(back2 - tr2.row_y(j - 1)))
    increment = np.max(np.abs(tr2.row_y(j + 1) - tr2.row_y(j)))
    assert misfit <= 1e-2 * increment
    assert misfit > 1e-12  # the scheme is not time-reflection symmetric


def test_evolve_continuation_matches_single_run():
    g = GridSpec.from_circle(16, 2, TWO_PI, 0.25)
    s0 = initialize(cosine_u0(0.1, TWO_PI), g)
    whole = evolve(s0, 12).section
    first = evolve(s0, 5).section
    resumed = evolve(first, 7).section
    assert resumed.grid.n_time == whole.grid.n_time
    assert np.max(np.abs(resumed.displacement - whole.displacement)) <= 1e-12


def test_minimum_circle_runs():
    g = GridSpec.from_circle(3, 2, TWO_PI, 0.25)
    res = evolve(initialize(cosine_u0(0.05, TWO_PI), g), 10)
    assert res.ok
    worst = max(
        abs(del_residual(res.section, (i, j)))
        for j in range(1, res.section.grid.n_time - 1)
        for i in range(3)
    )
    assert worst <= 1e-9


def test_section_from_rows_round_trip(rng):
    g = GridSpec(8, 3, 1.0, 0.5, 8.0)
    s = random_section(g, rng)
    rebuilt = Section.from_rows(g, s.rows_y())
    assert np.max(np.abs(rebuilt.displacement - s.displacement)) <= 1e-13


def test_section_rejects_non_monotone_rows():
    g = o1_grid(n_space=8, n_time=2)
    d = np.zeros((2, 8))
    d[1, 3] = -1.5  # pulls y below its left neighbour
    with pytest.raises(NonMonotone):
        Section(g, d)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol_residual=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(damping=1.5)
