import numpy as np
import pytest

from acopt import (
    ControlPair,
    FieldPair,
    InvalidParameterError,
    TimeAxis,
    Trajectory,
    UnsupportedConfigurationError,
    curvature,
    evaluate_cost,
    hinner,
    hnorm,
    linearized_operator,
    optimality_report,
    projection_residual,
    reduced_gradient,
    solve_adjoint,
    solve_linearized,
    stationarity_norm,
)
from acopt.objective import adjoint_as_control

from conftest import default_potentials, make_problem, quadratic_potentials, random_control


def test_cost_zero_when_state_matches_targets(grid4, ops4):
    pf, pg = default_potentials()
    time = TimeAxis(0.4, 6)
    prob = make_problem(grid4, ops4, time, pf, pg, betas=(1.0, 1.0, 1.0, 1.0, 1.0))
    state = Trajectory(prob.z_q.copy(), grid4, time)
    # make the surface targets the trace so every term vanishes
    prob.z_sigma = prob.z_q[:, grid4.boundary_cycle]
    prob.z_t = prob.z_q[-1]
    prob.z_gamma_t = prob.z_t[grid4.boundary_cycle]
    assert evaluate_cost(prob, state, ControlPair.zeros(grid4, time)) == 0.0


def test_cost_pure_control_term(grid4, ops4):
    pf, pg = default_potentials()
    T = 0.8
    time = TimeAxis(T, 10)
    prob = make_problem(grid4, ops4, time, pf, pg, betas=(0.0, 0.0, 0.0, 1.0, 0.0))
    u = ControlPair(
        np.ones((time.m + 1, grid4.num_nodes)), np.zeros((time.m + 1, grid4.num_boundary))
    )
    state = Trajectory(np.full((time.m + 1, grid4.num_nodes), 0.5), grid4, time)
    assert evaluate_cost(prob, state, u) == pytest.approx(T / 2.0, rel=1e-14)


def test_cost_matches_independent_quadrature(grid4, ops4, rng):
    pf, pg = default_potentials()
    time = TimeAxis(0.5, 7)
    prob = make_problem(
        grid4, ops4, time, pf, pg, betas=(1.0, 0.8, 0.6, 0.4, 0.2), seed=9
    )
    state = Trajectory(rng.uniform(0.2, 0.8, size=(time.m + 1, grid4.num_nodes)), grid4, time)
    u = random_control(grid4, time, rng)

    # plain-loop re-summation with trapezoid weights
    dt = time.dt
    theta = [dt * (0.5 if k in (0, time.m) else 1.0) for k in range(time.m + 1)]
    total = 0.0
    for k in range(time.m + 1):
        for j in range(grid4.num_nodes):
            total += 0.5 * prob.beta1 * theta[k] * grid4.bulk_weights[j] * (
                state.values[k, j] - prob.z_q[k, j]
            ) ** 2
            total += 0.5 * prob.beta5 * theta[k] * grid4.bulk_weights[j] * u.bulk[k, j] ** 2
        for b in range(grid4.num_boundary):
            total += 0.5 * prob.beta2 * theta[k] * grid4.surface_weights[b] * (
                state.surface[k, b] - prob.z_sigma[k, b]
            ) ** 2
            total += 0.5 * prob.beta6 * theta[k] * grid4.surface_weights[b] * u.surface[k, b] ** 2
    for j in range(grid4.num_nodes):
        total += 0.5 * prob.beta3 * grid4.bulk_weights[j] * (
            state.values[-1, j] - prob.z_t[j]
        ) ** 2
    for b in range(grid4.num_boundary):
        total += 0.5 * prob.beta3 * grid4.surface_weights[b] * (
            state.surface[-1, b] - prob.z_gamma_t[b]
        ) ** 2
    assert evaluate_cost(prob, state, u) == pytest.approx(total, rel=1e-12)


def test_gradient_pure_control_case(grid4, ops4, rng):
    pf, pg = default_potentials()
    time = TimeAxis(0.4, 5)
    prob = make_problem(grid4, ops4, time, pf, pg, betas=(0.0, 0.0, 0.0, 1.0, 0.3))
    u = random_control(grid4, time, rng)
    state = prob.solve(u)
    adj = solve_adjoint(state, pf, pg, prob, ops=ops4)
    grad = reduced_gradient(prob, state, adj, u)
    np.testing.assert_allclose(grad.bulk, u.bulk, atol=1e-14)
    np.testing.assert_allclose(grad.surface, 0.3 * u.surface, atol=1e-14)


def test_gradient_central_difference_order_two(grid8, ops8, rng):
    pf, pg = default_potentials()
    time = TimeAxis(0.5, 10)
    prob = make_problem(grid8, ops8, time, pf, pg, betas=(1.0, 1.0, 1.0, 0.1, 0.1), seed=3)
    u = random_control(grid8, time, rng, scale=0.3)
    state = prob.solve(u)
    adj = solve_adjoint(state, pf, pg, prob, ops=ops8)
    grad = reduced_gradient(prob, state, adj, u)

    eps_list = np.array([3e-2, 1e-2, 3e-3, 1e-3, 3e-4])
    for _ in range(2):
        h = random_control(grid8, time, rng)
        exact = hinner(prob, grad, h)
        errors = []
        for eps in eps_list:
            up = ControlPair(u.bulk + eps * h.bulk, u.surface + eps * h.surface)
            dn = ControlPair(u.bulk - eps * h.bulk, u.surface - eps * h.surface)
            fd = (
                evaluate_cost(prob, prob.solve(up), up)
                - evaluate_cost(prob, prob.solve(dn), dn)
            ) / (2 * eps)
            errors.append(abs(fd - exact) / abs(exact))
        errors = np.asarray(errors)
        # fit the decaying branch only (the tail sits on the roundoff plateau)
        branch = errors > 50.0 * errors.min()
        if branch.sum() >= 2:
            slope = np.polyfit(np.log(eps_list[branch]), np.log(errors[branch]), 1)[0]
            assert slope >= 1.8
        assert errors.min() <= 1e-9


def test_gradient_duality_against_linearized(grid8, ops8, rng):
    """<grad, h> equals the directional derivative assembled from xi."""
    pf, pg = default_potentials()
    time = TimeAxis(0.5, 12)
    prob = make_problem(grid8, ops8, time, pf, pg, betas=(1.0, 0.6, 0.8, 0.2, 0.3), seed=8)
    u = random_control(grid8, time, rng, scale=0.4)
    state = prob.solve(u)
    op = linearized_operator(state, pf, pg, ops8)
    adj = solve_adjoint(state, pf, pg, prob, operator=op)
    grad = reduced_gradient(prob, state, adj, u)

    theta = time.weights()
    w, gam = grid8.bulk_weights, grid8.surface_weights
    for _ in range(3):
        h = random_control(grid8, time, rng)
        xi = solve_linearized(state, pf, pg, h, operator=op)
        deriv = prob.beta1 * np.einsum(
            "k,kj,kj->", theta, (state.values - prob.z_q) * w, xi.values
        )
        deriv += prob.beta2 * np.einsum(
            "k,kj,kj->", theta, (state.surface - prob.z_sigma) * gam, xi.surface
        )
        deriv += prob.beta3 * np.dot((state.values[-1] - prob.z_t) * w, xi.values[-1])
        deriv += prob.beta3 * np.dot(
            (state.surface[-1] - prob.z_gamma_t) * gam, xi.surface[-1]
        )
        deriv += prob.beta5 * np.einsum("k,kj,kj->", theta, u.bulk * w, h.bulk)
        deriv += prob.beta6 * np.einsum("k,kj,kj->", theta, u.surface * gam, h.surface)
        lhs = hinner(prob, grad, h)
        assert abs(lhs - deriv) <= 1e-10 * max(abs(lhs), 1e-12)


def test_gradient_depends_on_residuals_only(grid4, ops4, rng):
    """Shifting state and targets by the same constant leaves the gradient unchanged."""
    pf, pg = quadratic_potentials()  # coefficient fields do not see the shift either
    time = TimeAxis(0.4, 5)
    prob = make_problem(grid4, ops4, time, pf, pg, betas=(1.0, 1.0, 1.0, 0.5, 0.5), seed=1)
    values = rng.uniform(0.2, 0.8, size=(time.m + 1, grid4.num_nodes))
    u = random_control(grid4, time, rng)

    grads = []
    for shift in (0.0, 0.9):
        state = Trajectory(values + shift, grid4, time)
        shifted = make_problem(
            grid4, ops4, time, pf, pg, betas=(1.0, 1.0, 1.0, 0.5, 0.5), seed=1
        )
        shifted.z_q = prob.z_q + shift
        shifted.z_sigma = prob.z_sigma + shift
        shifted.z_t = prob.z_t + shift
        shifted.z_gamma_t = shifted.z_t[grid4.boundary_cycle]
        adj = solve_adjoint(state, pf, pg, shifted, ops=ops4)
        grads.append(reduced_gradient(shifted, state, adj, u))
    np.testing.assert_allclose(grads[0].bulk, grads[1].bulk, atol=1e-11)
    np.testing.assert_allclose(grads[0].surface, grads[1].surface, atol=1e-11)


def test_curvature_pure_control_quadratic(grid4, ops4, rng):
    """Quadratic potentials with only the distributed control weight set."""
    pf, pg = quadratic_potentials()
    time = TimeAxis(0.4, 6)
    prob = make_problem(
        grid4, ops4, time, pf, pg, betas=(0.0, 0.0, 0.0, 1.0, 0.0), box=(-5.0, 5.0)
    )
    u = ControlPair.zeros(grid4, time)
    state = prob.solve(u)
    adj = solve_adjoint(state, pf, pg, prob, ops=ops4)
    h = random_control(grid4, time, rng)
    value = curvature(prob, state, adj, h)
    theta = time.weights()
    expected = float(
        np.einsum("k,kj,kj->", theta, h.bulk * grid4.bulk_weights, h.bulk)
    )
    assert value == pytest.approx(expected, rel=1e-12)


def test_curvature_zero_direction(grid4, ops4):
    pf, pg = default_potentials()
    time = TimeAxis(0.3, 4)
    prob = make_problem(grid4, ops4, time, pf, pg)
    u = ControlPair.zeros(grid4, time)
    state = prob.solve(u)
    adj = solve_adjoint(state, pf, pg, prob, ops=ops4)
    assert curvature(prob, state, adj, ControlPair.zeros(grid4, time)) == 0.0


def test_curvature_second_difference_oracle(grid8, ops8, rng):
    pf, pg = default_potentials()
    time = TimeAxis(0.5, 10)
    prob = make_problem(grid8, ops8, time, pf, pg, betas=(1.0, 1.0, 1.0, 0.1, 0.1), seed=4)
    u = random_control(grid8, time, rng, scale=0.3)
    state = prob.solve(u)
    op = linearized_operator(state, pf, pg, ops8)
    adj = solve_adjoint(state, pf, pg, prob, operator=op)
    j0 = evaluate_cost(prob, state, u)
    h = random_control(grid8, time, rng)
    exact = curvature(prob, state, adj, h, operator=op)
    best = np.inf
    for eps in (1e-2, 3e-3, 1e-3):
        up = ControlPair(u.bulk + eps * h.bulk, u.surface + eps * h.surface)
        dn = ControlPair(u.bulk - eps * h.bulk, u.surface - eps * h.surface)
        fd = (
            evaluate_cost(prob, prob.solve(up), up)
            - 2 * j0
            + evaluate_cost(prob, prob.solve(dn), dn)
        ) / eps**2
        best = min(best, abs(fd - exact) / abs(exact))
    assert best <= 1e-4


def test_curvature_polarization_identity(grid8, ops8, rng):
    """4 D2J[h,k] = D2J[h+k,h+k] - D2J[h-k,h-k], via the bilinear form."""
    pf, pg = default_potentials()
    time = TimeAxis(0.4, 8)
    prob = make_problem(grid8, ops8, time, pf, pg, betas=(1.0, 0.5, 0.7, 0.2, 0.2), seed=6)
    u = random_control(grid8, time, rng, scale=0.3)
    state = prob.solve(u)
    op = linearized_operator(state, pf, pg, ops8)
    adj = solve_adjoint(state, pf, pg, prob, operator=op)
    h = random_control(grid8, time, rng)
    k = random_control(grid8, time, rng)
    hp = ControlPair(h.bulk + k.bulk, h.surface + k.surface)
    hm = ControlPair(h.bulk - k.bulk, h.surface - k.surface)
    mixed = curvature(prob, state, adj, h, second_direction=k, operator=op)
    plus = curvature(prob, state, adj, hp, operator=op)
    minus = curvature(prob, state, adj, hm, operator=op)
    assert abs(plus - minus - 4.0 * mixed) <= 1e-9 * max(abs(plus), abs(minus), 1.0)


# -- optimality report --------------------------------------------------------


def test_report_fixed_point_of_projection(grid4, ops4):
    """Decoupled control cost: zero control is the exact projection fixed point."""
    pf, pg = default_potentials()
    time = TimeAxis(0.3, 5)
    prob = make_problem(grid4, ops4, time, pf, pg, betas=(0.0, 0.0, 0.0, 1.0, 1.0))
    report = optimality_report(prob, ControlPair.zeros(grid4, time), n_dir=4)
    assert report.projection_residual == 0.0
    assert report.stationarity == 0.0


def test_report_large_tau_empties_active_set(grid4, ops4, rng):
    pf, pg = default_potentials()
    time = TimeAxis(0.3, 5)
    prob = make_problem(grid4, ops4, time, pf, pg, seed=2)
    u = random_control(grid4, time, rng, scale=0.5)
    report = optimality_report(prob, u, tau=1e9, n_dir=4)
    assert report.active_set_fraction == 0.0


def test_report_linear_quadratic_ratio_bound(grid4, ops4, rng):
    """With unit control weights the curvature ratio is at least one."""
    pf, pg = quadratic_potentials()
    time = TimeAxis(0.4, 6)
    prob = make_problem(
        grid4, ops4, time, pf, pg, betas=(1.0, 1.0, 1.0, 1.0, 1.0), box=(-5.0, 5.0)
    )
    u = random_control(grid4, time, rng, scale=0.2)
    # large tau empties the strongly active set: directions sampled freely
    report = optimality_report(prob, u, tau=1e9, n_dir=6)
    assert report.min_curvature_ratio >= 1.0
    assert len(report.curvature_samples) == 6


def test_report_unsupported_without_control_weights(grid4, ops4):
    pf, pg = default_potentials()
    time = TimeAxis(0.3, 5)
    prob = make_problem(grid4, ops4, time, pf, pg, betas=(1.0, 1.0, 1.0, 0.0, 0.0))
    u = ControlPair.zeros(grid4, time)
    with pytest.raises(UnsupportedConfigurationError):
        state = prob.solve(u)
        adj = solve_adjoint(state, pf, pg, prob, ops=ops4)
        projection_residual(prob, u, adjoint_as_control(prob, adj))
    report = optimality_report(prob, u, n_dir=2)
    assert not report.projection_supported
    assert np.isnan(report.projection_residual)
    assert report.grad_norm > 0  # other diagnostics still computed


def test_stationarity_projection_equivalence(grid4, ops4, rng):
    """Both residuals vanish together; both positive off the fixed point."""
    pf, pg = default_potentials()
    time = TimeAxis(0.3, 5)
    prob = make_problem(grid4, ops4, time, pf, pg, betas=(0.0, 0.0, 0.0, 1.0, 1.0))
    u0 = ControlPair.zeros(grid4, time)
    state = prob.solve(u0)
    adj = solve_adjoint(state, pf, pg, prob, ops=ops4)
    rep = adjoint_as_control(prob, adj)
    grad = reduced_gradient(prob, state, adj, u0)
    assert stationarity_norm(prob, u0, grad) == 0.0
    assert projection_residual(prob, u0, rep) == 0.0

    u1 = random_control(grid4, time, rng, scale=0.5)
    state1 = prob.solve(u1)
    adj1 = solve_adjoint(state1, pf, pg, prob, ops=ops4)
    grad1 = reduced_gradient(prob, state1, adj1, u1)
    assert stationarity_norm(prob, u1, grad1) > 0.0
    assert projection_residual(prob, u1, adjoint_as_control(prob, adj1)) > 0.0


def test_report_thread_cap_matches_sequential(grid4, ops4, rng, monkeypatch):
    """Worker-pooled direction sampling reproduces the sequential samples."""
    pf, pg = default_potentials()
    time = TimeAxis(0.3, 5)
    prob = make_problem(grid4, ops4, time, pf, pg, seed=2)
    u = random_control(grid4, time, rng, scale=0.3)
    monkeypatch.delenv("ACOPT_THREADS", raising=False)
    seq = optimality_report(prob, u, tau=1e9, n_dir=4, seed=3)
    monkeypatch.setenv("ACOPT_THREADS", "3")
    par = optimality_report(prob, u, tau=1e9, n_dir=4, seed=3)
    assert [s[0] for s in par.curvature_samples] == [s[0] for s in seq.curvature_samples]
    np.testing.assert_allclose(
        [s[1] for s in par.curvature_samples],
        [s[1] for s in seq.curvature_samples],
        rtol=1e-12,
    )


def test_problem_validation(grid4, ops4):
    pf, pg = default_potentials()
    time = TimeAxis(0.3, 5)
    with pytest.raises(InvalidParameterError):
        make_problem(grid4, ops4, time, pf, pg, betas=(0.0, 0.0, 0.0, 0.0, 0.0))
    with pytest.raises(InvalidParameterError):
        make_problem(grid4, ops4, time, pf, pg, box=(1.0, -1.0))
    # terminal surface target must be the bulk trace
    prob = make_problem(grid4, ops4, time, pf, pg)
    from acopt import ControlProblem

    with pytest.raises(InvalidParameterError):
        ControlProblem(
            grid=grid4, ops=ops4, time=time, pf=pf, pg=pg,
            beta1=1.0, beta2=1.0, beta3=1.0, beta5=1.0, beta6=1.0,
            z_q=prob.z_q, z_sigma=prob.z_sigma, z_t=prob.z_t,
            z_gamma_t=prob.z_t[grid4.boundary_cycle] + 1.0,
            init=FieldPair(np.full(grid4.num_nodes, 0.5), grid4),
            u_lo=-1.0, u_hi=1.0, u_lo_surf=-1.0, u_hi_surf=1.0,
        )


def test_hnorm_consistency(grid4, ops4, rng):
    pf, pg = default_potentials()
    time = TimeAxis(0.4, 4)
    prob = make_problem(grid4, ops4, time, pf, pg)
    a = random_control(grid4, time, rng)
    assert hnorm(prob, a) == pytest.approx(np.sqrt(hinner(prob, a, a)))
    ones = ControlPair(
        np.ones((time.m + 1, grid4.num_nodes)), np.ones((time.m + 1, grid4.num_boundary))
    )
    # |Q| + |Sigma| = T*(1+4)
    assert hinner(prob, ones, ones) == pytest.approx(time.T * 5.0, rel=1e-13)
