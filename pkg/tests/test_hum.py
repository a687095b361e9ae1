import numpy as np
import pytest

from venttsel_beam import (
    ControlTriple,
    GramianOperator,
    Grid,
    ModalFilter,
    ParameterError,
    PhysicalParams,
    State,
    TimeGrid,
    apply_gramian,
    assemble,
    energy_inner,
    minimize_J,
    null_control_pipeline,
    solve_controlled,
    verify_duality_identity,
)
from venttsel_beam.hum import IllPosedFilterError, hum_rhs, initial_state, make_rng

UNIT = PhysicalParams()


@pytest.fixture(scope="module")
def setup():
    s = assemble(UNIT, Grid(32))
    filt = ModalFilter.build(s, 10)
    g = GramianOperator(s, TimeGrid(UNIT.default_horizon, 256), filt)
    return s, filt, g


def test_gramian_zero(setup):
    s, _, g = setup
    out = apply_gramian(g, s.zero_state())
    assert not out.q.any() and not out.v.any()


def test_gramian_two_route_quadratic_form(setup):
    s, filt, g = setup
    rng = make_rng(0)
    for _ in range(3):
        a = filt.random_state(rng)
        lhs = energy_inner(s, g(a), a)
        rhs = g.trace_quadratic_form(a)
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_gramian_self_adjoint_and_psd(setup):
    s, filt, g = setup
    rng = make_rng(1)
    a, b = filt.random_state(rng), filt.random_state(rng)
    x, y = energy_inner(s, g(a), b), energy_inner(s, a, g(b))
    assert abs(x - y) <= 1e-8 * (abs(x) + abs(y))
    assert min(g.ritz_values()) > 0


def test_unfiltered_input_is_projected_and_counted(setup):
    s, filt, g = setup
    before = g.unfiltered_inputs
    rng = make_rng(2)
    raw = State(rng.standard_normal(s.ndof), rng.standard_normal(s.ndof))
    out = g(raw)
    assert g.unfiltered_inputs == before + 1
    ref = g(filt.project(raw))
    np.testing.assert_allclose(out.vector(), ref.vector(), rtol=1e-12, atol=1e-14)
    assert g.unfiltered_inputs == before + 1


def test_zero_data_gives_zero_controls(setup):
    s, _, g = setup
    sol = minimize_J(g, s.zero_state())
    assert sol.converged and sol.iterations == 0
    assert not sol.controls.values.any()
    assert not sol.a_star.q.any()


def test_cg_decreases_J_and_error(setup):
    _, filt, g = setup
    sol = minimize_J(g, filt.random_state(make_rng(3)), tol=1e-10)
    J = np.array(sol.J_history)
    assert np.all(np.diff(J) <= 1e-12 * abs(J[-1]))
    err = np.array(sol.error_history)
    assert np.all(np.diff(err) <= 1e-6 * err[0])
    assert sol.residual_history[-1] <= 1e-10 * sol.residual_history[0]


def test_halving_tolerance_reduces_final_energy(setup):
    _, filt, g = setup
    U0 = filt.random_state(make_rng(4))
    E = [minimize_J(g, U0, tol=1e-2 * 0.5**k).final_energy_filtered for k in range(10)]
    assert all(b <= a for a, b in zip(E, E[1:]))


def test_optimality_condition(setup):
    s, filt, g = setup
    U0 = filt.random_state(make_rng(5))
    sol = minimize_J(g, U0, tol=1e-12)
    a = sol.a_star
    lhs = energy_inner(s, g(a), a)
    rhs = energy_inner(s, hum_rhs(g, U0), a)
    assert lhs == pytest.approx(rhs, rel=1e-8)
    # the controls annihilate the filtered final state
    assert sol.filtered_ratio <= 1e-12


def test_scaling_and_linearity(setup):
    s, filt, g = setup
    rng = make_rng(6)
    U1, U2 = filt.random_state(rng), filt.random_state(rng)
    c1 = minimize_J(g, U1, tol=1e-12).controls.values
    c2 = minimize_J(g, U2, tol=1e-12).controls.values
    c12 = minimize_J(g, U1 + U2, tol=1e-12).controls.values
    assert np.linalg.norm(c1 + c2 - c12) <= 1e-6 * np.linalg.norm(c12)
    c3 = minimize_J(g, U1 * 2.5, tol=1e-12).controls.values
    assert np.linalg.norm(c3 - 2.5 * c1) <= 1e-12 * np.linalg.norm(c3)


def test_lowest_mode_pipeline():
    res = null_control_pipeline(UNIT, 32, 10, U0="mode:0")
    sol = res.solution
    assert sol.converged and sol.iterations <= 30
    assert sol.filtered_ratio <= 1e-6
    assert sol.control_norm <= 1.1 * sol.control_bound
    assert res.unfiltered_ratio == sol.final_ratio


def test_unweighted_variant_converges():
    res = null_control_pipeline(PhysicalParams(k=2.0, b=0.5), 24, 6, U0="random", weighted=False)
    assert res.solution.converged
    assert res.solution.filtered_ratio <= 1e-6


def test_non_convergence_flag():
    res = null_control_pipeline(UNIT, 24, 8, U0="random", max_iter=1, compute_mu=False)
    assert not res.solution.converged and res.solution.iterations == 1


def test_ill_posed_filter_detected():
    s = assemble(UNIT, Grid(8))
    filt = ModalFilter.build(s, s.ndof)
    g = GramianOperator(s, TimeGrid(0.02, 4), filt)
    U0 = filt.random_state(make_rng(7))
    with pytest.raises(IllPosedFilterError, match="Rayleigh"):
        minimize_J(g, U0)
    reg = GramianOperator(s, TimeGrid(0.02, 4), filt, epsilon=1e-3)
    assert minimize_J(reg, U0).converged


def test_pipeline_rejects_damping_and_zero_gamma():
    with pytest.raises(ParameterError):
        null_control_pipeline(PhysicalParams(beta=0.2), 8, 2)
    with pytest.raises(ParameterError):
        null_control_pipeline(PhysicalParams(gamma=0.0), 8, 2)


def test_initial_state_sources(tmp_path):
    s = assemble(UNIT, Grid(8))
    filt = ModalFilter.build(s, 3)
    assert not initial_state(s, filt, "zero").q.any()
    a = initial_state(s, filt, "random", seed=5)
    b = initial_state(s, filt, "random", seed=5)
    c = initial_state(s, filt, "random", seed=5, stream=1)
    np.testing.assert_array_equal(a.q, b.q)
    assert not np.allclose(a.q, c.q)
    path = tmp_path / "u0.npy"
    np.save(path, a.vector())
    np.testing.assert_array_equal(initial_state(s, filt, f"file:{path}").v, a.v)
    with pytest.raises(ValueError):
        initial_state(s, filt, "bogus")


def test_duality_identity_zero_and_random():
    s = assemble(UNIT, Grid(32))
    tg = TimeGrid(2.0, 800)
    z = s.zero_state()
    assert verify_duality_identity(s, z, ControlTriple.zeros(tg), z, tg) == 0.0
    rng = make_rng(8)
    U0 = State(rng.standard_normal(s.ndof), rng.standard_normal(s.ndof))
    WT = State(rng.standard_normal(s.ndof), rng.standard_normal(s.ndof))
    smooth = ControlTriple.from_functions(tg, np.sin, np.cos, lambda t: t**2)
    assert verify_duality_identity(s, U0, smooth, WT, tg) <= 1e-6
    src = rng.standard_normal((tg.nt + 1, s.ndof))
    assert verify_duality_identity(s, U0, smooth, WT, tg, sources=src) <= 1e-6


def test_hum_controls_satisfy_duality(setup):
    s, filt, g = setup
    U0 = filt.random_state(make_rng(9))
    sol = minimize_J(g, U0, tol=1e-12)
    assert verify_duality_identity(s, U0, sol.controls, sol.a_star, g.tg) <= 1e-8
    y = solve_controlled(s, U0, sol.controls, g.tg)
    assert np.allclose(y.final.vector(), sol.final_state.vector(), rtol=0, atol=1e-12)
