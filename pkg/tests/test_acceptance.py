"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line that pytest prints in a summary
section; the assertions carry the same thresholds.
"""


import numpy as np
import scipy.linalg as sla

from venttsel_beam import (
    ControlTriple,
    GramianOperator,
    Grid,
    ModalFilter,
    PhysicalParams,
    State,
    TimeGrid,
    apply_A,
    assemble,
    energy_inner,
    estimate_observability_constant,
    multiplier_identity_residual,
    null_control_pipeline,
    solve_damped,
    solve_homogeneous,
    solve_static,
    verify_duality_identity,
)
from venttsel_beam.assembly import symmetrized_generator
from venttsel_beam.cli import main as cli_main
from venttsel_beam.hum import make_rng

UNIT = PhysicalParams()


def _system(n, params=UNIT):
    return assemble(params, Grid(n, params.L))


def _random_state(sys, rng):
    return State(rng.standard_normal(sys.ndof), rng.standard_normal(sys.ndof))


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_c01_skew_adjoint_generator(report):
    sys = _system(32)
    J = symmetrized_generator(sys)
    skew = np.linalg.norm(J + J.T) / np.linalg.norm(J)

    rng = make_rng(1)
    worst = 0.0
    for _ in range(20):
        u1, u2 = _random_state(sys, rng), _random_state(sys, rng)
        a = energy_inner(sys, apply_A(sys, u1), u2)
        b = energy_inner(sys, u1, apply_A(sys, u2))
        scale = abs(a) + abs(b)
        worst = max(worst, abs(a + b) / scale)
    ok = skew <= 1e-12 and worst <= 1e-12
    report("1 skew-adjointness", ok, f"|J+J^T|/|J| = {skew:.2e}, pairing defect = {worst:.2e}")
    assert skew <= 1e-12
    assert worst <= 1e-12


def test_c02_energy_isometry(report):
    sys = _system(64)
    filt = ModalFilter.build(sys, 21)
    U0 = filt.random_state(make_rng(2))
    traj = solve_homogeneous(sys, U0, TimeGrid(UNIT.default_horizon, 2000))
    E = traj.energy
    drift = float(np.max(np.abs(E - E[0])) / E[0])
    report("2 isometry", drift <= 1e-10, f"relative energy drift = {drift:.2e}")
    assert drift <= 1e-10


def test_c03_resolvent(report):
    sys = _system(32)
    rng = make_rng(3)
    worst = 0.0
    for _ in range(10):
        u = _random_state(sys, rng)
        for w in (apply_A(sys, solve_static(sys, u)), solve_static(sys, apply_A(sys, u))):
            worst = max(worst, _rel(w.vector(), u.vector()))
    report("3 resolvent", worst <= 1e-10, f"max relative defect = {worst:.2e}")
    assert worst <= 1e-10


def _dense_oracle_error(sys, U0, T, nt):
    M, K = sys.M.toarray(), sys.K.toarray()
    N = sys.ndof
    G = np.zeros((2 * N, 2 * N))
    G[:N, N:] = np.eye(N)
    G[N:, :N] = -np.linalg.solve(M, K)
    traj = solve_homogeneous(sys, U0, TimeGrid(T, nt))
    x0 = U0.vector()
    err = 0.0
    for j in range(0, nt + 1, nt // 10):
        exact = sla.expm(G * traj.times[j]) @ x0
        num = np.concatenate([traj.q[j], traj.v[j]])
        err = max(err, _rel(num, exact))
    return err, G.shape[0]


def test_c04_dense_oracle(report):
    sys = _system(4)
    U0 = sys.interpolate(
        lambda x: np.sin(np.pi * x / 2),
        lambda x: x**2,
        lambda x: 0.5 * x,
        lambda x: x,
        lambda x: 0 * x,
        lambda x: -x,
    )
    e1, dim = _dense_oracle_error(sys, U0, 1.0, 1000)
    e2, _ = _dense_oracle_error(sys, U0, 1.0, 2000)
    ratio = e1 / e2
    ok = e1 <= 1e-4 and 3.5 <= ratio <= 4.5
    report(
        "4 dense oracle",
        ok,
        f"dim {dim}, err(dt=1e-3) = {e1:.2e}, err(dt=5e-4) = {e2:.2e}, ratio = {ratio:.2f}",
    )
    assert e1 <= 1e-4
    assert 3.5 <= ratio <= 4.5


def test_c05_gramian_structure(report):
    sys = _system(16)
    filt = ModalFilter.build(sys, 6)
    g = GramianOperator(sys, TimeGrid(UNIT.default_horizon, 400), filt)
    rng = make_rng(5)
    sym = 0.0
    for _ in range(5):
        a, b = filt.random_state(rng), filt.random_state(rng)
        x = energy_inner(sys, g(a), b)
        y = energy_inner(sys, a, g(b))
        sym = max(sym, abs(x - y) / (abs(x) + abs(y)))

    small = _system(4)
    full = ModalFilter.build(small, small.ndof)
    gs = GramianOperator(small, TimeGrid(UNIT.default_horizon, 200), full)
    dense = gs.dense_matrix()
    mf = 0.0
    for _ in range(5):
        z = rng.standard_normal(full.dim)
        mf = max(mf, _rel(gs.apply_coordinates(z), dense @ z))
    ritz = np.linalg.eigvalsh(0.5 * (dense + dense.T))
    ok = sym <= 1e-8 and mf <= 1e-8 and ritz.min() >= 0
    report(
        "5 gramian",
        ok,
        f"symmetry = {sym:.2e}, dense vs matrix-free = {mf:.2e}, min Ritz = {ritz.min():.3e}",
    )
    assert sym <= 1e-8
    assert mf <= 1e-8
    assert ritz.min() >= 0


def test_c06_observability_witness(report):
    T = UNIT.default_horizon
    reps = {}
    for n in (32, 64):
        sys = _system(n)
        reps[n] = estimate_observability_constant(sys, T, ModalFilter.build(sys, 10), samples=8)
    c32, c64 = reps[32].C_obs, reps[64].C_obs
    spread = abs(c32 - c64) / min(c32, c64)
    ok = reps[32].mu_min > 0 and spread <= 0.2
    report(
        "6 observability",
        ok,
        f"mu_min = {reps[32].mu_min:.3e}, C_obs n=32 {c32:.1f}, n=64 {c64:.1f}, spread {spread:.1%}",
    )
    assert reps[32].mu_min > 0
    assert spread <= 0.2


def test_c07_trace_lifting(report):
    sys = _system(32)
    U0 = ModalFilter.build(sys, 10).random_state(make_rng(7))
    tg = TimeGrid(UNIT.default_horizon, 1000)
    pos = solve_homogeneous(sys, U0, tg).position_traces().values
    vel = solve_homogeneous(sys, solve_static(sys, U0), tg).velocity_traces().values
    err = _rel(vel, pos)
    report("7 trace lifting", err <= 1e-8, f"relative trace mismatch = {err:.2e}")
    assert err <= 1e-8


def _multiplier(n, nt, T):
    sys = _system(n)
    U0 = ModalFilter.build(sys, 5).random_state(make_rng(8))
    return multiplier_identity_residual(sys, U0, TimeGrid(T, nt))


def test_c08_multiplier_identity(report):
    T = UNIT.default_horizon
    r32 = _multiplier(32, 4000, T)
    r64 = _multiplier(64, 4000, T)
    ok = r64 <= 5e-2 and r32 / r64 >= 2.0
    report(
        "8 multiplier identity",
        ok,
        f"residual n=32 {r32:.2e}, n=64 {r64:.2e}, reduction {r32 / r64:.2f}x",
    )
    assert r64 <= 5e-2
    assert r32 / r64 >= 2.0


def test_c09_null_controllability(report):
    res = null_control_pipeline(UNIT, 60, 20, U0="random", seed=9)
    sol = res.solution
    bound = 1.1 * sol.control_bound
    ok = (
        sol.converged
        and sol.iterations <= 200
        and sol.filtered_ratio <= 1e-6
        and sol.final_ratio <= 1e-2
        and sol.control_norm <= bound
    )
    report(
        "9 null controllability",
        ok,
        f"{sol.iterations} CG iterations, filtered ratio {sol.filtered_ratio:.2e}, "
        f"unfiltered ratio {sol.final_ratio:.2e}, control norm {sol.control_norm:.3g} "
        f"<= {bound:.3g}",
    )
    assert sol.converged and sol.iterations <= 200
    assert sol.filtered_ratio <= 1e-6
    assert sol.final_ratio <= 1e-2
    assert sol.control_norm <= bound


def test_c10_duality_identity(report):
    sys = _system(32)
    tg = TimeGrid(UNIT.default_horizon, 4000)
    rng = make_rng(10)
    U0, WT = _random_state(sys, rng), _random_state(sys, rng)
    controls = ControlTriple(tg.times, rng.standard_normal((tg.nt + 1, 3)))
    res = verify_duality_identity(sys, U0, controls, WT, tg)
    report("10 duality identity", res <= 1e-6, f"relative residual = {res:.2e}")
    assert res <= 1e-6


def test_c11_damped_monotone(report):
    p = PhysicalParams(beta=0.5)
    sys = _system(32, p)
    U0 = ModalFilter.build(sys, 10).random_state(make_rng(11))
    E = solve_damped(sys, U0, TimeGrid(p.default_horizon, 2000)).energy
    worst = float(np.max(np.diff(E)))
    ok = worst <= 0.0
    report("11 damped decay", ok, f"largest one-step energy change = {worst:.2e}, E(T)/E(0) = {E[-1] / E[0]:.3f}")
    assert worst <= 0.0


def test_c12_determinism(report, tmp_path):
    out = tmp_path / "run"
    argv = ["control", "--out", str(out), "--seed", "12", "--n", "24", "--m", "8"]
    cfg = tmp_path / "run.cfg"
    cfg.write_text("initial_random = true\n")
    argv += ["--config", str(cfg)]
    assert cli_main(argv) == 0
    first = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    assert cli_main(argv) == 0
    second = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    ok = first == second and len(first) == 3
    report("12 determinism", ok, f"{len(first)} files byte-identical across reruns: {first == second}")
    assert ok
