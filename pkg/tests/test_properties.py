"""Randomized invariants over the admissible parameter range."""

import numpy as np
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from venttsel_beam import (
    Grid,
    ModalFilter,
    PhysicalParams,
    State,
    TimeGrid,
    apply_A,
    assemble,
    energy,
    energy_inner,
    solve_homogeneous,
)
from venttsel_beam.hum import make_rng

pos = st.floats(0.2, 5.0)
params = st.builds(PhysicalParams, rho1=pos, rho2=pos, k=pos, b=pos, gamma=pos, L=pos)
SETTINGS = settings(max_examples=25, deadline=None)


def _rand(s, seed):
    rng = make_rng(seed)
    return State(rng.standard_normal(s.ndof), rng.standard_normal(s.ndof))


@SETTINGS
@given(params, st.integers(4, 20))
def test_control_matrix_transpose(p, n):
    s = assemble(p, Grid(n, p.L))
    assert abs(s.B - s.C.T @ sp.diags(p.duality_weights)).max() == 0.0


@SETTINGS
@given(params, st.integers(4, 20), st.integers(0, 2**32))
def test_generator_skew(p, n, seed):
    s = assemble(p, Grid(n, p.L))
    u, w = _rand(s, seed), _rand(s, seed + 1)
    a = energy_inner(s, apply_A(s, u), w)
    b = energy_inner(s, u, apply_A(s, w))
    assert abs(a + b) <= 1e-10 * (abs(a) + abs(b))


@SETTINGS
@given(params, st.integers(4, 16), st.integers(0, 2**32), st.floats(0.01, 1.0))
def test_energy_conserved(p, n, seed, dt):
    s = assemble(p, Grid(n, p.L))
    E = solve_homogeneous(s, _rand(s, seed), TimeGrid(20 * dt, 20)).energy
    assert np.max(np.abs(E - E[0])) <= 1e-11 * E[0]


@SETTINGS
@given(params, st.integers(4, 16), st.integers(1, 10), st.integers(0, 2**32))
def test_filter_projection(p, n, m, seed):
    s = assemble(p, Grid(n, p.L))
    filt = ModalFilter.build(s, m)
    u = _rand(s, seed)
    pu = filt.project(u)
    assert filt.is_filtered(pu)
    np.testing.assert_allclose(filt.project(pu).vector(), pu.vector(), rtol=1e-9, atol=1e-12)
    # orthogonal in the energy inner product
    r = u - pu
    assert abs(energy_inner(s, r, pu)) <= 1e-9 * energy(s, u)
    z = filt.orthonormal_coordinates(pu)
    assert abs(0.5 * np.dot(z, z) - energy(s, pu)) <= 1e-9 * energy(s, pu)


@settings(max_examples=10, deadline=None)
@given(params, st.integers(0, 2**32))
def test_flow_commutes_with_filter(p, seed):
    s = assemble(p, Grid(12, p.L))
    filt = ModalFilter.build(s, 5)
    u = _rand(s, seed)
    tg = TimeGrid(1.0, 50)
    a = filt.project(solve_homogeneous(s, u, tg).final)
    b = solve_homogeneous(s, filt.project(u), tg).final
    np.testing.assert_allclose(a.vector(), b.vector(), rtol=1e-9, atol=1e-10 * np.linalg.norm(u.vector()))
