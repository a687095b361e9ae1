"""Finite element semi-discretization of the laminated beam generator.

Each of the three fields ``w``, ``xi``, ``s`` is approximated by continuous
piecewise-linear elements on a uniform mesh of ``[0, L]``, clamped at
``x = 0``.  The unknowns are the nodal values at ``x_1 .. x_n``, stacked as
``[w_1..w_n, xi_1..xi_n, s_1..s_n]``.

The equations are tested with the multipliers ``3, 3, 1``.  The dynamic end
conditions then show up as point masses ``3k, 3b, b`` on the last node of each
field, and the semi-discrete system reads::

    M q'' + D q' + K q = B u

with ``1/2 v'Mv + 1/2 q'Kq`` equal to half the continuous phase-space norm of
the interpolated state.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import ParameterError, PhysicalParams

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


class GridError(ValueError):
    """Invalid mesh specification."""


@dataclass(frozen=True)
class Grid:
    n: int
    L: float = 1.0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 4:
            raise GridError(f"need an integer number of elements n >= 4, got {self.n!r}")
        if not self.L > 0.0:
            raise GridError(f"beam length must be positive, got {self.L!r}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 1)


@dataclass(frozen=True)
class State:
    """Discrete phase vector: nodal positions ``q`` and velocities ``v``.

    The last entry of each velocity block is the boundary velocity at
    ``x = L``; it plays the role of the extra scalar unknowns of the
    continuous phase space.
    """

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if q.shape != v.shape or q.ndim != 1:
            raise ValueError(f"q and v must be 1-D of equal length, got {q.shape}, {v.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, ndof: int) -> "State":
        return cls(np.zeros(ndof), np.zeros(ndof))

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=float)
        half = x.size // 2
        return cls(x[:half].copy(), x[half:].copy())

    @property
    def ndof(self) -> int:
        return self.q.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])

    def __add__(self, other: "State") -> "State":
        return State(self.q + other.q, self.v + other.v)

    def __sub__(self, other: "State") -> "State":
        return State(self.q - other.q, self.v - other.v)

    def __neg__(self) -> "State":
        return State(-self.q, -self.v)

    def __mul__(self, alpha: float) -> "State":
        return State(alpha * self.q, alpha * self.v)

    __rmul__ = __mul__

    def __truediv__(self, alpha: float) -> "State":
        return State(self.q / alpha, self.v / alpha)


def _local_matrices(h: float):
    """Consistent mass, lumped mass and Laplacian stiffness of one element."""
    mass = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    lumped = h / 2.0 * np.eye(2)
    lap = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    return mass, lumped, lap


def _coupled_stiffness(params: PhysicalParams, h: float) -> np.ndarray:
    # 2-point Gauss is exact for the quadratic integrands of linear elements
    k, b, g = params.k, params.b, params.gamma
    dN = np.array([-1.0, 1.0]) / h
    Ke = np.zeros((6, 6))
    for xg in _GAUSS:
        N = np.array([1.0 - xg, xg])
        wg = 0.5 * h
        shear = np.concatenate([dN, N, N])
        bend = np.concatenate([np.zeros(2), dN, np.zeros(2)])
        slip_x = np.concatenate([np.zeros(4), dN])
        slip = np.concatenate([np.zeros(4), N])
        Ke += wg * (
            3.0 * k * np.outer(shear, shear)
            + 3.0 * b * np.outer(bend, bend)
            + b * np.outer(slip_x, slip_x)
            + g * np.outer(slip, slip)
        )
    return Ke


def _assemble_scalar(local: np.ndarray, n: int) -> sp.csc_matrix:
    """Assemble a 2x2 element matrix over ``n`` elements, dropping node 0."""
    rows, cols, vals = [], [], []
    for e in range(n):
        idx = (e, e + 1)
        for a in range(2):
            for c in range(2):
                rows.append(idx[a])
                cols.append(idx[c])
                vals.append(local[a, c])
    full = sp.coo_matrix((vals, (rows, cols)), shape=(n + 1, n + 1)).tocsc()
    return full[1:, 1:].tocsc()


def _assemble_coupled(Ke: np.ndarray, n: int) -> sp.csc_matrix:
    nn = n + 1
    rows, cols, vals = [], [], []
    for e in range(n):
        # local ordering (w_e, w_e+1, xi_e, xi_e+1, s_e, s_e+1)
        gidx = [f * nn + e + a for f in range(3) for a in range(2)]
        for a in range(6):
            for c in range(6):
                rows.append(gidx[a])
                cols.append(gidx[c])
                vals.append(Ke[a, c])
    full = sp.coo_matrix((vals, (rows, cols)), shape=(3 * nn, 3 * nn)).tocsc()
    free = np.concatenate([f * nn + np.arange(1, nn) for f in range(3)])
    return full[free][:, free].tocsc()


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Assembled matrices of the semi-discrete beam.

    ``M`` generalized mass (volume mass plus boundary point masses), ``K``
    stiffness, ``B`` control injection (3n x 3), ``C`` trace map (3 x 3n),
    ``D_damp`` slip damping.  ``M_vol`` and ``K_lap`` are the scalar
    (n x n) volume mass and clamped-left Laplacian stiffness.
    """

    params: PhysicalParams
    grid: Grid
    M: sp.csc_matrix
    K: sp.csc_matrix
    B: np.ndarray
    C: np.ndarray
    D_damp: sp.csc_matrix
    M_vol: sp.csc_matrix
    K_lap: sp.csc_matrix
    lumped: bool = False

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def ndof(self) -> int:
        return 3 * self.grid.n

    @property
    def boundary_index(self) -> np.ndarray:
        """Positions of the ``x = L`` node in the w, xi and s blocks."""
        n = self.grid.n
        return np.array([n - 1, 2 * n - 1, 3 * n - 1])

    @property
    def weights(self) -> np.ndarray:
        return self.params.duality_weights

    @functools.cached_property
    def M_solve(self):
        return spla.factorized(self.M.tocsc())

    @functools.cached_property
    def K_solve(self):
        return spla.factorized(self.K.tocsc())

    @functools.cached_property
    def M_interior(self) -> sp.csc_matrix:
        """Generalized mass without the boundary point masses."""
        P = sp.csc_matrix(
            (self.weights, (self.boundary_index, self.boundary_index)),
            shape=(self.ndof, self.ndof),
        )
        return (self.M - P).tocsc()

    @functools.cached_property
    def scalar_modes(self):
        """Generalized eigenpairs of ``(K_lap, M_vol)``, ascending, M-orthonormal."""
        lam, vec = sla.eigh(self.K_lap.toarray(), self.M_vol.toarray())
        return lam, vec

    def zero_state(self) -> State:
        return State.zeros(self.ndof)

    def split(self, x: np.ndarray):
        """Split a 3n nodal vector into its ``(w, xi, s)`` blocks."""
        n = self.grid.n
        return x[:n], x[n : 2 * n], x[2 * n :]

    def nodal_fields(self, x: np.ndarray):
        """Blocks of ``x`` with the clamped value at ``x = 0`` prepended."""
        return tuple(np.concatenate([[0.0], blk]) for blk in self.split(x))

    def interpolate(self, w, xi, s, wt=None, xit=None, st=None) -> State:
        """Nodal interpolant of callables (or arrays on ``grid.nodes``)."""
        x = self.grid.nodes

        def nodal(f):
            if f is None:
                return np.zeros(self.grid.n)
            vals = f(x) if callable(f) else np.asarray(f, dtype=float)
            vals = np.broadcast_to(np.asarray(vals, dtype=float), x.shape)
            return vals[1:].copy()

        q = np.concatenate([nodal(w), nodal(xi), nodal(s)])
        v = np.concatenate([nodal(wt), nodal(xit), nodal(st)])
        return State(q, v)


def assemble(params: PhysicalParams, grid: Grid, lumped: bool = False) -> DiscreteSystem:
    """Assemble mass, stiffness, control and trace matrices."""
    if abs(grid.L - params.L) > 1e-14 * params.L:
        raise GridError(f"grid length {grid.L} differs from beam length {params.L}")
    n, h = grid.n, grid.h
    mass, lmass, lap = _local_matrices(h)
    M_vol = _assemble_scalar(lmass if lumped else mass, n)
    K_lap = _assemble_scalar(lap, n)
    K = _assemble_coupled(_coupled_stiffness(params, h), n)

    p = params
    point = sp.csc_matrix(([1.0], ([n - 1], [n - 1])), shape=(n, n))
    M = sp.block_diag(
        [
            3.0 * p.rho1 * M_vol + 3.0 * p.k * point,
            3.0 * p.rho2 * M_vol + 3.0 * p.b * point,
            p.rho2 * M_vol + p.b * point,
        ],
        format="csc",
    )
    zero = sp.csc_matrix((n, n))
    D_damp = sp.block_diag([zero, zero, p.beta * M_vol], format="csc")

    C = np.zeros((3, 3 * n))
    C[[0, 1, 2], [n - 1, 2 * n - 1, 3 * n - 1]] = 1.0
    B = C.T * p.duality_weights[None, :]
    return DiscreteSystem(
        params=params,
        grid=grid,
        M=M,
        K=K.tocsc(),
        B=B,
        C=C,
        D_damp=D_damp,
        M_vol=M_vol,
        K_lap=K_lap,
        lumped=lumped,
    )


def energy_inner(sys: DiscreteSystem, u1: State, u2: State) -> float:
    """Energy pairing ``v1' M v2 + q1' K q2`` (the discrete phase-space product)."""
    if u1.ndof != sys.ndof or u2.ndof != sys.ndof:
        raise ValueError(f"state size mismatch: {u1.ndof}, {u2.ndof} vs {sys.ndof}")
    return float(u1.v @ (sys.M @ u2.v) + u1.q @ (sys.K @ u2.q))


def energy_norm(sys: DiscreteSystem, u: State) -> float:
    return float(np.sqrt(max(energy_inner(sys, u, u), 0.0)))


def energy(sys: DiscreteSystem, u: State) -> float:
    """Mechanical energy ``1/2 v'Mv + 1/2 q'Kq``."""
    return 0.5 * energy_inner(sys, u, u)


def apply_A(sys: DiscreteSystem, u: State) -> State:
    """Conservative first-order generator ``(q, v) -> (v, -M^{-1} K q)``."""
    sys.params.require_conservative()
    if u.ndof != sys.ndof:
        raise ValueError(f"state size {u.ndof} does not match system size {sys.ndof}")
    return State(u.v.copy(), -sys.M_solve(sys.K @ u.q))


def solve_static(sys: DiscreteSystem, F: State) -> State:
    """Solve ``apply_A(U) = F``.

    Velocities copy the position slots of ``F``; positions solve the
    stiffness problem ``K q = -M f_v``, whose right-hand side carries the
    boundary data ``3k f7, 3b f8, b f9`` through the point masses of ``M``.
    """
    sys.params.require_conservative()
    if F.ndof != sys.ndof:
        raise ValueError(f"state size {F.ndof} does not match system size {sys.ndof}")
    q = -sys.K_solve(sys.M @ F.v)
    return State(q, F.q.copy())


def first_order_matrix(sys: DiscreteSystem) -> np.ndarray:
    """Dense generator ``J`` with ``d/dt [q; v] = J [q; v]`` (small meshes only)."""
    N = sys.ndof
    MinvK = sla.solve(sys.M.toarray(), sys.K.toarray(), assume_a="pos")
    J = np.zeros((2 * N, 2 * N))
    J[:N, N:] = np.eye(N)
    J[N:, :N] = -MinvK
    return J


def energy_metric(sys: DiscreteSystem) -> np.ndarray:
    return sla.block_diag(sys.K.toarray(), sys.M.toarray())


def _sym_sqrt(S: np.ndarray):
    lam, V = sla.eigh(S)
    r = np.sqrt(lam)
    return (V * r) @ V.T, (V / r) @ V.T


def symmetrized_generator(sys: DiscreteSystem) -> np.ndarray:
    """``S^{1/2} J S^{-1/2}`` with ``S = diag(K, M)``; skew iff ``J`` is energy-skew."""
    J = first_order_matrix(sys)
    KS, KSi = _sym_sqrt(sys.K.toarray())
    MS, MSi = _sym_sqrt(sys.M.toarray())
    return sla.block_diag(KS, MS) @ J @ sla.block_diag(KSi, MSi)


def fractional_norm(sys: DiscreteSystem, q: np.ndarray, sigma: float = 0.75) -> float:
    """Spectral ``H^sigma`` norm of the position fields, ``1/2 < sigma < 1``.

    Each field is expanded in the ``(K_lap, M_vol)`` eigenbasis and mode ``m``
    is weighted by ``(1 + lambda_m)^sigma``.
    """
    if not 0.5 < sigma < 1.0:
        raise ParameterError(f"sigma must lie in (1/2, 1), got {sigma!r}")
    q = np.asarray(q, dtype=float)
    if q.size != sys.ndof:
        raise ValueError(f"position vector has size {q.size}, expected {sys.ndof}")
    lam, V = sys.scalar_modes
    wts = (1.0 + lam) ** sigma
    total = 0.0
    for blk in sys.split(q):
        c = V.T @ (sys.M_vol @ blk)
        total += float(np.sum(wts * c * c))
    return float(np.sqrt(total))


def h1_norm(sys: DiscreteSystem, q: np.ndarray) -> float:
    """``sqrt(||f||^2 + ||f_x||^2)`` summed over the three position fields."""
    total = 0.0
    for blk in sys.split(np.asarray(q, dtype=float)):
        total += float(blk @ (sys.M_vol @ blk) + blk @ (sys.K_lap @ blk))
    return float(np.sqrt(total))


def boundary_fluxes(sys: DiscreteSystem, q: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Recover ``((w_x + xi + s)(L), xi_x(L), s_x(L))`` from the last weak rows.

    ``a`` is the nodal acceleration.  Testing the interior equations against
    the hat function of the end node shows that ``weight * flux`` equals the
    interior part (point mass excluded) of that weak row.
    """
    idx = sys.boundary_index
    resid = (sys.M_interior @ a + sys.K @ q)[idx]
    return resid / sys.weights


def boundary_fluxes_onesided(sys: DiscreteSystem, q: np.ndarray) -> np.ndarray:
    """Second-order one-sided difference estimate of the boundary fluxes."""
    h = sys.grid.h
    w, xi, s = sys.nodal_fields(q)

    def dx(f):
        return (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)

    return np.array([dx(w) + xi[-1] + s[-1], dx(xi), dx(s)])
