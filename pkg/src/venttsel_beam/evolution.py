"""Implicit midpoint time integration of the semi-discrete beam.

One step of size ``dt`` solves::

    (M + dt^2/4 K + dt/2 D) vbar = M v + dt/2 (-K q + g)
    v_new = 2 vbar - v,   q_new = q + dt vbar

with ``g = B u + f`` evaluated at the half step.  For ``D = 0`` and ``g = 0``
the map preserves ``1/2 v'Mv + 1/2 q'Kq`` exactly (up to rounding) and is
time-reversible, which makes it the discrete counterpart of the isometry
group.  Controls and sources are sampled on the time grid and averaged
pairwise to obtain half-step values.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import DiscreteSystem, State
from .model import ParameterError


@dataclass(frozen=True)
class TimeGrid:
    T: float
    nt: int

    def __post_init__(self) -> None:
        if not self.T > 0.0 or not np.isfinite(self.T):
            raise ValueError(f"horizon T must be positive, got {self.T!r}")
        if int(self.nt) != self.nt or self.nt < 1:
            raise ValueError(f"nt must be a positive integer, got {self.nt!r}")

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)


@dataclass(frozen=True)
class TraceSignal:
    """Boundary values at ``x = L`` of the three fields, one row per time."""

    times: np.ndarray
    values: np.ndarray
    kind: str = "position"

    def __post_init__(self) -> None:
        if self.kind not in ("position", "velocity"):
            raise ValueError(f"kind must be 'position' or 'velocity', got {self.kind!r}")
        if self.values.shape != (self.times.size, 3):
            raise ValueError(f"trace values must have shape ({self.times.size}, 3)")

    @property
    def w(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def xi(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def s(self) -> np.ndarray:
        return self.values[:, 2]


@dataclass(frozen=True)
class ControlTriple:
    """Boundary controls ``(u1, u2, u3)`` sampled on a :class:`TimeGrid`."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (np.size(self.times), 3):
            raise ValueError(
                f"controls must have shape ({np.size(self.times)}, 3), got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("controls contain non-finite values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, tg: TimeGrid) -> "ControlTriple":
        return cls(tg.times, np.zeros((tg.nt + 1, 3)))

    @classmethod
    def from_functions(cls, tg: TimeGrid, u1=None, u2=None, u3=None) -> "ControlTriple":
        t = tg.times
        cols = []
        for f in (u1, u2, u3):
            cols.append(np.zeros_like(t) if f is None else np.broadcast_to(f(t), t.shape))
        return cls(t, np.column_stack(cols))

    @property
    def u1(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def u2(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def u3(self) -> np.ndarray:
        return self.values[:, 2]

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.values[1:] + self.values[:-1])

    def l2_norm(self) -> float:
        """``L^2(0,T)^3`` norm by the trapezoid rule."""
        return float(np.sqrt(np.trapezoid(np.sum(self.values**2, axis=1), self.times)))

    def __add__(self, other: "ControlTriple") -> "ControlTriple":
        return ControlTriple(self.times, self.values + other.values)

    def __mul__(self, alpha: float) -> "ControlTriple":
        return ControlTriple(self.times, alpha * self.values)

    __rmul__ = __mul__


@dataclass
class Trajectory:
    """Stored states ``q[j], v[j]`` at ``times[j]`` and the loads that drove them."""

    sys: DiscreteSystem
    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    loads: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def nt(self) -> int:
        return self.times.size - 1

    def state(self, j: int) -> State:
        return State(self.q[j].copy(), self.v[j].copy())

    @property
    def initial(self) -> State:
        return self.state(0)

    @property
    def final(self) -> State:
        return self.state(-1)

    @functools.cached_property
    def energy(self) -> np.ndarray:
        sys = self.sys
        kin = np.einsum("ij,ij->i", self.v, (sys.M @ self.v.T).T)
        pot = np.einsum("ij,ij->i", self.q, (sys.K @ self.q.T).T)
        return 0.5 * (kin + pot)

    def position_traces(self) -> TraceSignal:
        return TraceSignal(self.times, self.q[:, self.sys.boundary_index].copy(), "position")

    def velocity_traces(self) -> TraceSignal:
        return TraceSignal(self.times, self.v[:, self.sys.boundary_index].copy(), "velocity")

    def accelerations(self) -> np.ndarray:
        """Nodal accelerations ``M^{-1}(g - K q - D v)`` at every stored time."""
        sys = self.sys
        rhs = -(sys.K @ self.q.T) - (sys.D_damp @ self.v.T)
        if self.loads is not None:
            rhs = rhs + self.loads.T
        return np.column_stack([sys.M_solve(rhs[:, j]) for j in range(rhs.shape[1])]).T


class _Stepper:
    def __init__(self, sys: DiscreteSystem, dt: float):
        self.sys = sys
        self.dt = dt
        A = (sys.M + (0.25 * dt * dt) * sys.K + (0.5 * dt) * sys.D_damp).tocsc()
        self.solve = spla.factorized(A)

    def step(self, q: np.ndarray, v: np.ndarray, g: Optional[np.ndarray]):
        sys, dt = self.sys, self.dt
        rhs = sys.M @ v - (0.5 * dt) * (sys.K @ q)
        if g is not None:
            rhs += (0.5 * dt) * g
        vbar = self.solve(rhs)
        return q + dt * vbar, 2.0 * vbar - v


@functools.lru_cache(maxsize=16)
def _stepper(sys: DiscreteSystem, dt: float) -> _Stepper:
    return _Stepper(sys, dt)


def step_midpoint(
    sys: DiscreteSystem,
    state: State,
    dt: float,
    u_mid=None,
    f_mid=None,
) -> State:
    """Advance one implicit midpoint step with half-step control and load."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    g = _load(sys, u_mid, f_mid)
    q, v = _stepper(sys, float(dt)).step(state.q, state.v, g)
    return State(q, v)


def _load(sys: DiscreteSystem, u, f) -> Optional[np.ndarray]:
    g = None
    if u is not None:
        g = sys.B @ np.asarray(u, dtype=float)
    if f is not None:
        g = np.asarray(f, dtype=float) if g is None else g + f
    return g


def _integrate(
    sys: DiscreteSystem,
    q0: np.ndarray,
    v0: np.ndarray,
    dt: float,
    nt: int,
    half_loads: Optional[np.ndarray] = None,
    store: str = "full",
):
    """Run ``nt`` steps; ``dt`` may be negative for backward integration.

    ``store`` is ``"full"`` (all states), ``"traces"`` (boundary positions
    only) or ``"final"``.
    """
    stepper = _stepper(sys, float(dt))
    q, v = np.array(q0, dtype=float), np.array(v0, dtype=float)
    idx = sys.boundary_index
    if store == "full":
        Q = np.empty((nt + 1, q.size))
        V = np.empty((nt + 1, q.size))
        Q[0], V[0] = q, v
    elif store == "traces":
        Q = np.empty((nt + 1, 3))
        Q[0] = q[idx]
    for j in range(nt):
        g = None if half_loads is None else half_loads[j]
        q, v = stepper.step(q, v, g)
        if store == "full":
            Q[j + 1], V[j + 1] = q, v
        elif store == "traces":
            Q[j + 1] = q[idx]
    if store == "full":
        return Q, V
    if store == "traces":
        return Q
    return q, v


def _sampled_loads(sys: DiscreteSystem, tg: TimeGrid, controls, sources) -> Optional[np.ndarray]:
    """Nodal loads ``B u + f`` on the time grid, shape ``(nt+1, 3n)``."""
    if controls is None and sources is None:
        return None
    loads = np.zeros((tg.nt + 1, sys.ndof))
    if controls is not None:
        if controls.values.shape[0] != tg.nt + 1:
            raise ValueError(
                f"controls have {controls.values.shape[0]} samples, time grid needs {tg.nt + 1}"
            )
        loads += controls.values @ sys.B.T
    if sources is not None:
        if callable(sources):
            src = np.array([sources(t) for t in tg.times], dtype=float)
        else:
            src = np.asarray(sources, dtype=float)
        if src.shape != loads.shape:
            raise ValueError(f"sources must have shape {loads.shape}, got {src.shape}")
        loads += src
    return loads


def _check_state(sys: DiscreteSystem, U: State) -> None:
    if U.ndof != sys.ndof:
        raise ValueError(f"state size {U.ndof} does not match system size {sys.ndof}")


def solve_homogeneous(sys: DiscreteSystem, U0: State, tg: TimeGrid) -> Trajectory:
    """Free conservative flow from ``U0`` over ``[0, T]``."""
    sys.params.require_conservative()
    _check_state(sys, U0)
    Q, V = _integrate(sys, U0.q, U0.v, tg.dt, tg.nt)
    return Trajectory(sys, tg.times, Q, V)


def solve_controlled(
    sys: DiscreteSystem,
    U0: State,
    controls: Optional[ControlTriple],
    tg: TimeGrid,
    sources=None,
) -> Trajectory:
    """Flow of ``M q'' + D q' + K q = B u(t) + f(t)`` from ``U0``.

    ``sources`` are nodal load vectors (already tested against the hat
    functions), either an array of shape ``(nt+1, 3n)`` or a callable of
    ``t``.
    """
    _check_state(sys, U0)
    loads = _sampled_loads(sys, tg, controls, sources)
    half = None if loads is None else 0.5 * (loads[1:] + loads[:-1])
    Q, V = _integrate(sys, U0.q, U0.v, tg.dt, tg.nt, half)
    return Trajectory(sys, tg.times, Q, V, loads)


def solve_adjoint(sys: DiscreteSystem, WT: State, tg: TimeGrid) -> Trajectory:
    """Backward homogeneous flow from data ``WT`` prescribed at ``t = T``.

    The returned trajectory is indexed forward in time, so ``final`` is
    ``WT`` and ``initial`` is the adjoint state at ``t = 0``.
    """
    sys.params.require_conservative()
    _check_state(sys, WT)
    Q, V = _integrate(sys, WT.q, WT.v, -tg.dt, tg.nt)
    return Trajectory(sys, tg.times, Q[::-1].copy(), V[::-1].copy())


def solve_damped(sys: DiscreteSystem, U0: State, tg: TimeGrid) -> Trajectory:
    """Free flow with the slip damping ``beta s_t`` switched on."""
    if not sys.params.beta > 0.0:
        raise ParameterError(f"damped flow needs beta > 0, got {sys.params.beta!r}")
    _check_state(sys, U0)
    Q, V = _integrate(sys, U0.q, U0.v, tg.dt, tg.nt)
    return Trajectory(sys, tg.times, Q, V)


def adjoint_traces(sys: DiscreteSystem, WT: State, tg: TimeGrid) -> np.ndarray:
    """Boundary position traces ``(nt+1, 3)`` of the adjoint flow from ``WT``."""
    Q = _integrate(sys, WT.q, WT.v, -tg.dt, tg.nt, store="traces")
    return Q[::-1].copy()


def final_state(
    sys: DiscreteSystem,
    U0: State,
    tg: TimeGrid,
    controls: Optional[np.ndarray] = None,
) -> State:
    """State at ``T`` driven by sampled controls ``(nt+1, 3)``; nothing stored."""
    half = None
    if controls is not None:
        loads = np.asarray(controls) @ sys.B.T
        half = 0.5 * (loads[1:] + loads[:-1])
    q, v = _integrate(sys, U0.q, U0.v, tg.dt, tg.nt, half, store="final")
    return State(q, v)


def first_order_generator_matrix(sys: DiscreteSystem) -> np.ndarray:
    """Dense generator including damping (small meshes, test oracles)."""
    from .assembly import first_order_matrix

    J = first_order_matrix(sys)
    if sys.params.beta > 0.0:
        N = sys.ndof
        MinvD = np.linalg.solve(sys.M.toarray(), sys.D_damp.toarray())
        J[N:, N:] = -MinvD
    return J


def reverse_velocities(U: State) -> State:
    return State(U.q.copy(), -U.v)

