"""Hilbert uniqueness method for the three boundary controls.

Adjoint data ``a`` prescribed at ``t = T`` generates a free backward flow
``phi``.  Its boundary position traces, fed back as controls, drive the beam
from rest to a state ``y_a(T)``.  With the symplectic pairing
``omega(y, phi) = q_phi' M v_y - q_y' M v_phi`` the midpoint scheme satisfies
the discrete duality identity::

    omega(y(T), phi(T)) - omega(y(0), phi(0)) = sum_j dt u_j' W C qbar_phi,j

with ``W = diag(3k, 3b, b)``.  Since ``omega(y, phi) = <y, A^{-1} phi>_E``, the
Gramian ``Lambda a = -A^{-1} y_a(T)`` is self-adjoint and non-negative in the
energy inner product and ``<Lambda a, a>_E`` is the weighted trace integral.
Null control of ``U0`` amounts to ``Lambda a = A^{-1} S(T) U0``, solved by
conjugate gradients on the filtered subspace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .assembly import (
    DiscreteSystem,
    Grid,
    State,
    assemble,
    energy,
    energy_norm,
    solve_static,
)
from .evolution import (
    ControlTriple,
    TimeGrid,
    Trajectory,
    adjoint_traces,
    final_state,
    solve_adjoint,
    solve_controlled,
)
from .filters import ModalFilter
from .model import PhysicalParams

log = logging.getLogger(__name__)


class IllPosedFilterError(RuntimeError):
    """The filtered Gramian is numerically singular."""


def symplectic_pairing(sys: DiscreteSystem, y: State, phi: State) -> float:
    """``q_phi' M v_y - q_y' M v_phi``; the transposition pairing of the beam."""
    return float(phi.q @ (sys.M @ y.v) - y.q @ (sys.M @ phi.v))


@dataclass(eq=False)
class GramianOperator:
    """Matrix-free controllability Gramian on a modal filter.

    ``weighted=True`` uses the trace weights ``(3k, 3b, b)`` in the quadratic
    form, so controls equal the adjoint position traces.  ``weighted=False``
    uses unit weights; the controls are then the traces divided by
    ``(3k, 3b, b)``.
    """

    sys: DiscreteSystem
    tg: TimeGrid
    filt: ModalFilter
    weighted: bool = True
    epsilon: float = 0.0
    unfiltered_inputs: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        self.sys.params.require_conservative()
        if self.filt.sys is not self.sys:
            raise ValueError("modal filter was built for a different system")

    @property
    def trace_weights(self) -> np.ndarray:
        return self.sys.weights if self.weighted else np.ones(3)

    @property
    def control_scale(self) -> np.ndarray:
        return self.trace_weights / self.sys.weights

    def controls_from_traces(self, traces: np.ndarray) -> np.ndarray:
        return traces * self.control_scale[None, :]

    def adjoint_controls(self, a: State) -> np.ndarray:
        """Sampled controls ``(nt+1, 3)`` generated by adjoint data ``a``."""
        return self.controls_from_traces(adjoint_traces(self.sys, a, self.tg))

    def _filtered(self, a: State) -> State:
        pa = self.filt.project(a)
        if energy_norm(self.sys, a - pa) > 1e-10 * max(energy_norm(self.sys, a), 1e-300):
            self.unfiltered_inputs += 1
        return pa

    def apply(self, a: State) -> State:
        a = self._filtered(a)
        u = self.adjoint_controls(a)
        yT = final_state(self.sys, self.sys.zero_state(), self.tg, u)
        out = -self.filt.project(solve_static(self.sys, yT))
        if self.epsilon:
            out = out + self.epsilon * a
        return out

    __call__ = apply

    def trace_quadratic_form(self, a: State, rule: str = "midpoint") -> float:
        """``int (3k chi^2 + 3b eta^2 + b Theta^2) dt`` along the adjoint flow.

        ``rule="midpoint"`` averages consecutive samples, which is the
        quadrature the integrator itself realizes; ``"trapezoid"`` is the
        plain trapezoid rule.
        """
        tr = adjoint_traces(self.sys, self.filt.project(a), self.tg)
        wts = self.trace_weights
        if rule == "midpoint":
            mid = 0.5 * (tr[1:] + tr[:-1])
            return float(self.tg.dt * np.sum(mid**2 @ wts))
        if rule == "trapezoid":
            return float(np.trapezoid(tr**2 @ wts, dx=self.tg.dt))
        raise ValueError(f"unknown quadrature rule {rule!r}")

    # energy-orthonormal coordinates of the filtered space
    def apply_coordinates(self, z: np.ndarray) -> np.ndarray:
        return self.filt.orthonormal_coordinates(self.apply(self.filt.from_orthonormal(z)))

    def dense_matrix(self) -> np.ndarray:
        """Column-by-column assembly in an energy-orthonormal basis."""
        d = self.filt.dim
        G = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1.0
            G[:, j] = self.apply_coordinates(e)
        return G

    def ritz_values(self, method: str = "dense", k: int = 1) -> np.ndarray:
        """Eigenvalues of the filtered Gramian (all for ``dense``, ``k`` smallest for ``lanczos``)."""
        if method == "dense":
            G = self.dense_matrix()
            return np.linalg.eigvalsh(0.5 * (G + G.T))
        if method == "lanczos":
            from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

            d = self.filt.dim
            op = LinearOperator((d, d), matvec=self.apply_coordinates, dtype=float)
            try:
                vals = eigsh(op, k=min(k, d - 1), which="SA", tol=1e-10, maxiter=20 * d)
            except ArpackNoConvergence as exc:
                raise EigenIterationError(
                    f"Lanczos did not converge; partial Ritz values {exc.eigenvalues}"
                ) from exc
            return np.sort(vals[0])
        raise ValueError(f"unknown eigen method {method!r}")


class EigenIterationError(RuntimeError):
    """The eigenvalue iteration for the filtered Gramian did not converge."""


def apply_gramian(g: GramianOperator, a: State) -> State:
    return g.apply(a)


@dataclass
class HumSolution:
    a_star: State
    controls: ControlTriple
    iterations: int
    residual_history: list
    J_history: list
    converged: bool
    initial_energy: float
    final_energy: float
    final_energy_filtered: float
    final_state: State
    control_norm: float
    mu_min: Optional[float] = None
    control_bound: Optional[float] = None
    rhs_norm: float = 0.0

    @property
    def error_history(self) -> list:
        """Gramian-norm distance of each iterate to the last one, ``sqrt(2 (J_k - J_final))``.

        CG decreases this quantity at every step; the Euclidean residual in
        ``residual_history`` need not be monotone.
        """
        J_end = self.J_history[-1]
        return [float(np.sqrt(max(2.0 * (j - J_end), 0.0))) for j in self.J_history]

    @property
    def final_ratio(self) -> float:
        return self.final_energy / self.initial_energy if self.initial_energy > 0 else 0.0

    @property
    def filtered_ratio(self) -> float:
        return self.final_energy_filtered / self.initial_energy if self.initial_energy > 0 else 0.0

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_history": [float(r) for r in self.residual_history],
            "J_history": [float(j) for j in self.J_history],
            "error_history": self.error_history,
            "initial_energy": self.initial_energy,
            "final_energy": self.final_energy,
            "final_energy_filtered": self.final_energy_filtered,
            "final_ratio": self.final_ratio,
            "filtered_ratio": self.filtered_ratio,
            "control_norm": self.control_norm,
            "mu_min": self.mu_min,
            "control_bound": self.control_bound,
        }


def hum_rhs(g: GramianOperator, U0: State) -> State:
    """Right-hand side ``A^{-1} P S(T) U0`` of the HUM equation."""
    free = final_state(g.sys, U0, g.tg)
    return solve_static(g.sys, g.filt.project(free))


def minimize_J(
    g: GramianOperator,
    U0: State,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> HumSolution:
    """Conjugate gradients for the HUM functional on the filtered subspace.

    Minimizes ``J(a) = 1/2 <Lambda a, a>_E - <A^{-1} S(T) U0, a>_E``.  Stops
    when the energy norm of the residual drops below ``tol`` times that of
    the right-hand side.
    """
    g.sys.params.require_control_ready()
    filt = g.filt
    b = filt.orthonormal_coordinates(hum_rhs(g, U0))
    bnorm = float(np.linalg.norm(b))
    z = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    residuals = [np.sqrt(rr)]
    J_hist = [0.0]
    converged = bnorm == 0.0
    it = 0
    while not converged and it < max_iter:
        Ap = g.apply_coordinates(p)
        curv = float(p @ Ap)
        rayleigh = curv / float(p @ p)
        if rayleigh <= 1e-13 * max(1.0, abs(g.epsilon)):
            raise IllPosedFilterError(
                f"Gramian Rayleigh quotient {rayleigh:.3e} at CG iteration {it}; "
                "reduce the filter size, lengthen T or set epsilon > 0"
            )
        alpha = rr / curv
        z += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        it += 1
        residuals.append(np.sqrt(rr_new))
        J_hist.append(-0.5 * float(z @ (b + r)))
        log.debug("CG %d: residual %.3e", it, np.sqrt(rr_new) / bnorm)
        if np.sqrt(rr_new) <= tol * bnorm:
            converged = True
            break
        p = r + (rr_new / rr) * p
        rr = rr_new

    a_star = filt.from_orthonormal(z)
    return _finish(g, U0, a_star, it, residuals, J_hist, converged, bnorm)


def _finish(g, U0, a_star, it, residuals, J_hist, converged, bnorm) -> HumSolution:
    sys = g.sys
    u = g.adjoint_controls(a_star)
    controls = ControlTriple(g.tg.times, u)
    yT = final_state(sys, U0, g.tg, u)
    e0 = energy(sys, U0)
    return HumSolution(
        a_star=a_star,
        controls=controls,
        iterations=it,
        residual_history=residuals,
        J_history=J_hist,
        converged=converged,
        initial_energy=e0,
        final_energy=energy(sys, yT),
        final_energy_filtered=energy(sys, g.filt.project(yT)),
        final_state=yT,
        control_norm=controls.l2_norm(),
        rhs_norm=bnorm,
    )


InitialData = Union[State, str, None]


def initial_state(
    sys: DiscreteSystem,
    filt: ModalFilter,
    source: InitialData,
    seed: int = 0,
    stream: int = 0,
) -> State:
    """Initial data from a descriptor: ``"mode:K"``, ``"random"``, ``"zero"``,
    ``"file:PATH"`` naming a ``.npy`` phase vector, or a :class:`State`.

    ``mode:K`` is the energy-normalized position profile of mode ``K``
    (0-based).  ``random`` draws a filtered state from the counter-based
    generator keyed by ``seed`` on counter stream ``stream``.
    """
    if isinstance(source, State):
        return source
    if source is None or source == "zero":
        return sys.zero_state()
    if source == "random":
        return filt.random_state(make_rng(seed, stream))
    if isinstance(source, str) and source.startswith("mode:"):
        return filt.mode_state(int(source.split(":", 1)[1]))
    if isinstance(source, str) and source.startswith("file:"):
        x = np.load(source.split(":", 1)[1])
        if x.size != 2 * sys.ndof:
            raise ValueError(f"initial data file holds {x.size} values, need {2 * sys.ndof}")
        return State.from_vector(x)
    raise ValueError(f"unrecognized initial data {source!r}")


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator: Philox keyed by ``seed``, advanced per ``stream``."""
    bitgen = np.random.Philox(key=int(seed) & (2**64 - 1))
    if stream:
        bitgen = bitgen.advance(int(stream) * 2**40)
    return np.random.Generator(bitgen)


@dataclass
class PipelineResult:
    solution: HumSolution
    trajectory: Trajectory
    system: DiscreteSystem
    filt: ModalFilter
    gramian: GramianOperator
    U0: State
    U0_filtered: State

    @property
    def unfiltered_ratio(self) -> float:
        return self.solution.final_ratio

    @property
    def filtered_ratio(self) -> float:
        return self.solution.filtered_ratio


def null_control_pipeline(
    params: PhysicalParams,
    n: int,
    m: int,
    T: Optional[float] = None,
    U0: InitialData = "random",
    seed: int = 0,
    nt: Optional[int] = None,
    tol: float = 1e-6,
    max_iter: int = 200,
    weighted: bool = True,
    compute_mu: bool = True,
    stream: int = 0,
) -> PipelineResult:
    """Assemble, filter, minimize and re-simulate from the true initial data.

    The HUM problem is solved for the filtered part of ``U0``; the returned
    trajectory starts from the unfiltered ``U0`` and is driven by the
    computed controls, so its final energy includes the uncontrolled
    high-mode remainder.
    """
    params.require_control_ready()
    T = params.default_horizon if T is None else float(T)
    nt = default_steps(T, params, n) if nt is None else int(nt)
    sys = assemble(params, Grid(n, params.L))
    filt = ModalFilter.build(sys, m)
    tg = TimeGrid(T, nt)
    g = GramianOperator(sys, tg, filt, weighted=weighted)
    U0_state = initial_state(sys, filt, U0, seed, stream)
    U0_f = filt.project(U0_state)

    sol = minimize_J(g, U0_f, tol=tol, max_iter=max_iter)
    traj = solve_controlled(sys, U0_state, sol.controls, tg)
    yT = traj.final
    sol.final_state = yT
    sol.initial_energy = energy(sys, U0_state)
    sol.final_energy = energy(sys, yT)
    sol.final_energy_filtered = energy(sys, filt.project(yT))
    if compute_mu:
        mu = float(g.ritz_values()[0])
        sol.mu_min = mu
        if mu > 0:
            sol.control_bound = energy_norm(sys, U0_state) / np.sqrt(mu)
    return PipelineResult(sol, traj, sys, filt, g, U0_state, U0_f)


def default_steps(T: float, params: PhysicalParams, n: int) -> int:
    """Time steps giving ``dt = h / 2`` in units of the crossing time."""
    h = params.L / n
    return int(np.ceil(2.0 * T / (h * params.crossing_time / params.L)))


def verify_duality_identity(
    sys: DiscreteSystem,
    U0: State,
    controls: ControlTriple,
    WT: State,
    tg: TimeGrid,
    sources=None,
) -> float:
    """Relative defect of the discrete transposition identity.

    Compares ``omega(y(T), phi(T)) - omega(y(0), phi(0))`` against
    ``int (3k u1 chi(L) + 3b u2 eta(L) + b u3 Theta(L)) dt`` (plus the source
    pairing), where ``y`` is the controlled flow from ``U0`` and ``phi`` the
    adjoint flow with data ``WT`` at ``T``.  Both sides vanish for zero data.
    """
    y = solve_controlled(sys, U0, controls, tg, sources)
    phi = solve_adjoint(sys, WT, tg)
    lhs = symplectic_pairing(sys, y.final, phi.final) - symplectic_pairing(
        sys, y.initial, phi.initial
    )
    qbar = 0.5 * (phi.q[1:] + phi.q[:-1])
    loads = y.loads
    if loads is None:
        rhs = 0.0
    else:
        gbar = 0.5 * (loads[1:] + loads[:-1])
        rhs = float(tg.dt * np.sum(gbar * qbar))
    scale = abs(lhs) + abs(rhs)
    return 0.0 if scale == 0.0 else abs(lhs - rhs) / scale


def boundary_pairing(sys: DiscreteSystem, controls: ControlTriple, phi: Trajectory) -> float:
    """``int u' W C q_phi dt`` with half-step averages, as realized by the scheme."""
    qbar = 0.5 * (phi.q[1:] + phi.q[:-1])[:, sys.boundary_index]
    ubar = controls.midpoints()
    dt = np.diff(controls.times)
    return float(np.sum(dt[:, None] * ubar * qbar * sys.weights[None, :]))
