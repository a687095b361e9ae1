"""Material parameters and the change of unknowns for the laminated beam.

Two parameter sets are in use.  :class:`HansenSpiesParams` holds the
engineering constants of the two-layer beam (density, rotary inertia, shear
stiffness, flexural rigidity, adhesive stiffness and damping).
:class:`PhysicalParams` holds the coefficients of the equivalent
displacement / rotation / slip system::

    rho1 w_tt - k (w_x + xi + s)_x = 0
    rho2 xi_tt - b xi_xx + k (w_x + xi + s) = 0
    rho2 s_tt - b s_xx + 3k (w_x + xi + s) + gamma s + beta s_t = 0

All quantities are dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """A physical parameter lies outside its admissible range."""


def _check_positive(**values: float) -> None:
    for name, val in values.items():
        if not np.isfinite(val) or val <= 0.0:
            raise ParameterError(f"{name} must be strictly positive, got {val!r}")


def _check_nonnegative(**values: float) -> None:
    for name, val in values.items():
        if not np.isfinite(val) or val < 0.0:
            raise ParameterError(f"{name} must be non-negative, got {val!r}")


@dataclass(frozen=True)
class HansenSpiesParams:
    """Engineering constants of the two-layer beam with adhesive interface."""

    rho: float
    I_rho: float
    G: float
    D: float
    delta0: float = 0.0
    gamma0: float = 0.0
    L: float = 1.0

    def __post_init__(self) -> None:
        _check_positive(rho=self.rho, I_rho=self.I_rho, G=self.G, D=self.D, L=self.L)
        _check_nonnegative(delta0=self.delta0, gamma0=self.gamma0)


@dataclass(frozen=True)
class PhysicalParams:
    """Coefficients of the displacement / rotation / slip system.

    ``beta`` is the structural damping of the slip equation.  It must be zero
    whenever the conservative flow or the control pipeline is used.
    """

    rho1: float = 1.0
    rho2: float = 1.0
    k: float = 1.0
    b: float = 1.0
    gamma: float = 1.0
    beta: float = 0.0
    L: float = 1.0

    def __post_init__(self) -> None:
        _check_positive(rho1=self.rho1, rho2=self.rho2, k=self.k, b=self.b, L=self.L)
        _check_nonnegative(gamma=self.gamma, beta=self.beta)

    @property
    def duality_weights(self) -> np.ndarray:
        """Weights ``(3k, 3b, b)`` pairing boundary controls with traces."""
        return np.array([3.0 * self.k, 3.0 * self.b, self.b])

    @property
    def crossing_time(self) -> float:
        """Travel time of the slowest characteristic across the beam."""
        return self.L * max(np.sqrt(self.rho1 / self.k), np.sqrt(self.rho2 / self.b))

    @property
    def default_horizon(self) -> float:
        return 4.0 * self.crossing_time

    def require_conservative(self) -> None:
        if self.beta != 0.0:
            raise ParameterError("the conservative flow requires beta = 0")

    def require_control_ready(self) -> None:
        """Reject configurations the controllability pipeline cannot handle."""
        self.require_conservative()
        if self.gamma <= 0.0:
            raise ParameterError(
                "gamma must be > 0: the phase-space norm uses gamma*|s|^2"
            )


def from_hansen_spies(p: HansenSpiesParams) -> PhysicalParams:
    """Map Hansen-Spies constants to the displacement / rotation / slip form.

    ``rho1 = rho``, ``rho2 = I_rho``, ``k = G``, ``b = D``,
    ``gamma = 4 delta0 / 3`` and ``beta = 4 gamma0 / 3``.
    """
    return PhysicalParams(
        rho1=p.rho,
        rho2=p.I_rho,
        k=p.G,
        b=p.D,
        gamma=4.0 * p.delta0 / 3.0,
        beta=4.0 * p.gamma0 / 3.0,
        L=p.L,
    )


def to_hansen_spies(p: PhysicalParams) -> HansenSpiesParams:
    return HansenSpiesParams(
        rho=p.rho1,
        I_rho=p.rho2,
        G=p.k,
        D=p.b,
        delta0=3.0 * p.gamma / 4.0,
        gamma0=3.0 * p.beta / 4.0,
        L=p.L,
    )


# rows: (w, xi, s); columns: (w, psi, S)
TRANSFORM_MATRIX = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 3.0], [0.0, 0.0, -3.0]])


def transform_state(w, psi, S):
    """Return ``(w, xi, s)`` with ``xi = 3S - psi`` and ``s = -3S``."""
    w, psi, S = (np.asarray(a, dtype=float) for a in (w, psi, S))
    if not (w.shape == psi.shape == S.shape):
        raise ValueError(
            f"fields must share one grid, got shapes {w.shape}, {psi.shape}, {S.shape}"
        )
    return w.copy(), 3.0 * S - psi, -3.0 * S


def inverse_transform_state(w, xi, s):
    """Inverse of :func:`transform_state`: ``psi = -xi - s``, ``S = -s / 3``."""
    w, xi, s = (np.asarray(a, dtype=float) for a in (w, xi, s))
    if not (w.shape == xi.shape == s.shape):
        raise ValueError(
            f"fields must share one grid, got shapes {w.shape}, {xi.shape}, {s.shape}"
        )
    return w.copy(), -xi - s, -s / 3.0
