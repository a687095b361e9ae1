"""Projection onto the lowest vibration modes of the discrete beam.

Standard discretizations of wave-like systems carry spurious high-frequency
modes whose group velocity vanishes, so boundary observability is only
uniform on a band of low modes.  :class:`ModalFilter` keeps the ``m`` lowest
generalized eigenpairs of ``(K, M)`` and projects phase vectors onto the
``2m``-dimensional span of ``(phi_i, 0)`` and ``(0, phi_i)``.  The projection
is orthogonal in the energy inner product and commutes with the flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import DiscreteSystem, State


@dataclass(frozen=True, eq=False)
class ModalFilter:
    sys: DiscreteSystem
    m: int
    eigenvalues: np.ndarray
    modes: np.ndarray

    @classmethod
    def build(cls, sys: DiscreteSystem, m: int) -> "ModalFilter":
        if int(m) != m or not 1 <= m <= sys.ndof:
            raise ValueError(f"filter size must be in [1, {sys.ndof}], got {m!r}")
        lam, vec = sla.eigh(
            sys.K.toarray(), sys.M.toarray(), subset_by_index=[0, int(m) - 1]
        )
        # deterministic sign: largest-magnitude entry positive
        pivots = vec[np.argmax(np.abs(vec), axis=0), np.arange(vec.shape[1])]
        vec = vec * np.sign(pivots)[None, :]
        return cls(sys, int(m), lam, vec)

    @property
    def dim(self) -> int:
        """Dimension of the filtered phase space."""
        return 2 * self.m

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    def coefficients(self, U: State) -> np.ndarray:
        """Coordinates ``(alpha, beta)`` with ``U = sum alpha_i (phi_i, 0) + beta_i (0, phi_i)``."""
        MU_q = self.sys.M @ U.q
        MU_v = self.sys.M @ U.v
        return np.concatenate([self.modes.T @ MU_q, self.modes.T @ MU_v])

    def from_coefficients(self, c: np.ndarray) -> State:
        c = np.asarray(c, dtype=float)
        return State(self.modes @ c[: self.m], self.modes @ c[self.m :])

    def project(self, U: State) -> State:
        return self.from_coefficients(self.coefficients(U))

    def orthonormal_coordinates(self, U: State) -> np.ndarray:
        """Coordinates in an energy-orthonormal basis of the filtered space."""
        c = self.coefficients(U)
        return np.concatenate([np.sqrt(self.eigenvalues) * c[: self.m], c[self.m :]])

    def from_orthonormal(self, z: np.ndarray) -> State:
        z = np.asarray(z, dtype=float)
        return self.from_coefficients(
            np.concatenate([z[: self.m] / np.sqrt(self.eigenvalues), z[self.m :]])
        )

    def is_filtered(self, U: State, rtol: float = 1e-10) -> bool:
        from .assembly import energy_norm

        rest = U - self.project(U)
        return energy_norm(self.sys, rest) <= rtol * max(energy_norm(self.sys, U), 1e-300)

    def mode_state(self, i: int, velocity: bool = False) -> State:
        """Energy-normalized phase vector of mode ``i`` (position or velocity slot)."""
        phi = self.modes[:, i]
        if velocity:
            return State(np.zeros_like(phi), phi.copy())
        return State(phi / np.sqrt(self.eigenvalues[i]), np.zeros_like(phi))

    def random_state(self, rng: np.random.Generator) -> State:
        """Random filtered state, uniform direction in energy-orthonormal coordinates."""
        z = rng.standard_normal(self.dim)
        return self.from_orthonormal(z)
