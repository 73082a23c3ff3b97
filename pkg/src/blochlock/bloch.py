"""Bloch-sphere state representations for a two-level atom.

Conventions
-----------
Basis ordering is (|e>, |g>) with lowering operator sigma = |g><e|.  The
Bloch components are expectation values of the quadratures

    sigma_x = sigma + sigma^dag,
    sigma_y = i sigma - i sigma^dag,
    sigma_z = |e><e| - |g><g|,

so the ground state sits at (0, 0, -1) and the excited state at (0, 0, +1).
The dynamics studied in this package confines states to the x-z plane,
which motivates the polar form

    x = r sin(theta),   z = r cos(theta),

with theta measured from the excited-state pole (+z) toward +x, i.e.
theta = atan2(x, z) in (-pi, pi].  r = |(x, z)| is a purity measure:
Tr[rho^2] = (1 + x^2 + y^2 + z^2) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

#: Numerical slack on the Bloch-ball constraint x^2+y^2+z^2 <= 1 for
#: algebraic (non-integrated) states.
TOL_BLOCH = 1e-9

#: Tolerance on Hermiticity / unit trace / positivity of density matrices.
TOL_DENSITY = 1e-12

#: A state counts as "in the x-z plane" when |y| is below this.
TOL_PLANE = 1e-9

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


@dataclass(frozen=True)
class BlochVector:
    """Bloch vector (x, y, z) of a qubit state; |b| <= 1 for physical states."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "BlochVector":
        x, y, z = np.asarray(arr, dtype=float)
        return cls(float(x), float(y), float(z))

    @property
    def r_squared(self) -> float:
        return self.x * self.x + self.y * self.y + self.z * self.z


#: Ground state of the atom.
GROUND_STATE = BlochVector(0.0, 0.0, -1.0)


@dataclass(frozen=True)
class PolarState:
    """In-plane state written as radius r and Bloch angle theta (radians)."""

    r: float
    theta: float


class Purity(NamedTuple):
    r_squared: float
    trace_rho_squared: float


def purity(b: BlochVector) -> Purity:
    """Squared Bloch radius and Tr[rho^2] = (1 + r^2)/2 of a state."""
    r2 = b.r_squared
    return Purity(r_squared=r2, trace_rho_squared=0.5 * (1.0 + r2))


def bloch_to_density(b: BlochVector, tol: float = TOL_BLOCH) -> np.ndarray:
    """Density matrix rho = (I + x sigma_x + y sigma_y + z sigma_z)/2.

    Raises
    ------
    ValueError
        If the vector lies outside the Bloch ball beyond `tol`.
    """
    if b.r_squared > 1.0 + tol:
        raise ValueError(f"Bloch vector outside unit ball: |b|^2 = {b.r_squared!r}")
    return 0.5 * (np.eye(2, dtype=complex)
                  + b.x * SIGMA_X + b.y * SIGMA_Y + b.z * SIGMA_Z)


def density_to_bloch(rho: np.ndarray, tol: float = TOL_DENSITY) -> BlochVector:
    """Bloch vector of a 2x2 density matrix, b_i = Tr[rho sigma_i].

    Raises
    ------
    ValueError
        If rho is not Hermitian, not unit trace, or has determinant
        below -`tol` (negativity beyond numerical noise).
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {rho.shape}")
    if abs(rho[1, 0] - np.conj(rho[0, 1])) > math.sqrt(tol) * 10 or \
            abs(rho[0, 0].imag) > tol or abs(rho[1, 1].imag) > tol:
        raise ValueError("density matrix is not Hermitian")
    tr = rho[0, 0] + rho[1, 1]
    if abs(tr - 1.0) > tol:
        raise ValueError(f"density matrix trace {tr!r} is not 1")
    det = rho[0, 0] * rho[1, 1] - rho[0, 1] * rho[1, 0]
    if det.real < -tol:
        raise ValueError(f"density matrix is not positive semidefinite (det={det!r})")
    x = float(np.real(np.trace(rho @ SIGMA_X)))
    y = float(np.real(np.trace(rho @ SIGMA_Y)))
    z = float(np.real(np.trace(rho @ SIGMA_Z)))
    return BlochVector(x, y, z)


def polar_to_bloch(p: PolarState) -> BlochVector:
    """Cartesian Bloch vector (r sin theta, 0, r cos theta) of an in-plane state."""
    if p.r < 0.0:
        raise ValueError(f"radius must be non-negative, got {p.r!r}")
    return BlochVector(p.r * math.sin(p.theta), 0.0, p.r * math.cos(p.theta))


def bloch_to_polar(b: BlochVector, tol: float = TOL_PLANE) -> PolarState:
    """Polar form (r, theta) of an in-plane state; theta = atan2(x, z).

    The degenerate point r = 0 maps to theta = 0 by convention so that
    round trips are deterministic.

    Raises
    ------
    ValueError
        If the state has |y| > `tol` (out of the x-z plane).
    """
    if abs(b.y) > tol:
        raise ValueError(f"state is out of the x-z plane: y = {b.y!r}")
    r = math.hypot(b.x, b.z)
    theta = math.atan2(b.x, b.z) if r > 0.0 else 0.0
    return PolarState(r=r, theta=theta)
