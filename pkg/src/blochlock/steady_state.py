"""Deterministic Bloch dynamics of the monitored, feedback-driven atom.

The ensemble-average (unconditioned) state obeys an affine equation

    db/dt = M b + u,

where the y component decouples and the x-z block carries the damping,
the coherent drive of amplitude ``alpha`` (Rabi frequency ``2*alpha``)
and the feedback-modified rate ``kappa = lam**2/eta + lam*sqrt(gamma)``:

    M = [[-gamma/2 - 2*kappa, 0,        2*alpha         ],
         [0,                 -gamma/2,  0               ],
         [-2*alpha,           0,       -gamma - 2*kappa ]],
    u = (0, 0, -(2*lam*sqrt(gamma) + gamma)).

Sign convention: positive drive rotates the Bloch vector from +z toward
+x (d x/dt includes +2*alpha*z).  The same convention fixes the sign of
the stationary solutions below.

This module provides the drift model (including the state-dependent
noise vector of the conditioned dynamics), closed-form stationary
states, eigenvalue-based stability classification, and the exact
matrix-exponential solution of the affine system, used as a noise-free
reference for ensemble averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bloch import BlochVector

#: Relative tolerance below which the stationary-state denominator is
#: treated as zero (no unique stationary state).
TOL_DENOMINATOR = 1e-14

#: Default eigenvalue classification tolerance, in units of gamma.
TOL_EIG_REL = 1e-9

STABLE = "stable"
MARGINAL = "marginal"
UNSTABLE = "unstable"


class InvalidParamsError(ValueError):
    """Parameter combination outside the model's domain."""


class DegenerateSteadyStateError(ValueError):
    """The affine drift has no unique stationary state."""


@dataclass(frozen=True)
class SystemParams:
    """Physical configuration of the monitored atom.

    Parameters
    ----------
    gamma : float
        Spontaneous decay rate (> 0), inverse time.
    eta : float
        Detector efficiency in [0, 1].
    alpha : float
        Driving amplitude (half the Rabi frequency), inverse time.
    lam : float
        Feedback gain multiplying the homodyne current in the drive
        modulation; units of sqrt(inverse time).
    """

    gamma: float
    eta: float
    alpha: float
    lam: float

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise InvalidParamsError(f"gamma must be positive, got {self.gamma!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidParamsError(f"eta must lie in [0, 1], got {self.eta!r}")


def kappa(params: SystemParams) -> float:
    """Feedback-modified damping rate lam^2/eta + lam*sqrt(gamma)."""
    if params.lam == 0.0:
        return 0.0
    if params.eta == 0.0:
        raise InvalidParamsError("eta = 0 requires lam = 0 (kappa diverges)")
    return params.lam ** 2 / params.eta + params.lam * math.sqrt(params.gamma)


@dataclass(frozen=True)
class DriftModel:
    """Affine generator of the mean dynamics plus the conditioning noise vector.

    ``matrix`` and ``offset`` define db/dt = matrix @ b + offset.  The
    conditioned (stochastic) dynamics adds ``noise(b) * dW`` with the
    state-dependent vector returned by :meth:`noise`.
    """

    matrix: np.ndarray
    offset: np.ndarray
    kappa: float
    #: sqrt(gamma * eta), strength of the measurement back-action.
    meas: float
    #: meas + 2*lam/sqrt(eta), combined back-action/feedback coefficient.
    feed: float

    def drift(self, states: np.ndarray) -> np.ndarray:
        """Deterministic velocity for states of shape (..., 3)."""
        return np.asarray(states) @ self.matrix.T + self.offset

    def noise(self, states: np.ndarray) -> np.ndarray:
        """Noise vector of the conditioned dynamics for states (..., 3).

        Components: (-m x^2 + f z + m, -m x y, -f x - m x z) with
        m = sqrt(gamma eta) and f = m + 2 lam / sqrt(eta).
        """
        s = np.asarray(states, dtype=float)
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        m, f = self.meas, self.feed
        return np.stack([-m * x * x + f * z + m, -m * x * y, -f * x - m * x * z],
                        axis=-1)


def drift_model(params: SystemParams) -> DriftModel:
    """Build the affine drift model and noise coefficients for `params`.

    Raises
    ------
    InvalidParamsError
        If eta = 0 with lam != 0 (the feedback rate diverges).
    """
    g, eta, a, lam = params.gamma, params.eta, params.alpha, params.lam
    k = kappa(params)  # raises for eta = 0 with lam != 0
    matrix = np.array([
        [-g / 2 - 2 * k, 0.0, 2 * a],
        [0.0, -g / 2, 0.0],
        [-2 * a, 0.0, -g - 2 * k],
    ])
    offset = np.array([0.0, 0.0, -(2 * lam * math.sqrt(g) + g)])
    meas = math.sqrt(g * eta)
    feed = meas + (2 * lam / math.sqrt(eta) if lam != 0.0 else 0.0)
    return DriftModel(matrix=matrix, offset=offset, kappa=k, meas=meas, feed=feed)


def driving_only_steady_state(gamma: float, alpha: float) -> BlochVector:
    """Stationary state of the undriven-feedback (lam = 0) master equation.

    Closed form (-4*alpha*gamma, 0, -gamma^2) / (gamma^2 + 8*alpha^2); the
    locus over alpha is the ellipse 2 x^2 + (2 z + 1)^2 = 1 in the lower
    half plane (z < 0).
    """
    if not gamma > 0.0:
        raise InvalidParamsError(f"gamma must be positive, got {gamma!r}")
    den = gamma * gamma + 8 * alpha * alpha
    return BlochVector(-4 * alpha * gamma / den, 0.0, -gamma * gamma / den)


def _denominator_terms(params: SystemParams) -> tuple[float, ...]:
    g, eta, a, lam = params.gamma, params.eta, params.alpha, params.lam
    rg = math.sqrt(g)
    return (
        g * g * eta * eta,
        6 * g * rg * eta * eta * lam,
        2 * g * eta * (3 + 4 * eta) * lam * lam,
        16 * rg * eta * lam ** 3,
        8 * (a * a * eta * eta + lam ** 4),
    )


def feedback_steady_state(params: SystemParams) -> BlochVector:
    """Stationary state of the feedback-modified master equation.

    Closed form with q = gamma*eta + 4*sqrt(gamma)*eta*lam + 4*lam^2 and
    denominator D = 2*eta^2*det of the x-z drift block:

        x_ss = -4*alpha*eta^2*(gamma + 2*sqrt(gamma)*lam) / D
        z_ss = -sqrt(gamma)*eta*(sqrt(gamma) + 2*lam)*q / D

    At lam = 0 this reduces exactly to `driving_only_steady_state`
    (eta cancels).

    Raises
    ------
    DegenerateSteadyStateError
        If D vanishes numerically (no unique stationary state; happens
        for the unit-efficiency equator design).
    InvalidParamsError
        If eta = 0 with lam != 0.
    """
    g, eta, a, lam = params.gamma, params.eta, params.alpha, params.lam
    if eta == 0.0:
        if lam != 0.0:
            raise InvalidParamsError("eta = 0 requires lam = 0; no steady state")
        return driving_only_steady_state(g, a)
    terms = _denominator_terms(params)
    den = sum(terms)
    scale = sum(abs(t) for t in terms)
    if abs(den) <= TOL_DENOMINATOR * scale:
        raise DegenerateSteadyStateError(
            f"stationary-state denominator vanishes (D = {den!r})")
    rg = math.sqrt(g)
    q = g * eta + 4 * rg * eta * lam + 4 * lam * lam
    x = -4 * a * eta * eta * (g + 2 * rg * lam) / den
    z = -rg * eta * (rg + 2 * lam) * q / den
    return BlochVector(x, 0.0, z)


@dataclass(frozen=True)
class StabilityReport:
    """Eigenvalues of the drift matrix and their stability classification."""

    eigenvalues: tuple[complex, complex, complex]
    classification: str

    @property
    def max_real_part(self) -> float:
        return max(ev.real for ev in self.eigenvalues)


def stability_eigenvalues(params: SystemParams,
                          tol_eig: float | None = None) -> StabilityReport:
    """Eigenvalues of the affine drift, via the closed-form 2x2 x-z block.

    The y component decouples with eigenvalue -gamma/2; the x-z block is
    solved with the quadratic formula (no general eigensolver).  For the
    unit-efficiency design at angle theta the spectrum is
    {-gamma/2, -gamma/2, -gamma*cos(theta)^2}.

    Classification uses ``tol_eig`` (default 1e-9*gamma): stable if all
    real parts are below -tol_eig, marginal if the largest real part
    lies within ±tol_eig, unstable otherwise.
    """
    if tol_eig is None:
        tol_eig = TOL_EIG_REL * params.gamma
    model = drift_model(params)
    m = model.matrix
    tr = m[0, 0] + m[2, 2]
    det = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    disc = complex(tr * tr - 4 * det) ** 0.5
    pair = (complex((tr + disc) / 2), complex((tr - disc) / 2))
    evs = tuple(sorted((complex(m[1, 1]),) + pair,
                       key=lambda v: (v.real, v.imag)))
    max_re = max(ev.real for ev in evs)
    if max_re < -tol_eig:
        cls = STABLE
    elif max_re <= tol_eig:
        cls = MARGINAL
    else:
        cls = UNSTABLE
    return StabilityReport(eigenvalues=evs, classification=cls)


def _expm_2x2(block: np.ndarray, times: np.ndarray) -> np.ndarray:
    """exp(block * t) for each t, closed form for a real 2x2 matrix.

    Splits block = m*I + B with B traceless, B^2 = s2*I, and uses
    exp = e^{m t} [cosh(d t) I + sinh(d t)/d B] with d = sqrt(s2)
    (trigonometric branch for s2 < 0, series near s2 = 0).
    """
    m = 0.5 * (block[0, 0] + block[1, 1])
    B = block - m * np.eye(2)
    s2 = B[0, 0] ** 2 + B[0, 1] * B[1, 0]
    t = np.asarray(times, dtype=float)
    if abs(s2) * np.max(t, initial=0.0) ** 2 < 1e-24:
        ch = 1.0 + 0.5 * s2 * t * t
        shc = t * (1.0 + s2 * t * t / 6.0)
    elif s2 > 0:
        d = math.sqrt(s2)
        ch = np.cosh(d * t)
        shc = np.sinh(d * t) / d
    else:
        w = math.sqrt(-s2)
        ch = np.cos(w * t)
        shc = np.sin(w * t) / w
    scale = np.exp(m * t)
    out = np.empty(t.shape + (2, 2))
    for i in range(2):
        for j in range(2):
            out[..., i, j] = scale * (ch * (i == j) + shc * B[i, j])
    return out


def deterministic_solution(params: SystemParams, b0: BlochVector,
                           times: np.ndarray) -> np.ndarray:
    """Exact solution b(t) of the affine mean dynamics at the given times.

    Uses the closed-form exponential of the 2x2 x-z block:
    b(t) = exp(M t) (b0 - b_ss) + b_ss when the block is invertible; in
    the degenerate (marginal) case the offset vanishes and the solution
    is the plain homogeneous exponential.  Returns an array of shape
    (len(times), 3).
    """
    model = drift_model(params)
    t = np.asarray(times, dtype=float)
    block = model.matrix[np.ix_([0, 2], [0, 2])]
    expms = _expm_2x2(block, t)
    u0 = np.array([b0.x, b0.z])
    c2 = model.offset[[0, 2]]
    det = block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0]
    scale = abs(block).sum() ** 2 + abs(c2).sum()
    if abs(det) > 1e-14 * max(scale, 1e-300):
        uss = np.linalg.solve(block, -c2)
        xz = np.einsum("tij,j->ti", expms, u0 - uss) + uss
    else:
        if np.max(np.abs(c2)) > 1e-12 * max(scale, 1e-300):
            raise DegenerateSteadyStateError(
                "drift block is singular with a non-zero offset")
        xz = np.einsum("tij,j->ti", expms, u0)
    out = np.empty(t.shape + (3,))
    out[..., 0] = xz[..., 0]
    out[..., 1] = b0.y * np.exp(-0.5 * params.gamma * t)
    out[..., 2] = xz[..., 1]
    return out
