"""Feedback and driving design: closed forms at unit detector efficiency,
1-D numerical optimization of steady-state purity (or conditioning-noise
power) below it.

For perfect detection (eta = 1) the gain/drive pair

    lam(theta) = -(sqrt(gamma)/2) (1 + cos theta)
    alpha(theta) = (gamma/4) sin theta cos theta

makes the pure state at Bloch angle theta an exact fixed point of both
the deterministic and the conditioned dynamics.  For eta < 1 no pure
state survives; instead, for a requested direction theta the drive is
slaved to the gain by the direction constraint x_ss/z_ss = tan(theta),

    alpha(lam, theta) = (gamma + 4 sqrt(gamma) lam + 4 lam^2/eta) tan(theta)/4,

and the gain is chosen by maximizing the stationary purity r^2 (or by
minimizing the noise power of the conditioned equations at the
stationary point; the two choices agree closely).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bloch import BlochVector
from .steady_state import (
    DegenerateSteadyStateError,
    InvalidParamsError,
    SystemParams,
    drift_model,
    feedback_steady_state,
)

#: Angles closer than this to ±pi/2 are treated as exact equator requests.
EQUATOR_TOL = 1e-12

#: Relative tolerance on |sqrt(gamma) + 2*lam| below which the direction
#: constraint cannot be solved for the drive.
GAIN_SINGULAR_TOL = 1e-12

#: Achieved steady-state direction must match theta this closely (radians).
DIRECTION_TOL = 1e-6

#: Objective labels.
PURITY = "purity"
NOISE = "noise"


class EquatorSingularityError(ValueError):
    """Requested direction on the equator, где the drive diverges."""


class GainSingularityError(ValueError):
    """Gain lam = -sqrt(gamma)/2 pins the steady state at the origin."""


@dataclass(frozen=True)
class SearchConfig:
    """Settings of the grid + golden-section gain search."""

    n_grid: int = 512
    #: Fractional probe beyond each end of the nominal [-sqrt(gamma), 0] window.
    margin: float = 0.2
    #: Golden-section width target, in units of sqrt(gamma).
    tol_rel: float = 1e-8
    #: Replacement offset (radians) for exact equator requests.
    equator_offset: float = 1e-3
    #: Two gains tie when their objectives differ by less than this;
    #: the smaller |lam| wins.
    tie_tol: float = 1e-12


@dataclass(frozen=True)
class FeedbackDesign:
    """A designed (gain, drive) pair and the stationary state it achieves."""

    theta: float
    gamma: float
    eta: float
    lam: float
    alpha: float
    steady_state: BlochVector
    r_squared: float
    objective: str
    flags: tuple[str, ...] = ()

    def params(self) -> SystemParams:
        return SystemParams(gamma=self.gamma, eta=self.eta,
                            alpha=self.alpha, lam=self.lam)


def ideal_gain(theta: float, gamma: float) -> float:
    """Feedback gain stabilizing angle theta at unit detector efficiency.

    Even in theta, ranging from -sqrt(gamma) at theta = 0 to 0 at |theta| = pi.
    """
    if not gamma > 0.0:
        raise InvalidParamsError(f"gamma must be positive, got {gamma!r}")
    return -0.5 * math.sqrt(gamma) * (1.0 + math.cos(theta))


def ideal_drive(theta: float, gamma: float) -> float:
    """Driving amplitude stabilizing angle theta at unit detector efficiency.

    Odd in theta, vanishing at theta in {0, ±pi/2, ±pi}.
    """
    if not gamma > 0.0:
        raise InvalidParamsError(f"gamma must be positive, got {gamma!r}")
    return 0.25 * gamma * math.sin(theta) * math.cos(theta)


def constrained_drive(lam: float, theta: float, gamma: float, eta: float) -> float:
    """Drive that points the stationary state along theta for a given gain.

    Solves x_ss/z_ss = tan(theta):
    alpha = (gamma + 4 sqrt(gamma) lam + 4 lam^2/eta) tan(theta) / 4.
    The lam = 0 value gamma*tan(theta)/4 holds for every eta including 0.

    Raises
    ------
    EquatorSingularityError
        For theta = ±pi/2 (the drive diverges).
    GainSingularityError
        For lam = -sqrt(gamma)/2 (stationary state pinned at the origin,
        so no drive can satisfy the constraint).
    """
    if not gamma > 0.0:
        raise InvalidParamsError(f"gamma must be positive, got {gamma!r}")
    if abs(math.cos(theta)) < EQUATOR_TOL:
        raise EquatorSingularityError(
            f"direction theta = {theta!r} lies on the equator; drive diverges")
    rg = math.sqrt(gamma)
    if abs(rg + 2 * lam) < GAIN_SINGULAR_TOL * rg:
        raise GainSingularityError(
            "gain -sqrt(gamma)/2 pins the steady state at the origin")
    if lam == 0.0:
        return 0.25 * gamma * math.tan(theta)
    if eta <= 0.0:
        raise InvalidParamsError("eta = 0 requires lam = 0")
    return 0.25 * (gamma + 4 * rg * lam + 4 * lam * lam / eta) * math.tan(theta)


def noise_power(lam: float, theta: float, gamma: float, eta: float) -> float:
    """Squared norm of the conditioning noise vector at the stationary state.

    The drive is slaved to (lam, theta) by `constrained_drive`.  Zero
    exactly at the unit-efficiency design; strictly positive at eta < 1.
    """
    alpha = constrained_drive(lam, theta, gamma, eta)
    params = SystemParams(gamma=gamma, eta=eta, alpha=alpha, lam=lam)
    b = feedback_steady_state(params)
    n = drift_model(params).noise(b.as_array())
    return float(n @ n)


def _wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _candidate_table(lams: np.ndarray, theta: float, gamma: float, eta: float,
                     objective: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized objective over a gain grid.

    Returns (value, x_ss, z_ss); invalid gains (direction unreachable or
    singular) get value = -inf.  `value` is r^2 for the purity objective
    and -noise power for the noise objective.
    """
    rg = math.sqrt(gamma)
    lam = np.asarray(lams, dtype=float)
    tan_t = math.tan(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = 0.25 * (gamma + 4 * rg * lam + 4 * lam * lam / eta) * tan_t
        q = gamma * eta + 4 * rg * eta * lam + 4 * lam * lam
        den = (gamma ** 2 * eta ** 2 + 6 * gamma * rg * eta ** 2 * lam
               + 2 * gamma * eta * (3 + 4 * eta) * lam ** 2
               + 16 * rg * eta * lam ** 3 + 8 * (alpha ** 2 * eta ** 2 + lam ** 4))
        x = -4 * alpha * eta ** 2 * (gamma + 2 * rg * lam) / den
        z = -rg * eta * (rg + 2 * lam) * q / den
        direction_ok = np.abs(_wrap_angle(np.arctan2(x, z) - theta)) < DIRECTION_TOL
        ok = (np.abs(rg + 2 * lam) > GAIN_SINGULAR_TOL * rg) \
            & (np.abs(den) > 1e-300) & np.isfinite(x) & np.isfinite(z) & direction_ok
        if objective == PURITY:
            value = x * x + z * z
        else:
            m = math.sqrt(gamma * eta)
            f = m + 2 * lam / math.sqrt(eta)
            nx = -m * x * x + f * z + m
            nz = -f * x - m * x * z
            value = -(nx * nx + nz * nz)
    value = np.where(ok, value, -np.inf)
    return value, x, z


def _golden_max(fn, lo: float, hi: float, tol: float) -> float:
    """Golden-section maximization of fn on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = fn(x1), fn(x2)
    while b - a > tol:
        if f1 > f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = fn(x2)
    return 0.5 * (a + b)


def _optimize(theta: float, gamma: float, eta: float, objective: str,
              search: SearchConfig) -> FeedbackDesign:
    if eta == 0.0:
        raise InvalidParamsError(
            "eta = 0 carries no measurement information; request lam = 0 "
            "designs via the driving-only solution")
    flags: list[str] = []
    if abs(abs(_wrap_angle(theta)) - math.pi / 2) < EQUATOR_TOL:
        theta = math.copysign(math.pi / 2 - search.equator_offset, theta)
        flags.append("equator-offset")

    rg = math.sqrt(gamma)
    step = rg / (search.n_grid - 1)
    n_margin = max(2, int(round(search.margin * rg / step)))
    grid = np.concatenate([
        np.linspace(-rg - n_margin * step, -rg, n_margin, endpoint=False),
        np.linspace(-rg, 0.0, search.n_grid),
        np.linspace(step, n_margin * step, n_margin),
    ])
    values, _, _ = _candidate_table(grid, theta, gamma, eta, objective)
    if not np.any(np.isfinite(values)):
        raise DegenerateSteadyStateError(
            f"no gain in the search window reaches direction theta = {theta!r}")

    def fn(lam: float) -> float:
        v, _, _ = _candidate_table(np.array([lam]), theta, gamma, eta, objective)
        return float(v[0])

    i = int(np.argmax(values))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    refined = _golden_max(fn, lo, hi, search.tol_rel * rg)

    # Tie-break: among near-optimal candidates prefer the weakest feedback.
    cand = np.append(grid, refined)
    cand_vals = np.append(values, fn(refined))
    best = float(np.max(cand_vals))
    near = cand[cand_vals >= best - search.tie_tol]
    lam = float(near[np.argmin(np.abs(near))])

    if not -rg - 1e-12 <= lam <= 1e-12:
        flags.append("gain-outside-nominal")
        warnings.warn(
            f"optimal gain {lam:.6g} lies outside the nominal window "
            f"[-sqrt(gamma), 0]", stacklevel=3)

    alpha = constrained_drive(lam, theta, gamma, eta)
    b = feedback_steady_state(SystemParams(gamma=gamma, eta=eta,
                                           alpha=alpha, lam=lam))
    if abs(_wrap_angle(math.atan2(b.x, b.z) - theta)) > DIRECTION_TOL:
        raise DegenerateSteadyStateError(
            f"optimized design misses direction theta = {theta!r}")
    return FeedbackDesign(theta=theta, gamma=gamma, eta=eta, lam=lam,
                          alpha=alpha, steady_state=b, r_squared=b.r_squared,
                          objective=objective, flags=tuple(flags))


def optimize_purity(theta: float, gamma: float, eta: float,
                    search: SearchConfig | None = None) -> FeedbackDesign:
    """Gain/drive pair maximizing stationary purity along direction theta.

    The gain search runs on a 512-point grid over [-sqrt(gamma), 0]
    (with a 20% probe margin past each end) followed by golden-section
    refinement; the grid stage guards against the purity landscape's
    discontinuity across the equator.  At eta = 1 the result reproduces
    `ideal_gain`/`ideal_drive` and r^2 = 1.  Exact equator requests are
    shifted by `search.equator_offset` into the matching hemisphere and
    flagged "equator-offset" (the supremum there is not attained).
    """
    return _optimize(theta, gamma, eta, PURITY, search or SearchConfig())


def optimize_noise(theta: float, gamma: float, eta: float,
                   search: SearchConfig | None = None) -> FeedbackDesign:
    """Gain/drive pair minimizing the stationary conditioning-noise power.

    Same search strategy and equator handling as `optimize_purity`.  The
    gain found this way is empirically very close to the purity-optimal
    one; report |lam_noise - lam_purity| rather than assuming equality.
    """
    return _optimize(theta, gamma, eta, NOISE, search or SearchConfig())


@dataclass(frozen=True)
class LocusRow:
    theta: float
    lam: float
    alpha: float
    x: float
    z: float
    r_squared: float
    error: str = ""


@dataclass(frozen=True)
class LocusTable:
    """Optimal-design locus over a theta grid at fixed detector efficiency."""

    eta: float
    gamma: float
    objective: str
    rows: list[LocusRow] = field(default_factory=list)


def build_locus(eta: float, gamma: float, thetas, objective: str = PURITY,
                search: SearchConfig | None = None) -> LocusTable:
    """Tabulate optimal designs over a strictly increasing theta grid.

    eta = 0 forces lam = 0 (feedback carries no information) and
    reproduces the driving-only ellipse; its rows with |theta| < pi/2
    are unreachable and recorded with an error.  Failures of individual
    rows (equator singularities, unreachable directions) are recorded in
    the row's ``error`` field rather than aborting the table.
    """
    thetas = np.asarray(thetas, dtype=float)
    if np.any(np.diff(thetas) <= 0):
        raise ValueError("theta grid must be strictly increasing")
    search = search or SearchConfig()
    rows: list[LocusRow] = []
    for theta in thetas:
        try:
            if eta == 0.0:
                rows.append(_driving_only_row(float(theta), gamma))
            else:
                d = _optimize(float(theta), gamma, eta, objective, search)
                rows.append(LocusRow(theta=d.theta, lam=d.lam, alpha=d.alpha,
                                     x=d.steady_state.x, z=d.steady_state.z,
                                     r_squared=d.r_squared,
                                     error=";".join(d.flags)))
        except (ValueError, ArithmeticError) as exc:
            rows.append(LocusRow(theta=float(theta), lam=math.nan,
                                 alpha=math.nan, x=math.nan, z=math.nan,
                                 r_squared=math.nan,
                                 error=type(exc).__name__))
    return LocusTable(eta=eta, gamma=gamma, objective=objective, rows=rows)


def _driving_only_row(theta: float, gamma: float) -> LocusRow:
    from .steady_state import driving_only_steady_state

    alpha = constrained_drive(0.0, theta, gamma, 0.0)
    b = driving_only_steady_state(gamma, alpha)
    if abs(_wrap_angle(math.atan2(b.x, b.z) - theta)) > DIRECTION_TOL:
        return LocusRow(theta=theta, lam=0.0, alpha=alpha, x=math.nan,
                        z=math.nan, r_squared=math.nan,
                        error="direction-unreachable")
    return LocusRow(theta=theta, lam=0.0, alpha=alpha, x=b.x, z=b.z,
                    r_squared=b.r_squared)
