"""Stochastic integration of the conditioned Bloch equations.

A single homodyne measurement record drives the conditioned state, so
the equations carry one Wiener process:

    db = (M b + u) dt + n(b) dW,

with the affine drift and the state-dependent noise vector from
:mod:`blochlock.steady_state`, and the photocurrent increment

    I dt = sqrt(gamma) * x * dt + dW / sqrt(eta)

built from the *same* dW that kicks the state.  The equations are Ito,
so ensemble averages obey the deterministic drift exactly.

Integration schemes
-------------------
``euler``     Euler-Maruyama, strong order 1/2.  Its pathwise purity
              error at unit efficiency scales like sqrt(dt) and wanders
              far off the Bloch sphere at practical step sizes.
``milstein``  Adds (1/2) Dn·n (dW^2 - dt); the purity-error coefficient
              of (dW^2 - dt) cancels identically on the sphere.
``taylor15``  Strong order 1.5 Ito-Taylor scheme (the default).  With a
              single Wiener process all iterated integrals reduce to
              (dW, dZ) pairs, and the affine drift / quadratic noise
              make every derivative term closed-form.  This holds the
              unit-efficiency purity error to O(dt) pathwise.

Reproducibility
---------------
Trajectory ``i`` of an ensemble (and ``simulate``, which is trajectory
0) draws from ``numpy.random.default_rng(SeedSequence([seed, i]))``, in
chunks of ``CHUNK`` steps: per chunk of m steps the generator yields a
(2, m) block of N(0, dt) draws, the first row being the measurement
increments dW and the second the auxiliary taylor15 draws dV (the
``euler``/``milstein`` schemes draw only the dW row).  Fixed seeds
therefore reproduce states and photocurrent bit-exactly, independent of
how many trajectories run alongside.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .bloch import GROUND_STATE, BlochVector
from .steady_state import (
    DriftModel,
    InvalidParamsError,
    SystemParams,
    deterministic_solution,
    drift_model,
)

#: Step-generation chunk; part of the reproducibility contract above.
CHUNK = 512

#: Default guard: dt above this multiple of 1/gamma warns.
MAX_DT_FACTOR = 1e-2

SCHEMES = ("euler", "milstein", "taylor15")


@dataclass(frozen=True)
class SimConfig:
    """Configuration of a stochastic run.

    ``dt`` and ``t_final`` are in units of time (1/gamma for gamma = 1);
    ``seed`` is the root of the per-trajectory substreams.
    """

    params: SystemParams
    dt: float = 1e-3
    t_final: float = 10.0
    seed: int = 0
    n_trajectories: int = 1
    initial_state: BlochVector = GROUND_STATE
    scheme: str = "taylor15"

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_final >= self.dt:
            raise ValueError("t_final must be at least one step")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; pick from {SCHEMES}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.dt_warning:
            warnings.warn(
                f"dt = {self.dt:.3g} exceeds {MAX_DT_FACTOR:g}/gamma; "
                "integration error may be large", stacklevel=2)

    @property
    def dt_warning(self) -> bool:
        return self.dt > MAX_DT_FACTOR / self.params.gamma

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator of trajectory `index`: default_rng(SeedSequence([seed, index]))."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def wiener_increments(seed, n_steps: int, dt: float) -> np.ndarray:
    """i.i.d. N(0, dt) Wiener increments, deterministic for a fixed seed.

    `seed` may be an integer, a SeedSequence, or an existing Generator
    (drawn from statefully).
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    gen = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return gen.normal(0.0, math.sqrt(dt), int(n_steps))


def _dn_dot(model: DriftModel, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Noise-Jacobian product Dn(s) @ v, rows of s and v paired."""
    m, f = model.meas, model.feed
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([
        -2.0 * m * x * vx + f * vz,
        -m * (y * vx + x * vy),
        -(f + m * z) * vx - m * x * vz,
    ], axis=-1)


def _advance(states: np.ndarray, model: DriftModel, dt: float,
             dW: np.ndarray, dV: np.ndarray | None, scheme: str) -> np.ndarray:
    """One integration step for all rows of `states`; dW has shape (n,)."""
    w = dW[..., None]
    a = model.drift(states)
    n = model.noise(states)
    out = states + a * dt + n * w
    if scheme == "euler":
        return out
    j = _dn_dot(model, states, n)
    out = out + 0.5 * j * (w * w - dt)
    if scheme == "milstein":
        return out
    # strong order 1.5 Ito-Taylor terms; dZ = int_0^dt W ds
    dz = 0.5 * dt * (w + dV[..., None] / math.sqrt(3.0))
    hnn = -2.0 * model.meas * n[..., 0:1] * n          # Hessian product H_n(n, n)
    l0n = _dn_dot(model, states, a) + 0.5 * hnn
    l1a = n @ model.matrix.T
    l1l1n = hnn + _dn_dot(model, states, j)
    l0a = a @ model.matrix.T
    return (out + l1a * dz + l0n * (w * dt - dz) + 0.5 * l0a * dt * dt
            + 0.5 * l1l1n * (w * w / 3.0 - dt) * w)


def sbe_step(b: BlochVector, params: SystemParams, dt: float, dW: float) -> BlochVector:
    """Single Euler-Maruyama update b + (M b + u) dt + n(b) dW."""
    model = drift_model(params)
    out = _advance(b.as_array()[None, :], model, dt, np.array([dW]), None, "euler")
    return BlochVector.from_array(out[0])


def photocurrent_increment(b: BlochVector, params: SystemParams,
                           dt: float, dW: float) -> float:
    """Homodyne record increment sqrt(gamma)*x*dt + dW/sqrt(eta).

    `dW` must be the same increment that advances the state at this step:
    measurement noise and state kick are perfectly correlated.
    """
    if not params.eta > 0.0:
        raise InvalidParamsError("photocurrent requires eta > 0")
    return math.sqrt(params.gamma) * b.x * dt + dW / math.sqrt(params.eta)


def _normals(gen: np.random.Generator, m: int, dt: float,
             scheme: str) -> tuple[np.ndarray, np.ndarray | None]:
    sq = math.sqrt(dt)
    if scheme == "taylor15":
        block = gen.normal(0.0, sq, size=(2, m))
        return block[0], block[1]
    return gen.normal(0.0, sq, size=m), None


@dataclass
class Trajectory:
    """A single conditioned path and its homodyne record."""

    times: np.ndarray
    states: np.ndarray
    photocurrent_increments: np.ndarray
    config: SimConfig
    metadata: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def r_squared(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.states, self.states)

    def final_state(self) -> BlochVector:
        return BlochVector.from_array(self.states[-1])


def simulate(cfg: SimConfig) -> Trajectory:
    """Integrate one conditioned trajectory (substream 0 of `cfg.seed`).

    Returns the full path on the step grid together with the simulated
    photocurrent increments.  Purity violations are not corrected; the
    worst |b|^2 along the path is reported in ``metadata`` so that
    integrator drift stays observable.
    """
    params = cfg.params
    if not params.eta > 0.0:
        raise InvalidParamsError(
            "conditioned trajectories require eta > 0; use "
            "deterministic_solution for the unconditioned dynamics")
    model = drift_model(params)
    n_steps = cfg.n_steps
    states = np.empty((n_steps + 1, 3))
    states[0] = cfg.initial_state.as_array()
    current = np.empty(n_steps)
    gen = substream(cfg.seed, 0)
    rg = math.sqrt(params.gamma)
    re = math.sqrt(params.eta)
    max_r2 = states[0] @ states[0]
    done = 0
    while done < n_steps:
        m = min(CHUNK, n_steps - done)
        dW, dV = _normals(gen, m, cfg.dt, cfg.scheme)
        for k in range(m):
            b = states[done + k]
            current[done + k] = rg * b[0] * cfg.dt + dW[k] / re
            nxt = _advance(b[None, :], model, cfg.dt, dW[k:k + 1],
                           None if dV is None else dV[k:k + 1], cfg.scheme)[0]
            states[done + k + 1] = nxt
            r2 = nxt @ nxt
            if r2 > max_r2:
                max_r2 = r2
        done += m
    times = np.arange(n_steps + 1) * cfg.dt
    meta = {"scheme": cfg.scheme, "seed": cfg.seed, "substream": 0,
            "max_r_squared": float(max_r2), "dt_warning": cfg.dt_warning}
    return Trajectory(times=times, states=states,
                      photocurrent_increments=current, config=cfg, metadata=meta)


def _sample_steps(cfg: SimConfig, sample_times) -> np.ndarray:
    if sample_times is None:
        k = min(cfg.n_steps, 100)
        steps = np.unique(np.round(np.linspace(0, cfg.n_steps, k + 1)).astype(int))
    else:
        steps = np.unique(np.round(np.asarray(sample_times, float) / cfg.dt).astype(int))
        if steps.min() < 0 or steps.max() > cfg.n_steps:
            raise ValueError("sample times outside the run window")
    return steps


@dataclass
class EnsembleStats:
    """Per-time ensemble statistics and the matching noise-free solution."""

    times: np.ndarray
    mean_bloch: np.ndarray
    stderr_bloch: np.ndarray
    mean_r_squared: np.ndarray
    deterministic: np.ndarray
    n_trajectories: int
    metadata: dict = field(default_factory=dict)


class _EnsembleRunner:
    """Shared chunked driver: advances all trajectories, fires callbacks
    at sample steps."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.model = drift_model(cfg.params)
        if not cfg.params.eta > 0.0:
            raise InvalidParamsError("conditioned trajectories require eta > 0")
        self.gens = [substream(cfg.seed, i) for i in range(cfg.n_trajectories)]
        self.states = np.tile(cfg.initial_state.as_array(),
                              (cfg.n_trajectories, 1))

    def run(self, sample_steps: np.ndarray, on_sample, on_step=None) -> None:
        cfg = self.cfg
        sample_set = set(int(s) for s in sample_steps)
        if 0 in sample_set:
            on_sample(0, self.states)
        n_steps = cfg.n_steps
        done = 0
        n = cfg.n_trajectories
        while done < n_steps:
            m = min(CHUNK, n_steps - done)
            dWs = np.empty((n, m))
            dVs = np.empty((n, m)) if cfg.scheme == "taylor15" else None
            for i, gen in enumerate(self.gens):
                w, v = _normals(gen, m, cfg.dt, cfg.scheme)
                dWs[i] = w
                if dVs is not None:
                    dVs[i] = v
            for k in range(m):
                self.states = _advance(self.states, self.model, cfg.dt, dWs[:, k],
                                       None if dVs is None else dVs[:, k],
                                       cfg.scheme)
                if on_step is not None:
                    on_step(done + k + 1, self.states)
                if done + k + 1 in sample_set:
                    on_sample(done + k + 1, self.states)
            done += m


def ensemble(cfg: SimConfig, sample_times=None) -> EnsembleStats:
    """Ensemble means with standard errors on a sample-time grid.

    Also returns the exact affine-exponential (noise-free) solution at
    the same times as the comparison reference: the equations are Ito,
    so the ensemble mean must track it within statistics.  With a single
    trajectory the standard errors are NaN and flagged in metadata.
    """
    steps = _sample_steps(cfg, sample_times)
    n = cfg.n_trajectories
    means = np.empty((len(steps), 3))
    stderrs = np.full((len(steps), 3), np.nan)
    mean_r2 = np.empty(len(steps))
    index = {int(s): i for i, s in enumerate(steps)}

    def on_sample(step: int, states: np.ndarray) -> None:
        i = index[step]
        means[i] = states.mean(axis=0)
        if n > 1:
            stderrs[i] = states.std(axis=0, ddof=1) / math.sqrt(n)
        mean_r2[i] = float(np.mean(np.einsum("ij,ij->i", states, states)))

    _EnsembleRunner(cfg).run(steps, on_sample)
    times = steps * cfg.dt
    det = deterministic_solution(cfg.params, cfg.initial_state, times)
    meta = {"scheme": cfg.scheme, "seed": cfg.seed,
            "stderr_defined": n > 1, "dt_warning": cfg.dt_warning}
    return EnsembleStats(times=times, mean_bloch=means, stderr_bloch=stderrs,
                         mean_r_squared=mean_r2, deterministic=det,
                         n_trajectories=n, metadata=meta)


@dataclass
class EquatorReport:
    """Statistics of the marginal (equator-design) dynamics.

    Endpoint classification: a trajectory is "at ±1" when |x -+ 1| stays
    below ``band`` for the trailing ``dwell_time``; the noise vanishes
    quadratically at the endpoints, so arrival is asymptotic and the
    sustained-proximity rule is the practical test.
    """

    times: np.ndarray
    mean_x: np.ndarray
    stderr_x: np.ndarray
    mean_x_squared: np.ndarray
    stderr_x_squared: np.ndarray
    fraction_plus: float
    fraction_minus: float
    fraction_undecided: float
    n_trajectories: int
    band: float
    dwell_time: float


def equator_diagnostic(cfg: SimConfig, sample_times=None, band: float = 1e-3,
                       dwell_time: float = 1.0) -> EquatorReport:
    """Track E[x], E[x^2] and endpoint fractions for equator-design runs.

    Intended for parameters where the x dynamics is purely stochastic
    (gain -sqrt(gamma)/2, no drive): E[x] is then a martingale and E[x^2]
    grows until the trajectories pile up at x = ±1.
    """
    steps = _sample_steps(cfg, sample_times)
    n = cfg.n_trajectories
    mean_x = np.empty(len(steps))
    se_x = np.full(len(steps), np.nan)
    mean_x2 = np.empty(len(steps))
    se_x2 = np.full(len(steps), np.nan)
    index = {int(s): i for i, s in enumerate(steps)}
    dwell_steps = max(1, int(round(dwell_time / cfg.dt)))
    streak_p = np.zeros(n, dtype=np.int64)
    streak_m = np.zeros(n, dtype=np.int64)

    def on_sample(step: int, states: np.ndarray) -> None:
        i = index[step]
        x = states[:, 0]
        mean_x[i] = x.mean()
        mean_x2[i] = np.mean(x * x)
        if n > 1:
            se_x[i] = x.std(ddof=1) / math.sqrt(n)
            se_x2[i] = (x * x).std(ddof=1) / math.sqrt(n)

    def on_step(step: int, states: np.ndarray) -> None:
        x = states[:, 0]
        near_p = np.abs(x - 1.0) < band
        near_m = np.abs(x + 1.0) < band
        np.add(streak_p, 1, out=streak_p, where=near_p)
        streak_p[~near_p] = 0
        np.add(streak_m, 1, out=streak_m, where=near_m)
        streak_m[~near_m] = 0

    if cfg.n_steps < dwell_steps:
        raise ValueError("t_final too short to sustain the dwell window")
    _EnsembleRunner(cfg).run(steps, on_sample, on_step=on_step)
    frac_p = float(np.mean(streak_p >= dwell_steps))
    frac_m = float(np.mean(streak_m >= dwell_steps))
    return EquatorReport(times=steps * cfg.dt, mean_x=mean_x, stderr_x=se_x,
                         mean_x_squared=mean_x2, stderr_x_squared=se_x2,
                         fraction_plus=frac_p, fraction_minus=frac_m,
                         fraction_undecided=max(0.0, 1.0 - frac_p - frac_m),
                         n_trajectories=n, band=band, dwell_time=dwell_time)


@dataclass
class TimeAverage:
    """Batch-means time average of a trajectory window."""

    mean_bloch: np.ndarray
    stderr_bloch: np.ndarray
    r_squared_variance: float
    n_batches: int
    window: tuple[float, float]


def time_average(traj: Trajectory, t_min: float, t_max: float | None = None,
                 n_batches: int = 25) -> TimeAverage:
    """Stationary time average over [t_min, t_max] with batch-means errors.

    The standard error comes from splitting the window into `n_batches`
    equal batches and treating batch means as independent; batches much
    longer than the relaxation time make this a serviceable
    autocorrelation-adjusted error bar.
    """
    if t_max is None:
        t_max = float(traj.times[-1])
    sel = (traj.times >= t_min) & (traj.times <= t_max)
    if sel.sum() < 2 * n_batches:
        raise ValueError("window too short for the requested batch count")
    window = traj.states[sel]
    usable = (len(window) // n_batches) * n_batches
    batches = window[:usable].reshape(n_batches, -1, 3).mean(axis=1)
    mean = batches.mean(axis=0)
    stderr = batches.std(axis=0, ddof=1) / math.sqrt(n_batches)
    r2 = np.einsum("ij,ij->i", window, window)
    return TimeAverage(mean_bloch=mean, stderr_bloch=stderr,
                       r_squared_variance=float(r2.var()),
                       n_batches=n_batches, window=(t_min, t_max))
