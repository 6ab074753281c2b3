"""Pathwise simulation of the transport-noise equation.

The Ito form advanced here is

    du = -F[u] dt - sum_k (K u)_k dB_k + (1/2) K K u dt,

with F either zero or a divergence-form linear drift, and the
Stratonovich form (same noise read in the Stratonovich sense, no
second-order correction) is advanced with a Heun predictor-corrector.
All update terms are total divergences, so both steppers conserve the
spatial mean exactly up to rounding.

Randomness: Brownian increments come from the Philox counter-based
generator.  The stream layout is key = (seed, path_index); within a
path the increments form a (steps, m) array whose [n, k] entry drives
component k over step n.  Identical seeds reproduce trajectories bit
for bit, and pre-sampled increments let Ito and Stratonovich runs
consume the same path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CflError, GridMismatchError
from .fields import GridSpec, ScalarField, SigmaField, lq_norm, derivative
from .operators import apply_K_scalar, ito_correction

__all__ = [
    "BrownianDriver",
    "DriftSpec",
    "SpdeState",
    "MonteCarloEstimate",
    "sample_increments",
    "cfl_dt",
    "step_ito",
    "step_strat_heun",
    "run_path",
    "estimate_apriori",
]


@dataclass(frozen=True)
class BrownianDriver:
    """Pre-sampled equal-step increments of m independent Brownian motions."""

    m: int
    dt: float
    steps: int
    seed: int
    path: int
    increments: np.ndarray = field(repr=False)

    def coarsened(self, factor: int) -> "BrownianDriver":
        """Aggregate consecutive increments, refining the same path.

        Groups of `factor` fine increments are summed, producing the
        identical Brownian path sampled with a step factor times larger.
        """
        if factor < 1 or self.steps % factor:
            raise ValueError(f"steps={self.steps} not divisible by factor={factor}")
        inc = self.increments.reshape(self.steps // factor, factor, self.m).sum(axis=1)
        return BrownianDriver(
            m=self.m,
            dt=self.dt * factor,
            steps=self.steps // factor,
            seed=self.seed,
            path=self.path,
            increments=inc,
        )


def sample_increments(m: int, steps: int, dt: float, seed: int, path: int = 0) -> BrownianDriver:
    """Draw a (steps, m) array of Normal(0, dt) increments."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if m < 1 or steps < 1:
        raise ValueError("m and steps must be >= 1")
    rng = np.random.Generator(
        np.random.Philox(key=np.array([seed, path], dtype=np.uint64))
    )
    inc = rng.normal(0.0, math.sqrt(dt), size=(steps, m))
    return BrownianDriver(m=m, dt=dt, steps=steps, seed=seed, path=path, increments=inc)


@dataclass(frozen=True)
class DriftSpec:
    """Deterministic drift: zero, or F[u] = sum_i d_i(b_i u)."""

    kind: str = "zero"
    b: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "linear-divergence"):
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind == "linear-divergence" and not self.b:
            raise ValueError("linear-divergence drift needs the vector b")

    def apply(self, u: ScalarField) -> ScalarField:
        if self.kind == "zero":
            return ScalarField(u.grid, np.zeros(u.grid.shape))
        acc = np.zeros(u.grid.shape)
        for i, bi in enumerate(self.b):
            if bi.grid != u.grid:
                raise GridMismatchError("drift coefficient grid differs from state grid")
            acc += derivative(bi * u, i).values
        return ScalarField(u.grid, acc)


@dataclass(frozen=True)
class SpdeState:
    t: float
    u: ScalarField
    sigma: SigmaField
    drift: DriftSpec = DriftSpec()

    def __post_init__(self):
        if self.u.grid != self.sigma.grid:
            raise GridMismatchError("state and sigma grids differ")


def cfl_dt(sigma: SigmaField, grid: GridSpec) -> float:
    """Stability bound 0.1 h^2 / max(1, max_x sum sigma_{ik}^2).

    The second-order correction acts like a diffusion with local
    coefficient sum sigma^2 / 2, hence the parabolic h^2 scaling.
    """
    peak = float(sigma.squared_magnitude().max())
    return 0.1 * grid.h ** 2 / max(1.0, peak)


def _check_dt(state: SpdeState, dt: float) -> None:
    bound = cfl_dt(state.sigma, state.u.grid)
    if dt > bound * (1.0 + 1e-9):
        raise CflError(f"dt={dt} exceeds stability bound {bound}")


def _noise_sum(sigma: SigmaField, u: ScalarField, dW: np.ndarray) -> np.ndarray:
    ku = apply_K_scalar(sigma, u)
    acc = np.zeros(u.grid.shape)
    for k in range(ku.m):
        acc += dW[k] * ku[k].values
    return acc


def step_ito(state: SpdeState, dW, dt: float) -> SpdeState:
    """Explicit Euler-Maruyama step of the Ito form."""
    _check_dt(state, dt)
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.shape != (state.sigma.m,):
        raise ValueError(f"dW must have shape ({state.sigma.m},), got {dW.shape}")
    u = state.u
    rhs = -state.drift.apply(u).values + ito_correction(state.sigma, u).values
    new = u.values + dt * rhs - _noise_sum(state.sigma, u, dW)
    return replace(state, t=state.t + dt, u=ScalarField(u.grid, new))


def step_strat_heun(state: SpdeState, dW, dt: float) -> SpdeState:
    """Heun predictor-corrector step of the Stratonovich form."""
    _check_dt(state, dt)
    dW = np.atleast_1d(np.asarray(dW, dtype=float))
    if dW.shape != (state.sigma.m,):
        raise ValueError(f"dW must have shape ({state.sigma.m},), got {dW.shape}")
    u = state.u
    drift0 = -state.drift.apply(u).values
    noise0 = -_noise_sum(state.sigma, u, dW)
    pred = ScalarField(u.grid, u.values + dt * drift0 + noise0)
    drift1 = -state.drift.apply(pred).values
    noise1 = -_noise_sum(state.sigma, pred, dW)
    new = u.values + 0.5 * dt * (drift0 + drift1) + 0.5 * (noise0 + noise1)
    return replace(state, t=state.t + dt, u=ScalarField(u.grid, new))


_STEPPERS = {"ito": step_ito, "stratonovich-heun": step_strat_heun}


def run_path(state: SpdeState, driver: BrownianDriver, scheme: str = "ito",
             snapshot_stride: int = 0):
    """Advance a full path; returns (final_state, snapshots).

    Snapshots are (t, state) pairs taken every `snapshot_stride` steps
    (0 disables them); the initial and final states are always included.
    """
    try:
        stepper = _STEPPERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}") from None
    snaps = [(state.t, state)]
    for n in range(driver.steps):
        state = stepper(state, driver.increments[n], driver.dt)
        if snapshot_stride and (n + 1) % snapshot_stride == 0 and n + 1 < driver.steps:
            snaps.append((state.t, state))
    snaps.append((state.t, state))
    return state, snaps


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    paths: int


def estimate_apriori(sigma: SigmaField, u0: ScalarField, drift: DriftSpec,
                     p: float, horizon: float, paths: int, steps: int,
                     seed: int, scheme: str = "ito") -> MonteCarloEstimate:
    """Monte Carlo estimate of the space-time L^p mass over [0, horizon].

    Each path integrates ||u(t)||_p^p with the left-endpoint rule at
    step horizon/steps, so a static solution gives exactly
    horizon * ||u0||_p^p.  Paths are independent Philox streams derived
    from (seed, path).
    """
    if paths < 2:
        raise ValueError("at least two paths are required")
    dt = horizon / steps
    per_path = []
    for path in range(paths):
        driver = sample_increments(sigma.m, steps, dt, seed, path)
        state = SpdeState(t=0.0, u=u0, sigma=sigma, drift=drift)
        stepper = _STEPPERS[scheme]
        norms = []
        for n in range(steps):
            norms.append(lq_norm(state.u, p) ** p)
            state = stepper(state, driver.increments[n], dt)
        per_path.append(dt * math.fsum(norms))
    value = math.fsum(per_path) / paths
    var = math.fsum((x - value) ** 2 for x in per_path) / (paths - 1)
    return MonteCarloEstimate(value=value, stderr=math.sqrt(var / paths), paths=paths)
