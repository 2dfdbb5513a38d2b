"""Reference selectors run under the same routing and loss gating.

Both baselines explore at a constant rate (the schedule's deployment
rate), flip the same kind of coin, and see losses through the same gate
as the betting engine. They differ only in how they turn observed losses
into a deployed threshold: one trusts uncorrected means, the other pays
for a per-step union bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RouterConfig, StreamObservation, ThresholdGrid, deployment_rate
from .engine import Decision, LossGate, Route, propensity


@dataclass
class NaiveState:
    """Per-grid sums of observed losses, no propensity correction."""

    config: RouterConfig
    rho: float
    sums: np.ndarray
    rng: np.random.Generator
    t: int = 0
    deployed_index: int = 0

    @classmethod
    def fresh(cls, config: RouterConfig, *, rng=None) -> "NaiveState":
        if rng is None:
            rng = config.seed
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        return cls(config=config, rho=deployment_rate(config.schedule),
                   sums=np.zeros(config.grid.n), rng=rng)

    @property
    def deployed_threshold(self) -> float:
        return float(self.config.grid.values[self.deployed_index])


def naive_select(sums: np.ndarray, t: int, epsilon: float,
                 grid: ThresholdGrid) -> float:
    """Largest threshold whose raw mean observed loss fits the budget.

    Greedy and uncorrected: unobserved losses count as zero, so once a
    threshold deploys, the region below it starves and the means decay.
    """
    if t < 1:
        raise ValueError("selection needs at least one settled step")
    hits = np.flatnonzero(sums / t <= epsilon)
    return float(grid.values[hits[-1]]) if hits.size else float(grid.values[0])


@dataclass
class HoeffState:
    """Per-grid propensity-corrected loss sums plus a concentration bar."""

    config: RouterConfig
    rho: float
    sums: np.ndarray
    rng: np.random.Generator
    t: int = 0
    deployed_index: int = 0
    variant: str = "per_point"  # or "union_over_grid"

    @classmethod
    def fresh(cls, config: RouterConfig, *, rng=None,
              variant: str = "per_point") -> "HoeffState":
        if variant not in ("per_point", "union_over_grid"):
            raise ValueError(f"unknown confidence variant {variant!r}")
        if rng is None:
            rng = config.seed
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        return cls(config=config, rho=deployment_rate(config.schedule),
                   sums=np.zeros(config.grid.n), rng=rng, variant=variant)

    @property
    def deployed_threshold(self) -> float:
        return float(self.config.grid.values[self.deployed_index])


def hoeff_slack(t: int, alpha: float, rho: float, count: int) -> float:
    """Concentration slack after t steps, alpha spent as 6a/(pi^2 t^2).

    The worst importance weight (1 - rho) / rho scales the width; count
    is how many simultaneous thresholds the bar pays for.
    """
    alpha_t = 6.0 * alpha / (math.pi ** 2 * t ** 2)
    weight_bound = (1.0 - rho) / rho
    return weight_bound * math.sqrt(math.log(count / alpha_t) / (2.0 * t))


def hoeff_select(sums: np.ndarray, t: int, epsilon: float, alpha: float,
                 grid: ThresholdGrid, rho: float,
                 variant: str = "per_point") -> float:
    """Largest threshold whose mean plus concentration slack fits the budget.

    The slack's importance-weight factor is what makes this baseline so
    conservative at small exploration rates. The per-point variant prices
    one threshold per step; union_over_grid additionally multiplies the
    bar by the grid size.
    """
    if t < 1:
        raise ValueError("selection needs at least one settled step")
    if variant not in ("per_point", "union_over_grid"):
        raise ValueError(f"unknown confidence variant {variant!r}")
    count = grid.n if variant == "union_over_grid" else 1
    slack = hoeff_slack(t, alpha, rho, count)
    hits = np.flatnonzero(sums / t + slack <= epsilon)
    return float(grid.values[hits[-1]]) if hits.size else float(grid.values[0])


def naive_step(state: NaiveState, obs: StreamObservation,
               gate: LossGate) -> tuple[Decision, NaiveState]:
    """One query under the uncorrected-mean selector."""
    t = state.t + 1
    cfg = state.config
    threshold_used = state.deployed_threshold
    pi = propensity(obs.uncertainty, threshold_used, state.rho)
    coin = 1 if state.rng.random() < pi else 0
    observed = gate.observe(obs, coin) if coin == 1 else None
    if coin == 1 and observed:
        state.sums[cfg.grid.values > obs.uncertainty] += observed
    state.t = t
    state.deployed_index = cfg.grid.floor_index(
        naive_select(state.sums, t, cfg.epsilon, cfg.grid))
    return Decision(propensity=pi, coin=coin,
                    route=Route.EXPENSIVE if coin == 1 else Route.CHEAP,
                    observed_loss=observed, threshold_used=threshold_used), state


def hoeff_step(state: HoeffState, obs: StreamObservation,
               gate: LossGate) -> tuple[Decision, HoeffState]:
    """One query under the concentration-bound selector."""
    t = state.t + 1
    cfg = state.config
    threshold_used = state.deployed_threshold
    pi = propensity(obs.uncertainty, threshold_used, state.rho)
    coin = 1 if state.rng.random() < pi else 0
    observed = gate.observe(obs, coin) if coin == 1 else None
    if coin == 1 and observed:
        state.sums[cfg.grid.values > obs.uncertainty] += (1.0 - state.rho) * observed / pi
    state.t = t
    state.deployed_index = cfg.grid.floor_index(
        hoeff_select(state.sums, t, cfg.epsilon, cfg.alpha, cfg.grid,
                     state.rho, state.variant))
    return Decision(propensity=pi, coin=coin,
                    route=Route.EXPENSIVE if coin == 1 else Route.CHEAP,
                    observed_loss=observed, threshold_used=threshold_used), state
