"""Sequential betting engine that routes queries and certifies thresholds.

One betting account runs per candidate threshold. Each step the router
deploys the last certified threshold, flips a routing coin, and settles
every account against an importance-weighted payoff built from the one
loss it was allowed to observe. Wealth is tracked in the log domain only;
an account whose wealth clears the confidence bar is evidence that its
threshold keeps the deployed risk under the budget, and the selection
rules read the next deployed threshold off the wealth table.

The account arithmetic is written once over numpy scalars-or-arrays, so
the same functions settle a single account in tests and the whole grid
inside ``step``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import (
    Prior,
    RouterConfig,
    SelectionMode,
    StreamObservation,
    ThresholdGrid,
    rho_at,
)


class WagerOutOfRange(RuntimeError):
    """A wager would let a single payoff wipe out an account.

    Unreachable when wagers come from ``adaptive_lambda`` under a valid
    config; kept as a hard internal assertion.
    """


class OutOfOrderObservation(ValueError):
    """The stream handed the engine a step index it did not expect."""


class LossGateViolation(RuntimeError):
    """The engine tried to read a loss on a step routed to the cheap model."""


class Route(str, Enum):
    CHEAP = "cheap"
    EXPENSIVE = "expensive"


@dataclass(frozen=True)
class Decision:
    """What the router did on one step, before any account settlement."""

    propensity: float
    coin: int
    route: Route
    observed_loss: float | None
    threshold_used: float


@dataclass
class ThresholdAccount:
    """Betting state for candidate thresholds.

    Fields hold plain floats for a single account, or aligned arrays for
    one account per grid point. ``sum_payoff`` and ``sum_payoff_sq`` feed
    the adaptive wager; both exclude the current step until settlement,
    which is what keeps the wager predictable.
    """

    log_wealth: float | np.ndarray = 0.0
    sum_payoff: float | np.ndarray = 0.0
    sum_payoff_sq: float | np.ndarray = 0.0
    last_lambda: float | np.ndarray = 0.0

    @classmethod
    def table(cls, n: int) -> "ThresholdAccount":
        """Fresh accounts for an n-point grid, all at wealth 1."""
        return cls(log_wealth=np.zeros(n), sum_payoff=np.zeros(n),
                   sum_payoff_sq=np.zeros(n), last_lambda=np.zeros(n))

    def view(self, i: int) -> "ThresholdAccount":
        """Scalar copy of account i out of an array-valued table."""
        return ThresholdAccount(
            log_wealth=float(np.asarray(self.log_wealth)[i]),
            sum_payoff=float(np.asarray(self.sum_payoff)[i]),
            sum_payoff_sq=float(np.asarray(self.sum_payoff_sq)[i]),
            last_lambda=float(np.asarray(self.last_lambda)[i]),
        )


class LossGate:
    """Single doorway between the stream's latent losses and the engine.

    The gate opens only on steps whose coin actually routed the query to
    the expensive model, and it records every access, so a trajectory can
    be audited against the routing record afterwards.
    """

    def __init__(self) -> None:
        self.accessed_steps: list[int] = []

    def observe(self, obs: StreamObservation, coin: int) -> float:
        if coin != 1:
            raise LossGateViolation(
                f"loss requested at step {obs.index} with routing coin {coin}")
        self.accessed_steps.append(obs.index)
        return obs.latent_loss

    @property
    def access_count(self) -> int:
        return len(self.accessed_steps)


def propensity(uncertainty: float, deployed: float, rho_t: float) -> float:
    """Probability of calling the expensive model on this query.

    Queries at or above the deployed threshold always escalate; the rest
    escalate at the exploration rate so no threshold ever goes blind.
    """
    return 1.0 if uncertainty >= deployed else rho_t


def payoff_bound(epsilon: float, rho_min: float, rho_t: float) -> float:
    """Largest payoff magnitude possible at this step's exploration rate."""
    return max(epsilon, (1.0 - rho_min) / rho_t - epsilon)


def ips_payoff(loss: float | None, coin: int, pi: float, uncertainty: float,
               threshold: float, rho_min: float, epsilon: float) -> float:
    """Payoff credited to one threshold's account for one step.

    The loss estimate reweights the observed loss by the deployed
    propensity, so its conditional mean matches the would-be deployment
    risk of ``threshold`` even though the routing ran at a different
    threshold. Steps that stayed cheap pay the full budget epsilon.
    """
    if coin == 0:
        return epsilon
    estimate = (1.0 - rho_min) * (loss / pi) * (1.0 if uncertainty < threshold else 0.0)
    return epsilon - estimate


def adaptive_lambda(account: ThresholdAccount, m_t: float, cap: float):
    """Wager for the next payoff, from past payoffs only.

    Follows the regularized ratio of cumulative payoff to cumulative
    squared payoff, clamped to [0, cap / m_t] so one step can lose at most
    a ``cap`` fraction of the account. Scalar or array, matching the
    account's fields.
    """
    raw = account.sum_payoff / (account.sum_payoff_sq + 1.0)
    return np.clip(raw, 0.0, cap / m_t)


def update_account(account: ThresholdAccount, lam, payoff) -> ThresholdAccount:
    """Settle one betting round in place; returns the same account.

    Wealth multiplies by (1 + lam * payoff), tracked as log1p so long
    losing streaks underflow gracefully instead of hitting zero.
    """
    growth = lam * payoff
    if np.min(growth) <= -1.0:
        raise WagerOutOfRange(
            f"wealth factor would drop to {1.0 + float(np.min(growth)):.3g}")
    account.log_wealth = account.log_wealth + np.log1p(growth)
    account.sum_payoff = account.sum_payoff + payoff
    account.sum_payoff_sq = account.sum_payoff_sq + np.square(payoff)
    account.last_lambda = lam
    return account


def _fixed_sequence_index(log_wealth: np.ndarray, log_bar: float) -> int:
    """Largest index whose entire prefix clears the bar; 0 when none do."""
    qualified = log_wealth >= log_bar
    if not qualified[0]:
        return 0
    if qualified.all():
        return int(qualified.size) - 1
    return int(np.argmin(qualified)) - 1


def _mixture_index(log_wealth: np.ndarray, log_bars: np.ndarray) -> int:
    """Largest index clearing its own prior-scaled bar; 0 when none do."""
    hits = np.flatnonzero(log_wealth >= log_bars)
    return int(hits[-1]) if hits.size else 0


def select_fixed_sequence(accounts: ThresholdAccount, alpha: float,
                          grid: ThresholdGrid) -> float:
    """Certified threshold under the ordered-prefix rule.

    A threshold deploys only when it and every smaller candidate hold
    wealth of at least 1 / alpha, which is what makes the certificate
    anytime-valid without any multiplicity correction.
    """
    idx = _fixed_sequence_index(np.asarray(accounts.log_wealth), -math.log(alpha))
    return float(grid.values[idx])


def select_mixture(accounts: ThresholdAccount, alpha: float, prior: Prior,
                   grid: ThresholdGrid) -> float:
    """Certified threshold under the prior-weighted rule.

    Each candidate faces its own bar 1 / (alpha * mass), and the largest
    one over its bar deploys; no prefix requirement.
    """
    log_bars = -(math.log(alpha) + np.log(prior.mass))
    return float(grid.values[_mixture_index(np.asarray(accounts.log_wealth), log_bars)])


@dataclass
class RouterState:
    """Mutable run state. Single writer: steps are strictly sequential."""

    config: RouterConfig
    accounts: ThresholdAccount
    rng: np.random.Generator
    t: int = 0
    deployed_index: int = 0
    fixed_wager: float | None = None
    _log_bars: float | np.ndarray = field(default=0.0, repr=False)

    @classmethod
    def fresh(cls, config: RouterConfig, *, rng=None,
              fixed_wager: float | None = None) -> "RouterState":
        """Start a run at step 0 with unit wealth everywhere.

        ``rng`` may be a Generator, a SeedSequence, or an int; by default
        the routing coins are seeded from ``config.seed``.

        ``fixed_wager`` replaces the adaptive wager with a constant (an
        ablation knob); it must leave every reachable payoff survivable.
        """
        if rng is None:
            rng = config.seed
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        if fixed_wager is not None:
            worst = max((1.0 - config.schedule.rho_min) / r - config.epsilon
                        for r in config.schedule.emitted_rates())
            if not 0.0 <= fixed_wager < 1.0 / worst:
                raise WagerOutOfRange(
                    f"fixed wager {fixed_wager} must lie in [0, {1.0 / worst:.6g}) "
                    "to survive the worst payoff")
        if config.selection_mode is SelectionMode.MIXTURE:
            bars: float | np.ndarray = -(math.log(config.alpha) + np.log(config.prior.mass))
        else:
            bars = -math.log(config.alpha)
        return cls(config=config, accounts=ThresholdAccount.table(config.grid.n),
                   rng=rng, fixed_wager=fixed_wager, _log_bars=bars)

    @property
    def deployed_threshold(self) -> float:
        return float(self.config.grid.values[self.deployed_index])


def step(state: RouterState, obs: StreamObservation,
         gate: LossGate) -> tuple[Decision, RouterState]:
    """Advance the router by one query; returns the decision and the state.

    Order matters and is fixed: route against the threshold certified
    after the previous step, flip exactly one coin, read the loss through
    the gate only if the coin escalated, settle every account with wagers
    computed from pre-step sums, then certify the next threshold. The
    state is mutated in place and returned for convenience.
    """
    t = state.t + 1
    if obs.index != t:
        raise OutOfOrderObservation(
            f"expected observation index {t}, got {obs.index}")
    cfg = state.config
    grid_values = cfg.grid.values
    rho_t = rho_at(cfg.schedule, t)
    threshold_used = float(grid_values[state.deployed_index])

    pi = propensity(obs.uncertainty, threshold_used, rho_t)
    # One draw per step no matter the branch, so trajectories with the
    # same seed stay aligned across configs. pi == 1 escalates surely
    # because random() < 1 always holds.
    coin = 1 if state.rng.random() < pi else 0
    observed = gate.observe(obs, coin) if coin == 1 else None

    rho_min = cfg.schedule.rho_min
    m_t = payoff_bound(cfg.epsilon, rho_min, rho_t)
    acc = state.accounts
    if state.fixed_wager is None:
        lam = adaptive_lambda(acc, m_t, cfg.betting_cap)
    else:
        lam = np.full(grid_values.size, state.fixed_wager)

    if coin == 1:
        estimate = (1.0 - rho_min) * (observed / pi)
        # Payoff range check; estimate is shared by every account this step.
        if not 0.0 <= estimate <= (1.0 - rho_min) * (1.0 / rho_t):
            raise WagerOutOfRange(
                f"loss estimate {estimate} escapes its propensity bound at step {t}")
        payoff = np.where(grid_values > obs.uncertainty,
                          cfg.epsilon - estimate, cfg.epsilon)
    else:
        payoff = cfg.epsilon

    update_account(acc, lam, payoff)

    log_wealth = np.asarray(acc.log_wealth)
    if cfg.selection_mode is SelectionMode.MIXTURE:
        state.deployed_index = _mixture_index(log_wealth, state._log_bars)
    else:
        state.deployed_index = _fixed_sequence_index(log_wealth, state._log_bars)
    state.t = t

    decision = Decision(propensity=pi, coin=coin,
                        route=Route.EXPENSIVE if coin == 1 else Route.CHEAP,
                        observed_loss=observed, threshold_used=threshold_used)
    return decision, state
