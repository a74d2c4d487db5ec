"""Non-ML backlog estimators mapping channel observations to traffic loads.

All estimators see only what the base station sees: the per-frame counts of
idle/success/collision channels and the action that produced them.  They
estimate the number of transmitters and convert to backlog by dividing out
the applied ACB factor (de-barring), clamped below at ``P_MIN``.
"""
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .sim import expected_moments

# estimate provenance tags
DA = "DA"
MOM_FULL = "MoM_full"
MOM_IDLE = "MoM_idle"
MLE = "MLE"
LSTM = "LSTM"
DNN = "DNN"
GENIE = "genie"

SOURCES = (DA, MOM_FULL, MOM_IDLE, MLE, LSTM, DNN, GENIE)

P_MIN = 1.0 / 64.0  # de-barring floor: observations under tiny p carry no usable scale


class EstimationError(ValueError):
    """Observation outside the estimator's support."""


@dataclass(frozen=True)
class BacklogEstimate:
    """A nonnegative traffic-load value with its provenance."""

    value: float
    source: str
    saturated: bool = False

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"estimate must be finite and >= 0, got {self.value}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown estimate source {self.source!r}")


@dataclass(frozen=True)
class DAState:
    """Drift-analysis recursion state."""

    current_estimate: float = 0.0
    drift_coefficient: float = 2.39
    arrival_rate_estimate: float = 0.0

    def __post_init__(self):
        if self.current_estimate < 0:
            raise ValueError("current_estimate must be >= 0")
        if self.drift_coefficient <= 0:
            raise ValueError("drift_coefficient must be > 0")


def da_update(state, obs):
    """One drift-analysis step: carry over the unserved load, add the arrival
    rate, and correct by the gap between observed and expected collisions.

    The expected collision count is evaluated at the previous estimate's
    expected transmitter count (estimate times the applied ACB factor).
    """
    action = obs.action
    _, _, e_coll = expected_moments(
        state.current_estimate * action.acb_factor, action.num_channels
    )
    value = (
        max(0.0, state.current_estimate - obs.success)
        + state.arrival_rate_estimate
        + state.drift_coefficient * (obs.collision - e_coll)
    )
    return replace(state, current_estimate=max(0.0, value))


def _debar(transmitters, acb_factor):
    return transmitters / max(acb_factor, P_MIN)


def mom_closed_form(obs):
    """Closed-form moment matching on the idle count alone.

    M = ln(I/R) / ln(1 - 1/R) inverts the expected-idle formula; I = 0 falls
    back to half a channel (continuity correction) and is flagged saturated.
    """
    r = obs.action.num_channels
    if r < 2:
        raise EstimationError("idle-moment matching needs at least 2 channels")
    idle = obs.idle
    saturated = False
    if idle == r:
        m = 0.0
    elif idle == 0:
        m = math.log(0.5 / r) / math.log(1.0 - 1.0 / r)
        saturated = True
    else:
        m = math.log(idle / r) / math.log(1.0 - 1.0 / r)
    return BacklogEstimate(
        value=_debar(m, obs.action.acb_factor), source=MOM_IDLE, saturated=saturated
    )


def mom_full(obs, search_max=540):
    """Moment matching on all three channel counts: the integer transmitter
    count minimizing the squared discrepancy to the expected (I, S, C).

    Ties break toward the smaller count; the scan starts at the observed
    success count (every success is a transmitter).
    """
    if search_max < 1:
        raise EstimationError("search_max must be >= 1")
    if search_max < obs.success:
        raise EstimationError(
            f"search_max {search_max} below observed success count {obs.success}"
        )
    r = obs.action.num_channels
    m = np.arange(obs.success, search_max + 1, dtype=float)
    q = 1.0 - 1.0 / r
    e_idle = r * q**m
    e_succ = m * q ** (m - 1)
    e_coll = r - e_idle - e_succ
    d = (e_idle - obs.idle) ** 2 + (e_succ - obs.success) ** 2 + (e_coll - obs.collision) ** 2
    best = obs.success + int(np.argmin(d))  # argmin returns the first (smallest) minimizer
    return BacklogEstimate(value=_debar(float(best), obs.action.acb_factor), source=MOM_FULL)


@lru_cache(maxsize=8)
def _likelihood_table(r, m_max):
    """P(idle=e, success=s) after m sequential placements, for m = 0..m_max.

    Dynamic program over the occupancy state (e empty channels, s singleton
    channels): one more device hits an empty channel with probability e/r
    (creating a singleton), a singleton with probability s/r (collapsing it
    into a collided channel), and an already-collided channel otherwise.
    Returns an array of shape (m_max + 1, r + 1, r + 1).
    """
    table = np.zeros((m_max + 1, r + 1, r + 1))
    table[0, r, 0] = 1.0
    e = np.arange(r + 1, dtype=float)[:, None]
    s = np.arange(r + 1, dtype=float)[None, :]
    stay = np.clip(r - e - s, 0.0, None) / r
    for m in range(1, m_max + 1):
        prev = table[m - 1]
        cur = prev * stay
        flow_single = prev * (e / r)
        cur[:r, 1:] += flow_single[1:, :r]
        flow_collide = prev * (s / r)
        cur[:, :r] += flow_collide[:, 1:]
        table[m] = cur
    return table


def mle_outcome_distribution(m, r, *, m_max_cap=300, r_max_cap=64):
    """Exact distribution of (idle, success) channel counts for m devices on
    r channels, as a {(I, S): probability} map over the support."""
    if r < 1:
        raise ValueError(f"need r >= 1, got {r}")
    if m < 0:
        raise ValueError(f"need m >= 0, got {m}")
    if m > m_max_cap or r > r_max_cap:
        raise ValueError(f"(m={m}, r={r}) beyond caps ({m_max_cap}, {r_max_cap})")
    grid = _likelihood_table(r, m)[m]
    out = {}
    for e in range(r + 1):
        for s in range(r + 1):
            if grid[e, s] > 0.0:
                out[(e, s)] = float(grid[e, s])
    return out


def mle_estimate(obs, search_max=300):
    """Maximum-likelihood transmitter count given the observed (I, S), scanned
    over m in [S + 2C, search_max]; ties toward the smaller count."""
    r = obs.action.num_channels
    lo = obs.success + 2 * obs.collision
    if lo > search_max:
        raise EstimationError(
            f"observation needs at least {lo} transmitters, above search_max {search_max}"
        )
    table = _likelihood_table(r, search_max)
    lik = table[lo : search_max + 1, obs.idle, obs.success]
    if float(lik.max()) <= 0.0:
        raise EstimationError(
            f"observation (I={obs.idle}, S={obs.success}) inconsistent for r={r}"
        )
    best = lo + int(np.argmax(lik))
    return BacklogEstimate(value=_debar(float(best), obs.action.acb_factor), source=MLE)
