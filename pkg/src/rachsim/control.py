"""Access-control configuration strategies.

Covers the closed-form ACB rule (genie-aided or estimator-driven), tabular
Q-learning, a from-scratch DQN with replay buffer and target network, the
cooperative multi-agent factorization of the action space, and the two-step
pipeline that feeds an online LSTM traffic prediction into the learning
agents while a dense corrector supplies its training labels.
"""
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import estimators
from .estimators import BacklogEstimate, DAState, da_update, mle_estimate, mom_closed_form, mom_full
from .neural import MLP, Adam, huber_loss, load_network
from .predictor import (
    N_FEATURES,
    LabelRecord,
    LstmBacklogPredictor,
    observation_features,
)
from .sim import ControlAction

log = logging.getLogger("rachsim")

SCHEMES = ("ACB", "ACB_BO", "DRA")

DEFAULT_CHANNEL_LEVELS = (6, 12, 18, 24, 30, 36, 42, 48, 54)


@dataclass(frozen=True)
class ActionGrid:
    """Discrete levels each control variable may take."""

    acb_levels: tuple = tuple((k + 1) / 16.0 for k in range(16))
    bo_levels: tuple = (0, 2, 4, 8, 16, 32)
    channel_levels: tuple = DEFAULT_CHANNEL_LEVELS

    def __post_init__(self):
        for name, levels in (
            ("acb_levels", self.acb_levels),
            ("bo_levels", self.bo_levels),
            ("channel_levels", self.channel_levels),
        ):
            if len(levels) == 0:
                raise ValueError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if any(not 0.0 < p <= 1.0 for p in self.acb_levels):
            raise ValueError("acb_levels must lie in (0, 1]")


@dataclass
class Transition:
    state: object
    action: int
    reward: float
    next_state: object
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with a uniform (with replacement) sampler."""

    def __init__(self, capacity=10_000):
        self.capacity = capacity
        self._items = []
        self._pos = 0

    def push(self, transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._pos] = transition
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, rng, k):
        return [self._items[rng.randbelow(len(self._items))] for _ in range(k)]

    def __len__(self):
        return len(self._items)


# --- closed-form controllers ----------------------------------------------


def formula_acb(estimate, channels, backoff_window=0):
    """ACB rule p = min(1, R / N-hat) with a guarded denominator."""
    value = estimate.value if isinstance(estimate, BacklogEstimate) else float(estimate)
    p = min(1.0, channels / max(value, 1.0))
    return ControlAction(acb_factor=p, backoff_window=backoff_window, num_channels=channels)


def genie_acb(true_backlog, channels, backoff_window=0):
    """The ACB rule fed with the actual backlog (oracle upper baseline)."""
    return formula_acb(float(true_backlog), channels, backoff_window)


# --- value-based learning primitives ---------------------------------------


def tabular_q_update(table, transition, alpha, gamma, n_actions=None):
    """In-place Q-learning update; unknown (state, action) entries are 0.

    ``n_actions`` bounds the max over next-state actions; without it the max
    runs over the actions seen so far (plus the zero default).
    """
    s, a = transition.state, transition.action
    q = table.get((s, a), 0.0)
    if transition.terminal:
        best_next = 0.0
    else:
        nxt = transition.next_state
        if n_actions is not None:
            best_next = max(table.get((nxt, a2), 0.0) for a2 in range(n_actions))
        else:
            best_next = max(
                [v for (s2, _), v in table.items() if s2 == nxt] + [0.0]
            )
    table[(s, a)] = q + alpha * (transition.reward + gamma * best_next - q)
    return table


def dqn_select_action(net, state, eps, rng):
    """Epsilon-greedy over the network's Q-vector, ties toward lower index."""
    if eps > 0.0 and rng.random() < eps:
        return rng.randbelow(net.out_dim)
    q = net.forward(np.asarray(state, dtype=float))
    return int(np.argmax(q))


def dqn_train_step(net, target_net, buffer, batch_size, gamma, optimizer, rng):
    """One Huber regression step toward r + gamma * max target-Q.

    Returns False (no-op) while the buffer holds fewer than ``batch_size``
    transitions; terminal transitions drop the bootstrap term.
    """
    if len(buffer) < batch_size:
        return False
    batch = buffer.sample(rng, batch_size)
    states = np.stack([t.state for t in batch])
    actions = np.array([t.action for t in batch])
    rewards = np.array([t.reward for t in batch], dtype=float)
    next_states = np.stack([t.next_state for t in batch])
    live = np.array([0.0 if t.terminal else 1.0 for t in batch])
    q_next = target_net.forward(next_states).max(axis=1)
    target = rewards + gamma * q_next * live
    net.zero_grad()
    q_all = net.forward(states)
    rows = np.arange(len(batch))
    _, dsel = huber_loss(q_all[rows, actions], target)
    dout = np.zeros_like(q_all)
    dout[rows, actions] = dsel
    net.backward(dout)
    optimizer.step(net.params(), net.grads())
    return True


class EpsilonSchedule:
    """Multiplicative decay with a floor; non-increasing by construction."""

    def __init__(self, start=1.0, floor=0.05, decay=0.999):
        self.start = start
        self.floor = floor
        self.decay = decay
        self.steps = 0

    def current(self):
        return max(self.floor, self.start * self.decay**self.steps)

    def advance(self):
        value = self.current()
        self.steps += 1
        return value


class DqnAgent:
    """DQN over one discrete action variable: online net, periodically
    refreshed target net, replay buffer and an epsilon-greedy schedule."""

    def __init__(
        self,
        state_dim,
        n_actions,
        rng,
        hidden=(64, 64),
        lr=1e-3,
        gamma=0.9,
        batch_size=32,
        buffer_capacity=10_000,
        target_refresh=100,
        eps_start=1.0,
        eps_floor=0.05,
        eps_decay=0.999,
        reward_scale=1.0,
    ):
        dims = (state_dim, *hidden, n_actions)
        self.net = MLP(dims, rng=rng)
        self.target_net = MLP(dims, rng=rng)
        self.sync_target()
        self.rng = rng
        self.lr = lr
        self.gamma = gamma
        self.batch_size = batch_size
        self.buffer = ReplayBuffer(buffer_capacity)
        self.optimizer = Adam(self.net.params(), lr=lr)
        self.target_refresh = target_refresh
        self.epsilon = EpsilonSchedule(eps_start, eps_floor, eps_decay)
        self.reward_scale = reward_scale
        self.train_steps = 0

    def sync_target(self):
        for tp, p in zip(self.target_net.params(), self.net.params()):
            tp[...] = p

    def select(self, state):
        return dqn_select_action(self.net, state, self.epsilon.advance(), self.rng)

    def record(self, state, action, reward, next_state, terminal):
        self.buffer.push(
            Transition(state, action, reward * self.reward_scale, next_state, terminal)
        )

    def train(self):
        trained = dqn_train_step(
            self.net, self.target_net, self.buffer, self.batch_size, self.gamma,
            self.optimizer, self.rng,
        )
        if trained:
            self.train_steps += 1
            if self.train_steps % self.target_refresh == 0:
                self.sync_target()
        return trained

    def load(self, path):
        self.net = load_network(path)
        self.target_net = load_network(path)
        self.optimizer = Adam(self.net.params(), lr=self.lr)


def cooperative_select(agents, state, eps, rng):
    """Each agent epsilon-greedy selects its own variable from the shared
    state; returns the tuple of per-agent action indices."""
    return tuple(dqn_select_action(a.net, state, eps, rng) for a in agents)


def dump_table_csv(table, path):
    """Write a tabular Q function as (state_bucket, action, value) rows."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state_bucket", "action", "value"])
        for (state, action) in sorted(table):
            writer.writerow([state, action, repr(float(table[(state, action)]))])


# --- scheme plumbing --------------------------------------------------------


def scheme_variables(scheme, grid):
    """The controllable variables of a scheme, as (name, levels) pairs."""
    if scheme == "ACB":
        return [("acb", grid.acb_levels)]
    if scheme == "ACB_BO":
        return [("acb", grid.acb_levels), ("bo", grid.bo_levels)]
    if scheme == "DRA":
        return [("channels", grid.channel_levels)]
    raise ValueError(f"unknown scheme {scheme!r}")


def assemble_action(scheme, grid, indices, channels, default_backoff=0):
    """Build the ControlAction selected by per-variable grid indices."""
    if scheme == "ACB":
        return ControlAction(grid.acb_levels[indices[0]], default_backoff, channels)
    if scheme == "ACB_BO":
        return ControlAction(
            grid.acb_levels[indices[0]], grid.bo_levels[indices[1]], channels
        )
    if scheme == "DRA":
        return ControlAction(1.0, default_backoff, grid.channel_levels[indices[0]])
    raise ValueError(f"unknown scheme {scheme!r}")


def joint_action_count(scheme, grid):
    n = 1
    for _, levels in scheme_variables(scheme, grid):
        n *= len(levels)
    return n


def split_joint_index(scheme, grid, index):
    """Decode a joint action index into per-variable indices (row-major)."""
    sizes = [len(levels) for _, levels in scheme_variables(scheme, grid)]
    out = []
    for size in reversed(sizes):
        out.append(index % size)
        index //= size
    return tuple(reversed(out))


# --- frame-loop controllers -------------------------------------------------


class Controller:
    """One decision maker driving a simulation loop.

    ``act`` is called at the start of each frame and must return a
    ControlAction; ``observe`` receives the frame's report afterwards.
    ``true_backlog`` is passed to ``act`` but only the genie may read it.
    """

    def __init__(self):
        self.last_prediction = None  # load value the action was based on
        self.last_label = None  # label consumed this frame, when any

    def begin_episode(self):
        pass

    def act(self, frame, true_backlog=None):
        raise NotImplementedError

    def observe(self, report):
        pass


def _formula_action(value, scheme, channels, default_backoff, grid):
    if scheme == "DRA":
        levels = grid.channel_levels
        picks = [r for r in levels if r >= value]
        r = picks[0] if picks else levels[-1]
        return ControlAction(1.0, default_backoff, r)
    return formula_acb(value, channels, default_backoff)


class GenieAcbController(Controller):
    def __init__(self, scheme, channels, default_backoff=0, grid=None):
        super().__init__()
        self.scheme = scheme
        self.channels = channels
        self.default_backoff = default_backoff
        self.grid = grid if grid is not None else ActionGrid()

    def act(self, frame, true_backlog=None):
        self.last_prediction = float(true_backlog)
        return _formula_action(
            float(true_backlog), self.scheme, self.channels, self.default_backoff, self.grid
        )


class EstimatorAcbController(Controller):
    """Estimate the load from the previous frame's observation, then apply
    the closed-form configuration rule."""

    def __init__(
        self,
        estimator,
        scheme,
        channels,
        default_backoff=0,
        grid=None,
        search_max=None,
        mle_search_max=300,
        da_beta=2.39,
        da_lambda=0.0,
    ):
        super().__init__()
        if estimator not in (estimators.DA, estimators.MOM_IDLE, estimators.MOM_FULL, estimators.MLE):
            raise ValueError(f"unknown estimator {estimator!r}")
        self.estimator = estimator
        self.scheme = scheme
        self.channels = channels
        self.default_backoff = default_backoff
        self.grid = grid if grid is not None else ActionGrid()
        self.search_max = search_max if search_max is not None else 10 * channels
        self.mle_search_max = mle_search_max
        self._da_state = DAState(0.0, da_beta, da_lambda)
        self._estimate = 0.0

    def begin_episode(self):
        self._estimate = 0.0
        self._da_state = DAState(
            0.0, self._da_state.drift_coefficient, self._da_state.arrival_rate_estimate
        )

    def estimate_from(self, obs):
        if self.estimator == estimators.DA:
            self._da_state = da_update(self._da_state, obs)
            return self._da_state.current_estimate
        if self.estimator == estimators.MOM_IDLE:
            return mom_closed_form(obs).value
        if self.estimator == estimators.MOM_FULL:
            return mom_full(obs, self.search_max).value
        return mle_estimate(obs, self.mle_search_max).value

    def act(self, frame, true_backlog=None):
        self.last_prediction = self._estimate
        return _formula_action(
            self._estimate, self.scheme, self.channels, self.default_backoff, self.grid
        )

    def observe(self, report):
        self._estimate = self.estimate_from(report.observation)


LABEL_ESTIMATORS = {
    estimators.MOM_IDLE: lambda obs, cap: mom_closed_form(obs).value,
    estimators.MOM_FULL: lambda obs, cap: mom_full(obs, cap).value,
    estimators.MLE: lambda obs, cap: mle_estimate(obs, min(cap, 300)).value,
}


class SlFormulaController(Controller):
    """Online LSTM prediction driving the closed-form configuration rule.

    Labels come from a conventional estimator applied to the previous
    frame's observation, so true backlog is never consulted.
    """

    def __init__(
        self,
        scheme,
        channels,
        rng,
        default_backoff=0,
        grid=None,
        label_source=estimators.MOM_FULL,
        predictor=None,
        **predictor_kwargs,
    ):
        super().__init__()
        self.scheme = scheme
        self.channels = channels
        self.default_backoff = default_backoff
        self.grid = grid if grid is not None else ActionGrid()
        if label_source not in LABEL_ESTIMATORS:
            raise ValueError(f"unsupported label source {label_source!r}")
        self.label_source = label_source
        self.predictor = predictor or LstmBacklogPredictor(
            channels=channels, rng=rng, **predictor_kwargs
        )
        self._last_obs = None
        self._last_frame = None

    def _label_pending(self):
        if self._last_obs is None or self._last_frame is None:
            return
        label = LABEL_ESTIMATORS[self.label_source](self._last_obs, int(self.predictor.n_cap))
        record = LabelRecord(
            frame=self._last_frame,
            predicted=self.last_prediction,
            label=label,
            label_source=self.label_source,
        )
        self.predictor.online_update(record)
        self.last_label = label
        self._last_frame = None

    def begin_episode(self):
        # the label for the episode's final frame is consumed here; the
        # harness backfills it into that frame's row right after this call
        self._label_pending()
        self.predictor.reset_window()
        self._last_obs = None

    def act(self, frame, true_backlog=None):
        self.last_label = None
        self._label_pending()
        est = self.predictor.predict(frame)
        self.last_prediction = est.value
        self._last_frame = frame
        return _formula_action(est.value, self.scheme, self.channels, self.default_backoff, self.grid)

    def observe(self, report):
        self._last_obs = report.observation
        self.predictor.observe(report.observation)


class TabularQController(Controller):
    """Joint-action Q-learning over buckets of an estimator's load value."""

    def __init__(
        self,
        scheme,
        channels,
        rng,
        grid=None,
        default_backoff=0,
        alpha=0.1,
        gamma=0.9,
        bucket_width=None,
        eps_start=1.0,
        eps_floor=0.05,
        eps_decay=0.999,
        search_max=None,
    ):
        super().__init__()
        self.scheme = scheme
        self.channels = channels
        self.default_backoff = default_backoff
        self.grid = grid if grid is not None else ActionGrid()
        self.rng = rng
        self.alpha = alpha
        self.gamma = gamma
        self.bucket_width = bucket_width if bucket_width is not None else channels / 2.0
        self.search_max = search_max if search_max is not None else 10 * channels
        self.table = {}
        self.epsilon = EpsilonSchedule(eps_start, eps_floor, eps_decay)
        self.n_actions = joint_action_count(scheme, self.grid)
        self._estimate = 0.0
        self._pending = None  # (state bucket, action index)
        self._reward = 0.0

    def _bucket(self):
        return int(self._estimate / self.bucket_width)

    def _greedy(self, bucket):
        values = [self.table.get((bucket, a), 0.0) for a in range(self.n_actions)]
        return int(np.argmax(values))

    def _finish(self, next_bucket, terminal):
        if self._pending is None:
            return
        s, a = self._pending
        tabular_q_update(
            self.table,
            Transition(s, a, self._reward, next_bucket, terminal),
            self.alpha,
            self.gamma,
            n_actions=self.n_actions,
        )
        self._pending = None

    def begin_episode(self):
        self._finish(0, True)
        self._estimate = 0.0

    def act(self, frame, true_backlog=None):
        bucket = self._bucket()
        self._finish(bucket, False)
        eps = self.epsilon.advance()
        if eps > 0.0 and self.rng.random() < eps:
            action = self.rng.randbelow(self.n_actions)
        else:
            action = self._greedy(bucket)
        self._pending = (bucket, action)
        self.last_prediction = self._estimate
        return assemble_action(
            self.scheme, self.grid, split_joint_index(self.scheme, self.grid, action),
            self.channels, self.default_backoff,
        )

    def observe(self, report):
        self._reward = float(report.observation.success)
        self._estimate = mom_full(report.observation, self.search_max).value


class DqnController(Controller):
    """One-step deep Q-learning on the raw observation window, with a joint
    action space over every controlled variable."""

    def __init__(
        self,
        scheme,
        channels,
        rng,
        grid=None,
        default_backoff=0,
        window=10,
        w_max=32.0,
        checkpoint=None,
        **agent_kwargs,
    ):
        super().__init__()
        self.scheme = scheme
        self.channels = channels
        self.default_backoff = default_backoff
        self.grid = grid if grid is not None else ActionGrid()
        self.window = window
        self.w_max = w_max
        self.n_actions = joint_action_count(scheme, self.grid)
        self.state_dim = window * N_FEATURES
        agent_kwargs.setdefault("reward_scale", 1.0 / channels)
        self.agent = DqnAgent(self.state_dim, self.n_actions, rng, **agent_kwargs)
        if checkpoint is not None:
            self.agent.load(checkpoint)
        self._features = deque(maxlen=window)
        self._pending = None  # (state, action)
        self._reward = 0.0

    def _state(self):
        rows = list(self._features)
        pad = self.window - len(rows)
        if pad > 0:
            rows = [np.zeros(N_FEATURES)] * pad + rows
        return np.concatenate(rows)

    def _finish(self, next_state, terminal):
        if self._pending is None:
            return
        s, a = self._pending
        self.agent.record(s, a, self._reward, next_state, terminal)
        self.agent.train()
        self._pending = None

    def begin_episode(self):
        self._finish(np.zeros(self.state_dim), True)
        self._features.clear()

    def act(self, frame, true_backlog=None):
        state = self._state()
        self._finish(state, False)
        action = self.agent.select(state)
        self._pending = (state, action)
        return assemble_action(
            self.scheme, self.grid, split_joint_index(self.scheme, self.grid, action),
            self.channels, self.default_backoff,
        )

    def observe(self, report):
        self._reward = float(report.observation.success)
        self._features.append(observation_features(report.observation, self.w_max))


class CpclController(Controller):
    """Two-step pipeline: the online LSTM predicts the coming load, one agent
    per control variable acts on (prediction, previous action), and the dense
    corrector labels the prediction one frame later.

    Without a pretrained corrector the labels fall back to MoM-full (logged).
    """

    def __init__(
        self,
        scheme,
        channels,
        rng,
        grid=None,
        default_backoff=0,
        corrector=None,
        predictor=None,
        agent_checkpoints=None,
        w_max=32.0,
        n_cap=None,
        predictor_kwargs=None,
        **agent_kwargs,
    ):
        super().__init__()
        self.scheme = scheme
        self.channels = channels
        self.default_backoff = default_backoff
        self.grid = grid if grid is not None else ActionGrid()
        self.w_max = w_max
        self.n_cap = 10.0 * channels if n_cap is None else float(n_cap)
        self.corrector = corrector
        if corrector is None:
            log.warning("CPCL without a pretrained corrector: labels fall back to MoM-full")
        self.predictor = predictor or LstmBacklogPredictor(
            channels=channels, n_cap=self.n_cap, w_max=w_max, rng=rng,
            **(predictor_kwargs or {}),
        )
        self.variables = scheme_variables(scheme, self.grid)
        self.state_dim = 1 + len(self.variables)
        agent_kwargs.setdefault("reward_scale", 1.0 / channels)
        self.agents = [
            DqnAgent(self.state_dim, len(levels), rng, **agent_kwargs)
            for _, levels in self.variables
        ]
        if agent_checkpoints is not None:
            for agent, path in zip(self.agents, agent_checkpoints):
                agent.load(path)
        self._prev_indices = tuple(0 for _ in self.variables)
        self._pending = None  # (state, per-agent indices)
        self._reward = 0.0
        self._last_obs = None
        self._last_frame = None

    def _encode_state(self, prediction):
        parts = [prediction / self.n_cap]
        for (_, levels), idx in zip(self.variables, self._prev_indices):
            parts.append(levels[idx] / levels[-1])
        return np.array(parts)

    def _label_value(self, obs):
        if self.corrector is not None:
            return self.corrector.estimate(obs).value, estimators.DNN
        return mom_full(obs, int(self.n_cap)).value, estimators.MOM_FULL

    def _label_pending(self):
        if self._last_obs is None or self._last_frame is None:
            return
        label, source = self._label_value(self._last_obs)
        record = LabelRecord(
            frame=self._last_frame, predicted=self.last_prediction,
            label=label, label_source=source,
        )
        self.predictor.online_update(record)
        self.last_label = label
        self._last_frame = None

    def _finish(self, next_state, terminal):
        if self._pending is None:
            return
        state, indices = self._pending
        for agent, idx in zip(self.agents, indices):
            agent.record(state, idx, self._reward, next_state, terminal)
            agent.train()
        self._pending = None

    def begin_episode(self):
        self._label_pending()
        self._finish(np.zeros(self.state_dim), True)
        self.predictor.reset_window()
        self._last_obs = None
        self._prev_indices = tuple(0 for _ in self.variables)

    def act(self, frame, true_backlog=None):
        self.last_label = None
        self._label_pending()
        est = self.predictor.predict(frame)
        self.last_prediction = est.value
        self._last_frame = frame
        state = self._encode_state(est.value)
        self._finish(state, False)
        indices = tuple(agent.select(state) for agent in self.agents)
        self._pending = (state, indices)
        self._prev_indices = indices
        return assemble_action(self.scheme, self.grid, indices, self.channels, self.default_backoff)

    def observe(self, report):
        self._reward = float(report.observation.success)
        self._last_obs = report.observation
        self.predictor.observe(report.observation)
