"""Online backlog prediction with delayed approximate labels.

The LSTM predictor maps a window of recent per-frame features to the coming
frame's traffic load.  True backlog is never observable, so training labels
are estimator outputs computed one frame late; the offline-trained dense
corrector provides those labels in the two-step learning pipeline.
"""
from collections import deque
from dataclasses import dataclass

import numpy as np

from .estimators import DNN, LSTM, MOM_FULL, MOM_IDLE, MLE, BacklogEstimate
from .neural import MLP, Adam, LSTMRegressor, network_gradients

N_FEATURES = 5
LABEL_SOURCES = (MOM_IDLE, MOM_FULL, MLE, DNN)


def observation_features(obs, w_max=32.0):
    """Feature row for one frame: counts as channel fractions plus the
    applied control knobs, everything in [0, 1]."""
    act = obs.action
    r = act.num_channels
    return np.array(
        [
            obs.idle / r,
            obs.success / r,
            obs.collision / r,
            act.acb_factor,
            min(act.backoff_window, w_max) / w_max,
        ]
    )


@dataclass(frozen=True)
class LabelRecord:
    """Pairs the prediction made at ``frame`` with the approximate label that
    became computable one frame later."""

    frame: int
    predicted: float
    label: float
    label_source: str

    def __post_init__(self):
        if self.label < 0:
            raise ValueError("labels are traffic loads and must be >= 0")
        if self.label_source not in LABEL_SOURCES:
            raise ValueError(f"unknown label source {self.label_source!r}")


class LstmBacklogPredictor:
    """LSTM over the last ``window`` frames with one-frame-delayed updates.

    ``predict(frame)`` caches the feature window it used so that the matching
    LabelRecord can be trained on when it arrives; each cached window is
    consumed exactly once.  Updates may mix in a small replay batch of recent
    (window, label) pairs, sampled from this predictor's own rng stream.
    """

    def __init__(
        self,
        channels=54,
        hidden=32,
        window=10,
        n_cap=None,
        w_max=32.0,
        lr=1e-3,
        replay_batch=8,
        replay_horizon=256,
        rng=None,
        net=None,
    ):
        self.channels = channels
        self.window = window
        self.n_cap = 10.0 * channels if n_cap is None else float(n_cap)
        self.w_max = float(w_max)
        self.replay_batch = max(1, replay_batch)
        self.replay_horizon = replay_horizon
        self.rng = rng
        self.net = net if net is not None else LSTMRegressor(N_FEATURES, hidden, rng=rng)
        self.optimizer = Adam(self.net.params(), lr=lr)
        self._history = deque(maxlen=window)
        self._pending = {}
        self._replay = deque(maxlen=replay_horizon)

    def reset_window(self):
        """Forget the observation history (new episode); keeps the weights."""
        self._history.clear()
        self._pending.clear()

    def observe(self, obs):
        self._history.append(observation_features(obs, self.w_max))

    def current_window(self):
        rows = list(self._history)
        pad = self.window - len(rows)
        if pad > 0:
            rows = [np.zeros(N_FEATURES)] * pad + rows
        return np.stack(rows)

    def predict_window(self, window):
        raw = float(self.net.forward(window))
        return min(max(raw, 0.0), self.n_cap)

    def predict(self, frame):
        window = self.current_window()
        self._pending[frame] = window
        for old in [f for f in self._pending if f < frame - self.replay_horizon]:
            del self._pending[old]
        value = self.predict_window(window)
        return BacklogEstimate(value=value, source=LSTM)

    def online_update(self, record):
        """One training step for a labeled prediction; returns the batch loss."""
        window = self._pending.pop(record.frame, None)
        if window is None:
            raise ValueError(f"no pending prediction for frame {record.frame} (stale or consumed)")
        batch = [(window, record.label)]
        if self.rng is not None and len(self._replay) > 0:
            for _ in range(self.replay_batch - 1):
                batch.append(self._replay[self.rng.randbelow(len(self._replay))])
        windows = np.stack([b[0] for b in batch])
        labels = np.array([b[1] for b in batch], dtype=float)
        value, grads = network_gradients(self.net, "mse", windows, labels)
        self.optimizer.step(self.net.params(), grads)
        self._replay.append((window, record.label))
        return value


class DnnCorrector:
    """Offline-trained dense estimator of the per-frame traffic load."""

    def __init__(self, net=None, dims=(N_FEATURES, 64, 64, 1), w_max=32.0, rng=None):
        self.net = net if net is not None else MLP(dims, rng=rng)
        self.w_max = float(w_max)

    def estimate_features(self, features):
        out = self.net.forward(np.asarray(features, dtype=float))
        return max(0.0, float(out[0]))

    def estimate(self, obs):
        value = self.estimate_features(observation_features(obs, self.w_max))
        return BacklogEstimate(value=value, source=DNN)


def pretrain_dnn(features, targets, *, epochs=60, batch_size=64, lr=1e-3, rng=None, net=None):
    """Train a dense corrector on (features, true backlog) pairs.

    Shuffling is driven by ``rng`` so a fixed seed reproduces the final
    parameters bit-for-bit.  The learning rate steps down to 0.3x and 0.1x
    over the epoch thirds.  Returns (trained MLP, per-epoch mean loss).
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("need a non-empty 2-d feature matrix")
    if len(x) != len(y):
        raise ValueError("features and targets must align")
    if net is None:
        net = MLP((x.shape[1], 64, 64, 1), rng=rng)
    optimizer = Adam(net.params(), lr=lr)
    order = list(range(len(x)))
    curve = []
    for epoch in range(epochs):
        optimizer.lr = lr * (1.0, 0.3, 0.1)[min(3 * epoch // max(epochs, 1), 2)]
        if rng is not None:
            rng.shuffle(order)
        total = 0.0
        batches = 0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            value, grads = network_gradients(net, "mse", x[idx], y[idx])
            optimizer.step(net.params(), grads)
            total += value
            batches += 1
        curve.append(total / batches)
    return net, curve
