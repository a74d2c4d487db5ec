"""Frame-by-frame contention engine for framed-ALOHA random access.

Each frame offers ``num_channels`` contention opportunities.  Backlogged
devices that are not in back-off pass an ACB gate with probability
``acb_factor`` and pick one channel uniformly at random; a lone transmitter
on a channel succeeds, two or more collide.  Colliders either draw a back-off
timer or are dropped once they exhaust the retransmission limit.
"""
from dataclasses import dataclass, field

__all__ = [
    "Device",
    "ControlAction",
    "Observation",
    "FrameReport",
    "run_frame",
    "expected_moments",
    "advance_backlog",
    "Simulator",
]


@dataclass
class Device:
    """One backlogged access attempt."""

    id: int
    arrival_frame: int
    attempts: int = 0
    backoff_until: int = 0


@dataclass(frozen=True)
class ControlAction:
    """Per-frame control knobs: ACB factor p, back-off window W, channels R."""

    acb_factor: float
    backoff_window: int = 0
    num_channels: int = 54

    def __post_init__(self):
        if not 0.0 <= self.acb_factor <= 1.0:
            raise ValueError(f"acb_factor must be in [0, 1], got {self.acb_factor}")
        if self.backoff_window < 0:
            raise ValueError(f"backoff_window must be >= 0, got {self.backoff_window}")
        if self.num_channels < 1:
            raise ValueError(f"num_channels must be >= 1, got {self.num_channels}")


@dataclass(frozen=True)
class Observation:
    """What the base station sees at the end of a frame: channel-state counts
    plus the control action it applied.  Always I + S + C = R."""

    frame: int
    idle: int
    success: int
    collision: int
    action: ControlAction


@dataclass
class FrameReport:
    """Full (genie) outcome of one frame.  ``true_backlog`` is the device
    count at frame start, after arrivals; ``successes`` holds
    (device id, delay in frames, total transmissions) tuples."""

    observation: Observation
    true_backlog: int
    new_arrivals: int
    successes: list = field(default_factory=list)
    drops: int = 0
    transmissions: int = 0


def run_frame(backlog, action, limit, rng, frame=0, new_arrivals=0):
    """Simulate one frame of contention; returns (FrameReport, new backlog).

    Draw order (the determinism contract): for each device in backlog order,
    one ACB-gate uniform if the device is eligible, then one channel index if
    it passed the gate; afterwards one back-off draw per surviving collider,
    again in backlog order, skipped entirely when the window is 0.

    A device's ``attempts`` counts its transmissions that ended in collision;
    it is dropped when that count would exceed ``limit``.  ACB-barred devices
    do not consume an attempt.  Delay is ``frame - arrival_frame + 1``.
    """
    r = action.num_channels
    p = action.acb_factor
    w = action.backoff_window

    seen = set()
    for dev in backlog:
        if dev.id in seen:
            raise ValueError(f"duplicate device id {dev.id} in backlog")
        seen.add(dev.id)

    true_backlog = len(backlog)
    rand = rng.random
    randbelow = rng.randbelow

    # transmission phase
    channel_of = {}
    occupancy = [0] * r
    for idx, dev in enumerate(backlog):
        if dev.backoff_until <= frame and rand() < p:
            ch = randbelow(r)
            channel_of[idx] = ch
            occupancy[ch] += 1

    successes = []
    colliders = []
    for idx, ch in channel_of.items():
        dev = backlog[idx]
        if occupancy[ch] == 1:
            successes.append((dev.id, frame - dev.arrival_frame + 1, dev.attempts + 1))
        else:
            colliders.append(idx)

    # collision resolution phase
    drops = 0
    removed = {idx for idx, ch in channel_of.items() if occupancy[ch] == 1}
    for idx in colliders:
        dev = backlog[idx]
        dev.attempts += 1
        if dev.attempts > limit:
            drops += 1
            removed.add(idx)
        elif w > 0:
            dev.backoff_until = frame + 1 + randbelow(w + 1)
        else:
            dev.backoff_until = frame + 1

    new_backlog = [dev for idx, dev in enumerate(backlog) if idx not in removed]

    success_count = len(successes)
    busy = sum(1 for c in occupancy if c > 0)
    obs = Observation(
        frame=frame,
        idle=r - busy,
        success=success_count,
        collision=busy - success_count,
        action=action,
    )
    report = FrameReport(
        observation=obs,
        true_backlog=true_backlog,
        new_arrivals=new_arrivals,
        successes=successes,
        drops=drops,
        transmissions=len(channel_of),
    )
    return report, new_backlog


def expected_moments(n, r):
    """Expected (idle, success, collision) channel counts for n transmitters
    placed uniformly on r channels.  ``n`` may be fractional (expected load).

    E_idle = r(1-1/r)^n, E_success = n(1-1/r)^(n-1), E_collision = remainder.
    """
    if r < 1:
        raise ValueError(f"need r >= 1, got {r}")
    if n < 0:
        raise ValueError(f"need n >= 0, got {n}")
    if n == 0:
        return float(r), 0.0, 0.0
    q = 1.0 - 1.0 / r
    e_idle = r * q**n
    e_success = n * q ** (n - 1)
    return e_idle, e_success, r - e_idle - e_success


def advance_backlog(backlog, arrivals, frame, next_id=0):
    """Append ``arrivals`` fresh devices (eligible immediately); returns the
    extended list and the next unused device id."""
    if arrivals < 0:
        raise ValueError("arrivals must be >= 0")
    out = list(backlog)
    for k in range(arrivals):
        out.append(Device(id=next_id + k, arrival_frame=frame, backoff_until=frame))
    return out, next_id + arrivals


class Simulator:
    """Owns the backlog, the frame counter and the device-id counter.

    ``step`` adds the frame's arrivals, runs contention under the given
    action and returns the FrameReport.  ``reset`` clears the backlog for a
    new episode; device ids keep counting so they never repeat in a run.
    """

    def __init__(self, limit, rng):
        self.limit = limit
        self.rng = rng
        self.backlog = []
        self.frame = 0
        self._next_id = 0

    def reset(self):
        self.backlog = []
        self.frame = 0

    @property
    def backlog_size(self):
        return len(self.backlog)

    def step(self, action, arrivals):
        self.backlog, self._next_id = advance_backlog(
            self.backlog, arrivals, self.frame, self._next_id
        )
        report, self.backlog = run_frame(
            self.backlog, action, self.limit, self.rng, self.frame, arrivals
        )
        self.frame += 1
        return report
