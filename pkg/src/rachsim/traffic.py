"""Arrival-process generators feeding new devices into the simulator.

The bursty profile spreads a fixed number of arrivals over each period
according to a Beta density sampled at frame midpoints; deterministic mode
rounds the expected counts with the largest-remainder method so every period
carries exactly the configured total.
"""
from dataclasses import dataclass

KINDS = ("beta_periodic", "constant", "poisson")


@dataclass(frozen=True)
class TrafficProfile:
    kind: str = "beta_periodic"
    total_per_period: int = 200
    period: int = 10
    alpha: float = 3.0
    beta: float = 4.0
    deterministic: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown traffic kind {self.kind!r}")
        if self.total_per_period < 0:
            raise ValueError("total_per_period must be >= 0")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be > 0")


def beta_weights(profile):
    """Per-frame weights of one period: Beta(alpha, beta) density evaluated at
    frame midpoints (i + 0.5) / P, normalized to sum 1."""
    p = profile.period
    a, b = profile.alpha, profile.beta
    dens = [((i + 0.5) / p) ** (a - 1.0) * (1.0 - (i + 0.5) / p) ** (b - 1.0) for i in range(p)]
    total = sum(dens)
    return [d / total for d in dens]


def largest_remainder(weights, total):
    """Round total*weights to integers that sum exactly to ``total``.

    Extra units go to the largest fractional remainders, ties broken toward
    the lower frame index.
    """
    raw = [w * total for w in weights]
    counts = [int(x) for x in raw]
    short = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def period_counts(profile):
    """The fixed per-frame arrival counts of one period (deterministic modes)."""
    if profile.kind == "constant":
        weights = [1.0 / profile.period] * profile.period
    else:
        weights = beta_weights(profile)
    return largest_remainder(weights, profile.total_per_period)


class ArrivalProcess:
    """Stateful arrival stream.  Frames must be visited in order within an
    episode; ``reset`` starts a fresh episode (stochastic splits are redrawn).
    """

    def __init__(self, profile, rng=None):
        self.profile = profile
        self.rng = rng
        self._weights = None
        self._fixed = None
        self._period_index = None
        self._period_draw = None
        if profile.kind == "constant" or (profile.kind == "beta_periodic" and profile.deterministic):
            self._fixed = period_counts(profile)
        elif profile.kind == "beta_periodic":
            self._weights = beta_weights(profile)
        if self._fixed is None and rng is None:
            raise ValueError(f"stochastic profile {profile.kind!r} needs an rng")

    def reset(self):
        self._period_index = None
        self._period_draw = None

    def arrivals_at(self, frame):
        prof = self.profile
        if self._fixed is not None:
            return self._fixed[frame % prof.period]
        if prof.kind == "poisson":
            return self.rng.poisson(prof.total_per_period / prof.period)
        # multinomial beta split, drawn once per period
        idx = frame // prof.period
        if idx != self._period_index:
            self._period_index = idx
            self._period_draw = self._draw_split()
        return self._period_draw[frame % prof.period]

    def _draw_split(self):
        cdf = []
        acc = 0.0
        for w in self._weights:
            acc += w
            cdf.append(acc)
        cdf[-1] = 1.0
        counts = [0] * self.profile.period
        for _ in range(self.profile.total_per_period):
            u = self.rng.random()
            lo = 0
            while cdf[lo] <= u:
                lo += 1
            counts[lo] += 1
        return counts


def arrivals_at(profile, frame, rng=None):
    """Stateless arrival count for deterministic and poisson profiles."""
    if profile.kind == "beta_periodic" and not profile.deterministic:
        raise ValueError("multinomial beta profile requires an ArrivalProcess")
    return ArrivalProcess(profile, rng).arrivals_at(frame)
