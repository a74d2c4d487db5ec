"""Independent oracles used by the test suite.

Everything here is deliberately brute force: exhaustive enumeration, plain
Monte Carlo with numpy's own generator, value iteration.  These never share
code with the implementation paths they check.
"""
import itertools

import numpy as np


def exhaustive_outcome_distribution(m, r):
    """P(idle, success) by enumerating all r^m equally likely placements."""
    counts = {}
    for placement in itertools.product(range(r), repeat=m):
        occupancy = [0] * r
        for ch in placement:
            occupancy[ch] += 1
        idle = sum(1 for c in occupancy if c == 0)
        success = sum(1 for c in occupancy if c == 1)
        counts[(idle, success)] = counts.get((idle, success), 0) + 1
    total = r**m
    return {k: v / total for k, v in counts.items()}


def monte_carlo_moments(n, r, frames, seed):
    """Empirical mean (idle, success, collision) channel counts for n balls
    in r bins over many frames, via numpy's PCG64 (independent of RngStream)."""
    gen = np.random.default_rng(seed)
    idle = success = 0.0
    chunk = 20_000
    done = 0
    while done < frames:
        k = min(chunk, frames - done)
        draws = gen.integers(0, r, size=(k, n))
        flat = draws + (np.arange(k) * r)[:, None]
        occ = np.bincount(flat.reshape(-1), minlength=k * r).reshape(k, r)
        idle += (occ == 0).sum()
        success += (occ == 1).sum()
        done += k
    e_idle = idle / frames
    e_success = success / frames
    return e_idle, e_success, r - e_idle - e_success


def value_iteration(n_states, n_actions, step, gamma, tol=1e-12):
    """Exact Q* for a deterministic MDP given step(s, a) -> (s', reward)."""
    q = np.zeros((n_states, n_actions))
    while True:
        q_new = np.zeros_like(q)
        for s in range(n_states):
            for a in range(n_actions):
                s2, reward = step(s, a)
                q_new[s, a] = reward + gamma * q[s2].max()
        if np.abs(q_new - q).max() < tol:
            return q_new
        q = q_new


def one_sided_lower_bound(diffs, confidence=0.95):
    """Lower confidence bound of the mean of paired differences (t-based)."""
    from scipy.stats import t

    diffs = np.asarray(diffs, dtype=float)
    n = len(diffs)
    se = diffs.std(ddof=1) / np.sqrt(n)
    return float(diffs.mean() - t.ppf(confidence, n - 1) * se)
