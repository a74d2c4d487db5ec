"""Deterministic random streams: xoshiro256** generators seeded via SplitMix64.

Every stochastic component of the simulator draws from an RngStream so that a
(master seed, stream id) pair reproduces the exact same bit sequence on any
platform.  Trial seeds are derived with ``derive_seed(master, trial_index)``.
"""
import math

MASK64 = (1 << 64) - 1

_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_MIX1 = 0xBF58476D1CE4E5B9
_SM_MIX2 = 0x94D049BB133111EB


def splitmix64_next(state):
    """Advance a SplitMix64 state by one step; returns (new_state, output)."""
    state = (state + _SM_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SM_MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _SM_MIX2) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(master_seed, index):
    """Seed for a sub-experiment: one SplitMix64 output of (master xor index)."""
    _, out = splitmix64_next((master_seed ^ index) & MASK64)
    return out


class RngStream:
    """xoshiro256** stream, state filled from SplitMix64.

    The 256-bit state is produced by folding ``stream_id`` into ``seed`` with
    two SplitMix64 steps and then taking four consecutive SplitMix64 outputs,
    following the generator authors' recommended seeding procedure.
    """

    __slots__ = ("seed", "stream_id", "_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed, stream_id=0):
        self.seed = seed & MASK64
        self.stream_id = stream_id & MASK64
        sm, a = splitmix64_next(self.seed)
        sm, _ = splitmix64_next((self.stream_id ^ a) & MASK64)
        sm, s0 = splitmix64_next(sm)
        sm, s1 = splitmix64_next(sm)
        sm, s2 = splitmix64_next(sm)
        sm, s3 = splitmix64_next(sm)
        if s0 == s1 == s2 == s3 == 0:
            s0 = 1  # all-zero state is a fixed point of xoshiro
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3

    def next_u64(self):
        """Next raw 64-bit output."""
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        r = (s1 * 5) & MASK64
        r = ((r << 7) | (r >> 57)) & MASK64
        result = (r * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def random(self):
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 1.1102230246251565e-16  # 2**-53

    def randbelow(self, n):
        """Uniform integer in [0, n) without modulo bias (rejection sampling)."""
        if n <= 0:
            raise ValueError("randbelow() requires n >= 1")
        limit = ((1 << 64) // n) * n
        x = self.next_u64()
        while x >= limit:
            x = self.next_u64()
        return x % n

    def uniform(self, low, high):
        return low + (high - low) * self.random()

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def poisson(self, lam):
        """Poisson draw via Knuth's product method, chunked for large means."""
        if lam < 0:
            raise ValueError("poisson() requires lam >= 0")
        count = 0
        # exp(-lam) underflows for large lam; split into manageable chunks
        while lam > 500.0:
            count += self.poisson(500.0)
            lam -= 500.0
        threshold = math.exp(-lam)
        prod = self.random()
        while prod >= threshold:
            count += 1
            prod *= self.random()
        return count
