"""Deterministic random streams.

The simulation engine must produce bit-identical trajectories for a given
(base_seed, replica_id) pair on every platform, so it does not rely on any
library generator whose stream may change between releases.  Instead it uses
xoshiro256++ with splitmix64 seeding, implemented twice: once here in pure
Python (reference, used by the slow step-by-step path and by tests) and once
inside the compiled kernel.  Both are exercised against each other in the test
suite.

Stream derivation is a fixed, documented formula:

    stream_seed(base_seed, stream_id) = base_seed XOR splitmix64_next(stream_id)

where splitmix64_next(x) is one step of the splitmix64 generator started at
state x (add the golden-gamma constant, then finalize).  The xoshiro256++
state is then the first four splitmix64 outputs started at stream_seed.
Replica k of an ensemble uses stream_id = k; auxiliary consumers (rank
tie-breaking, Monte Carlo thresholds) use fixed stream ids far above any
replica index, listed where they are used.
"""

from __future__ import annotations

import math

MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15

# 2**-53, so uniforms are the IEEE-double grid used by most 64-bit generators
_U53 = 1.0 / 9007199254740992.0


def splitmix64_next(state: int) -> int:
    """One output of splitmix64 started at ``state`` (state is consumed)."""
    z = (state + _GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, stream_id: int) -> int:
    """Seed for an independent stream: base_seed XOR splitmix64_next(stream_id)."""
    if base_seed < 0 or stream_id < 0:
        raise ValueError("seeds and stream ids must be non-negative")
    return (base_seed ^ splitmix64_next(stream_id & MASK64)) & MASK64


def xoshiro_state(seed: int) -> list[int]:
    """Initial xoshiro256++ state: four successive splitmix64 outputs."""
    s = []
    x = seed & MASK64
    for _ in range(4):
        x = (x + _GAMMA) & MASK64
        z = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        s.append(z ^ (z >> 31))
    return s


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256pp:
    """xoshiro256++ reference implementation.

    Matches the compiled kernel output for output, including the uniform
    mapping (top 53 bits scaled by 2**-53).
    """

    __slots__ = ("s",)

    def __init__(self, seed: int, stream_id: int | None = None):
        if stream_id is not None:
            seed = derive_seed(seed, stream_id)
        self.s = xoshiro_state(seed)

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[0] + s[3]) & MASK64, 23) + s[0]) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform on [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * _U53

    def exponential(self) -> float:
        """Standard exponential via inversion, -log1p(-u) (never log(0))."""
        return -math.log1p(-self.uniform())
