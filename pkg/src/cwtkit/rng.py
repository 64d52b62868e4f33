"""Deterministic, splittable random streams (SplitMix64).

Every stochastic choice in the toolkit is drawn from one of these streams so
that a (seed, structure) pair replays bit-identically across runs and
platforms.  Streams are split by index rather than shared: each transformed
copy, iteration, or image gets its own child stream, which keeps results
independent of evaluation order.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    """SplitMix64 output permutation (finalizer)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """A single-owner SplitMix64 stream.

    Two instances constructed with the same seed emit bit-identical integer
    sequences.  ``split(index)`` derives an independent child stream as a pure
    function of (construction seed, index); it does not consume or depend on
    draws made from the parent.
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix(self._state)

    def split(self, index: int) -> "Rng":
        if index < 0:
            raise ValueError(f"split index must be >= 0, got {index}")
        return Rng(_mix((self.seed + (index + 1) * _GOLDEN) & _MASK64))

    def uniform(self, lo: float, hi: float) -> float:
        """Draw from [lo, hi), built from the high 53 bits of one output."""
        if lo > hi:
            raise ValueError(f"uniform bounds out of order: lo={lo} > hi={hi}")
        u = (self.next_u64() >> 11) * 2.0 ** -53
        return lo + u * (hi - lo)

    def below(self, n: int) -> int:
        """Integer in [0, n) via the multiply-shift reduction (no float)."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64


def sample_without_replacement(rng: Rng, pool: int, count: int) -> list[int]:
    """`count` distinct indices drawn uniformly from [0, pool), sorted.

    Partial Fisher-Yates; consumes exactly `count` draws.
    """
    if count < 0 or count > pool:
        raise ValueError(
            f"cannot draw {count} distinct indices from a pool of {pool}"
        )
    idx = list(range(pool))
    for i in range(count):
        j = i + rng.below(pool - i)
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:count])
