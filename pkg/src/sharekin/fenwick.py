"""Updateable weighted sampling index (Fenwick / binary indexed tree).

Supports O(log N) point updates and O(log N) inverse-CDF lookups over N
non-negative weights.  The stored running total drifts by accumulated float
rounding, so callers rebuild periodically; `checked_total` verifies the
invariant against a fresh sum.
"""

from __future__ import annotations

import numpy as np


class WeightIndex:
    __slots__ = ("n", "tree", "total")

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        self.n = len(w)
        self.rebuild(w)

    def rebuild(self, weights):
        """Reset contents from scratch; clears accumulated drift.

        Sequential summation, matching the compiled kernel's rebuild so the
        two paths stay bit-identical.
        """
        w = np.asarray(weights, dtype=np.float64)
        if len(w) != self.n:
            raise ValueError("length changed")
        tree = np.zeros(self.n + 1)
        total = 0.0
        for i in range(self.n):
            tree[i + 1] = w[i]
            total += w[i]
        for i in range(1, self.n + 1):
            parent = i + (i & -i)
            if parent <= self.n:
                tree[parent] += tree[i]
        self.tree = tree
        self.total = float(total)

    def update(self, index: int, delta: float):
        """Add delta to one weight."""
        if not 0 <= index < self.n:
            raise IndexError("index out of range")
        i = index + 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & -i
        self.total += delta

    def get(self, index: int) -> float:
        """Current weight at index (prefix-difference, exact up to drift)."""
        return self.prefix_sum(index + 1) - self.prefix_sum(index)

    def prefix_sum(self, count: int) -> float:
        """Sum of the first ``count`` weights."""
        s = 0.0
        i = count
        while i > 0:
            s += self.tree[i]
            i -= i & -i
        return s

    def find(self, target: float) -> int:
        """Smallest index with cumulative weight > target.

        With target = u * total, u uniform on [0,1), this samples index p
        with probability w_p / total.  Zero-weight entries are never
        returned for targets strictly inside the mass.
        """
        idx = 0
        bitmask = 1 << (self.n.bit_length())
        while bitmask:
            nxt = idx + bitmask
            if nxt <= self.n and self.tree[nxt] <= target:
                target -= self.tree[nxt]
                idx = nxt
            bitmask >>= 1
        return min(idx, self.n - 1)

    def sample(self, u: float) -> int:
        """Draw an index with probability proportional to its weight."""
        return self.find(u * self.total)

    def checked_total(self, rel_tol: float = 1e-9) -> float:
        """Stored total, after asserting it matches a fresh sum."""
        fresh = self.prefix_sum(self.n)
        scale = max(abs(fresh), abs(self.total), 1e-300)
        if abs(fresh - self.total) > rel_tol * scale:
            raise AssertionError("weight index drift exceeds tolerance; rebuild required")
        return self.total
