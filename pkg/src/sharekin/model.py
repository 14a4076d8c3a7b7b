"""Core state and rates of the biquadratic-transfer urn model.

N sites hold M indivisible units, one unit being the share resolution 1/M.
Site p holds m_p >= 1 units and carries weight w_p = m_p**b.  A unit moves
from site p to site q (p != q) at rate

    u_pq = w_p * w_q / S,    S = sum_l w_l,

except that a site holding a single unit cannot lose it (u_pq = 0 when
m_p = 1), so every site keeps at least one unit and the support never shrinks.
The default exponent b = 2 makes the transfer rate biquadratic in the counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Above this value of b*log(m) plain powers approach overflow; weights switch
# to a shifted log-space representation (w = exp(b*log m - log_scale)).
LOG_WEIGHT_THRESHOLD = 300.0

# Full recomputation of cached aggregates after this many incremental updates
# bounds float drift.
REFRESH_INTERVAL = 1 << 20


@dataclass(frozen=True)
class ModelParams:
    """Model dimensions: site count N, unit count M, transfer exponent b."""

    n_sites: int
    total_units: int
    exponent: float = 2.0

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.total_units < self.n_sites:
            raise ValueError("need at least one unit per site")
        if not math.isfinite(self.exponent) or self.exponent < 0:
            raise ValueError("exponent must be finite and non-negative")

    @property
    def density(self) -> float:
        """Units per site, rho = M / N."""
        return self.total_units / self.n_sites

    @property
    def unit_share(self) -> float:
        """Share resolution 1 / M."""
        return 1.0 / self.total_units


def site_weight(m: int, b: float, log_scale: float = 0.0) -> float:
    """Weight m**b, shifted by exp(-log_scale) when a shift is active.

    Small integer exponents take exact arithmetic paths; the general case
    goes through exp(b*log m) which is what the compiled kernel does too.
    """
    if m < 1:
        raise ValueError("counts are at least 1")
    if log_scale == 0.0:
        if b == 2.0:
            return float(m) * float(m)
        if b == 1.0:
            return float(m)
        if b == 0.0:
            return 1.0
        if b == 3.0:
            return float(m) * float(m) * float(m)
        return math.exp(b * math.log(m))
    return math.exp(b * math.log(m) - log_scale)


def log_weight_sum(counts: np.ndarray, b: float) -> float:
    """log S computed stably (logsumexp over b*log m)."""
    logw = b * np.log(counts.astype(np.float64))
    mx = float(np.max(logw))
    return mx + math.log(float(np.sum(np.exp(logw - mx))))


class Configuration:
    """Counts of all sites plus the cached weight sum S.

    S is updated incrementally on each move and recomputed in full every
    REFRESH_INTERVAL moves.  When b*log(m) exceeds LOG_WEIGHT_THRESHOLD the
    cache switches to scaled weights exp(b*log m - log_scale); rates remain
    well-defined through :func:`transfer_rate` even if S itself overflows.
    """

    __slots__ = ("params", "counts", "_weight_sum", "_log_scale", "_moves_since_refresh")

    def __init__(self, params: ModelParams, counts):
        counts = np.asarray(counts, dtype=np.int64).copy()
        if counts.shape != (params.n_sites,):
            raise ValueError("counts must have one entry per site")
        if counts.min() < 1:
            raise ValueError("every site holds at least one unit")
        if int(counts.sum()) != params.total_units:
            raise ValueError("counts must sum to the total unit count")
        self.params = params
        self.counts = counts
        self._log_scale = 0.0
        self._moves_since_refresh = 0
        self._refresh_weight_sum()

    def _refresh_weight_sum(self):
        b = self.params.exponent
        max_log = b * math.log(float(self.counts.max())) if b > 0 else 0.0
        self._log_scale = max_log - 100.0 if max_log > LOG_WEIGHT_THRESHOLD else 0.0
        if self._log_scale == 0.0 and b in (0.0, 1.0, 2.0, 3.0):
            c = self.counts.astype(np.float64)
            if b == 0.0:
                s = float(len(c))
            elif b == 1.0:
                s = float(np.sum(c))
            elif b == 2.0:
                s = float(np.sum(c * c))
            else:
                s = float(np.sum(c * c * c))
        else:
            logw = b * np.log(self.counts.astype(np.float64))
            s = float(np.sum(np.exp(logw - self._log_scale)))
        self._weight_sum = s
        self._moves_since_refresh = 0

    @property
    def cached_weight_sum(self) -> float:
        """S = sum m**b (may overflow to inf for extreme exponents; see log_weight_sum)."""
        return self._weight_sum * math.exp(self._log_scale)

    @property
    def log_weight_sum(self) -> float:
        return math.log(self._weight_sum) + self._log_scale

    def scaled_weight(self, site: int) -> float:
        return site_weight(int(self.counts[site]), self.params.exponent, self._log_scale)

    def apply_move(self, source: int, dest: int):
        """Move one unit source -> dest, updating S incrementally."""
        if source == dest:
            raise ValueError("source and destination must differ")
        m_s = int(self.counts[source])
        m_d = int(self.counts[dest])
        if m_s < 2:
            raise ValueError("source site cannot be emptied")
        b = self.params.exponent
        ls = self._log_scale
        delta = (
            site_weight(m_s - 1, b, ls)
            - site_weight(m_s, b, ls)
            + site_weight(m_d + 1, b, ls)
            - site_weight(m_d, b, ls)
        )
        self.counts[source] = m_s - 1
        self.counts[dest] = m_d + 1
        self._weight_sum += delta
        self._moves_since_refresh += 1
        new_max_log = b * math.log(float(self.counts[dest])) if b > 0 else 0.0
        if self._moves_since_refresh >= REFRESH_INTERVAL or new_max_log - ls > LOG_WEIGHT_THRESHOLD:
            self._refresh_weight_sum()

    def second_moment(self) -> float:
        """Mean squared share <A^2> = sum m^2 / (N M^2)."""
        c = self.counts.astype(np.float64)
        p = self.params
        return float(np.sum(c * c)) / (p.n_sites * float(p.total_units) ** 2)

    def copy(self) -> "Configuration":
        return Configuration(self.params, self.counts)


def transfer_rate(config: Configuration, source: int, dest: int) -> float:
    """Rate u_pq = m_p**b m_q**b / S of moving one unit source -> dest."""
    if source == dest:
        raise ValueError("source and destination must differ")
    counts = config.counts
    if counts[source] < 2:
        return 0.0
    b = config.params.exponent
    ls = config._log_scale
    w_s = site_weight(int(counts[source]), b, ls)
    w_d = site_weight(int(counts[dest]), b, ls)
    return w_s * w_d / config._weight_sum


def total_exit_rate(config: Configuration) -> float:
    """Total event rate sum_{p != q} u_pq of the current configuration."""
    b = config.params.exponent
    ls = config._log_scale
    w = np.array([site_weight(int(m), b, ls) for m in config.counts])
    s = float(w.sum())
    movable = config.counts >= 2
    # sum over ordered pairs with movable source: w_p (S - w_p) / S
    return float(np.sum(w[movable] * (s - w[movable]))) / config._weight_sum


@dataclass(frozen=True)
class ShareVector:
    """Shares A_p summing to one, all strictly positive."""

    shares: np.ndarray
    label: object = None

    def __post_init__(self):
        a = np.asarray(self.shares, dtype=np.float64)
        object.__setattr__(self, "shares", a)
        if a.ndim != 1 or len(a) < 1:
            raise ValueError("shares must be a non-empty vector")
        if np.any(a <= 0):
            raise ValueError("shares must be strictly positive")
        if abs(float(a.sum()) - 1.0) > 1e-12:
            raise ValueError("shares must sum to one within 1e-12")

    @classmethod
    def from_values(cls, values, label=None) -> "ShareVector":
        """Normalize raw positive values to shares (use for data within ~1e-9 of 1)."""
        v = np.asarray(values, dtype=np.float64)
        total = float(v.sum())
        if total <= 0:
            raise ValueError("values must have positive total")
        return cls(v / total, label=label)

    def __len__(self) -> int:
        return len(self.shares)


def shares_of(config: Configuration, label=None) -> ShareVector:
    """Current share vector A_p = m_p / M."""
    m = float(config.params.total_units)
    return ShareVector.from_values(config.counts / m, label=label)


def discretize_shares(shares, total_units: int) -> np.ndarray:
    """Integer counts approximating ``shares * total_units``.

    Largest-remainder rounding (ties broken by lower index), then a repair
    pass takes units from the largest counts so that every site keeps at
    least one unit.  Rounding a vector that is exactly m/M returns m.
    """
    if isinstance(shares, ShareVector):
        a = shares.shares
    else:
        a = np.asarray(shares, dtype=np.float64)
        if a.ndim != 1 or np.any(a <= 0):
            raise ValueError("shares must be a strictly positive vector")
    n = len(a)
    if total_units < n:
        raise ValueError("need at least one unit per site")
    target = a / float(a.sum()) * total_units
    counts = np.floor(target).astype(np.int64)
    remainder = target - counts
    deficit = int(total_units - counts.sum())
    if deficit > 0:
        order = np.argsort(-remainder, kind="stable")
        counts[order[:deficit]] += 1
    elif deficit < 0:
        order = np.argsort(remainder, kind="stable")
        for idx in order:
            if deficit == 0:
                break
            if counts[idx] >= 2:
                counts[idx] -= 1
                deficit += 1
    while True:
        empty = np.flatnonzero(counts == 0)
        if len(empty) == 0:
            break
        donor = int(np.argmax(counts))
        if counts[donor] < 2:
            raise ValueError("cannot give every site a unit")
        counts[donor] -= 1
        counts[empty[0]] += 1
    return counts
