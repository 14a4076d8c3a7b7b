"""Compiled event loop for the transfer dynamics.

Proposal thinning: candidate events fire at the total weight rate S = sum w_l,
source and destination are drawn independently with probability w/S each, and
a proposal is accepted only if source != destination and the source holds at
least two units.  Accepted events then occur at exactly w_p w_q / S, the model
rate, while rejected proposals still advance the clock.

All mutable state lives in caller-owned arrays so a replica can be advanced in
segments (checkpoints) without any redraws: the pending event time is carried
in fscal[T_NEXT] across calls, which makes trajectories invariant to where
checkpoints are placed.  The RNG is xoshiro256++ (see rng.py for the seeding
contract); the pure-Python twin in rng.py/engine.py follows the same
operation order, so both paths produce bit-identical trajectories.

Weights use a shifted representation w = exp(b log m - log_scale) when
b log m grows past the overflow guard; the kernel returns NEEDS_RESCALE
before the event that would overflow and the driver rebuilds with a new
shift, so no draws are wasted.
"""

import numpy as np
from numba import njit

U64 = np.uint64
_MASK = U64(0xFFFFFFFFFFFFFFFF)
_U53 = 1.0 / 9007199254740992.0

REBUILD_EVERY = 1 << 20

# fscal slots
T_NEXT, T_LAST, TOTAL, LOG_SCALE = 0, 1, 2, 3
# iscal slots
SUM_M2, PROPOSALS, ACCEPTED, SINCE_REBUILD, CMAX = 0, 1, 2, 3, 4
N_FSCAL, N_ISCAL = 4, 5

# advance() return codes
REACHED_TIME, REACHED_ACCEPTED, NEEDS_RESCALE, REACHED_PROPOSALS = 0, 1, 2, 3


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << k) | (x >> (U64(64) - k))) & _MASK


@njit(cache=True, inline="always")
def _next_u64(s):
    result = (_rotl((s[0] + s[3]) & _MASK, U64(23)) + s[0]) & _MASK
    t = (s[1] << U64(17)) & _MASK
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], U64(45))
    return result


@njit(cache=True, inline="always")
def _uniform(s):
    return np.float64(_next_u64(s) >> U64(11)) * _U53


@njit(cache=True, inline="always")
def _weight(m, b, log_scale):
    if log_scale == 0.0:
        fm = np.float64(m)
        if b == 2.0:
            return fm * fm
        if b == 1.0:
            return fm
        if b == 0.0:
            return 1.0
        if b == 3.0:
            return fm * fm * fm
        return np.exp(b * np.log(fm))
    return np.exp(b * np.log(np.float64(m)) - log_scale)


@njit(cache=True)
def _tree_build(tree, counts, b, log_scale):
    # must mirror WeightIndex.rebuild exactly (same accumulation order)
    n = counts.shape[0]
    for i in range(n + 1):
        tree[i] = 0.0
    total = 0.0
    for i in range(n):
        w = _weight(counts[i], b, log_scale)
        tree[i + 1] = w
        total += w
    for i in range(1, n + 1):
        parent = i + (i & (-i))
        if parent <= n:
            tree[parent] += tree[i]
    return total


@njit(cache=True, inline="always")
def _tree_update(tree, n, index, delta):
    i = index + 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, inline="always")
def _tree_find(tree, n, target, top_bit):
    idx = 0
    bitmask = top_bit
    while bitmask != 0:
        nxt = idx + bitmask
        if nxt <= n and tree[nxt] <= target:
            target -= tree[nxt]
            idx = nxt
        bitmask >>= 1
    if idx >= n:
        idx = n - 1
    return idx


@njit(cache=True, nogil=True)
def advance(counts, tree, rng_state, fscal, iscal, b, top_bit,
            t_target, max_accepted, max_proposals, dwell, strides):
    """Advance one replica until a stop condition; returns the stop code.

    Stops when the pending event time passes t_target (the pending event is
    carried over, not redrawn), when the cumulative accepted count reaches
    max_accepted (> 0 enables), when cumulative proposals reach max_proposals
    (> 0 enables), or when the next event could overflow the weight scale.
    When ``dwell`` is non-empty, residence time is accumulated per state key
    sum_i (counts[i]-1)*strides[i]; strides for ignored sites are zero.
    """
    n = counts.shape[0]
    total = fscal[TOTAL]
    log_scale = fscal[LOG_SCALE]
    t_next = fscal[T_NEXT]
    t_last = fscal[T_LAST]
    sum_m2 = iscal[SUM_M2]
    proposals = iscal[PROPOSALS]
    accepted = iscal[ACCEPTED]
    since_rebuild = iscal[SINCE_REBUILD]
    cmax = iscal[CMAX]
    track_dwell = dwell.shape[0] > 0
    general_b = not (b == 0.0 or b == 1.0 or b == 2.0 or b == 3.0)

    key = 0
    if track_dwell:
        for i in range(n):
            key += (counts[i] - 1) * strides[i]

    if t_next < 0.0:
        # replica start: first waiting time from t = 0
        e = -np.log1p(-_uniform(rng_state))
        if log_scale == 0.0:
            t_next = e / total
        else:
            t_next = np.exp(np.log(e) - log_scale - np.log(total))
        t_last = 0.0

    status = REACHED_TIME
    while True:
        if max_accepted > 0 and accepted >= max_accepted:
            status = REACHED_ACCEPTED
            break
        if max_proposals > 0 and proposals >= max_proposals:
            status = REACHED_PROPOSALS
            break
        if t_next > t_target:
            if track_dwell and t_target > t_last:
                dwell[key] += t_target - t_last
                t_last = t_target
            status = REACHED_TIME
            break
        if general_b or log_scale != 0.0:
            if b * np.log(np.float64(cmax + 1)) - log_scale > 690.0:
                status = NEEDS_RESCALE
                break
        if track_dwell:
            dwell[key] += t_next - t_last
        t_last = t_next
        src = _tree_find(tree, n, _uniform(rng_state) * total, top_bit)
        dst = _tree_find(tree, n, _uniform(rng_state) * total, top_bit)
        proposals += 1
        if src != dst and counts[src] >= 2:
            m_s = counts[src]
            m_d = counts[dst]
            sum_m2 += 2 * (m_d - m_s + 1)
            d_src = _weight(m_s - 1, b, log_scale) - _weight(m_s, b, log_scale)
            d_dst = _weight(m_d + 1, b, log_scale) - _weight(m_d, b, log_scale)
            _tree_update(tree, n, src, d_src)
            total += d_src
            _tree_update(tree, n, dst, d_dst)
            total += d_dst
            counts[src] = m_s - 1
            counts[dst] = m_d + 1
            if m_d + 1 > cmax:
                cmax = m_d + 1
            accepted += 1
            if track_dwell:
                key += strides[dst] - strides[src]
        since_rebuild += 1
        if since_rebuild >= REBUILD_EVERY:
            total = _tree_build(tree, counts, b, log_scale)
            since_rebuild = 0
        e = -np.log1p(-_uniform(rng_state))
        if log_scale == 0.0:
            t_next = t_next + e / total
        else:
            t_next = t_next + np.exp(np.log(e) - log_scale - np.log(total))

    fscal[TOTAL] = total
    fscal[LOG_SCALE] = log_scale
    fscal[T_NEXT] = t_next
    fscal[T_LAST] = t_last
    iscal[SUM_M2] = sum_m2
    iscal[PROPOSALS] = proposals
    iscal[ACCEPTED] = accepted
    iscal[SINCE_REBUILD] = since_rebuild
    iscal[CMAX] = cmax
    return status
