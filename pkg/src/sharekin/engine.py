"""Event-driven simulation of the transfer dynamics.

Time is measured two ways: microscopic model time t (rates of order S) and
rescaled time t~ = t with unit transfer exponent scaling absorbed; output
grids use the step index tau = t~ / delta_t_tilde, where delta_t_tilde is the
calibrated duration of one observation period (one year of data).  The
default delta_t_tilde is pi c^2 / 4 at c = 0.1, the value implied by the
measured fluctuation amplitude; 0.01 is a common rounded alternative and can
be set in SimConfig.

Replica k of an ensemble runs on the independent stream derive_seed(
base_seed, k); see rng.py for the derivation formula.  Trajectories are
bit-reproducible for a given (config, replica_id) and invariant to checkpoint
placement, because the pending event time is carried across segments instead
of being redrawn.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernel
from .errors import CapacityError, DataError
from .fenwick import WeightIndex
from .model import (
    Configuration,
    ModelParams,
    ShareVector,
    discretize_shares,
    site_weight,
)
from .rng import Xoshiro256pp, derive_seed, xoshiro_state

# pi c^2 / 4 at c = 0.1: duration of one observation period in rescaled time
DELTA_T_TILDE_DEFAULT = math.pi * 0.1 * 0.1 / 4.0

_MAX_DWELL_STATES = 1 << 26


def uniform_counts(n_sites: int, total_units: int) -> np.ndarray:
    """Units spread as evenly as integers allow (first M mod N sites get one extra)."""
    base, extra = divmod(total_units, n_sites)
    counts = np.full(n_sites, base, dtype=np.int64)
    counts[:extra] += 1
    return counts


@dataclass(frozen=True)
class SimConfig:
    """Run description for one ensemble.

    init is "uniform", a share vector / array of shares, or a path to a panel
    CSV whose first year provides the starting shares.  total_units defaults
    to round(density * n_sites).
    """

    n_sites: int
    density: float
    exponent: float = 2.0
    delta_t_tilde: float = DELTA_T_TILDE_DEFAULT
    max_tau: float = 100.0
    sample_taus: Optional[Sequence[float]] = None
    snapshot_taus: Optional[Sequence[float]] = None
    replicas: int = 1
    base_seed: int = 0
    init: object = "uniform"
    total_units: Optional[int] = None

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.delta_t_tilde <= 0:
            raise ValueError("delta_t_tilde must be positive")
        if self.max_tau < 0:
            raise ValueError("max_tau must be non-negative")
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")
        if self.units < self.n_sites:
            raise ValueError("need at least one unit per site")

    @property
    def units(self) -> int:
        return self.total_units if self.total_units is not None else round(self.density * self.n_sites)

    def params(self) -> ModelParams:
        return ModelParams(self.n_sites, self.units, self.exponent)

    def resolved_sample_taus(self) -> np.ndarray:
        if self.sample_taus is not None:
            taus = np.unique(np.asarray(self.sample_taus, dtype=np.float64))
        elif self.max_tau <= 512:
            taus = np.arange(0.0, math.floor(self.max_tau) + 1.0)
        else:
            taus = np.unique(np.round(np.linspace(0.0, self.max_tau, 513)))
        if len(taus) and (taus[0] < 0 or taus[-1] > self.max_tau):
            raise ValueError("sample taus must lie in [0, max_tau]")
        return taus

    def resolved_snapshot_taus(self) -> np.ndarray:
        if self.snapshot_taus is None:
            return np.empty(0)
        taus = np.unique(np.asarray(self.snapshot_taus, dtype=np.float64))
        if len(taus) and (taus[0] < 0 or taus[-1] > self.max_tau):
            raise ValueError("snapshot taus must lie in [0, max_tau]")
        return taus


class TrajectorySample(NamedTuple):
    tau: float
    second_moment: float
    counts: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    """Output of one replica: second moments on the sample grid plus snapshots."""

    replica_id: int
    taus: np.ndarray
    second_moments: np.ndarray
    snapshots: dict
    final_counts: np.ndarray
    n_proposals: int
    n_accepted: int

    def sample(self, tau: float) -> TrajectorySample:
        idx = np.flatnonzero(np.isclose(self.taus, tau))
        if len(idx) == 0:
            raise DataError(f"tau {tau} is not on the sample grid")
        i = int(idx[0])
        return TrajectorySample(float(self.taus[i]), float(self.second_moments[i]),
                                self.snapshots.get(float(self.taus[i])))


@dataclass
class EnsembleResult:
    config: SimConfig
    trajectories: list

    def second_moment_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """(taus, matrix[replica, tau]) on the common sample grid."""
        taus = self.trajectories[0].taus
        mat = np.vstack([t.second_moments for t in self.trajectories])
        return taus, mat

    def mean_second_moment(self) -> tuple[np.ndarray, np.ndarray]:
        taus, mat = self.second_moment_matrix()
        return taus, mat.mean(axis=0)

    def counts_at(self, tau: float) -> np.ndarray:
        """Stacked snapshot counts, shape (replicas, n_sites)."""
        key = float(tau)
        rows = []
        for t in self.trajectories:
            if key not in t.snapshots:
                raise DataError(f"no snapshot recorded at tau {tau}")
            rows.append(t.snapshots[key])
        return np.vstack(rows).astype(np.int64)

    def shares_at(self, tau: float) -> np.ndarray:
        return self.counts_at(tau) / float(self.config.units)


class StepResult(NamedTuple):
    elapsed: float
    source: int
    dest: int
    accepted: bool


def build_weight_index(config: Configuration) -> WeightIndex:
    """Sampling index over current site weights (shares the kernel's layout)."""
    b = config.params.exponent
    ls = config._log_scale
    return WeightIndex([site_weight(int(m), b, ls) for m in config.counts])


def step(config: Configuration, index: WeightIndex, rng: Xoshiro256pp) -> StepResult:
    """One proposal of the thinned event process (reference path).

    Draws the waiting time at the current total rate, then source and
    destination each with probability proportional to weight.  A proposal
    with source == destination or a single-unit source is rejected; time
    still advances.  Accepted moves update config and index in the same
    operation order as the compiled kernel, so a step loop reproduces the
    kernel trajectory bit for bit.
    """
    elapsed = rng.exponential() / index.total
    src = index.find(rng.uniform() * index.total)
    dst = index.find(rng.uniform() * index.total)
    if src == dst or config.counts[src] < 2:
        return StepResult(elapsed, src, dst, False)
    b = config.params.exponent
    ls = config._log_scale
    m_s = int(config.counts[src])
    m_d = int(config.counts[dst])
    index.update(src, site_weight(m_s - 1, b, ls) - site_weight(m_s, b, ls))
    index.update(dst, site_weight(m_d + 1, b, ls) - site_weight(m_d, b, ls))
    config.apply_move(src, dst)
    return StepResult(elapsed, src, dst, True)


def initial_counts(config: SimConfig) -> np.ndarray:
    """Starting counts resolved from config.init."""
    init = config.init
    m = config.units
    if isinstance(init, str) and init == "uniform":
        return uniform_counts(config.n_sites, m)
    if isinstance(init, ShareVector):
        shares = init.shares
    elif isinstance(init, (str, Path)):
        from .empirics import read_panel_csv

        shares = read_panel_csv(init).first_year_shares().shares
    else:
        shares = np.asarray(init, dtype=np.float64)
    if len(shares) != config.n_sites:
        raise ValueError("initial shares must have one entry per site")
    return discretize_shares(shares, m)


class _ReplicaState:
    """Kernel-owned arrays for one replica."""

    def __init__(self, params: ModelParams, counts: np.ndarray, seed: int):
        self.params = params
        self.counts = counts.astype(np.int64).copy()
        self.tree = np.zeros(params.n_sites + 1)
        self.rng_state = np.array(xoshiro_state(seed), dtype=np.uint64)
        self.fscal = np.zeros(_kernel.N_FSCAL)
        self.iscal = np.zeros(_kernel.N_ISCAL, dtype=np.int64)
        self.top_bit = 1 << params.n_sites.bit_length()
        b = params.exponent
        max_log = b * math.log(float(self.counts.max())) if b > 0 else 0.0
        log_scale = max_log - 100.0 if max_log > 300.0 else 0.0
        self.fscal[_kernel.LOG_SCALE] = log_scale
        self.fscal[_kernel.TOTAL] = _kernel._tree_build(self.tree, self.counts, b, log_scale)
        self.fscal[_kernel.T_NEXT] = -1.0  # first waiting time drawn in-kernel
        c = self.counts
        self.iscal[_kernel.SUM_M2] = int(np.sum(c * c))
        self.iscal[_kernel.CMAX] = int(c.max())

    def advance(self, t_target: float, max_accepted: int = 0, max_proposals: int = 0,
                dwell: Optional[np.ndarray] = None, strides: Optional[np.ndarray] = None) -> int:
        if dwell is None:
            dwell = np.empty(0)
            strides = np.zeros(self.params.n_sites, dtype=np.int64)
        b = self.params.exponent
        while True:
            status = _kernel.advance(
                self.counts, self.tree, self.rng_state, self.fscal, self.iscal,
                float(b), self.top_bit, float(t_target),
                int(max_accepted), int(max_proposals), dwell, strides)
            if status != _kernel.NEEDS_RESCALE:
                return status
            # shift the weight scale and rebuild; event times are absolute,
            # so nothing else changes
            log_scale = b * math.log(float(self.counts.max())) - 100.0
            self.fscal[_kernel.LOG_SCALE] = log_scale
            self.fscal[_kernel.TOTAL] = _kernel._tree_build(self.tree, self.counts, b, log_scale)
            self.iscal[_kernel.CMAX] = int(self.counts.max())

    def second_moment(self) -> float:
        p = self.params
        return int(self.iscal[_kernel.SUM_M2]) / (p.n_sites * float(p.total_units) ** 2)


def run_replica(config: SimConfig, replica_id: int) -> Trajectory:
    """Run one replica to max_tau, recording the configured samples."""
    params = config.params()
    counts0 = initial_counts(config)
    state = _ReplicaState(params, counts0, derive_seed(config.base_seed, replica_id))

    sample_taus = config.resolved_sample_taus()
    snapshot_taus = config.resolved_snapshot_taus()
    checkpoints = np.unique(np.concatenate([sample_taus, snapshot_taus, [config.max_tau]]))
    snap_set = set(snapshot_taus.tolist())
    sample_set = set(sample_taus.tolist())

    snap_dtype = np.int32 if params.total_units < 2**31 else np.int64
    taus, moments = [], []
    snapshots = {}
    for tau in checkpoints:
        state.advance(tau * config.delta_t_tilde)
        if tau in sample_set:
            taus.append(tau)
            moments.append(state.second_moment())
        if tau in snap_set:
            snapshots[float(tau)] = state.counts.astype(snap_dtype)
    return Trajectory(
        replica_id=replica_id,
        taus=np.asarray(taus),
        second_moments=np.asarray(moments),
        snapshots=snapshots,
        final_counts=state.counts.copy(),
        n_proposals=int(state.iscal[_kernel.PROPOSALS]),
        n_accepted=int(state.iscal[_kernel.ACCEPTED]),
    )


def run_ensemble(config: SimConfig, threads: int = 1) -> EnsembleResult:
    """Run all replicas; the kernel releases the GIL, so threads scale."""
    ids = range(config.replicas)
    if threads <= 1 or config.replicas == 1:
        trajectories = [run_replica(config, k) for k in ids]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajectories = list(pool.map(lambda k: run_replica(config, k), ids))
    return EnsembleResult(config=config, trajectories=trajectories)


def dwell_state_distribution(params: ModelParams, *, base_seed: int, replica_id: int = 0,
                             min_accepted: int, init_counts=None) -> dict:
    """Time fraction spent in each configuration over a long run.

    Tracks residence time per composition (counts tuple) until at least
    min_accepted transfers have happened; the composition space
    (M-N+1)**(N-1) must stay small.  Returns {composition: time fraction}.
    """
    n, m = params.n_sites, params.total_units
    radix = m - n + 1
    n_states = radix ** (n - 1)
    if n_states > _MAX_DWELL_STATES:
        raise CapacityError("composition space too large for dwell tracking")
    strides = np.zeros(n, dtype=np.int64)
    strides[: n - 1] = radix ** np.arange(n - 1)
    dwell = np.zeros(n_states)

    counts0 = uniform_counts(n, m) if init_counts is None else np.asarray(init_counts, dtype=np.int64)
    state = _ReplicaState(params, counts0, derive_seed(base_seed, replica_id))
    state.advance(np.inf, max_accepted=min_accepted, dwell=dwell, strides=strides)

    total_time = dwell.sum()
    out = {}
    for key in np.flatnonzero(dwell):
        digits = []
        rest = int(key)
        for _ in range(n - 1):
            digits.append(rest % radix + 1)
            rest //= radix
        last = m - sum(digits)
        out[tuple(digits) + (last,)] = dwell[key] / total_time
    return out


@dataclass(frozen=True)
class Histogram:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    density: np.ndarray
    n_samples: int


def log_bin_edges(lo: float, hi: float, per_decade: int = 10) -> np.ndarray:
    """Logarithmic bin edges aligned to the decade grid."""
    if not (0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    i0 = math.floor(math.log10(lo) * per_decade)
    i1 = math.ceil(math.log10(hi) * per_decade)
    return 10.0 ** (np.arange(i0, i1 + 1) / per_decade)


def share_histogram(ensemble: EnsembleResult, tau: float, bins_per_decade: int = 10) -> Histogram:
    """Probability density of shares pooled over replicas at one snapshot."""
    shares = ensemble.shares_at(tau).ravel()
    edges = log_bin_edges(shares.min(), shares.max() * (1 + 1e-12), bins_per_decade)
    hist, _ = np.histogram(shares, bins=edges)
    width = np.diff(edges)
    density = hist / (len(shares) * width)
    return Histogram(edges[:-1], edges[1:], density, len(shares))


def simulated_growth_rates(ensemble: EnsembleResult, n_steps: Optional[int] = None):
    """Annual log10 growth rates from integer-tau snapshots.

    Returns (rates, taus): rates has shape (replicas, n_sites, T) with
    rates[k, p, t] = log10 of the share ratio between tau = t+1 and t.
    """
    traj0 = ensemble.trajectories[0]
    taus = sorted(t for t in traj0.snapshots if abs(t - round(t)) < 1e-9)
    ints = {int(round(t)) for t in taus}
    run_len = 0
    while run_len in ints:
        run_len += 1
    if n_steps is not None:
        if run_len < n_steps + 1:
            raise DataError("not enough consecutive integer snapshots")
        run_len = n_steps + 1
    if run_len < 2:
        raise DataError("need snapshots at consecutive integer taus starting at 0")
    stack = np.stack(
        [np.vstack([t.snapshots[float(i)] for i in range(run_len)]) for t in ensemble.trajectories]
    ).astype(np.float64)  # (replicas, T+1, n_sites)
    rates = np.log10(stack[:, 1:, :] / stack[:, :-1, :])
    return np.swapaxes(rates, 1, 2), np.arange(run_len)


def occupancy_profile(ensemble: EnsembleResult, taus: Sequence[float]):
    """Site-count distribution pooled over snapshots (a simulated profile)."""
    from .stationary import StationaryProfile

    params = ensemble.config.params()
    top = params.total_units - params.n_sites + 1
    freq = np.zeros(top + 1)
    n_samples = 0
    for tau in taus:
        counts = ensemble.counts_at(tau)
        freq += np.bincount(counts.ravel(), minlength=top + 1)[: top + 1]
        n_samples += counts.size
    m = np.arange(1, top + 1)
    return StationaryProfile(
        m=m,
        p=freq[1:] / n_samples,
        provenance="simulated",
        n_sites=params.n_sites,
        total_units=params.total_units,
        exponent=params.exponent,
        metadata={"taus": list(taus), "n_samples": n_samples},
    )


def write_trajectories_csv(ensemble: EnsembleResult, path):
    """tau,replica,second_moment rows, replica-major."""
    with open(path, "w") as fh:
        fh.write("tau,replica,second_moment\n")
        for traj in ensemble.trajectories:
            for tau, sm in zip(traj.taus, traj.second_moments):
                fh.write(f"{tau:.10g},{traj.replica_id},{sm:.12e}\n")


def write_snapshot_csv(trajectory: Trajectory, path):
    """tau,site,count rows for one replica."""
    with open(path, "w") as fh:
        fh.write("tau,site,count\n")
        for tau in sorted(trajectory.snapshots):
            for site, count in enumerate(trajectory.snapshots[tau]):
                fh.write(f"{tau:.10g},{site},{int(count)}\n")


def write_histogram_csv(hist: Histogram, path):
    """bin_lo,bin_hi,density rows."""
    with open(path, "w") as fh:
        fh.write("bin_lo,bin_hi,density\n")
        for lo, hi, d in zip(hist.bin_lo, hist.bin_hi, hist.density):
            fh.write(f"{lo:.12e},{hi:.12e},{d:.12e}\n")
