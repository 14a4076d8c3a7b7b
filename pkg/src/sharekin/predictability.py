"""Rank-based scoring of empirical growth rates against model ensembles.

Each product's annual growth rate is ranked inside an ensemble of simulated
growth rates; the centered rank is the excess growth rate R.  If the model
explains a product, its R series looks like an independent uniform sample,
which the unpredictability statistic U tests via the mean absolute
deviation of the sorted series from uniform order statistics.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .empirics import SharePanel
from .engine import EnsembleResult, simulated_growth_rates
from .errors import DataError

logger = logging.getLogger(__name__)

N_SIMS_DEFAULT = 1000
N_MC_MIN = 100_000
FORECAST_RHO_DEFAULT = 400.0


def growth_rates(panel: SharePanel) -> np.ndarray:
    """log10 annual share ratios, shape (products, years-1)."""
    if panel.n_years < 2:
        raise DataError("growth rates need at least two years")
    if not panel.strictly_positive:
        raise DataError("growth rates require strictly positive shares; filter the panel")
    return np.log10(panel.shares[1:] / panel.shares[:-1]).T


def excess_growth(empirical: float, simulated, rng: np.random.Generator) -> float:
    """Centered rank of the empirical value among the simulated ones.

    The empirical value inserted among n simulated values takes rank 1..n+1;
    ties are broken uniformly at random so that under the null the rank is
    exactly uniform on its lattice.  Returns rank/(n+2) - 1/2.
    """
    sims = np.asarray(simulated, dtype=np.float64)
    if sims.size == 0:
        raise ValueError("need at least one simulated growth rate")
    below = int((sims < empirical).sum())
    ties = int((sims == empirical).sum())
    rank = 1 + below + (int(rng.integers(0, ties + 1)) if ties else 0)
    return rank / (sims.size + 2) - 0.5


def unpredictability(series: Sequence[float]) -> float:
    """Mean absolute deviation of the sorted series from uniform order statistics."""
    r = np.sort(np.asarray(series, dtype=np.float64))
    t = len(r)
    if t < 1:
        raise ValueError("need a non-empty series")
    expected = np.arange(1, t + 1) / (t + 1) - 0.5
    return float(np.mean(np.abs(r - expected)))


def _null_u_samples(t: int, n_mc: int, rng: np.random.Generator,
                    batch: int = 1 << 20) -> np.ndarray:
    expected = np.arange(1, t + 1) / (t + 1) - 0.5
    out = np.empty(n_mc)
    done = 0
    rows = max(1, batch // t)
    while done < n_mc:
        k = min(rows, n_mc - done)
        u = rng.random((k, t)) - 0.5
        u.sort(axis=1)
        out[done:done + k] = np.abs(u - expected).mean(axis=1)
        done += k
    return out


def critical_U(t_horizon: int, significance: float, n_mc: int = N_MC_MIN,
               seed: int = 0) -> float:
    """Null quantile of U for independent uniform R series of length t_horizon.

    Monte Carlo with a seeded generator; the (1 - significance) quantile of
    the null U distribution is the rejection threshold.
    """
    if t_horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not 0 < significance < 1:
        raise ValueError("significance must be in (0, 1)")
    if n_mc < N_MC_MIN:
        raise ValueError(f"need at least {N_MC_MIN} Monte Carlo samples")
    rng = np.random.default_rng(seed)
    samples = _null_u_samples(t_horizon, n_mc, rng)
    return float(np.quantile(samples, 1.0 - significance))


@dataclass(frozen=True)
class ProductScore:
    product: str
    U: float
    mean_excess: float
    excess_var: float
    predictable: bool

    @property
    def label(self) -> str:
        return "predictable" if self.predictable else "unpredictable"


@dataclass(frozen=True)
class PrefixRollup:
    prefix: str
    digits: int
    mean_excess: float
    n_predictable: int
    n_unpredictable: int


@dataclass(frozen=True)
class PredictabilityReport:
    scores: tuple
    rollups: tuple
    u_crit: float
    t_horizon: int
    significance: float
    n_mc: int
    n_sims: int
    seed: int
    low_power: bool = False
    excess: Optional[np.ndarray] = None

    @property
    def unpredictable_fraction(self) -> float:
        return sum(not s.predictable for s in self.scores) / len(self.scores)


def _rollups(scores, digits: int) -> list:
    groups: dict = {}
    for s in scores:
        groups.setdefault(s.product[:digits], []).append(s)
    out = []
    for prefix in sorted(groups):
        members = groups[prefix]
        out.append(PrefixRollup(
            prefix=prefix,
            digits=digits,
            mean_excess=float(np.mean([s.mean_excess for s in members])),
            n_predictable=sum(s.predictable for s in members),
            n_unpredictable=sum(not s.predictable for s in members),
        ))
    return out


def build_report(panel: SharePanel, ensemble: EnsembleResult, significance: float = 0.05,
                 *, n_mc: int = N_MC_MIN, seed: int = 0) -> PredictabilityReport:
    """Score every product in the panel against the forecast ensemble.

    The ensemble must have been started from the panel's first year (one
    site per product, in panel order) with snapshots at integer taus
    covering the panel horizon; each replica is a free-running forecast.
    Ranking ties and the null threshold both use the given seed.
    """
    r_emp = growth_rates(panel)
    n_products, t_horizon = r_emp.shape
    if ensemble.config.n_sites != n_products:
        raise ValueError(f"ensemble has {ensemble.config.n_sites} sites for "
                         f"{n_products} products; initialize it from the panel")
    try:
        r_sim, _ = simulated_growth_rates(ensemble, n_steps=t_horizon)
    except DataError as exc:
        raise ValueError(f"ensemble snapshots do not cover the panel horizon: {exc}") from exc
    n_sims = r_sim.shape[0]

    low_power = t_horizon < 2
    if low_power:
        logger.warning("single-step panel: U has very low power at T=1")

    rng = np.random.default_rng(seed)
    excess = np.empty((n_products, t_horizon))
    for p in range(n_products):
        for t in range(t_horizon):
            excess[p, t] = excess_growth(r_emp[p, t], r_sim[:, p, t], rng)

    u_crit = critical_U(t_horizon, significance, n_mc=n_mc, seed=seed)
    scores = []
    for p, product in enumerate(panel.products):
        series = excess[p]
        u = unpredictability(series)
        scores.append(ProductScore(
            product=product,
            U=u,
            mean_excess=float(series.mean()),
            excess_var=float(series.var()),
            predictable=bool(u <= u_crit),
        ))
    rollups = _rollups(scores, 1) + _rollups(scores, 2)
    return PredictabilityReport(scores=tuple(scores), rollups=tuple(rollups),
                                u_crit=u_crit, t_horizon=t_horizon,
                                significance=significance, n_mc=n_mc,
                                n_sims=n_sims, seed=seed,
                                low_power=low_power, excess=excess)


def write_report_csv(report: PredictabilityReport, path):
    """product,U,mean_excess,excess_var,class rows."""
    with open(path, "w") as fh:
        fh.write("product,U,mean_excess,excess_var,class\n")
        for s in report.scores:
            fh.write(f"{s.product},{s.U:.10g},{s.mean_excess:.10g},"
                     f"{s.excess_var:.10g},{s.label}\n")


def write_rollup_csv(report: PredictabilityReport, path):
    """prefix,digits,mean_excess,n_predictable,n_unpredictable rows."""
    with open(path, "w") as fh:
        fh.write("prefix,digits,mean_excess,n_predictable,n_unpredictable\n")
        for r in report.rollups:
            fh.write(f"{r.prefix},{r.digits},{r.mean_excess:.10g},"
                     f"{r.n_predictable},{r.n_unpredictable}\n")


def write_threshold_json(report: PredictabilityReport, path):
    payload = {
        "T": report.t_horizon,
        "significance": report.significance,
        "n_mc": report.n_mc,
        "U_crit": report.u_crit,
        "seed": report.seed,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
