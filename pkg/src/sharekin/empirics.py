"""Share panels and the statistics that calibrate the transfer model.

The pipeline here turns raw trade-flow records (year, exporter, importer,
product, value) into per-year product shares, measures how those shares
fluctuate, and maps the measured fluctuation amplitude onto the model's
time step and particle density.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .engine import SimConfig, log_bin_edges, run_replica
from .errors import DataError
from .model import ShareVector

logger = logging.getLogger(__name__)

TRADEFLOW_HEADER = ("year", "exporter", "importer", "sitc4", "value")
PANEL_HEADER = ("year", "product", "share")

# Mean absolute changes are fitted only above this share; smaller shares sit
# at the resolution floor of a discretized panel and flatten the scaling.
FIT_CUTOFF_DEFAULT = 1e-5
BINS_PER_DECADE = 10
MIN_OCCUPIED_BINS = 5


@dataclass(frozen=True)
class TradeFlowRecord:
    """One reported flow: value of product_code shipped exporter -> importer."""

    year: int
    exporter: str
    importer: str
    product_code: str
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise DataError(f"negative trade value {self.value} in year {self.year}")


@dataclass(frozen=True)
class SharePanel:
    """Product shares by year: shares[t, p] is product p's share in year t.

    Columns sum to one within 1e-9.  Zeros are allowed at ingestion (a
    product can be missing from a year); filter_consistent_panel produces
    the strictly positive panel the downstream statistics require.
    """

    years: tuple
    products: tuple
    shares: np.ndarray
    provenance: str = "ingested"

    def __post_init__(self):
        years = tuple(int(y) for y in self.years)
        products = tuple(str(p) for p in self.products)
        shares = np.asarray(self.shares, dtype=np.float64)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "products", products)
        object.__setattr__(self, "shares", shares)
        if shares.shape != (len(years), len(products)):
            raise DataError("share matrix shape does not match years x products")
        if len(years) < 1 or len(products) < 1:
            raise DataError("panel needs at least one year and one product")
        if any(b <= a for a, b in zip(years, years[1:])):
            raise DataError("years must be strictly increasing")
        if np.any(shares < 0) or not np.all(np.isfinite(shares)):
            raise DataError("shares must be finite and non-negative")
        colsums = shares.sum(axis=1)
        if np.any(np.abs(colsums - 1.0) > 1e-9):
            worst = int(np.argmax(np.abs(colsums - 1.0)))
            raise DataError(f"shares for year {years[worst]} sum to {colsums[worst]:.12f}, not 1")

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def n_products(self) -> int:
        return len(self.products)

    @property
    def horizon(self) -> int:
        """Number of year-to-year steps."""
        return len(self.years) - 1

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.shares > 0))

    def first_year_shares(self) -> ShareVector:
        if np.any(self.shares[0] <= 0):
            raise DataError("first year contains zero shares; filter the panel first")
        return ShareVector.from_values(self.shares[0], label=self.years[0])


def compute_shares(records: Iterable[TradeFlowRecord]) -> SharePanel:
    """Aggregate flows over country pairs and normalize by year totals."""
    by_year: dict = {}
    for rec in records:
        year = by_year.setdefault(int(rec.year), {})
        year[rec.product_code] = year.get(rec.product_code, 0.0) + float(rec.value)
    if not by_year:
        raise DataError("no trade-flow records")
    years = sorted(by_year)
    products = sorted({p for year in by_year.values() for p in year})
    shares = np.zeros((len(years), len(products)))
    col = {p: j for j, p in enumerate(products)}
    for i, y in enumerate(years):
        total = sum(by_year[y].values())
        if total <= 0:
            raise DataError(f"year {y} has zero total trade value")
        for p, v in by_year[y].items():
            shares[i, col[p]] = v / total
    return SharePanel(tuple(years), tuple(products), shares, provenance="ingested")


def filter_consistent_panel(panel: SharePanel) -> tuple[SharePanel, list]:
    """Keep only products with positive share in every year; renormalize.

    Renormalizing per year is the same as recomputing shares from the
    retained raw values, so the result is what ingestion would have
    produced had the dropped products never been reported.
    """
    keep = np.all(panel.shares > 0, axis=0)
    dropped = [p for p, k in zip(panel.products, keep) if not k]
    if dropped:
        logger.info("dropping %d inconsistently reported products: %s",
                    len(dropped), ",".join(dropped[:20]) + ("..." if len(dropped) > 20 else ""))
    if not np.any(keep):
        raise DataError("no product is reported in every year")
    kept = panel.shares[:, keep]
    kept = kept / kept.sum(axis=1, keepdims=True)
    out = SharePanel(panel.years, tuple(p for p, k in zip(panel.products, keep) if k),
                     kept, provenance=panel.provenance)
    return out, dropped


def annual_variations(panel: SharePanel) -> np.ndarray:
    """Year-over-year share changes, shape (years-1, products); rows sum to 0."""
    if panel.n_years < 2:
        raise DataError("need at least two years for annual variations")
    return np.diff(panel.shares, axis=0)


@dataclass(frozen=True)
class ScalingFit:
    """Power-law fit of mean absolute annual change against share level.

    alpha is the log-log slope, c the amplitude |dA| / A averaged
    (geometrically) over the fitted bins; gains and losses are also fitted
    separately.  Sign-conditioned amplitudes run slightly above the pooled
    one because conditioning removes the zero-change outcomes.
    """

    alpha: float
    c: float
    alpha_gain: float
    c_gain: float
    alpha_loss: float
    c_loss: float
    fit_min: float
    fit_max: float
    n_bins: int
    n_points: int


def _binned_fit(levels: np.ndarray, changes: np.ndarray, edges: np.ndarray):
    """Bin |changes| by level, fit log-log slope and mean amplitude ratio."""
    which = np.digitize(levels, edges) - 1
    xs, ys = [], []
    for k in range(len(edges) - 1):
        sel = which == k
        if not np.any(sel):
            continue
        xs.append(levels[sel].mean())
        ys.append(np.abs(changes[sel]).mean())
    xs, ys = np.asarray(xs), np.asarray(ys)
    ok = ys > 0
    xs, ys = xs[ok], ys[ok]
    if len(xs) < MIN_OCCUPIED_BINS:
        raise DataError(f"only {len(xs)} occupied bins; need {MIN_OCCUPIED_BINS}")
    lx, ly = np.log10(xs), np.log10(ys)
    alpha = float(np.polyfit(lx, ly, 1)[0])
    c = float(np.exp(np.mean(np.log(ys / xs))))
    return alpha, c, len(xs)


def fit_fluctuation_scaling(panel: SharePanel,
                            fit_cutoff: float = FIT_CUTOFF_DEFAULT,
                            bins_per_decade: int = BINS_PER_DECADE) -> ScalingFit:
    """Fit <|dA|> against A on log-scale bins, above the resolution cutoff.

    Changes are paired with the starting-year share.  The headline fit
    averages |dA| over all observations in a bin, zero changes included:
    a share is a bounded random walk whose typical displacement includes
    the no-net-change outcomes, and dropping them inflates the small-A
    bins (where sitting still is likely) enough to flatten the slope.
    The gain and loss curves, conditioned on the change's sign, are
    fitted separately as supplementary results.
    """
    deltas = annual_variations(panel)
    levels = panel.shares[:-1].ravel()
    deltas = deltas.ravel()
    sel = levels > fit_cutoff
    if not np.any(sel):
        raise DataError("no share changes above the fit cutoff")
    levels, deltas = levels[sel], deltas[sel]
    edges = log_bin_edges(levels.min(), levels.max() * (1 + 1e-12), bins_per_decade)

    alpha, c, n_bins = _binned_fit(levels, deltas, edges)

    def _side(mask):
        try:
            a, cc, _ = _binned_fit(levels[mask], deltas[mask], edges)
            return a, cc
        except DataError:
            return math.nan, math.nan

    alpha_gain, c_gain = _side(deltas > 0)
    alpha_loss, c_loss = _side(deltas < 0)
    return ScalingFit(alpha=alpha, c=c,
                      alpha_gain=alpha_gain, c_gain=c_gain,
                      alpha_loss=alpha_loss, c_loss=c_loss,
                      fit_min=float(levels.min()), fit_max=float(levels.max()),
                      n_bins=n_bins, n_points=int(len(levels)))


def delta_t_from_c(c: float) -> float:
    """Model time step per year implied by the fluctuation amplitude.

    A share backed by m units takes about 2 m^2 dt elementary +-1 steps
    per year, so the mean absolute annual change is c A with
    c = sqrt(4 dt / pi); inverting gives dt = pi c^2 / 4.
    """
    if not c > 0:
        raise ValueError("amplitude must be positive")
    return math.pi * c * c / 4.0


@dataclass(frozen=True)
class SecondMomentSeries:
    """Per-year mean squared share, with the exclusion mode recorded."""

    years: tuple
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {int(y): float(v) for y, v in zip(self.years, self.values)}

    def __getitem__(self, year) -> float:
        return self.as_dict()[int(year)]


def second_moment_series(panel: SharePanel, exclude: Sequence[str] = (),
                         mode: str = "subtract") -> SecondMomentSeries:
    """Mean squared share per year, optionally excluding listed products.

    mode "subtract" (default) removes the excluded products' terms from the
    sum but keeps the original shares and the full product count, so every
    retained product contributes exactly what it does to the unexcluded
    series.  mode "renormalize" rescales the retained shares to sum to one
    and averages over the retained count.
    """
    excluded = sorted(set(exclude) & set(panel.products))
    keep = np.array([p not in excluded for p in panel.products])
    if mode == "subtract":
        vals = (panel.shares[:, keep] ** 2).sum(axis=1) / panel.n_products
    elif mode == "renormalize":
        sub = panel.shares[:, keep]
        totals = sub.sum(axis=1, keepdims=True)
        if np.any(totals <= 0):
            raise DataError("exclusion removes all mass from some year")
        sub = sub / totals
        vals = (sub ** 2).sum(axis=1) / int(keep.sum())
    else:
        raise ValueError(f"unknown exclusion mode {mode!r}")
    meta = {"mode": mode, "excluded": excluded}
    return SecondMomentSeries(panel.years, vals, meta)


@dataclass(frozen=True)
class LognormalFit:
    mu_ln: float
    sigma_ln: float
    n: int


def fit_lognormal(shares) -> LognormalFit:
    """Maximum-likelihood normal fit to the natural log of the shares."""
    if isinstance(shares, ShareVector):
        a = shares.shares
    else:
        a = np.asarray(shares, dtype=np.float64).ravel()
    if len(a) < 10:
        raise DataError(f"lognormal fit needs at least 10 products, got {len(a)}")
    if np.any(a <= 0):
        raise DataError("lognormal fit requires strictly positive shares")
    ln = np.log(a)
    return LognormalFit(mu_ln=float(ln.mean()), sigma_ln=float(ln.std()), n=len(a))


@dataclass(frozen=True)
class RhoCandidate:
    """One candidate density and where its growth curve meets the data range."""

    rho: float
    tau_i: Optional[float]
    tau_f: Optional[float]
    feasible: bool
    matches_panel: Optional[bool]
    note: str = ""

    @property
    def width(self) -> Optional[float]:
        if self.tau_i is None or self.tau_f is None:
            return None
        return self.tau_f - self.tau_i


@dataclass(frozen=True)
class CalibrationResult:
    """Calibrated time step plus the density candidates and the data series."""

    delta_t_tilde: Optional[float]
    rho_candidates: tuple
    second_moment_series: dict
    panel_years: Optional[float] = None
    width_tolerance: float = 0.25

    def feasible_rhos(self) -> list:
        return [c.rho for c in self.rho_candidates if c.feasible]

    def to_json_dict(self) -> dict:
        return {
            "delta_t_tilde": self.delta_t_tilde,
            "panel_years": self.panel_years,
            "width_tolerance": self.width_tolerance,
            "rho_candidates": [dataclasses.asdict(c) for c in self.rho_candidates],
            "second_moment_series": {str(y): v for y, v in
                                     sorted(self.second_moment_series.items())},
        }


def _first_crossing(taus: np.ndarray, vals: np.ndarray, level: float) -> Optional[float]:
    """First tau where vals reaches level, linearly interpolated; None if never."""
    above = vals >= level
    if not above.any():
        return None
    i = int(np.argmax(above))
    if i == 0:
        return float(taus[0])
    t0, t1 = taus[i - 1], taus[i]
    v0, v1 = vals[i - 1], vals[i]
    if v1 == v0:
        return float(t1)
    return float(t0 + (level - v0) / (v1 - v0) * (t1 - t0))


def _as_curve(obj) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(obj, "mean_second_moment"):
        taus, vals = obj.mean_second_moment()
    else:
        taus, vals = obj
    return np.asarray(taus, dtype=np.float64), np.asarray(vals, dtype=np.float64)


def fit_density(empirical, curves: Mapping, *,
                panel_years: Optional[float] = None,
                width_tolerance: float = 0.25,
                delta_t_tilde: Optional[float] = None) -> CalibrationResult:
    """Locate each density's growth window inside the empirical range.

    empirical maps year -> mean squared share (a SecondMomentSeries works);
    curves maps rho -> ensemble (or (taus, values) pair) giving the
    ensemble-mean squared share against rescaled time.  For each rho the
    curve's entry into and exit from [min, max] of the empirical values
    give tau_i and tau_f; a candidate is feasible when both crossings
    exist, and matches the panel when its window width agrees with
    panel_years within width_tolerance (relative).
    """
    series = empirical.as_dict() if isinstance(empirical, SecondMomentSeries) else dict(empirical)
    if not series:
        raise DataError("empirical series is empty")
    values = np.array(list(series.values()), dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())

    candidates = []
    for rho in sorted(curves):
        taus, vals = _as_curve(curves[rho])
        tau_i = _first_crossing(taus, vals, lo)
        tau_f = _first_crossing(taus, vals, hi)
        note = ""
        if lo == hi:
            feasible, note = False, "degenerate empirical range"
            tau_i = tau_f = None
        elif tau_i is None:
            feasible, note = False, "never enters the empirical range"
            tau_f = None
        elif tau_f is None:
            feasible, note = False, "enters but never leaves the empirical range"
        else:
            feasible = tau_i < tau_f
            if not feasible:
                note = "window collapsed to a point"
                tau_i = tau_f = None
        matches = None
        if feasible and panel_years is not None:
            width = tau_f - tau_i
            matches = abs(width - panel_years) <= width_tolerance * panel_years
        candidates.append(RhoCandidate(rho=float(rho), tau_i=tau_i, tau_f=tau_f,
                                       feasible=feasible, matches_panel=matches, note=note))
    return CalibrationResult(delta_t_tilde=delta_t_tilde,
                             rho_candidates=tuple(candidates),
                             second_moment_series=series,
                             panel_years=panel_years,
                             width_tolerance=width_tolerance)


def synthetic_panel(config: SimConfig, base_year: int = 0) -> SharePanel:
    """One replica's shares at integer taus, presented as a share panel.

    Every site always holds at least one unit, so the panel is strictly
    positive and needs no consistency filter.  Product codes are four-digit
    site indices.
    """
    horizon = int(math.floor(config.max_tau))
    taus = tuple(float(t) for t in range(horizon + 1))
    run_cfg = dataclasses.replace(config, snapshot_taus=taus, sample_taus=(0.0, float(horizon)))
    traj = run_replica(run_cfg, replica_id=0)
    m = float(config.units)
    shares = np.vstack([traj.snapshots[t] for t in taus]) / m
    years = tuple(base_year + int(t) for t in taus)
    products = tuple(f"{i:04d}" for i in range(config.n_sites))
    return SharePanel(years, products, shares, provenance="synthetic")


def read_tradeflow_csv(path) -> list:
    """Parse year,exporter,importer,sitc4,value rows."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRADEFLOW_HEADER:
            raise DataError(f"expected header {','.join(TRADEFLOW_HEADER)} in {path}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                records.append(TradeFlowRecord(year=int(row[0]), exporter=row[1],
                                               importer=row[2], product_code=row[3],
                                               value=float(row[4])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_tradeflow_csv(records: Iterable[TradeFlowRecord], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRADEFLOW_HEADER)
        for rec in records:
            writer.writerow([rec.year, rec.exporter, rec.importer,
                             rec.product_code, f"{rec.value:.12g}"])


def read_panel_csv(path) -> SharePanel:
    """Parse long-form year,product,share rows into a panel."""
    cells: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PANEL_HEADER:
            raise DataError(f"expected header {','.join(PANEL_HEADER)} in {path}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                year, product, share = int(row[0]), row[1], float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if (year, product) in cells:
                raise DataError(f"{path}:{lineno}: duplicate entry for {year},{product}")
            cells[(year, product)] = share
    if not cells:
        raise DataError(f"{path}: no panel rows")
    years = sorted({y for y, _ in cells})
    products = sorted({p for _, p in cells})
    row = {y: i for i, y in enumerate(years)}
    col = {p: j for j, p in enumerate(products)}
    shares = np.zeros((len(years), len(products)))
    for (y, p), v in cells.items():
        shares[row[y], col[p]] = v
    return SharePanel(tuple(years), tuple(products), shares, provenance="ingested")


def write_panel_csv(panel: SharePanel, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("year,product,share\n")
        for i, y in enumerate(panel.years):
            for j, p in enumerate(panel.products):
                fh.write(f"{y},{p},{panel.shares[i, j]:.12e}\n")


def write_calibration_json(result: CalibrationResult, path, scaling: Optional[ScalingFit] = None):
    """Self-describing calibration summary."""
    payload = result.to_json_dict()
    if scaling is not None:
        payload["scaling"] = dataclasses.asdict(scaling)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def convert_public_tradeflows(source_path, out_path):
    """Stub for converting public world-trade compilations to the input CSV.

    Expected mapping from an NBER-UN style archive: the report year to
    `year`; origin and destination country codes to `exporter` and
    `importer`; the 4-digit SITC revision-2 commodity code, zero-padded, to
    `sitc4`; the nominal flow value in thousands of current dollars to
    `value`.  Flows missing a commodity code or carrying the aggregate
    code must be dropped, and re-exports follow the archive's own
    convention.  Bundling or fetching that archive is out of scope, so
    this function only documents the mapping.
    """
    raise NotImplementedError("supply a year,exporter,importer,sitc4,value CSV; "
                              "see the docstring for the expected field mapping")
