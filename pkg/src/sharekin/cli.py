"""Command-line entry point: simulate | stationary | calibrate | ingest | predict.

Every command writes its artifacts plus a manifest.json into --out.  The
manifest records the command, the fully resolved configuration, the seeds,
sha256 digests of the inputs, and the output file names; nothing in it (or
in any CSV) depends on wall-clock time, so a rerun with the same manifest
inputs produces bit-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import empirics, engine, predictability, stationary
from .errors import CapacityError, DataError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CAPACITY = 4

SEED_ENV_VAR = "SHAREKIN_SEED"

# JSON config keys accepted for simulate/predict, with their short aliases.
_CONFIG_ALIASES = {
    "sites": "n_sites",
    "rho": "density",
    "b": "exponent",
    "seed": "base_seed",
}
_CONFIG_FIELDS = {f.name for f in dataclasses.fields(engine.SimConfig)}


class ConfigError(ValueError):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_seed(args, config_seed=None) -> int:
    """--seed beats the config file, which beats SHAREKIN_SEED, which beats 0."""
    if getattr(args, "seed", None) is not None:
        return args.seed
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc
    return 0


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    out = {}
    for key, value in raw.items():
        name = _CONFIG_ALIASES.get(key, key)
        if name not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if name in out:
            raise ConfigError(f"config sets {name!r} twice (alias collision)")
        out[name] = value
    return out


def _sim_config(fields: dict) -> engine.SimConfig:
    try:
        cfg = engine.SimConfig(**fields)
        cfg.resolved_sample_taus()
        cfg.resolved_snapshot_taus()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _build_sim_config(args) -> tuple[engine.SimConfig, bool]:
    """Config file plus flag overrides; returns (config, sample grid explicit?)."""
    fields = {}
    if getattr(args, "config", None):
        fields.update(_load_config_file(args.config))
    for flag, name in (("sites", "n_sites"), ("rho", "density"), ("b", "exponent"),
                       ("max_tau", "max_tau"), ("replicas", "replicas"),
                       ("delta_t", "delta_t_tilde")):
        value = getattr(args, flag, None)
        if value is not None:
            fields[name] = value
    fields["base_seed"] = _resolve_seed(args, fields.get("base_seed"))
    if "n_sites" not in fields or "density" not in fields:
        raise ConfigError("a simulation needs --sites and --rho (or a config file)")
    return _sim_config(fields), "sample_taus" in fields and fields["sample_taus"] is not None


def _config_json(cfg: engine.SimConfig) -> dict:
    d = dataclasses.asdict(cfg)
    init = cfg.init  # asdict recurses into dataclass inits; use the original
    if isinstance(init, str):
        d["init"] = init
    elif hasattr(init, "shares"):
        d["init"] = [float(a) for a in init.shares]
    else:
        d["init"] = [float(a) for a in np.asarray(init).ravel()]
    for key in ("sample_taus", "snapshot_taus"):
        if d[key] is not None:
            d[key] = [float(t) for t in d[key]]
    d["resolved_total_units"] = cfg.units
    return d


def _write_manifest(out_dir: Path, command: str, config: dict, seeds: dict,
                    inputs: dict, outputs: list):
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {str(k): v for k, v in sorted(inputs.items())},
        "outputs": sorted(outputs),
        "tool_version": __version__,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_replica_csv(traj, path):
    with open(path, "w") as fh:
        fh.write("tau,second_moment\n")
        for tau, sm in zip(traj.taus, traj.second_moments):
            fh.write(f"{tau:.10g},{sm:.12e}\n")


def cmd_simulate(args) -> int:
    cfg, explicit_sample = _build_sim_config(args)
    out = _out_dir(args)

    want_hists = explicit_sample or args.histograms
    user_snap = set(map(float, cfg.resolved_snapshot_taus()))
    run_cfg = cfg
    if want_hists:
        # histograms need counts at the sample grid, so snapshot there too
        merged = sorted(user_snap | set(map(float, cfg.resolved_sample_taus())))
        run_cfg = dataclasses.replace(cfg, snapshot_taus=tuple(merged))
    ensemble = engine.run_ensemble(run_cfg, threads=args.threads)

    outputs = []
    for traj in ensemble.trajectories:
        name = f"trajectory_{traj.replica_id:03d}.csv"
        _write_replica_csv(traj, out / name)
        outputs.append(name)
    if want_hists:
        for tau in cfg.resolved_sample_taus():
            hist = engine.share_histogram(ensemble, float(tau))
            name = f"histogram_tau_{tau:g}.csv"
            engine.write_histogram_csv(hist, out / name)
            outputs.append(name)
    if user_snap:
        for traj in ensemble.trajectories:
            kept = {t: c for t, c in traj.snapshots.items() if t in user_snap}
            name = f"snapshot_{traj.replica_id:03d}.csv"
            engine.write_snapshot_csv(dataclasses.replace(traj, snapshots=kept), out / name)
            outputs.append(name)

    inputs = {args.config: _sha256(args.config)} if args.config else {}
    _write_manifest(out, "simulate", _config_json(cfg),
                    {"base_seed": cfg.base_seed,
                     "replica_streams": list(range(cfg.replicas))},
                    inputs, outputs)
    print(f"simulate: {cfg.replicas} replica(s), N={cfg.n_sites}, M={cfg.units}, "
          f"b={cfg.exponent:g}, max_tau={cfg.max_tau:g} -> {out}")
    return EXIT_OK


def cmd_stationary(args) -> int:
    n = args.sites
    b = args.b if args.b is not None else 2.0
    units = args.units if args.units is not None else round(args.rho * n)
    rho = units / n
    out = _out_dir(args)

    if args.mode == "dp":
        profile = stationary.exact_site_distribution(n, units, b)
    elif args.mode == "ctmc":
        profile = stationary.exact_ctmc_stationary(n, units, b)
    else:
        if b != 2.0:
            raise ConfigError("the asymptotic profile is available for b=2 only")
        profile = stationary.asymptotic_site_distribution(n, rho, total_units=units)
    stationary.write_profile_csv(profile, out / "profile.csv")

    point = stationary.PhasePoint(exponent=b, density=rho, n_sites=n)
    stationary.write_phase_json(point, out / "phase.json")
    outputs = ["profile.csv", "phase.json"]

    _write_manifest(out, "stationary",
                    {"n_sites": n, "total_units": units, "rho": rho, "b": b,
                     "mode": args.mode},
                    {}, {}, outputs)
    phase = stationary.classify_phase(point)
    print(f"stationary: N={n}, M={units}, b={b:g}, mode={args.mode}, "
          f"phase={phase.value} -> {out}")
    return EXIT_OK


def _load_ensemble_curves(ensembles_dir: Path) -> tuple[dict, dict]:
    """Mean squared-share curves from simulate output directories.

    Scans the directory itself and its immediate subdirectories for
    simulate manifests, reads each run's density, and averages that run's
    trajectory files over replicas.  Returns (curves, manifest digests).
    """
    curves, digests = {}, {}
    candidates = [ensembles_dir, *sorted(p for p in ensembles_dir.iterdir() if p.is_dir())]
    for run_dir in candidates:
        manifest_path = run_dir / "manifest.json"
        if not manifest_path.is_file():
            continue
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        if manifest.get("command") != "simulate":
            continue
        rho = float(manifest["config"]["density"])
        taus = None
        rows = []
        for name in manifest["outputs"]:
            if not name.startswith("trajectory_"):
                continue
            t, sm = [], []
            with open(run_dir / name) as fh:
                next(fh)
                for line in fh:
                    a, c = line.split(",")
                    t.append(float(a))
                    sm.append(float(c))
            if taus is None:
                taus = t
            elif t != taus:
                raise DataError(f"{run_dir}: replicas sample different tau grids")
            rows.append(sm)
        if not rows:
            raise DataError(f"{run_dir}: manifest lists no trajectory files")
        if rho in curves:
            raise DataError(f"two runs share density rho={rho:g}; keep one per directory")
        curves[rho] = (np.asarray(taus), np.asarray(rows).mean(axis=0))
        digests[str(manifest_path)] = _sha256(manifest_path)
    if not curves:
        raise DataError(f"no simulate runs found under {ensembles_dir}")
    return curves, digests


def cmd_calibrate(args) -> int:
    panel = empirics.read_panel_csv(args.panel)
    panel, dropped = empirics.filter_consistent_panel(panel)
    out = _out_dir(args)

    scaling = empirics.fit_fluctuation_scaling(panel)
    delta_t = empirics.delta_t_from_c(scaling.c)
    exclude = tuple(args.exclude.split(",")) if args.exclude else ()
    series = empirics.second_moment_series(panel, exclude=exclude)
    panel_years = float(panel.years[-1] - panel.years[0])

    inputs = {args.panel: _sha256(args.panel)}
    if args.ensembles:
        curves, digests = _load_ensemble_curves(Path(args.ensembles))
        inputs.update(digests)
        result = empirics.fit_density(series, curves,
                                      panel_years=panel_years,
                                      width_tolerance=args.width_tolerance,
                                      delta_t_tilde=delta_t)
    else:
        result = empirics.CalibrationResult(
            delta_t_tilde=delta_t, rho_candidates=(),
            second_moment_series=series.as_dict(),
            panel_years=panel_years,
            width_tolerance=args.width_tolerance)

    empirics.write_calibration_json(result, out / "calibration.json", scaling=scaling)
    _write_manifest(out, "calibrate",
                    {"panel": str(args.panel), "ensembles": str(args.ensembles or ""),
                     "exclude": sorted(exclude), "width_tolerance": args.width_tolerance,
                     "dropped_products": dropped},
                    {}, inputs, ["calibration.json"])
    feasible = result.feasible_rhos()
    print(f"calibrate: c={scaling.c:.4f}, alpha={scaling.alpha:.3f}, "
          f"delta_t_tilde={delta_t:.6f}, feasible rho: "
          f"{', '.join(f'{r:g}' for r in feasible) if feasible else 'none'} -> {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    records = empirics.read_tradeflow_csv(args.tradeflows)
    panel = empirics.compute_shares(records)
    panel, dropped = empirics.filter_consistent_panel(panel)
    out = _out_dir(args)
    empirics.write_panel_csv(panel, out / "panel.csv")
    with open(out / "dropped.csv", "w") as fh:
        fh.write("product\n")
        for code in dropped:
            fh.write(f"{code}\n")
    _write_manifest(out, "ingest",
                    {"tradeflows": str(args.tradeflows)},
                    {}, {args.tradeflows: _sha256(args.tradeflows)},
                    ["panel.csv", "dropped.csv"])
    print(f"ingest: {panel.n_products} products x {panel.n_years} years "
          f"({len(dropped)} dropped) -> {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    panel = empirics.read_panel_csv(args.panel)
    if not panel.strictly_positive:
        panel, _ = empirics.filter_consistent_panel(panel)
    if panel.n_years < 2:
        raise DataError("prediction needs a panel with at least two years")
    out = _out_dir(args)

    horizon = panel.n_years - 1
    fields = {}
    if args.config:
        fields.update(_load_config_file(args.config))
    if args.rho is not None:
        fields["density"] = args.rho
    if args.b is not None:
        fields["exponent"] = args.b
    if args.replicas is not None:
        fields["replicas"] = args.replicas
    fields.setdefault("density", predictability.FORECAST_RHO_DEFAULT)
    fields.setdefault("replicas", predictability.N_SIMS_DEFAULT)
    if fields.setdefault("n_sites", panel.n_products) != panel.n_products:
        raise ConfigError(f"config sets {fields['n_sites']} sites but the panel has "
                          f"{panel.n_products} products")
    fields["max_tau"] = float(horizon)
    fields["snapshot_taus"] = tuple(float(t) for t in range(horizon + 1))
    fields["sample_taus"] = (0.0, float(horizon))
    fields["init"] = panel.first_year_shares()
    fields["base_seed"] = _resolve_seed(args, fields.get("base_seed"))
    cfg = _sim_config(fields)

    ensemble = engine.run_ensemble(cfg, threads=args.threads)
    report = predictability.build_report(panel, ensemble, args.significance,
                                         n_mc=args.n_mc, seed=cfg.base_seed)
    predictability.write_report_csv(report, out / "report.csv")
    predictability.write_rollup_csv(report, out / "rollup.csv")
    predictability.write_threshold_json(report, out / "threshold.json")

    _write_manifest(out, "predict", _config_json(cfg),
                    {"base_seed": cfg.base_seed, "scoring_seed": cfg.base_seed},
                    {args.panel: _sha256(args.panel)},
                    ["report.csv", "rollup.csv", "threshold.json"])
    frac = report.unpredictable_fraction
    note = " (low power: single-step panel)" if report.low_power else ""
    print(f"predict: {len(report.scores)} products, T={report.t_horizon}, "
          f"U_crit={report.u_crit:.4f}, unpredictable {frac:.1%}{note} -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sharekin",
        description="Biquadratic-transfer urn model of product shares: "
                    "simulation, stationary analysis, calibration, prediction.")
    parser.add_argument("--version", action="version", version=f"sharekin {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="base seed (fallback: $SHAREKIN_SEED, then 0)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for replicas")

    sim = sub.add_parser("simulate", help="run transfer-dynamics replicas")
    sim.add_argument("--config", help="JSON file with run fields "
                                      "(aliases: sites, rho, b, seed)")
    sim.add_argument("--sites", type=int, help="number of sites N")
    sim.add_argument("--rho", type=float, help="units per site (density)")
    sim.add_argument("--b", type=float, default=None,
                     help="transfer exponent (default 2)")
    sim.add_argument("--max-tau", dest="max_tau", type=float, default=None,
                     help="horizon in rescaled years (default 100)")
    sim.add_argument("--replicas", type=int, default=None, help="independent replicas")
    sim.add_argument("--delta-t", dest="delta_t", type=float, default=None,
                     help="model time per rescaled year (default 0.007854)")
    sim.add_argument("--histograms", action="store_true",
                     help="also write share histograms at the sample taus")
    common(sim)
    sim.set_defaults(func=cmd_simulate)

    sta = sub.add_parser("stationary", help="exact and asymptotic stationary profiles")
    sta.add_argument("--sites", type=int, required=True, help="number of sites N")
    sta.add_argument("--rho", type=float, required=True, help="units per site")
    sta.add_argument("--units", type=int, default=None,
                     help="total units M (overrides sites*rho rounding)")
    sta.add_argument("--b", type=float, default=None,
                     help="transfer exponent (default 2)")
    sta.add_argument("--mode", choices=("dp", "ctmc", "asymptotic"), default="dp",
                     help="profile construction (default dp)")
    common(sta)
    sta.set_defaults(func=cmd_stationary)

    cal = sub.add_parser("calibrate", help="fit fluctuation scaling and density window")
    cal.add_argument("--panel", required=True, help="share panel CSV (year,product,share)")
    cal.add_argument("--ensembles", default=None,
                     help="directory of simulate runs to scan for density candidates")
    cal.add_argument("--exclude", default=None,
                     help="comma-separated product codes excluded from the second moment")
    cal.add_argument("--width-tolerance", dest="width_tolerance", type=float, default=0.25,
                     help="relative tolerance for window-width match (default 0.25)")
    common(cal)
    cal.set_defaults(func=cmd_calibrate)

    ing = sub.add_parser("ingest", help="trade-flow CSV to consistent share panel")
    ing.add_argument("--tradeflows", required=True,
                     help="CSV with year,exporter,importer,sitc4,value")
    common(ing)
    ing.set_defaults(func=cmd_ingest)

    pre = sub.add_parser("predict", help="score a panel against a forecast ensemble")
    pre.add_argument("--panel", required=True, help="share panel CSV (year,product,share)")
    pre.add_argument("--config", help="JSON overrides for the forecast ensemble")
    pre.add_argument("--rho", type=float, default=None,
                     help="forecast ensemble density (default 400)")
    pre.add_argument("--b", type=float, default=None,
                     help="transfer exponent (default 2)")
    pre.add_argument("--replicas", type=int, default=None,
                     help="ensemble size N_s (default 1000)")
    pre.add_argument("--significance", type=float, default=0.05,
                     help="rejection level for U (default 0.05)")
    pre.add_argument("--n-mc", dest="n_mc", type=int, default=predictability.N_MC_MIN,
                     help="Monte Carlo samples for the U threshold (default 100000)")
    common(pre)
    pre.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"sharekin: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"sharekin: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except DataError as exc:
        print(f"sharekin: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"sharekin: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
