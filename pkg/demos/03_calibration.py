"""Calibrating the model against a share panel.

Two knobs connect model time to calendar years and pick the unit density:

  1. the fluctuation amplitude c in <|dA|> = c A fixes the time step
     Delta-t = pi c^2 / 4 per year;
  2. the level and growth of the mean squared share across the panel's
     years selects which densities rho are even feasible.

This script runs the whole loop on a synthetic panel whose true parameters
we know, and checks the calibration recovers them.

Run:  python3 demos/03_calibration.py
"""

import numpy as np

from sharekin.empirics import (
    delta_t_from_c,
    fit_density,
    fit_fluctuation_scaling,
    second_moment_series,
    synthetic_panel,
)
from sharekin.engine import DELTA_T_TILDE_DEFAULT, SimConfig, run_ensemble


def section(title):
    print(f"\n=== {title} ===")


def main():
    section("A 38-year synthetic panel (N=508, rho=50, default time step)")
    panel = synthetic_panel(SimConfig(n_sites=508, density=50.0, max_tau=38.0,
                                      base_seed=2024))
    print(f"{panel.n_products} products x {panel.n_years} years, "
          f"all shares positive: {panel.strictly_positive}")

    section("Fluctuation scaling recovers the time step")
    fit = fit_fluctuation_scaling(panel)
    dt = delta_t_from_c(fit.c)
    print(f"alpha = {fit.alpha:.3f} (1 means |dA| proportional to A)")
    print(f"c = {fit.c:.4f} -> Delta-t = pi c^2/4 = {dt:.6f} "
          f"(true value {DELTA_T_TILDE_DEFAULT:.6f}, "
          f"off by {abs(dt - DELTA_T_TILDE_DEFAULT) / DELTA_T_TILDE_DEFAULT:.0%})")
    print(f"gain/loss sides: alpha+ = {fit.alpha_gain:.2f}, "
          f"alpha- = {fit.alpha_loss:.2f}")

    section("Density candidates from squared-share growth")
    series = second_moment_series(panel)
    print(f"panel mean squared share: {series.values.min():.2e} .. "
          f"{series.values.max():.2e} over {panel.n_years} years")
    curves = {
        rho: run_ensemble(SimConfig(n_sites=508, density=rho, max_tau=160.0,
                                    replicas=8, base_seed=909), threads=4)
        for rho in (2.0, 20.0, 50.0)
    }
    result = fit_density(series, curves,
                         panel_years=float(panel.horizon), delta_t_tilde=dt)
    for cand in result.rho_candidates:
        if cand.feasible:
            print(f"rho={cand.rho:>4g}: window tau=[{cand.tau_i:.1f}, "
                  f"{cand.tau_f:.1f}] width {cand.width:.1f} "
                  f"(matches {panel.horizon} panel years: {cand.matches_panel})")
        else:
            print(f"rho={cand.rho:>4g}: infeasible — {cand.note}")
    print("the low density crawls through the observed range too slowly — "
          "its window is wider than the panel — while the feasible high "
          "densities are nearly indistinguishable, so every candidate is "
          "reported with its verdict rather than pretending to a unique fit")


if __name__ == "__main__":
    main()
