"""Stationary states: exact solves, closed forms, and the condensate.

Three independent routes to the same object — the long-run distribution of
a site's unit count — and where each is trustworthy:

  * exact_ctmc_stationary: solve the generator, exact but tiny systems only;
  * exact_site_distribution: product-form weights via dynamic programming,
    any N and M, exact for the time-rescaled chain and a good approximation
    for the model;
  * asymptotic_site_distribution: b=2 closed forms, made for large N.

Run:  python3 demos/02_stationary_states.py
"""

import numpy as np

from sharekin.stationary import (
    PhasePoint,
    asymptotic_site_distribution,
    classify_phase,
    critical_density,
    exact_ctmc_stationary,
    exact_site_distribution,
    scaling_collapse,
    total_variation,
)


def section(title):
    print(f"\n=== {title} ===")


def main():
    section("Generator solve vs product form (N=3, M=12, b=2)")
    ctmc = exact_ctmc_stationary(3, 12, 2.0)
    dp = exact_site_distribution(3, 12, 2.0)
    print("m    exact      product-form")
    for m, pc, pd in zip(ctmc.m, ctmc.p, dp.p):
        print(f"{m:>2}   {pc:.5f}    {pd:.5f}")
    print(f"total variation distance: {total_variation(dp, ctmc):.4f} "
          "(the product form is exact for the constant-rate chain; the "
          "state-dependent clock of the model shifts it a little)")

    section("Where is the critical density?")
    for b in (2.5, 3.0, 4.0):
        print(f"b={b:g}: rho_c = {critical_density(b):.4f}")
    print(f"b=2 needs a system size: rho_c(N=508) = "
          f"{critical_density(2.0, 508):.4f}")
    for rho in (2.0, 10.0):
        phase = classify_phase(PhasePoint(exponent=2.0, density=rho, n_sites=508))
        print(f"  rho={rho:g} at N=508 -> {phase.value}")

    section("The condensate carries the surplus (N=128, rho=10)")
    prof = asymptotic_site_distribution(128, 10.0)
    meta = prof.metadata
    print(f"regime: {meta['regime']}, predicted condensate mass "
          f"m* = {meta['m_star']:.1f} of M = {128 * 10} "
          f"({meta['m_star'] / 1280:.0%} of all units on one site)")
    bulk = prof.p[prof.m <= 50].sum()
    print(f"probability a site is small (m <= 50): {bulk:.3f} — almost "
          "everyone, while one site hoards the rest")

    section("One curve for every fluid system")
    profiles = [asymptotic_site_distribution(n, 2.0) for n in (128, 256, 508)]
    result = scaling_collapse(profiles)
    worst = 0.0
    for curve in result.curves:
        ref = result.reference(curve.x)
        sel = ref > 1e-6
        worst = max(worst, np.max(np.abs(curve.y[sel] - ref[sel])))
    print(f"mode: {result.mode}; max deviation of {len(result.curves)} "
          f"rescaled profiles from exp(1 - e^x): {worst:.2e}")
    print("fluid profiles at different N land on a single scaling curve "
          "once plotted as y(m^2 p) against x = zeta(2) m / N")


if __name__ == "__main__":
    main()
