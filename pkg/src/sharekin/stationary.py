"""Stationary state of the transfer dynamics, exact and asymptotic.

The dynamics factorizes: a configuration (m_1, ..., m_N) with sum m = M has
stationary weight prod_p f(m_p) with single-site weight f(m) = m**-b / zeta(b)
(the zeta normalization is dropped for b <= 1 where it diverges; it cancels in
every observable).  Z_{n,m} below is the partition function of n sites
holding m units, computed in the log domain by the recursion

    Z_{n,m} = sum_{k=1}^{m-n+1} f(k) Z_{n-1,m-k},   Z_{0,0} = 1,

and the exact single-site occupation distribution is

    p(m) = f(m) Z_{N-1,M-m} / Z_{N,M},   m = 1..M-N+1.

For b = 2 the large-N shape has a fluid branch, and past the finite-size
critical density rho_c(N) = log(N/zeta(2)) / zeta(2) a condensate branch with
an excess-unit bump on top of the m**-2 background.  phi() is the scaling
function entering the saddle evaluation of Z at b = 2, with argument
eta = N mu / zeta(2), mu = exp(-rho zeta(2)).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from .errors import CapacityError

_MAX_CTMC_STATES = 200_000

# B_2, B_4, ..., B_20
_BERNOULLI_EVEN = [
    1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66,
    -691 / 2730, 7 / 6, -3617 / 510, 43867 / 798, -174611 / 330,
]


def zeta(s: float) -> float:
    """Riemann zeta for s > 1 by Euler-Maclaurin (K=24 direct terms, 10 corrections)."""
    if s <= 1:
        raise ValueError("zeta(s) requires s > 1")
    if s > 55:
        # direct series is already at machine precision
        return float(sum(n ** -s for n in range(1, 41)))
    k = 24.0
    out = sum(n ** -s for n in range(1, 24))
    out += 0.5 * k ** -s
    out += k ** (1 - s) / (s - 1)
    rising = s
    power = k ** -(s + 1)
    fact = 2.0
    for j, b2j in enumerate(_BERNOULLI_EVEN, start=1):
        out += b2j / fact * rising * power
        # extend s(s+1)...(s+2j) and (2j+2)! for the next correction
        rising *= (s + 2 * j - 1) * (s + 2 * j)
        power /= k * k
        fact *= (2 * j + 1) * (2 * j + 2)
    return float(out)


def _zeta_nonpositive(n: int) -> float:
    """zeta at integer arguments <= 0: zeta(0) = -1/2, zeta(-k) = -B_{k+1}/(k+1)."""
    if n > 0:
        raise ValueError("use zeta() for positive arguments")
    if n == 0:
        return -0.5
    k = -n
    if k % 2 == 0:
        return 0.0
    return -_BERNOULLI_EVEN[(k + 1) // 2 - 1] / (k + 1)


def polylog(s: float, z: float) -> float:
    """Li_s(z) on 0 <= z <= 1.

    Direct series away from z = 1; for s = 2 near z = 1 the expansion in
    alpha = -log z,

        Li_2(e^-alpha) = zeta(2) + alpha log alpha - alpha
                         + sum_{n>=2} (-1)^n zeta(2-n) alpha^n / n!,

    which converges fast because zeta vanishes at negative even integers.
    Terms below 1e-16 are dropped.
    """
    if not 0.0 <= z <= 1.0:
        raise ValueError("polylog is implemented for 0 <= z <= 1")
    if z == 0.0:
        return 0.0
    if z == 1.0:
        if s <= 1:
            raise ValueError("Li_s(1) diverges for s <= 1")
        return zeta(s)
    if s == 2.0 and z > 0.9:
        alpha = -math.log(z)
        out = zeta(2.0) + alpha * math.log(alpha) - alpha
        term_pow = alpha
        fact = 1.0
        for n in range(2, 40):
            term_pow *= alpha
            fact *= n
            zn = _zeta_nonpositive(2 - n)
            if zn == 0.0:
                continue
            term = (-1) ** n * zn * term_pow / fact
            out += term
            if abs(term) < 1e-16:
                break
        return out
    out = 0.0
    zk = 1.0
    for k in range(1, 10_000_000):
        zk *= z
        term = zk / k ** s
        out += term
        if term < 1e-16 * max(out, 1.0):
            break
    return out


@dataclass(frozen=True)
class PartitionTable:
    """log Z_{n,m} for 0 <= n <= N, 0 <= m <= M (-inf where undefined)."""

    log_z: np.ndarray
    n_sites: int
    total_units: int
    exponent: float
    normalized: bool  # True when f includes the 1/zeta(b) factor (b > 1)

    def log_partition(self, n: int, m: int) -> float:
        return float(self.log_z[n, m])

    def partition(self, n: int, m: int) -> float:
        return float(np.exp(self.log_z[n, m]))


def _logsumexp(a: np.ndarray) -> float:
    mx = np.max(a)
    if not np.isfinite(mx):
        return float(mx)
    return float(mx + np.log(np.sum(np.exp(a - mx))))


def partition_dp(n_sites: int, total_units: int, exponent: float) -> PartitionTable:
    """Fill the Z_{n,m} table by the one-site-at-a-time recursion."""
    n_total, m_total, b = n_sites, total_units, exponent
    if n_total < 1 or m_total < n_total:
        raise ValueError("need 1 <= n_sites <= total_units")
    normalized = b > 1
    log_f = np.full(m_total + 1, -np.inf)
    log_f[1:] = -b * np.log(np.arange(1, m_total + 1, dtype=np.float64))
    if normalized:
        log_f[1:] -= math.log(zeta(b))
    log_z = np.full((n_total + 1, m_total + 1), -np.inf)
    log_z[0, 0] = 0.0
    for n in range(1, n_total + 1):
        prev = log_z[n - 1]
        for m in range(n, m_total + 1):
            # k units on the new site, m-k on the previous n-1 sites
            terms = log_f[1 : m - n + 2] + prev[n - 1 : m][::-1]
            log_z[n, m] = _logsumexp(terms)
    return PartitionTable(log_z, n_total, m_total, b, normalized)


@dataclass(frozen=True)
class StationaryProfile:
    """Single-site occupation distribution p(m) on support m = 1..M-N+1."""

    m: np.ndarray
    p: np.ndarray
    provenance: str  # "exact-dp" | "exact-ctmc" | "asymptotic" | "simulated"
    n_sites: int
    total_units: int
    exponent: float
    metadata: dict = field(default_factory=dict)

    @property
    def density(self) -> float:
        return self.total_units / self.n_sites

    def mean(self) -> float:
        return float(np.sum(self.m * self.p))

    def second_moment_share(self) -> float:
        """<A^2> implied by the profile: E[m^2] / M^2."""
        return float(np.sum(self.m.astype(np.float64) ** 2 * self.p)) / self.total_units ** 2


def exact_site_distribution(n_sites: int, total_units: int, exponent: float) -> StationaryProfile:
    """Exact p(m) from the partition recursion."""
    table = partition_dp(n_sites, total_units, exponent)
    n_total, m_total, b = n_sites, total_units, exponent
    m = np.arange(1, m_total - n_total + 2)
    log_f = -b * np.log(m.astype(np.float64))
    if table.normalized:
        log_f -= math.log(zeta(b))
    log_p = log_f + table.log_z[n_total - 1, m_total - m] - table.log_z[n_total, m_total]
    p = np.exp(log_p)
    norm = float(p.sum())
    if abs(norm - 1.0) > 1e-8:
        raise AssertionError("partition recursion lost normalization")
    return StationaryProfile(
        m=m, p=p / norm, provenance="exact-dp",
        n_sites=n_total, total_units=m_total, exponent=b,
        metadata={"normalization": norm},
    )


def _compositions(n_sites: int, total_units: int):
    """All (m_1..m_N) with m_p >= 1 summing to the total, lexicographic."""
    for cuts in itertools.combinations(range(1, total_units), n_sites - 1):
        edges = (0,) + cuts + (total_units,)
        yield tuple(edges[i + 1] - edges[i] for i in range(n_sites))


def exact_ctmc_composition_measure(n_sites: int, total_units: int, exponent: float) -> dict:
    """Stationary probability of every composition, from the full generator.

    Guarded: the composition count C(M-1, N-1) must not exceed 200000.
    Provides the reference measure the event simulation is validated against.
    """
    n_total, m_total, b = n_sites, total_units, exponent
    if n_total < 2 or m_total < n_total:
        raise ValueError("need 2 <= n_sites <= total_units")
    n_states = math.comb(m_total - 1, n_total - 1)
    if n_states > _MAX_CTMC_STATES:
        raise CapacityError(f"{n_states} compositions exceed the exact-solver guard")
    states = list(_compositions(n_total, m_total))
    if n_states == 1:
        return {states[0]: 1.0}
    index = {s: i for i, s in enumerate(states)}

    rows, cols, vals = [], [], []
    diag = np.zeros(n_states)
    for i, s in enumerate(states):
        w = [float(m) ** b for m in s]
        total = sum(w)
        for p in range(n_total):
            if s[p] < 2:
                continue
            for q in range(n_total):
                if q == p:
                    continue
                rate = w[p] * w[q] / total
                t = list(s)
                t[p] -= 1
                t[q] += 1
                j = index[tuple(t)]
                rows.append(j)
                cols.append(i)
                vals.append(rate)
                diag[i] -= rate
    rows.extend(range(n_states))
    cols.extend(range(n_states))
    vals.extend(diag)

    if n_states <= 3000:
        a = np.zeros((n_states, n_states))
        for r, c, v in zip(rows, cols, vals):
            a[r, c] += v
        a[0, :] = 1.0
        rhs = np.zeros(n_states)
        rhs[0] = 1.0
        pi = np.linalg.solve(a, rhs)
    else:
        a = coo_matrix((vals, (rows, cols)), shape=(n_states, n_states)).tolil()
        a[0, :] = 1.0
        rhs = np.zeros(n_states)
        rhs[0] = 1.0
        pi = spsolve(a.tocsc(), rhs)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return {s: float(pi[i]) for i, s in enumerate(states)}


def exact_ctmc_stationary(n_sites: int, total_units: int, exponent: float) -> StationaryProfile:
    """Site-count marginal of the exact generator solve."""
    measure = exact_ctmc_composition_measure(n_sites, total_units, exponent)
    top = total_units - n_sites + 1
    p = np.zeros(top + 1)
    for state, prob in measure.items():
        for m in state:
            p[m] += prob / n_sites
    return StationaryProfile(
        m=np.arange(1, top + 1), p=p[1:], provenance="exact-ctmc",
        n_sites=n_sites, total_units=total_units, exponent=exponent,
        metadata={"n_states": len(measure)},
    )


def total_variation(pa: StationaryProfile, pb: StationaryProfile) -> float:
    """TV distance between two profiles on the common support."""
    if pa.n_sites != pb.n_sites or pa.total_units != pb.total_units:
        raise ValueError("profiles live on different supports")
    top = max(pa.m.max(), pb.m.max())
    qa = np.zeros(top + 1)
    qb = np.zeros(top + 1)
    qa[pa.m] = pa.p
    qb[pb.m] = pb.p
    return 0.5 * float(np.abs(qa - qb).sum())


def critical_density(exponent: float, n_sites: Optional[int] = None) -> float:
    """Condensation threshold rho_c.

    For b > 2 the thermodynamic value zeta(b-1)/zeta(b); at b = 2 the
    threshold grows logarithmically with the system and requires N:
    rho_c = log(N/zeta(2)) / zeta(2).  Below b = 2 there is no finite
    threshold.
    """
    b = exponent
    if b > 2:
        return zeta(b - 1) / zeta(b)
    if b == 2:
        if n_sites is None:
            raise ValueError("b = 2 threshold depends on the site count")
        if n_sites < 2:
            raise ValueError("need at least two sites")
        z2 = zeta(2.0)
        return math.log(n_sites / z2) / z2
    raise ValueError("no finite condensation threshold for b < 2")


def chemical_potential(density: float) -> float:
    """Fugacity mu = exp(-rho zeta(2)) of the b = 2 fluid at density rho."""
    if density <= 0:
        raise ValueError("density must be positive")
    return math.exp(-density * zeta(2.0))


def phi(eta: float) -> float:
    """Scaling function of the b = 2 partition saddle.

    phi(eta) = (1/pi) Integral_0^inf exp(eta (x - x log x)) sin(eta pi x) dx.

    For eta >= 1 the saddle at x = 1 dominates and the closed form
    sqrt(1/(2 pi eta)) exp(-eta) is returned (the integrand oscillates too
    fast for quadrature there anyway).  For eta < 1 the integral is summed
    over half-periods [k/eta, (k+1)/eta] of the sine factor until the
    envelope drops below 1e-16 of its peak exp(eta).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if eta >= 1.0:
        return math.sqrt(1.0 / (2.0 * math.pi * eta)) * math.exp(-eta)

    def integrand(x):
        xlx = x * math.log(x) if x > 0 else 0.0
        return math.exp(eta * (x - xlx)) * math.sin(eta * math.pi * x) / math.pi

    log_cut = math.log(1e-16) + eta
    total = 0.0
    k = 0
    while True:
        a = k / eta
        b = (k + 1) / eta
        if k >= 1 and eta * (a - a * math.log(a)) < log_cut:
            break
        val, _ = quad(integrand, a, b, epsabs=1e-14 * math.exp(eta), epsrel=1e-10, limit=200)
        total += val
        k += 1
    return total


class Phase(str, Enum):
    FLUID = "fluid"
    CONDENSATE = "condensate"


@dataclass(frozen=True)
class PhasePoint:
    exponent: float
    density: float
    n_sites: Optional[int] = None


def classify_phase(point: PhasePoint) -> Phase:
    """Fluid or condensate at the given (b, rho, N)."""
    b = point.exponent
    if point.density <= 0:
        raise ValueError("density must be positive")
    if b < 2:
        return Phase.FLUID
    rho_c = critical_density(b, point.n_sites)
    return Phase.CONDENSATE if point.density > rho_c else Phase.FLUID


def asymptotic_site_distribution(n_sites: int, density: float,
                                 total_units: Optional[int] = None) -> StationaryProfile:
    """Large-N closed form of p(m) at b = 2, normalized on its finite support.

    Fluid (rho <= rho_c):      p ~ (zeta2 m^2)^-1 exp(-e^lambda (e^theta - 1))
    Condensate (rho > rho_c):  p ~ (zeta2 m^2)^-1 (1 + (lambda^2/sqrt(2 pi))
                                                    exp(x/2 - e^x)),  x = theta + lambda
    with theta = m zeta2 / N and lambda = zeta2 (rho_c - rho).  The condensate
    bump peaks near m* = M - M_c - N log(2)/zeta2, M_c = (N/zeta2) log(N/zeta2),
    with height scale zeta2 lambda^2 / (m*^2 sqrt(2 pi e^{...}));  metadata
    carries m_star and the numeric normalization applied.
    """
    n_total = n_sites
    rho = density
    if n_total < 2 or rho <= 0:
        raise ValueError("need n_sites >= 2 and positive density")
    z2 = zeta(2.0)
    m_total = total_units if total_units is not None else round(rho * n_total)
    if m_total < n_total:
        raise ValueError("density too small for one unit per site")
    mu = chemical_potential(rho)
    rho_c = critical_density(2.0, n_total)
    lam = z2 * (rho_c - rho)
    m = np.arange(1, m_total - n_total + 2)
    theta = z2 * m / n_total
    meta = {"mu": mu, "rho_c": rho_c, "lambda": lam}
    if rho <= rho_c:
        psi = np.exp(-math.exp(lam) * np.expm1(theta))
        meta["regime"] = "fluid"
    else:
        x = theta + lam
        with np.errstate(over="ignore"):
            ex = np.exp(x)
        bump = lam * lam / math.sqrt(2 * math.pi) * np.exp(np.clip(x / 2 - ex, -745, 50))
        psi = 1.0 + bump
        m_c = n_total / z2 * math.log(n_total / z2)
        meta["regime"] = "condensate"
        meta["m_star"] = m_total - m_c - math.log(2.0) * n_total / z2
    p_raw = psi / (z2 * m.astype(np.float64) ** 2)
    norm = float(p_raw.sum())
    meta["normalization"] = norm
    return StationaryProfile(
        m=m, p=p_raw / norm, provenance="asymptotic",
        n_sites=n_total, total_units=m_total, exponent=2.0, metadata=meta,
    )


@dataclass(frozen=True)
class CollapseCurve:
    n_sites: int
    density: float
    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class CollapseResult:
    mode: Phase
    curves: list

    def reference(self, x) -> np.ndarray:
        """Predicted master curve at the rescaled coordinates."""
        x = np.asarray(x, dtype=np.float64)
        if self.mode is Phase.FLUID:
            return np.exp(1.0 - np.exp(x))
        return np.exp(x / 2 - np.exp(x)) / math.sqrt(2 * math.pi)


def scaling_collapse(profiles: Sequence[StationaryProfile], mode: str = "auto") -> CollapseResult:
    """Rescale b = 2 profiles onto the predicted master curve.

    Fluid:      x = zeta2 m / N,            y = (m^2 zeta2 p)^(zeta2/(N mu))
    Condensate: x = zeta2 m / N + lambda,   y = m^2 zeta2 p / lambda^2

    All profiles must be b = 2 and fall in the same phase (checked unless
    mode names one explicitly).
    """
    if not profiles:
        raise ValueError("no profiles given")
    z2 = zeta(2.0)
    phases = []
    for prof in profiles:
        if prof.exponent != 2.0:
            raise ValueError("collapse is defined for exponent 2 profiles")
        phases.append(classify_phase(PhasePoint(2.0, prof.density, prof.n_sites)))
    if mode == "auto":
        if len(set(phases)) > 1:
            raise ValueError("profiles fall in different phases; pass mode explicitly")
        phase = phases[0]
    else:
        phase = Phase(mode)
    curves = []
    for prof in profiles:
        n = prof.n_sites
        mu = chemical_potential(prof.density)
        lam = z2 * (critical_density(2.0, n) - prof.density)
        m = prof.m.astype(np.float64)
        p = prof.p
        # The closed asymptotic form collapses exactly only before the final
        # renormalisation step; undo it where the profile records the factor.
        norm = prof.metadata.get("normalization")
        if prof.provenance == "asymptotic" and norm:
            p = p * norm
        base = m * m * z2 * p
        if phase is Phase.FLUID:
            x = z2 * m / n
            with np.errstate(divide="ignore"):
                y = base ** (z2 / (n * mu))
        else:
            x = z2 * m / n + lam
            y = base / (lam * lam)
        curves.append(CollapseCurve(n_sites=n, density=prof.density, x=x, y=y))
    return CollapseResult(mode=phase, curves=curves)


def write_profile_csv(profile: StationaryProfile, path):
    """m,p rows."""
    with open(path, "w") as fh:
        fh.write("m,p\n")
        for m, p in zip(profile.m, profile.p):
            fh.write(f"{int(m)},{p:.12e}\n")


def write_collapse_csv(result: CollapseResult, path):
    """n_sites,rho,x,y rows for every curve."""
    with open(path, "w") as fh:
        fh.write("n_sites,rho,x,y\n")
        for curve in result.curves:
            for x, y in zip(curve.x, curve.y):
                fh.write(f"{curve.n_sites},{curve.density:.10g},{x:.12e},{y:.12e}\n")


def write_phase_json(point: PhasePoint, path):
    """Phase classification with the threshold used."""
    phase = classify_phase(point)
    rho_c = None
    if point.exponent >= 2:
        try:
            rho_c = critical_density(point.exponent, point.n_sites)
        except ValueError:
            rho_c = None
    payload = {
        "b": point.exponent,
        "rho": point.density,
        "n_sites": point.n_sites,
        "rho_c": rho_c,
        "phase": phase.value,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
