"""Saturated DCF fixed points and nominal backoff-value PMFs.

The tagged station uses minimum window ``W``; the other ``N-1`` stations use
the standard window ``W_s``. Solving the coupled transmit/collision
equations gives the tagged station's collision probability ``p``, which
weights the per-stage uniform backoff distributions.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .pmf import Pmf

DEFAULT_TOL = 1e-10
MAX_ITER = 100_000
DAMPING = 0.5


@dataclass(frozen=True)
class MarkovParams:
    n_stations: int
    w_tagged: int
    w_standard: int = 16
    max_retx: int = 7
    cw_cap: int = 1024

    def __post_init__(self):
        if self.n_stations < 2:
            raise ValueError("n_stations must be >= 2")
        if self.w_tagged < 2 or self.w_standard < 2:
            raise ValueError("contention windows must be >= 2")
        if not self.w_tagged <= self.w_standard <= self.cw_cap:
            raise ValueError("need w_tagged <= w_standard <= cw_cap")
        if self.max_retx < 0:
            raise ValueError("max_retx must be >= 0")


@dataclass(frozen=True)
class FixedPointSolution:
    tau: float
    p: float
    tau_c: float
    p_c: float
    iterations: int = 0
    method: str = "damped"


def transmit_probability(p, w, max_retx):
    """Per-slot transmit probability of a station with minimum window ``w``.

    Uses ``(1-(2p)^M)/(1-2p) = sum_{k<M} (2p)^k`` so the expression stays
    finite at ``p = 1/2``.
    """
    geom = sum((2.0 * p) ** k for k in range(max_retx))
    return 2.0 / ((w + 1) + p * w * geom)


def homogeneous_residuals(tau, p, n_stations, w_standard, max_retx):
    return (
        tau - transmit_probability(p, w_standard, max_retx),
        p - (1.0 - (1.0 - tau) ** (n_stations - 1)),
    )


def heterogeneous_residuals(sol, params: MarkovParams):
    n = params.n_stations
    return (
        sol.tau - transmit_probability(sol.p, params.w_tagged, params.max_retx),
        sol.p - (1.0 - (1.0 - sol.tau_c) ** (n - 1)),
        sol.tau_c - transmit_probability(sol.p_c, params.w_standard, params.max_retx),
        sol.p_c - (1.0 - (1.0 - sol.tau) * (1.0 - sol.tau_c) ** (n - 2)),
    )


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol * 1e-3:
            break
    return 0.5 * (lo + hi)


def solve_homogeneous(n_stations, w_standard=16, max_retx=7, tol=DEFAULT_TOL):
    """Solve the two-equation system for ``N`` identical stations.

    Returns ``(tau, p)``.
    """
    if n_stations < 1 or w_standard < 2 or tol <= 0:
        raise ValueError("need n_stations >= 1, w_standard >= 2, tol > 0")

    def collide(p):
        return 1.0 - (1.0 - transmit_probability(p, w_standard, max_retx)) ** (n_stations - 1)

    def worst(p):
        tau = transmit_probability(p, w_standard, max_retx)
        return max(abs(r) for r in homogeneous_residuals(tau, p, n_stations, w_standard, max_retx))

    p = 0.0
    for _ in range(MAX_ITER):
        p = (1.0 - DAMPING) * p + DAMPING * collide(p)
        if worst(p) < tol:
            return transmit_probability(p, w_standard, max_retx), p

    # p - collide(p) is increasing on [0, 1): a single sign change.
    p = _bisect(lambda x: x - collide(x), 0.0, 1.0 - 1e-15, tol)
    res = worst(p)
    if res >= tol:
        raise ConvergenceError("homogeneous fixed point did not converge", res)
    return transmit_probability(p, w_standard, max_retx), p


def solve_heterogeneous(params: MarkovParams, tol=DEFAULT_TOL) -> FixedPointSolution:
    """One tagged station with window ``w_tagged`` among ``N-1`` compliant ones."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    n, w, ws, m = params.n_stations, params.w_tagged, params.w_standard, params.max_retx

    def step(p, p_c):
        tau = transmit_probability(p, w, m)
        tau_c = transmit_probability(p_c, ws, m)
        return (
            1.0 - (1.0 - tau_c) ** (n - 1),
            1.0 - (1.0 - tau) * (1.0 - tau_c) ** (n - 2),
        )

    def make(p, p_c, it, method):
        return FixedPointSolution(
            tau=transmit_probability(p, w, m), p=p,
            tau_c=transmit_probability(p_c, ws, m), p_c=p_c,
            iterations=it, method=method,
        )

    p = p_c = 0.0
    res = np.inf
    for it in range(1, MAX_ITER + 1):
        np_, npc = step(p, p_c)
        p = (1.0 - DAMPING) * p + DAMPING * np_
        p_c = (1.0 - DAMPING) * p_c + DAMPING * npc
        sol = make(p, p_c, it, "damped")
        res = max(abs(r) for r in heterogeneous_residuals(sol, params))
        if res < tol:
            return sol

    # Fallback: reduce to one unknown (tau_c) and bisect.
    def excess(tau_c):
        p = 1.0 - (1.0 - tau_c) ** (n - 1)
        tau = transmit_probability(p, w, m)
        p_c = 1.0 - (1.0 - tau) * (1.0 - tau_c) ** (n - 2)
        return transmit_probability(p_c, ws, m) - tau_c

    tau_c = _bisect(excess, 1e-15, 1.0 - 1e-15, tol)
    p = 1.0 - (1.0 - tau_c) ** (n - 1)
    p_c = 1.0 - (1.0 - transmit_probability(p, w, m)) * (1.0 - tau_c) ** (n - 2)
    sol = make(p, p_c, MAX_ITER, "bisection")
    res = max(abs(r) for r in heterogeneous_residuals(sol, params))
    if res >= tol:
        raise ConvergenceError(
            f"heterogeneous fixed point did not converge for W={w}, W_s={ws}, N={n}", res
        )
    return sol


def stage_distribution(p, max_retx):
    """Steady-state probability of each backoff stage ``0..M``."""
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    if max_retx == 0:
        return np.array([1.0])
    probs = [(1.0 - p) * p**i for i in range(max_retx)]
    probs.append(p**max_retx)
    return np.array(probs)


def stage_windows(w_tagged, max_retx, cw_cap):
    return [min(2**i * w_tagged, cw_cap) for i in range(max_retx + 1)]


def compose_nominal_pmf(w_tagged, p, max_retx=7, cw_cap=1024, support_len=None) -> Pmf:
    windows = stage_windows(w_tagged, max_retx, cw_cap)
    widest = max(windows)
    if support_len is None:
        support_len = widest
    if support_len < widest:
        raise ValueError(f"support_len {support_len} < widest window {widest}")
    probs = np.zeros(support_len)
    for weight, wi in zip(stage_distribution(p, max_retx), windows):
        probs[:wi] += weight / wi
    return Pmf(probs)


@dataclass
class NominalSet(Mapping):
    """Nominal PMFs keyed by hypothesised CWmin ``l = 2..W_s``."""

    n_stations: int
    w_standard: int
    max_retx: int
    cw_cap: int
    pmfs: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict)

    def __getitem__(self, l):
        return self.pmfs[l]

    def __iter__(self):
        return iter(sorted(self.pmfs))

    def __len__(self):
        return len(self.pmfs)

    @property
    def support_len(self):
        return common_support_len(self.w_standard, self.max_retx, self.cw_cap)

    def cap_binds(self, l):
        return 2**self.max_retx * l > self.cw_cap


def common_support_len(w_standard, max_retx, cw_cap):
    return min(2**max_retx * w_standard, cw_cap)


def build_nominal_set(n_stations, w_standard=16, max_retx=7, cw_cap=1024, tol=DEFAULT_TOL) -> NominalSet:
    if w_standard < 2:
        raise ValueError("w_standard must be >= 2")
    out = NominalSet(n_stations, w_standard, max_retx, cw_cap)
    support = out.support_len
    for l in range(2, w_standard + 1):
        try:
            sol = solve_heterogeneous(MarkovParams(n_stations, l, w_standard, max_retx, cw_cap), tol)
        except ConvergenceError as exc:
            raise ConvergenceError(f"nominal PMF for l={l}: {exc}", exc.residual) from exc
        out.solutions[l] = sol
        out.pmfs[l] = compose_nominal_pmf(l, sol.p, max_retx, cw_cap, support)
    return out


def write_nominal_table(nominal: NominalSet, fh):
    """Tab-separated ``l, k, prob`` rows; ``#`` lines carry solver metadata."""
    fh.write(
        f"# N={nominal.n_stations} W_s={nominal.w_standard} M={nominal.max_retx} "
        f"cw_cap={nominal.cw_cap} support_len={nominal.support_len}\n"
    )
    for l in nominal:
        sol = nominal.solutions[l]
        fh.write(
            f"# l={l} p={sol.p:.12g} tau={sol.tau:.12g} p_c={sol.p_c:.12g} "
            f"tau_c={sol.tau_c:.12g} cap_binds={int(nominal.cap_binds(l))}\n"
        )
    fh.write("l\tk\tprob\n")
    for l in nominal:
        for k, prob in enumerate(nominal[l].probs):
            fh.write(f"{l}\t{k}\t{prob:.12g}\n")


def read_nominal_table(fh):
    """Inverse of :func:`write_nominal_table` (probabilities only)."""
    rows = {}
    for line in fh:
        if line.startswith("#") or line.startswith("l\t") or not line.strip():
            continue
        l, k, prob = line.split("\t")
        rows.setdefault(int(l), {})[int(k)] = float(prob)
    return {l: np.array([v[k] for k in sorted(v)]) for l, v in rows.items()}
