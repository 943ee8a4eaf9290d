from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError
from .pmf import Pmf

MIN_SAMPLES = 30


@dataclass(frozen=True)
class BackoffSample:
    station_id: int
    value: int
    valid: bool = True
    time_us: int = 0


@dataclass
class EstimateReport:
    station_id: int
    w_hat: int
    divergences: dict
    sample_count: int
    aggressor: bool
    tie: bool = False
    notes: list = field(default_factory=list)

    @property
    def best_divergence(self):
        return self.divergences[self.w_hat]


def empirical_pmf(samples, support_len) -> Pmf:
    values = np.array([s.value for s in samples if s.valid], dtype=np.int64)
    if values.size == 0:
        raise InsufficientDataError("no valid backoff samples")
    if values.min() < 0 or values.max() >= support_len:
        raise ValueError(f"sample outside support 0..{support_len - 1}")
    counts = np.bincount(values, minlength=support_len)
    return Pmf(counts / values.size)


def js_divergence(h: Pmf, p: Pmf) -> float:
    """Jensen-Shannon divergence in nats; ``0 * ln(0/x)`` is taken as 0."""
    a = np.asarray(getattr(h, "probs", h), dtype=float)
    b = np.asarray(getattr(p, "probs", p), dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"support mismatch: {a.size} vs {b.size}")
    mix = a + b
    total = 0.0
    for x in (a, b):
        nz = x > 0
        total += float(np.sum(x[nz] * np.log(2.0 * x[nz] / mix[nz])))
    return min(max(0.5 * total, 0.0), math.log(2.0))


def estimate_cwmin(h, nominal_set, station_id=-1, sample_count=None, w_standard=None) -> EstimateReport:
    """Pick the hypothesised CWmin whose nominal PMF is closest to ``h``.

    ``h`` may be a :class:`Pmf` or a sequence of :class:`BackoffSample`.
    Ties go to the smallest window.
    """
    if not len(nominal_set):
        raise ValueError("empty nominal set")
    keys = sorted(nominal_set)
    support = nominal_set[keys[0]].support_len
    if not isinstance(h, Pmf):
        samples = list(h)
        sample_count = sum(1 for s in samples if s.valid)
        if sample_count < MIN_SAMPLES:
            raise InsufficientDataError(
                f"station {station_id}: {sample_count} valid samples < {MIN_SAMPLES}"
            )
        h = empirical_pmf(samples, support)
    if w_standard is None:
        w_standard = keys[-1]
    divs = {l: js_divergence(h, nominal_set[l]) for l in keys}
    best = min(divs.values())
    winners = [l for l in keys if divs[l] == best]
    w_hat = winners[0]
    report = EstimateReport(
        station_id=station_id,
        w_hat=w_hat,
        divergences=divs,
        sample_count=-1 if sample_count is None else sample_count,
        aggressor=False,
        tie=len(winners) > 1,
    )
    if report.tie:
        report.notes.append(f"tie between {winners}, chose smallest")
    report.aggressor = classify(report, w_standard)
    return report


def classify(report: EstimateReport, w_standard) -> bool:
    return report.w_hat < w_standard


def write_reports(reports, fh):
    fh.write("station_id\tsample_count\tw_hat\taggressor\tjs_at_w_hat\n")
    for r in reports:
        fh.write(f"{r.station_id}\t{r.sample_count}\t{r.w_hat}\t{int(r.aggressor)}\t{r.best_divergence:.12g}\n")
