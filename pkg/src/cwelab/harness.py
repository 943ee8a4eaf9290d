"""Batch experiments: throughput sweep, CIT accuracy sweep, CWmin-estimation
accuracy against monitoring time.

Every random quantity is derived from ``numpy.random.SeedSequence`` keyed on
the base seed and the work unit, so results do not depend on ``jobs`` or on
execution order.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, cit
from .config import ExperimentSpec
from .errors import InsufficientDataError
from .estimator import estimate_cwmin
from .markov import build_nominal_set
from .sim import StationProfile, WlanConfig, inject_identification, run, throughput
from .tracker import track


@dataclass(frozen=True)
class AccuracyPoint:
    correct: int
    total: int
    insufficient: int = 0

    @property
    def accuracy_pct(self) -> Fraction:
        return Fraction(100 * self.correct, self.total) if self.total else Fraction(0)

    def __add__(self, other):
        return AccuracyPoint(
            self.correct + other.correct, self.total + other.total, self.insufficient + other.insufficient
        )


@dataclass
class AccuracyReport:
    """Accuracy per sweep point; keys are tuples naming the point."""

    axes: tuple
    points: dict = field(default_factory=dict)

    def add(self, key, point):
        self.points[key] = self.points.get(key, AccuracyPoint(0, 0)) + point

    def pct(self, *key) -> float:
        return float(self.points[key].accuracy_pct)

    def check(self):
        for key, pt in self.points.items():
            if pt.total and pt.accuracy_pct * pt.total != 100 * pt.correct:
                raise AssertionError(f"accuracy arithmetic broken at {key}")
            if not 0 <= pt.correct <= pt.total:
                raise AssertionError(f"bad counts at {key}")
        return True


def _seed(*words) -> int:
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1, np.uint64)[0])


def _rng(*words):
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))


def _map(fn, units, jobs):
    if jobs <= 1:
        return [fn(u) for u in units]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, units, chunksize=1))


# --- throughput vs the aggressor's CWmin --------------------------------------


def run_fig1(spec: ExperimentSpec, seed=0, cw_values=range(2, 17)):
    """Rows of ``(cw3, [mbps...], [share...])`` for two compliant stations and S3."""
    ws = spec.wlan.w_standard
    rows = []
    for cw3 in cw_values:
        cfg = dataclasses.replace(
            spec.wlan,
            stations=[StationProfile(0, ws), StationProfile(1, ws), StationProfile(2, int(cw3))],
            duration_s=spec.fig1_duration_s,
            seed=_seed(seed, 1, cw3),
            collision_id_mode="ideal",
        )
        tp = throughput(run(cfg))
        rows.append((int(cw3), [tp[i][0] for i in range(3)], [tp[i][1] for i in range(3)]))
    return rows


# --- collision identification accuracy -----------------------------------------


def _cit_unit(args):
    n, delta, trial, seed, collisions, th_list, zeta, snr_db, body_len = args
    rng = _rng(seed, 7, n, round(delta * 1000), trial)
    template = cit.default_template()
    correct = np.zeros(len(th_list), dtype=np.int64)
    truth = frozenset({0, 1})
    for _ in range(collisions):
        # Offsets and phases are redrawn per collision; S1 and S2 are hidden.
        fos = cit.sample_fo_set(n, delta, rng=rng)
        phases = rng.uniform(0.0, 2 * np.pi, n)
        gap = int(rng.integers(zeta, body_len + 1))
        offs = [0, gap] if rng.integers(0, 2) == 0 else [gap, 0]
        chans = [cit.ChannelParams(i, 1.0, phases[i], fos[i], offs[i], snr_db) for i in range(2)]
        y = cit.synthesize_collision(template, body_len, chans, rng=rng)
        ids, gam = cit.station_gammas(y, dict(enumerate(fos)), dict(enumerate(phases)), template)
        for k, th in enumerate(th_list):
            if cit.suppress_peaks(gam, ids, th, zeta).stations == truth:
                correct[k] += 1
    return correct


def run_cit_accuracy(spec: ExperimentSpec, seed=0, jobs=1) -> AccuracyReport:
    """Accuracy keyed by ``(N, delta_pct, th_c)``."""
    th_list = tuple(spec.th_c_list)
    units = [
        (n, float(d), t, seed, spec.collisions, th_list, spec.zeta, spec.snr_db, spec.body_len)
        for n in spec.n_list
        for d in spec.delta_list
        for t in range(spec.trials)
    ]
    report = AccuracyReport(axes=("N", "delta_pct", "th_c"))
    for unit, correct in zip(units, _map(_cit_unit, units, jobs)):
        n, d = unit[0], unit[1]
        for th, c in zip(th_list, correct):
            report.add((n, d, th), AccuracyPoint(int(c), spec.collisions))
    report.check()
    return report


# --- CWmin estimation accuracy -------------------------------------------------


@functools.lru_cache(maxsize=None)
def _nominal(n, ws, m, cap):
    return build_nominal_set(n, ws, m, cap)


def setup_config(spec: ExperimentSpec, n, index, seed) -> WlanConfig:
    """Random CWmins (and CIT channel parameters) for one simulation setup."""
    rng = _rng(seed, 8, n, index)
    cws = rng.integers(spec.cw_low, spec.cw_high + 1, n)
    fos = cit.sample_fo_set(n, 0.0, rng=rng)
    phases = rng.uniform(0.0, 2 * np.pi, n)
    stations = [
        StationProfile(i, int(cws[i]), fo_hz=float(fos[i]), phase_rad=float(phases[i])) for i in range(n)
    ]
    return dataclasses.replace(
        spec.wlan, stations=stations, duration_s=float(max(spec.t_list)), seed=_seed(seed, 9, n, index)
    )


def _cwe_unit(args):
    spec, n, index, seed = args
    cfg = setup_config(spec, n, index, seed)
    w = cfg.w_standard
    nominal = _nominal(n, w, cfg.max_retx, cfg.cw_cap)
    base = run(cfg).log
    out = {}
    for mode in spec.modes:
        log = inject_identification(
            base, mode, seed=_seed(seed, 10, n, index, spec.modes.index(mode)),
            accuracy_table=cfg.accuracy_table, config=cfg, th_c=spec.th_c,
        )
        for prof in cfg.stations:
            samples = track(log, prof.id, w, cfg.max_retx, cw_cap=cfg.cw_cap)
            for t in spec.t_list:
                horizon = int(round(t * 1e6))
                sub = [s for s in samples if s.time_us < horizon]
                try:
                    hit = estimate_cwmin(sub, nominal, prof.id, w_standard=w).w_hat == prof.cw_min
                    pt = AccuracyPoint(int(hit), 1)
                except InsufficientDataError:
                    pt = AccuracyPoint(0, 0, 1)
                key = (mode, n, t)
                out[key] = out.get(key, AccuracyPoint(0, 0)) + pt
    return out


def run_cwe_accuracy(spec: ExperimentSpec, seed=0, jobs=1) -> AccuracyReport:
    """Accuracy keyed by ``(mode, N, T_s)``; stations with too few samples are
    counted in ``insufficient`` and left out of ``total``."""
    units = [(spec, n, i, seed) for n in spec.n_list for i in range(spec.setups[n])]
    report = AccuracyReport(axes=("mode", "N", "T_s"))
    for part in _map(_cwe_unit, units, jobs):
        for key, pt in part.items():
            report.add(key, pt)
    report.check()
    return report


# --- output -------------------------------------------------------------------


def _pct(pt):
    return f"{float(pt.accuracy_pct):.4f}"


def write_fig1_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cw_min_s3", "s1_mbps", "s2_mbps", "s3_mbps", "s1_share", "s2_share", "s3_share"])
        for cw3, mbps, shares in rows:
            w.writerow([cw3, *(f"{x:.6f}" for x in mbps), *(f"{x:.6f}" for x in shares)])


def write_cit_csvs(report: AccuracyReport, out_dir):
    """One file per network size, mirroring one figure panel each."""
    out_dir = Path(out_dir)
    paths = []
    for n in sorted({k[0] for k in report.points}):
        path = out_dir / f"cit_accuracy_N{n}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta_pct", "th_c", "correct", "total", "accuracy_pct"])
            for (kn, d, th), pt in sorted(report.points.items()):
                if kn == n:
                    w.writerow([f"{d:g}", f"{th:g}", pt.correct, pt.total, _pct(pt)])
        paths.append(path)
    return paths


def write_cwe_csvs(report: AccuracyReport, out_dir):
    """One file per identification mode."""
    out_dir = Path(out_dir)
    paths = []
    for mode in sorted({k[0] for k in report.points}):
        path = out_dir / f"cwe_accuracy_{mode}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "T_s", "correct", "total", "insufficient", "accuracy_pct"])
            for (km, n, t), pt in sorted(report.points.items()):
                if km == mode:
                    w.writerow([n, f"{t:g}", pt.correct, pt.total, pt.insufficient, _pct(pt)])
        paths.append(path)
    return paths


def write_nominal_csvs(spec: ExperimentSpec, out_dir):
    out_dir = Path(out_dir)
    paths = []
    cfg = spec.wlan
    for n in spec.n_list:
        nominal = _nominal(n, cfg.w_standard, cfg.max_retx, cfg.cw_cap)
        path = out_dir / f"nominal_N{n}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["l", "k", "prob"])
            for l in nominal:
                for k, p in enumerate(nominal[l].probs):
                    w.writerow([l, k, f"{p:.12g}"])
        sol_path = out_dir / f"nominal_solutions_N{n}.csv"
        with open(sol_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["l", "p", "tau", "p_c", "tau_c", "cap_binds"])
            for l in nominal:
                s = nominal.solutions[l]
                w.writerow([l, f"{s.p:.12g}", f"{s.tau:.12g}", f"{s.p_c:.12g}", f"{s.tau_c:.12g}",
                            int(nominal.cap_binds(l))])
        paths += [path, sol_path]
    return paths


def write_run_meta(out_dir, verb, spec: ExperimentSpec, seed, paper_scale, outputs):
    lines = [
        f"tool=cwelab {__version__}",
        f"verb={verb}",
        f"kind={spec.kind}",
        f"config={spec.source}",
        f"config_hash={spec.digest()}",
        f"base_seed={seed}",
        "seed_derivation=numpy SeedSequence([base_seed, tag, N, unit index, ...])",
        f"paper_scale={int(paper_scale)}",
        f"trials={spec.trials} collisions={spec.collisions}",
        "setups=" + ",".join(f"{n}:{c}" for n, c in sorted(spec.setups.items())),
        "outputs=" + ",".join(Path(p).name for p in outputs),
    ]
    (Path(out_dir) / "run-meta.txt").write_text("\n".join(lines) + "\n")
