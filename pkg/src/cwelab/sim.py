"""Event-driven 802.11 DCF simulator with hidden terminals.

Time is integer microseconds. Each station keeps its own view of the medium
(it only hears the stations in its ``sensing_set`` plus the AP's ACKs), so
hidden stations can overlap at the AP. The AP side is recorded as an
:class:`ObservationLog` of alternating idle and busy periods.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError

SATURATED = "saturated"
MODES = ("ideal", "cit_empirical", "cit_full")
FO_LIMIT_HZ = 125_000.0
# Backoff slots credited to a frozen station when a busy period starts on a
# slot boundary: EDCA decrements at that boundary, legacy DCF does not.
COUNTDOWN_CREDIT = {"edca": 1, "dcf": 0}
SATURATED_QUEUE_BYTES = 65_535
# Per-collision identification accuracy by network size, used by cit_empirical.
DEFAULT_ACCURACY_TABLE = {3: 0.96, 6: 0.94, 9: 0.88}


@dataclass(frozen=True)
class StationProfile:
    id: int
    cw_min: int = 16
    sensing_set: frozenset | None = None  # None: hears every station
    traffic: str = SATURATED  # "saturated" or "poisson"
    rate_pps: float = 0.0
    fo_hz: float = 0.0
    phase_rad: float = 0.0
    gain: float = 1.0


@dataclass
class WlanConfig:
    stations: list
    w_standard: int = 16
    max_retx: int = 7
    cw_cap: int = 1024
    slot_us: int = 9
    difs_us: int = 34
    sifs_us: int = 16
    ack_us: int = 44
    phy_header_us: int = 20
    payload_bytes: int = 1500
    phy_rate_mbps: float = 12.0
    duration_s: float = 10.0
    seed: int = 0
    collision_id_mode: str = "ideal"
    countdown: str = "edca"  # "edca" | "dcf"
    accuracy_table: dict = field(default_factory=lambda: dict(DEFAULT_ACCURACY_TABLE))

    @property
    def frame_us(self) -> int:
        return self.phy_header_us + math.ceil(self.payload_bytes * 8 / self.phy_rate_mbps)

    @property
    def duration_us(self) -> int:
        return int(round(self.duration_s * 1e6))

    def validate(self):
        if self.slot_us <= 0 or self.difs_us <= 0:
            raise ConfigError("slot_us and difs_us must be positive")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if not self.stations:
            raise ConfigError("at least one station required")
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate station ids in {ids}")
        known = set(ids)
        for s in self.stations:
            if s.cw_min < 2 or s.cw_min > self.cw_cap:
                raise ConfigError(f"station {s.id}: cw_min {s.cw_min} out of range")
            if s.sensing_set is not None:
                if s.id not in s.sensing_set:
                    raise ConfigError(f"station {s.id} does not sense itself")
                if not set(s.sensing_set) <= known:
                    raise ConfigError(f"station {s.id} senses unknown stations")
            if s.traffic not in (SATURATED, "poisson"):
                raise ConfigError(f"station {s.id}: unknown traffic {s.traffic!r}")
            if s.traffic == "poisson" and s.rate_pps <= 0:
                raise ConfigError(f"station {s.id}: poisson rate must be positive")
            if abs(s.fo_hz) > FO_LIMIT_HZ:
                raise ConfigError(f"station {s.id}: |fo_hz| exceeds {FO_LIMIT_HZ}")
            if s.gain <= 0:
                raise ConfigError(f"station {s.id}: gain must be positive")
        if self.countdown not in COUNTDOWN_CREDIT:
            raise ConfigError(f"unknown countdown rule {self.countdown!r}")
        if self.collision_id_mode not in MODES:
            raise ConfigError(f"unknown collision_id_mode {self.collision_id_mode!r}")
        return self

    def digest(self) -> str:
        def enc(o):
            if isinstance(o, frozenset):
                return sorted(int(x) for x in o)
            if isinstance(o, np.generic):
                return o.item()
            raise TypeError(type(o))

        blob = json.dumps(asdict(self), sort_keys=True, default=enc)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def full_mesh(cw_mins, **kw):
    """Config for stations that all hear each other."""
    return WlanConfig(stations=[StationProfile(i, int(cw)) for i, cw in enumerate(cw_mins)], **kw)


# --- observation log -------------------------------------------------------


@dataclass(frozen=True)
class Success:
    station: int
    queue_size: int


@dataclass(frozen=True)
class Collision:
    true_colliders: tuple  # ((station, start_us), ...)
    identified: tuple

    @property
    def true_set(self):
        return frozenset(s for s, _ in self.true_colliders)

    @property
    def identified_set(self):
        return frozenset(s for s, _ in self.identified)


@dataclass(frozen=True)
class ForeignBusy:
    pass


@dataclass(frozen=True)
class LogEvent:
    kind: str  # "idle_end" | "busy"
    start_us: int
    end_us: int
    attribution: object = None
    truncated: bool = False

    @property
    def duration_us(self):
        return self.end_us - self.start_us


@dataclass
class ObservationLog:
    events: list
    duration_us: int
    slot_us: int = 9
    difs_us: int = 34
    frame_us: int = 1020
    freeze_credit: int = 1
    station_ids: tuple = ()
    seed: int = 0
    config_hash: str = ""

    def truncate(self, t_us) -> ObservationLog:
        t_us = min(int(t_us), self.duration_us)
        out = []
        for ev in self.events:
            if ev.start_us >= t_us:
                break
            if ev.end_us > t_us:
                ev = LogEvent(ev.kind, ev.start_us, t_us, ev.attribution, True)
            out.append(ev)
        return self._with(out, t_us)

    def _with(self, events, duration_us=None):
        return ObservationLog(
            events, self.duration_us if duration_us is None else duration_us,
            self.slot_us, self.difs_us, self.frame_us, self.freeze_credit,
            self.station_ids, self.seed, self.config_hash,
        )

    def idle_time(self):
        return sum(e.duration_us for e in self.events if e.kind == "idle_end")

    def busy_time(self):
        return sum(e.duration_us for e in self.events if e.kind == "busy")

    def collisions(self):
        return [e for e in self.events if isinstance(e.attribution, Collision)]


def _fmt_pairs(pairs):
    return ",".join(f"{s}@{t}" for s, t in pairs) or "-"


def _parse_pairs(text):
    if text == "-":
        return ()
    return tuple(tuple(int(x) for x in item.split("@")) for item in text.split(","))


def write_log(log: ObservationLog, fh):
    fh.write(f"# cwelab observation log config_hash={log.config_hash} seed={log.seed}\n")
    fh.write(
        f"# duration_us={log.duration_us} slot_us={log.slot_us} difs_us={log.difs_us} "
        f"frame_us={log.frame_us} freeze_credit={log.freeze_credit} "
        f"stations={','.join(map(str, log.station_ids))}\n"
    )
    fh.write("# start_us\tend_us\tkind\tattribution\n")
    for ev in log.events:
        a = ev.attribution
        if a is None:
            attr = "-"
        elif isinstance(a, Success):
            attr = f"success station={a.station} queue={a.queue_size}"
        elif isinstance(a, Collision):
            attr = f"collision true={_fmt_pairs(a.true_colliders)} identified={_fmt_pairs(a.identified)}"
        else:
            attr = "foreign"
        if ev.truncated:
            attr += " truncated"
        fh.write(f"{ev.start_us}\t{ev.end_us}\t{ev.kind}\t{attr}\n")


def read_log(fh) -> ObservationLog:
    meta = {}
    events = []
    for line in fh:
        line = line.rstrip("\n")
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        if not line:
            continue
        start, end, kind, attr = line.split("\t")
        words = attr.split()
        truncated = "truncated" in words
        fields = dict(w.split("=", 1) for w in words if "=" in w)
        if words[0] == "success":
            a = Success(int(fields["station"]), int(fields["queue"]))
        elif words[0] == "collision":
            a = Collision(_parse_pairs(fields["true"]), _parse_pairs(fields["identified"]))
        elif words[0] == "foreign":
            a = ForeignBusy()
        else:
            a = None
        events.append(LogEvent(kind, int(start), int(end), a, truncated))
    stations = tuple(int(x) for x in meta.get("stations", "").split(",") if x)
    return ObservationLog(
        events, int(meta["duration_us"]), int(meta["slot_us"]), int(meta["difs_us"]),
        int(meta["frame_us"]), int(meta.get("freeze_credit", 1)), stations,
        int(meta.get("seed", 0)), meta.get("config_hash", ""),
    )


# --- ground truth and stats -------------------------------------------------


@dataclass
class Draw:
    value: int
    stage: int
    window: int
    time_us: int
    outcome: str = "pending"  # success | collision | dropped | abandoned | pending
    tx_start_us: int = -1


@dataclass
class StationStats:
    attempts: int = 0
    successes: int = 0
    collisions: int = 0
    drops: int = 0
    delivered_bits: int = 0
    success_airtime_us: int = 0


@dataclass
class SimResult:
    log: ObservationLog
    ground_truth: dict  # station id -> list[Draw]
    stats: dict  # station id -> StationStats
    duration_us: int

    def collision_probability(self):
        att = sum(s.attempts for s in self.stats.values())
        col = sum(s.collisions for s in self.stats.values())
        return col / att if att else 0.0


def throughput(result: SimResult):
    """Per-station ``(mbps, airtime_share)``; shares use successful airtime."""
    total_air = sum(s.success_airtime_us for s in result.stats.values())
    secs = result.duration_us / 1e6
    out = {}
    for sid, st in result.stats.items():
        share = st.success_airtime_us / total_air if total_air else 0.0
        out[sid] = (st.delivered_bits / secs / 1e6, share)
    return out


# --- the simulator ----------------------------------------------------------


class _Sta:
    __slots__ = (
        "id", "cw_min", "stage", "counter", "busy", "idle_since", "tx_end", "overlapped",
        "tx_start", "queue", "ready_at", "saturated", "next_arrival", "rate", "draw", "heard_by",
    )


def run(config: WlanConfig) -> SimResult:
    config.validate()
    root = np.random.SeedSequence(config.seed)
    backoff_rng, arrival_rng = (np.random.default_rng(s) for s in root.spawn(2))

    slot, difs = config.slot_us, config.difs_us
    frame_us = config.frame_us
    ack_span = config.sifs_us + config.ack_us
    horizon = config.duration_us
    m, cap = config.max_retx, config.cw_cap
    credit = COUNTDOWN_CREDIT[config.countdown]
    ids = [p.id for p in config.stations]

    stas = []
    for prof in config.stations:
        s = _Sta()
        s.id, s.cw_min = prof.id, prof.cw_min
        s.stage, s.counter, s.busy, s.idle_since = 0, 0, 0, 0
        s.tx_end, s.tx_start, s.overlapped = None, None, False
        s.saturated = prof.traffic == SATURATED
        s.rate = prof.rate_pps
        s.queue = 1 if s.saturated else 0
        s.ready_at = 0
        s.next_arrival = None if s.saturated else _exp_us(arrival_rng, s.rate)
        s.draw = None
        stas.append(s)
    by_id = {s.id: s for s in stas}
    for s in stas:
        s.heard_by = [
            o for o in stas
            if config.stations[ids.index(o.id)].sensing_set is None
            or s.id in config.stations[ids.index(o.id)].sensing_set
        ]

    truth = {i: [] for i in ids}
    stats = {i: StationStats() for i in ids}
    events = []
    ap_sources = 0
    ap_idle_since = 0
    cluster = []  # (station, start) of frames in the current AP busy period
    cluster_start = 0
    cluster_success = None
    ack_end = None

    def new_draw(s, t):
        if s.draw is not None and s.draw.outcome == "pending":
            s.draw.outcome = "abandoned"
        w = min(2**s.stage * s.cw_min, cap)
        s.counter = int(backoff_rng.integers(0, w))
        s.draw = Draw(s.counter, s.stage, w, t)
        truth[s.id].append(s.draw)

    def freeze(s, t):
        start = s.idle_since + difs
        if t > start or (credit and t == start):
            s.counter = max(0, s.counter - (t - start) // slot - credit)

    def medium_busy(listeners, t):
        for o in listeners:
            if o.busy == 0 and o.tx_end is None:
                freeze(o, t)
            o.busy += 1

    def medium_release(listeners, t):
        for o in listeners:
            o.busy -= 1
            if o.busy == 0:
                o.idle_since = t

    def ap_up(t):
        nonlocal ap_sources, cluster_start
        if ap_sources == 0:
            if t > ap_idle_since:
                events.append(LogEvent("idle_end", ap_idle_since, t))
            cluster_start = t
        ap_sources += 1

    def ap_down(t):
        nonlocal ap_sources, ap_idle_since, cluster, cluster_success
        ap_sources -= 1
        if ap_sources == 0:
            if cluster_success is not None:
                attr = cluster_success
            else:
                pairs = tuple(sorted(cluster))
                attr = Collision(pairs, pairs)
            events.append(LogEvent("busy", cluster_start, t, attr))
            cluster, cluster_success = [], None
            ap_idle_since = t

    for s in stas:
        new_draw(s, 0)

    while True:
        t_next = math.inf
        for s in stas:
            if s.tx_end is not None:
                t_next = min(t_next, s.tx_end)
            elif s.busy == 0 and s.queue > 0:
                t_next = min(t_next, max(s.idle_since + difs + s.counter * slot, s.ready_at))
            if s.next_arrival is not None:
                t_next = min(t_next, s.next_arrival)
        if ack_end is not None:
            t_next = min(t_next, ack_end)
        if t_next >= horizon:
            # past the horizon only in-flight frames and ACKs still finish
            t_next = min([s.tx_end for s in stas if s.tx_end is not None] + [ack_end or math.inf])
        if t_next == math.inf:
            break
        t = t_next

        # 1. frame ends
        for s in stas:
            if s.tx_end != t:
                continue
            st = stats[s.id]
            if not s.overlapped:
                st.successes += 1
                st.delivered_bits += config.payload_bytes * 8
                st.success_airtime_us += frame_us
                s.draw.outcome = "success"
                s.queue -= 0 if s.saturated else 1
                qbytes = SATURATED_QUEUE_BYTES if s.saturated else s.queue * config.payload_bytes
                cluster_success = Success(s.id, qbytes)
                ack_end = t + ack_span
                medium_busy(stas, t)
                ap_up(t)
                s.stage = 0
                s.tx_end = None
                medium_release(s.heard_by, t)
                ap_down(t)
                s.draw = None  # redrawn when the ACK ends
            else:
                st.collisions += 1
                if s.stage >= m:
                    st.drops += 1
                    s.draw.outcome = "dropped"
                    s.stage = 0
                    if not s.saturated:
                        s.queue -= 1
                else:
                    s.draw.outcome = "collision"
                    s.stage += 1
                s.tx_end = None
                s.overlapped = False
                medium_release(s.heard_by, t)
                ap_down(t)
                new_draw(s, t)
                if s.queue > 0:
                    s.ready_at = t

        # 2. ACK end
        if ack_end == t:
            ack_end = None
            medium_release(stas, t)
            ap_down(t)
            for s in stas:
                if s.draw is None:
                    new_draw(s, t)
                    s.ready_at = t

        # 3. arrivals
        for s in stas:
            if s.next_arrival != t:
                continue
            s.next_arrival = t + _exp_us(arrival_rng, s.rate)
            s.queue += 1
            if s.queue == 1 and s.tx_end is None:
                if s.busy > 0 and s.counter == 0 and s.draw is not None:
                    new_draw(s, t)
                s.ready_at = t

        # 4. transmission starts
        if t >= horizon:
            continue
        starters = [
            s for s in stas
            if s.tx_end is None and s.busy == 0 and s.queue > 0 and s.draw is not None
            and max(s.idle_since + difs + s.counter * slot, s.ready_at) == t
        ]
        for s in starters:
            ongoing = [o for o in stas if o.tx_end is not None]
            for o in ongoing:
                o.overlapped = True
            if ongoing:
                s.overlapped = True
            s.tx_start, s.tx_end = t, t + frame_us
            s.draw.tx_start_us = t
            s.counter = 0
            stats[s.id].attempts += 1
            cluster.append((s.id, t))
        for s in starters:
            medium_busy(s.heard_by, t)
            ap_up(t)

    if ap_sources == 0 and ap_idle_since < horizon:
        events.append(LogEvent("idle_end", ap_idle_since, horizon))
    log = ObservationLog(
        events, horizon, slot, difs, frame_us, credit, tuple(ids), config.seed, config.digest()
    ).truncate(horizon)
    log.duration_us = horizon
    return SimResult(log, truth, stats, horizon)


def _exp_us(rng, rate_pps):
    return max(1, int(round(rng.exponential(1e6 / rate_pps))))


# --- collision identification ------------------------------------------------


def inject_identification(log: ObservationLog, mode, seed=0, accuracy_table=None, config=None, th_c=None):
    """Replace each collision's ``identified`` set according to ``mode``.

    ``ideal`` keeps the true set. ``cit_empirical`` keeps it with probability
    ``accuracy_table[N]`` and otherwise drops or adds one station.
    ``cit_full`` synthesises the collided waveform from the per-station
    channel parameters in ``config`` and runs the correlation pipeline on it.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown collision_id_mode {mode!r}")
    if mode == "ideal":
        return log
    rng = np.random.default_rng(seed)
    ids = list(log.station_ids)
    if mode == "cit_empirical":
        table = DEFAULT_ACCURACY_TABLE if accuracy_table is None else accuracy_table
        if len(ids) not in table:
            raise ConfigError(f"no identification accuracy for N={len(ids)}")
        acc = float(table[len(ids)])
        relabel = lambda ev, a: _corrupt(ev, a, acc, ids, rng)  # noqa: E731
    else:
        if config is None:
            raise ConfigError("cit_full needs the station channel parameters")
        relabel = _cit_labeller(config, log.frame_us, rng, th_c)
    out = []
    for ev in log.events:
        a = ev.attribution
        if isinstance(a, Collision):
            ev = LogEvent(ev.kind, ev.start_us, ev.end_us, Collision(a.true_colliders, relabel(ev, a)), ev.truncated)
        out.append(ev)
    return log._with(out)


def _corrupt(ev, a, acc, ids, rng):
    if rng.random() < acc:
        return a.true_colliders
    pairs = list(a.true_colliders)
    outsiders = [s for s in ids if s not in a.true_set]
    if outsiders and (len(pairs) < 2 or rng.random() < 0.5):
        pairs.append((outsiders[int(rng.integers(len(outsiders)))], ev.start_us))
    else:
        pairs.pop(int(rng.integers(len(pairs))))
    return tuple(sorted(pairs))


def _cit_labeller(config, frame_us, rng, th_c):
    from . import cit

    per_us = int(cit.SAMPLE_RATE_HZ // 1_000_000)
    profiles = {p.id: p for p in config.stations}
    fo = {p.id: p.fo_hz for p in config.stations}
    phase = {p.id: p.phase_rad for p in config.stations}
    template = cit.default_template()
    body = frame_us * per_us - len(template)
    th = cit.DEFAULT_TH_C if th_c is None else th_c

    def label(ev, a):
        base = min(t for _, t in a.true_colliders)
        chans = [
            cit.ChannelParams(s, profiles[s].gain, profiles[s].phase_rad, profiles[s].fo_hz, (t - base) * per_us)
            for s, t in a.true_colliders
        ]
        y = cit.synthesize_collision(template, body, chans, rng=rng)
        verdict = cit.identify(y, fo, phase, th_c=th, template=template)
        return tuple(sorted((s, base + int(round(m / per_us))) for s, m, _ in verdict.colliders))

    return label
