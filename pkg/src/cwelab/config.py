"""Line-oriented experiment configuration.

Format::

    # comment
    duration_s = 20
    n_list = 3, 6, 9

    [station.0]
    cw_min = 4
    sensing = 0, 2

Top-level keys precede the first ``[station.k]`` header. Every value is
checked as it is read and errors carry the file name and line number.
"""
from __future__ import annotations

import dataclasses
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .sim import DEFAULT_ACCURACY_TABLE, MODES, StationProfile, WlanConfig

_SECTION = re.compile(r"^\[station\.(-?\d+)\]$")

DESK_SETUPS = {3: 30, 6: 25, 9: 20}
FULL_SCALE_SETUPS = {3: 93, 6: 70, 9: 51}


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _int_list(v):
    return tuple(int(x) for x in v.split(",") if x.strip())


def _float_list(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _map(cast):
    def parse(v):
        out = {}
        for item in v.split(","):
            k, val = item.split(":")
            out[int(k)] = cast(val)
        return out

    return parse


def _str(v):
    return v


@dataclass
class ExperimentSpec:
    """Everything a harness verb needs: the WLAN template plus sweep axes."""

    wlan: WlanConfig = field(default_factory=lambda: WlanConfig(stations=[]))
    kind: str = ""  # fig1_throughput | cit_accuracy_sweep | cwe_accuracy_vs_T | nominal_dump
    n_list: tuple = (3, 6, 9)
    t_list: tuple = tuple(range(5, 61, 5))
    th_c_list: tuple = tuple(round(0.1 * i, 1) for i in range(11))
    delta_list: tuple = (0.0, 5.0, 10.0)
    modes: tuple = ("ideal", "cit_empirical")
    trials: int = 20
    collisions: int = 200
    setups: dict = field(default_factory=lambda: dict(DESK_SETUPS))
    cw_low: int = 2
    cw_high: int = 16
    th_c: float = 0.5
    zeta: int = 180
    snr_db: float = 10.0
    body_len: int = 2000
    fig1_duration_s: float = 10.0
    source: str = "<defaults>"
    digest_text: str = ""

    def paper_scale(self) -> ExperimentSpec:
        return dataclasses.replace(self, trials=100, collisions=1000, setups=dict(FULL_SCALE_SETUPS))

    def digest(self) -> str:
        return hashlib.sha256(self.digest_text.encode()).hexdigest()[:16]


# key -> (parser, destination object)
_TOP = {
    "w_standard": (_int, "wlan"),
    "max_retx": (_int, "wlan"),
    "cw_cap": (_int, "wlan"),
    "slot_us": (_int, "wlan"),
    "difs_us": (_int, "wlan"),
    "sifs_us": (_int, "wlan"),
    "ack_us": (_int, "wlan"),
    "phy_header_us": (_int, "wlan"),
    "payload_bytes": (_int, "wlan"),
    "phy_rate_mbps": (_float, "wlan"),
    "duration_s": (_float, "wlan"),
    "seed": (_int, "wlan"),
    "collision_id_mode": (_str, "wlan"),
    "countdown": (_str, "wlan"),
    "accuracy_table": (_map(float), "wlan"),
    "n_list": (_int_list, "spec"),
    "t_list": (_float_list, "spec"),
    "th_c_list": (_float_list, "spec"),
    "delta_list": (_float_list, "spec"),
    "modes": (lambda v: tuple(x.strip() for x in v.split(",") if x.strip()), "spec"),
    "trials": (_int, "spec"),
    "collisions": (_int, "spec"),
    "setups": (_map(int), "spec"),
    "cw_low": (_int, "spec"),
    "cw_high": (_int, "spec"),
    "th_c": (_float, "spec"),
    "zeta": (_int, "spec"),
    "snr_db": (_float, "spec"),
    "body_len": (_int, "spec"),
    "fig1_duration_s": (_float, "spec"),
}

_STATION = {
    "cw_min": _int,
    "sensing": lambda v: v if v == "all" else _int_list(v),
    "traffic": _str,
    "rate_pps": _float,
    "fo_hz": _float,
    "phase_rad": _float,
    "gain": _float,
}


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text()
    wlan_kw, spec_kw = {}, {}
    stations = {}  # id -> (line, {key: value})
    current = None

    for lineno, raw in enumerate(text.splitlines(), 1):
        where = f"{path}:{lineno}"
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = _SECTION.match(line)
            if not m:
                raise ConfigError(f"{where}: bad section header {line!r}")
            sid = int(m.group(1))
            if sid in stations:
                raise ConfigError(f"{where}: duplicate station id {sid}")
            if sid < 0:
                raise ConfigError(f"{where}: station id must be non-negative")
            stations[sid] = (lineno, {})
            current = sid
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if not value:
            raise ConfigError(f"{where}: empty value for {key!r}")
        table = _TOP if current is None else _STATION
        if key not in table:
            raise ConfigError(f"{where}: unknown key {key!r}")
        parser = table[key][0] if current is None else table[key]
        try:
            parsed = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: malformed value for {key!r}: {value!r}") from exc
        if current is not None:
            if key in stations[current][1]:
                raise ConfigError(f"{where}: {key!r} repeated in station {current}")
            stations[current][1][key] = parsed
            continue
        target = wlan_kw if table[key][1] == "wlan" else spec_kw
        if key in target:
            raise ConfigError(f"{where}: {key!r} given twice")
        _check_top(key, parsed, where)
        target[key] = parsed

    profiles = [_station(sid, line, kv, path) for sid, (line, kv) in sorted(stations.items())]
    wlan = WlanConfig(stations=profiles, **wlan_kw)
    if profiles:
        try:
            wlan.validate()
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    spec = ExperimentSpec(wlan=wlan, source=str(path), digest_text=text, **spec_kw)
    if spec.cw_low > spec.cw_high:
        raise ConfigError(f"{path}: cw_low exceeds cw_high")
    return spec


def _check_top(key, v, where):
    def need(ok, what):
        if not ok:
            raise ConfigError(f"{where}: {key} {what}")

    if key in ("duration_s", "fig1_duration_s", "phy_rate_mbps"):
        need(v > 0, "must be positive")
    elif key in ("slot_us", "difs_us", "payload_bytes", "trials", "collisions", "zeta", "body_len"):
        need(v > 0, "must be positive")
    elif key in ("sifs_us", "ack_us", "phy_header_us", "max_retx", "seed"):
        need(v >= 0, "must be non-negative")
    elif key in ("w_standard", "cw_cap", "cw_low", "cw_high"):
        need(v >= 2, "must be at least 2")
    elif key == "collision_id_mode":
        need(v in MODES, f"must be one of {MODES}")
    elif key == "modes":
        need(v and all(m in MODES for m in v), f"entries must be in {MODES}")
    elif key == "t_list":
        need(v and all(t > 0 for t in v), "entries must be positive")
    elif key == "n_list":
        need(v and all(n >= 2 for n in v), "entries must be at least 2")
    elif key in ("th_c", ):
        need(0.0 <= v <= 1.0, "must lie in [0, 1]")
    elif key == "th_c_list":
        need(v and all(0.0 <= t <= 1.0 for t in v), "entries must lie in [0, 1]")
    elif key == "delta_list":
        need(v and all(0.0 <= d < 100.0 for d in v), "entries must lie in [0, 100)")
    elif key == "accuracy_table":
        need(all(0.0 <= a <= 1.0 for a in v.values()), "entries must lie in [0, 1]")
    elif key == "setups":
        need(all(s > 0 for s in v.values()), "entries must be positive")


def _station(sid, line, kv, path) -> StationProfile:
    kw = dict(kv)
    sensing = kw.pop("sensing", "all")
    kw["sensing_set"] = None if sensing == "all" else frozenset(sensing)
    try:
        return StationProfile(sid, **kw)
    except TypeError as exc:  # pragma: no cover - keys are pre-filtered
        raise ConfigError(f"{path}:{line}: {exc}") from exc


def default_spec() -> ExperimentSpec:
    return ExperimentSpec(wlan=WlanConfig(stations=[], accuracy_table=dict(DEFAULT_ACCURACY_TABLE)))
