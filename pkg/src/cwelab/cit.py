"""Collision identification from the legacy 802.11 preamble.

The AP keeps a frequency-offset and phase estimate per station. For a frame
it cannot decode it rotates the known preamble by each station's offset,
slides it over the received samples with a normalised correlation, and then
peels off peaks above a threshold, blanking ``zeta`` samples around each one.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, InfeasibleError

SAMPLE_RATE_HZ = 20e6
PREAMBLE_LEN = 320
STS_PERIOD = 16
LTS_PERIOD = 64
LTF_CP = 32
DEFAULT_ZETA = 180  # one 9 us slot at 20 Msps
DEFAULT_TH_C = 0.5
ENERGY_FLOOR = 1e-12
FO_RANGE_HZ = 125e3

# subcarriers -26..26
_STF = np.sqrt(13 / 6) * np.array(
    [0, 0, 1 + 1j, 0, 0, 0, -1 - 1j, 0, 0, 0, 1 + 1j, 0, 0, 0, -1 - 1j, 0, 0, 0, -1 - 1j, 0, 0, 0,
     1 + 1j, 0, 0, 0, 0, 0, 0, 0, -1 - 1j, 0, 0, 0, -1 - 1j, 0, 0, 0, 1 + 1j, 0, 0, 0, 1 + 1j, 0,
     0, 0, 1 + 1j, 0, 0, 0, 1 + 1j, 0, 0]
)
_LTF = np.array(
    [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 0,
     1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=complex,
)


@dataclass(frozen=True)
class BasebandSignal:
    samples: np.ndarray
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if not np.all(np.isfinite(s)):
            raise ValueError("non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class PreambleTemplate:
    samples: np.ndarray
    sts_period: int = STS_PERIOD
    lts_period: int = LTS_PERIOD
    ltf_cp: int = LTF_CP

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class ChannelParams:
    station_id: int
    gain: float = 1.0
    phase_rad: float = 0.0
    fo_hz: float = 0.0
    start_offset: int = 0
    snr_db: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.phase_rad < 2 * np.pi:
            raise ValueError("phase_rad must lie in [0, 2pi)")
        if abs(self.fo_hz) > FO_RANGE_HZ:
            raise ValueError("fo_hz outside +-125 kHz")
        if self.start_offset < 0:
            raise ValueError("start_offset must be non-negative")


@dataclass
class CollisionVerdict:
    colliders: list  # [(station_id, start_offset, peak_value)] in detection order

    @property
    def stations(self):
        return frozenset(s for s, _, _ in self.colliders)

    def offsets(self):
        return {s: m for s, m, _ in self.colliders}


def _bins(values):
    out = np.zeros(64, dtype=complex)
    for k, v in zip(range(-26, 27), values):
        out[k % 64] = v
    return out


def generate_preamble_template() -> PreambleTemplate:
    """Legacy STF (10 x 16 samples) + LTF (32 CP + 2 x 64), unit mean power."""
    sts = np.fft.ifft(_bins(_STF))
    lts = np.fft.ifft(_bins(_LTF))
    stf = np.tile(sts, 3)[:160]
    ltf = np.concatenate([lts[-LTF_CP:], lts, lts])
    pre = np.concatenate([stf, ltf])
    pre /= np.sqrt(np.mean(np.abs(pre) ** 2))
    return PreambleTemplate(pre)


def load_preamble_asset() -> PreambleTemplate:
    raw = resources.files("cwelab").joinpath("data/preamble.bin").read_bytes()
    expected = resources.files("cwelab").joinpath("data/preamble.sha256").read_text().split()[0]
    if hashlib.sha256(raw).hexdigest() != expected:
        raise ValueError("preamble asset checksum mismatch")
    return PreambleTemplate(unpack_iq(raw).astype(complex))


def pack_iq(samples) -> bytes:
    s = np.asarray(samples, dtype=np.complex64)
    inter = np.empty(2 * s.size, dtype="<f4")
    inter[0::2] = s.real
    inter[1::2] = s.imag
    return inter.tobytes()


def unpack_iq(raw: bytes) -> np.ndarray:
    inter = np.frombuffer(raw, dtype="<f4")
    return (inter[0::2] + 1j * inter[1::2]).astype(np.complex64)


def write_preamble_asset(directory, template=None):
    template = template or generate_preamble_template()
    directory = Path(directory)
    raw = pack_iq(template.samples)
    (directory / "preamble.bin").write_bytes(raw)
    (directory / "preamble.sha256").write_text(f"{hashlib.sha256(raw).hexdigest()}  preamble.bin\n")


def write_signal(signal: BasebandSignal, path):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(signal)))
        fh.write(pack_iq(signal.samples))


def read_signal(path) -> BasebandSignal:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    samples = unpack_iq(raw[8:])
    if samples.size != n:
        raise ValueError(f"header says {n} samples, found {samples.size}")
    return BasebandSignal(samples.astype(complex))


def modified_preamble(template, fo_hz, phase_rad, sample_rate_hz=SAMPLE_RATE_HZ) -> PreambleTemplate:
    p = getattr(template, "samples", template)
    n = np.arange(p.size)
    rot = np.exp(1j * phase_rad) * np.exp(2j * np.pi * n * fo_hz / sample_rate_hz)
    return PreambleTemplate(rot * p)


def synthesize_collision(template, body_len, channel, seed=None, rng=None) -> BasebandSignal:
    """Superpose preamble+body frames from several stations plus AWGN.

    Noise power is set from the strongest station's received power and its
    ``snr_db``.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    pre = getattr(template, "samples", template)
    frame_len = pre.size + body_len
    total = max(c.start_offset for c in channel) + frame_len
    y = np.zeros(total, dtype=complex)
    n = np.arange(frame_len)
    for c in channel:
        body = np.exp(0.5j * np.pi * (rng.integers(0, 4, body_len) + 0.5))
        x = np.concatenate([pre, body])
        ramp = np.exp(2j * np.pi * n * c.fo_hz / SAMPLE_RATE_HZ)
        y[c.start_offset:c.start_offset + frame_len] += c.gain * np.exp(1j * c.phase_rad) * ramp * x
    strongest = max(channel, key=lambda c: c.gain)
    if strongest.snr_db is not None and np.isfinite(strongest.snr_db):
        sigma2 = strongest.gain**2 / 10 ** (strongest.snr_db / 10)
        y += np.sqrt(sigma2 / 2) * (rng.standard_normal(total) + 1j * rng.standard_normal(total))
    return BasebandSignal(y)


def xcorr_bank(templates, y):
    """Normalised correlation of each template against ``y``; shape (N, |y|)."""
    ys = np.asarray(getattr(y, "samples", y), dtype=complex)
    ps = np.atleast_2d(np.asarray([getattr(p, "samples", p) for p in templates], dtype=complex))
    n_y, length = ys.size, ps.shape[1]
    padded = np.concatenate([ys, np.zeros(length, dtype=complex)])
    nfft = 1 << int(np.ceil(np.log2(padded.size + length)))
    spec_y = np.fft.fft(padded, nfft)
    spec_p = np.fft.fft(ps, nfft, axis=1)
    num = np.abs(np.fft.ifft(spec_y[None, :] * np.conj(spec_p), axis=1)[:, :n_y])
    energy = np.concatenate([[0.0], np.cumsum(np.abs(padded) ** 2)])
    win = energy[length:length + n_y] - energy[:n_y]
    norms = np.linalg.norm(ps, axis=1)
    floor = ENERGY_FLOOR * norms**2
    gam = np.zeros((ps.shape[0], n_y))
    for i in range(ps.shape[0]):
        ok = win > floor[i]
        gam[i, ok] = num[i, ok] / (norms[i] * np.sqrt(win[ok]))
    return np.clip(gam, 0.0, 1.0)


def xcorr(p_i, y):
    return xcorr_bank([p_i], y)[0]


def composite(gammas):
    """Pointwise maximum over rows and the owning row (lowest index on ties)."""
    lengths = {len(r) for r in gammas}
    if len(lengths) != 1:
        raise ValueError(f"rows have different lengths: {sorted(lengths)}")
    g = np.asarray(gammas, dtype=float)
    owner = np.argmax(g, axis=0)
    return g[owner, np.arange(g.shape[1])], owner


def suppress_peaks(gammas, station_ids, th_c=DEFAULT_TH_C, zeta=DEFAULT_ZETA) -> CollisionVerdict:
    """Greedy peak assignment with +-zeta blanking; each station at most once."""
    g = np.array(gammas, dtype=float, copy=True)
    active = np.ones(g.shape[0], dtype=bool)
    found = []
    while active.any():
        masked = np.where(active[:, None], g, -1.0)
        flat = int(np.argmax(masked))
        row, m = divmod(flat, g.shape[1])
        peak = masked[row, m]
        if peak <= th_c:
            break
        found.append((station_ids[row], int(m), float(peak)))
        g[:, max(0, m - zeta):m + zeta + 1] = 0.0
        active[row] = False
    return CollisionVerdict(found)


def station_gammas(y, fo_table, phase_table, template=None):
    template = template or default_template()
    ids = sorted(fo_table)
    for sid in ids:
        if sid not in phase_table:
            raise ConfigError(f"no phase estimate for station {sid}")
    mods = [modified_preamble(template, fo_table[s], phase_table[s]) for s in ids]
    return ids, xcorr_bank(mods, y)


def identify(y, fo_table, phase_table, th_c=DEFAULT_TH_C, zeta=DEFAULT_ZETA, template=None) -> CollisionVerdict:
    if not 0.0 <= th_c <= 1.0 or zeta < 1:
        raise ValueError("need th_c in [0, 1] and zeta >= 1")
    unknown = set(phase_table) - set(fo_table)
    if unknown:
        raise ConfigError(f"no FO estimate for stations {sorted(unknown)}")
    ids, gam = station_gammas(y, fo_table, phase_table, template)
    return suppress_peaks(gam, ids, th_c, zeta)


def sample_fo_set(n, delta_pct=0.0, range_hz=FO_RANGE_HZ, seed=None, rng=None, max_rejections=100_000):
    """Uniform FOs in ``[-range_hz, range_hz]``; no other entry may sit within
    ``delta_pct`` percent of any entry's own magnitude."""
    rng = np.random.default_rng(seed) if rng is None else rng
    frac = delta_pct / 100.0
    out = []
    rejections = 0
    while len(out) < n:
        c = float(rng.uniform(-range_hz, range_hz))
        if frac == 0 or all(abs(c - e) > frac * abs(e) and abs(c - e) > frac * abs(c) for e in out):
            out.append(c)
            continue
        rejections += 1
        if rejections >= max_rejections:
            raise InfeasibleError(f"could not place {n} offsets {delta_pct}% apart")
    return np.array(out)


def fo_separation_ok(fos, delta_pct):
    frac = delta_pct / 100.0
    for i, a in enumerate(fos):
        for j, b in enumerate(fos):
            if i != j and abs(a - b) <= frac * abs(a):
                return False
    return True


_TEMPLATE = None


def default_template() -> PreambleTemplate:
    """The packaged preamble asset, loaded once."""
    global _TEMPLATE
    if _TEMPLATE is None:
        _TEMPLATE = load_preamble_asset()
    return _TEMPLATE
