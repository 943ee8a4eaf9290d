"""Recover a station's backoff draws from the AP's observation log."""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import MalformedObservationError
from .estimator import BackoffSample
from .markov import common_support_len
from .sim import Collision, ObservationLog, Success

ROUND_TOL = 1e-6


def derive_backoff(gap_us, cot_total_us, q, difs_us, slot_us, freeze_credit=0):
    """Backoff slots between the end of one frame and the start of the next.

    ``gap_us`` spans ``t_f`` to ``t_s``; ``q`` foreign busy periods totalling
    ``cot_total_us`` fall inside it, each followed by its own DIFS.
    ``freeze_credit`` adds the slots a frozen station consumes at each busy
    start (1 under EDCA slot-boundary rules, 0 for legacy DCF).
    """
    raw = (gap_us - cot_total_us - (q + 1) * difs_us) / slot_us + q * freeze_credit
    k = round(raw)
    if raw < -ROUND_TOL or abs(raw - k) > ROUND_TOL:
        raise MalformedObservationError(f"non-integral or negative backoff {raw:.6f}")
    return int(k)


@dataclass
class TrackerState:
    idle_us: int = 0
    cot_us: int = 0
    q: int = 0
    queue_size: int = 1
    samples: list = field(default_factory=list)
    discarded: int = 0
    gated: int = 0

    def reset(self):
        self.idle_us = self.cot_us = self.q = 0


def track(log: ObservationLog, station_id, w_standard=16, max_retx=7, state=None, cw_cap=1024):
    """Backoff samples for one station, in transmission order.

    Samples after a frame that reported an empty queue are skipped; collided
    frames count as non-empty. Values no compliant station could draw (above
    ``min(2^M * W_s, cw_cap) - 1``) are kept but flagged invalid.
    """
    st = TrackerState() if state is None else state
    limit = common_support_len(w_standard, max_retx, cw_cap) - 1
    frame_us = log.frame_us

    def emit(t_us):
        if st.queue_size > 0:
            try:
                k = derive_backoff(
                    st.idle_us + st.cot_us, st.cot_us, st.q,
                    log.difs_us, log.slot_us, log.freeze_credit,
                )
            except MalformedObservationError:
                st.discarded += 1
            else:
                st.samples.append(BackoffSample(station_id, k, k <= limit, t_us))
        else:
            st.gated += 1
        st.reset()

    for ev in log.events:
        if ev.kind == "idle_end":
            st.idle_us += ev.duration_us
            continue
        a = ev.attribution
        if isinstance(a, Success) and a.station == station_id:
            emit(ev.start_us)
            st.queue_size = a.queue_size
        elif isinstance(a, Collision) and station_id in a.identified_set:
            own = sorted(t for s, t in a.identified if s == station_id)
            # it kept counting down until its own start (it may not hear the others)
            st.idle_us += max(0, own[0] - ev.start_us)
            emit(own[0])
            st.queue_size = 1
            # a hidden station can retry inside the same overlap chain
            for prev, nxt in zip(own, own[1:]):
                st.idle_us += nxt - (prev + frame_us)
                emit(nxt)
            if not ev.truncated:
                st.idle_us += max(0, ev.end_us - (own[-1] + frame_us))
        else:
            st.q += 1
            st.cot_us += ev.duration_us
    return st.samples


def track_all(log: ObservationLog, w_standard=16, max_retx=7, cw_cap=1024):
    return {sid: track(log, sid, w_standard, max_retx, cw_cap=cw_cap) for sid in log.station_ids}


def write_samples(samples, fh):
    fh.write("station_id\tindex\tvalue\tvalid\n")
    for i, s in enumerate(samples):
        fh.write(f"{s.station_id}\t{i}\t{s.value}\t{int(s.valid)}\n")
