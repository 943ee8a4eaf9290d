import hashlib
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwelab import cit
from cwelab.cit import (
    BasebandSignal,
    ChannelParams,
    composite,
    fo_separation_ok,
    generate_preamble_template,
    identify,
    load_preamble_asset,
    modified_preamble,
    pack_iq,
    read_signal,
    sample_fo_set,
    suppress_peaks,
    synthesize_collision,
    unpack_iq,
    write_signal,
    xcorr,
    xcorr_bank,
)
from cwelab.errors import ConfigError, InfeasibleError


@pytest.fixture(scope="module")
def tmpl():
    return generate_preamble_template()


def test_template_shape_and_power(tmpl):
    assert len(tmpl) == 320
    assert np.mean(np.abs(tmpl.samples) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert (tmpl.sts_period, tmpl.lts_period, tmpl.ltf_cp) == (16, 64, 32)


def test_template_periodicity(tmpl):
    s = tmpl.samples
    stf = s[:160]
    lag16 = abs(np.vdot(stf[:-16], stf[16:])) / np.linalg.norm(stf[:-16]) / np.linalg.norm(stf[16:])
    assert lag16 > 0.9
    # the two long training symbols repeat exactly, the CP copies their tail
    assert np.allclose(s[192:256], s[256:320])
    assert np.allclose(s[160:192], s[224:256])
    assert abs(np.vdot(s, s)) / np.vdot(s, s).real == pytest.approx(1.0)


def test_packaged_asset_matches_generator(tmpl):
    raw = resources.files("cwelab").joinpath("data/preamble.bin").read_bytes()
    assert len(raw) == 2560
    digest = resources.files("cwelab").joinpath("data/preamble.sha256").read_text().split()[0]
    assert hashlib.sha256(raw).hexdigest() == digest
    assert np.max(np.abs(load_preamble_asset().samples - tmpl.samples)) < 1e-6


def test_iq_packing_round_trip():
    x = np.array([1 + 2j, -0.5 - 0.25j, 0j], dtype=complex)
    raw = pack_iq(x)
    assert len(raw) == 24
    assert np.frombuffer(raw, "<f4").tolist() == [1.0, 2.0, -0.5, -0.25, 0.0, 0.0]
    assert np.array_equal(unpack_iq(raw), x.astype(np.complex64))


def test_signal_dump_round_trip(tmp_path):
    sig = BasebandSignal(np.exp(1j * np.arange(10)))
    path = tmp_path / "y.bin"
    write_signal(sig, path)
    raw = path.read_bytes()
    assert int.from_bytes(raw[:8], "little") == 10 and len(raw) == 8 + 80
    assert np.allclose(read_signal(path).samples, sig.samples, atol=1e-6)
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_signal(path)


def test_signal_validation():
    with pytest.raises(ValueError):
        BasebandSignal(np.array([np.nan]))
    with pytest.raises(ValueError):
        BasebandSignal(np.ones(3), sample_rate_hz=0)


def test_channel_params_validation():
    for kw in ({"phase_rad": 7.0}, {"fo_hz": 2e5}, {"start_offset": -1}):
        with pytest.raises(ValueError):
            ChannelParams(0, **kw)


def test_modified_preamble(tmpl):
    assert np.allclose(modified_preamble(tmpl, 0, 0).samples, tmpl.samples)
    assert np.allclose(modified_preamble(tmpl, 0, np.pi).samples, -tmpl.samples)
    rot = modified_preamble(tmpl, 80e3, 1.1).samples
    assert np.allclose(np.abs(rot), np.abs(tmpl.samples))
    n = np.arange(320)
    assert np.allclose(rot, np.exp(1j * 1.1) * np.exp(2j * np.pi * n * 80e3 / 20e6) * tmpl.samples)


def test_synthesis_noiseless_single_station(tmpl):
    y = synthesize_collision(tmpl, 100, [ChannelParams(0, snr_db=np.inf)], seed=1)
    assert len(y) == 420
    assert np.allclose(y.samples[:320], tmpl.samples)
    assert np.allclose(np.abs(y.samples[320:]), 1.0)


def test_synthesis_support(tmpl):
    chans = [ChannelParams(0, snr_db=np.inf), ChannelParams(1, start_offset=2000, snr_db=np.inf)]
    y = synthesize_collision(tmpl, 500, chans, seed=2)
    assert len(y) == 2000 + 820
    assert abs(y.samples[-1]) > 0


def test_synthesis_fo_referenced_to_own_start(tmpl):
    c = ChannelParams(0, fo_hz=50e3, start_offset=700, snr_db=np.inf)
    y = synthesize_collision(tmpl, 10, [c], seed=0)
    assert np.allclose(y.samples[700:1020], modified_preamble(tmpl, 50e3, 0).samples)


def test_noise_variance_at_10db(tmpl):
    chans = [ChannelParams(0, gain=1.0, snr_db=10.0), ChannelParams(1, gain=0.5, start_offset=300, snr_db=10.0)]
    noisy = synthesize_collision(tmpl, 100_000, chans, seed=9).samples
    clean = synthesize_collision(
        tmpl, 100_000, [ChannelParams(c.station_id, c.gain, c.phase_rad, c.fo_hz, c.start_offset, np.inf) for c in chans],
        seed=9,
    ).samples
    noise = noisy - clean
    assert noise.size >= 100_000
    # strongest station has unit sample power
    assert np.var(noise) == pytest.approx(0.1, rel=0.05)


def test_xcorr_unity_peak_and_bounds(tmpl):
    p = modified_preamble(tmpl, -40e3, 2.0)
    g = xcorr(p, p.samples)
    assert g[0] == pytest.approx(1.0, abs=1e-12)
    assert g.min() >= 0.0 and g.max() <= 1.0


def test_xcorr_zero_input_is_zero(tmpl):
    assert not xcorr(tmpl, np.zeros(500)).any()


def test_xcorr_matches_direct_sum(tmpl):
    rng = np.random.default_rng(4)
    y = rng.standard_normal(700) + 1j * rng.standard_normal(700)
    p = tmpl.samples
    g = xcorr(tmpl, y)
    padded = np.concatenate([y, np.zeros(320)])
    for m in (0, 1, 150, 380, 699):
        seg = padded[m:m + 320]
        want = abs(np.vdot(p, seg)) / (np.linalg.norm(p) * np.linalg.norm(seg))
        assert g[m] == pytest.approx(want, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 800))
def test_gamma_always_in_unit_interval(seed, length):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(length) * rng.choice([0.0, 1e-9, 1.0, 1e6]) + 1j * rng.standard_normal(length)
    g = xcorr_bank([generate_preamble_template(), modified_preamble(generate_preamble_template(), 1e5, 1)], y)
    assert g.shape == (2, length)
    assert np.all((g >= 0) & (g <= 1))


def test_composite():
    g, owner = composite([[0.3, 0.3], [0.7, 0.7]])
    assert g.tolist() == [0.7, 0.7] and owner.tolist() == [1, 1]
    g, owner = composite([[0.5, 0.2], [0.5, 0.9]])
    assert owner.tolist() == [0, 1]
    with pytest.raises(ValueError):
        composite([[0.1, 0.2], [0.3]])
    g, owner = composite([[0.4, 0.1]])
    assert g.tolist() == [0.4, 0.1]


def test_suppress_peaks_assigns_each_station_once():
    g = np.zeros((2, 1000))
    g[0, 100] = 0.95
    g[0, 600] = 0.9  # second peak of the same station is ignored
    g[1, 150] = 0.8  # within zeta of the first peak: blanked
    g[1, 700] = 0.7
    v = suppress_peaks(g, [5, 7], th_c=0.5, zeta=180)
    assert v.colliders == [(5, 100, 0.95), (7, 700, 0.7)]
    assert v.offsets() == {5: 100, 7: 700}


def test_single_clean_transmission_identified(tmpl):
    # other stations' templates reach sidelobes near 0.2 on a lone preamble, so
    # the guarantee starts a little above that
    for seed in range(20):
        rng = np.random.default_rng(seed)
        fos = dict(enumerate(sample_fo_set(9, 0, rng=rng)))
        ph = dict(enumerate(rng.uniform(0, 2 * np.pi, 9)))
        y = synthesize_collision(tmpl, 2000, [ChannelParams(1, 1.0, ph[1], fos[1], 400, np.inf)], rng=rng)
        for th in (0.25, 0.5, 0.75, 0.9):
            v = identify(y, fos, ph, th_c=th, template=tmpl)
            assert v.stations == {1} and v.offsets()[1] == 400


def test_lone_preamble_sidelobes_stay_low(tmpl):
    rng = np.random.default_rng(0)
    fos = dict(enumerate(sample_fo_set(9, 0, rng=rng)))
    ph = dict(enumerate(rng.uniform(0, 2 * np.pi, 9)))
    y = synthesize_collision(tmpl, 0, [ChannelParams(3, 1.0, ph[3], fos[3], 0, np.inf)], rng=rng)
    v = identify(y, fos, ph, th_c=0.01, template=tmpl)
    assert v.colliders[0][:2] == (3, 0)
    assert max(c[2] for c in v.colliders[1:]) < 0.25


def test_noise_only_gives_empty_verdict(tmpl):
    fos = dict(enumerate(sample_fo_set(6, seed=1)))
    ph = {i: 0.1 * i for i in range(6)}
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = (rng.standard_normal(3000) + 1j * rng.standard_normal(3000)) * np.sqrt(0.05)
        assert identify(y, fos, ph, th_c=0.5, template=tmpl).stations == frozenset()


def test_phase_invariance(tmpl):
    rng = np.random.default_rng(8)
    fos = dict(enumerate(sample_fo_set(4, 10, rng=rng)))
    ph = dict(enumerate(rng.uniform(0, 2 * np.pi, 4)))
    chans = [ChannelParams(0, 1.0, ph[0], fos[0], 0), ChannelParams(2, 1.0, ph[2], fos[2], 1500)]
    y = synthesize_collision(tmpl, 2000, chans, rng=rng).samples
    base = identify(y, fos, ph, template=tmpl)
    for angle in (0.7, 2.0, 5.5):
        rotated = identify(y * np.exp(1j * angle), fos, ph, template=tmpl)
        assert rotated.offsets() == base.offsets()
    assert base.stations == {0, 2}


def test_identify_argument_errors(tmpl):
    y = np.zeros(400)
    with pytest.raises(ConfigError):
        identify(y, {0: 0.0}, {0: 0.0, 1: 0.0}, template=tmpl)
    with pytest.raises(ConfigError):
        identify(y, {0: 0.0, 1: 0.0}, {0: 0.0}, template=tmpl)
    with pytest.raises(ValueError):
        identify(y, {0: 0.0}, {0: 0.0}, th_c=1.5, template=tmpl)


def test_fo_sampling():
    plain = sample_fo_set(50, 0, seed=1)
    assert np.all(np.abs(plain) <= 125e3)
    sep = sample_fo_set(9, 10, seed=2)
    assert fo_separation_ok(sep, 10)
    assert sample_fo_set(1, 10, seed=3).size == 1
    assert not fo_separation_ok([100.0, 105.0], 10)
    with pytest.raises(InfeasibleError):
        sample_fo_set(200, 90, seed=4, max_rejections=1000)


def test_default_template_is_the_packaged_asset():
    assert np.array_equal(cit.default_template().samples, load_preamble_asset().samples)
