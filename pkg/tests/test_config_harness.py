import dataclasses
from fractions import Fraction

import pytest

from cwelab import cli, harness
from cwelab.config import DESK_SETUPS, FULL_SCALE_SETUPS, ExperimentSpec, default_spec, parse_config
from cwelab.errors import ConfigError
from cwelab.harness import AccuracyPoint, AccuracyReport

SMALL = """\
# tiny sweep for fast tests
n_list = 3
t_list = 2, 4
th_c_list = 0.0, 0.5, 0.9
delta_list = 0, 10
trials = 2
collisions = 10
setups = 3:2
fig1_duration_s = 0.5
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return path


def write(tmp_path, text):
    path = tmp_path / "x.cfg"
    path.write_text(text)
    return path


def test_minimal_file_applies_defaults(tmp_path):
    spec = parse_config(write(tmp_path, "# nothing but a comment\n"))
    w = spec.wlan
    assert (w.w_standard, w.max_retx, w.slot_us, w.difs_us) == (16, 7, 9, 34)
    assert (spec.zeta, spec.th_c) == (180, 0.5)
    assert w.accuracy_table == {3: 0.96, 6: 0.94, 9: 0.88}
    assert spec.setups == DESK_SETUPS and (spec.trials, spec.collisions) == (20, 200)


def test_full_file_parses(tmp_path):
    text = """
w_standard = 32
accuracy_table = 3:0.5, 6:0.25
modes = ideal, cit_full
[station.0]
cw_min = 4
sensing = 0, 1
[station.1]
cw_min = 16
traffic = poisson
rate_pps = 20
"""
    spec = parse_config(write(tmp_path, text))
    assert spec.wlan.w_standard == 32
    assert spec.wlan.accuracy_table == {3: 0.5, 6: 0.25}
    assert spec.modes == ("ideal", "cit_full")
    s0, s1 = spec.wlan.stations
    assert s0.sensing_set == frozenset({0, 1}) and s1.sensing_set is None
    assert s1.traffic == "poisson" and s1.rate_pps == 20.0


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("t_list = 5, -1\n", 1, "positive"),
        ("duration_s = -3\n", 1, "positive"),
        ("[station.0]\ncw_min = 4\n[station.0]\n", 3, "duplicate station"),
        ("trials = 3\nbogus = 1\n", 2, "unknown key"),
        ("[station.2]\nspeed = 9\n", 2, "unknown key"),
        ("trials = three\n", 1, "malformed"),
        ("trials\n", 1, "key = value"),
        ("trials =\n", 1, "empty value"),
        ("[stations.1]\n", 1, "section"),
        ("trials = 2\ntrials = 3\n", 2, "twice"),
        ("th_c = 1.5\n", 1, "[0, 1]"),
        ("modes = ideal, magic\n", 1, "entries"),
    ],
)
def test_line_precise_rejections(tmp_path, text, line, fragment):
    path = write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    msg = str(info.value)
    assert f"{path}:{line}:" in msg and fragment in msg


def test_cross_field_rejections(tmp_path):
    with pytest.raises(ConfigError, match="sense itself"):
        parse_config(write(tmp_path, "[station.0]\nsensing = 1\n[station.1]\n"))
    with pytest.raises(ConfigError, match="cw_low"):
        parse_config(write(tmp_path, "cw_low = 9\ncw_high = 4\n"))
    with pytest.raises(ConfigError, match="no such"):
        parse_config(tmp_path / "missing.cfg")


def test_digest_tracks_file_text(tmp_path):
    a = parse_config(write(tmp_path, "trials = 3\n"))
    b = parse_config(write(tmp_path, "trials = 3 # same value\n"))
    assert len(a.digest()) == 16 and a.digest() != b.digest()


def test_full_scale_counts():
    spec = default_spec().paper_scale()
    assert (spec.trials, spec.collisions, spec.setups) == (100, 1000, FULL_SCALE_SETUPS)


def test_accuracy_point_arithmetic():
    pt = AccuracyPoint(2, 3) + AccuracyPoint(1, 3, 2)
    assert pt == AccuracyPoint(3, 6, 2)
    assert pt.accuracy_pct == Fraction(50)
    assert pt.accuracy_pct * pt.total == 100 * pt.correct
    assert AccuracyPoint(0, 0).accuracy_pct == 0


def test_accuracy_report_cross_check():
    rep = AccuracyReport(axes=("N",))
    rep.add((3,), AccuracyPoint(96, 100))
    rep.add((3,), AccuracyPoint(1, 3))
    assert rep.pct(3) == pytest.approx(9700 / 103)
    assert rep.check()
    rep.points[(4,)] = AccuracyPoint(5, 3)
    with pytest.raises(AssertionError):
        rep.check()


def test_seed_derivation_is_stable():
    assert harness._seed(0, 1, 2) == harness._seed(0, 1, 2)
    assert harness._seed(0, 1, 2) != harness._seed(0, 2, 1)


def test_cit_report_independent_of_jobs(small_cfg):
    spec = parse_config(small_cfg)
    one = harness.run_cit_accuracy(spec, seed=5, jobs=1)
    two = harness.run_cit_accuracy(spec, seed=5, jobs=2)
    assert one.points == two.points
    assert set(one.points) == {(3, d, th) for d in (0.0, 10.0) for th in (0.0, 0.5, 0.9)}
    assert all(pt.total == 20 for pt in one.points.values())


def test_cwe_report_shape(small_cfg):
    spec = dataclasses.replace(parse_config(small_cfg), modes=("ideal",))
    rep = harness.run_cwe_accuracy(spec, seed=1)
    assert set(rep.points) == {("ideal", 3, 2.0), ("ideal", 3, 4.0)}
    for pt in rep.points.values():
        assert pt.total + pt.insufficient == 6


def test_setup_config_draws_within_bounds():
    spec = ExperimentSpec()
    cfg = harness.setup_config(spec, 9, 4, seed=3)
    assert len(cfg.stations) == 9
    assert all(2 <= s.cw_min <= 16 for s in cfg.stations)
    assert cfg.duration_s == 60.0
    assert cfg == harness.setup_config(spec, 9, 4, seed=3)


@pytest.mark.parametrize(
    "verb, files",
    [
        ("fig1", ["fig1_throughput.csv"]),
        ("cit-sweep", ["cit_accuracy_N3.csv"]),
        ("cwe-accuracy", ["cwe_accuracy_cit_empirical.csv", "cwe_accuracy_ideal.csv"]),
        ("nominal-dump", ["nominal_N3.csv", "nominal_solutions_N3.csv"]),
    ],
)
def test_cli_verbs_are_byte_identical_across_reruns(tmp_path, small_cfg, verb, files):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main([verb, "--config", str(small_cfg), "--out", str(out), "--seed", "7"]) == 0
        outs.append(out)
    for name in files + ["run-meta.txt"]:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    meta = (outs[0] / "run-meta.txt").read_text()
    assert f"verb={verb}" in meta and "base_seed=7" in meta
    assert f"config_hash={parse_config(small_cfg).digest()}" in meta
    assert "outputs=" + ",".join(files) in meta


def test_cli_csv_contents(tmp_path, small_cfg):
    cli.main(["cit-sweep", "--config", str(small_cfg), "--out", str(tmp_path)])
    lines = (tmp_path / "cit_accuracy_N3.csv").read_text().splitlines()
    assert lines[0] == "delta_pct,th_c,correct,total,accuracy_pct"
    assert len(lines) == 1 + 6
    for row in lines[1:]:
        _, _, correct, total, pct = row.split(",")
        assert abs(Fraction(pct) - Fraction(100 * int(correct), int(total))) <= Fraction(1, 20000)
    cli.main(["fig1", "--config", str(small_cfg), "--out", str(tmp_path)])
    rows = (tmp_path / "fig1_throughput.csv").read_text().splitlines()
    assert rows[0].startswith("cw_min_s3,") and len(rows) == 16


def test_cli_errors(tmp_path, capsys):
    bad = write(tmp_path, "trials = 0\n")
    assert cli.main(["fig1", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "trials" in capsys.readouterr().err
    assert cli.main(["fig1", "--out", str(tmp_path), "--seed", "-1"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["nope", "--out", str(tmp_path)])
