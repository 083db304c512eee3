"""End-to-end checks of the command line front end."""

import json
import math

import numpy as np
import pytest

from phononpair.cli import build_system, main, parse_quantity
from phononpair.errors import ConfigError
from phononpair.jumps import ClickRecord

TWO_PI = 2.0 * math.pi


def _read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


# ---------------------------------------------------------------------------
# unit parsing

def test_parse_quantity_units():
    assert parse_quantity("2 MHz", "frequency", "omega_m") == pytest.approx(TWO_PI * 2e6)
    assert parse_quantity("10kHz", "frequency", "alpha") == pytest.approx(TWO_PI * 1e4)
    assert parse_quantity("-2.0 MHz", "frequency", "detuning") == pytest.approx(
        -TWO_PI * 2e6
    )
    assert parse_quantity("0.25", "plain", "n_m") == 0.25
    assert parse_quantity("1.5 ms", "time", "tau_max") == pytest.approx(1.5e-3)
    assert parse_quantity("2.0", "time", "duration") == 2.0
    assert parse_quantity("20 mK", "temperature", "temperature") == pytest.approx(0.020)


@pytest.mark.parametrize(
    "text,kind",
    [
        ("2.0", "frequency"),  # bare frequency: refuse to guess the scale
        ("0.1 Hz", "plain"),
        ("20", "temperature"),
        ("3 parsec", "time"),
        ("2.3.4 MHz", "frequency"),
        ("fast", "time"),
    ],
)
def test_parse_quantity_rejects(text, kind):
    with pytest.raises(ConfigError):
        parse_quantity(text, kind, "key")


def test_paper_preset_override_rules():
    sys1 = build_system("paper", {"omega_m": TWO_PI * 3e6})
    assert sys1.detuning == pytest.approx(-TWO_PI * 3e6)
    assert sys1.gamma == pytest.approx(TWO_PI * 3e6 / 2e7)
    sys2 = build_system("paper", {"kappa": TWO_PI * 5e5})
    assert sys2.kappa_r == pytest.approx(TWO_PI * 5e5)
    sys3 = build_system("paper", {"quality": 1e7})
    assert sys3.gamma == pytest.approx(sys3.omega_m / 1e7)
    with pytest.raises(ConfigError):
        build_system("paper", {"n_m": 0.1})
    with pytest.raises(ConfigError):
        build_system("desk", {"gamma_eff": 2.0})  # no n_m


# ---------------------------------------------------------------------------
# derive

def test_derive_paper_stdout_and_files(tmp_path, capsys):
    assert main(["derive", "--preset", "paper", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "0.06851" in out
    assert "0.01563" in out
    table = _read_csv(tmp_path / "derived.csv")
    got = dict(zip(np.genfromtxt(tmp_path / "derived.csv", delimiter=",",
                                 skip_header=1, usecols=0, dtype=str), table["value"]))
    assert got["n_m"] == pytest.approx(0.0685, abs=1e-3)
    assert got["f_b"] == pytest.approx(172.2, abs=0.5)
    assert got["f_r"] == pytest.approx(41.3, abs=0.5)
    assert got["tau_max"] == pytest.approx(4.737e-4, rel=1e-3)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["mode"] == "derive"
    assert man["outputs"] == ["derived.csv"]
    assert man["system"]["omega_m"] == pytest.approx(TWO_PI * 2e6)


def test_derive_desk_config_json(tmp_path):
    cfg = tmp_path / "desk.ini"
    cfg.write_text(
        "[system]\npreset = desk\nn_m = 0.25\ngamma_eff = 2.0\n"
        "[output]\nformat = json\n"
    )
    out_dir = tmp_path / "out"
    assert main(["derive", "--config", str(cfg), "--out-dir", str(out_dir)]) == 0
    got = json.loads((out_dir / "derived.json").read_text())
    assert got["n_m"] == pytest.approx(0.25)
    assert got["gamma_eff"] == pytest.approx(2.0)
    # purely optical desk cooling: f_b = gamma_eff n (n+1)
    assert got["f_b"] == pytest.approx(2.0 * 0.25 * 1.25)


@pytest.mark.parametrize(
    "body",
    [
        "[system]\npreset = paper\nomega_m = 2.0\n",  # unitless frequency
        "[system]\npreset = paper\nwavelength = 1550 nm\n",
        "[system]\npreset = desk\ngamma_eff = 1.0\n",  # missing n_m
        "[system]\npreset = desk\nn_m = 0.1 Hz\n",
        "[mystery]\nx = 1\n",
        "[system]\npreset = paper\ntemperature = 20 mK\nn_th = 10\n",
    ],
)
def test_config_rejections(tmp_path, capsys, body):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(body)
    code = main(["derive", "--config", str(cfg), "--out-dir", str(tmp_path)])
    assert code == 2
    err = _stderr_json(capsys)
    assert err["error"] == "ConfigError"
    assert err["exit_code"] == 2


def test_derive_needs_preset(capsys, tmp_path):
    assert main(["derive", "--out-dir", str(tmp_path)]) == 2
    assert "preset" in _stderr_json(capsys)["message"]


# ---------------------------------------------------------------------------
# sweep

def test_sweep_desk(tmp_path):
    cfg = tmp_path / "base.ini"
    cfg.write_text("[system]\npreset = desk\nn_m = 0.1\ngamma_eff = 2.0\n")
    out_dir = tmp_path / "out"
    code = main(
        ["sweep", "--config", str(cfg), "--param", "n_m", "--start", "0.05",
         "--stop", "0.25", "--points", "5", "--out-dir", str(out_dir)]
    )
    assert code == 0
    table = _read_csv(out_dir / "sweep.csv")
    assert table.shape == (5,)
    assert table["n_m"][0] == pytest.approx(0.05)
    assert table["n_m"][-1] == pytest.approx(0.25)
    # base gamma_eff = 2 must survive the per-point rebuild
    np.testing.assert_allclose(table["gamma_eff"], 2.0, rtol=1e-12)
    np.testing.assert_allclose(
        table["f_b"], 2.0 * table["n_m"] * (1.0 + table["n_m"]), rtol=1e-9
    )


# ---------------------------------------------------------------------------
# witness map

def test_witness_map_outputs(tmp_path):
    assert main(["witness-map", "--out-dir", str(tmp_path)]) == 0
    boundary = _read_csv(tmp_path / "boundary.csv")
    assert boundary["n_m"][-1] == pytest.approx(0.26, abs=0.005)
    assert boundary["gamma_tau"][-1] == 0.0
    assert np.all(np.diff(boundary["gamma_tau"]) < 0)
    grid = _read_csv(tmp_path / "witness_map.csv")
    at_zero = grid[(np.isclose(grid["n_m"], 0.05)) & (grid["gamma_tau"] == 0.0)]
    n = at_zero["n_m"][0]
    want = 1.0 - 4.0 * n * (2.0 * n + 1.0) / (1.0 + n) ** 2
    assert at_zero["depth"][0] == pytest.approx(want, abs=1e-9)
    svg = (tmp_path / "witness_map.svg").read_text()
    assert svg.startswith("<?xml")
    assert "<!-- phononpair" in svg.splitlines()[1]


def test_rerun_reproduces_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["witness-map", "--out-dir", str(a)]) == 0
    assert main(["rerun", str(a / "manifest.json"), "--out-dir", str(b)]) == 0
    for name in ("witness_map.csv", "boundary.csv", "witness_map.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


# ---------------------------------------------------------------------------
# simulate + analyze round trips

@pytest.fixture(scope="module")
def jump_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("jumps")
    cfg = root / "run.ini"
    cfg.write_text(
        "[system]\npreset = desk\nn_m = 0.3\n"
        "[pair]\ndelta = 5.0\nphi = 0.0\n"
        "[numerics]\nduration = 400\nn_max = 5\nseed = 42\n"
    )
    out_dir = root / "out"
    code = main(["simulate-jumps", "--config", str(cfg), "--out-dir", str(out_dir)])
    return code, cfg, out_dir


def test_simulate_jumps(jump_run):
    code, _, out_dir = jump_run
    assert code == 0
    rec = ClickRecord.load_binary(out_dir / "clicks.bin")
    assert rec.duration == pytest.approx(400.0)
    assert set(rec.detectors) <= {"A", "B"}
    # two oscillators, each scattering at f_b + f_r = 2 n (n+1)
    expect = 2.0 * 2.0 * 0.3 * 1.3 * 400.0
    assert abs(rec.counts() - expect) < 5.0 * math.sqrt(expect)
    assert rec.params["delta"] == pytest.approx(5.0)


def test_seeded_rerun_is_identical(jump_run):
    code, cfg, out_dir = jump_run
    assert code == 0
    twin = out_dir.parent / "twin"
    assert main(["rerun", str(out_dir / "manifest.json"), "--out-dir", str(twin)]) == 0
    assert (twin / "clicks.bin").read_bytes() == (out_dir / "clicks.bin").read_bytes()
    fresh = out_dir.parent / "fresh"
    code = main(
        ["simulate-jumps", "--config", str(cfg), "--out-dir", str(fresh), "--seed", "43"]
    )
    assert code == 0
    assert (fresh / "clicks.bin").read_bytes() != (out_dir / "clicks.bin").read_bytes()


def test_analyze_click_record(jump_run, tmp_path, capsys):
    code, _, out_dir = jump_run
    assert code == 0
    an = tmp_path / "an"
    assert main(["analyze", str(out_dir / "clicks.bin"), "--out-dir", str(an)]) == 0
    for name in ("g2_AbAr.csv", "g2_BbAr.csv", "witness.csv", "first_blue.json",
                 "classical.json", "g2.svg", "manifest.json"):
        assert (an / name).exists()
    est = _read_csv(an / "g2_AbAr.csv")
    assert np.all(np.isfinite(est["value"]))
    assert np.all(est["std_error"] >= 0.0)
    verdicts = json.loads((an / "classical.json").read_text())
    assert isinstance(verdicts["cs_violated"], bool)
    assert "witness crossing" in capsys.readouterr().out


def test_analyze_empty_record(tmp_path, capsys):
    rec = ClickRecord(
        times=np.array([]),
        detectors=np.array([], dtype="<U6"),
        colors=np.array([], dtype="<U4"),
        duration=50.0,
        seed=None,
        params={"gamma_eff": 1.0, "n_m": 0.1, "delta": 0.0, "phi": 0.0},
    )
    path = tmp_path / "empty.bin"
    rec.save_binary(path)
    code = main(["analyze", str(path), "--out-dir", str(tmp_path / "an")])
    assert code == 4
    err = _stderr_json(capsys)
    assert err["error"] == "EmptyChannelError"


def test_heterodyne_surrogate_roundtrip(tmp_path):
    cfg = tmp_path / "het.ini"
    cfg.write_text(
        "[system]\npreset = desk\nn_m = 0.3\n"
        "[numerics]\nengine = surrogate\nduration = 300\nn_records = 2\n"
        "dt = 2e-3\nseed = 5\n"
    )
    out_dir = tmp_path / "out"
    assert main(["simulate-heterodyne", "--config", str(cfg),
                 "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "heterodyne.bin").exists()
    an = tmp_path / "an"
    assert main(["analyze", str(out_dir / "heterodyne.bin"),
                 "--out-dir", str(an)]) == 0
    recon = _read_csv(an / "g2_singleblue_after_singlered.csv")
    assert np.all(np.isfinite(recon["value"]))
    svg = (an / "g2_reconstructed.svg").read_text()
    assert svg.startswith("<?xml")


def test_surrogate_rejects_pair(tmp_path, capsys):
    cfg = tmp_path / "het.ini"
    cfg.write_text(
        "[system]\npreset = desk\nn_m = 0.3\n"
        "[pair]\ndelta = 0.0\n"
        "[numerics]\nengine = surrogate\nduration = 50\n"
    )
    code = main(["simulate-heterodyne", "--config", str(cfg),
                 "--out-dir", str(tmp_path / "out")])
    assert code == 2
    assert _stderr_json(capsys)["error"] == "ConfigError"
