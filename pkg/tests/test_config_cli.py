from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from kfsi.cli import COLUMNS, main
from kfsi.config import RunConfig, load_config, parse_config, parse_forcing, serialize_config
from kfsi.errors import ConfigError
from kfsi.solver import Forcing

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_empty_config_gives_defaults():
    c = parse_config("")
    assert c == RunConfig()
    assert (c.nu, c.c_mem, c.c_ben, c.kappa, c.N, c.n_rings, c.dt) == (1.0, 1.0, 1.0, 1e-3, 64, 8, 1e-3)


def test_comments_and_whitespace():
    c = parse_config("# header\n\n  kappa =  0.01   # trailing\nforcing = constant(1, -2)\n")
    assert c.kappa == 0.01
    assert c.forcing == Forcing("constant", (1.0, -2.0))


def test_negative_kappa_names_line():
    with pytest.raises(ConfigError) as info:
        parse_config("nu = 1\nkappa = -1\n")
    assert info.value.line == 2
    assert info.value.key == "kappa"
    assert "line 2" in str(info.value)


@pytest.mark.parametrize(
    "text, line",
    [
        ("foo = 1", 1),
        ("nu = 1\nnu = 2", 2),
        ("dt = fast", 1),
        ("N = 62", 1),
        ("t_end = 0", 1),
        ("frame_stride = 0", 1),
        ("mode = verify:nothing", 1),
        ("forcing = gravity(9.8)", 1),
        ("modes = 2-0.1", 1),
        ("\n\njust words", 3),
        ("dt = nan", 1),
    ],
)
def test_invalid_lines(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line


def test_ring_count_checked_against_boundary():
    with pytest.raises(ConfigError) as info:
        parse_config("N = 32\nn_rings = 8\n")
    assert info.value.line == 2


def test_sample_config_round_trips():
    c = load_config(CONFIGS / "sample.cfg")
    text = serialize_config(c)
    assert parse_config(text) == c
    assert serialize_config(parse_config(text)) == text


def test_round_trip_of_every_field():
    c = RunConfig(
        shape="ellipse",
        semi_axes=(1.1, 0.9),
        modes=((2, 0.05), (5, -0.01)),
        initial_velocity="rotation",
        omega=0.3,
        forcing=Forcing("vortex", (0.25,)),
        mode="verify:stokes",
        dt=1.0 / 3.0,
    )
    assert parse_config(serialize_config(c)) == c


def test_forcing_parser():
    assert parse_forcing("zero") == Forcing()
    assert parse_forcing("vortex(2)") == Forcing("vortex", (2.0,))


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def _write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return str(p)


def test_rest_state_run(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path, "t_end = 0.01\nframe_stride = 5\n")
    assert main(["--config", cfg, "--output-dir", str(out)]) == 0
    rows = _rows(out / "timeseries.csv")
    assert tuple(rows[0]) == COLUMNS
    assert len(rows) == 12
    data = np.array(rows[1:], dtype=float)
    assert not np.any(data[:, 7])  # budget residual
    assert np.all(data[:, 8] == data[0, 8])  # enclosed area
    assert sorted(p.name for p in out.glob("frame_*.csv")) == [
        "frame_000000.csv",
        "frame_000005.csv",
        "frame_000010.csv",
    ]
    frame = _rows(out / "frame_000010.csv")
    assert frame[0] == ["node_kind", "index", "x", "y", "vx", "vy"]
    assert sum(r[0] == "boundary" for r in frame[1:]) == 64
    assert len(frame) - 1 == 545


def test_rotation_run(tmp_path):
    out = tmp_path / "rot"
    assert main(["--config", str(CONFIGS / "rotation.cfg"), "--output-dir", str(out)]) == 0
    data = np.array(_rows(out / "timeseries.csv")[1:], dtype=float)
    ke = data[:, 1]
    assert ke[-1] < ke[0]
    # decay only at the discretization level
    assert (ke[0] - ke[-1]) / ke[0] < 1e-3
    assert np.all(data[:, 1:6] >= 0)


def test_huge_dt_exits_with_tangling(tmp_path, capsys):
    out = tmp_path / "huge"
    assert main(["--config", str(CONFIGS / "huge_dt.cfg"), "--output-dir", str(out)]) == 3
    assert "tangled" in capsys.readouterr().err
    assert (out / "final_state.csv").exists()


def test_config_error_exit(tmp_path, capsys):
    assert main(["--config", _write(tmp_path, "kappa = -1\n")]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["--config", _write(tmp_path, ""), "--frames-every", "0"]) == 2


def test_verify_mode(tmp_path, capsys):
    cfg = _write(tmp_path, "")
    assert main(["--config", cfg, "--mode", "verify:recovery"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2


def test_frames_every_override(tmp_path):
    out = tmp_path / "f"
    cfg = _write(tmp_path, "t_end = 0.004\n")
    assert main(["--config", cfg, "--output-dir", str(out), "--frames-every", "2"]) == 0
    assert len(list(out.glob("frame_*.csv"))) == 3


def test_run_config_steps():
    assert replace(RunConfig(), t_end=0.2, dt=1e-3).n_steps == 200
    assert RunConfig(mode="verify:energy").suite == "energy"
