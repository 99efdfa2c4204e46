import csv
import io
import json

import pytest

from treessep.cli import run_cli


def out_of(capsys):
    return capsys.readouterr().out


def test_rate_command(capsys):
    assert run_cli(["rate", "--d", "2", "--p", "0.5", "--u", "1"]) == 0
    data = json.loads(out_of(capsys))
    assert data["I"] == pytest.approx(1.5)
    assert data["sigma2"] == pytest.approx(1 / 3)


def test_rate_vector(capsys):
    assert run_cli(["rate", "--d", "2", "--p", "0.5", "--u", "0.5", "0.5", "--points", "/", "/0"]) == 0
    data = json.loads(out_of(capsys))
    assert data["I"] == pytest.approx(0.5) and data["phi"] == pytest.approx([1.0, 1.0])


def test_kernel_table(capsys):
    assert run_cli(["kernel-table", "--d", "2", "--t", "1", "--kmax", "5"]) == 0
    rows = list(csv.DictReader(io.StringIO(out_of(capsys))))
    assert len(rows) == 6
    assert all(float(r["p"]) <= float(r["bound"]) for r in rows)
    assert [int(r["k"]) for r in rows] == list(range(6))


def test_potential_table(capsys):
    assert run_cli(["potential-table", "--d", "2", "--t", "4", "--kmax", "2"]) == 0
    rows = list(csv.DictReader(io.StringIO(out_of(capsys))))
    assert list(rows[0]) == ["d", "t", "k", "g", "green", "grad_pair_sum", "limit"]
    assert float(rows[0]["limit"]) == pytest.approx(4 / 3)


@pytest.mark.parametrize("argv", [
    ["rate", "--d", "2", "--p", "0.5", "--u", "1", "--bogus"],
    ["rate", "--d", "2", "--p", "1.5", "--u", "1"],
    ["moments", "--alpha", "0.4", "--t", "1", "--replicas", "5"],
    ["simulate", "--replicas", "1"],
    ["no-such-command"],
])
def test_validation_errors_exit_one(argv, capsys):
    assert run_cli(argv) == 1
    assert "error" in capsys.readouterr().err


def test_malformed_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("d = = 2\n")
    assert run_cli(["moments", "--config", str(cfg)]) == 1


def test_simulate_is_byte_identical(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"t": 1.5, "replicas": 3, "targets": ["/", "/1"], "radius": 4, "seed": 17,
                               "tilt": [0.5, 0.5]}))
    outs = []
    for i in range(2):
        led, ev = tmp_path / f"l{i}.csv", tmp_path / f"e{i}.ndjson"
        assert run_cli(["simulate", "--config", str(cfg), "--out", str(led), "--events-out", str(ev)]) == 0
        outs.append((led.read_bytes(), ev.read_bytes()))
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(io.StringIO(outs[0][0].decode())))
    assert len(rows) == 6 and set(rows[0]) == {"replica", "target", "X", "xi", "logXi"}
    event = json.loads(outs[0][1].decode().splitlines()[0])
    assert set(event) == {"replica", "time", "edge", "v1", "v2"}
    # --seed overrides the config
    led = tmp_path / "l_seed.csv"
    assert run_cli(["simulate", "--config", str(cfg), "--seed", "18", "--out", str(led)]) == 0
    assert led.read_bytes() != outs[0][0]


def test_moments_command(tmp_path):
    out = tmp_path / "m.json"
    assert run_cli(["moments", "--t", "1", "--replicas", "50", "--radius", "4", "--no-radius-check",
                    "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["kind"] == "moments" and data["config"]["radius"] == 4


def test_verify_duality_command(capsys):
    assert run_cli(["verify-duality", "--replicas", "500"]) == 0
    report = json.loads(out_of(capsys))
    assert report["pass"] and len(report["cases"]) == 3


def test_selftest_command(capsys):
    assert run_cli(["selftest"]) == 0
    lines = out_of(capsys).strip().splitlines()
    assert all(line.startswith("PASS") for line in lines) and len(lines) == 6
