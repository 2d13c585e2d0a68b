import csv
import json
import os
import subprocess
import sys

import pytest

from osmoglove import cli, dataset as ds, synthetic
from osmoglove.wire import PACKET_LEN


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundle")
    synthetic.make_bundle(root, n_demos=2, seed=1, spec=synthetic.DemoSpec(seconds=3.0), teleports={1: [40]})
    return root


# --- simulate / decode / analyze ----------------------------------------------

def test_simulate_sixty_seconds(tmp_path, capsys):
    out = tmp_path / "a.osmo"
    assert run("simulate", "--scenario", "finger-wave", "--seconds", 60, "--seed", 7, "--out", out) == 0
    assert out.stat().st_size == 1500 * PACKET_LEN
    assert "1500 packets" in capsys.readouterr().out


def test_simulate_is_deterministic(tmp_path, monkeypatch):
    a, b, c = tmp_path / "a.osmo", tmp_path / "b.osmo", tmp_path / "c.osmo"
    run("simulate", "--seconds", 4, "--seed", 7, "--out", a)
    run("simulate", "--seconds", 4, "--seed", 7, "--out", b)
    monkeypatch.setenv("OSMO_SEED", "7")
    run("simulate", "--seconds", 4, "--out", c)
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    run("simulate", "--seconds", 4, "--seed", 8, "--out", b)
    assert a.read_bytes() != b.read_bytes()


def test_seed_precedence(monkeypatch):
    monkeypatch.setenv("OSMO_SEED", "5")
    assert cli.resolve_seed(None, {"seed": None}) == 5
    assert cli.resolve_seed(None, {"seed": 3}) == 3
    assert cli.resolve_seed(9, {"seed": 3}) == 9
    monkeypatch.delenv("OSMO_SEED")
    assert cli.resolve_seed(None, {"seed": None}) == 0


def test_unknown_scenario_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        run("simulate", "--scenario", "juggling", "--out", tmp_path / "x.osmo")
    assert e.value.code == 2


def test_bad_scenario_file_and_config(tmp_path):
    (tmp_path / "s.json").write_text('{"kind": "finger-wave", "trials": 0}')
    assert run("simulate", "--scenario-file", tmp_path / "s.json", "--out", tmp_path / "x.osmo") == 2
    (tmp_path / "c.json").write_text('{"ik": {"nope": 1}}')
    assert run("simulate", "--config", tmp_path / "c.json", "--out", tmp_path / "x.osmo") == 2
    assert run("simulate", "--geometry", tmp_path / "missing.json", "--out", tmp_path / "x.osmo") == 2
    assert not (tmp_path / "x.osmo").exists()


def test_press_scenario(tmp_path):
    assert run("simulate", "--scenario", "press", "--presses", 3, "--taxel", "ring_distal", "--force", 2,
               "--out", tmp_path / "p.osmo") == 0
    assert run("simulate", "--scenario", "press", "--taxel", "elbow", "--out", tmp_path / "q.osmo") == 2


def test_decode_reports_and_csv(tmp_path, capsys):
    s = tmp_path / "s.osmo"
    run("simulate", "--seconds", 2, "--out", s)
    capsys.readouterr()
    assert run("decode", s, "--csv", tmp_path / "d.csv") == 0
    assert "packets ok 50" in capsys.readouterr().out
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert len(rows) == 51 and len(rows[0]) == 1 + 72
    (tmp_path / "junk.osmo").write_bytes(os.urandom(3000))
    assert run("decode", tmp_path / "junk.osmo") == 1


def test_analyze_table_order(tmp_path, capsys):
    assert run("analyze", "--seconds", 10, "--trials", 1, "--csv", tmp_path / "t.csv") == 0
    text = capsys.readouterr().out
    lines = [l for l in text.splitlines() if "mag" in l]
    assert [l.split("  ")[0].strip() for l in lines[:3]] == ["Unshielded + 1 mag", "Unshielded + 2 mags",
                                                            "Shielded + 2 mags"]
    assert "Thumb Distal" in text and "Middle Distal" in text and "Avg" in text
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert len(rows) == 6
    avg = {(r["taxel"], r["config"]): float(r["avg_ut"]) for r in rows}
    for taxel in ("thumb_distal", "middle_distal"):
        assert avg[(taxel, "Shielded + 2 mags")] < avg[(taxel, "Unshielded + 2 mags")] < avg[
            (taxel, "Unshielded + 1 mag")]


def test_analyze_constant_stream_is_zero(tmp_path, capsys):
    s = tmp_path / "still.osmo"
    run("simulate", "--scenario", "static", "--seconds", 4, "--noise", 0, "--out", s)
    assert run("analyze", f"{s}:unshielded", "--csv", tmp_path / "z.csv") == 0
    rows = list(csv.DictReader(open(tmp_path / "z.csv")))
    assert rows and all(float(r[k]) == 0.0 for r in rows for k in ("x_ut", "y_ut", "z_ut", "avg_ut"))


def test_analyze_corrupted_stream(tmp_path, capsys):
    s = tmp_path / "c.osmo"
    run("simulate", "--seconds", 4, "--out", s, "--no-shield")
    data = bytearray(s.read_bytes())
    data[10 * PACKET_LEN + 50: 12 * PACKET_LEN + 3] = os.urandom(2 * PACKET_LEN - 47)
    s.write_bytes(bytes(data))
    capsys.readouterr()
    assert run("analyze", f"{s}:unshielded") == 0
    out = capsys.readouterr().out
    assert "97 packets ok, 3 dropped" in out
    assert "Unshielded + 1 mag" in out


def test_analyze_missing_file(tmp_path):
    assert run("analyze", tmp_path / "none.osmo") == 2


# --- pipeline -----------------------------------------------------------------

def test_process_and_export(bundle, tmp_path, capsys, caplog):
    assert run("process", bundle, "--out", tmp_path / "ds", "--human-out", tmp_path / "h") == 0
    out = capsys.readouterr().out
    assert "dataset: 2 trajectories, 150 frames" in out
    assert "demo_001: frame 40 unsafe" in caplog.text
    data = ds.read_dataset(tmp_path / "ds")
    assert len(data) == 2 and data.normalization is not None
    assert run("export-csv", tmp_path / "ds", "--out", tmp_path / "x.csv") == 0
    assert len(list(csv.reader(open(tmp_path / "x.csv")))) == 151


def test_process_is_deterministic(bundle, tmp_path):
    run("process", bundle, "--out", tmp_path / "a")
    run("process", bundle, "--out", tmp_path / "b")
    for name in ("manifest.json", "trajectories/demo_000.rec", "trajectories/demo_001.rec"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_staged_commands(bundle, tmp_path):
    (tmp_path / "joints").mkdir()
    for demo in ("demo_000", "demo_001"):
        assert run("refine", bundle / "demos" / demo, "--out", tmp_path / f"{demo}.jsonl") == 0
        assert run("retarget", tmp_path / f"{demo}.jsonl", "--out", tmp_path / "joints" / f"{demo}.csv") == 0
    assert run("build-dataset", bundle, "--joints", tmp_path / "joints", "--out", tmp_path / "staged") == 0
    run("process", bundle, "--out", tmp_path / "direct")
    for name in ("trajectories/demo_000.rec", "trajectories/demo_001.rec"):
        assert (tmp_path / "staged" / name).read_bytes() == (tmp_path / "direct" / name).read_bytes()


def test_missing_extrinsics_fails_fast(bundle, tmp_path):
    assert run("process", bundle, "--extrinsics", tmp_path / "nope.json", "--out", tmp_path / "o") == 2
    assert not (tmp_path / "o").exists()


def test_build_dataset_length_mismatch(bundle, tmp_path):
    (tmp_path / "j").mkdir()
    for demo in ("demo_000", "demo_001"):
        run("refine", bundle / "demos" / demo, "--out", tmp_path / f"{demo}.jsonl")
        run("retarget", tmp_path / f"{demo}.jsonl", "--out", tmp_path / "j" / f"{demo}.csv")
    lines = (tmp_path / "j" / "demo_000.csv").read_text().splitlines()
    (tmp_path / "j" / "demo_000.csv").write_text("\n".join(lines[:-1]) + "\n")
    assert run("build-dataset", bundle, "--joints", tmp_path / "j", "--out", tmp_path / "o") == 1


def test_corrupt_dataset_export_fails(bundle, tmp_path):
    run("process", bundle, "--out", tmp_path / "ds")
    rec = tmp_path / "ds" / "trajectories" / "demo_000.rec"
    data = bytearray(rec.read_bytes())
    data[-5] ^= 0xFF
    rec.write_bytes(bytes(data))
    assert run("export-csv", tmp_path / "ds", "--out", tmp_path / "x.csv") == 1


# --- config display -----------------------------------------------------------

def test_show_config(capsys):
    assert run("show-config") == 0
    cfg = json.loads(capsys.readouterr().out)
    assert set(cfg) == {"pipeline", "geometry", "chain", "environment", "scenario"}
    assert cfg["pipeline"]["ik"]["damping"] == 0.01
    assert run("show-config", "--section", "scenario") == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "finger-wave"


def test_show_config_reflects_config_file(tmp_path, capsys):
    (tmp_path / "c.json").write_text('{"safety": {"max_wrist_speed": 0.5}}')
    run("show-config", "--section", "pipeline", "--config", tmp_path / "c.json")
    assert json.loads(capsys.readouterr().out)["safety"]["max_wrist_speed"] == 0.5


def test_synth_demos_command(tmp_path):
    assert run("synth-demos", tmp_path / "b", "--demos", 1, "--seconds", 2, "--teleport", "0:10") == 0
    assert (tmp_path / "b" / "demos" / "demo_000" / "glove.osmo").is_file()
    assert run("synth-demos", tmp_path / "c", "--teleport", "zero") == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "osmoglove.cli", "show-config", "--section", "environment"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "ground" in r.stdout
    r = subprocess.run([sys.executable, "-m", "osmoglove.cli", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == 2
