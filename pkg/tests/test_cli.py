"""Command-line driver: artifacts, exit codes, and the verify loop."""

import json
import os

import pytest

from equidecomp.cli import (EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK,
                            EXIT_VERIFY, main)

# smallest window/seed pair that still matches a handful of points, so the
# tamper and override tests below have real rows to corrupt
TOY = ["L=16", "margin=4", "n0=1", "seed=3"]


def run(cmd, out, extra=()):
    args = [cmd, "--set", "out=%s" % out]
    for kv in TOY + list(extra):
        args += ["--set", kv]
    return main(args)


def test_square_then_verify(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert run("square", out) == EXIT_OK
    text = capsys.readouterr().out
    assert "PASS a_partition" in text and "FAIL" not in text
    for name in ("pieces.csv", "summary.json"):
        assert os.path.exists(os.path.join(out, name))
    assert main(["verify", "--dir", out]) == EXIT_OK
    text = capsys.readouterr().out
    assert "PASS summary_counts" in text
    assert text.strip().endswith("verify: ok")
    # k=1 runs never emit rasters even when asked
    assert not os.path.exists(os.path.join(out, "pieces_a.ppm"))


def test_square_artifacts_are_reproducible(tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert run("square", out1) == EXIT_OK
    assert run("square", out2) == EXIT_OK
    p1 = (tmp_path / "a" / "pieces.csv").read_bytes()
    p2 = (tmp_path / "b" / "pieces.csv").read_bytes()
    assert p1 == p2
    s1 = json.loads((tmp_path / "a" / "summary.json").read_text())
    s2 = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert s1["config"].pop("out") != s2["config"].pop("out")
    assert s1 == s2


def test_verify_with_base_point_echo(tmp_path):
    out = str(tmp_path / "run")
    assert run("square", out, extra=["x0=0.3"]) == EXIT_OK
    assert main(["verify", "--dir", out]) == EXIT_OK


def test_verify_catches_tampering(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert run("square", out) == EXIT_OK
    csv_path = tmp_path / "run" / "pieces.csv"
    lines = csv_path.read_text().splitlines()
    assert len(lines) > 1
    cols = lines[1].split(",")
    cols[3] = str(int(cols[3]) + 2)            # bend one translation
    lines[1] = ",".join(cols)
    csv_path.write_text("\r\n".join(lines) + "\r\n")
    assert main(["verify", "--dir", out]) == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out


def test_verify_missing_and_malformed_artifacts(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert run("square", out) == EXIT_OK
    os.rename(os.path.join(out, "pieces.csv"), os.path.join(out, "x.csv"))
    assert main(["verify", "--dir", out]) == EXIT_VERIFY
    assert "missing artifact" in capsys.readouterr().out
    os.rename(os.path.join(out, "x.csv"), os.path.join(out, "pieces.csv"))

    with open(os.path.join(out, "pieces.csv"), "a", newline="") as fh:
        fh.write("7,7,7\r\n")                  # truncated row
    assert main(["verify", "--dir", out]) == EXIT_VERIFY
    msg = capsys.readouterr().out
    assert "schema error" in msg and "row" in msg


def test_verify_config_override_changes_field(tmp_path):
    out = str(tmp_path / "run")
    assert run("square", out) == EXIT_OK
    assert main(["verify", "--dir", out, "--set", "out=%s" % out]
                + sum((["--set", kv] for kv in TOY), [])
                + ["--set", "seed=8"]) == EXIT_VERIFY


def test_flow_and_integralize_artifacts(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert run("flow", out) == EXIT_OK
    assert os.path.exists(os.path.join(out, "flow.bin"))
    meta = json.loads((tmp_path / "run" / "flow.json").read_text())
    assert meta["repair"]["doublings"] >= 0
    assert run("integralize", out) == EXIT_OK
    assert os.path.exists(os.path.join(out, "integral_flow.bin"))
    assert "max_dev_core" in capsys.readouterr().out


def test_discrepancy_table(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert run("discrepancy", out, extra=["ns=2,4,8"]) == EXIT_OK
    raw = (tmp_path / "run" / "discrepancy.csv").read_bytes()
    assert raw.startswith(b"n,max_d_a,max_d_b\r\n")
    assert len(raw.decode().strip().splitlines()) == 4
    assert "slope_a=" in capsys.readouterr().out


def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["square", "--set", "L=zero"]) == EXIT_CONFIG
    assert main(["square", "--set", "wat=1"]) == EXIT_CONFIG
    # margin=0 passes config validation but the repair stage needs a ring
    assert run("flow", out, extra=["margin=0"]) == EXIT_CONFIG
    capsys.readouterr()
    # measure mismatch is an infeasibility with a named stage
    code = run("square", out, extra=["shape_b=intervals:0:1/2"])
    assert code == EXIT_INFEASIBLE
    err = capsys.readouterr().err
    assert "infeasible: sample" in err


def test_config_file_plus_overrides(tmp_path):
    cfgf = tmp_path / "run.cfg"
    cfgf.write_text("\n".join(TOY) + "\n")
    out = str(tmp_path / "run")
    assert main(["square", "--config", str(cfgf),
                 "--set", "out=%s" % out]) == EXIT_OK
    assert os.path.exists(os.path.join(out, "summary.json"))
