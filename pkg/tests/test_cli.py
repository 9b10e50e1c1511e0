import csv
import io
import json

import numpy as np
import pytest

from tklab.cli import main

ABS2 = '{"kind":"laurent_abs2","coeffs":[1],"exponents":[[1]]}'


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_volume_profile_to_file(tmp_path, capsys):
    out = tmp_path / "prof.csv"
    code, _, _ = run(capsys, "volume", "--potential", "fubini_study", "--n", "1",
                     "--range", "-5:5:0.05", "--out", str(out))
    assert code == 0
    table = rows(out.read_text())
    assert list(table[0]) == ["x1", "H", "vol", "logvol", "ric_min", "ric_max", "mu1"]
    mid = next(r for r in table if float(r["x1"]) == 0.0)
    assert float(mid["vol"]) == pytest.approx(np.pi, abs=1e-9)
    assert len(table) == 201


def test_flat_three_points(capsys):
    code, out, _ = run(capsys, "volume", "--potential", "flat", "--n", "1", "--range", "-1:1:1")
    assert code == 0
    vols = [float(r["vol"]) for r in rows(out)]
    np.testing.assert_allclose(vols, 2 * np.pi * np.exp([-1.0, 0.0, 1.0]), rtol=1e-15)


def test_two_by_two_grid_is_lexicographic(capsys):
    _, out, _ = run(capsys, "volume", "--potential", "fubini_study", "--n", "2", "--range", "0:1:1")
    pts = [(float(r["x1"]), float(r["x2"])) for r in rows(out)]
    assert pts == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_csv_round_trips_doubles(capsys):
    _, out, _ = run(capsys, "volume", "--potential", "fubini_study", "--n", "1", "--range", "0.1:0.3:0.1")
    from tklab import Box, make_builtin_potential, orbit_profile
    prof = orbit_profile(make_builtin_potential("fubini_study", 1), Box.cube(0.1, 0.3, 0.1, 1))
    assert [float(r["vol"]) for r in rows(out)] == prof.vol.tolist()


def test_json_mirrors_csv(capsys):
    _, out_csv, _ = run(capsys, "volume", "--potential", "flat", "--n", "1", "--range", "-1:1:1")
    _, out_json, _ = run(capsys, "volume", "--potential", "flat", "--n", "1", "--range", "-1:1:1",
                         "--format", "json")
    doc = json.loads(out_json)
    vols = [float(r["vol"]) for r in rows(out_csv)]
    assert [row["vol"] for row in doc["rows"]] == vols


def test_ricci_flat_is_zero(capsys):
    code, out, _ = run(capsys, "ricci", "--potential", "flat", "--n", "1", "--range", "-2:2:0.1")
    assert code == 0
    vals = [abs(float(r[k])) for r in rows(out) for k in ("ric_min", "ric_max")]
    assert max(vals) <= 1e-8


def test_classify_reports_consistency(capsys):
    code, out, _ = run(capsys, "classify", "--potential", "fubini_study", "--n", "1",
                       "--range", "-3:3:0.05", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["ricci"] == "positive" and doc["logvol"] == "strictly-concave"


def test_levi_and_average(capsys):
    code, out, _ = run(capsys, "levi", "--field", ABS2, "--range", "0:1:0.5")
    assert code == 0
    first = rows(out)[0]
    assert float(first["L11"]) == 2.0 and float(first["trace"]) == 4.0
    code, out, err = run(capsys, "average", "--field", ABS2, "--range", "-1:1:0.25")
    assert code == 0 and "strictly-convex" in out + err


def test_psh_check_negative_control_exits_one(capsys):
    neg = '{"kind":"sum","terms":[' + ABS2 + '],"weights":[-1]}'
    code, _, _ = run(capsys, "psh-check", "--field", neg, "--range", "-1:1:0.5")
    assert code == 1


def test_critical_and_moment(capsys):
    code, out, _ = run(capsys, "critical", "--potential", "fubini_study", "--n", "2",
                       "--seed", "1.2,-0.7")
    doc = json.loads(out)
    assert code == 0 and max(abs(v) for v in doc["x"]) <= 1e-8
    code, out, _ = run(capsys, "moment", "--potential", "fubini_study", "--n", "1", "--range", "-8:8:1")
    mu = [float(r["mu1"]) for r in rows(out)]
    assert code == 0 and mu[0] < 1e-6 and mu[-1] > 1 - 1e-6


def test_decay_passes_and_fails_honestly(capsys):
    code, _, _ = run(capsys, "decay", "--potential", "fubini_study", "--n", "1")
    assert code == 0
    code, _, _ = run(capsys, "decay", "--potential", "fubini_study", "--n", "2", "--direction", "1,1")
    assert code == 1
    code, _, _ = run(capsys, "decay", "--potential", "flat", "--n", "1")
    assert code == 2


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"potential": "flat", "n": 1, "range": ["-1:1:1"], "format": "json"}))
    code, out, _ = run(capsys, "volume", "--config", str(cfg), "--format", "csv")
    assert code == 0 and out.startswith("x1,")


@pytest.mark.parametrize("argv", [
    ["volume", "--potential", "nope", "--n", "1", "--range", "0:1:0.5"],
    ["volume", "--potential", "flat", "--n", "1", "--range", "1:0:0.5"],
    ["volume", "--potential", "flat", "--n", "1", "--range", "0:1:0"],
    ["volume", "--potential", "flat", "--n", "1", "--range", "0:1:0.5", "--quad-N", "12"],
    ["volume", "--potential", "flat", "--n", "1", "--range", "0:1:0.5", "--format", "xml"],
    ["volume", "--potential", "flat", "--n", "1", "--range", "0:1:0.5", "--out", "/nonexistent/x.csv"],
    ["bogus"],
])
def test_invalid_input_exits_two_with_one_line(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert err.count("\n") == 1 and err.startswith("tklab: error:")


def test_non_kahler_potential_exits_one(capsys):
    code, _, err = run(capsys, "volume", "--potential", "fubini_study", "--n", "1",
                       "--param", "scale=-1", "--range", "-1:1:0.5")
    assert code == 1 and "not Kahler" in err


def test_output_is_deterministic(capsys):
    argv = ["classify", "--potential", "sum_exp", "--n", "2", "--range", "-2:2:0.25", "--format", "json"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]
