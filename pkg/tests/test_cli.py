import json

import pytest

from torus_embed.cli import main


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(["--no-timestamp", *args, "--out", str(out)])
    text = (out / "report.json").read_text() if (out / "report.json").exists() else None
    return code, (json.loads(text) if text else None), text, out


def test_embed_default(tmp_path):
    code, rep, _, out = run(tmp_path, "embed", "default", "--grid", "24")
    assert code == 0 and rep["status"] == "pass"
    assert sorted(p.name for p in out.glob("*.svg")) == ["domain.svg", "projection1.svg", "projection2.svg"]
    assert {"periodicity_residual", "min_separation_ratio"} <= set(rep["metrics"])


def test_embed_degenerate_shift(tmp_path):
    code, rep, _, _ = run(tmp_path, "embed", "default", "--p", "0.5,0")
    assert code == 1
    assert rep["error"]["code"] == "degenerate-shift"
    assert "degenerate shift" in rep["error"]["message"]


def test_missing_file(tmp_path, capsys):
    code = main(["--no-timestamp", "embed", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert '"io"' in capsys.readouterr().out


def test_parse_error_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"tau": [0.5, 1],\n "components": [}')
    code, rep, _, _ = run(tmp_path, "embed", str(bad))
    assert code == 1
    assert rep["error"]["code"] == "descriptor-parse"
    assert "line 2" in rep["error"]["message"]


def test_uniformize_circled(tmp_path):
    code, rep, _, _ = run(tmp_path, "uniformize", "default", "--tol", "1e-8")
    assert code == 0
    assert rep["metrics"]["d2_to_input"] < 1e-8


def test_perturb_zero_delta(tmp_path):
    run(tmp_path, "embed", "default", "--grid", "16", name="e")
    code, rep, _, _ = run(tmp_path, "perturb", str(tmp_path / "e" / "surface.json"), "--delta", "0")
    assert code == 0
    assert rep["metrics"]["sup_displacement"] == 0


def test_verify_default_point(tmp_path):
    run(tmp_path, "embed", "default", "--grid", "16", name="e")
    code, rep, _, _ = run(tmp_path, "verify", str(tmp_path / "e" / "surface.json"))
    assert code == 0 and rep["metrics"]["points"] == 1


def test_solve_identity(tmp_path):
    code, rep, _, _ = run(tmp_path, "solve", "default", "--perturbation", "identity", "--samples", "4")
    assert code == 0
    assert rep["metrics"]["verified_d2"] < 1e-8


def test_timestamp_only_difference(tmp_path):
    a = tmp_path / "a"
    main(["uniformize", "default", "--out", str(a)])
    rep = json.loads((a / "report.json").read_text())
    assert "timestamp" in rep


@pytest.mark.parametrize("cmd", [["embed", "default", "--grid", "16"], ["uniformize", "default"]])
def test_determinism(tmp_path, cmd):
    _, _, t1, _ = run(tmp_path, *cmd, name="x")
    _, _, t2, _ = run(tmp_path, *cmd, name="x")
    assert t1 == t2
