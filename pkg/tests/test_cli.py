import json
from pathlib import Path

import numpy as np
import pytest
from jsonschema import Draft7Validator

from lipext.cli import main

SCHEMA = json.loads((Path(__file__).parent.parent / "docs"
                     / "report_schema.json").read_text())
VALIDATOR = Draft7Validator(SCHEMA)


def _write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _grid_file(tmp_path, n=101):
    return _write(tmp_path, "grid.json", {
        "points": {"type": "euclidean",
                   "coords": [[i / (n - 1)] for i in range(n)]},
        "subset": [0, n - 1], "values": [0.0, 1.0]})


def _cloud_file(tmp_path, seed=0, n=40, with_masses=False):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 1, (n, 3)).tolist()
    subset = sorted(int(i) for i in rng.choice(n, size=8, replace=False))
    values = rng.normal(size=8).tolist()
    doc = {"points": {"type": "euclidean", "coords": coords},
           "subset": subset, "values": values}
    if with_masses:
        masses = [0.0] * n
        for s in subset:
            masses[s] = float(rng.uniform(0.2, 1.0))
        doc["masses"] = masses
    return _write(tmp_path, f"cloud{seed}.json", doc)


def _check_schema(path):
    doc = json.loads(Path(path).read_text())
    VALIDATOR.validate(doc)
    return doc


# --- validate ----------------------------------------------------------------


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", "--input", _grid_file(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    VALIDATOR.validate(doc)
    assert doc["ok"] and doc["lipschitz"] == 1.0


def test_validate_triangle_violation(tmp_path, capsys):
    path = _write(tmp_path, "bad.json", {
        "points": {"type": "matrix", "d": [[0, 1, 5], [1, 0, 1], [5, 1, 0]]},
        "subset": [0], "values": [0.0]})
    assert main(["validate", "--input", path]) == 1
    err = json.loads(capsys.readouterr().out)
    assert "triangle" in err["error"] and "witness" in err


def test_validate_rejects_mass_off_subset(tmp_path, capsys):
    path = _write(tmp_path, "m.json", {
        "points": {"type": "euclidean", "coords": [[0.0], [0.5], [1.0]]},
        "subset": [0, 2], "values": [0.0, 1.0], "masses": [1.0, 1.0, 1.0]})
    assert main(["validate", "--input", path]) == 1
    assert "off the subset" in json.loads(capsys.readouterr().out)["error"]


def test_validate_missing_values_field(tmp_path, capsys):
    path = _write(tmp_path, "m.json", {
        "points": {"type": "matrix", "d": [[0, 1], [1, 0]]}, "subset": [0]})
    assert main(["validate", "--input", path]) == 1
    assert json.loads(capsys.readouterr().out)["field"] == "values"


# --- extend ------------------------------------------------------------------


def test_extend_restriction_and_schema(tmp_path):
    out = str(tmp_path / "f.json")
    assert main(["extend", "--input", _grid_file(tmp_path), "--epsilon", "1",
                 "--queries", "all", "--output", out]) == 0
    doc = _check_schema(out)
    byidx = {e["index"]: e for e in doc["entries"]}
    assert byidx[0]["value"] == 0.0 and byidx[100]["value"] == 1.0
    assert len(doc["entries"]) == 101


def test_extend_query_list_and_default(tmp_path):
    out = str(tmp_path / "f.json")
    grid = _grid_file(tmp_path)
    assert main(["extend", "--input", grid, "--epsilon", "1",
                 "--queries", "3,5,7", "--output", out]) == 0
    assert [e["index"] for e in _check_schema(out)["entries"]] == [3, 5, 7]
    assert main(["extend", "--input", grid, "--epsilon", "1",
                 "--output", out]) == 0
    idx = [e["index"] for e in _check_schema(out)["entries"]]
    assert 0 not in idx and 100 not in idx and len(idx) == 99


def test_extend_bounded_noop_when_dominating(tmp_path):
    out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    grid = _grid_file(tmp_path)
    assert main(["extend", "--input", grid, "--epsilon", "1",
                 "--output", out1]) == 0
    assert main(["extend", "--input", grid, "--epsilon", "1",
                 "--bounded", "1e9", "--output", out2]) == 0
    assert ([e["value"] for e in _check_schema(out1)["entries"]]
            == [e["value"] for e in _check_schema(out2)["entries"]])


def test_extend_byte_identical_reruns(tmp_path):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    cloud = _cloud_file(tmp_path)
    for out in (out1, out2):
        assert main(["extend", "--input", cloud, "--epsilon", "0.5",
                     "--queries", "all", "--output", str(out)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_extend_cutoff_composition(tmp_path):
    # spread cloud: far points must be zeroed, subset untouched, budget kept
    rng = np.random.default_rng(42)
    core = rng.uniform(0, 1, (20, 2))
    far = rng.uniform(40, 60, (10, 2))
    coords = np.vstack([core, far]).tolist()
    doc = {"points": {"type": "euclidean", "coords": coords},
           "subset": list(range(6)),
           "values": rng.normal(size=6).tolist()}
    path = _write(tmp_path, "spread.json", doc)
    out = str(tmp_path / "cut.json")
    epsilon = 1.0
    assert main(["extend", "--input", path, "--epsilon", str(epsilon),
                 "--queries", "all", "--cutoff", "--output", out]) == 0
    got = _check_schema(out)
    vals = np.array([e["value"] for e in got["entries"]])
    g = np.array(doc["values"])
    coords = np.array(coords)
    d_c = np.min(np.linalg.norm(coords[:, None, :] - coords[None, :6, :], axis=2),
                 axis=1)
    m_sup = np.max(np.abs(vals)) if np.any(vals) else np.max(np.abs(g))
    assert np.all(vals[d_c >= 4.0 * max(m_sup, np.max(np.abs(g))) / epsilon] == 0.0)
    assert np.allclose(vals[:6], g, rtol=0, atol=1e-12)


# --- verify ------------------------------------------------------------------


def test_verify_random_instance_exit0(tmp_path):
    out = str(tmp_path / "v.json")
    assert main(["verify", "--input", _cloud_file(tmp_path), "--epsilon", "1",
                 "--output", out]) == 0
    doc = _check_schema(out)
    assert doc["passed"] is True


def test_verify_corruption_hook_exit2(tmp_path):
    out = str(tmp_path / "v.json")
    code = main(["verify", "--input", _cloud_file(tmp_path), "--epsilon", "1",
                 "--inject-corruption", "--output", out])
    assert code == 2
    doc = _check_schema(out)
    assert doc["passed"] is False
    assert any(c["status"] == "fail" and c["witness"] for c in doc["checks"])


def test_verify_tiny_rbar_extend_schedule_exit1(tmp_path, capsys):
    out = str(tmp_path / "v.json")
    code = main(["verify", "--input", _cloud_file(tmp_path), "--epsilon", "1",
                 "--rbar", "1e-280", "--output", out])
    assert code == 1
    assert "extend schedule" in json.loads(capsys.readouterr().out)["error"]


def test_thread_cap_env_does_not_change_bytes(tmp_path, monkeypatch):
    cloud = _cloud_file(tmp_path, seed=8)
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    monkeypatch.setenv("LIPEXT_THREADS", "1")
    assert main(["extend", "--input", cloud, "--epsilon", "1",
                 "--queries", "all", "--output", str(out1)]) == 0
    monkeypatch.setenv("LIPEXT_THREADS", "4")
    assert main(["extend", "--input", cloud, "--epsilon", "1",
                 "--queries", "all", "--output", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_verify_seeded_reruns_identical(tmp_path):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    cloud = _cloud_file(tmp_path, seed=3)
    for out in (out1, out2):
        assert main(["verify", "--input", cloud, "--epsilon", "0.7",
                     "--seed", "11", "--output", str(out)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


# --- energy ------------------------------------------------------------------


def test_energy_endpoint_grid(tmp_path):
    out = str(tmp_path / "e.json")
    grid = _grid_file(tmp_path, n=1001)
    assert main(["energy", "--input", grid, "--p", "2",
                 "--radii", "0.5", "--output", out]) == 0
    doc = _check_schema(out)
    rep = doc["restriction_reports"][0]
    assert rep["E_C"] == 0.0
    assert rep["E_X"] == pytest.approx(2.0, abs=1e-12)
    assert "integrand-level" in doc["note"]


def test_energy_with_masses_and_bad_p(tmp_path, capsys):
    out = str(tmp_path / "e.json")
    cloud = _cloud_file(tmp_path, seed=5, with_masses=True)
    assert main(["energy", "--input", cloud, "--p", "1",
                 "--radii", "0.2,0.5,0.9", "--output", out]) == 0
    _check_schema(out)
    assert main(["energy", "--input", cloud, "--p", "0.5",
                 "--radii", "0.5", "--output", out]) == 1
    assert "p must be" in json.loads(capsys.readouterr().out)["error"]


def test_energy_bad_radii(tmp_path, capsys):
    cloud = _cloud_file(tmp_path, seed=6)
    assert main(["energy", "--input", cloud, "--p", "1",
                 "--radii", "0.5,0.4", "--output", str(tmp_path / "e.json")]) == 1
    assert "radii" in json.loads(capsys.readouterr().out)["error"]


# --- demo --------------------------------------------------------------------


def test_demo_counterexample_pass(capsys):
    assert main(["demo-counterexample", "--n", "1001", "--epsilon", "1",
                 "--xi", "0.1"]) == 0
    out = capsys.readouterr().out
    assert "RESULT: PASS" in out


def test_demo_coarse_grid(capsys):
    assert main(["demo-counterexample", "--n", "3", "--epsilon", "1",
                 "--xi", "0.1"]) == 0


def test_demo_rejects_zero_xi(capsys):
    assert main(["demo-counterexample", "--n", "11", "--epsilon", "1",
                 "--xi", "0"]) == 1


# --- plumbing ----------------------------------------------------------------


def test_missing_input_file(tmp_path, capsys):
    assert main(["validate", "--input", str(tmp_path / "nope.json")]) == 1
    assert "cannot read" in json.loads(capsys.readouterr().out)["error"]


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "junk.json"
    path.write_text("{not json")
    assert main(["validate", "--input", str(path)]) == 1
    assert "not valid JSON" in json.loads(capsys.readouterr().out)["error"]


def test_bad_usage_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["extend", "--input", "x.json"])  # missing required flags
    assert exc.value.code == 1
