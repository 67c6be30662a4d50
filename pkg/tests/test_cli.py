import json

import pytest

from siirv_lab import cli, families


def _write(tmp_path, scenario):
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(scenario))
    return str(p)


VERIFY = {"kind": "verify", "seed": 1, "name": "v", "family": {"catalog": "geometric"},
          "samples": 5, "validator_instances": 2}
COVER = {"kind": "cover", "seed": 3, "name": "c",
         "family": {"catalog": "geometric", "args": {"lo": 0.8, "hi": 1.2}},
         "n": 3, "eps": 0.3, "instances": 3}


def test_verify_geometric_all_pass(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["--scenario", _write(tmp_path, VERIFY), "--out", str(out)]) == 0
    meta = json.loads((out / "v.json").read_text())
    assert meta["summary"]["all_passed"] and meta["seed"] == 1
    assert meta["config_hash"] == cli.config_hash(VERIFY)
    assert meta["constants"]["c_h"] == 8.0
    lines = (out / "v.csv").read_text().splitlines()
    assert lines[0].startswith("check,passed") and all(",True," in l for l in lines[1:])


def test_zero_eps_is_config_error(tmp_path):
    sc = dict(COVER, eps=0.0)
    assert cli.main(["--scenario", _write(tmp_path, sc), "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("bad", [{"kind": "paint", "seed": 1}, {"kind": "cover"},
                                 {"kind": "cover", "seed": 1, "family": {"catalog": "nope"},
                                  "n": 2, "eps": 0.2}])
def test_malformed_scenarios(tmp_path, bad):
    assert cli.run(bad, tmp_path) == 2


def test_unreadable_file(tmp_path):
    assert cli.main(["--scenario", str(tmp_path / "missing.json")]) == 2


def test_cover_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    path = _write(tmp_path, COVER)
    assert cli.main(["--scenario", path, "--out", str(a)]) == 0
    assert cli.main(["--scenario", path, "--out", str(b)]) == 0
    assert (a / "c.csv").read_bytes() == (b / "c.csv").read_bytes()
    assert (a / "c.json").read_bytes() == (b / "c.json").read_bytes()


def test_seed_override_changes_output(tmp_path):
    path = _write(tmp_path, COVER)
    cli.main(["--scenario", path, "--out", str(tmp_path / "a")])
    cli.main(["--scenario", path, "--out", str(tmp_path / "b"), "--seed-override", "99"])
    assert json.loads((tmp_path / "b" / "c.json").read_text())["seed"] == 99
    assert (tmp_path / "a" / "c.csv").read_bytes() != (tmp_path / "b" / "c.csv").read_bytes()


def test_assumption_failure_exit_3(tmp_path):
    spec = families.geometric_family().to_json()
    spec["B"] = 1.0  # far below the true fourth moment at a = 0.5
    sc = dict(VERIFY, family={"spec": spec})
    assert cli.main(["--scenario", _write(tmp_path, sc), "--out", str(tmp_path)]) == 3


def test_constants_env_override(tmp_path, monkeypatch):
    cpath = tmp_path / "constants.json"
    cpath.write_text(json.dumps({"c_h": 4}))
    monkeypatch.setenv("SIIRV_LAB_CONSTANTS", str(cpath))
    assert cli.main(["--scenario", _write(tmp_path, VERIFY), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "v.json").read_text())["constants"]["c_h"] == 4.0
    cpath.write_text(json.dumps({"c_unknown": 1}))
    assert cli.main(["--scenario", _write(tmp_path, VERIFY), "--out", str(tmp_path)]) == 2


def test_learn_and_bench_with_workers(tmp_path):
    scenarios = [
        {"kind": "learn", "seed": 5, "name": "l", "learner": "siierv",
         "family": {"catalog": "geometric", "args": {"lo": 0.8, "hi": 1.2}},
         "n": 2, "eps": 0.25, "runs": 2},
        {"kind": "bench", "seed": 6, "name": "b", "n": 5, "repeats": 1},
    ]
    out = tmp_path / "o"
    assert cli.main(["--scenario", _write(tmp_path, scenarios), "--out", str(out),
                     "--workers", "2"]) == 0
    assert (out / "l.csv").exists() and (out / "b.csv").exists()
    meta = json.loads((out / "l.json").read_text())
    assert meta["summary"]["learner"] == "siierv"
