import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from biasop.cli import main

EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def test_simulate(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(EXPERIMENTS / "polarized_simulate.yaml"),
                 "--out-dir", str(out), "--horizon", "40"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["steps"] == 40 and len(summary["max_coordinate_curve"]) == 41
    assert np.all(np.diff(summary["max_coordinate_curve"]) < 0)
    assert (out / "trajectory.csv").read_text().startswith("t,x_1,x_2,x_3\n")


def test_out_dir_relative_to_config(tmp_path):
    cfg = {"graph": {"kind": "cycle", "n": 4}, "bias": 2.0,
           "initial": {"vector": [0.1, 0.9, 0.2, 0.3]}, "horizon": 3, "out_dir": "res"}
    assert main(["simulate", "--config", _write(tmp_path, cfg)]) == 0
    assert (tmp_path / "res" / "trajectory.csv").exists()


def test_verify_bounds_static_and_switching(tmp_path):
    for name in ("static_envelope", "switching_envelope"):
        out = tmp_path / name
        assert main(["verify-bounds", "--config", str(EXPERIMENTS / f"{name}.yaml"),
                     "--out-dir", str(out)]) == 0
        verdict = json.loads((out / "verdict.json").read_text())
        assert verdict["passed"] and verdict["first_failure"] is None
        assert (out / "envelope.csv").read_text().startswith("t,observed,bound,pass\n")


def test_verify_bounds_negative_control(tmp_path):
    cfg = {"seed": 1, "graph": {"kind": "complete", "n": 4}, "bias": 1.0,
           "initial": {"vector": [0.1, 0.2, 0.3, 0.4]}, "horizon": 30, "corrupt_at": 12}
    assert main(["verify-bounds", "--config", _write(tmp_path, cfg), "--out-dir",
                 str(tmp_path / "o")]) == 1
    verdict = json.loads((tmp_path / "o" / "verdict.json").read_text())
    assert verdict["first_failure"] == 12


def test_verify_bounds_not_polarized(tmp_path):
    cfg = {"graph": {"kind": "complete", "n": 3}, "bias": 1.0,
           "initial": {"vector": [0.1, 0.6, 0.3]}}
    assert main(["verify-bounds", "--config", _write(tmp_path, cfg), "--out-dir",
                 str(tmp_path / "o")]) == 2


def test_sweep_mode(tmp_path):
    cfg = {"seed": 4, "sweep": {"cases": 5, "steps": 40}}
    assert main(["verify-bounds", "--config", _write(tmp_path, cfg), "--out-dir",
                 str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "sweep.json").read_text())
    assert summary["cases"] == 5 and summary["failures"] == 0


def test_missing_config(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2


@pytest.mark.parametrize("cfg", [
    {"bias": 1.0, "initial": {"vector": [0.1, 0.2]}},
    {"graph": {"kind": "cycle", "n": 3}, "initial": {"vector": [0.1, 0.2, 0.3]}},
    {"graph": {"kind": "cycle", "n": 3}, "bias": 1.0, "initial": {"vector": [0.1, 0.2]}},
    {"graph": {"kind": "wheel", "n": 5}, "bias": 1.0, "initial": {"vector": [0.1] * 5}},
    {"graph": {"kind": "cycle", "n": 3}, "bias": -1.0, "initial": {"vector": [0.1] * 3}},
])
def test_bad_configs(tmp_path, cfg):
    assert main(["simulate", "--config", _write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 2


def test_unparseable_config(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("graph: [unclosed\n")
    assert main(["simulate", "--config", str(p)]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 2


def test_equilibria_report(tmp_path):
    cfg = {"seed": 2, "graph": {"kind": "star", "n": 5}, "bias": 2.0, "samples": 3}
    out = tmp_path / "o"
    assert main(["equilibria", "--config", _write(tmp_path, cfg), "--out-dir", str(out)]) == 0
    rep = json.loads((out / "equilibria.json").read_text())
    assert rep["closed_form"] and rep["families"][0]["family"] == "star_line"
    assert all(m["residual"] <= 1e-12 for m in rep["families"][0]["members"])
    assert "clusters" not in rep


def test_equilibria_search_flag(tmp_path):
    cfg = {"graph": {"kind": "complete", "n": 3}, "bias": 1.5,
           "search": {"grid_step": 0.1}}
    out = tmp_path / "o"
    assert main(["equilibria", "--config", _write(tmp_path, cfg), "--out-dir", str(out),
                 "--search"]) == 0
    rep = json.loads((out / "equilibria.json").read_text())
    assert rep["closed_form"] is False and rep["note"]
    assert rep["clusters"] and "centroid" in rep["family_checks"]


def test_stability_scan_flags_override(tmp_path):
    cfg = {"seed": 9, "graph": {"kind": "cycle", "n": 5}, "bias": 3.0}
    out = tmp_path / "o"
    assert main(["stability-scan", "--config", _write(tmp_path, cfg), "--out-dir", str(out),
                 "--trials", "4", "--horizon", "300", "--radius", "0.02", "--blowup", "2.5",
                 "--workers", "1"]) == 0
    meta = json.loads((out / "scan.json").read_text())["metadata"]
    assert meta["protocol"] == {"trials": 4, "radius": 0.02, "horizon": 300, "blowup": 2.5,
                                "seed": 9}
    assert len((out / "vertices.csv").read_text().splitlines()) == 33


def test_stability_scan_cap(tmp_path):
    cfg = {"graph": {"kind": "cycle", "n": 21}, "bias": 3.0}
    assert main(["stability-scan", "--config", _write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 2


def test_reruns_are_byte_identical(tmp_path):
    cfg = {"seed": 11, "graph": {"kind": "star", "n": 5}, "bias": 2.0,
           "protocol": {"trials": 5, "horizon": 500}}
    path = _write(tmp_path, cfg)
    for run in ("a", "b"):
        assert main(["stability-scan", "--config", path, "--out-dir", str(tmp_path / run)]) == 0
    for f in ("scan.json", "pk.csv", "vertices.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_flag_changes_random_initial_state(tmp_path):
    cfg = {"graph": {"kind": "cycle", "n": 4}, "bias": 1.0,
           "initial": {"uniform": {"low": 0.0, "high": 0.4}}, "horizon": 2}
    path = _write(tmp_path, cfg)
    main(["simulate", "--config", path, "--out-dir", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--config", path, "--out-dir", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_centroid_trajectory_is_constant(tmp_path):
    cfg = {"graph": {"kind": "star", "n": 5}, "bias": 2.0,
           "initial": {"family": {"name": "centroid"}}, "horizon": 10}
    assert main(["simulate", "--config", _write(tmp_path, cfg), "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["max_coordinate_curve"] == [0.5] * 11


@pytest.mark.slow
@pytest.mark.parametrize("name,family", [("equilibria_star_b2", "star_line"),
                                         ("equilibria_cycle_b2", "cycle_alternating"),
                                         ("equilibria_complete_b05", "centroid")])
def test_shipped_equilibria_configs(tmp_path, name, family):
    assert main(["equilibria", "--config", str(EXPERIMENTS / f"{name}.yaml"),
                 "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "equilibria.json").read_text())
    assert rep["families"][0]["family"] == family and rep["closed_form"]
    if "family_checks" in rep:
        assert rep["family_checks"][family]["all_on_family"]
