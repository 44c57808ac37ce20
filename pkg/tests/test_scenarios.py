import json

import numpy as np
import pytest

from shiftlab.harness import scenarios as sc
from shiftlab.harness.data import SyntheticSpec, gen_synthetic, write_dataset


def test_unknown_scenario_and_keys():
    with pytest.raises(sc.ConfigError):
        sc.merge_config("nope", {})
    with pytest.raises(sc.ConfigError):
        sc.merge_config("onda", {"alpah": 0.1})
    with pytest.raises(sc.ConfigError):
        sc.run_scenario("bat", {"data": {"colors": 3}})


def test_missing_dataset_is_config_error(tmp_path):
    with pytest.raises(sc.ConfigError):
        sc.run_scenario("dg", {"dataset": str(tmp_path / "missing.txt")})


def test_contract_violation():
    with pytest.raises(sc.ContractError):
        sc.run_scenario("pda", {"source_node": 2, "target_node": 2})
    with pytest.raises(sc.ContractError):
        sc._check_disjoint("zsl seen/unseen classes", [0, 1], [1, 2])


def test_dg_reads_dataset_file(tmp_path):
    p = tmp_path / "ds.txt"
    write_dataset(gen_synthetic(SyntheticSpec(classes=3, domains=4, dim=5, samples=30), 2), p)
    m = sc.run_scenario("dg", {"dataset": str(p), "steps": 50}, 0).metrics
    assert 0.0 <= m["acc_wbn"] <= 1.0 and m["target_domain"] == 3


@pytest.mark.parametrize("name", sorted(sc.RUNNERS))
def test_report_bytes_deterministic(name, tmp_path):
    a = sc.run_scenario(name, None, 7)
    b = sc.run_scenario(name, None, 7)
    assert a.to_json() == b.to_json()
    doc = json.loads(a.to_json())
    assert doc["scenario"] == name and doc["seed"] == 7 and "wall_time" not in doc
    path = sc.write_report(a, tmp_path)
    assert path.read_text() == a.to_json()
    assert "wall_time" in json.loads((tmp_path / "timing.json").read_text())


def test_onda_stationary_stream_matches_frozen():
    m = sc.run_scenario("onda", {"shift": 0.0}, 1).metrics
    assert abs(m["acc_onda"] - m["acc_frozen"]) <= 0.05


def test_report_clean_converts_numpy():
    r = sc.RunReport("x", 0, {"a": np.float64(1.5)}, {"b": np.int64(2), "c": [np.bool_(True)]})
    assert json.loads(r.to_json())["metrics"] == {"b": 2, "c": [True]}
