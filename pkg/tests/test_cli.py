import json

from shiftlab.cli import EXIT_INVALID, EXIT_OK, EXIT_PROPERTY, main
from shiftlab.cumix import embeddings_from_json
from shiftlab.harness.data import read_dataset


def test_gen_writes_dataset_and_embeddings(tmp_path):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"classes": 3, "domains": 2, "dim": 4, "samples": 5, "attr_dim": 2}))
    assert main(["gen", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "o")]) == EXIT_OK
    ds = read_dataset(tmp_path / "o" / "dataset.txt")
    assert len(ds.y) == 30
    ids, V = embeddings_from_json((tmp_path / "o" / "embeddings.json").read_text())
    assert V.shape == (3, 2)


def test_run_and_report(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["run", "onda", "--seed", "7", "--out", str(out)]) == EXIT_OK
    first = (out / "report.json").read_bytes()
    assert main(["run", "onda", "--seed", "7", "--out", str(out)]) == EXIT_OK
    assert (out / "report.json").read_bytes() == first
    assert main(["report", str(out)]) == EXIT_OK
    assert "rel_gap_at_50" in capsys.readouterr().out


def test_run_with_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"steps": 100}))
    assert main(["run", "bat", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    assert json.loads((tmp_path / "b" / "report.json").read_text())["config"]["steps"] == 100


def test_validation_failures(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "onda", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["run", "onda", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_INVALID
    keys = tmp_path / "keys.json"
    keys.write_text(json.dumps({"bogus": 1}))
    assert main(["run", "onda", "--config", str(keys), "--out", str(tmp_path)]) == EXIT_INVALID
    ds = tmp_path / "ds.json"
    ds.write_text(json.dumps({"dataset": str(tmp_path / "missing.txt")}))
    assert main(["run", "dg", "--config", str(ds), "--out", str(tmp_path)]) == EXIT_INVALID
    contract = tmp_path / "contract.json"
    contract.write_text(json.dumps({"source_node": 1, "target_node": 1}))
    assert main(["run", "pda", "--config", str(contract), "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["gradcheck", "--op", "nope"]) == EXIT_INVALID
    assert main(["report", str(tmp_path / "empty")]) == EXIT_INVALID


def test_gradcheck_exit_codes(capsys):
    assert main(["gradcheck", "--op", "mib_ce", "--trials", "5"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out
    assert main(["gradcheck", "--op", "mib_ce", "--trials", "5", "--tol", "0"]) == EXIT_PROPERTY


def test_property_failure_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    # five updates cannot close a shift of 5 to within 2%
    cfg.write_text(json.dumps({"updates": 5}))
    assert main(["run", "onda", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_PROPERTY
