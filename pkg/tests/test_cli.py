import csv
import json

import pytest

from cli_pipeline import SMALL_MODEL, payload_digests, run_pipeline
from tce.cli import main


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    a = tmp_path_factory.mktemp("run_a")
    b = tmp_path_factory.mktemp("run_b")
    return run_pipeline(a), run_pipeline(b), a, b


def test_reruns_are_byte_identical(runs):
    _, _, a, b = runs
    da, db = payload_digests(a), payload_digests(b)
    assert da.keys() == db.keys()
    assert any(k.endswith(".wav") for k in da)
    assert {k for k in da if da[k] != db[k]} == set()


def test_outputs_exist(runs):
    dirs = runs[0]
    manifest = json.loads((dirs["mix"] / "manifest.json").read_text())
    assert len(manifest["samples"]) == 2
    rows = list(csv.DictReader(open(dirs["eval"])))
    assert [r["id"] for r in rows] == ["test-00000", "test-00001"]
    assert (dirs["eval"].with_suffix(".summary.json")).exists()
    pert = json.loads((dirs["pert_left"] / "manifest.json").read_text())
    assert pert["samples"][0]["perturbation"]["mode"] == "left"


def test_eval_perfect_outputs_are_infinite(runs, tmp_path):
    dirs = runs[0]
    m = json.loads((dirs["mix"] / "manifest.json").read_text())
    for rec in m["samples"]:
        rec["paths"]["output"] = rec["paths"]["target"]
    (dirs["mix"] / "perfect.json").write_text(json.dumps(m))
    out = tmp_path / "perfect.csv"
    assert main(["eval", "--manifest", str(dirs["mix"] / "perfect.json"), "--out", str(out)]) == 0
    summary = json.loads(out.with_suffix(".summary.json").read_text())
    assert summary["snr_db"]["n_infinite"] == summary["snr_db"]["n"] == 2


def test_usage_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert "invalid choice" in capsys.readouterr().err
    assert main(["separate", "--out", str(tmp_path / "x.wav")]) == 2
    assert main(["bench", "--variants", "nope"]) == 2


def test_missing_input_is_error(tmp_path):
    assert main(["eval", "--manifest", str(tmp_path / "none.json"), "--out", str(tmp_path / "o.csv")]) == 1


def test_small_model_config_is_valid():
    from tce.netref import ModelConfig

    ModelConfig.from_dict(SMALL_MODEL)
