import json

import numpy as np
import pytest

from nilmcomplexity import complexity as cx
from nilmcomplexity.cli import main
from nilmcomplexity.domain import ApplianceSet
from nilmcomplexity.enumeration import enumerate_values
from nilmcomplexity.ingestion import load_csv, save_csv, square_wave, synthesize


@pytest.fixture
def workspace(tmp_path):
    apps = ApplianceSet.from_watts({"fridge": [0, 150], "kettle": [0, 1800]})
    (tmp_path / "apps.json").write_text(apps.to_json())
    (tmp_path / "dup.json").write_text(ApplianceSet.from_watts({"a": [0, 500], "b": [0, 500]}).to_json())
    schedule = {"fridge": square_wave(600, on=40, off=60),
                "kettle": square_wave(600, on=10, off=90, phase=30)}
    trace = synthesize(apps, schedule, noise_sigma=1.0, period=10.0, seed=3)
    save_csv(trace, tmp_path / "trace.csv")
    return tmp_path


def _lines(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


def test_enumerate(workspace, capsys):
    out = workspace / "values.csv"
    assert main(["enumerate", "--appliances", str(workspace / "apps.json"), "--out", str(out)]) == 0
    assert capsys.readouterr().out.strip() == "4"
    assert _lines(out) == ["power_w,multiplicity", "0,1", "150,1", "1800,1", "1950,1"]


def test_enumerate_budget(workspace, capsys):
    code = main(["enumerate", "--appliances", str(workspace / "apps.json"),
                 "--max-combinations", "2"])
    assert code == 2
    assert "error" in capsys.readouterr().err
    assert main(["enumerate", "--appliances", str(workspace / "apps.json"),
                 "--max-combinations", "2", "--force"]) == 0


def test_set_complexity(workspace, capsys):
    out, summary = workspace / "spec.csv", workspace / "summary.json"
    assert main(["set-complexity", "--appliances", str(workspace / "dup.json"), "--sigma", "5",
                 "--out", str(out), "--summary", str(summary)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == json.loads(summary.read_text())
    assert doc["M"] == 4 and doc["sigma"] == 5.0
    assert doc["max"] == pytest.approx(2.0, abs=1e-3)
    assert _lines(out)[0] == "power_w,complexity,multiplicity"
    assert "# sigma=5" in out.read_text()


def test_ts_complexity_with_and_without_metadata(workspace, capsys):
    out = workspace / "ct.csv"
    args = ["ts-complexity", "--trace", str(workspace / "trace.csv"), "--period", "10"]
    assert main(args + ["--appliances", str(workspace / "apps.json"), "--out", str(out)]) == 0
    with_meta = json.loads(capsys.readouterr().out)
    assert with_meta["metadata_free"] is False
    assert with_meta["T"] == 600
    trace = load_csv(workspace / "trace.csv", target_period=10)
    values = enumerate_values(ApplianceSet.from_json((workspace / "apps.json").read_text()))
    expected = cx.timeseries_complexity(trace.channel("aggregate"), values,
                                        cx.OverlapKernel.for_values(values, sigma=5.0))
    assert with_meta["c_total"] == expected.c_total
    # off samples sit on the 0 W boundary (about 0.5), on samples are isolated (about 1)
    assert 0.5 < with_meta["c_total"] < 1.0
    assert _lines(out)[0] == "t,power_w,C_t,normalized"
    assert main(args) == 0
    free = json.loads(capsys.readouterr().out)
    assert free["metadata_free"] is True


def test_detect_submetered(workspace):
    out = workspace / "detected.json"
    assert main(["detect", "--trace", str(workspace / "trace.csv"), "--period", "10",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    found = {a["name"]: a["states_w"] for a in doc["appliances"]}
    assert abs(found["fridge"][1] - 150) <= 5
    assert abs(found["kettle"][1] - 1800) <= 5
    assert doc["provenance"]["mode"] == "submetered"
    assert len(doc["provenance"]["config_hash"]) == 12


def test_detect_config_file(workspace):
    cfg = workspace / "detect.toml"
    cfg.write_text("edge_threshold = 2000.0\n")
    out = workspace / "none.json"
    with pytest.warns(UserWarning):
        assert main(["detect", "--trace", str(workspace / "trace.csv"), "--period", "10",
                     "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["provenance"]["detection"]["edge_threshold"] == 2000.0


def test_disaggregate_then_score(workspace):
    result = workspace / "result.json"
    assert main(["disaggregate", "--trace", str(workspace / "trace.csv"), "--period", "10",
                 "--appliances", str(workspace / "apps.json"), "--particles", "200",
                 "--seed", "1", "--out", str(result)]) == 0
    doc = json.loads(result.read_text())
    assert doc["provenance"]["particles"] == 200
    energy = workspace / "energy.json"
    assert main(["score", "--result", str(result), "--truth", str(workspace / "trace.csv"),
                 "--format", "json", "--out", str(energy)]) == 0
    rows = {r["appliance"]: r for r in json.loads(energy.read_text())["rows"]}
    assert set(rows) == {"fridge", "kettle", "total"}
    for name in ("fridge", "kettle"):
        assert rows[name]["estimated_kwh"] == pytest.approx(rows[name]["real_kwh"], rel=0.05)


def test_report_spectrum_and_grid(workspace):
    paths = [str(workspace / "apps.json"), str(workspace / "dup.json")]
    out = workspace / "report.json"
    assert main(["report", "--appliances", *paths, "--format", "json", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert [r["label"] for r in doc["rows"]] == ["apps", "dup"]
    grid = workspace / "grid.csv"
    assert main(["report", "--kind", "grid", "--appliances", *paths, "--out", str(grid)]) == 0
    rows = _lines(grid)
    assert rows[0].startswith("row,0,")
    values = np.array([[float(v) for v in r.split(",")[1:]] for r in rows[1:]])
    assert values.max() == 1.0 and values.min() >= 0.0


def test_bad_input_exit_code(workspace, capsys):
    bad = workspace / "bad.json"
    bad.write_text(json.dumps({"appliances": [{"name": "x", "states_w": [5, 10]}]}))
    assert main(["enumerate", "--appliances", str(bad)]) == 2
    assert "off state" in capsys.readouterr().err
    assert main(["enumerate", "--appliances", str(workspace / "missing.json")]) == 2


def test_pipeline_command(tmp_path, capsys):
    assert main(["pipeline", "--out-dir", str(tmp_path), "--length", "1000",
                 "--particles", "100"]) == 0
    printed = capsys.readouterr().out
    for name in ("trace.csv", "spectrum.csv", "energy.csv", "result.json"):
        assert (tmp_path / name).exists()
        assert name in printed
