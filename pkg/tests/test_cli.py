import json
import subprocess
import sys

import pytest

from gramediate.cli import main
from gramediate.table import embedded_dataset, expand


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def result(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)["result"]


def test_fit_model5(capsys):
    fit = result(capsys, "fit", "--data", "builtin", "--vars", "SSC-W,SSC-F,TIME",
                 "--model", "[SSC-W,SSC-F][SSC-W,TIME]")["fit"]
    assert fit["g2"] == pytest.approx(18.79, abs=0.01)
    assert fit["df"] == 24
    assert fit["pvalue"] == pytest.approx(0.763, abs=0.001)
    assert fit["name"] == "Model 5"


def test_fit_independence_defaults_vars_to_model(capsys):
    assert result(capsys, "fit", "--model", "[SSC-W][SSC-F][TIME]")["fit"]["df"] == 39


def test_fit_by_name(capsys):
    assert result(capsys, "fit", "--model", "model9")["fit"]["df"] == 68


def test_compare(capsys):
    cmp = result(capsys, "fit", "--compare", "[SSC-W,SSC-F][SSC-W,TIME]",
                 "[SSC-W,SSC-F][SSC-W,TIME][SSC-F,TIME]")["comparison"]
    assert cmp["delta_g2"] == pytest.approx(4.04, abs=0.01)
    assert cmp["delta_df"] == 6
    assert cmp["pvalue"] == pytest.approx(0.671, abs=0.001)


def test_all_3var(capsys):
    models = result(capsys, "fit", "--all-3var")["models"]
    assert [m["name"] for m in models] == [f"Model {i}" for i in range(1, 9)]
    # underflowing p-values are reported as 0
    assert models[0]["pvalue"] == 0.0


def test_enumerate(capsys):
    assert result(capsys, "enumerate", "--nvars", "4")["count"] == 114


def test_search(capsys):
    res = result(capsys, "search")
    assert res["consensus"]["name"] == "Model 9"
    assert res["forward"]["final"] == res["backward"]["final"] == "[SSC-W,SSC-F][SSC-W,TIME][SSC-W,IC]"


def test_mediators(capsys):
    res = result(capsys, "mediators", "--data", "builtin", "--treatment", "IC")
    assert res["selected"] == "[SSC-W,SSC-F][SSC-W,TIME][SSC-W,IC]"
    assert res["graphical"] is True
    assert res["candidates"] == [["SSC-W"]]
    assert {"a": ["IC"], "b": ["SSC-W"], "c": ["SSC-F", "TIME"]} in res["decompositions"]


def test_mediators_dot(capsys):
    code, out, _ = run(capsys, "mediators", "--format", "dot")
    assert code == 0
    assert out.startswith("graph interaction {") and '"SSC-W" -- "IC";' in out


def test_validate_csv(capsys):
    code, out, _ = run(capsys, "validate", "--target", "model5", "--vars", "SSC-W,SSC-F,TIME",
                       "--q", "0.5,0.9", "--reps", "10", "--seed", "1")
    assert code == 0
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    assert lines[0] == "q,replicates,consensus_reached,target_recovered,proportion,baseline"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0.5", "0.9"]
    assert "# seed=1" in out


def test_validate_model9_example(capsys):
    code, out, _ = run(capsys, "validate", "--target", "model9", "--q", "0.85", "--reps", "500", "--seed", "1")
    assert code == 0
    row = out.strip().splitlines()[-1].split(",")
    assert float(row[4]) >= 0.75


def test_q_grid(capsys):
    code, out, _ = run(capsys, "validate", "--target", "model5", "--q-grid", "0.2:0.4:0.1",
                       "--reps", "3", "--format", "json")
    assert code == 0
    assert [r["q"] for r in json.loads(out)["result"]["reports"]] == [0.2, 0.3, 0.4]


def test_mediate(capsys):
    res = result(capsys, "mediate", "--nboot", "20", "--seed", "2")
    total = next(r for r in res["rows"] if r["statistic"] == "total")
    assert total["estimate"][0] == pytest.approx(0.0692, abs=0.01)
    assert res["n_boot"] == 20


def test_byte_identical_outputs(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p, workers in zip(paths, ("1", "2")):
        assert main(["validate", "--target", "model5", "--q", "0.6", "--reps", "12",
                     "--workers", workers, "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    j = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in j:
        assert main(["mediate", "--nboot", "10", "--out", str(p)]) == 0
    assert j[0].read_bytes() == j[1].read_bytes()


def test_config_precedence(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 77, "reps": 4, "q": "0.5"}))
    code, out, _ = run(capsys, "validate", "--config", str(cfg), "--reps", "6", "--format", "json")
    header = json.loads(out)["config"]
    assert (header["seed"], header["reps"], header["q"]) == (77, 6, "0.5")
    monkeypatch.setenv("GRAMEDIATE_SEED", "99")
    code, out, _ = run(capsys, "validate", "--q", "0.5", "--reps", "2", "--format", "json")
    assert json.loads(out)["config"]["seed"] == 99
    code, out, _ = run(capsys, "validate", "--config", str(cfg), "--format", "json")
    assert json.loads(out)["config"]["seed"] == 77


def test_json_round_trip_precision(capsys):
    fit = result(capsys, "fit", "--model", "model9")["fit"]
    from gramediate.loglin import ipf_fit, named_model
    from gramediate.table import embedded_dataset

    direct = ipf_fit(embedded_dataset().reorder(["SSC-W", "SSC-F", "TIME", "IC"]), named_model("model9"))
    assert abs(fit["g2"] - direct.g2) <= 1e-12
    assert abs(fit["aic"] - direct.aic) <= 1e-12


def test_csv_and_json_table_inputs(tmp_path, capsys):
    csv_path = tmp_path / "data.csv"
    csv_path.write_text(expand(embedded_dataset()).to_csv())
    a = result(capsys, "fit", "--data", str(csv_path), "--model", "model9")["fit"]
    json_path = tmp_path / "table.json"
    json_path.write_text(json.dumps(embedded_dataset().to_json()))
    b = result(capsys, "fit", "--data", str(json_path), "--model", "model9")["fit"]
    assert a["g2"] == pytest.approx(67.11, abs=0.01)
    assert a["g2"] == pytest.approx(b["g2"], abs=1e-9)


@pytest.mark.parametrize(
    "argv,kind",
    [
        (["fit", "--model", "[SSC-W,SSC-F"], "ModelError"),
        (["fit", "--compare", "model5", "model6"], "ModelError"),
        (["fit"], "UsageError"),
        (["fit", "--model", "model5", "--data", "/no/such/file.csv"], "FileNotFoundError"),
        (["mediators", "--treatment", "DOSE"], "GraphError"),
        (["search", "--format", "csv"], "UsageError"),
    ],
)
def test_errors_are_json(capsys, argv, kind):
    code, out, err = run(capsys, *argv)
    assert code != 0
    assert out == ""
    payload = json.loads(err)
    assert payload["error"] == kind
    assert payload["message"]


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gramediate.cli", "enumerate", "--nvars", "3"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["result"]["count"] == 9
