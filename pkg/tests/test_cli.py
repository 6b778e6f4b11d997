import json

import pytest

from qtk.analysis import fit_leakage, read_leak_csv
from qtk.cli import build_parser, main, parse_n_range, resolve


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_n_range():
    assert parse_n_range("5") == [5]
    assert parse_n_range("3..6") == [3, 4, 5, 6]
    assert parse_n_range("3,5,8") == [3, 5, 8]
    with pytest.raises(ValueError):
        parse_n_range("6..3")


@pytest.mark.parametrize("family,n,count", [("qutrit", 5, 7), ("qubit", 3, 6), ("qutrit", 10, 17)])
def test_decompose_counts(family, n, count, tmp_path, capsys):
    path = tmp_path / "c.json"
    code, out, _ = run(["decompose", "--family", family, "-n", str(n), "-o", str(path)], capsys)
    assert code == 0
    circuit = json.loads(path.read_text())
    assert sum(1 for i in circuit["instructions"] if i["kind"] == "XX") == count
    summary = json.loads(out)
    assert summary["xx_count"] == count and summary["schema"] == "1"


def test_decompose_to_stdout_and_dot(capsys):
    code, out, err = run(["decompose", "-n", "3"], capsys)
    assert code == 0
    assert json.loads(out)["n"] == 3
    assert json.loads(err)["xx_count"] == 3
    code, out, _ = run(["decompose", "-n", "3", "--emit", "dot"], capsys)
    assert out.startswith("digraph")


def test_decompose_rejects_small_n(capsys):
    code, _, err = run(["decompose", "-n", "2"], capsys)
    assert code != 0
    assert "n >= 3" in err


def test_truth_table_noiseless(capsys):
    code, out, _ = run(["truth-table", "-n", "3", "--shots", "32", "--noiseless"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == "1"
    assert doc["results"][0]["F_raw"] == 1.0


def test_truth_table_postselect_columns(tmp_path, capsys):
    csv_path = tmp_path / "t.csv"
    code, out, _ = run(["truth-table", "-n", "3", "--shots", "64", "--postselect", "--csv", str(csv_path)], capsys)
    assert code == 0
    assert "f_ps_raw" in csv_path.read_text().splitlines()[0]
    assert json.loads(out)["results"][0]["F_ps_raw"] is not None


def test_seed_gives_identical_json(tmp_path, capsys):
    docs = []
    for k, jobs in enumerate(("1", "2")):
        path = tmp_path / f"r{k}.json"
        argv = ["truth-table", "-n", "3", "--shots", "1500", "--postselect", "--seed", "7", "--jobs", jobs,
                "-o", str(path)]
        assert main(argv) == 0
        docs.append(path.read_bytes())
    assert docs[0] == docs[1]
    assert json.loads(docs[0])["seed"] == 7


def test_seed_changes_results(capsys):
    outs = []
    for seed in ("1", "2"):
        _, out, _ = run(["truth-table", "-n", "3", "--shots", "128", "--seed", seed], capsys)
        outs.append(json.loads(out)["results"])
    assert outs[0] != outs[1]


def test_circuit_reingest_matches(tmp_path, capsys):
    circ = tmp_path / "c.json"
    assert main(["decompose", "-n", "4", "--leak-measure", "-o", str(circ)]) == 0
    capsys.readouterr()
    _, direct, _ = run(["truth-table", "-n", "4", "--shots", "64", "--postselect", "--seed", "3"], capsys)
    _, again, _ = run(["truth-table", "--circuit", str(circ), "--shots", "64", "--postselect", "--seed", "3"],
                      capsys)
    assert json.loads(direct)["results"] == json.loads(again)["results"]


def test_leak_scan_then_fit(tmp_path, capsys):
    csv_path = tmp_path / "leaks.csv"
    code, out, _ = run(["leak-scan", "--n-range", "3..5", "--shots", "600", "--csv", str(csv_path)], capsys)
    assert code == 0
    scan = json.loads(out)["results"]
    code, out, _ = run(["fit", "--input", str(csv_path)], capsys)
    assert code == 0
    refit = json.loads(out)["results"]
    assert refit["p"] == scan["p"] and refit["A"] == scan["A"]
    ns, means, _ = read_leak_csv(csv_path.read_text())
    assert fit_leakage(list(zip(ns, means))).p == scan["p"]


def test_fit_needs_input(capsys):
    code, _, err = run(["fit"], capsys)
    assert code == 2 and "--input" in err


def test_calibrate(capsys):
    code, out, _ = run(["calibrate", "--chi-a", "0.3", "--chi-b", "-0.2"], capsys)
    assert code == 0
    res = json.loads(out)["results"]
    assert res["chi_a"] == pytest.approx(0.3, abs=1e-9)
    assert res["chi_b"] == pytest.approx(-0.2, abs=1e-9)
    assert res["fit_a"]["reliable"]


def test_grover_noiseless(capsys):
    code, out, _ = run(["grover", "--variant", "qutrit", "--shots", "16", "--noiseless"], capsys)
    assert code == 0
    assert json.loads(out)["results"][0]["p_err"] == 0.0


def test_confusion_command(tmp_path, capsys):
    path = tmp_path / "cm.csv"
    assert main(["confusion", "-n", "2", "--shots", "500", "-o", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0] == "n,shots" and lines[1] == "2,500"
    assert len(lines) == 6


def test_config_file_and_flag_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"shots": 99, "seed": 5, "noise": {"xx_leak_prob": 0.04}}))
    ap = build_parser()
    rc = resolve(ap.parse_args(["truth-table", "-n", "3", "--config", str(cfg)]))
    assert rc.params["shots"] == 99 and rc.seed == 5
    assert rc.noise.xx_leak_prob == 0.04 and rc.noise.master_seed == 5
    rc = resolve(ap.parse_args(["truth-table", "-n", "3", "--config", str(cfg), "--shots", "10", "--seed", "8"]))
    assert rc.params["shots"] == 10 and rc.seed == 8


def test_env_seed_fallback(monkeypatch):
    monkeypatch.setenv("QTK_SEED", "41")
    rc = resolve(build_parser().parse_args(["grover"]))
    assert rc.seed == 41 and rc.noise.master_seed == 41
    monkeypatch.delenv("QTK_SEED")
    assert resolve(build_parser().parse_args(["grover"])).seed == 0


def test_unknown_config_keys_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"shotz": 3}))
    code, _, err = run(["grover", "--config", str(cfg)], capsys)
    assert code == 2 and "shotz" in err
    cfg.write_text(json.dumps({"noise": {"t3": 1}}))
    assert main(["grover", "--config", str(cfg)]) == 2
    cfg.write_text(json.dumps({"hardware": {"lasers": 2}}))
    assert main(["grover", "--config", str(cfg)]) == 2


def test_plot_output(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    svg = tmp_path / "f.svg"
    assert main(["truth-table", "-n", "3..4", "--shots", "16", "--noiseless", "--plot", str(svg)]) == 0
    text = svg.read_text()
    assert "<svg" in text
