import json
import logging

import numpy as np
import pytest

from knockbench.cli import DEFAULT_CONFIG, RESULTS, main
from knockbench.dataset import Dataset, load_dataset, save_dataset
from knockbench.simulator import SimConfig, simulate_dataset


def write_config(path, simulate=None, evaluate=None):
    cfg = {}
    if simulate:
        cfg["simulate"] = simulate
    if evaluate:
        cfg["evaluate"] = evaluate
    path.write_text(json.dumps(cfg))
    return path


SMALL_SIM = {"p": 100, "n1": 50, "n2": 25, "N": 2, "n_t": [2], "p0": [1, 2]}


@pytest.fixture(scope="module")
def dataset_files(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    ds, _ = simulate_dataset(SimConfig(p=14, n_t=4, n1=40, n2=11), 3)
    return save_dataset(ds, out)


def evaluate(tmp_path, files, out="ev", extra=(), evaluate_cfg=None):
    cfg = write_config(tmp_path / "ev.json", evaluate={"B": 2, **(evaluate_cfg or {})})
    argv = ["evaluate", "--config", str(cfg), "--out", str(tmp_path / out),
            "--obs", str(files[0]), "--intv", str(files[1]), "--meta", str(files[2]), *extra]
    return main(argv), tmp_path / out


def test_print_config(capsys):
    assert main(["print-config"]) == 0
    assert json.loads(capsys.readouterr().out) == DEFAULT_CONFIG
    assert DEFAULT_CONFIG["simulate"]["n_t"] == [2, 3, 5, 10, 20]


@pytest.mark.parametrize("content, msg", [
    ({"simulate": {"N": "ten"}}, "simulate.N: expected a number"),
    ({"simulate": {"bogus": 1}}, "simulate.bogus: unknown field"),
    ({"other": {}}, "other: unknown section"),
    ({"simulate": {"p0": [3]}}, "p0 must be 1 or 2"),
    ({"evaluate": {"estimators": ["XX"]}}, "unknown estimator"),
])
def test_invalid_config_field_message(tmp_path, capsys, content, msg):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(content))
    cmd = "evaluate" if "evaluate" in content else "simulate"
    extra = ["--obs", "x", "--intv", "y", "--meta", "z"] if cmd == "evaluate" else []
    assert main([cmd, "--config", str(cfg), "--out", str(tmp_path / "o"), *extra]) == 2
    assert msg in capsys.readouterr().err


def test_simulate_range_and_determinism(tmp_path):
    cfg = write_config(tmp_path / "c.json", simulate=SMALL_SIM)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / RESULTS).read_bytes()
    assert a == (tmp_path / "b" / RESULTS).read_bytes()
    lines = a.decode().splitlines()
    assert len(lines) == 3
    for line in lines[1:]:
        cells = line.split("\t")
        p0 = int(cells[0])
        assert all(0.0 <= float(v) <= p0 for v in cells[2:])
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["seed"] == 0
    assert set(manifest["outputs"]) == {RESULTS}


def test_simulate_resume(tmp_path):
    cfg = write_config(tmp_path / "c.json", simulate={**SMALL_SIM, "p0": [1]})
    out = tmp_path / "r"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    first = (out / RESULTS).read_bytes()
    ck = out / "trials_checkpoint.jsonl"
    ck.write_text("\n".join(ck.read_text().splitlines()[:1]) + "\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--resume"]) == 0
    assert (out / RESULTS).read_bytes() == first
    cfg2 = write_config(tmp_path / "c2.json", simulate={**SMALL_SIM, "N": 3})
    assert main(["simulate", "--config", str(cfg2), "--out", str(out), "--resume"]) == 2


def test_simulate_emit_dataset(tmp_path):
    cfg = write_config(tmp_path / "c.json", simulate={**SMALL_SIM, "N": 1, "p0": [1]})
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s"),
                 "--emit-dataset"]) == 0
    ds = load_dataset(*(tmp_path / "s" / f"sim_{n}" for n in ("obs.tsv", "intv.tsv", "meta.json")))
    assert (ds.p, ds.n1, ds.n2) == (101, 50, 25)


def test_evaluate_outputs(tmp_path, dataset_files):
    code, out = evaluate(tmp_path, dataset_files)
    assert code == 0
    for est in ("L1", "L1R", "CD", "ICP"):
        lines = (out / f"roc_{est}_symmetric.tsv").read_text().splitlines()
        assert lines[0] == "rank_threshold\tfp\ttp"
        fp, tp = map(int, lines[-1].split("\t")[1:])
        assert fp + tp == 11 * 10
    rows = (out / "flipped_ranks.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["estimator", "cause", "effect", "res", "rank",
                                   "res-flip", "rank-flip"]
    assert len(rows) == 1 + 4 * 10
    manifest = json.loads((out / "manifest.json").read_text())
    # checkpoints are kept for --resume and are not result files
    assert len(manifest["outputs"]) == 5
    assert (out / "pipeline_checkpoint.jsonl").exists()


def test_evaluate_full_scoring(tmp_path, dataset_files):
    code, out = evaluate(tmp_path, dataset_files, extra=["--scoring", "full",
                                                         "--estimators", "L1"])
    assert code == 0
    fp, tp = map(int, (out / "roc_L1_full.tsv").read_text().splitlines()[-1].split("\t")[1:])
    assert fp + tp == 11 * 14


def test_evaluate_deterministic(tmp_path, dataset_files):
    _, a = evaluate(tmp_path, dataset_files, out="a", extra=["--estimators", "CD,ICP"])
    _, b = evaluate(tmp_path, dataset_files, out="b", extra=["--estimators", "CD,ICP"])
    for f in a.iterdir():
        if f.name != "manifest.json":
            assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_evaluate_empty_symmetric_set(tmp_path, caplog):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.standard_normal((10, 4)), rng.standard_normal((1, 4)) - 40, [2],
                 ["a", "b", "c", "d"])
    files = save_dataset(ds, tmp_path / "d")
    with caplog.at_level(logging.WARNING):
        code, out = evaluate(tmp_path, files, extra=["--estimators", "L1"])
    assert code == 0
    assert (out / "roc_L1_symmetric.tsv").read_text() == "rank_threshold\tfp\ttp\n"
    assert "empty" in caplog.text


def test_evaluate_bad_data_reports_line(tmp_path, dataset_files, capsys):
    bad = tmp_path / "bad.tsv"
    lines = dataset_files[0].read_text().splitlines()
    lines[3] = lines[3] + "\t1.0"
    bad.write_text("\n".join(lines) + "\n")
    code, _ = evaluate(tmp_path, (bad, dataset_files[1], dataset_files[2]))
    assert code == 2
    assert "bad.tsv:4: row 2" in capsys.readouterr().err


def test_convert(tmp_path):
    (tmp_path / "o.csv").write_text("a,b,c\n1,2,3\n4,5,6\n")
    (tmp_path / "i.csv").write_text("a,b,c\n-40,2,3\n")
    (tmp_path / "m.json").write_text(json.dumps({"knockouts": [{"row": 0, "gene_name": "a"}]}))
    assert main(["convert", "--obs", str(tmp_path / "o.csv"), "--intv", str(tmp_path / "i.csv"),
                 "--meta", str(tmp_path / "m.json"), "--out", str(tmp_path / "c"),
                 "--delimiter", ","]) == 0
    ds = load_dataset(tmp_path / "c" / "obs.tsv", tmp_path / "c" / "intv.tsv",
                      tmp_path / "c" / "meta.json")
    assert ds.gene_names == ("a", "b", "c") and ds.knockout_map == (0,)


def test_failed_run_marks_manifest(tmp_path, dataset_files, monkeypatch, capsys):
    import knockbench.cli as cli

    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(cli, "roc_points", boom)
    code, out = evaluate(tmp_path, dataset_files, extra=["--estimators", "L1"])
    assert code == 1
    assert "solver exploded" in capsys.readouterr().err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["outputs"] == {}
    assert not list(out.glob("roc_*"))
