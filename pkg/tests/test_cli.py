import json

import pytest

from ctcpipe.cli import main
from ctcpipe.pipeline import BatchReport, Outcome, SampleResult, evaluate_batch
from ctcpipe.storage import read_results, result_line


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["generate", str(out), "--n", "10", "--positives", "5", "--seed", "4"]) == 0
    return out


def test_generate_manifest(dataset):
    m = json.loads((dataset / "manifest.json").read_text())
    assert m["n"] == 10 and m["n_positive"] == 5
    assert sorted(p.name for p in dataset.iterdir() if p.is_dir()) == [s["sample_id"] for s in m["samples"]]


def test_detect_then_report(dataset, tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    assert main(["detect", str(dataset), "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 10
    report = BatchReport.from_dict(json.loads((tmp_path / "r.report.json").read_text()))
    assert report.n_no_ck + report.n_no_dapi + report.n_evaluated == report.n_samples == 10
    assert report.accuracy == 1.0

    # report on the written file agrees with the in-memory evaluation
    parsed = read_results(out)
    assert evaluate_batch(parsed.results, parsed.labels) == report
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "10 samples" in text and "accuracy 100.00% (10/10)" in text


def test_detect_is_deterministic(dataset, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["detect", str(dataset), "-o", str(a)]) == 0
    assert main(["detect", str(dataset), "-o", str(b), "--workers", "3"]) == 0
    strip = lambda p: [{k: v for k, v in json.loads(x).items() if k != "timings_ms"} for x in p.read_text().splitlines()]
    assert strip(a) == strip(b)
    assert (tmp_path / "a.report.json").read_bytes() == (tmp_path / "b.report.json").read_bytes()


def test_detect_empty_dir(tmp_path, capsys):
    assert main(["detect", str(tmp_path), "-o", str(tmp_path / "r.jsonl")]) == 1
    assert "no samples found" in capsys.readouterr().err


def test_detect_missing_channel_is_partial(tmp_path):
    data = tmp_path / "d"
    assert main(["generate", str(data), "--n", "3", "--seed", "1"]) == 0
    (data / "sample_0001" / "cd45.png").unlink()
    out = tmp_path / "r.jsonl"
    assert main(["detect", str(data), "-o", str(out)]) == 2
    rows = [json.loads(x) for x in out.read_text().splitlines()]
    assert [r["outcome"] for r in rows].count("error") == 1
    rep = json.loads((tmp_path / "r.report.json").read_text())
    assert rep["n_samples"] == 2 and rep["error_ids"] == ["sample_0001"]


def test_detect_config_error_names_field(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"r1": 1.7}))
    assert main(["detect", str(dataset), "--config", str(cfg), "-o", str(tmp_path / "r.jsonl")]) == 1
    assert "r1" in capsys.readouterr().err
    cfg.write_text(json.dumps({"stage1": {"kind": "external"}}))
    assert main(["detect", str(dataset), "--config", str(cfg), "-o", str(tmp_path / "r.jsonl")]) == 1
    assert "endpoint" in capsys.readouterr().err
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["detect", str(dataset), "--config", str(cfg), "-o", str(tmp_path / "r.jsonl")]) == 1
    assert "colour" in capsys.readouterr().err
    assert not (tmp_path / "r.jsonl").exists()


def test_detect_with_params_file(dataset, tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"r1": 0.17, "r2": 0.2, "semantics": "paper_literal"}))
    out = tmp_path / "r.jsonl"
    assert main(["detect", str(dataset), "--params", str(params), "-o", str(out)]) == 0
    verdicts = [v for x in out.read_text().splitlines() for v in json.loads(x)["verdicts"]]
    assert verdicts
    assert all(v["params"] == {"r1": 0.17, "r2": 0.2, "semantics": "paper_literal"} for v in verdicts)


def _records(path, rows):
    path.write_text("".join(json.dumps({"p_ck_given_c": a, "p_cd45_given_c": b, "label": c}) + "\n" for a, b, c in rows))
    return path


def test_calibrate_separable(tmp_path, capsys):
    recs = _records(tmp_path / "recs.jsonl", [(0.5, 0.0, True), (0.1, 0.0, False), (0.6, 0.5, False)])
    out = tmp_path / "params.json"
    assert main(["calibrate", str(recs), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["f1"] == 1.0 and doc["r1"] == 0.1
    assert main(["calibrate", str(recs), "-o", str(out), "--grid-step", "0"]) == 1


def test_calibrate_one_class(tmp_path, capsys):
    recs = _records(tmp_path / "recs.jsonl", [(0.5, 0.0, False), (0.1, 0.0, False)])
    assert main(["calibrate", str(recs), "-o", str(tmp_path / "p.json")]) == 1
    assert "uncalibratable" in capsys.readouterr().err


def test_calibrate_from_manifest(dataset, tmp_path):
    out = tmp_path / "p.json"
    assert main(["calibrate", str(dataset / "manifest.json"), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["f1"] == 1.0


def test_generate_errors(tmp_path, capsys):
    assert main(["generate", str(tmp_path / "x"), "--n", "0"]) == 1
    assert main(["generate", str(tmp_path / "x"), "--n", "2", "--dims", "0x0"]) == 1
    assert "infeasible" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["generate", str(tmp_path / "x"), "--dims", "big"])


def test_generate_single_scene_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(
        json.dumps(
            {
                "seed": 1,
                "dims": [64, 64],
                "ck_blobs": [{"center": [32, 32], "radius": 12, "intensity": 160}],
                "dapi_blobs": [{"radius": 5, "planted_ck_overlap": 0.8}],
                "sample_id": "one",
            }
        )
    )
    assert main(["generate", str(tmp_path / "o"), "--spec", str(spec)]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["samples"][0]["label"] is True
    assert (tmp_path / "o" / "one" / "ck.png").is_file()


def _write_reported_counts(path, corrupt=False):
    lines = []
    for i in range(420):
        outcome = "no_ck_detected" if i < 130 else "no_dapi_detected" if i < 300 else "evaluated"
        r = SampleResult(f"s{i:03d}", Outcome(outcome), sample_positive=outcome == "evaluated" and i < 305)
        lines.append(result_line(r, False))
    if corrupt:
        lines[3] = '{"sample_id": "s003", "outc'
    path.write_text("\n".join(lines) + "\n")


def test_report_reported_counts(tmp_path, capsys):
    f = tmp_path / "r.jsonl"
    _write_reported_counts(f)
    assert main(["report", str(f)]) == 0
    text = capsys.readouterr().out
    assert "accuracy 98.81% (415/420)" in text
    assert "stage3 accuracy 95.83% (115/120)" in text


def test_report_empty_and_corrupt(tmp_path, capsys):
    f = tmp_path / "empty.jsonl"
    f.write_text("")
    assert main(["report", str(f)]) == 0
    assert capsys.readouterr().out.strip() == "0 samples"

    g = tmp_path / "bad.jsonl"
    _write_reported_counts(g, corrupt=True)
    assert main(["report", str(g)]) == 0
    text = capsys.readouterr().out
    assert text.startswith("419 samples")
    assert "skipped corrupt line 4" in text

    assert main(["report", str(tmp_path / "missing.jsonl")]) == 1
