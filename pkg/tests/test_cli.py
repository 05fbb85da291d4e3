import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from equifair import MsaCalibrator, load_calibrator, make_synthetic, unfairness
from equifair.cli import main

from conftest import LISTING_GENDER, LISTING_ORIGIN, LISTING_SCORES


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def listing_files(tmp_path):
    calib = write_csv(tmp_path / "calib.csv", ["pred", "origin", "gender"],
                      zip(LISTING_SCORES[:8], LISTING_ORIGIN[:8], LISTING_GENDER[:8]))
    test = write_csv(tmp_path / "test.csv", ["pred", "origin", "gender"],
                     [[0.16, 0, 0], [0.79, 1, 1]])
    audit = write_csv(tmp_path / "audit.csv", ["pred", "origin", "gender"],
                      zip(LISTING_SCORES, LISTING_ORIGIN, LISTING_GENDER))
    return tmp_path, calib, test, audit


@pytest.fixture
def synth_files(tmp_path):
    data = make_synthetic(3000, seed=5)
    rows = [[repr(float(s)), repr(float(t)), a, b] for s, t, (a, b) in zip(data.scores, data.labels, data.sensitive)]
    calib = write_csv(tmp_path / "calib.csv", ["pred", "label", "a1", "a2"], rows[:1500])
    test = write_csv(tmp_path / "test.csv", ["pred", "label", "a1", "a2"], rows[1500:])
    return tmp_path, calib, test, data


def calibrate(calib, out, *extra):
    return main(["calibrate", calib, "--pred-col", "pred", "--sensitive-cols", "origin,gender", "--out", out, *extra])


# -- calibrate ---------------------------------------------------------------

def test_calibrate_listing(listing_files, capsys):
    tmp, calib, _, _ = listing_files
    assert calibrate(calib, str(tmp / "m.json")) == 0
    doc = json.loads((tmp / "m.json").read_text())
    assert doc["schema_version"] == 1
    assert [s["attribute"] for s in doc["stages"]] == ["origin", "gender"]
    for stage in doc["stages"]:
        assert {g["weight"] for g in stage["groups"].values()} == {0.5}
    out = capsys.readouterr().out
    assert "origin\t0\tn=4\tweight=0.5" in out


def test_missing_column_is_schema_error(listing_files, capsys):
    tmp, calib, _, _ = listing_files
    code = main(["calibrate", calib, "--pred-col", "pred", "--sensitive-cols", "origin,race", "--out", str(tmp / "m.json")])
    assert code == 2
    assert "race" in capsys.readouterr().err
    assert not (tmp / "m.json").exists()


def test_one_row_is_degenerate(tmp_path):
    data = write_csv(tmp_path / "one.csv", ["pred", "origin", "gender"], [[0.5, 0, 1]])
    assert calibrate(data, str(tmp_path / "m.json")) == 3


def test_single_modality_is_degenerate(tmp_path):
    data = write_csv(tmp_path / "c.csv", ["pred", "origin", "gender"], [[0.5, 0, 1], [0.6, 0, 0]])
    assert calibrate(data, str(tmp_path / "m.json")) == 3


def test_ragged_csv_is_io_error(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("pred,origin,gender\n0.1,0,1\n0.2,1\n")
    assert calibrate(str(path), str(tmp_path / "m.json")) == 5
    assert "row 2" in capsys.readouterr().err


def test_bad_number_names_row_and_column(tmp_path, capsys):
    data = write_csv(tmp_path / "c.csv", ["pred", "origin", "gender"], [[0.5, 0, 1], ["abc", 1, 0]])
    assert calibrate(data, str(tmp_path / "m.json")) == 2
    err = capsys.readouterr().err
    assert "row 2" in err and "'pred'" in err


@pytest.mark.parametrize("content", [b"", b"\xff\xfe\x00garbage"])
def test_unreadable_csv_is_io_error(tmp_path, content):
    path = tmp_path / "bad.csv"
    path.write_bytes(content)
    assert calibrate(str(path), str(tmp_path / "m.json")) == 5


def test_missing_file_is_io_error(tmp_path):
    assert calibrate(str(tmp_path / "nope.csv"), str(tmp_path / "m.json")) == 5


def test_missing_sensitive_value(tmp_path, capsys):
    data = write_csv(tmp_path / "c.csv", ["pred", "origin", "gender"], [[0.5, 0, 1], [0.6, "", 0]])
    assert calibrate(data, str(tmp_path / "m.json")) == 2
    assert "row 2" in capsys.readouterr().err


# -- apply -------------------------------------------------------------------

def test_apply_matches_library(synth_files):
    tmp, calib, test, data = synth_files
    assert main(["calibrate", calib, "--pred-col", "pred", "--sensitive-cols", "a1,a2", "--out", str(tmp / "m.json")]) == 0
    assert main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--epsilon", "0.1,0.2",
                 "--out", str(tmp / "o.csv")]) == 0
    rows = read_rows(tmp / "o.csv")
    assert len(rows) == 1500
    assert list(rows[0]) == ["pred", "label", "a1", "a2", "fair_pred", "fair_after_a1", "fair_after_a2"]
    cal = MsaCalibrator().fit(data.scores[:1500], {"a1": data.sensitive[:1500, 0], "a2": data.sensitive[:1500, 1]})
    trace = cal.transform_trace(data.scores[1500:], {"a1": data.sensitive[1500:, 0], "a2": data.sensitive[1500:, 1]},
                                [0.1, 0.2])
    np.testing.assert_array_equal([float(r["fair_pred"]) for r in rows], trace["a2"])
    np.testing.assert_array_equal([float(r["fair_after_a1"]) for r in rows], trace["a1"])


def test_apply_then_audit_reproduces_library(synth_files, capsys):
    tmp, calib, test, data = synth_files
    main(["calibrate", calib, "--pred-col", "pred", "--sensitive-cols", "a1,a2", "--out", str(tmp / "m.json")])
    main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--out", str(tmp / "o.csv")])
    capsys.readouterr()
    assert main(["audit", str(tmp / "o.csv"), "--pred-col", "fair_pred", "--sensitive-cols", "a1,a2"]) == 0
    report = json.loads(capsys.readouterr().out)
    cal = load_calibrator(json.loads((tmp / "m.json").read_text()))
    fair = cal.transform(data.scores[1500:], {"a1": data.sensitive[1500:, 0], "a2": data.sensitive[1500:, 1]})
    lib = unfairness(fair, {"a1": data.sensitive[1500:, 0], "a2": data.sensitive[1500:, 1]})
    assert report["unfairness"] == lib.to_dict()


def test_apply_epsilon_ones_is_identity(listing_files):
    tmp, calib, test, _ = listing_files
    calibrate(calib, str(tmp / "m.json"))
    assert main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--epsilon", "1,1",
                 "--out", str(tmp / "o.csv")]) == 0
    rows = read_rows(tmp / "o.csv")
    assert len(rows) == 2
    for r in rows:
        assert abs(float(r["fair_pred"]) - float(r["pred"])) <= 10 * 1e-4


def test_apply_unseen_modality(listing_files, capsys):
    tmp, calib, _, _ = listing_files
    calibrate(calib, str(tmp / "m.json"))
    test = write_csv(tmp / "t2.csv", ["pred", "origin", "gender"], [[0.2, 0, 0], [0.3, 2, 1]])
    code = main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--out", str(tmp / "o.csv")])
    assert code == 4
    err = capsys.readouterr().err
    assert "'2'" in err and "row 2" in err
    assert not (tmp / "o.csv").exists()
    assert not list(tmp.glob(".equifair-*"))


def test_apply_stage_mismatch(listing_files):
    tmp, calib, test, _ = listing_files
    calibrate(calib, str(tmp / "m.json"))
    code = main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--sensitive-cols", "origin",
                 "--out", str(tmp / "o.csv")])
    assert code == 2


def test_apply_bad_model(listing_files):
    tmp, _, test, _ = listing_files
    (tmp / "m.json").write_text('{"schema_version": 7}')
    assert main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--out", str(tmp / "o.csv")]) == 2
    (tmp / "m.json").write_text("{not json")
    assert main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--out", str(tmp / "o.csv")]) == 2


def test_bad_epsilon(listing_files):
    tmp, calib, test, _ = listing_files
    calibrate(calib, str(tmp / "m.json"))
    for eps in ("0.1", "0.1,x", "0.1,2"):
        assert main(["apply", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--epsilon", eps,
                     "--out", str(tmp / "o.csv")]) == 2


# -- audit -------------------------------------------------------------------

def test_audit_matches_library(listing_files, capsys):
    _, _, _, audit = listing_files
    assert main(["audit", audit, "--pred-col", "pred", "--sensitive-cols", "origin,gender"]) == 0
    report = json.loads(capsys.readouterr().out)
    lib = unfairness(LISTING_SCORES, {"origin": LISTING_ORIGIN, "gender": LISTING_GENDER})
    assert report["unfairness"] == lib.to_dict()
    assert report["n"] == 10


def test_audit_constant_predictions(tmp_path, capsys):
    data = write_csv(tmp_path / "a.csv", ["pred", "s"], [[0.3, i % 2] for i in range(6)])
    assert main(["audit", data, "--pred-col", "pred", "--sensitive-cols", "s"]) == 0
    assert json.loads(capsys.readouterr().out)["unfairness"]["total"] == 0


def test_audit_grid_and_exact_agree(synth_files, capsys):
    _, _, test, data = synth_files
    totals = {}
    for method in ("grid", "exact"):
        main(["audit", test, "--pred-col", "pred", "--sensitive-cols", "a1,a2", "--method", method])
        totals[method] = json.loads(capsys.readouterr().out)["unfairness"]["total"]
    span = np.ptp(data.scores[1500:])
    assert abs(totals["grid"] - totals["exact"]) <= 2 * 2 * span / 1000


def test_audit_performance_and_threshold(tmp_path, capsys):
    data = write_csv(tmp_path / "a.csv", ["p", "y", "s"], [[0.2, 0, 0], [0.8, 1, 1], [0.4, 1, 0], [0.9, 0, 1]])
    assert main(["audit", data, "--pred-col", "p", "--sensitive-cols", "s", "--label-col", "y",
                 "--metric", "accuracy", "--threshold", "0.5"]) == 0
    assert json.loads(capsys.readouterr().out)["performance"]["value"] == 0.5
    assert main(["audit", data, "--pred-col", "p", "--sensitive-cols", "s", "--label-col", "y",
                 "--metric", "accuracy"]) == 2


def test_grid_size_must_be_at_least_two(listing_files):
    _, _, _, audit = listing_files
    assert main(["audit", audit, "--pred-col", "pred", "--sensitive-cols", "origin", "--grid-size", "1"]) == 2


# -- decompose ---------------------------------------------------------------

def test_decompose(synth_files, capsys):
    tmp, calib, test, _ = synth_files
    main(["calibrate", calib, "--pred-col", "pred", "--sensitive-cols", "a1,a2", "--out", str(tmp / "m.json")])
    capsys.readouterr()
    assert main(["decompose", test, "--model", str(tmp / "m.json"), "--pred-col", "pred", "--out",
                 str(tmp / "d.json")]) == 0
    doc = json.loads((tmp / "d.json").read_text())
    assert [r["stage"] for r in doc["rows"]] == ["Base model", "a1", "a2"]
    assert doc["attributes"] == ["a1", "a2"]
    assert doc["rows"][-1]["total"] <= doc["rows"][0]["total"]


# -- plot --------------------------------------------------------------------

def plot(calib, test, kind, *extra):
    return main(["plot", kind, "--calib", calib, "--data", test, "--pred-col", "pred", "--sensitive-cols", "a1,a2",
                 *extra])


def test_plot_kinds(synth_files):
    tmp, calib, test, _ = synth_files
    assert plot(calib, test, "multiple_arrow", "--label-col", "label", "--out", str(tmp / "m.json")) == 0
    assert len(json.loads((tmp / "m.json").read_text())["series"]) == 2
    assert plot(calib, test, "waterfall", "--epsilon", "0.5,0.25", "--both-orders", "--out", str(tmp / "w.json")) == 0
    spec = json.loads((tmp / "w.json").read_text())
    assert len(spec["series"]) == 2
    assert plot(calib, test, "density", "--out", str(tmp / "d.json")) == 0
    spec = json.loads((tmp / "d.json").read_text())
    assert len(spec["meta"]["columns"]) == 2 and len(spec["meta"]["rows"]) == 3
    assert plot(calib, test, "arrow", "--label-col", "label", "--format", "svg", "--out", str(tmp / "a.svg")) == 0
    assert (tmp / "a.svg").read_text().count('class="marker"') == 3


def test_plot_arrow_needs_labels(synth_files, capsys):
    tmp, calib, test, _ = synth_files
    assert plot(calib, test, "arrow", "--out", str(tmp / "a.json")) == 2
    assert "--label-col" in capsys.readouterr().err
    assert not (tmp / "a.json").exists()


def test_plot_unknown_kind(synth_files):
    _, calib, test, _ = synth_files
    with pytest.raises(SystemExit) as info:
        plot(calib, test, "pie")
    assert info.value.code == 2


# -- configuration and determinism ------------------------------------------

def test_repeated_runs_are_byte_identical(synth_files):
    tmp, calib, test, _ = synth_files
    outputs = []
    for i in range(2):
        main(["calibrate", calib, "--pred-col", "pred", "--sensitive-cols", "a1,a2", "--out", str(tmp / f"m{i}.json")])
        main(["apply", test, "--model", str(tmp / f"m{i}.json"), "--pred-col", "pred", "--out", str(tmp / f"o{i}.csv")])
        plot(calib, test, "waterfall", "--format", "svg", "--out", str(tmp / f"w{i}.svg"))
        outputs.append([(tmp / f"{n}{i}.{e}").read_bytes() for n, e in (("m", "json"), ("o", "csv"), ("w", "svg"))])
    assert outputs[0] == outputs[1]


def test_seed_precedence(synth_files, monkeypatch):
    tmp, calib, _, _ = synth_files
    args = ["calibrate", calib, "--pred-col", "pred", "--sensitive-cols", "a1,a2"]

    def seed_of(*extra):
        main(args + ["--out", str(tmp / "m.json"), *extra])
        return json.loads((tmp / "m.json").read_text())["seed"]

    (tmp / "cfg.json").write_text(json.dumps({"seed": 11, "sigma": 0.001}))
    assert seed_of() == 0
    assert seed_of("--config", str(tmp / "cfg.json")) == 11
    monkeypatch.setenv("EQUIFAIR_SEED", "22")
    assert seed_of("--config", str(tmp / "cfg.json")) == 22
    assert seed_of("--config", str(tmp / "cfg.json"), "--seed", "33") == 33
    assert json.loads((tmp / "m.json").read_text())["sigma"] == 0.001


def test_config_supplies_columns(synth_files):
    tmp, calib, _, _ = synth_files
    (tmp / "cfg.json").write_text(json.dumps({"pred_col": "pred", "sensitive_cols": ["a2", "a1"]}))
    assert main(["calibrate", calib, "--config", str(tmp / "cfg.json"), "--out", str(tmp / "m.json")]) == 0
    assert [s["attribute"] for s in json.loads((tmp / "m.json").read_text())["stages"]] == ["a2", "a1"]
    (tmp / "bad.json").write_text(json.dumps({"colour": 1}))
    assert main(["calibrate", calib, "--config", str(tmp / "bad.json"), "--out", str(tmp / "m.json")]) == 2


def test_synth_is_seeded(tmp_path):
    main(["synth", "--n", "50", "--seed", "4", "--out", str(tmp_path / "a.csv")])
    main(["synth", "--n", "50", "--seed", "4", "--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(read_rows(tmp_path / "a.csv")) == 50


def test_help_documents_environment(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert "EQUIFAIR_SEED" in out and "Exit codes" in out


def test_module_entry_point(listing_files):
    _, _, _, audit = listing_files
    res = subprocess.run([sys.executable, "-m", "equifair", "audit", audit, "--pred-col", "pred",
                          "--sensitive-cols", "origin,gender", "--method", "exact"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["unfairness"]["method"] == "exact"
