import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gamlsskit.cli import SEED_ENV, fmt_fixed, fmt_p, main
from gamlsskit.data import DEFAULT_FORMULA, column_values, derive_variables, load_csv
from gamlsskit.engine import fit
from gamlsskit.formula import build_spec, parse_formula

SMALL_FORMULA = "UP ~ cs(log(AR), df=3) + SZ + TO | sigma: ST"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def svg_meta(path):
    root = ET.parse(path).getroot()
    return json.loads(root.find("{http://www.w3.org/2000/svg}metadata").text)


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Simulated data plus a fit of the generator's own structure."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--seed", "7", "--n", "2000", "--out", str(root / "lots.csv")]) == 0
    assert main(["fit", "--data", str(root / "lots.csv"), "--formula", DEFAULT_FORMULA, "--family", "GA",
                 "--out", str(root / "fit")]) == 0
    return root


class TestFormatting:
    def test_fixed(self):
        assert fmt_fixed(-0.00001) == "0.0000"
        assert fmt_fixed(1.23456) == "1.2346"
        assert fmt_fixed(float("nan")) == "NA"

    def test_p_floor(self):
        assert fmt_p(0.00001) == "<0.0001"
        assert fmt_p(0.0123) == "0.0123"


class TestSimulate:
    def test_writes_versioned_csv(self, tmp_path, capsys):
        code, out, err = run(capsys, "simulate", "--seed", 3, "--n", 60, "--out", tmp_path / "a.csv")
        assert code == 0 and err == ""
        assert out == "wrote 60 rows (seed 3)\n"
        assert (tmp_path / "a.csv").read_text().startswith("# format_version: 1\n")
        assert load_csv(tmp_path / "a.csv").n == 60

    def test_seed_from_environment(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "3")
        assert run(capsys, "simulate", "--n", 60, "--out", tmp_path / "env.csv")[0] == 0
        run(capsys, "simulate", "--seed", 3, "--n", 60, "--out", tmp_path / "flag.csv")
        assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()
        run(capsys, "simulate", "--seed", 4, "--n", 60, "--out", tmp_path / "other.csv")
        assert (tmp_path / "other.csv").read_bytes() != (tmp_path / "flag.csv").read_bytes()

    def test_flag_beats_environment(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "99")
        _, out, _ = run(capsys, "simulate", "--seed", 3, "--n", 60, "--out", tmp_path / "a.csv")
        assert "seed 3" in out

    def test_no_seed(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv(SEED_ENV, raising=False)
        code, out, err = run(capsys, "simulate", "--n", 60, "--out", tmp_path / "a.csv")
        assert code == 1 and out == "" and SEED_ENV in err
        assert not (tmp_path / "a.csv").exists()

    def test_bad_environment_seed(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "abc")
        code, out, err = run(capsys, "simulate", "--n", 60, "--out", tmp_path / "a.csv")
        assert code == 1 and out == "" and "not an integer" in err


class TestFit:
    def test_outputs(self, workspace):
        out = workspace / "fit"
        assert sorted(p.name for p in out.iterdir()) == [
            "coefficients.txt", "criteria.json", "model.json", "residuals.csv", "worm.svg"]
        crit = json.loads((out / "criteria.json").read_text())
        assert crit["format_version"] == 1 and crit["converged"] is True
        assert crit["df_total"] == 81
        assert crit["aic"] == pytest.approx(crit["global_deviance"] + 162)
        assert json.loads((out / "model.json").read_text())["format_version"] == 1
        assert len(read_csv(out / "residuals.csv")) == 2000
        assert svg_meta(out / "worm.svg")["format_version"] == 1

    def test_coefficient_table(self, workspace):
        text = (workspace / "fit" / "coefficients.txt").read_text()
        header = text.splitlines()[0].split()
        assert header == ["parameter", "term", "estimate", "std.error", "z", "p"]
        assert "cs(log(AR), df=10)" in text

    def test_rerun_identical_bytes(self, tmp_path, capsys):
        run(capsys, "simulate", "--seed", 5, "--n", 300, "--out", tmp_path / "d.csv")
        outs = []
        for k in range(2):
            code, out, _ = run(capsys, "fit", "--data", tmp_path / "d.csv", "--formula", SMALL_FORMULA,
                               "--family", "GA", "--out", tmp_path / "o")
            assert code == 0
            outs.append((out, {p.name: p.read_bytes() for p in (tmp_path / "o").iterdir()}))
        assert outs[0] == outs[1]

    def test_bad_formula_writes_nothing(self, workspace, tmp_path, capsys):
        code, out, err = run(capsys, "fit", "--data", workspace / "lots.csv", "--formula", "UP ~ spline(LAT)",
                             "--family", "GA", "--out", tmp_path / "o")
        assert code == 1 and out == ""
        assert "unknown function 'spline'" in err and "^" in err
        assert not (tmp_path / "o").exists()

    def test_identity_link_warning(self, tmp_path, capsys):
        run(capsys, "simulate", "--seed", 5, "--n", 300, "--out", tmp_path / "d.csv")
        code, _, err = run(capsys, "fit", "--data", tmp_path / "d.csv", "--formula", "UP ~ SZ", "--family", "GA",
                           "--mu-link", "identity", "--out", tmp_path / "o")
        assert code == 0 and "warning" in err

    def test_non_convergence_exit_code(self, tmp_path, capsys, monkeypatch):
        from gamlsskit import cli, engine

        run(capsys, "simulate", "--seed", 5, "--n", 300, "--out", tmp_path / "d.csv")
        orig = engine.fit
        monkeypatch.setattr(cli, "fit", lambda spec, data: orig(spec, data, engine.FitOptions(max_outer=1)))
        code, out, err = run(capsys, "fit", "--data", tmp_path / "d.csv", "--formula", SMALL_FORMULA,
                             "--family", "GA", "--out", tmp_path / "o")
        assert code == 2 and "did not converge" in err
        assert json.loads((tmp_path / "o" / "criteria.json").read_text())["converged"] is False


class TestPredict:
    def test_closure_on_training_data(self, workspace, tmp_path, capsys):
        code, _, _ = run(capsys, "predict", "--model", workspace / "fit" / "model.json",
                         "--data", workspace / "lots.csv", "--which", "mu", "--out", tmp_path / "mu.csv")
        assert code == 0
        pred = np.array([float(r["mu"]) for r in read_csv(tmp_path / "mu.csv")])
        data = derive_variables(load_csv(workspace / "lots.csv"))
        fm = fit(build_spec(parse_formula(DEFAULT_FORMULA), "GA", schema=data), data)
        assert np.max(np.abs(pred - fm.mu.fitted)) < 1e-10

    def test_sigma(self, workspace, tmp_path, capsys):
        run(capsys, "predict", "--model", workspace / "fit" / "model.json", "--data", workspace / "lots.csv",
            "--which", "sigma", "--out", tmp_path / "s.csv")
        s = np.array([float(r["sigma"]) for r in read_csv(tmp_path / "s.csv")])
        assert s.size == 2000 and np.all(s > 0)

    def test_missing_model(self, workspace, tmp_path, capsys):
        code, out, err = run(capsys, "predict", "--model", tmp_path / "none.json", "--data",
                             workspace / "lots.csv", "--out", tmp_path / "p.csv")
        assert code == 1 and out == "" and err.startswith("error:")
        assert not (tmp_path / "p.csv").exists()


class TestDiagnose:
    def test_outputs(self, workspace, tmp_path, capsys):
        code, out, _ = run(capsys, "diagnose", "--model", workspace / "fit" / "model.json",
                           "--data", workspace / "lots.csv", "--out", tmp_path / "d")
        assert code == 0 and "pseudo-R2" in out
        for name in ("residual_index.svg", "worm.svg"):
            assert svg_meta(tmp_path / "d" / name)["format_version"] == 1
        assert len(read_csv(tmp_path / "d" / "residuals.csv")) == 2000
        doc = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
        assert doc["format_version"] == 1 and doc["residuals"]["n"] == 2000

    def test_worm_by_quartiles(self, workspace, tmp_path, capsys):
        code, _, _ = run(capsys, "diagnose", "--model", workspace / "fit" / "model.json", "--data",
                         workspace / "lots.csv", "--out", tmp_path / "d", "--worm-by", "log(AR)", "--bins", 4)
        assert code == 0
        meta = svg_meta(tmp_path / "d" / "worm_by.svg")
        assert len(meta["panels"]) == 4
        groups = json.loads((tmp_path / "d" / "diagnostics.json").read_text())["worm_groups"]
        v = column_values(derive_variables(load_csv(workspace / "lots.csv")), "log(AR)")
        assert_allclose([g["upper"] for g in groups], np.quantile(v, [0.25, 0.5, 0.75, 1.0]))
        assert sum(g["n"] for g in groups) == 2000

    def test_row_count_mismatch(self, workspace, tmp_path, capsys):
        run(capsys, "simulate", "--seed", 1, "--n", 100, "--out", tmp_path / "x.csv")
        code, out, err = run(capsys, "diagnose", "--model", workspace / "fit" / "model.json",
                             "--data", tmp_path / "x.csv", "--out", tmp_path / "d")
        assert code == 1 and out == "" and "rows" in err

    def test_bad_bins(self, workspace, tmp_path, capsys):
        code, out, _ = run(capsys, "diagnose", "--model", workspace / "fit" / "model.json", "--data",
                           workspace / "lots.csv", "--out", tmp_path / "d", "--bins", 0)
        assert code == 1 and out == ""


def compare_spec(path, models, reported=()):
    path.write_text(json.dumps({"format_version": 1, "models": models, "reported_criteria": list(reported)}))
    return path


PARAMETRIC = "STR1 + STR2 + SI + PA + TO + NIO + NIT + YR06 + YR07 + SZ + LAT + LON + log(AR) + UC + ST + log(FRVN)"


class TestCompare:
    def test_three_classes(self, workspace, tmp_path, capsys):
        spec = compare_spec(tmp_path / "c.json", [
            {"name": "ols-log", "class": "CNLRM", "formula": f"log(UP) ~ {PARAMETRIC}"},
            {"name": "glm", "class": "GLM", "formula": f"UP ~ {PARAMETRIC}", "family": "GA"},
            {"name": "gamlss", "class": "GAMLSS", "formula": DEFAULT_FORMULA, "family": "GA"},
        ])
        code, out, _ = run(capsys, "compare", "--data", workspace / "lots.csv", "--spec", spec,
                           "--out", tmp_path / "o")
        assert code == 0
        doc = json.loads((tmp_path / "o" / "comparison.json").read_text())
        assert doc["format_version"] == 1
        names = [m["name"] for m in doc["models"]]
        assert names[0] == "gamlss"
        flags = {m["name"]: m["criteria_comparable"] for m in doc["models"]}
        assert flags == {"gamlss": True, "glm": True, "ols-log": False}
        assert "not comparable" in out
        assert (tmp_path / "o" / "comparison.txt").read_text() == out

    def test_nested_lr_test(self, workspace, tmp_path, capsys):
        spec = compare_spec(tmp_path / "c.json", [
            {"name": "small", "class": "GAMLSS", "formula": "UP ~ cs(log(AR), df=3) + SZ", "family": "GA"},
            {"name": "big", "class": "GAMLSS", "formula": "UP ~ cs(log(AR), df=3) + SZ + TO | sigma: ST",
             "family": "GA"},
        ])
        code, out, _ = run(capsys, "compare", "--data", workspace / "lots.csv", "--spec", spec,
                           "--out", tmp_path / "o")
        assert code == 0 and "likelihood-ratio" in out
        (lr,) = json.loads((tmp_path / "o" / "comparison.json").read_text())["lr_tests"]
        assert (lr["restricted"], lr["full"]) == ("small", "big")
        assert lr["d"] == pytest.approx(2.0)
        assert lr["lambda"] > 0

    def test_flags_reported_inconsistency(self, workspace, tmp_path, capsys):
        spec = compare_spec(tmp_path / "c.json",
                            [{"name": "m", "class": "GAMLSS", "formula": "UP ~ SZ", "family": "GA"}],
                            [{"name": "GA cs3", "gd": 19134, "aic": 19062, "bic": 19337, "n": 2109}])
        code, out, _ = run(capsys, "compare", "--data", workspace / "lots.csv", "--spec", spec)
        assert code == 0
        assert "INCONSISTENT GA cs3" in out and "19337.5" in out

    def test_box_cox_entry(self, workspace, tmp_path, capsys):
        spec = compare_spec(tmp_path / "c.json", [
            {"name": "bc", "class": "CNLRM", "formula": f"UP ~ {PARAMETRIC}", "box_cox": True}])
        code, out, _ = run(capsys, "compare", "--data", workspace / "lots.csv", "--spec", spec)
        assert code == 0 and "boxcox(UP," in out

    @pytest.mark.parametrize("doc", [
        "not json",
        json.dumps({"format_version": 2, "models": []}),
        json.dumps({"format_version": 1, "models": [{"class": "SVM", "formula": "UP ~ SZ"}]}),
        json.dumps({"format_version": 1, "models": [{"class": "GLM", "formula": "UP ~ cs(AR, df=3)"}]}),
        json.dumps({"format_version": 1, "models": [{"class": "GLM", "formula": "UP ~ SZ", "family": "IG"}]}),
    ])
    def test_invalid_spec(self, workspace, tmp_path, capsys, doc):
        (tmp_path / "c.json").write_text(doc)
        code, out, err = run(capsys, "compare", "--data", workspace / "lots.csv", "--spec", tmp_path / "c.json",
                             "--out", tmp_path / "o")
        assert code == 1 and out == "" and err.startswith("error:")
        assert not (tmp_path / "o").exists()


class TestErrors:
    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["fit", "--data", "x.csv"],
                                      ["simulate", "--seed", "1", "--n", "10", "--out", "a.csv"]])
    def test_exit_one_without_stdout(self, argv, capsys, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, out, err = run(capsys, *argv)
        assert code == 1 and out == "" and err
        assert list(tmp_path.iterdir()) == []

    def test_missing_data_file(self, tmp_path, capsys):
        code, out, err = run(capsys, "fit", "--data", tmp_path / "none.csv", "--formula", "UP ~ SZ",
                             "--family", "GA", "--out", tmp_path / "o")
        assert code == 1 and out == "" and "none.csv" in err
        assert not (tmp_path / "o").exists()

    def test_version(self, capsys):
        assert run(capsys, "--version")[0] == 0
