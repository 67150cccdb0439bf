import hashlib
import json

import numpy as np
import pytest

from fsirnn import cli
from fsirnn import io as fio
from fsirnn import pipeline as pl

from conftest import classif_like, tecator_like


def digest(*paths):
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    fio.write_dataset(d / "t.csv", tecator_like()[0])
    fio.write_dataset(d / "c.csv", classif_like()[0])
    return d


def run(*args):
    return cli.main([str(a) for a in args])


def fit_args(files, out, *extra):
    return ("fit", "--data", files / "t.csv", "--method", "sir-nnr", "--alpha", 5, "--q", 3, "--q2", 4,
            "--seed", 1, "--out", out, "--config", files / "fast.cfg", *extra)


@pytest.fixture(scope="module", autouse=True)
def fast_cfg(files):
    (files / "fast.cfg").write_text("# speed up training\nmethod = sir-nnr:max_epochs=100,restarts=2\n")


class TestFit:
    def test_toy_round_trip(self, tmp_path):
        grid = np.linspace(0, 1, 8)
        rng = np.random.default_rng(0)
        data = pl.est.CurveDataset(grid, rng.normal(size=(5, 8)), rng.normal(size=5))
        fio.write_dataset(tmp_path / "toy.csv", data)
        rc = run("fit", "--data", tmp_path / "toy.csv", "--method", "sir-l", "--alpha", 1.0, "--q", 1,
                 "--slices", 2, "--out", tmp_path / "m.json")
        assert rc == 0
        model = pl.load_model(tmp_path / "m.json")
        again = json.loads(json.dumps(model.to_dict()))
        assert pl.PipelineModel.from_dict(again).to_dict() == model.to_dict()

    def test_refit_byte_identical(self, files, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(*fit_args(files, a)) == 0 and run(*fit_args(files, b)) == 0
        assert digest(a) == digest(b)
        assert digest(tmp_path / "a.json.report.txt") == digest(tmp_path / "b.json.report.txt")

    def test_report_contents(self, files, tmp_path):
        run(*fit_args(files, tmp_path / "m.json"))
        text = (tmp_path / "m.json.report.txt").read_text()
        assert "eigenvalues" in text and "test loss per restart" in text

    def test_flags_override_config(self, files, tmp_path):
        (tmp_path / "c.cfg").write_text("method = sir-l\nalpha = 1.0\nq = 1\n")
        run("fit", "--config", tmp_path / "c.cfg", "--data", files / "t.csv", "--q", 2, "--out", tmp_path / "m.json")
        model = pl.load_model(tmp_path / "m.json")
        assert model.edr.q == 2 and model.edr.alpha == 1.0

    def test_malformed_csv(self, tmp_path, capsys):
        (tmp_path / "bad.csv").write_text("0,1,2\n1,2,3,4\n1,2\n")
        rc = run("fit", "--data", tmp_path / "bad.csv", "--method", "sir-l", "--alpha", 1, "--q", 1, "--out", tmp_path / "m")
        assert rc == 2 and "line 3" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path):
        assert run("fit", "--data", tmp_path / "none.csv", "--method", "sir-l", "--alpha", 1, "--q", 1, "--out", tmp_path / "m") == 2

    def test_missing_parameter(self, files, tmp_path, capsys):
        rc = run("fit", "--data", files / "t.csv", "--method", "sir-nnr", "--alpha", 1, "--q", 1, "--out", tmp_path / "m")
        assert rc == 1 and "q2" in capsys.readouterr().err

    def test_unknown_flag(self):
        assert run("fit", "--bogus") == 1

    def test_numerical_failure(self, files, tmp_path, capsys):
        # a huge step size makes every restart diverge
        rc = run("fit", "--data", files / "t.csv", "--method", "sir-nnr:learning_rate=1e6,max_epochs=30,restarts=2",
                 "--alpha", 5, "--q", 2, "--q2", 3, "--out", tmp_path / "m")
        assert rc == 3 and "diverged" in capsys.readouterr().err

    def test_constant_curves_data_error(self, tmp_path, capsys):
        grid = np.linspace(0, 1, 12)
        rng = np.random.default_rng(1)
        fio.write_dataset(tmp_path / "s.csv", pl.est.CurveDataset(grid, np.ones((5, 12)), rng.normal(size=5)))
        rc = run("fit", "--data", tmp_path / "s.csv", "--method", "sir-l", "--alpha", 0, "--q", 1, "--slices", 2,
                 "--out", tmp_path / "m")
        assert rc == 2 and "identical" in capsys.readouterr().err

    def test_input_not_mutated(self, files, tmp_path):
        before = digest(files / "t.csv")
        run(*fit_args(files, tmp_path / "m.json"))
        assert digest(files / "t.csv") == before


@pytest.fixture(scope="module")
def model(files, tmp_path_factory):
    path = tmp_path_factory.mktemp("m") / "m.json"
    assert run(*fit_args(files, path)) == 0
    return path


class TestPredict:
    def test_reproduces_fit_predictions(self, files, model, tmp_path):
        run("predict", "--model", model, "--data", files / "t.csv", "--out", tmp_path / "p.csv")
        got = np.loadtxt(tmp_path / "p.csv", skiprows=1)
        stored = np.array(pl.load_model(model).metadata["train_predictions"])
        assert np.array_equal(got, stored)

    def test_batch_equals_single_rows(self, files, model, tmp_path):
        lines = (files / "t.csv").read_text().splitlines()
        run("predict", "--model", model, "--data", files / "t.csv", "--out", tmp_path / "all.csv")
        batch = (tmp_path / "all.csv").read_text().splitlines()[1:]
        singles = []
        for i in range(1, 6):
            (tmp_path / "one.csv").write_text(lines[0] + "\n" + lines[i] + "\n")
            run("predict", "--model", model, "--data", tmp_path / "one.csv", "--out", tmp_path / "o.csv")
            singles += (tmp_path / "o.csv").read_text().splitlines()[1:]
        np.testing.assert_allclose(np.array(singles, float), np.array(batch[:5], float), rtol=1e-13)

    def test_empty_curve_file(self, model, tmp_path):
        (tmp_path / "e.csv").write_text("")
        assert run("predict", "--model", model, "--data", tmp_path / "e.csv", "--out", tmp_path / "p.csv") == 0
        assert (tmp_path / "p.csv").read_text() == "prediction\n"

    def test_grid_mismatch_echoes_grids(self, model, tmp_path, capsys):
        grid = np.linspace(0.0, 1.0, 100)
        (tmp_path / "g.csv").write_text(",".join(repr(float(t)) for t in grid) + "\n" + ",".join(["0.1"] * 100) + "\n")
        rc = run("predict", "--model", model, "--data", tmp_path / "g.csv", "--out", tmp_path / "p.csv")
        err = capsys.readouterr().err
        assert rc == 2 and "850.0..1050.0" in err and "0.0..1.0" in err

    def test_classification_columns(self, files, tmp_path):
        run("fit", "--data", files / "c.csv", "--task", "classification", "--method", "sir-l", "--alpha", 0.1,
            "--q", 1, "--out", tmp_path / "m.json")
        run("predict", "--model", tmp_path / "m.json", "--data", files / "c.csv", "--out", tmp_path / "p.csv")
        rows = (tmp_path / "p.csv").read_text().splitlines()
        assert rows[0] == "label,score_1,score_2,score_3" and len(rows) == 121

    def test_deterministic(self, files, model, tmp_path):
        for name in ("a.csv", "b.csv"):
            run("predict", "--model", model, "--data", files / "t.csv", "--out", tmp_path / name)
        assert digest(tmp_path / "a.csv") == digest(tmp_path / "b.csv")


class TestBenchmark:
    def args(self, files, out):
        return ("benchmark", "--data", files / "t.csv", "--method", "sir-l", "--method", "sir-k:h=0.5",
                "--alpha", 5, "--q", 2, "--splits", 3, "--learn-size", 172, "--test-size", 43, "--seed", 4, "--out", out)

    def test_row_count(self, files, tmp_path):
        assert run(*self.args(files, tmp_path / "b")) == 0
        assert len((tmp_path / "b.csv").read_text().splitlines()) == 1 + 6

    def test_byte_identical(self, files, tmp_path):
        run(*self.args(files, tmp_path / "a"))
        run(*self.args(files, tmp_path / "b"))
        assert digest(tmp_path / "a.csv", tmp_path / "a.json") == digest(tmp_path / "b.csv", tmp_path / "b.json")

    def test_timing_opt_in(self, files, tmp_path):
        run(*self.args(files, tmp_path / "b"), "--timing")
        row = (tmp_path / "b.csv").read_text().splitlines()[1].split(",")
        assert float(row[3]) >= 0.0

    def test_stratified_classification(self, files, tmp_path):
        rc = run("benchmark", "--data", files / "c.csv", "--task", "classification", "--method", "sir-l",
                 "--alpha", 0.1, "--q", 1, "--splits", 2, "--learn-size", 60, "--test-size", 30, "--out", tmp_path / "b")
        assert rc == 0
        assert json.loads((tmp_path / "b.json").read_text())["0:sir-l"]["metric"] == "error_rate"


class TestSelectAlpha:
    def test_table_and_determinism(self, files, tmp_path):
        for name in ("a.csv", "b.csv"):
            assert run("select-alpha", "--data", files / "t.csv", "--q", 1, "--alphas", "0.1,1,10",
                       "--out", tmp_path / name) == 0
        rows = (tmp_path / "a.csv").read_text().splitlines()
        assert rows[0] == "alpha,error" and len(rows) == 4
        assert digest(tmp_path / "a.csv") == digest(tmp_path / "b.csv")


class TestSynthStudy:
    def test_minimal_study(self, tmp_path):
        (tmp_path / "s.cfg").write_text("n_list = 50,100\nreplicates = 3\nseed = 2\n")
        for out in ("a", "b"):
            assert run("synth-study", "--config", tmp_path / "s.cfg", "--out", tmp_path / out) == 0
        assert digest(tmp_path / "a.csv", tmp_path / "a.json") == digest(tmp_path / "b.csv", tmp_path / "b.json")
        assert len((tmp_path / "a.csv").read_text().splitlines()) == 7

    def test_missing_field_named(self, tmp_path, capsys):
        (tmp_path / "s.cfg").write_text("replicates = 3\n")
        assert run("synth-study", "--config", tmp_path / "s.cfg", "--out", tmp_path / "s") == 1
        assert "n_list" in capsys.readouterr().err

    def test_bad_config_line(self, tmp_path):
        (tmp_path / "s.cfg").write_text("n_list 50\n")
        assert run("synth-study", "--config", tmp_path / "s.cfg", "--out", tmp_path / "s") == 1
