import csv
import io
import json
import re

import numpy as np
import pydot
import pytest

from optsurv.cli import main
from optsurv.tree_model import deserialize

from . import oracles

# the 4-row fixture is too small to calibrate alpha; the fallback warning is expected
pytestmark = pytest.mark.filterwarnings("ignore:too few observations")

FIXTURE = "time,event,x1\n1,1,0.1\n2,0,0.4\n3,1,0.7\n4,1,0.9\n"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def cohort_csv(path, n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, n)
    s = rng.exponential(1.0 / np.where(x == 1, 5.0, 1.0))
    c = rng.exponential(2.0, n)
    rows = ["time,event,x1,x2"]
    rows += [f"{min(a, b):.6f},{int(a <= b)},{g},{u:.4f}" for a, b, g, u in zip(s, c, x, rng.uniform(size=n))]
    path.write_text("\n".join(rows) + "\n")
    return path


def dot_nodes(text):
    graph = pydot.graph_from_dot_data(text)[0]
    return [n for n in graph.get_nodes() if re.fullmatch(r"n\d+", n.get_name())], graph.get_edges()


@pytest.fixture
def fixture_csv(tmp_path):
    p = tmp_path / "four.csv"
    p.write_text(FIXTURE)
    return p


class TestTrain:
    def test_fixture_single_leaf(self, capsys, tmp_path, fixture_csv):
        out = tmp_path / "m.json"
        code, stdout, _ = run(capsys, "train", "--data", fixture_csv, "--out", out, "--seed", 1)
        assert code == 0
        assert deserialize(out.read_text()).n_leaves == 1
        summary = json.loads(stdout)
        assert summary["n_leaves"] == 1 and "objective" in summary and "alpha" in summary

    def test_byte_identical(self, capsys, tmp_path):
        data = cohort_csv(tmp_path / "d.csv")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert run(capsys, "train", "--data", data, "--out", out, "--seed", 3,
                       "--restarts", 2, "--alpha", "0.5")[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_cross_validated_depth(self, capsys, tmp_path):
        data = cohort_csv(tmp_path / "d.csv")
        code, stdout, _ = run(capsys, "train", "--data", data, "--out", tmp_path / "m.json", "--seed", 1,
                              "--restarts", 1, "--max-depth", "1,2", "--trainer", "greedy")
        assert code == 0
        assert json.loads(stdout)["max_depth"] in (1, 2)

    def test_missing_schema(self, capsys, tmp_path, fixture_csv):
        code, _, err = run(capsys, "train", "--data", fixture_csv, "--schema", tmp_path / "nope.json",
                           "--out", tmp_path / "m.json", "--seed", 1)
        assert code == 2
        assert "schema not found" in json.loads(err)["error"]

    def test_missing_seed(self, capsys, tmp_path, fixture_csv):
        code, _, err = run(capsys, "train", "--data", fixture_csv, "--out", tmp_path / "m.json")
        assert code == 2 and "seed" in err

    def test_seed_from_config(self, capsys, tmp_path, fixture_csv):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"seed": 4, "restarts": 1}')
        code, _, _ = run(capsys, "train", "--data", fixture_csv, "--out", tmp_path / "m.json", "--config", cfg)
        assert code == 0

    def test_bad_data(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,event,x1\n1,7,0.2\n")
        code, _, err = run(capsys, "train", "--data", bad, "--out", tmp_path / "m.json", "--seed", 1)
        assert code == 3 and "invalid event flag" in err

    def test_missing_data(self, capsys, tmp_path):
        code, _, _ = run(capsys, "train", "--data", tmp_path / "none.csv", "--out", tmp_path / "m.json", "--seed", 1)
        assert code == 3

    def test_trace(self, capsys, tmp_path):
        data = cohort_csv(tmp_path / "d.csv", n=80)
        trace = tmp_path / "trace.csv"
        code, _, _ = run(capsys, "train", "--data", data, "--out", tmp_path / "m.json", "--seed", 1,
                         "--restarts", 1, "--alpha", "0", "--trace", trace)
        assert code == 0
        assert trace.read_text().splitlines()[0].startswith("restart")


class TestEvaluate:
    def test_null_model(self, capsys, tmp_path):
        data = cohort_csv(tmp_path / "d.csv")
        model = tmp_path / "m.json"
        run(capsys, "train", "--data", data, "--out", model, "--seed", 1, "--max-depth", 1, "--alpha", 0)
        code, stdout, _ = run(capsys, "evaluate", "--data", data, "--model", model)
        rep = json.loads(stdout)
        assert code == 0
        assert (rep["csr"], rep["bpr"], rep["ibr"]) == (0.0, 0.0, 0.0)
        assert rep["harrell_c"] == 0.5

    def test_repeatable_and_csv(self, capsys, tmp_path):
        data = cohort_csv(tmp_path / "d.csv")
        model = tmp_path / "m.json"
        run(capsys, "train", "--data", data, "--out", model, "--seed", 1, "--max-depth", 2, "--alpha", 0,
            "--restarts", 1)
        first = run(capsys, "evaluate", "--data", data, "--model", model, "--out", tmp_path / "r.csv")[1]
        second = run(capsys, "evaluate", "--data", data, "--model", model)[1]
        assert first == second
        row = next(csv.DictReader(io.StringIO((tmp_path / "r.csv").read_text())))
        assert float(row["harrell_c"]) == json.loads(first)["harrell_c"]

    def test_harrell_matches_oracle(self, capsys, tmp_path):
        data = cohort_csv(tmp_path / "d.csv", n=60)
        model = tmp_path / "m.json"
        run(capsys, "train", "--data", data, "--out", model, "--seed", 1, "--max-depth", 2, "--alpha", 0,
            "--restarts", 1)
        rep = json.loads(run(capsys, "evaluate", "--data", data, "--model", model)[1])
        tree = deserialize(model.read_text())
        rows = list(csv.DictReader(open(data)))
        X = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
        time = [float(r["time"]) for r in rows]
        event = [int(r["event"]) for r in rows]
        risk = [tree.nodes[k].theta for k in tree.apply(X)]
        assert rep["harrell_c"] == pytest.approx(oracles.harrell(risk, time, event), abs=1e-12)

    def test_schema_mismatch(self, capsys, tmp_path, fixture_csv):
        model = tmp_path / "m.json"
        run(capsys, "train", "--data", fixture_csv, "--out", model, "--seed", 1)
        other = cohort_csv(tmp_path / "d.csv")
        code, _, _ = run(capsys, "evaluate", "--data", other, "--model", model)
        assert code == 3


class TestPredict:
    def test_rows(self, capsys, tmp_path, fixture_csv):
        model = tmp_path / "m.json"
        run(capsys, "train", "--data", fixture_csv, "--out", model, "--seed", 1)
        code, stdout, _ = run(capsys, "predict", "--data", fixture_csv, "--model", model, "--times", "1,3")
        rows = list(csv.DictReader(io.StringIO(stdout)))
        assert code == 0 and len(rows) == 4
        # single leaf: everyone gets the pooled Kaplan-Meier curve
        assert float(rows[0]["S(1.0)"]) == pytest.approx(0.75)
        assert float(rows[0]["S(3.0)"]) == pytest.approx(0.375)

    def test_missing_model(self, capsys, tmp_path, fixture_csv):
        code, _, _ = run(capsys, "predict", "--data", fixture_csv, "--model", tmp_path / "none.json")
        assert code == 3


class TestExportDot:
    def test_single_leaf(self, capsys, tmp_path, fixture_csv):
        model = tmp_path / "m.json"
        run(capsys, "train", "--data", fixture_csv, "--out", model, "--seed", 1)
        code, stdout, _ = run(capsys, "export-dot", "--model", model)
        nodes, edges = dot_nodes(stdout)
        assert code == 0 and len(nodes) == 1 and not edges

    def test_two_split_levels(self, capsys, tmp_path):
        data = cohort_csv(tmp_path / "d.csv", n=400)
        model = tmp_path / "m.json"
        run(capsys, "train", "--data", data, "--out", model, "--seed", 1, "--max-depth", 3, "--alpha", 0,
            "--trainer", "greedy", "--min-bucket", 2)
        tree = deserialize(model.read_text())
        assert tree.n_leaves == 4
        run(capsys, "export-dot", "--model", model, "--out", tmp_path / "t.dot")
        nodes, edges = dot_nodes((tmp_path / "t.dot").read_text())
        assert len(nodes) == 7 and len(edges) == 6

    def test_malformed(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"nodes": 3}')
        assert run(capsys, "export-dot", "--model", bad)[0] == 3


class TestSimulate:
    CONFIG = {"n_total": 600, "n_test": 200, "n_train": 200, "restarts": 1, "depth_grid": [2, 3],
              "alpha_points": 3, "folds": 3, "censoring": 0.3}

    def test_one_repetition(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(self.CONFIG))
        code, _, _ = run(capsys, "simulate", "--config", cfg, "--seed", 1, "--out", tmp_path / "o")
        assert code == 0
        lines = (tmp_path / "o" / "records.jsonl").read_text().splitlines()
        assert len(lines) == 1
        summary = (tmp_path / "o" / "summary.csv").read_text().splitlines()
        assert summary[0].startswith("n_train,censoring,model,runs,")
        assert sorted(s.split(",")[2] for s in summary[1:]) == ["greedy", "ost"]

    def test_repeatable(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(dict(self.CONFIG, trainers=["greedy"])))
        for d in ("a", "b"):
            assert run(capsys, "simulate", "--config", cfg, "--seed", 3, "--repetitions", 2,
                       "--out", tmp_path / d)[0] == 0
        assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
        assert (tmp_path / "a" / "records.jsonl").read_bytes() == (tmp_path / "b" / "records.jsonl").read_bytes()

    def test_invalid_config(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"n_total": 10, "n_test": 20}')
        assert run(capsys, "simulate", "--config", cfg, "--seed", 1, "--out", tmp_path / "o")[0] == 2

    def test_missing_seed(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(self.CONFIG))
        assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")[0] == 2


class TestBenchmark:
    def test_small(self, capsys):
        code, stdout, _ = run(capsys, "benchmark", "--n", 200, "--repetitions", 1, "--seed", 0)
        assert code == 0
        assert json.loads(stdout)["backends_agree"] is True

    def test_needs_seed(self, capsys):
        assert run(capsys, "benchmark", "--n", 200)[0] == 2
