"""Unit tests for the command line"""

import json

import numpy as np
import pandas as pd
import pytest
import yaml
from scipy.spatial.distance import cdist

from src.cli import (
    EXIT_INFEASIBLE,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_USAGE,
    main,
    run_command,
)
from src.maximize import cardinality_ratio


@pytest.fixture(scope="module")
def gaussian_points(tmp_path_factory):
    """1000 two-dimensional Gaussian points"""
    points = np.random.default_rng(2024).normal(size=(1000, 2))
    path = tmp_path_factory.mktemp("data") / "pts.csv"
    pd.DataFrame(points, columns=["x", "y"]).to_csv(path, index=False)
    return path, points


@pytest.fixture
def items_csv(tmp_path):
    """Six labeled items in two tight groups with costs and scores"""
    path = tmp_path / "items.csv"
    pd.DataFrame(
        {
            "id": ["a", "b", "c", "d", "e", "f"],
            "x": [0.0, 0.1, 0.2, 5.0, 5.1, 5.2],
            "y": [0.0, 0.1, 0.0, 5.0, 5.0, 5.1],
            "cost": [1.0, 1.0, 1.0, 2.0, 2.0, 2.0],
            "score": [0.1, 0.9, 0.2, 0.3, 0.8, 0.1],
        }
    ).to_csv(path, index=False)
    return path


@pytest.fixture
def two_triangles_csv(tmp_path):
    """Adjacency matrix of two disjoint triangles"""
    w = np.zeros((6, 6))
    for block in ((0, 1, 2), (3, 4, 5)):
        for i in block:
            for j in block:
                if i != j:
                    w[i, j] = 1.0
    path = tmp_path / "matrix.csv"
    pd.DataFrame(w).to_csv(path, index=False, header=False)
    return path


def _summarize(data, k):
    report, code = run_command(
        [
            "summarize",
            "--function",
            "facility-location",
            "--kernel",
            "rbf:1.0",
            "--k",
            str(k),
            "--data",
            str(data),
        ]
    )
    assert code == EXIT_OK
    return report


class TestSummarize:
    """Tests for the summarize command"""

    def test_deterministic_and_certified(self, gaussian_points):
        """Test repeated runs agree and the value recomputes from the picks"""
        path, points = gaussian_points
        first = _summarize(path, 10)
        second = _summarize(path, 10)

        assert first.payload["order"] == second.payload["order"]
        assert first.payload["value"] == second.payload["value"]
        assert len(first.payload["selected"]) == 10

        sim = np.exp(-cdist(points, points, "sqeuclidean") / 2.0)
        recomputed = float(sim[first.payload["order"]].max(axis=0).sum())
        assert first.payload["value"] == pytest.approx(recomputed, rel=1e-12)
        certificate = first.payload["certificate"]
        assert certificate["guarantee_ratio"] == pytest.approx(cardinality_ratio(10))
        assert first.oracle_calls > 0

    def test_prefix_property(self, gaussian_points):
        """Test the k = 5 run is a prefix of the k = 10 run"""
        path, _ = gaussian_points
        assert _summarize(path, 5).payload["order"] == _summarize(path, 10).payload["order"][:5]

    def test_ids_and_given(self, items_csv):
        """Test picks are reported by id and conditioning skips given items"""
        report, code = run_command(
            [
                "summarize",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
                "--cost-column",
                "cost",
                "--k",
                "1",
                "--update-given",
                "b",
            ]
        )
        assert code == EXIT_OK
        assert report.payload["given"] == ["b"]
        assert report.payload["selected"][0] in ("d", "e", "f")

    def test_given_ids_never_selected(self, items_csv):
        """Test given items leave the candidate pool, so k may not exceed what is left"""
        report, code = run_command(
            [
                "summarize",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
                "--cost-column",
                "cost",
                "--k",
                "4",
                "--update-given",
                "b,e",
            ]
        )
        assert code == EXIT_OK
        assert "b" not in report.payload["selected"]
        assert "e" not in report.payload["selected"]
        assert sorted(report.payload["selected"]) == ["a", "c", "d", "f"]

        _, code = run_command(
            [
                "summarize",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
                "--k",
                "5",
                "--update-given",
                "b,e",
            ]
        )
        assert code == EXIT_INPUT

    def test_budget(self, items_csv):
        """Test the knapsack path respects the cost column"""
        report, code = run_command(
            [
                "summarize",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
                "--cost-column",
                "cost",
                "--budget",
                "3",
            ]
        )
        assert code == EXIT_OK
        costs = {"a": 1, "b": 1, "c": 1, "d": 2, "e": 2, "f": 2}
        assert sum(costs[i] for i in report.payload["selected"]) <= 3
        assert report.payload["certificate"]["details"]["budget"] == 3.0

    def test_budget_infeasible(self, items_csv):
        """Test a budget below every cost exits 2"""
        _, code = run_command(
            [
                "summarize",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
                "--cost-column",
                "cost",
                "--budget",
                "0.5",
            ]
        )
        assert code == EXIT_INFEASIBLE

    def test_unknown_given_id(self, items_csv):
        """Test an id missing from the table is an input error"""
        _, code = run_command(
            [
                "summarize",
                "--function",
                "facility-location",
                "--kernel",
                "cosine",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
                "--k",
                "2",
                "--update-given",
                "zz",
            ]
        )
        assert code == EXIT_INPUT


class TestUsage:
    """Tests for exit codes on bad invocations"""

    @pytest.mark.parametrize(
        "argv",
        [
            [],
            ["explode"],
            ["summarize", "--k", "2"],
            ["summarize", "--function", "entropy", "--k", "2"],
            ["summarize", "--function", "facility-location", "--k", "2"],
            ["cluster", "--function", "graph-cut"],
        ],
    )
    def test_usage_errors(self, argv):
        """Test malformed command lines exit 64"""
        report, code = run_command(argv)
        assert report is None
        assert code == EXIT_USAGE

    def test_missing_data_file(self, tmp_path):
        """Test an unreadable dataset exits 1"""
        _, code = run_command(
            [
                "summarize",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--k",
                "2",
                "--data",
                str(tmp_path / "absent.csv"),
            ]
        )
        assert code == EXIT_INPUT

    def test_sampled_check_needs_seed(self, two_triangles_csv):
        """Test sampled checks refuse to run unseeded"""
        _, code = run_command(
            ["check", "--function", f"file:{two_triangles_csv}", "--mode", "sampled"]
        )
        assert code == EXIT_USAGE


class TestMinimizeAndCluster:
    """Tests for minimize and cluster on a two-component graph"""

    def test_symmetric_minimize(self, two_triangles_csv):
        """Test Queyranne returns a component with cut value 0"""
        report, code = run_command(
            ["minimize", "--function", f"file:{two_triangles_csv}", "--symmetric"]
        )
        assert code == EXIT_OK
        assert report.payload["method"] == "queyranne"
        assert report.payload["min_set"] in (["0", "1", "2"], ["3", "4", "5"])
        assert report.payload["certificate"]["min_value"] == pytest.approx(0.0)

    def test_min_norm_point(self, two_triangles_csv):
        """Test the unconstrained minimum of a cut is the empty set"""
        report, code = run_command(["minimize", "--function", f"file:{two_triangles_csv}"])
        assert code == EXIT_OK
        assert report.payload["method"] == "min-norm-point"
        assert report.payload["min_set"] == []

    def test_cluster(self, two_triangles_csv):
        """Test the two triangles come back as clusters"""
        report, code = run_command(
            ["cluster", "--function", f"file:{two_triangles_csv}", "--k", "2"]
        )
        assert code == EXIT_OK
        assert sorted(report.payload["clusters"]) == [["0", "1", "2"], ["3", "4", "5"]]


class TestCheck:
    """Tests for the check command"""

    def test_dsf_config(self, tmp_path):
        """Test a DSF document passes both exhaustive checks"""
        document = {
            "schema_version": "1.0.0",
            "labels": ["p", "q", "r", "s"],
            "function": {
                "kind": "dsf",
                "layers": [
                    {
                        "weights": [[1, 1, 0, 0], [0, 1, 1, 1]],
                        "concave": [{"kind": "sqrt"}],
                    }
                ],
                "output_weights": [1.0, 2.0],
            },
        }
        path = tmp_path / "dsf.yaml"
        path.write_text(yaml.safe_dump(document))
        report, code = run_command(["check", "--config", str(path)])

        assert code == EXIT_OK
        assert report.payload["verdict"] is True
        assert set(report.payload["reports"]) == {"submodular", "monotone"}

    def test_nested_cap_dsf(self, tmp_path):
        """Test the overlapping-caps DSF document is a polymatroid"""
        document = {
            "schema_version": "1.0.0",
            "labels": list("abcdef"),
            "function": {
                "kind": "dsf",
                "layers": [
                    {
                        "weights": [[1, 1, 1, 1, 0, 0], [0, 0, 1, 1, 1, 1]],
                        "concave": [{"kind": "min_cap", "cap": 3}],
                    },
                    {"weights": [[1, 1]], "concave": [{"kind": "min_cap", "cap": 5}]},
                ],
                "output_weights": [1.0],
            },
        }
        path = tmp_path / "nested.yaml"
        path.write_text(yaml.safe_dump(document))
        report, code = run_command(["check", "--config", str(path)])

        assert code == EXIT_OK
        assert report.payload["verdict"] is True
        assert report.payload["reports"]["monotone"]["pairs_checked"] == 6 * 32

    def test_cut_is_not_monotone(self, two_triangles_csv):
        """Test the verdict fails when one property fails"""
        report, code = run_command(
            [
                "check",
                "--function",
                f"file:{two_triangles_csv}",
                "--mode",
                "sampled",
                "--seed",
                "3",
                "--samples",
                "400",
            ]
        )
        assert code == EXIT_OK
        assert report.payload["reports"]["submodular"]["verdict"] is True
        assert report.payload["verdict"] is False
        assert report.seed == 3


class TestOtherCommands:
    """Tests for shapley, norm, active-batch and validate"""

    def test_shapley_by_id(self, items_csv):
        """Test exact Shapley values are keyed by id and sum to f(V)"""
        report, code = run_command(
            [
                "shapley",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
            ]
        )
        assert code == EXIT_OK
        assert set(report.payload["by_id"]) == set("abcdef")
        assert sum(report.payload["values"]) > 0

    def test_norm(self, two_triangles_csv):
        """Test ||x||_f for facility location read from a matrix file"""
        report, code = run_command(
            [
                "norm",
                "--function",
                f"file:{two_triangles_csv}",
                "--matrix-kind",
                "facility-location",
                "--x",
                "1,0,0,0,0,0",
                "--trials",
                "50",
                "--seed",
                "0",
            ]
        )
        assert code == EXIT_OK
        assert report.payload["norm"] == pytest.approx(2.0)
        assert report.payload["axioms"]["verdict"] is True

    def test_active_batch(self, items_csv):
        """Test labeled items are skipped and ids are reported"""
        report, code = run_command(
            [
                "active-batch",
                "--function",
                "facility-location",
                "--kernel",
                "rbf:1.0",
                "--data",
                str(items_csv),
                "--id-column",
                "id",
                "--scores",
                "score",
                "--k",
                "2",
                "--labeled",
                "b",
            ]
        )
        assert code == EXIT_OK
        assert "b" not in report.payload["batch"]
        assert len(report.payload["batch"]) == 2

    def test_validate(self, tmp_path):
        """Test validate reports staged errors and exits 1 on failure"""
        good = tmp_path / "good.json"
        good.write_text(
            json.dumps({"function": {"kind": "modular", "weights": [1.0, 2.0]}})
        )
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schema_version": "1.0.0"}))

        report, code = run_command(["validate", str(good)])
        assert code == EXIT_OK
        assert report.payload["success"] is True

        report, code = run_command(["validate", str(bad)])
        assert code == EXIT_INPUT
        assert report.payload["errors"][0]["code"] == "MISSING_FUNCTION"

    def test_main_prints_json(self, capsys, two_triangles_csv):
        """Test main writes one sorted JSON report"""
        code = main(["minimize", "--function", f"file:{two_triangles_csv}", "--symmetric"])
        report = json.loads(capsys.readouterr().out)

        assert code == EXIT_OK
        assert report["command"] == "minimize"
        assert report["schema_version"] == "1.0.0"
        assert report["oracle_calls"] > 0
        assert set(report) == {
            "command",
            "config",
            "oracle_calls",
            "payload",
            "schema_version",
            "seed",
            "wall_time",
        }

    def test_log_level_configures_stderr(self, mocker, two_triangles_csv):
        """Test --log-level before the subcommand reconfigures logging"""
        configure = mocker.patch("src.cli.configure_logging")
        _, code = run_command(
            ["--log-level", "debug", "minimize", "--function", f"file:{two_triangles_csv}"]
        )
        assert code == EXIT_OK
        configure.assert_called_once_with("debug")
