"""
コマンドラインドライバの統合テスト
"""

import csv

import pytest

from pa_homeo.core.errors import EXIT_STAGE, EXIT_VALIDATION, StageFailure
from pa_homeo.extend.report import ExtensionReport
from pa_homeo.main import build_parser, main
from pa_homeo.pipeline.metrics import RowMetrics
from pa_homeo.rep.arrival import CrowdedArrivalCell


@pytest.fixture
def run_config(tmp_path):
    out = tmp_path / "out"
    path = tmp_path / "run.conf"
    path.write_text(
        f"map = identity\neps = [0.2]\nk_min = 2\n\n[output]\ndir = {out}\nsvg = false\n\n[logging]\nfile =\nlevel = WARNING\n",
        encoding="utf-8",
    )
    return path, out


class TestCommands:
    """サブコマンド"""

    def test_catalogue_list(self, capsys):
        assert main(["catalogue", "list"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "identity: (no parameters)"
        assert any(line.startswith("fracture: d=0.2") for line in lines)

    def test_run(self, run_config, capsys):
        path, out = run_config
        assert main(["run", str(path)]) == 0
        assert (out / "convergence.csv").exists()
        assert (out / "manifest.json").exists()
        printed = [line for line in capsys.readouterr().out.splitlines() if line.startswith("0.2,")]
        assert len(printed) == 1
        assert printed[0].split(",")[1] == "2"

    def test_extend_bench(self, tmp_path, capsys):
        target = tmp_path / "bench.csv"
        assert main(["extend-bench", "3", "7", "--out", str(target)]) == 0
        assert "certified 3/3" in capsys.readouterr().out
        with target.open(encoding="utf-8") as fh:
            assert len(list(csv.reader(fh))) == 4

    def test_check_straight_grid(self, tmp_path, capsys):
        grid = tmp_path / "cross.grid"
        grid.write_text("X 0.3\nY -0.2\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "identity"]) == 0
        out = capsys.readouterr().out
        assert "admissible: True" in out
        assert "injective approximation" in out

    def test_check_grid_reads_constants(self, tmp_path, capsys):
        grid = tmp_path / "cross.grid"
        grid.write_text("X 0.3\nY -0.2\n", encoding="utf-8")
        conf = tmp_path / "constants.conf"
        conf.write_text("[constants]\nxi = 0.5\ntau_density = 0.01\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "identity", "--config", str(conf)]) == 0
        assert "admissible: True" in capsys.readouterr().out

    def test_check_grid_bad_constants(self, tmp_path):
        grid = tmp_path / "cross.grid"
        grid.write_text("X 0.3\n", encoding="utf-8")
        conf = tmp_path / "constants.conf"
        conf.write_text("[constants]\nxi = 2.0\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "identity", "--config", str(conf)]) == EXIT_VALIDATION

    def test_inadmissible_grid(self, tmp_path):
        grid = tmp_path / "crack.grid"
        grid.write_text("X 0.0\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "fracture"]) == EXIT_VALIDATION

    @pytest.mark.slow
    def test_check_tilted_grid(self, tmp_path, capsys):
        grid = tmp_path / "tilted.grid"
        grid.write_text("CURVE 2\n-1 -0.6\n1 0.4\nCURVE 2\n0.3 -1\n-0.2 1\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "identity", "--sigma", "0.5"]) == 0
        assert "transfer: " in capsys.readouterr().out

    def test_crowded_grid_refines_kappa(self, tmp_path, capsys):
        grid = tmp_path / "close.grid"
        grid.write_text("X 0.1\nX 0.12\nY 0.05\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "identity", "--kappa", "1.0"]) == 0
        out = capsys.readouterr().out
        assert "injective approximation" in out

    def test_crowded_grid_below_the_floor(self, tmp_path, mocker):
        grid = tmp_path / "close.grid"
        grid.write_text("X 0.1\nX 0.12\nY 0.05\n", encoding="utf-8")
        mocker.patch(
            "pa_homeo.rep.arrival.build_injective_pl_approx",
            side_effect=CrowdedArrivalCell("two grid crossings between consecutive arrival lines", {"pairs": []}),
        )
        assert main(["check-grid", str(grid), "identity", "--kappa", "1.0", "--min-kappa", "0.5"]) == EXIT_STAGE


class TestExitCodes:
    """終了コード"""

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "none.conf")]) == EXIT_VALIDATION

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("[run]\neps = [0.1, 0.2]\n", encoding="utf-8")
        assert main(["run", str(path)]) == EXIT_VALIDATION

    def test_unknown_map(self, tmp_path):
        grid = tmp_path / "g.grid"
        grid.write_text("X 0.1\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "nope"]) == EXIT_VALIDATION

    def test_malformed_map_argument(self, tmp_path):
        grid = tmp_path / "g.grid"
        grid.write_text("X 0.1\n", encoding="utf-8")
        assert main(["check-grid", str(grid), "fracture", "d"]) == EXIT_VALIDATION

    def test_bench_size_must_be_positive(self):
        assert main(["extend-bench", "0", "1"]) == EXIT_VALIDATION

    def test_parser_requires_a_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_failed_bench_case(self, mocker):
        failed = ExtensionReport("hp", float("nan"), float("nan"), 0, -1, {"error": "no embedding"})
        mocker.patch("pa_homeo.main.run_bench", return_value=[failed])
        assert main(["extend-bench", "1", "0"]) == EXIT_STAGE

    def test_stage_failure_during_run(self, run_config, mocker):
        path, _ = run_config
        mocker.patch("pa_homeo.main.run_sequence", side_effect=StageFailure("budget exhausted", {"vertex": (1, 1)}))
        assert main(["run", str(path)]) == EXIT_STAGE

    def test_failed_convergence_check(self, run_config, mocker):
        path, out = run_config
        mocker.patch(
            "pa_homeo.pipeline.sequence.measure_metrics",
            return_value=RowMetrics(0.1, 0.1, 2.0, 0.0, 0.0, 4.0, 0.0, True),
        )
        assert main(["run", str(path)]) == EXIT_STAGE
        assert (out / "manifest.json").exists()
