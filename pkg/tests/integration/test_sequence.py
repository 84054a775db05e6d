"""
ε 列に沿ったパイプライン全体と出力物の統合テスト
"""

import csv
import json

import pytest

from pa_homeo.config.settings import RunConfig, parse_config_text
from pa_homeo.core.errors import OutputError, ValidationError
from pa_homeo.mapcat.catalogue import make_catalogue_map
from pa_homeo.pipeline.metrics import RowMetrics
from pa_homeo.pipeline.sequence import COLUMNS, ConvergenceReport, ConvergenceRow, run_sequence
from pa_homeo.report.render import CSV_NAME, MANIFEST_NAME, manifest_data, render_outputs

IDENTITY_RUN = """\
[map]
map = identity

[run]
eps = {eps}
seed = 0
k_min = 2
k_max = 6

[output]
dir = {out}
svg = {svg}

[logging]
file =
"""


def _config(out, eps="[0.2, 0.1, 0.05]", svg="false") -> RunConfig:
    return parse_config_text(IDENTITY_RUN.format(eps=eps, out=out, svg=svg))


@pytest.fixture(scope="module")
def identity_report(tmp_path_factory):
    config = _config(tmp_path_factory.mktemp("identity"))
    return run_sequence(make_catalogue_map("identity"), config.run.eps, config), config


class TestIdentitySequence:
    """恒等写像の収束表"""

    def test_levels_strictly_increase(self, identity_report):
        report, _ = identity_report
        assert report.levels == [2, 3, 4]
        assert all(a < b for a, b in zip(report.levels, report.levels[1:]))

    def test_gaps_are_small(self, identity_report):
        report, _ = identity_report
        for row in report.rows:
            assert row.cert == "pass"
            assert row.metrics.l1 < 1e-3
            assert row.metrics.ac_gap < 1e-3
            assert row.metrics.strict_gap < 1e-3
            assert row.metrics.sing_ratio == 0.0

    def test_rows_have_every_column(self, identity_report):
        report, _ = identity_report
        assert report.kind == "identity"
        assert [len(row.cells()) for row in report.rows] == [len(COLUMNS)] * 3
        assert [row.cells()[0] for row in report.rows] == ["0.2", "0.1", "0.05"]

    def test_manifest_records_each_row(self, identity_report):
        report, config = identity_report
        data = manifest_data(report, config)
        assert data["levels"]["used"] == [2, 3, 4]
        assert data["seed"] == 0
        assert len(data["rows"]) == 3
        assert data["rows"][0]["categories"]["G"] == 4
        assert all(slack >= -1e-12 for slack in data["rows"][0]["slack"].values())


class TestSequenceErrors:
    """入力の検証"""

    @pytest.mark.parametrize("eps", [[], [0.1, 0.2], [0.2, 0.2], [1.5]])
    def test_bad_eps_lists(self, identity_map, eps):
        with pytest.raises(ValidationError):
            run_sequence(identity_map, eps)


class TestOutputs:
    """出力ファイル"""

    def test_files_are_written(self, tmp_path, identity_map):
        config = _config(tmp_path / "out", eps="[0.2]", svg="true")
        report = run_sequence(identity_map, config.run.eps, config)
        written = {p.name for p in render_outputs(report, config)}
        assert {CSV_NAME, MANIFEST_NAME, "mesh_eps0.2.svg", "image_eps0.2.svg"} <= written
        with (tmp_path / "out" / CSV_NAME).open(encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == COLUMNS
        assert len(rows) == 2
        assert len(rows[1]) == 8
        manifest = json.loads((tmp_path / "out" / MANIFEST_NAME).read_text(encoding="utf-8"))
        assert manifest["map"]["kind"] == "identity"

    def test_same_seed_gives_identical_files(self, tmp_path, identity_map):
        blobs = []
        for name in ("first", "second"):
            config = _config(tmp_path / name, eps="[0.2, 0.1]")
            render_outputs(run_sequence(identity_map, config.run.eps, config), config)
            blobs.append(((tmp_path / name / CSV_NAME).read_bytes(), (tmp_path / name / MANIFEST_NAME).read_bytes()))
        assert blobs[0] == blobs[1]

    def test_unwritable_directory(self, tmp_path, identity_map):
        blocker = tmp_path / "blocker"
        blocker.write_text("", encoding="utf-8")
        config = _config(blocker / "out", eps="[0.2]")
        report = run_sequence(identity_map, config.run.eps, config)
        with pytest.raises(OutputError):
            render_outputs(report, config)


@pytest.mark.slow
class TestFractureSequence:
    """割れ目を開く写像"""

    def test_two_rows(self, tmp_path, fracture_map):
        config = parse_config_text(
            f"[map]\nmap = fracture\n[run]\neps = [0.2, 0.1]\nk_min = 4\nk_max = 9\n[output]\ndir = {tmp_path}\n[logging]\nfile =\n"
        )
        report = run_sequence(fracture_map, config.run.eps, config)
        assert report.levels[0] < report.levels[1]
        for row in report.rows:
            assert row.metrics.jump_variation > 0.0
            assert row.metrics.mstrict_consistent
            assert row.cert == "pass"
        assert report.accepted


def _row(eps, l1, ac_gap, sing_ratio=0.5):
    return ConvergenceRow(eps, 4, RowMetrics(l1, ac_gap, sing_ratio, 0.0, 0.0, 1.0, 0.0, True))


class TestAcceptance:
    """面積狭義収束の判定"""

    def test_decreasing_rows_pass(self):
        report = ConvergenceReport("fracture", (_row(0.2, 0.3, 0.5), _row(0.1, 0.2, 0.3)))
        assert report.accepted
        assert all(not bad for bad in report.acceptance().values())

    def test_converged_rows_pass(self):
        report = ConvergenceReport("identity", (_row(0.2, 1e-15, 0.0, 0.0), _row(0.1, 2e-15, 0.0, 0.0)))
        assert report.accepted

    def test_growing_l1_is_caught(self):
        report = ConvergenceReport("fracture", (_row(0.2, 0.2, 0.5), _row(0.1, 0.3, 0.3), _row(0.05, 0.1, 0.2)))
        assert report.acceptance()["l1_decreasing"] == [1]
        assert report.acceptance()["ac_gap_decreasing"] == []
        assert not report.accepted

    def test_equal_ac_gap_is_caught(self):
        report = ConvergenceReport("fracture", (_row(0.2, 0.3, 0.5), _row(0.1, 0.2, 0.5)))
        assert report.acceptance()["ac_gap_decreasing"] == [1]

    def test_final_ac_gap_bound(self):
        report = ConvergenceReport("fracture", (_row(0.2, 0.3, 0.5), _row(0.1, 0.2, 0.3)), C=1.0)
        assert report.acceptance()["ac_gap_bound"] == [1]
        assert ConvergenceReport("fracture", report.rows, C=64.0).accepted

    def test_singular_bound(self):
        report = ConvergenceReport("fracture", (_row(0.2, 0.3, 0.5, 1.5), _row(0.1, 0.2, 0.3)))
        assert report.acceptance()["singular_bound"] == [0]

    def test_failing_rows_are_marked(self, tmp_path, identity_map, mocker):
        mocker.patch(
            "pa_homeo.pipeline.sequence.measure_metrics",
            side_effect=[
                RowMetrics(0.1, 0.1, 0.2, 0.0, 0.0, 4.0, 0.0, True),
                RowMetrics(0.2, 0.05, 0.2, 0.0, 0.0, 4.0, 0.0, True),
            ],
        )
        config = _config(tmp_path, eps="[0.2, 0.1]")
        report = run_sequence(identity_map, config.run.eps, config)
        assert [row.cert for row in report.rows] == ["pass", "fail"]
        assert not report.accepted
        assert manifest_data(report, config)["acceptance"]["l1_decreasing"] == [1]


@pytest.mark.slow
class TestCatalogueSequences:
    """割れ目のない写像の 3 行の収束表"""

    @pytest.mark.parametrize("kind", ["affine", "rank_one", "shear_blend"])
    def test_three_rows(self, tmp_path, kind):
        config = parse_config_text(
            f"[map]\nmap = {kind}\n[run]\neps = [0.2, 0.1, 0.05]\nk_min = 3\nk_max = 8\n"
            f"[output]\ndir = {tmp_path}\n[logging]\nfile =\n"
        )
        report = run_sequence(config.map.build(), config.run.eps, config)
        assert report.levels == sorted(set(report.levels))
        assert all(row.cert == "pass" for row in report.rows)
        assert report.accepted
