"""
設定の読み込み・検証とエラー階層のテスト
"""

import pytest

from pa_homeo.config.settings import (
    LoggingConfig,
    RunConfig,
    parse_config_text,
    parse_value,
    parse_yaml_text,
)
from pa_homeo.core.errors import (
    EXIT_STAGE,
    EXIT_VALIDATION,
    Certificate,
    GeometryError,
    OutputError,
    SamplingExhausted,
    StageFailure,
    ValidationError,
    exit_code_for,
)
from pa_homeo.utils.logger import setup_logging

TEXT_CONFIG = """\
# fracture run
[map]
map = fracture
d = 0.3

[run]
eps = [0.2, 0.1]   ; two rows
seed = 7
k_min = 3

[output]
snapshot = yes
"""


class TestTextConfig:
    """key = value 形式"""

    def test_empty_text_gives_defaults(self):
        cfg = parse_config_text("")
        assert cfg.map.map == "identity"
        assert cfg.run.eps == [0.2, 0.1, 0.05]
        assert (cfg.run.k_min, cfg.run.k_max) == (4, 12)
        assert cfg.constants.C == 64.0
        assert cfg.budgets.sampling == 64

    def test_sections_and_catalogue_defaults(self):
        cfg = parse_config_text(TEXT_CONFIG)
        assert cfg.map.map == "fracture"
        assert cfg.map.params["d"] == 0.3
        assert cfg.map.params["a"] == 0.5
        assert cfg.map.params["profile"] == "trapezoid"
        assert cfg.run.eps == [0.2, 0.1]
        assert cfg.run.seed == 7
        assert cfg.run.k_min == 3
        assert cfg.output.snapshot is True

    def test_keys_before_any_section(self):
        cfg = parse_config_text("map = rank_one\nd = 0.5\nseed = 3\n")
        assert cfg.map.map == "rank_one"
        assert cfg.map.params["d"] == 0.5
        assert cfg.run.seed == 3

    def test_text_round_trip(self):
        cfg = parse_config_text(TEXT_CONFIG)
        assert parse_config_text(cfg.to_text()) == cfg

    def test_increasing_eps_rejected_with_line(self):
        with pytest.raises(ValidationError) as info:
            parse_config_text("[run]\neps = [0.1, 0.2]\n")
        assert info.value.line == 2
        assert "strictly decreasing" in str(info.value)

    @pytest.mark.parametrize("eps", ["[]", "[0.5, 1.5]", "[0.0]"])
    def test_eps_range(self, eps):
        with pytest.raises(ValidationError):
            parse_config_text(f"[run]\neps = {eps}\n")

    def test_levels_out_of_order(self):
        with pytest.raises(ValidationError) as info:
            parse_config_text("[run]\nk_min = 5\nk_max = 4\n")
        assert info.value.line == 1

    def test_level_cap(self):
        with pytest.raises(ValidationError):
            parse_config_text("[run]\nk_max = 13\n")

    def test_unknown_key_reports_line(self):
        with pytest.raises(ValidationError, match="unknown key") as info:
            parse_config_text("[run]\nseed = 1\nspeed = 3\n")
        assert info.value.line == 3

    def test_unknown_section(self):
        with pytest.raises(ValidationError, match="unknown section") as info:
            parse_config_text("[plot]\n")
        assert info.value.line == 1

    def test_duplicate_key(self):
        with pytest.raises(ValidationError, match="duplicate") as info:
            parse_config_text("[run]\nseed = 1\nseed = 2\n")
        assert info.value.line == 3
        assert info.value.witness["first"] == 2

    def test_missing_equals(self):
        with pytest.raises(ValidationError) as info:
            parse_config_text("[run]\nseed 1\n")
        assert info.value.line == 2

    def test_unterminated_list(self):
        with pytest.raises(ValidationError, match="malformed value"):
            parse_config_text("[run]\neps = [0.2, 0.1\n")

    def test_bad_map_parameter_points_at_the_map_line(self):
        with pytest.raises(ValidationError) as info:
            parse_config_text("[map]\nmap = fracture\nwindow = 0.3\n")
        assert info.value.line == 2
        assert "window" in str(info.value)

    def test_constants_must_be_in_range(self):
        with pytest.raises(ValidationError, match="xi"):
            parse_config_text("[constants]\nxi = 1.5\n")
        with pytest.raises(ValidationError, match="tau_cont"):
            parse_config_text("[constants]\ntau_cont = 0\n")

    def test_environment_substitution(self, monkeypatch):
        monkeypatch.setenv("PA_HOMEO_SEED", "11")
        cfg = parse_config_text("[run]\nseed = ${PA_HOMEO_SEED}\n")
        assert cfg.run.seed == 11


class TestYamlConfig:
    """YAML 形式"""

    def test_nested_sections(self):
        cfg = parse_yaml_text("map:\n  map: rank_one\n  d: 0.5\nrun:\n  eps: [0.3, 0.1]\n  k_min: 2\n")
        assert cfg.map.map == "rank_one"
        assert cfg.map.params["d"] == 0.5
        assert cfg.run.eps == [0.3, 0.1]
        assert cfg.run.k_min == 2

    def test_error_carries_key_path(self):
        with pytest.raises(ValidationError) as info:
            parse_yaml_text("run:\n  eps: [0.1, 0.2]\n")
        assert info.value.witness["key"] == "run.eps"

    def test_unknown_key(self):
        with pytest.raises(ValidationError) as info:
            parse_yaml_text("run:\n  speed: 3\n")
        assert info.value.witness["key"] == "run.speed"

    def test_top_level_must_be_a_mapping(self):
        with pytest.raises(ValidationError):
            parse_yaml_text("- 1\n- 2\n")

    def test_malformed_yaml_reports_line(self):
        with pytest.raises(ValidationError) as info:
            parse_yaml_text("run:\n  eps: [0.2,\n")
        assert info.value.line is not None


class TestLoading:
    """ファイルからの読み込み"""

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            RunConfig.load_from_file(tmp_path / "missing.conf")

    def test_suffix_selects_the_format(self, tmp_path):
        text_path = tmp_path / "run.conf"
        text_path.write_text("[run]\nseed = 5\n", encoding="utf-8")
        yaml_path = tmp_path / "run.yaml"
        yaml_path.write_text("run:\n  seed: 5\n", encoding="utf-8")
        assert RunConfig.load_from_file(text_path) == RunConfig.load_from_file(yaml_path)

    @pytest.mark.parametrize(
        "raw, expected",
        [("3", 3), ("0.25", 0.25), ("off", False), ("'x'", "x"), ("[1, 2.5]", [1, 2.5]), ("[]", [])],
    )
    def test_parse_value(self, raw, expected):
        assert parse_value(raw) == expected

    def test_file_logging_creates_the_directory(self, tmp_path):
        target = tmp_path / "logs" / "run.log"
        setup_logging(LoggingConfig(file=str(target)), "debug")
        assert target.parent.is_dir()


class TestErrors:
    """例外階層と終了コード"""

    @pytest.mark.parametrize(
        "error, code",
        [
            (ValidationError("bad"), EXIT_VALIDATION),
            (GeometryError("degenerate"), EXIT_VALIDATION),
            (StageFailure("budget"), EXIT_STAGE),
            (SamplingExhausted("draws"), EXIT_STAGE),
            (OutputError("disk"), EXIT_STAGE),
            (ValueError("plain"), EXIT_VALIDATION),
            (RuntimeError("other"), EXIT_STAGE),
        ],
    )
    def test_exit_codes(self, error, code):
        assert exit_code_for(error) == code

    def test_message_includes_line_and_witness(self):
        err = ValidationError("unknown key", {"key": "speed"}, line=4)
        assert str(err) == "line 4: unknown key (key=speed)"

    def test_validation_error_is_a_value_error(self):
        assert isinstance(GeometryError("x"), ValueError)

    def test_certificate_truthiness(self):
        assert Certificate.passed()
        failed = Certificate.failed("orientation flip", triangle=3)
        assert not failed
        assert failed.witness == {"triangle": 3}
