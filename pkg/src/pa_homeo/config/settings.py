"""設定管理クラス

テキスト形式 (`key = value` と `[section]` 見出し) と YAML 形式の両方を読み、
pydantic モデルで検証する。エラーには行番号 (YAML ではキーのパス) が付く。
"""

import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from ..core.errors import ValidationError
from ..mapcat.catalogue import CATALOGUE, TestMap, make_catalogue_map

PathLike = Union[str, Path]

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
_MAP_KEYS = {"map"} | {spec.name for specs in CATALOGUE.values() for spec in specs}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MapConfig(_Section):
    """テスト写像の選択 (引数はカタログの既定値で補完される)"""
    map: str = "identity"
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _fill_catalogue_defaults(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        kind = data.get("map", "identity")
        f = make_catalogue_map(kind, data.get("params") or {})
        return {"map": kind, "params": f.parameters}

    def build(self) -> TestMap:
        return make_catalogue_map(self.map, self.params)


class RunSection(_Section):
    """実行パラメータ"""
    eps: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    seed: int = 0
    k_min: int = 4
    k_max: int = 12
    workers: int = 1

    @field_validator("eps")
    @classmethod
    def _eps_decreasing(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("eps list must not be empty")
        for e in v:
            if not 0.0 < e < 1.0:
                raise ValueError(f"eps value {e} is outside (0, 1)")
        for a, b in zip(v, v[1:]):
            if not b < a:
                raise ValueError("eps list must be strictly decreasing")
        return v

    @field_validator("workers")
    @classmethod
    def _positive_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("workers must be positive")
        return v

    @model_validator(mode="after")
    def _levels(self) -> "RunSection":
        if not 1 <= self.k_min <= self.k_max <= 12:
            raise ValueError("levels must satisfy 1 <= k_min <= k_max <= 12")
        return self


class ConstantsConfig(_Section):
    """受理判定の定数と許容差"""
    C: float = 64.0
    tau_geom: float = 1e-10
    tau_cont: float = 1e-6
    tau_density: float = 1e-3
    xi: float = 0.25
    beta: float = 0.05
    tau_rep: float = 2.0 ** -12
    jump_threshold_factor: float = 40.0
    transfer_factor: float = 4.0

    @model_validator(mode="after")
    def _positive(self) -> "ConstantsConfig":
        for name, value in self.model_dump().items():
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.xi >= 1.0:
            raise ValueError("xi must be smaller than 1")
        if self.beta >= 1.0:
            raise ValueError("beta must be smaller than 1")
        return self


class BudgetsConfig(_Section):
    """試行・細分の上限"""
    sampling: int = 64
    refinement: int = 12
    perturbation: int = 64

    @model_validator(mode="after")
    def _positive(self) -> "BudgetsConfig":
        for name, value in self.model_dump().items():
            if value < 1:
                raise ValueError(f"budget {name} must be positive")
        return self


class OutputConfig(_Section):
    """出力先と出力物の選択"""
    dir: str = "./out"
    csv: bool = True
    svg: bool = True
    manifest: bool = True
    snapshot: bool = False


class LoggingConfig(_Section):
    """ログ設定"""
    level: str = "INFO"
    file: str = "./logs/pa_homeo.log"
    max_size: str = "10 MB"
    rotation: int = 7


SECTIONS = ("map", "run", "constants", "budgets", "output", "logging")


class RunConfig(_Section):
    """メイン設定クラス"""
    map: MapConfig = Field(default_factory=MapConfig)
    run: RunSection = Field(default_factory=RunSection)
    constants: ConstantsConfig = Field(default_factory=ConstantsConfig)
    budgets: BudgetsConfig = Field(default_factory=BudgetsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @classmethod
    def load_from_file(cls, config_path: PathLike) -> "RunConfig":
        """設定ファイルから読み込み (拡張子で形式を選ぶ)"""
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"設定ファイルが見つかりません: {config_path}")
        load_dotenv()
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() in (".yaml", ".yml"):
            return parse_yaml_text(text)
        return parse_config_text(text)

    def to_text(self) -> str:
        """テキスト形式へ書き出す (parse_config_text で同じ設定に戻る)"""
        lines: List[str] = ["[map]", f"map = {self.map.map}"]
        lines += [f"{k} = {_format_value(v)}" for k, v in sorted(self.map.params.items())]
        for section in SECTIONS[1:]:
            lines.append("")
            lines.append(f"[{section}]")
            model = getattr(self, section)
            for key, value in model.model_dump().items():
                lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


def _substitute_env(raw: str) -> str:
    """${NAME} を環境変数で置換 (未定義ならそのまま)"""
    return _ENV_PATTERN.sub(lambda m: os.getenv(m.group(1), m.group(0)), raw)


def _parse_scalar(raw: str) -> Any:
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_value(raw: str) -> Any:
    """値文字列を数値・真偽値・文字列・角括弧リストに変換"""
    text = _substitute_env(raw.strip())
    if text.startswith("["):
        if not text.endswith("]"):
            raise ValueError("unterminated list")
        body = text[1:-1].strip()
        return [_parse_scalar(item) for item in body.split(",")] if body else []
    return _parse_scalar(text)


def _strip_comment(line: str) -> str:
    for marker in ("#", ";"):
        pos = line.find(marker)
        if pos >= 0:
            line = line[:pos]
    return line.strip()


def _section_fields() -> Dict[str, set]:
    fields = {name: set(getattr(RunConfig.model_fields[name].annotation, "model_fields")) for name in SECTIONS}
    fields["map"] = set(_MAP_KEYS)
    return fields


def _build(data: Dict[str, Dict[str, Any]], where: Dict[Tuple[str, str], Any]) -> RunConfig:
    """辞書から RunConfig を作る。where は (section, key) → 行番号またはキーパス"""
    sections: Dict[str, Any] = {}
    for name in SECTIONS:
        body = dict(data.get(name, {}))
        if name == "map":
            kind = body.pop("map", "identity")
            sections[name] = {"map": kind, "params": body}
        else:
            sections[name] = body
    try:
        return RunConfig(**sections)
    except PydanticValidationError as e:
        first = e.errors()[0]
        path = [str(p) for p in first["loc"]]
        section = path[0] if path else ""
        key = path[1] if len(path) > 1 else ""
        if section == "map" and key in ("", "params"):
            key = path[2] if len(path) > 2 else "map"
        loc = where.get((section, key)) or where.get((section, "map" if section == "map" else "")) or where.get((section, ""))
        message = first["msg"]
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
        cause = first.get("ctx", {}).get("error")
        if isinstance(cause, ValidationError):
            message = cause.message
        raise _located(f"{'.'.join(path)}: {message}", loc) from e


def _located(message: str, loc: Any, witness: Optional[Dict[str, Any]] = None) -> ValidationError:
    if isinstance(loc, int):
        return ValidationError(message, witness, line=loc)
    extra = dict(witness or {})
    if loc:
        extra["key"] = loc
    return ValidationError(message, extra)


def parse_config_text(text: str) -> RunConfig:
    """テキスト形式の設定を読む"""
    known = _section_fields()
    data: Dict[str, Dict[str, Any]] = {}
    where: Dict[Tuple[str, str], Any] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ValidationError(f"malformed section header: {line}", line=lineno)
            name = line[1:-1].strip()
            if name not in known:
                raise ValidationError(f"unknown section [{name}]", line=lineno)
            section = name
            where.setdefault((name, ""), lineno)
            continue
        if "=" not in line:
            raise ValidationError(f"expected 'key = value', got: {line}", line=lineno)
        key, _, raw_value = line.partition("=")
        key = key.strip()
        if not key:
            raise ValidationError("empty key", line=lineno)
        target = section
        if target is None:
            target = "map" if key in _MAP_KEYS else "run"
        if key not in known[target]:
            raise ValidationError(f"unknown key '{key}' in [{target}]", line=lineno)
        if key in data.get(target, {}):
            raise ValidationError(f"duplicate key '{key}' in [{target}]", {"first": where[(target, key)]}, line=lineno)
        try:
            value = parse_value(raw_value)
        except ValueError as e:
            raise ValidationError(f"malformed value for '{key}': {e}", line=lineno) from e
        data.setdefault(target, {})[key] = value
        where[(target, key)] = lineno
    return _build(data, where)


def parse_yaml_text(text: str) -> RunConfig:
    """YAML 形式の設定を読む (同じセクションを入れ子の辞書で書く)"""
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ValidationError(f"malformed YAML: {e}", line=mark.line + 1 if mark else None) from e
    if not isinstance(raw, dict):
        raise ValidationError("YAML configuration must be a mapping")
    known = _section_fields()
    data: Dict[str, Dict[str, Any]] = {}
    where: Dict[Tuple[str, str], Any] = {}
    for name, body in raw.items():
        if name not in known:
            raise ValidationError(f"unknown section '{name}'", {"key": str(name)})
        if not isinstance(body, dict):
            raise ValidationError(f"section '{name}' must be a mapping", {"key": str(name)})
        for key, value in body.items():
            if key not in known[name]:
                raise ValidationError(f"unknown key '{key}' in '{name}'", {"key": f"{name}.{key}"})
            if isinstance(value, str):
                value = parse_value(value) if "${" in value else value
            data.setdefault(name, {})[key] = value
            where[(name, key)] = f"{name}.{key}"
        where[(name, "")] = name
    return _build(data, where)


def parse_config(path: PathLike) -> RunConfig:
    """設定ファイルを読み込んで検証済みの RunConfig を返す"""
    return RunConfig.load_from_file(path)
