"""設定管理モジュール"""

from .settings import LoggingConfig, RunConfig, parse_config, parse_config_text, parse_yaml_text

__all__ = ["LoggingConfig", "RunConfig", "parse_config", "parse_config_text", "parse_yaml_text"]
