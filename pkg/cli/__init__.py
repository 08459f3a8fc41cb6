"""Command-line surface: make-data, train, reconstruct, animate, gradcheck, eval."""

from cli.app import build_parser, main
from cli.config_file import RunConfig, build_config, load_config, parse_config_text

__all__ = ["RunConfig", "build_config", "build_parser", "load_config", "main", "parse_config_text"]
