"""Experiment runner: flat-text configs, staged pipeline, SVG scatterplots."""

from .config import ConfigError, ExperimentConfig, config_hash, parse_config
from .svgplot import emit_svg_scatter, default_style
from .runner import ArtifactError, RunManifest, run, recipe_table1, recipe_path, list_recipes

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "config_hash",
    "parse_config",
    "emit_svg_scatter",
    "default_style",
    "ArtifactError",
    "RunManifest",
    "run",
    "recipe_table1",
    "recipe_path",
    "list_recipes",
]
