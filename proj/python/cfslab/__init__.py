"""Python access to the cfslab presets and the lattice Dirac Hamiltonian."""

import json
from pathlib import Path

from ._core import CfsError, dirac_h0, format_double, presets
from . import _core

__all__ = ["CfsError", "dirac_h0", "format_double", "presets", "run", "validate"]


def _config_text(config):
    if isinstance(config, (str, Path)) and Path(config).is_file():
        return Path(config).read_text()
    if isinstance(config, dict):
        return json.dumps(config)
    return str(config)


def validate(config):
    """Raise CfsError if the config (path, JSON text or dict) is invalid."""
    _core.validate(_config_text(config))


def run(preset, config, seed=None, realizations=None):
    """Run a preset; returns (summary dict, {csv file name: csv text})."""
    summary, tables = _core.run(preset, _config_text(config), seed, realizations)
    return json.loads(summary), tables
