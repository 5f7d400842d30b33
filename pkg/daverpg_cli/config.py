"""
Experiment configuration files for the daverpg client.

A config file is flat `key = value` text; `#` starts a comment and blank
lines are ignored. Run manifests use the same format, so a manifest can be
passed back as a config: its `run.` keys are results and are skipped.
"""

import os
from typing import Dict, Optional

from daverpg.data.export import RUN_PREFIX
from daverpg.errors import InvalidParameterError
from daverpg.schemas import ExperimentConfig

# flag dest -> config key, for flags whose names differ from the key
FLAG_KEYS = {
    'algo': 'algorithms',
    'delay_model': 'delay_model',
}


def load_config_file(path: str) -> Dict[str, str]:
    """
    Read a key-value config file

    Args:
        path: Path to the file

    Returns:
        Mapping of key to raw string value, `run.` keys excluded

    Raises:
        InvalidParameterError: on a line that is not `key = value` or a repeated key
    """
    if not os.path.isfile(path):
        raise InvalidParameterError(f"config file not found: {path}")

    values: Dict[str, str] = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise InvalidParameterError(f"{path}:{line_number}: expected 'key = value'")
            key, value = line.split('=', 1)
            key = key.strip().replace('-', '_')
            if not key:
                raise InvalidParameterError(f"{path}:{line_number}: empty key")
            if key.startswith(RUN_PREFIX):
                continue
            if key in values:
                raise InvalidParameterError(f"{path}:{line_number}: duplicate key {key!r}")
            values[key] = value.strip()
    return values


def merge_settings(file_values: Optional[Dict[str, str]], flags: Dict[str, object]) -> Dict[str, object]:
    """Priority: command-line flag > config file > built-in default (left to the model)"""
    merged: Dict[str, object] = dict(file_values or {})
    for dest, value in flags.items():
        if value is None:
            continue
        merged[FLAG_KEYS.get(dest, dest)] = value
    return merged


def resolve_config(config_path: Optional[str], flags: Dict[str, object]) -> ExperimentConfig:
    """
    Build the validated experiment config

    Raises:
        InvalidParameterError: unreadable or malformed config file
        pydantic.ValidationError: a value fails validation (the error names the key)
    """
    file_values = load_config_file(config_path) if config_path else {}
    return ExperimentConfig(**merge_settings(file_values, flags))
