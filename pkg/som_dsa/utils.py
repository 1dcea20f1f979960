# SPDX-FileCopyrightText: Copyright (c) 2024 NVIDIA CORPORATION & AFFILIATES. All rights reserved.
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import copy
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional

import yaml

from .errors import ConfigError

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG_PATH = os.path.join(BASE_DIR, 'configs', 'default.yaml')

LOG_ENV_VAR = 'SOMDSA_LOG'
LOG_FORMAT = '[%(name)s] %(levelname)s: %(message)s'


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


def configure_logging(level: Optional[str] = None):
    """Configure the root handler once. The level defaults to the `SOMDSA_LOG` environment variable."""
    level = (level or os.environ.get(LOG_ENV_VAR, 'WARNING')).upper()
    numeric_level = logging.getLevelName(level)
    if not isinstance(numeric_level, int):
        raise ConfigError(f'Invalid log level in {LOG_ENV_VAR}: {level}')
    logging.basicConfig(level=numeric_level, format=LOG_FORMAT)
    logging.getLogger('som_dsa').setLevel(numeric_level)


def read_jsonl(filename, num_lines=-1):
    lines = []
    with open(filename) as f:
        for i, line in enumerate(f):
            if not line.strip():
                continue
            lines.append(json.loads(line))
            if i == num_lines:
                break
    return lines


def write_jsonl(data, filename):
    with open(filename, 'w') as f:
        for line in data:
            f.write(json.dumps(line) + '\n')


def write_json(data, filename):
    with open(filename, 'w') as f:
        f.write(json.dumps(data, indent=2) + '\n')


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def sha256_fingerprint(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode('utf-8')).hexdigest()


def load_config(path: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """Load the default YAML config and overlay the sections of `path`, if given.

    Args:
        path: optional YAML file with the same sections as `configs/default.yaml`

    Returns:
        mapping of section name to its parameters
    """
    with open(DEFAULT_CONFIG_PATH) as f:
        config = yaml.safe_load(f)

    if path is None:
        return config

    if not os.path.exists(path):
        raise FileNotFoundError(f'Invalid config path: {path}')
    with open(path) as f:
        overrides = yaml.safe_load(f) or {}

    merged = copy.deepcopy(config)
    for section, values in overrides.items():
        if section not in merged:
            raise ConfigError(f'Unknown config section `{section}` in {path}')
        if not isinstance(values, dict):
            raise ConfigError(f'Config section `{section}` must be a mapping')
        merged[section].update(values)
    return merged


def check_keys(values: Dict[str, Any], allowed: List[str], what: str):
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f'Unknown {what} key(s): {", ".join(unknown)}')
