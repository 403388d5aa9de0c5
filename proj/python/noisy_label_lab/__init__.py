# Copyright 2026 The Noisy Label Lab Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the noisy-label-lab C++ core."""

import json as _json

from ._core import (
    ConfigError,
    Dataset,
    Error,
    Model,
    ParseError,
    RuntimeFailure,
    UsageError,
    average_precision,
    evaluate,
    load_checkpoint,
    load_dataset,
    mean_average_precision,
)
from . import _core

VARIANTS = ("baseline", "ft_clean", "ft_mixed", "ours_pretrained", "ours_joint")


def _dump(config):
    if config is None:
        return ""
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def load_config(path="", overrides=()):
    """Resolved experiment config as a dict (defaults, file, then overrides)."""
    return _json.loads(_core._load_config(path, list(overrides)))


def generate(config=None, seed=1):
    """Generates a dataset from the "dataset" section of `config`."""
    return _core._generate(_dump(config), seed)


def train(dataset, variant, config=None, baseline=None):
    """Trains one variant. Returns (model, log rows)."""
    return _core._train(dataset, variant, _dump(config), baseline)


def reproduce(config=None):
    """Runs the full pipeline. Returns (manifest dict, progress text)."""
    manifest, log = _core._reproduce(_dump(config))
    return _json.loads(manifest), log


__all__ = [
    "ConfigError", "Dataset", "Error", "Model", "ParseError", "RuntimeFailure",
    "UsageError", "VARIANTS", "average_precision", "evaluate", "generate",
    "load_checkpoint", "load_config", "load_dataset", "mean_average_precision",
    "reproduce", "train",
]
