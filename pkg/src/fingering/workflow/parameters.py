"""
Options ``dodo.py`` adds to the ``doit`` command line

For example ``doit run --run-id nightly --studies-glob "density*.yaml"``
runs only the density-contrast sweep into ``output-bundles/nightly``.
"""
from __future__ import annotations

import datetime
from pathlib import Path
from typing import Any

CONFIGURATION_DIR = Path("data") / "configuration"


def _timestamp() -> str:
    return datetime.datetime.now().strftime("%Y%m%d%H%M%S")


bundle_task_params: list[dict[str, Any]] = [
    {
        "name": "output_root_dir",
        "default": Path("output-bundles"),
        "type": Path,
        "long": "output-root-dir",
        "help": "Directory holding one bundle per run ID",
    },
    {
        "name": "run_id",
        "default": _timestamp(),
        "type": str,
        "long": "run-id",
        "help": "Name of the bundle, the start time by default",
    },
]
"""Where the study outputs of one invocation go"""

study_task_params: list[dict[str, Any]] = [
    {
        "name": "studies_dir",
        "default": CONFIGURATION_DIR / "studies",
        "type": Path,
        "long": "studies-dir",
        "help": "Directory of study files",
    },
    {
        "name": "studies_glob",
        "default": "*.yaml",
        "type": str,
        "long": "studies-glob",
        "help": "Which study files in the directory to run",
    },
    {
        "name": "common_configuration",
        "default": CONFIGURATION_DIR / "common.yaml",
        "type": Path,
        "long": "common-config",
        "help": "Settings every study starts from",
    },
]
"""Which studies to run"""
