"""
Study configuration fragments

A study file under ``data/configuration/studies`` only holds what differs
from ``common.yaml``. The two are layered before placeholders are filled.
"""
from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import deepmerge  # type: ignore

from fingering.serialization import load_yaml

ConfigFragment = dict[str, Any]

_merger = deepmerge.Merger(
    [(dict, "merge"), (list, "override"), (set, "override")], ["override"], ["override"]
)


def find_study_files(studies_dir: Path, pattern: str) -> list[Path]:
    """
    Study files in ``studies_dir`` matching ``pattern``, sorted by path
    """
    return sorted(studies_dir.glob(pattern))


def read_fragment(path: Path) -> ConfigFragment:
    """
    Read a YAML configuration fragment

    Raises
    ------
    ConfigParseError
        Invalid YAML or a duplicate key
    ValueError
        The document is not a mapping

    Returns
    -------
        Parsed fragment, empty for an empty file
    """
    fragment = load_yaml(path.read_text())
    if fragment is None:
        return {}
    if not isinstance(fragment, dict):
        raise ValueError(f"{path} must hold a mapping, got {type(fragment).__name__}")  # noqa: TRY003

    return fragment


def layer_fragments(base: ConfigFragment, *overrides: ConfigFragment) -> ConfigFragment:
    """
    Apply fragments on top of ``base``, later ones winning

    Mappings are merged key by key at every depth. Lists, such as sweep axis
    values or mesh ladders, are replaced whole. None of the inputs is
    modified.
    """
    out = copy.deepcopy(base)
    for fragment in overrides:
        out = _merger.merge(out, copy.deepcopy(fragment))

    return out
