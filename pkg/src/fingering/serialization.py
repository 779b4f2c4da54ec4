"""
Serialisation

YAML is used for all configuration. Documents are read with a loader that
rejects duplicate keys and structured with a cattrs converter that rejects
unknown keys.
"""
from __future__ import annotations

import copyreg
from pathlib import Path
from typing import Any, TypeVar, get_args, get_origin

import cattrs.preconf.pyyaml
import yaml

from fingering.exceptions import ConfigParseError

converter_yaml = cattrs.preconf.pyyaml.make_converter(
    forbid_extra_keys=True, unstruct_collection_overrides={tuple: list}
)
"""Yaml serializer"""

converter_yaml.register_unstructure_hook(Path, lambda p: str(p))
converter_yaml.register_structure_hook(Path, lambda p, _: Path(p))


def _structure_int(value: Any, _: type) -> int:
    # cattrs would call int() and silently truncate 2.5 to 2
    if isinstance(value, bool):
        raise TypeError(f"expected an integer, got {value!r}")  # noqa: TRY003
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)

    raise ValueError(f"expected an integer, got {value!r}")  # noqa: TRY003


converter_yaml.register_structure_hook(int, _structure_int)

KeyT = TypeVar("KeyT")
ValueT = TypeVar("ValueT")


class FrozenDict(dict[KeyT, ValueT]):
    """
    A frozen version of a dict

    Values cannot be modified after creation
    """

    def __setitem__(self, key: KeyT, value: ValueT) -> None:
        """
        Raise an exception when attempting to set values
        """
        raise NotImplementedError

    def __reduce__(self):  # type: ignore[no-untyped-def]
        """
        Reconstruct as a plain mapping when pickled

        Needed so that configuration can be sent to worker processes
        """
        return (
            copyreg._reconstructor,  # type: ignore[attr-defined]
            (
                self.__class__,
                dict,
                dict(**self),
            ),
        )

    def __hash__(self) -> int:  # type: ignore[override]
        """
        Calculate the hash of the contents
        """
        return hash(tuple(sorted((k, _hashable(v)) for k, v in self.items())))


def _hashable(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(value)
    return value


converter_yaml.register_unstructure_hook_func(
    lambda cls: get_origin(cls) == FrozenDict, lambda p: dict(**p)
)


def _structure_frozen_dict(value: Any, cls: Any) -> FrozenDict[Any, Any]:
    key_type, value_type = get_args(cls)
    structured = converter_yaml.structure(value, dict[key_type, value_type])  # type: ignore[valid-type]
    return FrozenDict(**structured)


converter_yaml.register_structure_hook_func(
    lambda cls: get_origin(cls) == FrozenDict, _structure_frozen_dict
)


class _Dumper(yaml.SafeDumper):
    """
    Safe YAML dumper that writes tuples as plain lists
    """


_Dumper.add_representer(tuple, yaml.SafeDumper.represent_list)
_Dumper.add_representer(FrozenDict, yaml.SafeDumper.represent_dict)


class UniqueKeyLoader(yaml.SafeLoader):
    """
    Safe YAML loader that refuses mappings with repeated keys
    """

    def construct_mapping(self, node, deep=False):  # type: ignore[no-untyped-def]
        """
        Construct a mapping, checking for duplicate keys first
        """
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in seen:
                raise ConfigParseError(
                    f"duplicate key {key!r}", line=key_node.start_mark.line + 1
                )
            seen.add(key)

        return super().construct_mapping(node, deep=deep)


def load_yaml(text: str) -> Any:
    """
    Parse a YAML document

    Parameters
    ----------
    text
        YAML document

    Raises
    ------
    ConfigParseError
        The document is not valid YAML or contains a duplicate key

    Returns
    -------
        Parsed document, ``None`` for an empty document
    """
    try:
        return yaml.load(text, Loader=UniqueKeyLoader)  # noqa: S506
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else None
        raise ConfigParseError(str(exc.problem), line=line) from exc


def dump_yaml(obj: Any) -> str:
    """
    Serialise an attrs object (or plain data) to YAML
    """
    return yaml.dump(converter_yaml.unstructure(obj), Dumper=_Dumper, sort_keys=False)


def parse_placeholders(in_str: str, **kwargs: Any) -> str:
    """
    Parse placeholders in a raw string

    Parameters
    ----------
    in_str
        Raw string

    **kwargs
        Replacements to be made

    Returns
    -------
        String, with all appearances of ``{kwarg}`` replaced by their value

    Examples
    --------
    >>> parse_placeholders("{output_root_dir}/{stub}", output_root_dir="out", stub="alpha")
    'out/alpha'
    """
    return in_str.format(**kwargs)
