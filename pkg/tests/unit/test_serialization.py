import pickle
from pathlib import Path

import pytest

from fingering.config import ConvergenceConfig
from fingering.exceptions import ConfigParseError
from fingering.serialization import (
    FrozenDict,
    converter_yaml,
    dump_yaml,
    load_yaml,
    parse_placeholders,
)


def test_frozen_dict_is_read_only():
    fd = FrozenDict(a=1)

    with pytest.raises(NotImplementedError):
        fd["b"] = 2


def test_frozen_dict_hash():
    assert hash(FrozenDict(a=[1, 2], b=3)) == hash(FrozenDict(b=3, a=[1, 2]))
    assert hash(FrozenDict(a=1)) != hash(FrozenDict(a=2))


def test_frozen_dict_pickle():
    fd = FrozenDict(alpha=[1.0, 2.0], R=0.5)

    res = pickle.loads(pickle.dumps(fd))

    assert type(res) is FrozenDict
    assert res == fd


def test_frozen_dict_structure():
    res = converter_yaml.structure({"alpha": [1, 2]}, FrozenDict[str, list[float]])

    assert isinstance(res, FrozenDict)
    assert res == {"alpha": [1.0, 2.0]}


def test_duplicate_key_line():
    with pytest.raises(ConfigParseError) as exc:
        load_yaml("a: 1\nb:\n  c: 2\n  c: 3\n")

    assert exc.value.line == 4


def test_empty_document():
    assert load_yaml("") is None


def test_dump_yaml_tuples_and_paths():
    text = dump_yaml(ConvergenceConfig(meshes=[(8, 16)], reference=(16, 32)))

    assert load_yaml(text) == {"meshes": [[8, 16]], "reference": [16, 32]}
    assert load_yaml(dump_yaml({"out": Path("a/b")})) == {"out": "a/b"}


def test_parse_placeholders():
    assert parse_placeholders("{root}/{stub}", root="out", stub="alpha") == "out/alpha"

    with pytest.raises(KeyError):
        parse_placeholders("{missing}")
