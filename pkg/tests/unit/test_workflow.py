import pytest

from fingering.config import get_config_bundle, write_config_file_in_output_dir
from fingering.exceptions import ConfigParseError
from fingering.serialization import load_yaml
from fingering.workflow.checklist import checklist_path, verify_checklist, write_checklist
from fingering.workflow.fragments import find_study_files, layer_fragments, read_fragment
from fingering.workflow.tasks import gen_study_tasks, swallow_output

COMMON = """
output_dir: "{output_root_dir}/{run_id}/{stub}"
run:
  name: "{name}"
  grid:
    nx: 8
    ny: 16
  physics:
    alpha: 1.0
    R: 1.0
"""

SWEEP = """
name: contrast
sweep:
  axes:
    alpha: [1, 2]
  report_time: 1.0
run:
  physics:
    R: 0.5
"""

LADDER = """
name: ladder
convergence:
  meshes: [[4, 8], [8, 16]]
  reference: [16, 32]
"""


@pytest.fixture
def study_dir(tmp_path):
    root = tmp_path / "configuration"
    (root / "studies").mkdir(parents=True)
    (root / "common.yaml").write_text(COMMON)
    (root / "studies" / "contrast.yaml").write_text(SWEEP)
    (root / "studies" / "ladder.yaml").write_text(LADDER)

    return root


def test_find_study_files_sorted(study_dir):
    res = list(find_study_files(study_dir / "studies", "*.yaml"))

    assert [p.name for p in res] == ["contrast.yaml", "ladder.yaml"]


def test_empty_fragment(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")

    assert read_fragment(path) == {}


def test_fragment_must_be_a_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")

    with pytest.raises(ValueError, match="mapping"):
        read_fragment(path)


def test_layer_fragments():
    base = {"run": {"physics": {"R": 1.0, "alpha": 1.0}}, "axes": [1, 2]}
    override = {"run": {"physics": {"R": 2.0}}, "axes": [3]}

    res = layer_fragments(base, override, {"name": "x"})

    assert res == {"run": {"physics": {"R": 2.0, "alpha": 1.0}}, "axes": [3], "name": "x"}
    assert base == {"run": {"physics": {"R": 1.0, "alpha": 1.0}}, "axes": [1, 2]}
    assert override == {"run": {"physics": {"R": 2.0}}, "axes": [3]}


def test_checklist(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "a.csv").write_text("1\n")
    (tmp_path / "sub" / "b.txt").write_text("2\n")

    checklist = write_checklist(tmp_path)
    first = checklist.read_text()
    write_checklist(tmp_path)

    assert checklist == checklist_path(tmp_path)
    assert checklist.read_text() == first
    lines = first.splitlines()
    assert [line.split(" ")[1] for line in lines] == ["(a.csv)", "(sub/b.txt)"]
    assert lines[0].startswith("MD5 (a.csv) = ")


def test_checklist_needs_directory(tmp_path):
    with pytest.raises(NotADirectoryError):
        write_checklist(tmp_path / "missing")


def test_config_bundle(study_dir, tmp_path):
    cb = get_config_bundle(
        study_dir / "studies" / "contrast.yaml",
        output_root_dir=tmp_path / "bundles",
        run_id="test-run",
        common_config_file=study_dir / "common.yaml",
    )

    study = cb.config_hydrated
    assert cb.stub == "contrast"
    assert study.output_dir == (tmp_path / "bundles").absolute() / "test-run" / "contrast"
    base = study.base_run()
    assert base.name == "contrast"
    assert base.physics.R == 0.5
    assert base.grid.nx == 8
    assert cb.config_hydrated_path.parent.is_dir()

    write_config_file_in_output_dir(cb)
    assert load_yaml(cb.config_hydrated_path.read_text())["sweep"]["axes"] == {"alpha": [1.0, 2.0]}


def test_config_bundle_unknown_placeholder(study_dir, tmp_path):
    study = study_dir / "studies" / "broken.yaml"
    study.write_text('name: broken\nrun:\n  name: "{nothing}"\n')

    with pytest.raises(ConfigParseError, match="unknown placeholder 'nothing'"):
        get_config_bundle(
            study,
            output_root_dir=tmp_path,
            run_id="test-run",
            common_config_file=study_dir / "common.yaml",
        )


def test_gen_study_tasks(study_dir, tmp_path):
    bundles = [
        get_config_bundle(
            study_dir / "studies" / name,
            output_root_dir=tmp_path,
            run_id="test-run",
            common_config_file=study_dir / "common.yaml",
        )
        for name in ("contrast.yaml", "ladder.yaml")
    ]

    tasks = list(gen_study_tasks(bundles))

    assert [t["basename"] for t in tasks] == [
        "run sweep cell",
        "run sweep cell",
        "collect sweep summary",
        "generate checklist",
        "run convergence study",
        "generate checklist",
    ]
    assert [t["name"] for t in tasks[:2]] == ["contrast/alpha=1", "contrast/alpha=2"]
    assert tasks[2]["file_dep"] == tasks[0]["targets"] + tasks[1]["targets"]
    assert tasks[3]["file_dep"] == [*tasks[0]["targets"], *tasks[1]["targets"], *tasks[2]["targets"]]
    assert tasks[4]["targets"][0].name == "convergence.csv"


def test_swallow_output():
    def returns_path():
        return "something"

    assert swallow_output(returns_path)() is None
    assert swallow_output(returns_path).__name__ == "returns_path"


def test_verify_checklist(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "a.csv").write_text("1\n")
    (tmp_path / "sub" / "b.txt").write_text("2\n")
    write_checklist(tmp_path)

    assert verify_checklist(tmp_path) == []

    (tmp_path / "a.csv").write_text("changed\n")
    (tmp_path / "sub" / "b.txt").unlink()
    (tmp_path / "extra.csv").write_text("3\n")

    assert verify_checklist(tmp_path) == ["a.csv", "extra.csv", "sub/b.txt"]


def test_verify_malformed_checklist(tmp_path):
    checklist_path(tmp_path).write_text("a.csv 1234\n")

    with pytest.raises(ValueError, match="line 1"):
        verify_checklist(tmp_path)
