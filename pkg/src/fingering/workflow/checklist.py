"""
MD5 checklists of study outputs

A study bundle ends with ``checklist.chk``, one ``MD5 (<path>) = <digest>``
line per output file in path order. That is the layout ``md5sum --tag``
writes, so a copied bundle can be checked with ``md5sum -c checklist.chk``
from inside the study directory.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path

from doit.dependency import get_file_md5  # type: ignore

logger = logging.getLogger(__name__)

CHECKLIST_FNAME = "checklist.chk"

_LINE = re.compile(r"^MD5 \((?P<path>.+)\) = (?P<digest>[0-9a-f]{32})$")


def checklist_path(output_dir: Path) -> Path:
    """Location of the checklist of a study output directory"""
    return output_dir / CHECKLIST_FNAME


def _output_files(output_dir: Path) -> list[Path]:
    return sorted(
        f for f in output_dir.rglob("*") if f.is_file() and f.name != CHECKLIST_FNAME
    )


def write_checklist(output_dir: Path) -> Path:
    """
    Write the checklist of every file below ``output_dir``

    Checklists of nested studies are left out. Writing twice gives the same
    file, so the checklist can be a doit target.

    Raises
    ------
    NotADirectoryError
        ``output_dir`` does not exist or is not a directory

    Returns
    -------
        Path of the checklist
    """
    if not output_dir.is_dir():
        raise NotADirectoryError(output_dir)

    files = _output_files(output_dir)
    lines = [f"MD5 ({f.relative_to(output_dir).as_posix()}) = {get_file_md5(f)}\n" for f in files]

    path = checklist_path(output_dir)
    path.write_text("".join(lines))
    logger.info("Wrote checksums of %d file(s) to %s", len(files), path)

    return path


def verify_checklist(output_dir: Path) -> list[str]:
    """
    Compare a study output directory with its checklist

    Parameters
    ----------
    output_dir
        Directory holding ``checklist.chk``

    Raises
    ------
    FileNotFoundError
        There is no checklist
    ValueError
        A line of the checklist is malformed

    Returns
    -------
        Relative paths that are missing, changed or not listed, empty if the
        directory matches
    """
    expected: dict[str, str] = {}
    for number, line in enumerate(checklist_path(output_dir).read_text().splitlines(), start=1):
        match = _LINE.match(line)
        if match is None:
            raise ValueError(f"{CHECKLIST_FNAME} line {number} is malformed: {line!r}")  # noqa: TRY003
        expected[match["path"]] = match["digest"]

    actual = {
        f.relative_to(output_dir).as_posix(): f for f in _output_files(output_dir)
    }

    problems = [
        path
        for path, digest in expected.items()
        if path not in actual or get_file_md5(actual[path]) != digest
    ]
    problems.extend(path for path in actual if path not in expected)
    if problems:
        logger.warning("%d file(s) in %s do not match the checklist", len(problems), output_dir)

    return sorted(problems)
