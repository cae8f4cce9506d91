import logging
import os
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

PathLike = Union[str, Path]

LOG_FORMAT: str = "%(levelname)s %(name)s: %(message)s"


def configureLogging(verbosity: int = 0) -> None:
    """
    Configure the root logger once for command-line use.

    Library modules only ever call ``logging.getLogger(__name__)``; handlers
    are installed here and nowhere else.

    :param verbosity: 0 for WARNING, 1 for INFO, 2 or more for DEBUG.
    :type verbosity: int
    :return: None
    :rtype: None
    """
    level: int = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG

    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def atomicWriteBytes(path: PathLike, data: bytes) -> None:
    """
    Write ``data`` to ``path`` through a temporary file in the same
    directory followed by a rename, so readers never observe a partial file.

    :param path: Destination file.
    :type path: PathLike
    :param data: Payload.
    :type data: bytes
    :return: None
    :rtype: None
    """
    target: Path = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    fd: int
    tmpName: str
    fd, tmpName = tempfile.mkstemp(
        prefix=f".{target.name}.", suffix=".tmp", dir=target.parent
    )
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmpName, target)
    except BaseException:
        if os.path.exists(tmpName):
            os.unlink(tmpName)
        raise


def atomicWriteText(path: PathLike, text: str) -> None:
    atomicWriteBytes(path=path, data=text.encode("utf-8"))


@contextmanager
def atomicDirectory(path: PathLike) -> Iterator[Path]:
    """
    Stage a directory of artifacts and publish it only on success.

    The body writes into a temporary sibling directory. When it returns, the
    staged files are moved into ``path`` (created if needed) one rename at a
    time; when it raises, the staging directory is deleted and ``path`` is
    left untouched.

    :param path: Final artifact directory.
    :type path: PathLike
    :return: The staging directory to write into.
    :rtype: Iterator[Path]
    """
    target: Path = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    staging: Path = Path(
        tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent)
    )
    try:
        yield staging

        target.mkdir(parents=True, exist_ok=True)

        item: Path
        for item in sorted(staging.rglob("*")):
            if item.is_dir():
                continue
            destination: Path = target / item.relative_to(staging)
            destination.parent.mkdir(parents=True, exist_ok=True)
            os.replace(item, destination)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
