"""Corpus model and the depth-first, ascending-name traversal."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

log = logging.getLogger(__name__)

ENCRYPTED_SUFFIX = ".rhysida"
LAB_DIR = ".rhysida-lab"
MARKER_FILE = ".rhysida-lab-ok"
RESERVED_NAMES = frozenset({LAB_DIR, MARKER_FILE})

US_PER_SECOND = 1_000_000


@dataclass(frozen=True)
class FileMeta:
    """Forensic view of one file. ``mtime`` is in microseconds since the epoch."""

    path: str
    size: int
    mtime: int = 0

    @property
    def original_path(self) -> str:
        return strip_suffix(self.path)


@dataclass
class Traversal:
    files: list[FileMeta] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.files)

    def __len__(self):
        return len(self.files)


def strip_suffix(name: str) -> str:
    return name[: -len(ENCRYPTED_SUFFIX)] if name.endswith(ENCRYPTED_SUFFIX) else name


def _sort_key(entry: os.DirEntry) -> str:
    # the encryptor walked plaintext names; sorting on them keeps the order stable after renaming
    return strip_suffix(entry.name)


def traverse(
    root: str | os.PathLike,
    exclude: Callable[[str], bool] | None = None,
) -> Traversal:
    """Depth-first walk visiting each directory's entries in ascending name order.

    A subdirectory is entered as soon as it is reached, before its later
    siblings. Symlinks are never followed. Unreadable entries land in
    ``Traversal.skipped`` with the reason.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotADirectoryError(f"corpus root {root} is not a directory")
    result = Traversal()

    def excluded(rel: str, name: str) -> bool:
        if name in RESERVED_NAMES and "/" not in rel:
            return True
        return exclude is not None and exclude(rel)

    def walk(directory: Path, prefix: str) -> None:
        try:
            with os.scandir(directory) as it:
                entries = sorted(it, key=_sort_key)
        except OSError as exc:
            result.skipped.append((prefix or ".", str(exc)))
            log.warning("skipping unreadable directory %s: %s", prefix or ".", exc)
            return
        for entry in entries:
            rel = f"{prefix}{entry.name}"
            if excluded(rel, entry.name):
                continue
            try:
                if entry.is_symlink():
                    result.skipped.append((rel, "symlink not followed"))
                    continue
                if entry.is_dir(follow_symlinks=False):
                    walk(Path(entry.path), rel + "/")
                elif entry.is_file(follow_symlinks=False):
                    st = entry.stat(follow_symlinks=False)
                    result.files.append(FileMeta(rel, st.st_size, st.st_mtime_ns // 1000))
                else:
                    result.skipped.append((rel, "not a regular file"))
            except OSError as exc:
                result.skipped.append((rel, str(exc)))
                log.warning("skipping unreadable entry %s: %s", rel, exc)

    walk(root, "")
    return result


def encrypted_files(metas: Iterable[FileMeta]) -> list[FileMeta]:
    return [m for m in metas if m.path.endswith(ENCRYPTED_SUFFIX)]


def mtime_seconds(mtime_us: int) -> int:
    return mtime_us // US_PER_SECOND
