"""Ground-truth manifest: a line-oriented text file.

Layout::

    # rhysida-lab manifest v1
    key=value                 (header, one per line, fixed order)
    ...
    [files]
    path<TAB>size<TAB>thread_id<TAB>key_index<TAB>key_hex<TAB>iv_hex<TAB>mtime_us

Paths are percent-encoded so tabs and newlines cannot break the format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import quote, unquote

from ..csprng import Arch

MAGIC_LINE = "# rhysida-lab manifest v1"

HEADER_FIELDS = (
    "time_seed",
    "processors",
    "arch",
    "capacity",
    "tick_us",
    "interleave_seed",
    "clock_hz",
    "key_schedule_cycles",
    "cycles_per_byte",
    "start_us",
    "entropy_strategy",
    "footer_version",
    "oaep_hash",
    "suffix",
    "rsa_key_file",
)


@dataclass
class FileRecord:
    path: str  # original, corpus-relative
    size: int
    thread_id: int
    key_index: int
    key: bytes
    iv: bytes
    mtime: int
    error: str | None = None


@dataclass
class InfectionRecord:
    header: dict[str, str]
    files: list[FileRecord] = field(default_factory=list)
    emitted: dict[int, int] = field(default_factory=dict)  # thread -> keystream bytes emitted

    @property
    def time_seed(self) -> int:
        return int(self.header["time_seed"])

    @property
    def processors(self) -> int:
        return int(self.header["processors"])

    @property
    def arch(self) -> Arch:
        return Arch.parse(self.header["arch"])

    def by_path(self) -> dict[str, FileRecord]:
        return {f.path: f for f in self.files}

    def by_thread(self) -> dict[int, list[FileRecord]]:
        out: dict[int, list[FileRecord]] = {}
        for rec in sorted(self.files, key=lambda r: (r.thread_id, r.key_index)):
            out.setdefault(rec.thread_id, []).append(rec)
        return out


def dumps(record: InfectionRecord) -> str:
    lines = [MAGIC_LINE]
    for key in HEADER_FIELDS:
        if key in record.header:
            lines.append(f"{key}={record.header[key]}")
    for key in sorted(k for k in record.header if k not in HEADER_FIELDS):
        lines.append(f"{key}={record.header[key]}")
    for t in sorted(record.emitted):
        lines.append(f"emitted.{t}={record.emitted[t]}")
    lines.append("[files]")
    for f in record.files:
        row = [quote(f.path, safe="/"), str(f.size), str(f.thread_id), str(f.key_index),
               f.key.hex(), f.iv.hex(), str(f.mtime)]
        if f.error:
            row.append(quote(f.error))
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def loads(text: str) -> InfectionRecord:
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC_LINE:
        raise ValueError("not a rhysida-lab manifest")
    header: dict[str, str] = {}
    emitted: dict[int, int] = {}
    files: list[FileRecord] = []
    in_files = False
    for line in lines[1:]:
        if not line:
            continue
        if line == "[files]":
            in_files = True
            continue
        if not in_files:
            key, _, value = line.partition("=")
            if key.startswith("emitted."):
                emitted[int(key.split(".", 1)[1])] = int(value)
            else:
                header[key] = value
            continue
        cols = line.split("\t")
        files.append(
            FileRecord(
                path=unquote(cols[0]),
                size=int(cols[1]),
                thread_id=int(cols[2]),
                key_index=int(cols[3]),
                key=bytes.fromhex(cols[4]),
                iv=bytes.fromhex(cols[5]),
                mtime=int(cols[6]),
                error=unquote(cols[7]) if len(cols) > 7 else None,
            )
        )
    return InfectionRecord(header, files, emitted)


def save(record: InfectionRecord, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(record))
    tmp.replace(path)


def load(path: str | Path) -> InfectionRecord:
    return loads(Path(path).read_text())
