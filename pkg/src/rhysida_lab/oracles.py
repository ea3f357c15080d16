"""Validity oracles: decide whether a trial decryption looks right.

Every oracle answers ``check(path, window)`` with True, False or None
(cannot tell) for the decrypted first plan window of the file originally
at ``path``. ``prefilter`` exposes a cheap byte test for the compiled seed
scan; ``check`` confirms.
"""

from __future__ import annotations

import hashlib
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .infection_sim.corpus import traverse
from .infection_sim.crypto import first_window

PREFIX_MAX = 4096


@dataclass(frozen=True)
class Prefilter:
    """Plaintext expectations over the first ``length`` bytes of the window."""

    length: int
    expected: bytes = b""
    mask: bytes = b""
    entropy: bool = False


class ValidityOracle:
    mode = "abstract"

    def check(self, path: str, window: bytes) -> bool | None:
        raise NotImplementedError

    def prefilter(self, path: str, window_size: int) -> Prefilter | None:
        raise NotImplementedError

    def evidence_bits(self, path: str, window: bytes) -> float:
        """Rough log2 of how unlikely a wrong key passes ``check`` on this file."""
        raise NotImplementedError


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnownSample:
    head: bytes  # first 16 bytes of the plaintext window
    window_sha256: bytes
    window_size: int


class KnownPlaintextOracle(ValidityOracle):
    """Compares against digests of the original first windows."""

    mode = "known"
    HEAD = 16

    def __init__(self, samples: Mapping[str, KnownSample]):
        self.samples = dict(samples)

    @classmethod
    def from_plaintexts(cls, plaintexts: Mapping[str, bytes]) -> "KnownPlaintextOracle":
        samples = {}
        for path, data in plaintexts.items():
            win = first_window(data)
            samples[path] = KnownSample(win[: cls.HEAD], hashlib.sha256(win).digest(), len(win))
        return cls(samples)

    @classmethod
    def from_directory(cls, root: str | os.PathLike) -> "KnownPlaintextOracle":
        root = Path(root)
        return cls.from_plaintexts({m.path: (root / m.path).read_bytes() for m in traverse(root)})

    def check(self, path, window):
        s = self.samples.get(path)
        if s is None:
            return None
        return len(window) == s.window_size and hashlib.sha256(window).digest() == s.window_sha256

    def prefilter(self, path, window_size):
        s = self.samples.get(path)
        if s is None or not s.head:
            return None
        return Prefilter(len(s.head), s.head, b"\x01" * len(s.head))

    def evidence_bits(self, path, window):
        return min(8 * len(window), 256)


# ---------------------------------------------------------------------------


@dataclass
class MagicBytesOracle(ValidityOracle):
    """Checks file-type signatures keyed by extension."""

    table: dict[str, list[tuple[int, bytes]]] = field(default_factory=dict)
    mode = "magic"

    @classmethod
    def default(cls) -> "MagicBytesOracle":
        text = resources.files("rhysida_lab.data").joinpath("magic.txt").read_text()
        return cls(parse_magic_table(text))

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MagicBytesOracle":
        return cls(parse_magic_table(Path(path).read_text()))

    def _sigs(self, path: str) -> list[tuple[int, bytes]]:
        return self.table.get(_extension(path), [])

    def check(self, path, window):
        sigs = self._sigs(path)
        if not sigs:
            return None
        return any(window[off : off + len(sig)] == sig for off, sig in sigs)

    def prefilter(self, path, window_size):
        sigs = [(o, s) for o, s in self._sigs(path) if o + len(s) <= min(window_size, PREFIX_MAX)]
        if not sigs:
            return None
        length = max(o + len(s) for o, s in sigs)
        # only bytes on which every signature agrees can be tested without an OR
        columns: list[set[int | None]] = [set() for _ in range(length)]
        for o, s in sigs:
            for j in range(length):
                columns[j].add(s[j - o] if o <= j < o + len(s) else None)
        expected = bytearray(length)
        mask = bytearray(length)
        for j, col in enumerate(columns):
            if len(col) == 1 and None not in col:
                expected[j] = col.pop()
                mask[j] = 1
        if not any(mask):
            return None
        return Prefilter(length, bytes(expected), bytes(mask))

    def evidence_bits(self, path, window):
        matched = [len(s) for o, s in self._sigs(path) if window[o : o + len(s)] == s]
        return 8 * max(matched, default=0)


def _extension(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[-1].lower() if "." in name else ""


def parse_magic_table(text: str) -> dict[str, list[tuple[int, bytes]]]:
    """Parse ``extension offset hexbytes`` lines; ``#`` starts a comment."""
    table: dict[str, list[tuple[int, bytes]]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"magic table line {lineno}: expected 'ext offset hex'")
        ext, off, hexbytes = parts
        table.setdefault(ext.lower().lstrip("."), []).append((int(off, 0), bytes.fromhex(hexbytes)))
    return table


def format_magic_table(table: Mapping[str, list[tuple[int, bytes]]]) -> str:
    return "".join(f"{ext} {off} {sig.hex().upper()}\n" for ext, sigs in table.items() for off, sig in sigs)


# ---------------------------------------------------------------------------


def byte_entropy(data: bytes) -> float:
    if not data:
        return 0.0
    n = len(data)
    return -sum(c / n * math.log2(c / n) for c in Counter(data).values())


@dataclass
class EntropyOracle(ValidityOracle):
    """Plaintext is assumed to have lower byte entropy than ciphertext.

    Windows shorter than ``min_bytes`` are undecidable: on short samples
    even uniform noise has a low empirical entropy.
    """

    threshold: float = 7.2
    prefix: int = PREFIX_MAX
    min_bytes: int = 1024
    bits_per_hit: float = 64.0
    mode = "entropy"

    def check(self, path, window):
        if len(window) < self.min_bytes:
            return None
        return byte_entropy(window[: self.prefix]) < self.threshold

    def prefilter(self, path, window_size):
        if window_size < self.min_bytes:
            return None
        return Prefilter(min(window_size, self.prefix), entropy=True)

    def evidence_bits(self, path, window):
        return self.bits_per_hit


def make_oracle(mode: str, *, known_dir=None, magic_table=None, entropy_threshold: float = 7.2) -> ValidityOracle:
    if mode == "known":
        if known_dir is None:
            raise ValueError("known-plaintext oracle needs a directory of original files")
        return KnownPlaintextOracle.from_directory(known_dir)
    if mode == "magic":
        return MagicBytesOracle.from_file(magic_table) if magic_table else MagicBytesOracle.default()
    if mode == "entropy":
        return EntropyOracle(threshold=entropy_threshold)
    raise ValueError(f"unknown oracle mode {mode!r}")


def prefilter_arrays(prefilters: list[Prefilter]) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, bool]:
    """Pack prefilters into (expected, mask, lengths, nblocks, entropy_mode) for the kernel."""
    if not prefilters:
        raise ValueError("no prefilters")
    entropy = prefilters[0].entropy
    if any(p.entropy != entropy for p in prefilters):
        raise ValueError("cannot mix entropy and byte prefilters in one scan")
    width = max(p.length for p in prefilters)
    nblocks = (width + 15) // 16
    expected = np.zeros((len(prefilters), 16 * nblocks), dtype=np.uint8)
    mask = np.zeros_like(expected)
    lengths = np.zeros(len(prefilters), dtype=np.int64)
    for i, p in enumerate(prefilters):
        lengths[i] = p.length
        if p.expected:
            expected[i, : len(p.expected)] = np.frombuffer(p.expected, dtype=np.uint8)
            mask[i, : len(p.mask)] = np.frombuffer(p.mask, dtype=np.uint8)
    return expected, mask, lengths, nblocks, entropy
