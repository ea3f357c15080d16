"""Recover the rand() time seed by trial-decrypting each thread's first file.

The files encrypted first by every thread sit at the front of the mtime
order, so decrypting a handful of the earliest files with each thread's
first key tells a right seed from a wrong one. Seeds are scanned downward
from the earliest mtime, since the seed is taken before any file is
written.
"""

from __future__ import annotations

import logging
import math
import os
import sys
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .csprng import KEY_BLOCK_SIZE, Arch, EntropyStrategy, fleet_init, split_key_block
from .infection_sim.corpus import FileMeta, mtime_seconds
from .infection_sim.crypto import FOOTER_SIZE, ctr_xor, offset_plan
from .oracles import ValidityOracle, prefilter_arrays

log = logging.getLogger(__name__)

SEED_MAX = 0xFFFFFFFF
DEFAULT_SPAN = 86_400


@dataclass(frozen=True)
class SeedWindow:
    high: int
    span: int

    def __post_init__(self):
        if not 0 <= self.high <= SEED_MAX:
            raise ValueError("window high must be a 32-bit unsigned value")
        if self.span < 1:
            raise ValueError("window span must be positive")

    @property
    def low(self) -> int:
        return max(0, self.high - self.span + 1)

    @property
    def size(self) -> int:
        return self.high - self.low + 1

    def seeds(self):
        return range(self.high, self.low - 1, -1)

    @classmethod
    def full(cls) -> "SeedWindow":
        return cls(SEED_MAX, SEED_MAX + 1)

    @classmethod
    def below(cls, metas: Sequence[FileMeta], span: int = DEFAULT_SPAN) -> "SeedWindow":
        """Window ending at the earliest mtime, in whole seconds."""
        earliest = min(m.mtime for m in metas)
        return cls(min(SEED_MAX, mtime_seconds(earliest)), span)


@dataclass
class CandidateFileSet:
    files: list[FileMeta]
    n: int
    overlap: int


def select_candidates(metas: Sequence[FileMeta], processors: int) -> CandidateFileSet:
    """Earliest-mtime files guaranteed to include a first-key file.

    With fewer than P files sharing the earliest mtime the first P files
    suffice; otherwise take P*N with N the smallest integer such that
    P*N exceeds that overlap count.
    """
    if not metas:
        raise ValueError("no encrypted files to select from")
    if processors < 1:
        raise ValueError("processors must be >= 1")
    ordered = sorted(metas, key=lambda m: m.mtime)
    first = ordered[0].mtime
    overlap = sum(1 for m in ordered if m.mtime == first)
    n = 1 if overlap < processors else overlap // processors + 1
    return CandidateFileSet(ordered[: processors * n], n, overlap)


# ---------------------------------------------------------------------------


@dataclass
class CipherPrefix:
    meta: FileMeta
    body_size: int
    window: bytes  # ciphertext of the first plan window


def load_prefixes(
    root: str | os.PathLike, files: Sequence[FileMeta], diagnostics: list[str] | None = None
) -> list[CipherPrefix]:
    out = []
    for meta in files:
        path = Path(root) / meta.path
        try:
            size = path.stat().st_size
            if size < FOOTER_SIZE:
                raise ValueError(f"{size} bytes is smaller than the 0x40C footer")
            body = size - FOOTER_SIZE
            plan = offset_plan(body)
            n = plan.windows[0][1] if plan.offsets else 0
            with open(path, "rb") as fh:
                window = fh.read(n)
        except (OSError, ValueError) as exc:
            msg = f"{meta.path}: skipped ({exc})"
            log.warning(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            continue
        out.append(CipherPrefix(meta, body, window))
    return out


@dataclass(frozen=True)
class TrialHit:
    path: str
    thread_id: int
    evidence_bits: float


def trial_decrypt_firsts(
    seed: int,
    candidates: CandidateFileSet | Sequence[CipherPrefix],
    processors: int,
    arch: Arch,
    oracle: ValidityOracle,
    root: str | os.PathLike | None = None,
    strategy: EntropyStrategy = EntropyStrategy.LOW_BYTE,
    diagnostics: list[str] | None = None,
) -> list[TrialHit]:
    """Every (file, thread) pair whose first key decrypts the file's first window validly."""
    if isinstance(candidates, CandidateFileSet):
        if not candidates.files:
            raise ValueError("empty candidate set")
        if root is None:
            raise ValueError("root is required to read candidate files")
        prefixes = load_prefixes(root, candidates.files, diagnostics)
    else:
        prefixes = list(candidates)
        if not prefixes:
            raise ValueError("empty candidate set")
    fleet = fleet_init(seed, processors, arch, strategy)
    hits = []
    for t in range(1, processors + 1):
        key, iv, _, _ = split_key_block(fleet.thread(t).read(KEY_BLOCK_SIZE))
        for p in prefixes:
            plain = ctr_xor(p.window, key, iv)
            path = p.meta.original_path
            if oracle.check(path, plain):
                hits.append(TrialHit(p.meta.path, t, oracle.evidence_bits(path, plain)))
    return hits


# ---------------------------------------------------------------------------


@dataclass
class SearchResult:
    seed: int | None
    hits: list[TrialHit]
    seeds_tried: int
    elapsed: float
    window: SeedWindow
    candidates: list[str] = field(default_factory=list)
    weak_seeds: list[tuple[int, float]] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    required_bits: float = 0.0

    @property
    def found(self) -> bool:
        return self.seed is not None

    @property
    def throughput(self) -> float:
        return self.seeds_tried / self.elapsed if self.elapsed > 0 else float("inf")

    def summary(self) -> str:
        if self.found:
            return (
                f"seed {self.seed} found after {self.seeds_tried} trials "
                f"({self.throughput:,.0f} seeds/s); hits: "
                + ", ".join(f"{h.path}@thread{h.thread_id}" for h in self.hits)
            )
        return (
            f"exhausted window [{self.window.low}, {self.window.high}]: {self.seeds_tried} seeds tried in "
            f"{self.elapsed:.2f}s ({self.throughput:,.0f} seeds/s), no seed validated; "
            "the window may not contain the seed or the oracle cannot recognise these files"
        )


class _Scan:
    def __init__(self, prefixes, oracle, processors, arch, strategy):
        pre = [(p, oracle.prefilter(p.meta.original_path, len(p.window))) for p in prefixes]
        usable = [(p, f) for p, f in pre if f is not None]
        if not usable:
            raise ValueError(f"oracle '{oracle.mode}' cannot screen any candidate file")
        self.prefixes = [p for p, _ in usable]
        expected, mask, lengths, nblocks, entropy = prefilter_arrays([f for _, f in usable])
        ct = np.zeros_like(expected)
        for i, p in enumerate(self.prefixes):
            w = np.frombuffer(p.window[: expected.shape[1]], np.uint8)
            ct[i, : len(w)] = w
        self.ct, self.expected, self.mask, self.lengths, self.nblocks = ct, expected, mask, lengths, nblocks
        self.mode = kernels.MODE_ENTROPY if entropy else kernels.MODE_MASK
        self.threshold = float(getattr(oracle, "threshold", 0.0))
        self.processors = processors
        self.discard = arch.long_size
        self.entropy_mask = strategy.mask

    def block(self, high: int, count: int) -> list[int]:
        cap = 256
        while True:
            hs = np.empty(cap, np.int64)
            ht = np.empty(cap, np.int64)
            hf = np.empty(cap, np.int64)
            n = kernels.scan_seeds(
                high, count, self.processors, self.discard, self.entropy_mask,
                self.ct, self.expected, self.mask, self.lengths, self.nblocks,
                self.mode, self.threshold, hs, ht, hf,
            )
            if n >= 0:
                return sorted(set(hs[:n].tolist()), reverse=True)
            cap *= 16


def required_evidence(window: SeedWindow, processors: int, nfiles: int, margin: float = 16.0) -> float:
    """Bits a seed's hits must carry so a false positive across the scan stays below 2**-margin."""
    return max(32.0, math.ceil(math.log2(window.size * processors * max(nfiles, 1))) + margin)


def stderr_progress(status: dict) -> None:
    eta = "?" if status["eta"] is None else f"{status['eta']:.0f}s"
    print(
        f"search: {status['tried']}/{status['total']} seeds ({status['percent']:.1f}%) "
        f"{status['rate']:,.0f} seeds/s eta {eta}",
        file=sys.stderr,
        flush=True,
    )


def search(
    window: SeedWindow,
    metas: Sequence[FileMeta],
    processors: int,
    arch: Arch | str,
    oracle: ValidityOracle,
    root: str | os.PathLike,
    parallelism: int = 1,
    block_size: int = 16384,
    min_evidence_bits: float | None = None,
    strategy: EntropyStrategy | str = EntropyStrategy.LOW_BYTE,
    progress: Callable[[dict], None] | None = None,
    progress_interval: float = 2.0,
) -> SearchResult:
    """Scan ``window`` downward and return the highest seed whose hits carry enough evidence.

    The result does not depend on ``parallelism``: blocks are reduced in
    window order and the first confirmed seed wins.
    """
    arch = Arch.parse(arch)
    strategy = EntropyStrategy.parse(strategy)
    if window.size < 1:
        raise ValueError("empty seed window")
    diagnostics: list[str] = []
    cand = select_candidates(metas, processors)
    prefixes = load_prefixes(root, cand.files, diagnostics)
    if not prefixes:
        raise ValueError("no readable candidate files")
    scan = _Scan(prefixes, oracle, processors, arch, strategy)
    need = min_evidence_bits if min_evidence_bits is not None else required_evidence(
        window, processors, len(scan.prefixes)
    )
    result = SearchResult(
        None, [], 0, 0.0, window,
        candidates=[p.meta.path for p in prefixes], diagnostics=diagnostics, required_bits=need,
    )

    def confirm(seed: int) -> bool:
        hits = trial_decrypt_firsts(seed, prefixes, processors, arch, oracle, strategy=strategy)
        per_file: dict[str, float] = {}
        for h in hits:
            per_file[h.path] = max(per_file.get(h.path, 0.0), h.evidence_bits)
        bits = sum(per_file.values())
        if hits and bits >= need:
            result.seed = seed
            result.hits = hits
            return True
        if hits:
            result.weak_seeds.append((seed, bits))
        return False

    blocks = []
    high = window.high
    while high >= window.low:
        count = min(block_size, high - window.low + 1)
        blocks.append((high, count))
        high -= count

    start = time.perf_counter()
    last_report = start
    pool = ThreadPoolExecutor(max_workers=max(1, parallelism))
    pending: deque = deque()
    it = iter(blocks)
    try:
        for _ in range(2 * max(1, parallelism)):
            nxt = next(it, None)
            if nxt is None:
                break
            pending.append((nxt, pool.submit(scan.block, *nxt)))
        while pending:
            (bhigh, bcount), fut = pending.popleft()
            seeds = fut.result()
            for seed in seeds:
                if confirm(seed):
                    result.seeds_tried += bhigh - seed + 1
                    return result
            result.seeds_tried += bcount
            nxt = next(it, None)
            if nxt is not None:
                pending.append((nxt, pool.submit(scan.block, *nxt)))
            now = time.perf_counter()
            if progress is not None and now - last_report >= progress_interval:
                last_report = now
                rate = result.seeds_tried / (now - start)
                remaining = window.size - result.seeds_tried
                progress({
                    "tried": result.seeds_tried,
                    "total": window.size,
                    "percent": 100.0 * result.seeds_tried / window.size,
                    "rate": rate,
                    "eta": remaining / rate if rate > 0 else None,
                })
        return result
    finally:
        for _, fut in pending:
            fut.cancel()
        pool.shutdown(wait=True, cancel_futures=True)
        result.elapsed = time.perf_counter() - start
