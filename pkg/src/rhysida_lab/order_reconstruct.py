"""Rebuild per-thread encryption order from metadata alone.

Files are dealt round-robin to threads in traversal order, so each
thread's file list is known exactly. Within a thread, sorting by mtime
recovers the encryption order except inside groups of equal mtime, where
every member may carry any of the group's key indices.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .infection_sim.corpus import FileMeta

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    meta: FileMeta
    candidates: range  # 1-based key indices

    @property
    def is_exact(self) -> bool:
        return len(self.candidates) == 1


@dataclass
class ThreadHypothesis:
    thread_id: int
    files: list[Candidate]

    @property
    def groups(self) -> list[list[Candidate]]:
        """Maximal equal-mtime runs, in sorted order."""
        out: list[list[Candidate]] = []
        for c in self.files:
            if out and out[-1][0].candidates == c.candidates:
                out[-1].append(c)
            else:
                out.append([c])
        return out


@dataclass
class OrderHypothesis:
    processors: int
    threads: dict[int, ThreadHypothesis]
    warnings: list[str] = field(default_factory=list)

    def candidate_map(self) -> dict[str, tuple[int, range]]:
        return {c.meta.path: (t, c.candidates) for t, th in self.threads.items() for c in th.files}

    def collision_histogram(self) -> dict[int, int]:
        hist: Counter[int] = Counter()
        for th in self.threads.values():
            for g in th.groups:
                if len(g) > 1:
                    hist[len(g)] += 1
        return dict(sorted(hist.items()))

    def report(self) -> str:
        lines = [f"# order hypothesis processors={self.processors}"]
        for t in sorted(self.threads):
            th = self.threads[t]
            lines.append(f"[thread {t}] files={len(th.files)}")
            for c in th.files:
                r = c.candidates
                span = str(r.start) if len(r) == 1 else f"{r.start}-{r.stop - 1}"
                lines.append(f"{c.meta.mtime}\t{span}\t{c.meta.path}")
        for w in self.warnings:
            lines.append(f"# warning: {w}")
        return "\n".join(lines) + "\n"


def replay_assignment(metas: Sequence[FileMeta], processors: int) -> dict[int, list[FileMeta]]:
    """Per-thread push lists: thread ``(j mod P) + 1`` receives the j-th file."""
    if processors < 1:
        raise ValueError("processors must be >= 1")
    out: dict[int, list[FileMeta]] = {t: [] for t in range(1, processors + 1)}
    for j, meta in enumerate(metas):
        out[(j % processors) + 1].append(meta)
    return out


def infer_order(thread_list: Sequence[FileMeta]) -> list[Candidate]:
    """Sort by mtime (stable on push order) and give each equal-mtime run its rank range."""
    ordered = sorted(thread_list, key=lambda m: m.mtime)
    out: list[Candidate] = []
    i = 0
    while i < len(ordered):
        j = i
        while j + 1 < len(ordered) and ordered[j + 1].mtime == ordered[i].mtime:
            j += 1
        ranks = range(i + 1, j + 2)
        out.extend(Candidate(m, ranks) for m in ordered[i : j + 1])
        i = j + 1
    return out


@dataclass(frozen=True)
class CollisionCapacity:
    budget_cycles: Fraction
    max_files: int
    size_bound_per_k: dict[int, int]


def collision_capacity(
    clock_hz: float,
    key_schedule_cycles: float,
    cycles_per_byte: float,
    tick_seconds: float,
) -> CollisionCapacity:
    """How many files, and how many combined bytes, fit into one mtime tick."""
    if min(clock_hz, key_schedule_cycles, cycles_per_byte, tick_seconds) <= 0:
        raise ValueError("all parameters must be positive")
    exact = lambda v: Fraction(str(v)) if isinstance(v, float) else Fraction(v)  # noqa: E731
    budget = exact(clock_hz) * exact(tick_seconds)
    ks = exact(key_schedule_cycles)
    cpb = exact(cycles_per_byte)
    max_files = int(budget // ks)
    bounds = {k: int((budget - k * ks) // cpb) for k in range(1, max_files + 1)}
    return CollisionCapacity(budget, max_files, bounds)


def build_hypothesis(
    metas: Sequence[FileMeta],
    processors: int,
    capacity: CollisionCapacity | None = None,
) -> OrderHypothesis:
    """replay_assignment + infer_order for every thread, with advisory warnings."""
    threads = {
        t: ThreadHypothesis(t, infer_order(lst)) for t, lst in replay_assignment(metas, processors).items()
    }
    hyp = OrderHypothesis(processors, threads)
    if capacity is not None:
        for t, th in threads.items():
            for g in th.groups:
                if len(g) < 2:
                    continue
                if len(g) > capacity.max_files:
                    hyp.warnings.append(
                        f"thread {t}: {len(g)} files share mtime {g[0].meta.mtime}, "
                        f"above the {capacity.max_files} a tick can hold; check clock settings"
                    )
    for w in hyp.warnings:
        log.warning(w)
    return hyp
