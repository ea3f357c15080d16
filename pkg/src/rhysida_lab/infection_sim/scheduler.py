"""Deterministic discrete-event model of the main process and its
encryption threads.

The main process pushes the j-th traversed file onto the stack of thread
``(j mod P) + 1`` and blocks while that stack is full. Each thread pops
LIFO, spends ``key_schedule_cycles + cycles_per_byte * encrypted_bytes``
cycles on the file and stamps its mtime at completion. Pseudo-random push
and pop latencies drawn from ``interleave_seed`` stand in for OS
scheduling noise.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Sequence

from .crypto import offset_plan

US_PER_SECOND = 1_000_000


@dataclass(frozen=True)
class CostModel:
    clock_hz: int = 6_000_000_000
    key_schedule_cycles: int = 1400
    cycles_per_byte: int = 18
    tick_us: int = 1
    # main-process cost per pushed file, cycles
    push_cycles: tuple[int, int] = (2_000, 60_000)
    # thread latency between finishing one file and popping the next, cycles
    pop_cycles: tuple[int, int] = (0, 600)

    def file_cycles(self, size: int) -> int:
        return self.key_schedule_cycles + self.cycles_per_byte * offset_plan(size).encrypted_bytes


def assign(count: int, processors: int) -> list[int]:
    """Thread id receiving each of ``count`` traversed files."""
    if processors < 1:
        raise ValueError("processors must be >= 1")
    return [(j % processors) + 1 for j in range(count)]


@dataclass
class ScheduleEntry:
    index: int  # position in traversal order
    thread_id: int
    key_index: int
    completed_cycles: int
    mtime: int  # microseconds, quantized


@dataclass
class Schedule:
    entries: list[ScheduleEntry]
    events: list[tuple[str, int, int, int]] = field(default_factory=list)  # (kind, thread, file, cycles)

    def by_thread(self) -> dict[int, list[ScheduleEntry]]:
        out: dict[int, list[ScheduleEntry]] = {}
        for e in sorted(self.entries, key=lambda e: (e.thread_id, e.key_index)):
            out.setdefault(e.thread_id, []).append(e)
        return out


def run_schedule(
    sizes: Sequence[int],
    processors: int,
    capacity: int = 16,
    interleave_seed: int = 0,
    start_us: int = 0,
    cost: CostModel = CostModel(),
) -> Schedule:
    """Replay the push/pop race for files of the given sizes (traversal order)."""
    if processors < 1 or capacity < 1:
        raise ValueError("processors and capacity must be positive")
    rng = random.Random(interleave_seed)
    targets = assign(len(sizes), processors)
    stacks: dict[int, list[int]] = {t: [] for t in range(1, processors + 1)}
    idle = {t: False for t in stacks}
    done_count = {t: 0 for t in stacks}
    entries: list[ScheduleEntry | None] = [None] * len(sizes)
    events: list[tuple[str, int, int, int]] = []

    queue: list[tuple[int, int, str, int]] = []
    seq = 0

    def schedule(at: int, kind: str, actor: int) -> None:
        nonlocal seq
        heapq.heappush(queue, (at, seq, kind, actor))
        seq += 1

    next_file = 0
    blocked_on: int | None = None

    if sizes:
        schedule(rng.randint(*cost.push_cycles), "push", 0)
    for t in stacks:
        schedule(rng.randint(*cost.pop_cycles), "ready", t)

    while queue:
        now, _, kind, actor = heapq.heappop(queue)
        if kind == "push":
            t = targets[next_file]
            if len(stacks[t]) >= capacity:
                blocked_on = t
                continue
            stacks[t].append(next_file)
            events.append(("push", t, next_file, now))
            next_file += 1
            if idle[t]:
                idle[t] = False
                schedule(now + rng.randint(*cost.pop_cycles), "ready", t)
            if next_file < len(sizes):
                schedule(now + rng.randint(*cost.push_cycles), "push", 0)
        else:
            t = actor
            if not stacks[t]:
                idle[t] = True
                continue
            f = stacks[t].pop()
            events.append(("pop", t, f, now))
            done_count[t] += 1
            finish = now + cost.file_cycles(sizes[f])
            entries[f] = ScheduleEntry(f, t, done_count[t], finish, _stamp(start_us, finish, cost))
            if blocked_on == t:
                blocked_on = None
                schedule(now, "push", 0)
            schedule(finish + rng.randint(*cost.pop_cycles), "ready", t)

    assert all(e is not None for e in entries)
    return Schedule(entries, events)  # type: ignore[arg-type]


def _stamp(start_us: int, cycles: int, cost: CostModel) -> int:
    us = start_us + cycles * US_PER_SECOND // cost.clock_hz
    return us - us % cost.tick_us
