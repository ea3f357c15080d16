"""Restore an encrypted corpus from a confirmed seed and an order hypothesis."""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .csprng import KEY_BLOCK_SIZE, Arch, EntropyStrategy, fleet_init, split_key_block
from .infection_sim.corpus import FileMeta
from .infection_sim.crypto import FOOTER_SIZE, EncryptedFooter, apply_plan, ctr_xor, first_window
from .oracles import ValidityOracle
from .order_reconstruct import Candidate, OrderHypothesis

log = logging.getLogger(__name__)

RECOVERED = "recovered"
AMBIGUOUS = "ambiguous"
FAILED = "failed"


class NotRhysidaFile(ValueError):
    pass


def strip_footer(data: bytes) -> tuple[bytes, EncryptedFooter]:
    if len(data) < FOOTER_SIZE:
        raise NotRhysidaFile(f"{len(data)} bytes is shorter than the 0x40C-byte footer")
    return data[: len(data) - FOOTER_SIZE], EncryptedFooter.from_bytes(data[-FOOTER_SIZE:])


def decrypt_file(body: bytes, key: bytes, iv: bytes) -> bytes:
    """Re-apply the intermittent CTR keystream; the plan comes from the body length."""
    if len(key) != 32 or len(iv) != 16:
        raise ValueError("need a 32-byte key and a 16-byte iv")
    return apply_plan(body, key, iv)


class KeystreamLedger:
    """Per-thread sequence of 80-byte draws regenerated from the seed."""

    def __init__(self, seed: int, processors: int, arch: Arch | str,
                 strategy: EntropyStrategy | str = EntropyStrategy.LOW_BYTE):
        self.seed = seed
        self.fleet = fleet_init(seed, processors, arch, strategy)
        self.blocks: dict[int, list[bytes]] = {t: [] for t in range(1, processors + 1)}

    def block(self, thread_id: int, key_index: int) -> bytes:
        if key_index < 1:
            raise IndexError("key indices start at 1")
        blocks = self.blocks[thread_id]
        prng = self.fleet.thread(thread_id)
        while len(blocks) < key_index:
            blocks.append(prng.read(KEY_BLOCK_SIZE))
        return blocks[key_index - 1]

    def key_iv(self, thread_id: int, key_index: int) -> tuple[bytes, bytes]:
        key, iv, _, _ = split_key_block(self.block(thread_id, key_index))
        return key, iv

    def materialize(self, counts: dict[int, int]) -> None:
        for t, n in counts.items():
            if n:
                self.block(t, n)

    def emitted(self, thread_id: int) -> int:
        return self.fleet.thread(thread_id).total_bytes_emitted


@dataclass
class FileStatus:
    path: str
    thread_id: int
    candidates: range
    status: str
    key_index: int | None = None
    output: str | None = None
    detail: str = ""

    def line(self) -> str:
        if self.key_index is not None:
            idx = str(self.key_index)
        else:
            r = self.candidates
            idx = "{" + ",".join(map(str, r)) + "}"
        return "\t".join([self.path, str(self.thread_id), idx, self.status, self.output or "-"]) + (
            f"\t# {self.detail}" if self.detail else ""
        )


@dataclass
class RecoveryReport:
    seed: int
    files: list[FileStatus] = field(default_factory=list)
    trial_decryptions: int = 0
    dry_run: bool = False

    def count(self, status: str) -> int:
        return sum(1 for f in self.files if f.status == status)

    @property
    def all_recovered(self) -> bool:
        return all(f.status == RECOVERED for f in self.files)

    def text(self) -> str:
        head = (
            f"# recovery seed={self.seed} recovered={self.count(RECOVERED)} "
            f"ambiguous={self.count(AMBIGUOUS)} failed={self.count(FAILED)} "
            f"trials={self.trial_decryptions}{' dry-run' if self.dry_run else ''}\n"
            "# path\tthread\tkey_index\tstatus\toutput\n"
        )
        return head + "".join(f.line() + "\n" for f in sorted(self.files, key=lambda f: f.path))


def _atomic_write(target: Path, data: bytes) -> None:
    tmp = target.with_name(target.name + ".recovering.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, target)


class _Recovery:
    def __init__(self, root, ledger, oracle, dry_run, keep_encrypted):
        self.root = Path(root)
        self.ledger = ledger
        self.oracle = oracle
        self.dry_run = dry_run
        self.keep_encrypted = keep_encrypted

    def _output_path(self, meta: FileMeta, suffix: str = "") -> Path:
        target = self.root / (meta.original_path + suffix)
        if target.exists() and target != self.root / meta.path:
            target = target.with_name(target.name + ".recovered")
        return target

    def _finish(self, meta: FileMeta, plaintext: bytes, verified: bool = True) -> str | None:
        """Write the plaintext; the encrypted file goes only once the oracle vouched for it."""
        if self.dry_run:
            return None
        target = self._output_path(meta)
        _atomic_write(target, plaintext)
        if verified and not self.keep_encrypted and target != self.root / meta.path:
            (self.root / meta.path).unlink()
        return str(target.relative_to(self.root))

    def thread(self, thread_id: int, files: list[Candidate]) -> tuple[list[FileStatus], int]:
        statuses: list[FileStatus] = []
        trials = 0
        groups: list[list[Candidate]] = []
        for c in files:
            if groups and groups[-1][0].candidates == c.candidates:
                groups[-1].append(c)
            else:
                groups.append([c])
        for group in groups:
            bodies = {}
            for c in group:
                try:
                    bodies[c.meta.path] = strip_footer((self.root / c.meta.path).read_bytes())[0]
                except (OSError, NotRhysidaFile) as exc:
                    bodies[c.meta.path] = exc
            if len(group) == 1:
                st, n = self._single(thread_id, group[0], bodies[group[0].meta.path])
                statuses.append(st)
            else:
                sts, n = self._group(thread_id, group, bodies)
                statuses.extend(sts)
            trials += n
        return statuses, trials

    def _single(self, t, c: Candidate, body) -> tuple[FileStatus, int]:
        k = c.candidates.start
        st = FileStatus(c.meta.path, t, c.candidates, FAILED, key_index=k)
        if isinstance(body, Exception):
            st.detail = str(body)
            return st, 0
        key, iv = self.ledger.key_iv(t, k)
        plain = decrypt_file(body, key, iv)
        verdict = self.oracle.check(c.meta.original_path, first_window(plain))
        if verdict is False:
            st.detail = "oracle rejected the decryption"
            return st, 1
        st.status = RECOVERED
        if verdict is None:
            st.detail = "unverified by oracle; encrypted file kept"
        st.output = self._finish(c.meta, plain, verified=verdict is True)
        return st, 1

    def _group(self, t, group: list[Candidate], bodies) -> tuple[list[FileStatus], int]:
        indices = list(group[0].candidates)
        statuses = {c.meta.path: FileStatus(c.meta.path, t, c.candidates, AMBIGUOUS) for c in group}
        broken = [c for c in group if isinstance(bodies[c.meta.path], Exception)]
        if broken:
            for c in group:
                statuses[c.meta.path].detail = "unreadable group member: " + ", ".join(b.meta.path for b in broken)
            return list(statuses.values()), 0

        # one window trial per (file, key index) pair; bijections reuse them
        trial: dict[tuple[int, int], tuple[bool | None, bytes]] = {}
        for fi, c in enumerate(group):
            body = bodies[c.meta.path]
            win = first_window(body)
            for k in indices:
                key, iv = self.ledger.key_iv(t, k)
                plain = ctr_xor(win, key, iv)
                trial[fi, k] = (self.oracle.check(c.meta.original_path, plain), plain)
        n_trials = len(trial)

        valid = [
            perm for perm in itertools.permutations(indices)
            if all(trial[fi, k][0] is not False for fi, k in enumerate(perm))
        ]
        if not valid:
            for st in statuses.values():
                st.detail = "no key assignment passes the oracle"
            return list(statuses.values()), n_trials

        for fi, c in enumerate(group):
            st = statuses[c.meta.path]
            options = {}
            for perm in valid:
                options.setdefault(trial[fi, perm[fi]][1], perm[fi])
            if len(options) == 1:
                k = next(iter(options.values()))
                key, iv = self.ledger.key_iv(t, k)
                verified = all(trial[fi, perm[fi]][0] is True for perm in valid)
                st.status = RECOVERED
                st.key_index = k
                if not verified:
                    st.detail = "unverified by oracle; encrypted file kept"
                st.output = self._finish(c.meta, decrypt_file(bodies[c.meta.path], key, iv), verified)
            else:
                st.detail = f"{len(options)} plausible plaintexts (keys {sorted(options.values())})"
                if not self.dry_run:
                    outs = []
                    for k in sorted(options.values()):
                        key, iv = self.ledger.key_iv(t, k)
                        target = self._output_path(c.meta, f".candidate-k{k}")
                        _atomic_write(target, decrypt_file(bodies[c.meta.path], key, iv))
                        outs.append(str(target.relative_to(self.root)))
                    st.output = ",".join(outs)
        return list(statuses.values()), n_trials


def decrypt_corpus(
    seed: int,
    metas: Sequence[FileMeta],
    processors: int,
    arch: Arch | str,
    order: OrderHypothesis,
    oracle: ValidityOracle,
    root: str | os.PathLike,
    dry_run: bool = False,
    keep_encrypted: bool = False,
    jobs: int = 1,
    strategy: EntropyStrategy | str = EntropyStrategy.LOW_BYTE,
) -> RecoveryReport:
    """Decrypt every file in ``order``; ambiguous mtime groups are resolved by trying all pairings."""
    if order.processors != processors:
        raise ValueError("order hypothesis was built for a different processor count")
    known = {m.path for m in metas}
    ledger = KeystreamLedger(seed, processors, arch, strategy)
    # keystream is sequential per thread; build it up front, then share read-only
    ledger.materialize({t: len(th.files) for t, th in order.threads.items()})
    rec = _Recovery(root, ledger, oracle, dry_run, keep_encrypted)
    report = RecoveryReport(seed, dry_run=dry_run)
    work = [(t, [c for c in th.files if c.meta.path in known]) for t, th in sorted(order.threads.items())]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for statuses, trials in pool.map(lambda a: rec.thread(*a), work):
            report.files.extend(statuses)
            report.trial_decryptions += trials
    return report
