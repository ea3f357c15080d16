"""End-to-end infection of a corpus directory."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric import rsa

from ..csprng import KEY_BLOCK_SIZE, Arch, EntropyStrategy, PrngFleet, fleet_init, split_key_block
from . import manifest as manifest_mod
from .corpus import ENCRYPTED_SUFFIX, LAB_DIR, US_PER_SECOND, traverse
from .crypto import DEFAULT_VERSION, OAEP_HASH_NAME, encrypt_file, private_key_pem
from .manifest import FileRecord, InfectionRecord
from .scheduler import CostModel, Schedule, run_schedule

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
RSA_KEY_NAME = "rsa_private.pem"


@dataclass(frozen=True)
class SimConfig:
    processors: int = 4
    stack_capacity: int = 16
    arch: Arch = Arch.X64
    tick_us: int = 1
    interleave_seed: int = 0
    clock_hz: int = 6_000_000_000
    key_schedule_cycles: int = 1400
    cycles_per_byte: int = 18
    # delay between seeding rand() and the first encryption
    start_delay_us: int = 250_000
    entropy_strategy: EntropyStrategy = EntropyStrategy.LOW_BYTE
    version: bytes = DEFAULT_VERSION

    def cost_model(self) -> CostModel:
        return CostModel(
            clock_hz=self.clock_hz,
            key_schedule_cycles=self.key_schedule_cycles,
            cycles_per_byte=self.cycles_per_byte,
            tick_us=self.tick_us,
        )


@dataclass
class SimulationResult:
    record: InfectionRecord
    fleet: PrngFleet
    schedule: Schedule
    skipped: list[tuple[str, str]] = field(default_factory=list)


def simulate(
    root: str | os.PathLike,
    time_seed: int,
    config: SimConfig = SimConfig(),
    rsa_key: rsa.RSAPrivateKey | None = None,
    write_manifest: bool = True,
) -> SimulationResult:
    """Encrypt every file under ``root`` in place and return the ground truth.

    Encrypted files keep their name plus ``.rhysida`` and carry the stamped mtime.
    """
    root = Path(root)
    if rsa_key is None:
        from .crypto import generate_rsa_key

        rsa_key = generate_rsa_key(seed=time_seed)
    public = rsa_key.public_key()
    walk = traverse(root)
    metas = walk.files
    start_us = time_seed * US_PER_SECOND + config.start_delay_us
    sched = run_schedule(
        [m.size for m in metas],
        config.processors,
        config.stack_capacity,
        config.interleave_seed,
        start_us,
        config.cost_model(),
    )
    fleet = fleet_init(time_seed, config.processors, config.arch, config.entropy_strategy)

    records: list[FileRecord] = []
    for thread_id, entries in sched.by_thread().items():
        prng = fleet.thread(thread_id)
        for entry in entries:
            meta = metas[entry.index]
            key, iv, oaep_k, oaep_iv = split_key_block(prng.read(KEY_BLOCK_SIZE))
            rec = FileRecord(meta.path, meta.size, thread_id, entry.key_index, key, iv, entry.mtime)
            try:
                _encrypt_one(root / meta.path, key, iv, public, (oaep_k, oaep_iv), entry.mtime, config.version)
            except OSError as exc:
                log.error("failed to encrypt %s: %s", meta.path, exc)
                rec.error = str(exc)
            records.append(rec)
    records.sort(key=lambda r: (r.thread_id, r.key_index))

    record = InfectionRecord(
        header={
            "time_seed": str(time_seed),
            "processors": str(config.processors),
            "arch": config.arch.value,
            "capacity": str(config.stack_capacity),
            "tick_us": str(config.tick_us),
            "interleave_seed": str(config.interleave_seed),
            "clock_hz": str(config.clock_hz),
            "key_schedule_cycles": str(config.key_schedule_cycles),
            "cycles_per_byte": str(config.cycles_per_byte),
            "start_us": str(start_us),
            "entropy_strategy": config.entropy_strategy.value,
            "footer_version": config.version.hex(),
            "oaep_hash": OAEP_HASH_NAME,
            "suffix": ENCRYPTED_SUFFIX,
            "rsa_key_file": RSA_KEY_NAME,
            "generators": str(config.processors + 1),
        },
        files=records,
        emitted={t: fleet.thread(t).total_bytes_emitted for t in range(1, config.processors + 1)},
    )
    if write_manifest:
        lab = root / LAB_DIR
        lab.mkdir(exist_ok=True)
        (lab / RSA_KEY_NAME).write_bytes(private_key_pem(rsa_key))
        manifest_mod.save(record, lab / MANIFEST_NAME)
    return SimulationResult(record, fleet, sched, walk.skipped)


def _encrypt_one(path: Path, key, iv, public, oaep, mtime_us: int, version: bytes) -> None:
    data = path.read_bytes()
    out = encrypt_file(data, key, iv, public, oaep, version)
    target = path.with_name(path.name + ENCRYPTED_SUFFIX)
    tmp = path.with_name(path.name + ENCRYPTED_SUFFIX + ".tmp")
    tmp.write_bytes(out)
    os.utime(tmp, ns=(mtime_us * 1000, mtime_us * 1000))
    tmp.replace(target)
    path.unlink()


def manifest_path(root: str | os.PathLike) -> Path:
    return Path(root) / LAB_DIR / MANIFEST_NAME
